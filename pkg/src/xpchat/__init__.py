"""Conversational explanation-experience engine.

Library layout:

- ``iff``        intent/question/explanation typology graphs and validation
- ``protocol``   dialogue protocol state machine with followup episodes
- ``bt``         behaviour-tree dialogue manager
- ``data``       tabular datasets and the synthetic loan corpus
- ``models``     reference classifiers being explained
- ``explainers`` attribution, counterfactual, neighbour, anchor, stats, NLG
- ``session``    conversation sessions, wire protocol, JSONL logs
- ``analytics``  log filtering, pathway segments, Likert diffs, rendering
"""

__version__ = "0.1.0"
