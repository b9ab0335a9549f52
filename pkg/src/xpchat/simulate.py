"""Scripted-user cohort simulator.

Drives the session manager with deterministic synthetic participants on a
fake clock.  Each participant index yields one shared base script (questions
visited, reading times, ratings); the version-A run plays the base script as
is, the version-B run plays the same script with followup requests inserted.
This makes the two arms comparable session-by-session.
"""

from __future__ import annotations

import random
from pathlib import Path

from .iff import IffGraph, select_view
from .session import (QUESTIONNAIRE_ITEM_IDS, SessionManager, SessionRecord)


class FakeClock:
    """Monotonic stand-in for time.time(), advanced explicitly."""

    def __init__(self, start: float = 1_700_000_000.0):
        self.now = float(start)

    def __call__(self) -> float:
        return self.now

    def advance(self, seconds: float) -> None:
        if seconds < 0:
            raise ValueError("cannot move the clock backwards")
        self.now += seconds


def make_plan(rng: random.Random, graph: IffGraph, user_group: str) -> list[dict]:
    """One participant's full script, including followup steps.

    Dwell times are seconds spent before sending the step's message.  The
    version-A variant of the plan is the same list with the choose_followup
    steps removed (see :func:`plan_for_group`).
    """
    view = select_view(graph, user_group)
    qids = [q.id for q in view.questions]
    n_questions = rng.randint(2, min(3, len(qids)))
    chosen = rng.sample(qids, n_questions)
    steps: list[dict] = []
    for qid in chosen:
        steps.append({"type": "choose_question", "question_id": qid,
                      "dwell": rng.uniform(60.0, 180.0)})
        for _ in range(rng.randint(0, 2)):
            steps.append({"type": "choose_followup", "dwell": rng.uniform(30.0, 90.0)})
    steps.append({"type": "end_explanation", "dwell": rng.uniform(5.0, 15.0)})
    # response material for the evaluation phase
    steps.append({"type": "_responses",
                  "ratings": {item: rng.randint(1, 5) for item in QUESTIONNAIRE_ITEM_IDS},
                  "eval_rating": rng.randint(1, 5),
                  "eval_dwell": rng.uniform(8.0, 20.0),
                  "questionnaire_dwell": rng.uniform(45.0, 90.0),
                  "free_text_dwell": rng.uniform(180.0, 420.0)})
    return steps


def plan_for_group(plan: list[dict], group: str) -> list[dict]:
    if group == "B":
        return plan
    return [step for step in plan if step["type"] != "choose_followup"]


def run_scripted_session(manager: SessionManager, participant_id: str, group: str,
                         plan: list[dict], clock: FakeClock,
                         instance=None) -> SessionRecord:
    """Play one plan to completion and return the finalized record."""
    info, messages = manager.start_session(participant_id, assignment=group,
                                           instance=instance)
    session_id = info["payload"]["session_id"]
    inbox = list(messages)
    tail = plan[-1]
    assert tail["type"] == "_responses"

    def send(message: dict) -> None:
        inbox.extend(manager.handle_client_message(session_id, message))

    for step in plan[:-1]:
        if step["type"] == "choose_followup":
            options = _last_followup_options(inbox)
            if not options:
                continue  # everything on offer already consumed
            clock.advance(step["dwell"])
            send({"type": "choose_followup", "payload": {"kind": options[0]["kind"]}})
        else:
            clock.advance(step["dwell"])
            payload = {}
            if step["type"] == "choose_question":
                payload = {"question_id": step["question_id"]}
            send({"type": step["type"], "payload": payload})

    # evaluation phase: answer whatever the tree prompts for
    guard = 0
    while not manager._session(session_id).finalized:
        guard += 1
        if guard > 100:
            raise RuntimeError(f"session {session_id} did not finalize")
        prompt = inbox.pop(0) if inbox else None
        if prompt is None:
            raise RuntimeError(f"session {session_id} stalled awaiting prompts")
        if prompt["type"] == "eval_prompt":
            clock.advance(tail["eval_dwell"])
            send({"type": "questionnaire",
                  "payload": {"item_id": prompt["payload"]["item_id"],
                              "value": tail["eval_rating"]}})
        elif prompt["type"] == "questionnaire":
            clock.advance(tail["questionnaire_dwell"])
            send({"type": "questionnaire", "payload": {"responses": tail["ratings"]}})
        elif prompt["type"] == "free_text_prompt":
            clock.advance(tail["free_text_dwell"])
            send({"type": "free_text",
                  "payload": {"text": "scripted participant feedback " * 20}})
    return manager.session_record(session_id)


def _last_followup_options(inbox: list[dict]) -> list[dict]:
    for message in reversed(inbox):
        if message["type"] == "followup_menu":
            return message["payload"]["followups"]
        if message["type"] == "menu":
            return []
    return []


def simulate_cohort(graph: IffGraph, data_dir: str | Path, n_per_group: int = 50,
                    seed: int = 0) -> tuple[list[SessionRecord], list[SessionRecord]]:
    """Paired cohort: n participants per version sharing base scripts."""
    clock = FakeClock()
    manager = SessionManager(graph, data_dir, seed=seed, clock=clock)
    records_a: list[SessionRecord] = []
    records_b: list[SessionRecord] = []
    for i in range(n_per_group):
        plan = make_plan(random.Random(seed * 1_000_003 + i), graph, manager.user_group)
        idx = random.Random(seed * 7_000_003 + i).randrange(len(manager.dataset.rows))
        instance = list(manager.dataset.rows[idx])
        records_a.append(run_scripted_session(
            manager, f"sim_a_{i:03d}", "A", plan_for_group(plan, "A"), clock,
            instance=instance))
        records_b.append(run_scripted_session(
            manager, f"sim_b_{i:03d}", "B", plan_for_group(plan, "B"), clock,
            instance=instance))
    return records_a, records_b
