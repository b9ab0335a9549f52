"""Acceptance gate: one timed criterion per test, one printed verdict line each.

Every criterion re-derives its expectations from an independent oracle or a
frozen golden value; tolerances are pinned in the assertions.
"""

import itertools
import math
import time
from collections import deque
from pathlib import Path

import numpy as np
import pytest

from xpchat import analytics as A
from xpchat import explainers as X
from xpchat import protocol as P
from xpchat import session as S
from xpchat.data import NumericFeature, make_loan_dataset
from xpchat.iff import FollowupKind, Intent, parse_iff, validate_iff
from xpchat.session import QUESTIONNAIRE_ITEM_IDS, InteractionEvent, SessionRecord
from xpchat.simulate import FakeClock, simulate_cohort

CONFIG = Path(__file__).parent.parent / "src" / "xpchat" / "configs" / "loan_approval.iff.json"

Q, E = P.AgentRole.QUESTIONER, P.AgentRole.EXPLAINER


def run_criterion(capsys, name, limit_s, fn):
    start = time.perf_counter()
    try:
        fn()
    except BaseException:
        with capsys.disabled():
            print(f"[FAIL] {name}")
        raise
    elapsed = time.perf_counter() - start
    verdict = "PASS" if elapsed <= limit_s else "FAIL"
    with capsys.disabled():
        print(f"[{verdict}] {name} ({elapsed:.2f}s, limit {limit_s:.0f}s)")
    assert elapsed <= limit_s, f"{name} took {elapsed:.2f}s (limit {limit_s}s)"


# -- criterion 1: typology configuration -------------------------------------


def test_criterion_typology(capsys):
    def check():
        graph = parse_iff(CONFIG.read_text())
        report = validate_iff(graph)
        assert report.ok and report.findings == ()
        assert len(graph.questions) == 6
        assert graph.intents() == {Intent.TRANSPARENCY, Intent.ACTIONABILITY,
                                   Intent.EFFECTIVENESS}

    run_criterion(capsys, "typology config parses and validates", 1.0, check)


# -- criterion 2: protocol conformance by exhaustive search -------------------


def _canonical_moves(view):
    moves = [P.BeginQuestion(), P.BeginExplanation(), P.BeginArgument(),
             P.EndExplanation(), P.EndArgument(), P.Challenge("probe")]
    moves += [P.Followup(k) for k in FollowupKind]
    moves += [P.Affirm(k) for k in FollowupKind]
    moves += [P.ReturnQuestion(q.id) for q in view.questions]
    moves += [P.Explain(n.id, artifact_ref="probe") for n in view.type_forest]
    return moves


def _bfs_conformance(graph, followups_enabled, depth):
    state = P.new_session(graph, "loan_applicant", followups_enabled)
    probes = _canonical_moves(state.view)
    seen = {state.conversation_key()}
    frontier = deque([(state, 0)])
    states = 0
    followup_phase_reached = False
    while frontier:
        state, d = frontier.popleft()
        states += 1
        if state.phase is P.Phase.IN_FOLLOWUP:
            followup_phase_reached = True
        legal = P.legal_moves(state)
        legal_sigs = {(a, m.signature()) for a, m in legal}
        # every advertised move must apply; every other canonical move must not
        for agent in (Q, E):
            for move in probes:
                if (agent, move.signature()) in legal_sigs:
                    nxt = P.apply_move(state, agent, move)
                    key = nxt.conversation_key()
                    if d + 1 <= depth and key not in seen:
                        seen.add(key)
                        frontier.append((nxt, d + 1))
                else:
                    try:
                        P.apply_move(state, agent, move)
                    except P.ProtocolError:
                        continue
                    raise AssertionError(
                        f"apply_move accepted {agent}:{P.move_label(move)} "
                        f"not advertised by legal_moves in {state.phase}")
    return states, followup_phase_reached


def test_criterion_protocol_conformance(capsys):
    def check():
        graph = parse_iff(CONFIG.read_text())
        states_b, followup_b = _bfs_conformance(graph, True, depth=12)
        assert states_b > 100
        assert followup_b  # version B does reach followup episodes
        _states_a, followup_a = _bfs_conformance(graph, False, depth=12)
        assert not followup_a  # InFollowup unreachable with followups disabled

    run_criterion(capsys, "protocol BFS to depth 12: legal_moves/apply_move agree",
                  30.0, check)


# -- criterion 3: scripted conversation replay --------------------------------


GOLDEN_TRANSCRIPT = [
    "Questioner begin_question @ExplanationTarget",
    "Questioner return_question:q_why_outcome @Transparency",
    "Explainer begin_explanation @Transparency",
    "Explainer explain:feature_attribution @Transparency",
    "Questioner followup:Complement @Transparency",
    "Explainer explain:text_annotation @Transparency",
    "Questioner affirm_complement @Transparency",
    "Questioner return_question:q_what_to_change @Actionability",
    "Explainer begin_explanation @Actionability",
    "Explainer explain:counterfactual @Actionability",
    "Questioner followup:Validation @Actionability",
    "Explainer explain:nearest_neighbour @Actionability",
    "Questioner affirm_validation @Actionability",
    "Questioner end_explanation @ExplanationTarget",
]


def _fmt_entry(agent, move, topic):
    where = topic.intent.value if isinstance(topic, P.IntentTopic) else "ExplanationTarget"
    return f"{agent.value} {P.move_label(move)} @{where}"


def test_criterion_scripted_replay(capsys):
    def check():
        graph = parse_iff(CONFIG.read_text())
        state = P.new_session(graph, "loan_applicant", True)
        script = [
            (Q, P.BeginQuestion()),
            (Q, P.ReturnQuestion("q_why_outcome")),
            (E, P.BeginExplanation()),
            (E, P.Explain("feature_attribution", artifact_ref="a1")),
            (Q, P.Followup(FollowupKind.COMPLEMENT)),
            (E, P.Explain("text_annotation", artifact_ref="a2")),
            (Q, P.Affirm(FollowupKind.COMPLEMENT)),
            (Q, P.ReturnQuestion("q_what_to_change")),
            (E, P.BeginExplanation()),
            (E, P.Explain("counterfactual", artifact_ref="a3")),
            (Q, P.Followup(FollowupKind.VALIDATION)),
            (E, P.Explain("nearest_neighbour", artifact_ref="a4")),
            (Q, P.Affirm(FollowupKind.VALIDATION)),
            (Q, P.EndExplanation()),
        ]
        for agent, move in script:
            state = P.apply_move(state, agent, move)
        transcript = [_fmt_entry(a, m, t) for a, m, t in P.transcript(state)]
        assert transcript == GOLDEN_TRANSCRIPT

        # the same conversation through the live session service, then a
        # bit-for-bit state reconstruction from its log
        clock = FakeClock()
        manager = S.SessionManager(graph, Path("/tmp") / f"acc_{time.time_ns()}",
                                   seed=3, clock=clock)
        sid = manager.start_session("golden", assignment="B")[0]["payload"]["session_id"]
        for message in (
            {"type": "choose_question", "payload": {"question_id": "q_why_outcome"}},
            {"type": "choose_question", "payload": {"question_id": "q_what_to_change"}},
            {"type": "choose_followup", "payload": {"kind": "Validation"}},
            {"type": "end_explanation", "payload": {}},
        ):
            clock.advance(5)
            manager.handle_client_message(sid, message)
        live = manager.dialogue_state(sid)
        events = S.load_events(manager.data_dir / f"{sid}.jsonl")
        rebuilt = S.replay_log(graph, "loan_applicant", "B", events, sid)
        assert rebuilt == live
        assert live.phase is P.Phase.ENDED
        logged = [f"{e.agent} {e.move['name']}" for e in events if not e.is_service]
        assert logged[:4] == ["Questioner begin_question", "Questioner return_question",
                              "Explainer begin_explanation", "Explainer explain"]

    run_criterion(capsys, "two-question conversation matches golden transcript and "
                  "log replay is exact", 5.0, check)


# -- criterion 4: explainer oracles -------------------------------------------


class _FnModel:
    def __init__(self, features, fn, threshold=0.5):
        self.features = features
        self._fn = fn
        self._threshold = threshold

    def score(self, instance):
        return float(self._fn(instance))

    def predict(self, instance):
        return int(self.score(instance) >= self._threshold)


def _shapley_permutation_oracle(model, instance, baseline):
    n = len(instance)
    totals = [0.0] * n
    for perm in itertools.permutations(range(n)):
        current = list(baseline)
        prev = model.score(tuple(current))
        for j in perm:
            current[j] = instance[j]
            score = model.score(tuple(current))
            totals[j] += score - prev
            prev = score
    return [t / math.factorial(n) for t in totals]


def test_criterion_explainer_oracles(capsys):
    def check():
        # exact Shapley == permutation average, <= 4 features, tol 1e-9
        rng = np.random.default_rng(0)
        for n in (2, 3, 4):
            feats = tuple(NumericFeature(name=f"f{i}", min=0, max=10) for i in range(n))
            model = _FnModel(feats, lambda x: 0.2 * sum(x) + 0.07 * x[0] * x[-1])
            for _ in range(5):
                inst = [float(v) for v in rng.uniform(0, 10, n)]
                base = [float(v) for v in rng.uniform(0, 10, n)]
                got = X.shapley_exact(model, inst, base)
                want = _shapley_permutation_oracle(model, inst, base)
                assert got == pytest.approx(want, abs=1e-9)

        # efficiency over 1000 random instances: exact 1e-6, sampled vs exact 0.05
        feats8 = tuple(NumericFeature(name=f"f{i}", min=0, max=10) for i in range(8))
        model8 = _FnModel(feats8, lambda x: math.tanh(0.1 * x[0] - 0.05 * x[3]
                                                      + 0.02 * x[1] * x[6]))
        baseline = [5.0] * 8
        base_score = model8.score(tuple(baseline))
        for i in range(1000):
            inst = [float(v) for v in rng.uniform(0, 10, 8)]
            phis = X.shapley_exact(model8, inst, baseline)
            assert abs(sum(phis) - (model8.score(tuple(inst)) - base_score)) < 1e-6
            if i < 20:
                sampled = X.shapley_sampled(model8, inst, baseline, 800, seed=i)
                assert sampled == pytest.approx(phis, abs=0.05)

        # counterfactual equals the exhaustive optimum on small grids
        feats2 = tuple(NumericFeature(name=f"g{i}", min=0, max=10) for i in range(2))
        for trial in range(20):
            w = rng.uniform(-1, 1, 2)
            model = _FnModel(feats2, lambda x, w=w: 1 / (1 + math.exp(
                -(w[0] * (x[0] - 5) + w[1] * (x[1] - 5)))))
            inst = [float(v) for v in rng.uniform(0, 10, 2)]
            target = 1 - model.predict(tuple(inst))
            cands = [X._candidate_values(s, v, 4) for s, v in zip(feats2, inst)]
            best = None
            for size in (1, 2):
                for subset in itertools.combinations(range(2), size):
                    for values in itertools.product(*(cands[j] for j in subset)):
                        trial_pt = list(inst)
                        for j, v in zip(subset, values):
                            trial_pt[j] = v
                        if model.predict(tuple(trial_pt)) == target:
                            cost = sum(abs(v - inst[j]) / 10.0
                                       for j, v in zip(subset, values))
                            key = (size, cost)
                            if best is None or key < best:
                                best = key
                if best is not None:
                    break
            if best is None:
                with pytest.raises(Exception):
                    X.counterfactual(model, inst, max_changes=2, grid_levels=4)
                continue
            artifact = X.counterfactual(model, inst, max_changes=2, grid_levels=4)
            changes = artifact.payload.changes
            cost = sum(abs(new - old) / 10.0 for _n, old, new in changes)
            assert (len(changes), pytest.approx(cost, abs=1e-9)) == (best[0], best[1])

        # kNN equals an independent brute-force sort on 500 rows
        data = make_loan_dataset(n_rows=500, seed=13)
        for idx in (0, 123, 499):
            inst = list(data.rows[idx])

            def dist(row):
                total = 0.0
                for va, vb, spec in zip(inst, row, data.features):
                    if isinstance(spec, NumericFeature):
                        total += abs(float(va) - float(vb)) / (spec.max - spec.min)
                    else:
                        total += 0.0 if va == vb else 1.0
                return total / len(data.features)

            order = sorted(range(500), key=lambda i: (dist(data.rows[i]), i))
            artifact = X.nearest_neighbours(data, inst, k=9)
            got = [row for row, _lbl, _d in artifact.payload.neighbours]
            assert got == [data.rows[i] for i in order[:9]]

    run_criterion(capsys, "explainer outputs match independent oracles", 60.0, check)


# -- criterion 5: analytics ----------------------------------------------------


def _ev(sid, seq, t_ms, name, intent=None, **move_fields):
    move = {"name": name, **move_fields}
    topic = ({"kind": "IntentTopic", "intent": intent, "question_id": "q"}
             if intent else {"kind": "ExplanationTarget"})
    return InteractionEvent(session_id=sid, seq=seq, wall_time_ms=t_ms, elapsed_ms=0,
                            agent="Questioner", move=move, topic=topic, artifact_ref=None)


def _record(sid, events, group="A", questionnaire=None):
    return SessionRecord(session_id=sid, participant_id=sid, group=group,
                         started_at_ms=0, events=events,
                         questionnaire=questionnaire, free_text=None)


def test_criterion_analytics(capsys):
    def check():
        # flag rules, boundaries inclusive on both sides
        def span(sid, minutes):
            return _record(sid, [_ev(sid, 0, 0, "service:target_presented"),
                                 _ev(sid, 1, int(minutes * 60000),
                                     "service:free_text_prompt")])

        flags = A.flag_sessions([span("a", 4.5), span("b", 4.5001), span("c", 59.999),
                                 span("d", 60.0)], estimated_minutes=15.0)
        assert [f.verdict for f in flags] == ["RejectTooFast", "Accept", "Accept",
                                              "RejectInactive"]

        # 25-vs-29 cohort: each item's level diffs sum to exactly 4
        def q_rec(sid, value, group):
            return _record(sid, [_ev(sid, 0, 0, "service:persona_selected")],
                           group=group,
                           questionnaire=[(i, value) for i in QUESTIONNAIRE_ITEM_IDS])

        diff = A.likert_diff([q_rec(f"a{i}", 1 + i % 5, "A") for i in range(25)],
                             [q_rec(f"b{i}", 1 + (i * 2) % 5, "B") for i in range(29)])
        for item in diff.item_ids:
            assert sum(diff.diff[item].values()) == 4

        # pathway fractions sum to 1 +- 1e-9
        rec = _record("p", [
            _ev("p", 0, 0, "service:target_presented"),
            _ev("p", 1, 60000, "return_question", intent="Transparency"),
            _ev("p", 2, 60000, "explain", intent="Transparency",
                type_id="feature_attribution"),
            _ev("p", 3, 180000, "end_explanation", intent="Transparency"),
            _ev("p", 4, 240000, "service:free_text_prompt"),
        ])
        segments = A.pathway(rec)
        assert abs(sum(s.fraction for s in segments) - 1.0) <= 1e-9

        # SVG output is byte-stable across reruns
        by_session = {"p": segments}
        assert A.render_pathways(by_session) == A.render_pathways(by_session)

    run_criterion(capsys, "analytics flags, likert diffs, pathway fractions, "
                  "stable SVG", 10.0, check)


# -- criterion 6: simulated cohort ---------------------------------------------


def test_criterion_simulated_cohort(capsys, tmp_path):
    def check():
        graph = parse_iff(CONFIG.read_text())
        records_a, records_b = simulate_cohort(graph, tmp_path / "cohort",
                                               n_per_group=50, seed=0)
        assert len(records_a) == len(records_b) == 50
        for a, b in zip(records_a, records_b):
            raw_a = A.pathway(a, merge_followups=False)
            assert sum(s.duration_ms for s in raw_a
                       if s.label.startswith("Followup")) == 0
            time_a = sum(s.duration_ms for s in A.pathway(a)
                         if s.label.startswith("Explanation"))
            time_b = sum(s.duration_ms for s in A.pathway(b)
                         if s.label.startswith("Explanation"))
            assert time_b >= time_a

    run_criterion(capsys, "50+50 simulated cohort: A has zero followup time, "
                  "B explanation time dominates pairwise", 60.0, check)
