"""Log analytics: time flags, pathways, coverage, Likert diffs, rendering."""

import json

import pytest

from xpchat import analytics as A
from xpchat import errors
from xpchat.session import QUESTIONNAIRE_ITEM_IDS, InteractionEvent, SessionRecord

MIN_MS = 60000


def ev(sid, seq, t_ms, name, agent="Questioner", intent=None, **move_fields):
    move = {"name": name, **move_fields}
    if intent is not None:
        topic = {"kind": "IntentTopic", "intent": intent, "question_id": "q"}
    else:
        topic = {"kind": "ExplanationTarget"}
    return InteractionEvent(session_id=sid, seq=seq, wall_time_ms=t_ms, elapsed_ms=0,
                            agent=agent, move=move, topic=topic, artifact_ref=None)


def record(sid, events, group="A", questionnaire=None):
    return SessionRecord(session_id=sid, participant_id=f"p_{sid}", group=group,
                         started_at_ms=events[0].wall_time_ms if events else 0,
                         events=events, questionnaire=questionnaire, free_text=None)


def span_record(sid, minutes, tail_minutes=0.0):
    """Two-event record spanning `minutes` up to the free-text prompt."""
    events = [ev(sid, 0, 0, "service:target_presented", agent="Explainer"),
              ev(sid, 1, int(minutes * MIN_MS), "service:free_text_prompt",
                 agent="Explainer")]
    if tail_minutes:
        events.append(ev(sid, 2, int((minutes + tail_minutes) * MIN_MS),
                         "service:evaluation_response"))
    return record(sid, events)


# -- time flags --------------------------------------------------------------


def test_flag_thresholds_and_boundaries():
    flags = A.flag_sessions([
        span_record("fast", 4.4),
        span_record("boundary_fast", 4.5),        # 0.3 x 15, inclusive
        span_record("just_over", 4.5 + 1e-4),
        span_record("typical", 18.2),
        span_record("slow_ok", 59.99),
        span_record("boundary_slow", 60.0),       # 4 x 15, inclusive
        span_record("inactive", 75.0),
    ], estimated_minutes=15.0)
    assert [f.verdict for f in flags] == [
        "RejectTooFast", "RejectTooFast", "Accept", "Accept", "Accept",
        "RejectInactive", "RejectInactive"]
    assert flags[3].total_minutes == pytest.approx(18.2)


def test_flag_excludes_free_text_time():
    flags = A.flag_sessions([span_record("s", 10.0, tail_minutes=120.0)],
                            estimated_minutes=15.0)
    assert flags[0].verdict == "Accept"
    assert flags[0].total_minutes == pytest.approx(10.0)


def test_flag_requires_positive_estimate():
    with pytest.raises(ValueError):
        A.flag_sessions([], estimated_minutes=0)


# -- pathways ----------------------------------------------------------------


def one_question_record(sid="s1"):
    return record(sid, [
        ev(sid, 0, 0, "service:target_presented", agent="Explainer"),
        ev(sid, 1, 60000, "return_question", intent="Transparency"),
        ev(sid, 2, 60000, "explain", agent="Explainer", intent="Transparency",
           type_id="feature_attribution"),
        ev(sid, 3, 180000, "end_explanation", intent="Transparency"),
        ev(sid, 4, 240000, "service:free_text_prompt", agent="Explainer"),
    ])


def test_pathway_fractions_quarters():
    segments = A.pathway(one_question_record())
    nonzero = [s for s in segments if s.duration_ms > 0]
    assert [s.label for s in nonzero] == ["Target", "Explanation:feature_attribution",
                                         "Evaluation"]
    assert [s.fraction for s in nonzero] == pytest.approx([0.25, 0.5, 0.25])
    assert sum(s.fraction for s in segments) == pytest.approx(1.0, abs=1e-9)
    assert [s.index for s in segments] == list(range(len(segments)))


def test_pathway_merges_followup_into_explanation():
    sid = "s2"
    rec = record(sid, [
        ev(sid, 0, 0, "explain", agent="Explainer", intent="Transparency",
           type_id="feature_attribution"),
        ev(sid, 1, 90000, "followup", kind="Validation", intent="Transparency"),
        ev(sid, 2, 90000, "explain", agent="Explainer", intent="Transparency",
           type_id="feature_attribution"),
        ev(sid, 3, 90000, "affirm", kind="Validation", intent="Transparency"),
        ev(sid, 4, 120000, "end_explanation", intent="Transparency"),
    ], group="B")
    merged = A.pathway(rec)
    explanation = [s for s in merged if s.label == "Explanation:feature_attribution"]
    assert len(explanation) == 1
    assert explanation[0].duration_ms == 120000
    # without merging the followup time is visible on its own
    raw = A.pathway(rec, merge_followups=False)
    followup_ms = sum(s.duration_ms for s in raw if s.label == "Followup:Validation")
    assert followup_ms == 30000


def test_pathway_empty_session():
    with pytest.raises(errors.EmptySession):
        A.pathway(record("empty", []))


def test_pathway_fraction_sums_always_one():
    for rec in (one_question_record("a"), one_question_record("b")):
        assert sum(s.fraction for s in A.pathway(rec)) == pytest.approx(1.0, abs=1e-9)


# -- intent coverage ---------------------------------------------------------


def intents_record(sid, intents):
    events = [ev(sid, i, i * 1000, "return_question", intent=intent)
              for i, intent in enumerate(intents)]
    return record(sid, events)


def test_intent_coverage_counts():
    per_intent, distribution = A.intent_coverage([
        intents_record("s1", ["Transparency", "Actionability"]),
        intents_record("s2", ["Transparency", "Effectiveness", "Actionability"]),
        intents_record("s3", ["Transparency", "Transparency"]),  # repeat counts once
    ])
    assert per_intent == {"Actionability": 2, "Effectiveness": 1, "Transparency": 3}
    assert distribution == {1: 1, 2: 1, 3: 1}
    assert list(per_intent) == sorted(per_intent)


def test_intent_coverage_empty():
    assert A.intent_coverage([]) == ({}, {})


# -- likert diffs ------------------------------------------------------------


def q_record(sid, value, group):
    return record(sid, [ev(sid, 0, 0, "service:persona_selected")], group=group,
                  questionnaire=[(item, value) for item in QUESTIONNAIRE_ITEM_IDS])


def test_likert_diff_simple():
    diff = A.likert_diff([q_record("a1", 5, "A"), q_record("a2", 5, "A")],
                         [q_record("b1", 5, "B")])
    assert diff.diff["es1"][5] == -1
    assert diff.counts_a["es1"][5] == 2


def test_likert_diff_identity_is_zero():
    records = [q_record(f"x{i}", 1 + i % 5, "A") for i in range(8)]
    diff = A.likert_diff(records, records)
    assert all(v == 0 for levels in diff.diff.values() for v in levels.values())


def test_likert_diff_25_vs_29_sums_to_four():
    group_a = [q_record(f"a{i}", 1 + i % 5, "A") for i in range(25)]
    group_b = [q_record(f"b{i}", 1 + (i * 3) % 5, "B") for i in range(29)]
    diff = A.likert_diff(group_a, group_b)
    for item in diff.item_ids:
        assert sum(diff.diff[item].values()) == 4


def test_likert_diff_rejects_bad_spec():
    bad = record("bad", [ev("bad", 0, 0, "service:persona_selected")],
                 questionnaire=[("es1", 3)])
    with pytest.raises(errors.SpecMismatch):
        A.likert_diff([bad], [q_record("b", 3, "B")])
    with pytest.raises(errors.SpecMismatch):
        A.likert_diff([record("none", [ev("none", 0, 0, "service:persona_selected")])],
                      [q_record("b", 3, "B")])


# -- export and render -------------------------------------------------------


def test_export_likert_csv_shape(tmp_path):
    diff = A.likert_diff([q_record("a", 2, "A")], [q_record("b", 4, "B")])
    out = tmp_path / "diff.csv"
    A.export(diff, "csv", out)
    lines = out.read_text().splitlines()
    assert len(lines) == 7  # header + 6 items
    assert lines[0] == "item,level_1,level_2,level_3,level_4,level_5"
    assert all(len(line.split(",")) == 6 for line in lines[1:])


def test_export_json_and_flags(tmp_path):
    flags = A.flag_sessions([span_record("s", 10.0)], estimated_minutes=15.0)
    out = tmp_path / "flags.json"
    A.export(flags, "json", out)
    doc = json.loads(out.read_text())
    assert doc[0]["verdict"] == "Accept"
    with pytest.raises(ValueError):
        A.export(flags, "xml", tmp_path / "flags.xml")


def test_export_pathway_csv(tmp_path):
    segments = A.pathway(one_question_record())
    out = tmp_path / "segments.csv"
    A.export(segments, "csv", out)
    lines = out.read_text().splitlines()
    assert lines[0] == "session_id,index,label,duration_ms,fraction"
    assert len(lines) == len(segments) + 1


def test_render_pathways_geometry_and_determinism():
    by_session = {"s1": A.pathway(one_question_record("s1")),
                  "s2": A.pathway(one_question_record("s2"))}
    svg = A.render_pathways(by_session)
    assert svg == A.render_pathways(by_session)  # byte-identical rerun
    assert svg.count("<svg") == 1
    # geometry: per-session rect widths sum to the bar width
    import re
    rects = re.findall(r'<rect x="([0-9.]+)" y="(\d+)" width="([0-9.]+)"', svg)
    rows = {}
    for _x, y, w in rects:
        rows.setdefault(y, 0.0)
        rows[y] += float(w)
    bar_rows = [total for total in rows.values() if total > 100]
    assert len(bar_rows) == 2
    for total in bar_rows:
        assert total == pytest.approx(800.0, abs=1.0)


def test_figures_written(tmp_path):
    by_session = {"s1": A.pathway(one_question_record("s1"))}
    A.figure_pathways(by_session, tmp_path / "p.png")
    assert (tmp_path / "p.png").stat().st_size > 0
    diff = A.likert_diff([q_record("a", 2, "A")], [q_record("b", 4, "B")])
    A.figure_likert(diff, tmp_path / "l.png")
    assert (tmp_path / "l.png").stat().st_size > 0
