"""Typology graph parsing, validation, persona views and followup queries."""

import json
from pathlib import Path

import pytest

from xpchat import errors
from xpchat.iff import (FollowupKind, Intent, IffGraph, QuestionTarget, Severity,
                        UserQuestion, followups_of, parse_iff, select_view,
                        serialize_iff, validate_iff)

CONFIG_DIR = Path(__file__).parent.parent / "src" / "xpchat" / "configs"


@pytest.fixture(scope="module")
def loan_doc():
    return json.loads((CONFIG_DIR / "loan_approval.iff.json").read_text())


@pytest.fixture(scope="module")
def loan_graph(loan_doc):
    return parse_iff(loan_doc)


def test_parse_loan_config(loan_graph):
    assert len(loan_graph.questions) == 6
    assert loan_graph.intents() == {Intent.TRANSPARENCY, Intent.ACTIONABILITY,
                                    Intent.EFFECTIVENESS}
    q = loan_graph.question("q_why_outcome")
    assert q.intent is Intent.TRANSPARENCY
    assert q.target is QuestionTarget.OUTPUT
    assert q.recommended == "feature_attribution"


def test_parse_accepts_json_string(loan_doc):
    graph = parse_iff(json.dumps(loan_doc))
    assert graph.name == parse_iff(loan_doc).name


def test_round_trip(loan_graph):
    assert parse_iff(serialize_iff(loan_graph)) == loan_graph


def test_full_bank_config_parses_and_validates():
    graph = parse_iff((CONFIG_DIR / "full_bank.iff.json").read_text())
    assert validate_iff(graph).ok
    assert len(graph.intents()) == 5


def test_parse_rejects_malformed_json():
    with pytest.raises(errors.SchemaError):
        parse_iff("{not json")


def test_parse_rejects_wrong_schema_version(loan_doc):
    doc = dict(loan_doc, schema_version=99)
    with pytest.raises(errors.SchemaError):
        parse_iff(doc)


def test_parse_rejects_unknown_intent(loan_doc):
    doc = json.loads(json.dumps(loan_doc))
    doc["questions"][0]["intent"] = "Curiosity"
    with pytest.raises(errors.SchemaError):
        parse_iff(doc)


def test_parse_rejects_duplicate_question_id(loan_doc):
    doc = json.loads(json.dumps(loan_doc))
    doc["questions"].append(dict(doc["questions"][0]))
    with pytest.raises(errors.DuplicateId):
        parse_iff(doc)


def test_parse_rejects_dangling_recommended(loan_doc):
    doc = json.loads(json.dumps(loan_doc))
    doc["questions"][0]["recommended"] = "no_such_type"
    with pytest.raises(errors.DanglingReference):
        parse_iff(doc)


def test_parse_rejects_unknown_technique(loan_doc):
    doc = json.loads(json.dumps(loan_doc))
    doc["explanation_types"][0]["techniques"] = ["quantum_shap"]
    with pytest.raises(errors.DanglingReference):
        parse_iff(doc)


def test_validate_clean_graph(loan_graph):
    report = validate_iff(loan_graph)
    assert report.ok
    assert report.findings == ()


def _graph_with(loan_graph, **overrides) -> IffGraph:
    from dataclasses import replace
    return replace(loan_graph, **overrides)


def test_validate_flags_non_unique_recommended(loan_graph):
    q0 = loan_graph.questions[0]
    from dataclasses import replace
    bad = replace(q0, recommended_ids=q0.recommended_ids + ("counterfactual",))
    report = validate_iff(_graph_with(loan_graph,
                                      questions=(bad,) + loan_graph.questions[1:]))
    assert not report.ok
    assert [f.code for f in report.errors()] == ["RECOMMENDED_NOT_UNIQUE"]


def test_validate_flags_duplicate_followup(loan_graph):
    from dataclasses import replace
    q0 = loan_graph.questions[0]
    bad = replace(q0, followups=q0.followups + (q0.followups[0],))
    report = validate_iff(_graph_with(loan_graph,
                                      questions=(bad,) + loan_graph.questions[1:]))
    assert "DUPLICATE_FOLLOWUP" in [f.code for f in report.errors()]


def test_validate_flags_type_cycle(loan_graph):
    from dataclasses import replace
    forest = list(loan_graph.type_forest)
    # point the two roots at each other
    roots = [i for i, n in enumerate(forest) if n.parent is None][:2]
    forest[roots[0]] = replace(forest[roots[0]], parent=forest[roots[1]].id)
    forest[roots[1]] = replace(forest[roots[1]], parent=forest[roots[0]].id)
    report = validate_iff(_graph_with(loan_graph, type_forest=tuple(forest)))
    assert "TYPE_CYCLE" in [f.code for f in report.errors()]


def test_validate_warns_on_empty_graph():
    report = validate_iff(IffGraph(name="empty", questions=(), type_forest=()))
    assert report.ok  # warnings only
    assert [f.code for f in report.findings] == ["NO_QUESTIONS"]
    assert report.findings[0].severity is Severity.WARNING


def test_validate_flags_empty_persona(loan_graph):
    report = validate_iff(_graph_with(loan_graph, persona_filters={"ghost": ()}))
    assert "EMPTY_PERSONA" in [f.code for f in report.errors()]


def test_validate_findings_are_sorted(loan_graph):
    from dataclasses import replace
    q0 = loan_graph.questions[0]
    bad = replace(q0, recommended_ids=(), followups=q0.followups + (q0.followups[0],))
    report = validate_iff(_graph_with(
        loan_graph, questions=(bad,) + loan_graph.questions[1:],
        persona_filters={"ghost": (), "loan_applicant": loan_graph.persona_filters["loan_applicant"]}))
    keys = [(f.location, f.code) for f in report.findings]
    assert keys == sorted(keys)


def test_select_view_prunes_forest(loan_graph):
    view = select_view(loan_graph, "loan_applicant")
    assert {q.id for q in view.questions} == {q.id for q in loan_graph.questions}
    referenced = set()
    for q in view.questions:
        referenced.update(q.recommended_ids)
        referenced.update(e for e, _k in q.followups)
    for node in view.type_forest:
        assert node.id in referenced or any(
            node.id == other.parent for other in view.type_forest)


def test_select_view_unknown_group(loan_graph):
    with pytest.raises(errors.UnknownUserGroup):
        select_view(loan_graph, "astronaut")


def test_followups_in_config_order(loan_graph):
    edges = followups_of(loan_graph, "q_why_outcome")
    assert edges == [("text_annotation", FollowupKind.COMPLEMENT),
                     ("feature_attribution", FollowupKind.VALIDATION)]


def test_followups_drop_already_seen_targets(loan_graph):
    edges = followups_of(loan_graph, "q_what_to_change", {"nearest_neighbour"})
    assert edges == [("text_annotation", FollowupKind.COMPLEMENT)]


def test_followup_to_recommended_type_survives_delivery(loan_graph):
    # repeating E1 as E2 with a different technique stays legal even after
    # the recommended type was delivered
    edges = followups_of(loan_graph, "q_why_outcome", {"feature_attribution"})
    assert ("feature_attribution", FollowupKind.VALIDATION) in edges


def test_unknown_question_raises(loan_graph):
    with pytest.raises(errors.UnknownQuestion):
        followups_of(loan_graph, "q_nope")
