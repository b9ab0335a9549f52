"""Intent/question/explanation typology graphs.

A typology graph links user intents to concrete questions, each question to a
recommended explanation type, and further explanation types to the question
through followup edges (complement / replacement / validation).  Graphs are
parsed from ``*.iff.json`` documents, validated, and filtered per user group.
Parsed graphs are immutable and safe to share across sessions.
"""

from __future__ import annotations

import enum
import json
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .errors import DanglingReference, DuplicateId, SchemaError, UnknownQuestion, UnknownUserGroup
from .registry import TECHNIQUES

SCHEMA_VERSION = 1

_ID_RE = re.compile(r"^[a-z][a-z0-9_]*$")


class Intent(enum.Enum):
    EFFECTIVENESS = "Effectiveness"
    ACTIONABILITY = "Actionability"
    COMPLIANCE = "Compliance"
    TRANSPARENCY = "Transparency"
    DEBUGGING = "Debugging"


class QuestionTarget(enum.Enum):
    MODEL = "Model"
    DATA = "Data"
    OUTPUT = "Output"


class FollowupKind(enum.Enum):
    COMPLEMENT = "Complement"
    REPLACEMENT = "Replacement"
    VALIDATION = "Validation"


@dataclass(frozen=True)
class ExplanationTypeNode:
    id: str
    display_name: str
    parent: str | None = None
    technique_ids: tuple[str, ...] = ()


@dataclass(frozen=True)
class UserQuestion:
    id: str
    text: str
    intent: Intent
    target: QuestionTarget
    # Stored as a tuple so an over-specified document can be represented and
    # reported by validate_iff instead of being unrepresentable.
    recommended_ids: tuple[str, ...] = ()
    followups: tuple[tuple[str, FollowupKind], ...] = ()

    @property
    def recommended(self) -> str:
        return self.recommended_ids[0]


@dataclass(frozen=True)
class IffGraph:
    name: str
    questions: tuple[UserQuestion, ...]
    type_forest: tuple[ExplanationTypeNode, ...]
    persona_filters: Mapping[str, tuple[str, ...]] = field(default_factory=dict)

    def question(self, question_id: str) -> UserQuestion:
        for q in self.questions:
            if q.id == question_id:
                return q
        raise UnknownQuestion(question_id)

    def type_node(self, type_id: str) -> ExplanationTypeNode:
        for node in self.type_forest:
            if node.id == type_id:
                return node
        raise DanglingReference(type_id)

    def intents(self) -> set[Intent]:
        return {q.intent for q in self.questions}


class Severity(enum.Enum):
    ERROR = "Error"
    WARNING = "Warning"


@dataclass(frozen=True)
class Finding:
    severity: Severity
    code: str
    message: str
    location: str


@dataclass(frozen=True)
class ValidationReport:
    findings: tuple[Finding, ...]

    @property
    def ok(self) -> bool:
        return not any(f.severity is Severity.ERROR for f in self.findings)

    def errors(self) -> list[Finding]:
        return [f for f in self.findings if f.severity is Severity.ERROR]


# ---------------------------------------------------------------------------
# parsing


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise SchemaError(message)


def _check_id(value: object, where: str) -> str:
    _require(isinstance(value, str), f"{where}: identifier must be a string, got {value!r}")
    if not _ID_RE.match(value):
        raise SchemaError(f"{where}: {value!r} is not a lowercase snake-case identifier")
    return value


def parse_iff(document: str | Mapping) -> IffGraph:
    """Parse an ``*.iff.json`` document into a graph.

    All cross-references (parents, recommended types, followup targets,
    persona filter entries) are resolved eagerly; an unresolved reference
    raises DanglingReference rather than being dropped.
    """
    if isinstance(document, str):
        try:
            doc = json.loads(document)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"not valid JSON: {exc}") from exc
    else:
        doc = document
    _require(isinstance(doc, dict), "document root must be an object")
    _require(doc.get("schema_version") == SCHEMA_VERSION,
             f"schema_version must be {SCHEMA_VERSION}, got {doc.get('schema_version')!r}")
    name = doc.get("name")
    _require(isinstance(name, str) and bool(name), "header must carry a non-empty name")

    raw_types = doc.get("explanation_types")
    _require(isinstance(raw_types, list), "explanation_types must be an array")
    nodes: list[ExplanationTypeNode] = []
    seen_types: set[str] = set()
    for raw in raw_types:
        _require(isinstance(raw, dict), "explanation_types entries must be objects")
        tid = _check_id(raw.get("id"), "explanation_types")
        if tid in seen_types:
            raise DuplicateId(f"explanation type {tid!r} declared twice")
        seen_types.add(tid)
        parent = raw.get("parent")
        if parent is not None:
            parent = _check_id(parent, f"explanation_types[{tid}].parent")
        techniques = raw.get("techniques", [])
        _require(isinstance(techniques, list), f"explanation_types[{tid}].techniques must be an array")
        nodes.append(ExplanationTypeNode(
            id=tid,
            display_name=str(raw.get("display_name", tid)),
            parent=parent,
            technique_ids=tuple(_check_id(t, f"explanation_types[{tid}].techniques") for t in techniques),
        ))

    for node in nodes:
        if node.parent is not None and node.parent not in seen_types:
            raise DanglingReference(f"explanation type {node.id!r} has unknown parent {node.parent!r}")
        for tech in node.technique_ids:
            if tech not in TECHNIQUES:
                raise DanglingReference(f"explanation type {node.id!r} references unknown technique {tech!r}")

    raw_questions = doc.get("questions")
    _require(isinstance(raw_questions, list), "questions must be an array")
    questions: list[UserQuestion] = []
    seen_questions: set[str] = set()
    for raw in raw_questions:
        _require(isinstance(raw, dict), "questions entries must be objects")
        qid = _check_id(raw.get("id"), "questions")
        if qid in seen_questions:
            raise DuplicateId(f"question {qid!r} declared twice")
        seen_questions.add(qid)
        try:
            intent = Intent(raw.get("intent"))
        except ValueError:
            raise SchemaError(f"question {qid!r}: unknown intent {raw.get('intent')!r}")
        try:
            target = QuestionTarget(raw.get("target"))
        except ValueError:
            raise SchemaError(f"question {qid!r}: unknown target {raw.get('target')!r}")
        rec_raw = raw.get("recommended")
        rec_ids = rec_raw if isinstance(rec_raw, list) else [rec_raw]
        recommended = tuple(_check_id(r, f"question {qid} recommended") for r in rec_ids)
        followups: list[tuple[str, FollowupKind]] = []
        for edge in raw.get("followups", []):
            _require(isinstance(edge, (list, tuple)) and len(edge) == 2,
                     f"question {qid!r}: followup edges must be [type_id, kind] pairs")
            e2 = _check_id(edge[0], f"question {qid} followups")
            try:
                kind = FollowupKind(edge[1])
            except ValueError:
                raise SchemaError(f"question {qid!r}: unknown followup kind {edge[1]!r}")
            followups.append((e2, kind))
        for ref in recommended + tuple(e for e, _ in followups):
            if ref not in seen_types:
                raise DanglingReference(f"question {qid!r} references unknown explanation type {ref!r}")
        questions.append(UserQuestion(
            id=qid, text=str(raw.get("text", "")), intent=intent, target=target,
            recommended_ids=recommended, followups=tuple(followups),
        ))

    raw_filters = doc.get("persona_filters", {})
    _require(isinstance(raw_filters, dict), "persona_filters must be an object")
    persona_filters: dict[str, tuple[str, ...]] = {}
    for group, ids in raw_filters.items():
        _require(isinstance(ids, list), f"persona_filters[{group!r}] must be an array")
        for qid in ids:
            if qid not in seen_questions:
                raise DanglingReference(f"persona filter {group!r} references unknown question {qid!r}")
        persona_filters[group] = tuple(ids)

    return IffGraph(name=name, questions=tuple(questions), type_forest=tuple(nodes),
                    persona_filters=persona_filters)


def serialize_iff(graph: IffGraph) -> dict:
    """Inverse of parse_iff for valid graphs (field order is not significant)."""
    return {
        "schema_version": SCHEMA_VERSION,
        "name": graph.name,
        "explanation_types": [
            {"id": n.id, "display_name": n.display_name, "parent": n.parent,
             "techniques": list(n.technique_ids)}
            for n in graph.type_forest
        ],
        "questions": [
            {"id": q.id, "text": q.text, "intent": q.intent.value, "target": q.target.value,
             "recommended": q.recommended_ids[0] if len(q.recommended_ids) == 1 else list(q.recommended_ids),
             "followups": [[e2, kind.value] for e2, kind in q.followups]}
            for q in graph.questions
        ],
        "persona_filters": {g: list(ids) for g, ids in graph.persona_filters.items()},
    }


# ---------------------------------------------------------------------------
# validation


def validate_iff(graph: IffGraph) -> ValidationReport:
    """Collect every invariant violation; never raises.

    Finding order is deterministic: sorted by location, then code.
    """
    findings: list[Finding] = []

    def err(code: str, message: str, location: str) -> None:
        findings.append(Finding(Severity.ERROR, code, message, location))

    def warn(code: str, message: str, location: str) -> None:
        findings.append(Finding(Severity.WARNING, code, message, location))

    type_ids = {n.id for n in graph.type_forest}
    by_id: dict[str, ExplanationTypeNode] = {}
    for n in graph.type_forest:
        if n.id in by_id:
            err("DUPLICATE_ID", f"explanation type {n.id!r} declared twice", f"type:{n.id}")
        by_id[n.id] = n

    # parent links must form a forest
    for n in graph.type_forest:
        if n.parent is not None and n.parent not in type_ids:
            err("DANGLING_TYPE", f"parent {n.parent!r} not in forest", f"type:{n.id}")
        for tech in n.technique_ids:
            if tech not in TECHNIQUES:
                err("DANGLING_TECHNIQUE", f"unknown technique {tech!r}", f"type:{n.id}")
    for n in graph.type_forest:
        seen = {n.id}
        cur = n.parent
        while cur is not None and cur in by_id:
            if cur in seen:
                err("TYPE_CYCLE", f"parent chain of {n.id!r} revisits {cur!r}", f"type:{n.id}")
                break
            seen.add(cur)
            cur = by_id[cur].parent

    seen_q: set[str] = set()
    for q in graph.questions:
        loc = f"question:{q.id}"
        if q.id in seen_q:
            err("DUPLICATE_ID", f"question {q.id!r} declared twice", loc)
        seen_q.add(q.id)
        if len(q.recommended_ids) != 1:
            err("RECOMMENDED_NOT_UNIQUE",
                f"question must designate exactly one recommended type, got {len(q.recommended_ids)}", loc)
        for rid in q.recommended_ids:
            if rid not in type_ids:
                err("DANGLING_TYPE", f"recommended type {rid!r} not in forest", loc)
        seen_edges: set[tuple[str, FollowupKind]] = set()
        for e2, kind in q.followups:
            if e2 not in type_ids:
                err("DANGLING_TYPE", f"followup target {e2!r} not in forest", loc)
            if (e2, kind) in seen_edges:
                err("DUPLICATE_FOLLOWUP", f"duplicate followup edge ({e2}, {kind.value})", loc)
            seen_edges.add((e2, kind))

    if not graph.questions:
        warn("NO_QUESTIONS", "graph carries no questions", "graph")

    for group, ids in graph.persona_filters.items():
        loc = f"persona:{group}"
        if not ids:
            err("EMPTY_PERSONA", "persona filter selects no questions", loc)
        for qid in ids:
            if qid not in seen_q:
                err("DANGLING_QUESTION", f"filter references unknown question {qid!r}", loc)

    findings.sort(key=lambda f: (f.location, f.code))
    return ValidationReport(findings=tuple(findings))


# ---------------------------------------------------------------------------
# queries


def _ancestors(graph: IffGraph, type_id: str) -> Iterable[str]:
    by_id = {n.id: n for n in graph.type_forest}
    cur = by_id.get(type_id)
    guard = 0
    while cur is not None and cur.parent is not None and guard < len(by_id) + 1:
        yield cur.parent
        cur = by_id.get(cur.parent)
        guard += 1


def select_view(graph: IffGraph, user_group: str) -> IffGraph:
    """Restrict the graph to one user group's questions.

    The type forest is pruned to nodes reachable from the retained questions
    (recommended, followup targets, and their ancestors).
    """
    if user_group not in graph.persona_filters:
        raise UnknownUserGroup(user_group)
    keep_q = set(graph.persona_filters[user_group])
    questions = tuple(q for q in graph.questions if q.id in keep_q)
    reachable: set[str] = set()
    for q in questions:
        for tid in q.recommended_ids + tuple(e for e, _ in q.followups):
            reachable.add(tid)
            reachable.update(_ancestors(graph, tid))
    forest = tuple(n for n in graph.type_forest if n.id in reachable)
    return IffGraph(
        name=graph.name,
        questions=questions,
        type_forest=forest,
        persona_filters={user_group: tuple(q.id for q in questions)},
    )


def followups_of(graph: IffGraph, question_id: str,
                 already_seen: set[str] | frozenset[str] = frozenset()) -> list[tuple[str, FollowupKind]]:
    """Followup edges of a question, filtered against already-delivered types.

    An edge whose target was already delivered is dropped, except when the
    target equals the recommended type: repeating the recommended type with a
    different technique is a legal followup.
    Order is configuration order.
    """
    q = graph.question(question_id)
    out: list[tuple[str, FollowupKind]] = []
    for e2, kind in q.followups:
        if e2 in already_seen and e2 != q.recommended:
            continue
        out.append((e2, kind))
    return out
