"""Conversation sessions: wire protocol, append-only JSONL logs, questionnaires.

The manager owns many concurrent sessions.  Each session couples one protocol
state, one behaviour tree and one exclusive log appender; message handling is
serialized per session.  Events are written as they happen and are never
rewritten, so replaying a log through the protocol reconstructs the final
dialogue state exactly.
"""

from __future__ import annotations

import json
import secrets
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path

from . import bt, protocol as P
from .data import TabularDataset, make_loan_dataset
from .errors import (DuplicateActiveSession, IncompleteQuestionnaire, SchemaError,
                     UnknownSession)
from .explainers import ExplainContext
from .iff import IffGraph
from .models import Model, train_reference_model

PROTO_VERSION = "1"

# End-of-session rating items (5-step scale), adapted from the published
# explanation-satisfaction questionnaire.
QUESTIONNAIRE_ITEMS: tuple[tuple[str, str], ...] = (
    ("es1", "From the chatbot's explanations, I understand how the system decides on applications."),
    ("es2", "The explanations I received were satisfying."),
    ("es3", "The explanations had sufficient detail."),
    ("es4", "The explanations told me how trustworthy the system's decisions are."),
    ("es5", "The explanations told me how to act on the system's decision."),
    ("es6", "The explanations were useful to my goals."),
)
QUESTIONNAIRE_ITEM_IDS = tuple(item_id for item_id, _ in QUESTIONNAIRE_ITEMS)
LIKERT_SCALE = 5

CLIENT_MESSAGE_TYPES = {"start", "choose_question", "choose_followup", "end_explanation",
                        "begin_argument", "argue", "questionnaire", "free_text"}

# service-layer event markers (beyond protocol moves); they make persona,
# target and evaluation time measurable in the logs
SERVICE_EVENTS = {"persona_selected": "Questioner", "target_presented": "Explainer",
                  "evaluation_prompt": "Explainer", "evaluation_response": "Questioner",
                  "free_text_prompt": "Explainer"}


@dataclass(frozen=True)
class InteractionEvent:
    session_id: str
    seq: int
    wall_time_ms: int
    elapsed_ms: int
    agent: str
    move: dict            # protocol move doc, or {"name": "service:<marker>"}
    topic: dict
    artifact_ref: str | None = None

    def to_json(self) -> dict:
        return {"session_id": self.session_id, "seq": self.seq,
                "wall_time_ms": self.wall_time_ms, "elapsed_ms": self.elapsed_ms,
                "agent": self.agent, "move": self.move, "topic": self.topic,
                "artifact_ref": self.artifact_ref}

    @classmethod
    def from_json(cls, doc: dict) -> "InteractionEvent":
        return cls(session_id=doc["session_id"], seq=doc["seq"],
                   wall_time_ms=doc["wall_time_ms"], elapsed_ms=doc["elapsed_ms"],
                   agent=doc["agent"], move=doc["move"], topic=doc["topic"],
                   artifact_ref=doc.get("artifact_ref"))

    @property
    def is_service(self) -> bool:
        return self.move["name"].startswith("service:")


@dataclass
class SessionRecord:
    session_id: str
    participant_id: str
    group: str
    started_at_ms: int
    events: list[InteractionEvent]
    questionnaire: list[tuple[str, int]] | None = None
    free_text: str | None = None

    def to_json(self) -> dict:
        return {"session_id": self.session_id, "participant_id": self.participant_id,
                "group": self.group, "started_at_ms": self.started_at_ms,
                "questionnaire": self.questionnaire, "free_text": self.free_text}


@dataclass
class _Session:
    session_id: str
    participant_id: str
    group: str
    token: str
    state_lock: threading.Lock
    tree: bt.BtNode
    bb: bt.Blackboard
    started_at_ms: int
    log_path: Path
    events: list[InteractionEvent] = field(default_factory=list)
    logged_moves: int = 0
    last_wall_ms: int | None = None
    finalized: bool = False
    status: bt.BtStatus = bt.BtStatus.RUNNING


def validate_questionnaire(responses: dict) -> list[tuple[str, int]]:
    """Check coverage of all six items with values on the 5-step scale."""
    if not isinstance(responses, dict):
        raise SchemaError("questionnaire responses must be an object")
    for item_id, value in responses.items():
        if item_id not in QUESTIONNAIRE_ITEM_IDS:
            raise SchemaError(f"unknown questionnaire item {item_id!r}")
        if not isinstance(value, int) or not 1 <= value <= LIKERT_SCALE:
            raise SchemaError(f"response {value!r} for {item_id!r} outside 1..{LIKERT_SCALE}")
    missing = [i for i in QUESTIONNAIRE_ITEM_IDS if i not in responses]
    if missing:
        raise IncompleteQuestionnaire(f"missing responses for {missing}")
    return [(i, responses[i]) for i in QUESTIONNAIRE_ITEM_IDS]


class SessionManager:
    """Serves conversations and persists their logs under a data directory."""

    def __init__(self, graph: IffGraph, data_dir: str | Path,
                 user_group: str = "loan_applicant",
                 group_mode: str = "random", seed: int = 0,
                 estimated_minutes: float = 15.0,
                 dataset: TabularDataset | None = None,
                 model: Model | None = None,
                 clock=None):
        self.graph = graph
        self.user_group = user_group
        self.group_mode = group_mode
        self.estimated_minutes = estimated_minutes
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.dataset = dataset if dataset is not None else make_loan_dataset(seed=seed)
        self.model = model if model is not None else train_reference_model(self.dataset, seed=seed)
        self.clock = clock if clock is not None else time.time
        import numpy as np
        self._rng = np.random.default_rng(seed)
        self.seed = seed
        self._sessions: dict[str, _Session] = {}
        self._registry_lock = threading.Lock()

    # -- lifecycle ---------------------------------------------------------

    def _assign_group(self, assignment) -> str:
        if assignment in ("A", "B"):
            return assignment
        return "B" if self._rng.random() < 0.5 else "A"

    def start_session(self, participant_id: str, assignment: str = "random",
                      instance=None) -> tuple[dict, list[dict]]:
        """Create a session; returns (session info, bootstrap messages)."""
        if not participant_id:
            raise SchemaError("participant id must be non-empty")
        with self._registry_lock:
            for sess in self._sessions.values():
                if sess.participant_id == participant_id and not sess.finalized:
                    raise DuplicateActiveSession(participant_id)
            group = self._assign_group(assignment)
            session_id = uuid.uuid4().hex[:12]
            token = secrets.token_hex(16)
            followups = group == "B"
            state = P.new_session(self.graph, self.user_group, followups, session_id=session_id)
            tree = bt.build_tree(state.view)
            if instance is None:
                idx = int(self._rng.integers(0, len(self.dataset.rows)))
                instance = list(self.dataset.rows[idx])
            ctx = ExplainContext(model=self.model, data=self.dataset, instance=instance,
                                 seed=self.seed)
            bb = bt.Blackboard()
            bb["dialogue.state"] = state
            bb["explain.ctx"] = ctx
            bb["questionnaire.items"] = [{"id": i, "text": t, "scale": LIKERT_SCALE}
                                         for i, t in QUESTIONNAIRE_ITEMS]
            now_ms = int(self.clock() * 1000)
            sess = _Session(session_id=session_id, participant_id=participant_id,
                            group=group, token=token, state_lock=threading.Lock(),
                            tree=tree, bb=bb, started_at_ms=now_ms,
                            log_path=self.data_dir / f"{session_id}.jsonl")
            bb["hooks.event"] = lambda kind, s=sess: self._service_event(s, kind)
            self._sessions[session_id] = sess
            self._write_index()
        messages = self._tick(sess)
        info = {"type": "session_started",
                "payload": {"proto_version": PROTO_VERSION, "session_id": session_id,
                            "token": token, "group": group}}
        return info, messages

    def _session(self, session_id: str) -> _Session:
        try:
            return self._sessions[session_id]
        except KeyError:
            raise UnknownSession(session_id) from None

    # -- event logging -----------------------------------------------------

    def _append_event(self, sess: _Session, agent: str, move: dict, topic: dict,
                      artifact_ref: str | None = None) -> None:
        now_ms = int(self.clock() * 1000)
        elapsed = 0 if sess.last_wall_ms is None else max(0, now_ms - sess.last_wall_ms)
        sess.last_wall_ms = now_ms
        event = InteractionEvent(session_id=sess.session_id, seq=len(sess.events),
                                 wall_time_ms=now_ms, elapsed_ms=elapsed, agent=agent,
                                 move=move, topic=topic, artifact_ref=artifact_ref)
        sess.events.append(event)
        with sess.log_path.open("a") as fh:
            fh.write(json.dumps(event.to_json()) + "\n")

    def _service_event(self, sess: _Session, kind: str) -> None:
        # keep log order causal: protocol moves made earlier in this tick
        # must precede the service marker
        self._log_new_moves(sess)
        state: P.DialogueState = sess.bb["dialogue.state"]
        self._append_event(sess, SERVICE_EVENTS[kind], {"name": f"service:{kind}"},
                           P.topic_to_json(state.topic))

    def _log_new_moves(self, sess: _Session) -> None:
        state: P.DialogueState = sess.bb["dialogue.state"]
        for entry in state.history[sess.logged_moves:]:
            ref = entry.move.artifact_ref if isinstance(entry.move, P.Explain) else None
            self._append_event(sess, entry.agent.value, P.move_to_json(entry.move),
                               P.topic_to_json(entry.topic), artifact_ref=ref)
        sess.logged_moves = len(state.history)

    # -- message handling --------------------------------------------------

    def _tick(self, sess: _Session) -> list[dict]:
        sess.bb["out.messages"] = []
        try:
            sess.status = bt.tick(sess.tree, sess.bb)
        except P.ProtocolError as exc:
            sess.bb["input.pending"] = None
            # composites may have been abandoned mid-branch; restart from the
            # root (handlers are idempotent through blackboard flags)
            sess.tree.reset()
            self._log_new_moves(sess)
            expected = sorted(f"{a.value}:{P.move_label(m)}" for a, m in exc.expected)
            return [{"type": "protocol_error",
                     "payload": {"message": str(exc), "expected": expected}}]
        self._log_new_moves(sess)
        return list(sess.bb.get("out.messages", []))

    def handle_client_message(self, session_id: str, message: dict) -> list[dict]:
        """Translate one client choice into moves, ticks and server messages."""
        sess = self._session(session_id)
        self._validate_message(sess, message)
        with sess.state_lock:
            mtype = message["type"]
            payload = message.get("payload", {})
            if mtype == "questionnaire" and "responses" in payload:
                sess.bb["final.responses"] = validate_questionnaire(payload["responses"])
                messages = self._tick(sess)
            elif mtype == "free_text":
                sess.bb["final.free_text"] = str(payload.get("text", ""))
                messages = self._tick(sess)
            else:
                sess.bb["input.pending"] = message
                messages = self._tick(sess)
                # reject inputs nothing consumed (e.g. followup chosen in group A
                # outside a followup-capable state never reaches a handler)
                if sess.bb.get("input.pending") is not None:
                    sess.bb["input.pending"] = None
            if sess.status is bt.BtStatus.SUCCESS and not sess.finalized \
                    and sess.bb.get("final.responses") is not None:
                self._finalize(sess)
            return messages

    def _validate_message(self, sess: _Session, message) -> None:
        if not isinstance(message, dict) or "type" not in message:
            raise SchemaError("client message must be an object with a type")
        if message["type"] not in CLIENT_MESSAGE_TYPES:
            raise SchemaError(f"unknown client message type {message['type']!r}")
        payload = message.get("payload", {})
        if not isinstance(payload, dict):
            raise SchemaError("payload must be an object")
        token = message.get("token")
        if token is not None and token != sess.token:
            raise SchemaError("invalid session token")
        if message["type"] == "choose_question" and "question_id" not in payload:
            raise SchemaError("choose_question requires payload.question_id")
        if message["type"] == "choose_followup" and "kind" not in payload:
            raise SchemaError("choose_followup requires payload.kind")
        if message["type"] == "questionnaire":
            if "responses" not in payload and ("item_id" not in payload or "value" not in payload):
                raise SchemaError("questionnaire requires responses or item_id/value")
            if "item_id" in payload and "responses" not in payload:
                value = payload["value"]
                if not isinstance(value, int) or not 1 <= value <= LIKERT_SCALE:
                    raise SchemaError(f"rating {value!r} outside 1..{LIKERT_SCALE}")

    # -- finalization ------------------------------------------------------

    def finalize_session(self, session_id: str, responses: dict,
                         free_text: str = "") -> SessionRecord:
        """Persist the record once the conversation has ended."""
        sess = self._session(session_id)
        with sess.state_lock:
            state: P.DialogueState = sess.bb["dialogue.state"]
            if state.phase is not P.Phase.ENDED:
                raise SchemaError("conversation has not ended")
            sess.bb["final.responses"] = validate_questionnaire(responses)
            sess.bb["final.free_text"] = str(free_text)
            return self._finalize(sess)

    def _finalize(self, sess: _Session) -> SessionRecord:
        sess.finalized = True
        record = SessionRecord(
            session_id=sess.session_id, participant_id=sess.participant_id,
            group=sess.group, started_at_ms=sess.started_at_ms,
            events=list(sess.events),
            questionnaire=sess.bb.get("final.responses"),
            free_text=sess.bb.get("final.free_text"))
        meta_path = self.data_dir / f"{sess.session_id}.record.json"
        meta_path.write_text(json.dumps(record.to_json(), indent=2))
        self._write_index()
        return record

    def _write_index(self) -> None:
        index = {sid: {"participant_id": s.participant_id, "group": s.group,
                       "started_at_ms": s.started_at_ms, "finalized": s.finalized}
                 for sid, s in sorted(self._sessions.items())}
        (self.data_dir / "index.json").write_text(json.dumps(index, indent=2))

    # -- introspection -----------------------------------------------------

    def dialogue_state(self, session_id: str) -> P.DialogueState:
        return self._session(session_id).bb["dialogue.state"]

    def session_record(self, session_id: str) -> SessionRecord:
        sess = self._session(session_id)
        return SessionRecord(session_id=sess.session_id, participant_id=sess.participant_id,
                             group=sess.group, started_at_ms=sess.started_at_ms,
                             events=list(sess.events),
                             questionnaire=sess.bb.get("final.responses"),
                             free_text=sess.bb.get("final.free_text"))


# ---------------------------------------------------------------------------
# log loading and replay


def load_events(path: str | Path) -> list[InteractionEvent]:
    events = []
    with Path(path).open() as fh:
        for line in fh:
            line = line.strip()
            if line:
                events.append(InteractionEvent.from_json(json.loads(line)))
    return events


def load_record(data_dir: str | Path, session_id: str) -> SessionRecord:
    data_dir = Path(data_dir)
    meta = json.loads((data_dir / f"{session_id}.record.json").read_text())
    events = load_events(data_dir / f"{session_id}.jsonl")
    questionnaire = meta.get("questionnaire")
    return SessionRecord(session_id=meta["session_id"], participant_id=meta["participant_id"],
                         group=meta["group"], started_at_ms=meta["started_at_ms"],
                         events=events,
                         questionnaire=[tuple(x) for x in questionnaire] if questionnaire else None,
                         free_text=meta.get("free_text"))


def load_all_records(data_dir: str | Path) -> list[SessionRecord]:
    data_dir = Path(data_dir)
    index = json.loads((data_dir / "index.json").read_text())
    return [load_record(data_dir, sid) for sid in sorted(index)]


def replay_log(graph: IffGraph, user_group: str, group: str,
               events: list[InteractionEvent], session_id: str) -> P.DialogueState:
    """Rebuild the final dialogue state from a session's event log."""
    moves = [(P.AgentRole(e.agent), P.move_from_json(e.move))
             for e in events if not e.is_service]
    return P.replay(graph, user_group, group == "B", moves, session_id=session_id)
