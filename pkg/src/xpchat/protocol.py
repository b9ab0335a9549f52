"""Dialogue protocol state machine.

Conversations are sequences of typed moves exchanged between a questioner
(the user) and an explainer (the bot).  The machine enforces which (agent,
move) pairs are legal in every state, maintains an append-only commitment
store, and keeps the conversation topic stable across followup episodes.

All operations are pure: ``apply_move`` returns a new state and never mutates
its input, so replaying a logged move sequence reconstructs a session exactly.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Iterable

from .errors import XpError
from .iff import FollowupKind, IffGraph, Intent, followups_of, select_view


class AgentRole(enum.Enum):
    QUESTIONER = "Questioner"
    EXPLAINER = "Explainer"


# ---------------------------------------------------------------------------
# topics


@dataclass(frozen=True)
class ExplanationTargetTopic:
    kind: str = "ExplanationTarget"


@dataclass(frozen=True)
class IntentTopic:
    intent: Intent
    question_id: str
    kind: str = "IntentTopic"


@dataclass(frozen=True)
class FreeTopic:
    text: str
    kind: str = "Free"


Topic = ExplanationTargetTopic | IntentTopic | FreeTopic


# ---------------------------------------------------------------------------
# moves
#
# Control moves bracket episodes; locutions carry content.  Moves with free
# payloads (artifact references, challenge text) compare for legality on
# their signature only: the payload never decides whether a move is legal.


@dataclass(frozen=True)
class BeginQuestion:
    name = "begin_question"

    def signature(self):
        return (self.name,)


@dataclass(frozen=True)
class BeginExplanation:
    name = "begin_explanation"

    def signature(self):
        return (self.name,)


@dataclass(frozen=True)
class BeginArgument:
    name = "begin_argument"

    def signature(self):
        return (self.name,)


@dataclass(frozen=True)
class EndExplanation:
    name = "end_explanation"

    def signature(self):
        return (self.name,)


@dataclass(frozen=True)
class EndArgument:
    name = "end_argument"

    def signature(self):
        return (self.name,)


@dataclass(frozen=True)
class Followup:
    kind: FollowupKind
    name = "followup"

    def signature(self):
        return (self.name, self.kind)


@dataclass(frozen=True)
class Explain:
    type_id: str
    artifact_ref: str | None = None
    name = "explain"

    def signature(self):
        return (self.name, self.type_id)


@dataclass(frozen=True)
class Affirm:
    kind: FollowupKind
    name = "affirm"

    def signature(self):
        return (self.name, self.kind)

    @property
    def locution(self) -> str:
        return f"affirm_{self.kind.value.lower()}"


@dataclass(frozen=True)
class ReturnQuestion:
    question_id: str
    name = "return_question"

    def signature(self):
        return (self.name, self.question_id)


@dataclass(frozen=True)
class Challenge:
    text: str = ""
    name = "challenge"

    def signature(self):
        return (self.name,)


Move = (BeginQuestion | BeginExplanation | BeginArgument | EndExplanation | EndArgument
        | Followup | Explain | Affirm | ReturnQuestion | Challenge)

CONTROL_MOVES = (BeginQuestion, BeginExplanation, BeginArgument, EndExplanation, EndArgument, Followup)


def move_label(move: Move) -> str:
    """Stable wire/log label for a move, including enumerable payload."""
    sig = move.signature()
    if isinstance(move, Affirm):
        return move.locution
    if len(sig) == 1:
        return sig[0]
    tail = sig[1].value if isinstance(sig[1], FollowupKind) else str(sig[1])
    return f"{sig[0]}:{tail}"


# ---------------------------------------------------------------------------
# state


class Phase(enum.Enum):
    IDLE = "Idle"
    IN_QUESTION = "InQuestion"
    IN_EXPLANATION = "InExplanation"
    IN_FOLLOWUP = "InFollowup"
    IN_ARGUMENT = "InArgument"
    ENDED = "Ended"


class Expect(enum.Enum):
    """Sub-phase marker: whose concrete contribution the protocol awaits."""
    START = "start"
    QUESTION_CHOICE = "question_choice"
    BEGIN_EXPLANATION = "begin_explanation"
    EXPLAIN = "explain"
    QUESTIONER_TURN = "questioner_turn"
    FOLLOWUP_EXPLAIN = "followup_explain"
    AFFIRM = "affirm"
    CHALLENGE = "challenge"
    END_ARGUMENT = "end_argument"
    NOTHING = "nothing"


@dataclass(frozen=True)
class Commitment:
    agent: AgentRole
    proposition: str


@dataclass(frozen=True)
class HistoryEntry:
    agent: AgentRole
    move: Move
    topic: Topic


@dataclass(frozen=True)
class DialogueState:
    session_id: str
    view: IffGraph                  # group-filtered typology, immutable
    user_group: str
    followups_enabled: bool
    phase: Phase = Phase.IDLE
    expect: Expect = Expect.START
    topic_stack: tuple[Topic, ...] = (ExplanationTargetTopic(),)
    active_question: str | None = None
    delivered_types: frozenset[str] = frozenset()
    # followup episode bookkeeping, reset per question
    consumed_edges: frozenset[tuple[str, FollowupKind]] = frozenset()
    pending_followup: tuple[FollowupKind, str] | None = None
    commitments: tuple[Commitment, ...] = ()
    history: tuple[HistoryEntry, ...] = ()

    @property
    def topic(self) -> Topic:
        return self.topic_stack[-1]

    def conversation_key(self):
        """Control-relevant abstraction of the state (history excluded)."""
        return (self.phase, self.expect, self.active_question, self.delivered_types,
                self.consumed_edges, self.pending_followup)


class ProtocolError(XpError):
    def __init__(self, state: DialogueState, agent: AgentRole, move: Move):
        self.state_phase = state.phase
        self.agent = agent
        self.move = move
        self.expected = legal_moves(state)
        options = sorted(f"{a.value}:{move_label(m)}" for a, m in self.expected)
        super().__init__(
            f"illegal move {agent.value}:{move_label(move)} in phase {state.phase.value}; "
            f"expected one of {options}")


# ---------------------------------------------------------------------------
# operations


def new_session(graph: IffGraph, user_group: str, followups_enabled: bool,
                session_id: str = "local") -> DialogueState:
    """Fresh session over the group's view of the typology graph."""
    view = select_view(graph, user_group)  # raises UnknownUserGroup
    return DialogueState(session_id=session_id, view=view, user_group=user_group,
                         followups_enabled=followups_enabled)


def _available_followups(state: DialogueState) -> list[tuple[str, FollowupKind]]:
    assert state.active_question is not None
    edges = followups_of(state.view, state.active_question, state.delivered_types)
    return [e for e in edges if e not in state.consumed_edges]


def legal_moves(state: DialogueState) -> frozenset[tuple[AgentRole, Move]]:
    """The exact set of (agent, move) pairs apply_move accepts.

    Moves with free payloads are returned in canonical form (empty payload);
    membership is decided on move signatures.
    """
    Q, E = AgentRole.QUESTIONER, AgentRole.EXPLAINER
    out: set[tuple[AgentRole, Move]] = set()
    if state.phase is Phase.IDLE:
        out.add((Q, BeginQuestion()))
    elif state.phase is Phase.IN_QUESTION:
        if state.expect is Expect.QUESTION_CHOICE:
            for q in state.view.questions:
                out.add((Q, ReturnQuestion(q.id)))
        else:  # question picked, explainer opens the explanation episode
            out.add((E, BeginExplanation()))
    elif state.phase is Phase.IN_EXPLANATION:
        if state.expect is Expect.EXPLAIN:
            q = state.view.question(state.active_question)
            out.add((E, Explain(q.recommended)))
        else:
            if state.followups_enabled:
                kinds_seen: set[FollowupKind] = set()
                for _e2, kind in _available_followups(state):
                    if kind not in kinds_seen:
                        kinds_seen.add(kind)
                        out.add((Q, Followup(kind)))
            for q in state.view.questions:
                if q.id != state.active_question:
                    out.add((Q, ReturnQuestion(q.id)))
            out.add((Q, BeginArgument()))
            out.add((Q, EndExplanation()))
    elif state.phase is Phase.IN_FOLLOWUP:
        if state.expect is Expect.FOLLOWUP_EXPLAIN:
            out.add((E, Explain(state.pending_followup[1])))
        else:
            out.add((Q, Affirm(state.pending_followup[0])))
    elif state.phase is Phase.IN_ARGUMENT:
        if state.expect is Expect.CHALLENGE:
            out.add((Q, Challenge()))
        else:
            out.add((Q, EndArgument()))
    # Phase.ENDED: empty set
    return frozenset(out)


def _record(state: DialogueState, agent: AgentRole, move: Move, **changes) -> DialogueState:
    # attribute the move to the episode it opens, not the one it closes
    stack = changes.get("topic_stack", state.topic_stack)
    entry = HistoryEntry(agent=agent, move=move, topic=stack[-1])
    return replace(state, history=state.history + (entry,), **changes)


def apply_move(state: DialogueState, agent: AgentRole, move: Move) -> DialogueState:
    """Advance the dialogue by one move; illegal moves raise ProtocolError.

    The error is non-destructive: the input state is unchanged and the error
    carries the expected-move set.
    """
    legal = {(a, m.signature()) for a, m in legal_moves(state)}
    if (agent, move.signature()) not in legal:
        raise ProtocolError(state, agent, move)

    if isinstance(move, BeginQuestion):
        return _record(state, agent, move, phase=Phase.IN_QUESTION, expect=Expect.QUESTION_CHOICE)

    if isinstance(move, ReturnQuestion):
        question = state.view.question(move.question_id)
        # close the current explanation episode (if any) and open a new one
        stack = state.topic_stack
        if isinstance(stack[-1], IntentTopic):
            stack = stack[:-1]
        stack = stack + (IntentTopic(intent=question.intent, question_id=question.id),)
        return _record(state, agent, move, phase=Phase.IN_QUESTION, expect=Expect.BEGIN_EXPLANATION,
                       topic_stack=stack, active_question=question.id,
                       delivered_types=frozenset(), consumed_edges=frozenset(),
                       pending_followup=None)

    if isinstance(move, BeginExplanation):
        return _record(state, agent, move, phase=Phase.IN_EXPLANATION, expect=Expect.EXPLAIN)

    if isinstance(move, Explain):
        commitment = Commitment(agent, f"explained:{state.active_question}:{move.type_id}")
        delivered = state.delivered_types | {move.type_id}
        if state.phase is Phase.IN_EXPLANATION:
            return _record(state, agent, move, expect=Expect.QUESTIONER_TURN,
                           delivered_types=delivered,
                           commitments=state.commitments + (commitment,))
        # followup episode: affirmation still owed
        return _record(state, agent, move, expect=Expect.AFFIRM,
                       delivered_types=delivered,
                       commitments=state.commitments + (commitment,))

    if isinstance(move, Followup):
        # first unconsumed edge of the requested kind, in configuration order
        edge = next(e for e in _available_followups(state) if e[1] == move.kind)
        return _record(state, agent, move, phase=Phase.IN_FOLLOWUP, expect=Expect.FOLLOWUP_EXPLAIN,
                       pending_followup=(edge[1], edge[0]),
                       consumed_edges=state.consumed_edges | {edge})

    if isinstance(move, Affirm):
        kind, e2 = state.pending_followup
        commitment = Commitment(agent, f"affirmed:{kind.value.lower()}:{e2}")
        return _record(state, agent, move, phase=Phase.IN_EXPLANATION, expect=Expect.QUESTIONER_TURN,
                       pending_followup=None,
                       commitments=state.commitments + (commitment,))

    if isinstance(move, BeginArgument):
        return _record(state, agent, move, phase=Phase.IN_ARGUMENT, expect=Expect.CHALLENGE)

    if isinstance(move, Challenge):
        return _record(state, agent, move, expect=Expect.END_ARGUMENT)

    if isinstance(move, EndArgument):
        return _record(state, agent, move, phase=Phase.IN_EXPLANATION, expect=Expect.QUESTIONER_TURN)

    if isinstance(move, EndExplanation):
        stack = state.topic_stack
        if isinstance(stack[-1], IntentTopic):
            stack = stack[:-1]
        return _record(state, agent, move, phase=Phase.ENDED, expect=Expect.NOTHING,
                       topic_stack=stack, active_question=None, pending_followup=None)

    raise ProtocolError(state, agent, move)  # pragma: no cover


def affirm(state: DialogueState, kind: FollowupKind) -> DialogueState:
    """Questioner affirms the followup explanation just delivered."""
    return apply_move(state, AgentRole.QUESTIONER, Affirm(kind))


def transcript(state: DialogueState) -> list[tuple[AgentRole, Move, Topic]]:
    """Ordered projection of the history with the topic active at each move."""
    return [(e.agent, e.move, e.topic) for e in state.history]


def move_to_json(move: Move) -> dict:
    doc: dict = {"name": move.name}
    if isinstance(move, (Followup, Affirm)):
        doc["kind"] = move.kind.value
    elif isinstance(move, Explain):
        doc["type_id"] = move.type_id
        doc["artifact_ref"] = move.artifact_ref
    elif isinstance(move, ReturnQuestion):
        doc["question_id"] = move.question_id
    elif isinstance(move, Challenge):
        doc["text"] = move.text
    return doc


def move_from_json(doc: dict) -> Move:
    name = doc["name"]
    simple = {"begin_question": BeginQuestion, "begin_explanation": BeginExplanation,
              "begin_argument": BeginArgument, "end_explanation": EndExplanation,
              "end_argument": EndArgument}
    if name in simple:
        return simple[name]()
    if name == "followup":
        return Followup(FollowupKind(doc["kind"]))
    if name == "affirm":
        return Affirm(FollowupKind(doc["kind"]))
    if name == "explain":
        return Explain(doc["type_id"], artifact_ref=doc.get("artifact_ref"))
    if name == "return_question":
        return ReturnQuestion(doc["question_id"])
    if name == "challenge":
        return Challenge(doc.get("text", ""))
    raise ValueError(f"unknown move name {name!r}")


def topic_to_json(topic: Topic) -> dict:
    if isinstance(topic, IntentTopic):
        return {"kind": "IntentTopic", "intent": topic.intent.value,
                "question_id": topic.question_id}
    if isinstance(topic, FreeTopic):
        return {"kind": "Free", "text": topic.text}
    return {"kind": "ExplanationTarget"}


def topic_from_json(doc: dict) -> Topic:
    if doc["kind"] == "IntentTopic":
        return IntentTopic(intent=Intent(doc["intent"]), question_id=doc["question_id"])
    if doc["kind"] == "Free":
        return FreeTopic(text=doc.get("text", ""))
    return ExplanationTargetTopic()


def replay(graph: IffGraph, user_group: str, followups_enabled: bool,
           moves: Iterable[tuple[AgentRole, Move]], session_id: str = "local") -> DialogueState:
    """Fold a move sequence from a fresh session (determinism helper)."""
    state = new_session(graph, user_group, followups_enabled, session_id=session_id)
    for agent, move in moves:
        state = apply_move(state, agent, move)
    return state
