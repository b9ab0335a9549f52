"""Behaviour-tree dialogue manager.

One tree plus one blackboard drive one conversation.  Ticks are input-driven:
the session layer places the pending client choice on the blackboard and
ticks the root once; action handlers translate choices into protocol moves,
invoke explainers, and queue outbound messages.  Composites follow standard
semantics (sequence = all children succeed, fallback = first success) and
resume a Running child at the same index on the next tick.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

from . import protocol as P
from .errors import HandlerError, InvalidGraph, NoAnchorFound, NoCounterfactualFound
from .explainers import (ExplainContext, ExplanationArtifact, artifact_to_json,
                         generate_artifact, run_followup)
from .iff import FollowupKind, IffGraph, followups_of

FOLLOWUP_LABELS = {
    FollowupKind.COMPLEMENT: "Tell me more about this",
    FollowupKind.REPLACEMENT: "Show me a different explanation",
    FollowupKind.VALIDATION: "Double-check this explanation",
}


class BtStatus(enum.Enum):
    SUCCESS = "Success"
    FAILURE = "Failure"
    RUNNING = "Running"


class Blackboard(dict):
    """Namespaced key/value store shared by all nodes of one conversation."""

    def emit(self, message: dict) -> None:
        self.setdefault("out.messages", []).append(message)

    def emit_event(self, kind: str) -> None:
        hook = self.get("hooks.event")
        if hook is not None:
            hook(kind)


# ---------------------------------------------------------------------------
# node kinds


class BtNode:
    name: str = ""

    def tick(self, bb: Blackboard) -> BtStatus:
        raise NotImplementedError

    def reset(self) -> None:
        pass

    def to_debug(self) -> dict:
        return {"kind": type(self).__name__, "name": self.name}


@dataclass
class Action(BtNode):
    name: str = ""
    handler: object = None  # callable(bb) -> BtStatus

    def tick(self, bb: Blackboard) -> BtStatus:
        try:
            return self.handler(bb)
        except (HandlerError, P.ProtocolError):
            # recoverable at the session layer: the state is unchanged
            raise
        except Exception as exc:
            bb["error.last"] = f"{self.name}: {exc!r}"
            return BtStatus.FAILURE


class _Composite(BtNode):
    def __init__(self, name: str, children: list[BtNode]):
        if not children:
            raise InvalidGraph(f"composite {name!r} must have children")
        self.name = name
        self.children = children
        self._current = 0

    def reset(self) -> None:
        self._current = 0
        for child in self.children:
            child.reset()

    def to_debug(self) -> dict:
        return {"kind": type(self).__name__, "name": self.name,
                "children": [c.to_debug() for c in self.children]}


class Sequence(_Composite):
    def tick(self, bb: Blackboard) -> BtStatus:
        while self._current < len(self.children):
            status = self.children[self._current].tick(bb)
            if status is BtStatus.RUNNING:
                return BtStatus.RUNNING
            if status is BtStatus.FAILURE:
                self.reset()
                return BtStatus.FAILURE
            self._current += 1
        self.reset()
        return BtStatus.SUCCESS


class Fallback(_Composite):
    def tick(self, bb: Blackboard) -> BtStatus:
        while self._current < len(self.children):
            status = self.children[self._current].tick(bb)
            if status is BtStatus.RUNNING:
                return BtStatus.RUNNING
            if status is BtStatus.SUCCESS:
                self.reset()
                return BtStatus.SUCCESS
            self._current += 1
        self.reset()
        return BtStatus.FAILURE


@dataclass
class Guard(BtNode):
    """Ticks the child only while the blackboard condition key is truthy."""
    name: str = ""
    condition_key: str = ""
    child: BtNode = None

    def tick(self, bb: Blackboard) -> BtStatus:
        if not bb.get(self.condition_key):
            return BtStatus.FAILURE
        return self.child.tick(bb)

    def reset(self) -> None:
        self.child.reset()

    def to_debug(self) -> dict:
        return {"kind": "Guard", "name": self.name, "condition": self.condition_key,
                "children": [self.child.to_debug()]}


@dataclass
class Repeat(BtNode):
    """Re-runs the child until the done key turns truthy, then succeeds."""
    name: str = ""
    done_key: str = ""
    child: BtNode = None

    def tick(self, bb: Blackboard) -> BtStatus:
        if bb.get(self.done_key):
            return BtStatus.SUCCESS
        status = self.child.tick(bb)
        if status is BtStatus.FAILURE:
            return BtStatus.FAILURE
        if status is BtStatus.SUCCESS:
            self.child.reset()
            if bb.get(self.done_key):
                return BtStatus.SUCCESS
            return BtStatus.RUNNING
        return BtStatus.RUNNING

    def reset(self) -> None:
        self.child.reset()

    def to_debug(self) -> dict:
        return {"kind": "Repeat", "name": self.name, "done": self.done_key,
                "children": [self.child.to_debug()]}


def find_node(root: BtNode, name: str) -> BtNode | None:
    if root.name == name:
        return root
    for child in getattr(root, "children", []) or []:
        found = find_node(child, name)
        if found is not None:
            return found
    inner = getattr(root, "child", None)
    if inner is not None:
        return find_node(inner, name)
    return None


def dump_tree(root: BtNode) -> dict:
    """JSON debug document of the tree structure."""
    return root.to_debug()


# ---------------------------------------------------------------------------
# blackboard helpers


def _state(bb: Blackboard) -> P.DialogueState:
    return bb["dialogue.state"]


def _apply(bb: Blackboard, agent: P.AgentRole, move: P.Move) -> None:
    bb["dialogue.state"] = P.apply_move(_state(bb), agent, move)


def _store_artifact(bb: Blackboard, artifact: ExplanationArtifact) -> str:
    store = bb.setdefault("artifacts", {})
    aid = f"a{len(store) + 1}"
    store[aid] = artifact
    return aid


def _refresh_guards(bb: Blackboard) -> None:
    state = _state(bb)
    for q in state.view.questions:
        bb[f"guard.question.{q.id}"] = state.active_question == q.id


def _question_options(bb: Blackboard) -> list[dict]:
    state = _state(bb)
    return [{"id": q.id, "text": q.text, "intent": q.intent.value}
            for q in state.view.questions if q.id != state.active_question]


def _followup_options(bb: Blackboard) -> list[dict]:
    state = _state(bb)
    if not state.followups_enabled or state.phase is not P.Phase.IN_EXPLANATION:
        return []
    options = []
    seen_kinds = set()
    edges = followups_of(state.view, state.active_question, state.delivered_types)
    for e2, kind in edges:
        if (e2, kind) in state.consumed_edges or kind in seen_kinds:
            continue
        seen_kinds.add(kind)
        options.append({"kind": kind.value, "label": FOLLOWUP_LABELS[kind], "type_id": e2})
    return options


def _emit_menus(bb: Blackboard) -> None:
    followups = _followup_options(bb)
    if followups:
        bb.emit({"type": "followup_menu",
                 "payload": {"followups": followups,
                             "questions": _question_options(bb), "can_end": True}})
    else:
        bb.emit({"type": "menu",
                 "payload": {"questions": _question_options(bb), "can_end": True}})


def enqueue_evaluation(bb: Blackboard, question_id: str) -> None:
    """Append one rating item for an explored question; duplicates ignored."""
    queue = bb.setdefault("eval.queue", [])
    if question_id in queue:
        return
    queue.append(question_id)
    composite = bb.get("tree.eval_composite")
    if composite is not None:
        node = Action(name=f"eval_{question_id}", handler=_make_eval_handler(question_id))
        composite.children.insert(len(composite.children) - 1, node)


# ---------------------------------------------------------------------------
# action handlers


def _persona(bb: Blackboard) -> BtStatus:
    if bb.get("persona.group"):
        return BtStatus.SUCCESS
    bb["persona.group"] = bb.get("persona.default", _state(bb).user_group)
    bb.emit_event("persona_selected")
    bb.emit({"type": "persona", "payload": {"group": bb["persona.group"]}})
    return BtStatus.SUCCESS


def _target(bb: Blackboard) -> BtStatus:
    if bb.get("target.presented"):
        return BtStatus.SUCCESS
    ctx: ExplainContext = bb["explain.ctx"]
    prediction = ctx.model.predict(tuple(ctx.instance))
    score = ctx.model.score(tuple(ctx.instance))
    bb["target.prediction"] = prediction
    bb["target.presented"] = True
    bb.emit_event("target_presented")
    bb.emit({"type": "target",
             "payload": {"instance": {spec.name: value for spec, value
                                      in zip(ctx.data.features, ctx.instance)},
                         "prediction": prediction, "score": score}})
    bb.emit({"type": "menu", "payload": {"questions": _question_options(bb), "can_end": False}})
    return BtStatus.SUCCESS


def _explanation_need(bb: Blackboard) -> BtStatus:
    """Translate queued user choices into protocol moves.

    Question selection, argument moves and conversation end are resolved
    here; followup choices pass through to the strategy composite.
    """
    state = _state(bb)
    if state.phase is P.Phase.ENDED:
        bb["dialogue.ended"] = True
        return BtStatus.SUCCESS
    pending = bb.get("input.pending")
    if pending is None:
        return BtStatus.RUNNING
    kind = pending.get("type")
    if kind == "choose_question":
        qid = pending["payload"]["question_id"]
        if state.phase is P.Phase.IDLE:
            _apply(bb, P.AgentRole.QUESTIONER, P.BeginQuestion())
        _apply(bb, P.AgentRole.QUESTIONER, P.ReturnQuestion(qid))
        bb["input.pending"] = None
        _refresh_guards(bb)
        return BtStatus.SUCCESS
    if kind == "end_explanation":
        _apply(bb, P.AgentRole.QUESTIONER, P.EndExplanation())
        bb["input.pending"] = None
        bb["dialogue.ended"] = True
        _refresh_guards(bb)
        return BtStatus.SUCCESS
    if kind == "begin_argument":
        _apply(bb, P.AgentRole.QUESTIONER, P.BeginArgument())
        bb["input.pending"] = None
        bb.emit({"type": "menu", "payload": {"argue": True}})
        return BtStatus.SUCCESS
    if kind == "argue":
        text = pending["payload"].get("text", "")
        _apply(bb, P.AgentRole.QUESTIONER, P.Challenge(text))
        _apply(bb, P.AgentRole.QUESTIONER, P.EndArgument())
        bb["input.pending"] = None
        bb.emit({"type": "explanation",
                 "payload": {"text": "Thank you, your challenge has been recorded."}})
        _emit_menus(bb)
        return BtStatus.SUCCESS
    # choose_followup (and anything else) is handled downstream
    _refresh_guards(bb)
    return BtStatus.SUCCESS


def _make_explain_handler(question_id: str, recommended: str):
    def handler(bb: Blackboard) -> BtStatus:
        state = _state(bb)
        if state.active_question != question_id or state.delivered_types:
            return BtStatus.SUCCESS  # already delivered for this episode
        ctx: ExplainContext = bb["explain.ctx"]
        _apply(bb, P.AgentRole.EXPLAINER, P.BeginExplanation())
        try:
            artifact = generate_artifact(recommended, ctx)
        except NoAnchorFound:
            # borderline instance: report the best reachable precision instead
            # of aborting the conversation
            artifact = generate_artifact(recommended, replace(ctx, precision_threshold=0.51))
        except NoCounterfactualFound:
            artifact = generate_artifact(recommended,
                                         replace(ctx, max_changes=len(ctx.data.features)))
        aid = _store_artifact(bb, artifact)
        _apply(bb, P.AgentRole.EXPLAINER, P.Explain(recommended, artifact_ref=aid))
        bb.emit({"type": "explanation", "payload": {"artifact_id": aid,
                                                    "artifact": artifact_to_json(artifact)}})
        bb[f"last_artifact.{question_id}"] = artifact
        enqueue_evaluation(bb, question_id)
        # version B: the complement annotation is auto-invoked with every
        # recommended explanation
        state = _state(bb)
        if state.followups_enabled:
            complement = [e for e in followups_of(state.view, question_id, state.delivered_types)
                          if e[1] is FollowupKind.COMPLEMENT and e not in state.consumed_edges]
            if complement:
                e2 = complement[0][0]
                _apply(bb, P.AgentRole.QUESTIONER, P.Followup(FollowupKind.COMPLEMENT))
                note = run_followup(state.view, question_id, FollowupKind.COMPLEMENT,
                                    artifact, ctx, e2=e2)
                nid = _store_artifact(bb, note)
                _apply(bb, P.AgentRole.EXPLAINER, P.Explain(e2, artifact_ref=nid))
                _apply(bb, P.AgentRole.QUESTIONER, P.Affirm(FollowupKind.COMPLEMENT))
                bb.emit({"type": "annotation", "payload": {"artifact_id": nid,
                                                           "artifact": artifact_to_json(note)}})
        _emit_menus(bb)
        return BtStatus.SUCCESS
    return handler


def _make_followup_handler(question_id: str):
    def handler(bb: Blackboard) -> BtStatus:
        pending = bb.get("input.pending")
        if pending is None or pending.get("type") != "choose_followup":
            return BtStatus.SUCCESS
        state = _state(bb)
        kind = FollowupKind(pending["payload"]["kind"])
        prior = bb.get(f"last_artifact.{question_id}")
        ctx: ExplainContext = bb["explain.ctx"]
        _apply(bb, P.AgentRole.QUESTIONER, P.Followup(kind))
        state = _state(bb)
        _k, e2 = state.pending_followup
        artifact = run_followup(state.view, question_id, kind, prior, ctx, e2=e2)
        aid = _store_artifact(bb, artifact)
        _apply(bb, P.AgentRole.EXPLAINER, P.Explain(e2, artifact_ref=aid))
        _apply(bb, P.AgentRole.QUESTIONER, P.Affirm(kind))
        message_type = "annotation" if artifact.type_id == "text_annotation" else "explanation"
        bb.emit({"type": message_type, "payload": {"artifact_id": aid,
                                                   "artifact": artifact_to_json(artifact),
                                                   "followup_kind": kind.value}})
        if artifact.type_id != "text_annotation":
            bb[f"last_artifact.{question_id}"] = artifact
        bb["input.pending"] = None
        _emit_menus(bb)
        return BtStatus.SUCCESS
    return handler


def _strategy_idle(bb: Blackboard) -> BtStatus:
    return BtStatus.SUCCESS


def _make_eval_handler(question_id: str):
    def handler(bb: Blackboard) -> BtStatus:
        answers = bb.setdefault("eval.answers", {})
        if question_id in answers:
            return BtStatus.SUCCESS
        prompt_key = f"eval.prompted.{question_id}"
        if not bb.get(prompt_key):
            bb[prompt_key] = True
            bb.emit_event("evaluation_prompt")
            question = _state(bb).view.question(question_id)
            bb.emit({"type": "eval_prompt",
                     "payload": {"item_id": question_id, "scale": 5,
                                 "text": f"How helpful was the answer to: {question.text}"}})
        pending = bb.get("input.pending")
        if pending and pending.get("type") == "questionnaire" \
                and pending["payload"].get("item_id") == question_id:
            answers[question_id] = int(pending["payload"]["value"])
            bb["input.pending"] = None
            bb.emit_event("evaluation_response")
            return BtStatus.SUCCESS
        return BtStatus.RUNNING
    return handler


def _final_questionnaire(bb: Blackboard) -> BtStatus:
    if not bb.get("final.prompted"):
        bb["final.prompted"] = True
        bb.emit_event("evaluation_prompt")
        bb.emit({"type": "questionnaire",
                 "payload": {"items": bb.get("questionnaire.items", []), "scale": 5}})
        bb.emit_event("free_text_prompt")
        bb.emit({"type": "free_text_prompt", "payload": {"min_words": 100}})
    if bb.get("final.responses") is not None and bb.get("final.free_text") is not None:
        bb.emit({"type": "bye", "payload": {}})
        return BtStatus.SUCCESS
    return BtStatus.RUNNING


# ---------------------------------------------------------------------------
# tree construction and execution


def build_tree(graph: IffGraph) -> BtNode:
    """Dialogue-manager tree for one typology view.

    Root sequence: persona, explanation target, repeated explanation-need
    loop with one strategy branch per question, then the evaluation
    strategy (question rating nodes appended during the conversation).
    """
    if not graph.questions:
        raise InvalidGraph("cannot build a dialogue tree for a graph with no questions")
    branches: list[BtNode] = []
    for q in graph.questions:
        followup_children: list[BtNode] = [Action(name=f"followups_{q.id}",
                                                  handler=_make_followup_handler(q.id))]
        branch = Sequence(name=f"strategy_{q.id}", children=[
            Action(name=f"explainer_{q.id}", handler=_make_explain_handler(q.id, q.recommended)),
            Sequence(name=f"followup_hub_{q.id}", children=followup_children),
        ])
        branches.append(Guard(name=f"question_{q.id}", condition_key=f"guard.question.{q.id}",
                              child=branch))
    branches.append(Action(name="strategy_idle", handler=_strategy_idle))

    explore = Sequence(name="explore", children=[
        Action(name="explanation_need", handler=_explanation_need),
        Fallback(name="explanation_strategy", children=branches),
    ])
    evaluation = Sequence(name="evaluation_strategy", children=[
        Action(name="final_questionnaire", handler=_final_questionnaire),
    ])
    return Sequence(name="dialogue_manager", children=[
        Action(name="persona", handler=_persona),
        Action(name="explanation_target", handler=_target),
        Repeat(name="conversation_loop", done_key="dialogue.ended", child=explore),
        evaluation,
    ])


def tick(tree: BtNode, bb: Blackboard) -> BtStatus:
    """One input-driven evaluation pass of the tree."""
    bb["tick.count"] = bb.get("tick.count", 0) + 1
    if "tree.eval_composite" not in bb:
        bb["tree.eval_composite"] = find_node(tree, "evaluation_strategy")
    return tree.tick(bb)
