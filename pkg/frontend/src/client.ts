/** Transport-agnostic chat client: a state machine over the wire protocol.
 *
 * The client never invents choices: it only offers (and sends) question ids
 * and followup kinds present in the most recent menu from the server.
 */

import {
  PROTO_VERSION,
  type Assignment,
  type ClientMessage,
  type FollowupKind,
  type FollowupOption,
  type MenuQuestion,
  type QuestionnaireItem,
  type ServerMessage,
} from "./protocol.js";
import {
  renderArtifact,
  renderFollowups,
  renderMenu,
  renderQuestionnaire,
  renderTarget,
} from "./render.js";

export type SendFn = (frame: ClientMessage) => void;

export interface TranscriptItem {
  role: "user" | "agent";
  kind: string;
  html: string;
}

export class ProtocolViolation extends Error {}

export class ChatClient {
  readonly transcript: TranscriptItem[] = [];
  sessionId: string | null = null;
  group: "A" | "B" | null = null;
  ended = false;
  lastError: string | null = null;

  private menu: MenuQuestion[] = [];
  private followups: FollowupOption[] = [];
  private pendingEval: { item_id: string; scale: number } | null = null;
  private questionnaireItems: QuestionnaireItem[] | null = null;
  private freeTextRequested = false;

  constructor(
    private readonly send: SendFn,
    private readonly participantId: string,
    private readonly assignment: Assignment = "random",
  ) {}

  start(): void {
    this.send({
      type: "start",
      payload: {
        proto_version: PROTO_VERSION,
        participant_id: this.participantId,
        assignment: this.assignment,
      },
    });
  }

  availableQuestions(): readonly MenuQuestion[] {
    return this.menu;
  }

  availableFollowups(): readonly FollowupOption[] {
    return this.followups;
  }

  awaitingEval(): boolean {
    return this.pendingEval !== null;
  }

  awaitingQuestionnaire(): boolean {
    return this.questionnaireItems !== null;
  }

  awaitingFreeText(): boolean {
    return this.freeTextRequested;
  }

  chooseQuestion(questionId: string): void {
    const question = this.menu.find((q) => q.id === questionId);
    if (!question) {
      throw new ProtocolViolation(`question ${questionId} is not in the current menu`);
    }
    this.user("question", question.text);
    this.menu = [];
    this.followups = [];
    this.send({ type: "choose_question", payload: { question_id: questionId } });
  }

  chooseFollowup(kind: FollowupKind): void {
    const option = this.followups.find((f) => f.kind === kind);
    if (!option) {
      throw new ProtocolViolation(`followup ${kind} is not in the current menu`);
    }
    this.user("followup", option.label);
    this.menu = [];
    this.followups = [];
    this.send({ type: "choose_followup", payload: { kind } });
  }

  endExplanation(): void {
    if (this.menu.length === 0 && this.followups.length === 0) {
      throw new ProtocolViolation("no menu is open; cannot end the conversation now");
    }
    this.user("end", "I'm done with my questions.");
    this.menu = [];
    this.followups = [];
    this.send({ type: "end_explanation", payload: {} });
  }

  answerEval(value: number): void {
    if (!this.pendingEval) {
      throw new ProtocolViolation("no evaluation prompt is pending");
    }
    const { item_id, scale } = this.pendingEval;
    if (!Number.isInteger(value) || value < 1 || value > scale) {
      throw new ProtocolViolation(`rating must be an integer in 1..${scale}`);
    }
    this.pendingEval = null;
    this.user("eval", `${value}/${scale}`);
    this.send({ type: "questionnaire", payload: { item_id, value } });
  }

  submitQuestionnaire(responses: Record<string, number>): void {
    const items = this.questionnaireItems;
    if (!items) {
      throw new ProtocolViolation("no questionnaire has been presented");
    }
    for (const item of items) {
      const value = responses[item.id];
      if (!Number.isInteger(value) || value < 1 || value > item.scale) {
        throw new ProtocolViolation(`item ${item.id} needs an integer in 1..${item.scale}`);
      }
    }
    const extras = Object.keys(responses).filter((id) => !items.some((i) => i.id === id));
    if (extras.length > 0) {
      throw new ProtocolViolation(`unknown questionnaire items: ${extras.join(", ")}`);
    }
    this.questionnaireItems = null;
    this.user("questionnaire", "questionnaire submitted");
    this.send({ type: "questionnaire", payload: { responses } });
  }

  submitFreeText(text: string): void {
    if (!this.freeTextRequested) {
      throw new ProtocolViolation("free text has not been requested");
    }
    this.freeTextRequested = false;
    this.user("free_text", text);
    this.send({ type: "free_text", payload: { text } });
  }

  handle(msg: ServerMessage): void {
    switch (msg.type) {
      case "session_started":
        this.sessionId = msg.payload.session_id;
        this.group = msg.payload.group;
        break;
      case "version_mismatch":
        this.lastError = `protocol version mismatch: server ${msg.payload.server}`;
        this.ended = true;
        break;
      case "error":
      case "protocol_error":
        this.lastError = msg.payload.message;
        break;
      case "persona":
        this.agent("persona", `<p>You are chatting as: ${msg.payload.group}</p>`);
        break;
      case "target":
        this.agent("target", renderTarget(msg.payload));
        break;
      case "menu":
        this.menu = msg.payload.questions;
        this.followups = [];
        this.agent("menu", renderMenu(this.menu));
        break;
      case "followup_menu":
        this.menu = msg.payload.questions;
        this.followups = msg.payload.followups;
        this.agent("menu", renderFollowups(this.followups) + renderMenu(this.menu));
        break;
      case "explanation":
      case "annotation":
        this.agent(msg.type, renderArtifact(msg.payload.artifact));
        break;
      case "eval_prompt":
        this.pendingEval = { item_id: msg.payload.item_id, scale: msg.payload.scale };
        this.agent("eval_prompt", `<p>${msg.payload.text}</p>`);
        break;
      case "questionnaire":
        this.questionnaireItems = msg.payload.items;
        this.agent("questionnaire", renderQuestionnaire(msg.payload.items));
        break;
      case "free_text_prompt":
        this.freeTextRequested = true;
        this.agent(
          "free_text_prompt",
          `<p>Please describe your experience (at least ${msg.payload.min_words} words).</p>`,
        );
        break;
      case "bye":
        this.ended = true;
        this.agent("bye", "<p>Thanks for participating.</p>");
        break;
    }
  }

  private agent(kind: string, html: string): void {
    this.transcript.push({ role: "agent", kind, html });
  }

  private user(kind: string, text: string): void {
    this.transcript.push({ role: "user", kind, html: `<p>${text}</p>` });
  }
}
