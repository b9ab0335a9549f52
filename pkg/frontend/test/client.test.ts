import { readFileSync } from "node:fs";
import { join } from "node:path";
import { beforeEach, describe, expect, it } from "vitest";

import { ChatClient, ProtocolViolation } from "../src/client.js";
import type { ClientMessage, ServerMessage } from "../src/protocol.js";

const session = JSON.parse(
  readFileSync(join(__dirname, "fixtures", "session_b.json"), "utf8"),
) as ServerMessage[];

function feed(client: ChatClient, upTo: (m: ServerMessage) => boolean): number {
  for (let i = 0; i < session.length; i++) {
    client.handle(session[i]);
    if (upTo(session[i])) return i;
  }
  throw new Error("marker message not found in fixture");
}

describe("ChatClient", () => {
  let sent: ClientMessage[];
  let client: ChatClient;

  beforeEach(() => {
    sent = [];
    client = new ChatClient((frame) => sent.push(frame), "p1", "B");
  });

  it("sends a versioned start frame", () => {
    client.start();
    expect(sent).toEqual([
      {
        type: "start",
        payload: { proto_version: "1", participant_id: "p1", assignment: "B" },
      },
    ]);
  });

  it("tracks session identity from session_started", () => {
    feed(client, (m) => m.type === "session_started");
    expect(client.sessionId).toBe("fixture_session");
    expect(client.group).toBe("B");
  });

  it("only offers questions from the latest menu", () => {
    feed(client, (m) => m.type === "menu");
    expect(client.availableQuestions().map((q) => q.id)).toContain("q_why_outcome");
    client.chooseQuestion("q_why_outcome");
    expect(sent.at(-1)).toEqual({
      type: "choose_question",
      payload: { question_id: "q_why_outcome" },
    });
    // the menu is consumed by choosing; a second pick must be refused
    expect(() => client.chooseQuestion("q_why_outcome")).toThrow(ProtocolViolation);
  });

  it("refuses questions that are not on the menu", () => {
    feed(client, (m) => m.type === "menu");
    expect(() => client.chooseQuestion("q_made_up")).toThrow(ProtocolViolation);
    expect(sent).toHaveLength(0);
  });

  it("only offers followups from the latest followup menu", () => {
    feed(client, (m) => m.type === "followup_menu");
    expect(client.availableFollowups().map((f) => f.kind)).toEqual(["Validation"]);
    expect(() => client.chooseFollowup("Replacement")).toThrow(ProtocolViolation);
    client.chooseFollowup("Validation");
    expect(sent.at(-1)).toEqual({
      type: "choose_followup",
      payload: { kind: "Validation" },
    });
  });

  it("answers eval prompts within the advertised scale", () => {
    feed(client, (m) => m.type === "eval_prompt");
    expect(client.awaitingEval()).toBe(true);
    expect(() => client.answerEval(6)).toThrow(ProtocolViolation);
    expect(() => client.answerEval(0)).toThrow(ProtocolViolation);
    client.answerEval(4);
    expect(client.awaitingEval()).toBe(false);
    const frame = sent.at(-1)!;
    expect(frame.type).toBe("questionnaire");
    expect(frame.payload).toMatchObject({ item_id: "q_why_outcome", value: 4 });
  });

  it("validates the questionnaire against the presented items", () => {
    feed(client, (m) => m.type === "questionnaire");
    const good: Record<string, number> = {
      es1: 4, es2: 4, es3: 4, es4: 4, es5: 4, es6: 4,
    };
    expect(() => client.submitQuestionnaire({ ...good, es1: 9 })).toThrow(ProtocolViolation);
    expect(() => client.submitQuestionnaire({ ...good, bogus: 3 })).toThrow(ProtocolViolation);
    const { es6, ...missing } = good;
    expect(() => client.submitQuestionnaire(missing)).toThrow(ProtocolViolation);
    client.submitQuestionnaire(good);
    expect(sent.at(-1)).toEqual({ type: "questionnaire", payload: { responses: good } });
    // submitting twice is refused
    expect(() => client.submitQuestionnaire(good)).toThrow(ProtocolViolation);
  });

  it("gates free text on the prompt", () => {
    expect(() => client.submitFreeText("hello")).toThrow(ProtocolViolation);
    feed(client, (m) => m.type === "free_text_prompt");
    client.submitFreeText("it was clear");
    expect(sent.at(-1)).toEqual({ type: "free_text", payload: { text: "it was clear" } });
  });

  it("replays the full fixture session into a transcript and ends", () => {
    for (const msg of session) client.handle(msg);
    expect(client.ended).toBe(true);
    expect(client.lastError).toBeNull();
    const kinds = client.transcript.map((t) => t.kind);
    expect(kinds.filter((k) => k === "explanation").length).toBeGreaterThanOrEqual(6);
    expect(kinds.at(-1)).toBe("bye");
    for (const item of client.transcript) {
      expect(item.html.length).toBeGreaterThan(0);
    }
  });

  it("surfaces a version mismatch as a terminal error", () => {
    client.handle({ type: "version_mismatch", payload: { server: "1", client: "99" } });
    expect(client.ended).toBe(true);
    expect(client.lastError).toContain("version mismatch");
  });
});
