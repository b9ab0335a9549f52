/** Headless end-to-end drive of the chat client against a live server. */

import { spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";
import WebSocket from "ws";

import { ChatClient } from "../src/client.js";
import { parseServerMessage } from "../src/protocol.js";

const PORT = 8931;
const BASE = `http://127.0.0.1:${PORT}`;

let server: ChildProcess;

async function waitForHealth(timeoutMs: number): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    try {
      const res = await fetch(`${BASE}/health`);
      if (res.ok) return;
    } catch {
      // not up yet
    }
    await new Promise((r) => setTimeout(r, 250));
  }
  throw new Error("server did not become healthy in time");
}

beforeAll(async () => {
  const dataDir = mkdtempSync(join(tmpdir(), "xpchat-driver-"));
  server = spawn(
    "xp-server",
    ["--data-dir", dataDir, "--bind", `127.0.0.1:${PORT}`, "--group", "b", "--seed", "5"],
    { stdio: "ignore" },
  );
  await waitForHealth(30000);
}, 40000);

afterAll(() => {
  server?.kill();
});

describe("live session", () => {
  it("plays a full scripted conversation to completion", async () => {
    const ws = new WebSocket(`ws://127.0.0.1:${PORT}/ws`);
    const artifactKinds = new Set<string>();
    let turns = 0;
    let followupsTaken = 0;
    const questionBudget = 3;

    const done = new Promise<void>((resolve, reject) => {
      const client = new ChatClient((frame) => {
        turns += 1;
        ws.send(JSON.stringify(frame));
      }, "driver_participant", "B");

      const act = (msgType: string) => {
        switch (msgType) {
          case "menu":
          case "followup_menu": {
            const followup = client.availableFollowups()[0];
            if (followup && followupsTaken < 2) {
              followupsTaken += 1;
              client.chooseFollowup(followup.kind);
            } else if (askedQuestions < questionBudget && client.availableQuestions().length > 0) {
              askedQuestions += 1;
              client.chooseQuestion(client.availableQuestions()[0].id);
            } else {
              client.endExplanation();
            }
            break;
          }
          case "eval_prompt":
            client.answerEval(4);
            break;
          case "questionnaire":
            client.submitQuestionnaire({ es1: 4, es2: 3, es3: 5, es4: 4, es5: 3, es6: 4 });
            break;
          case "free_text_prompt":
            client.submitFreeText("The explanations were specific and easy to follow.");
            break;
          case "bye":
            resolve();
            break;
          case "error":
          case "protocol_error":
          case "version_mismatch":
            reject(new Error(`server refused: ${client.lastError}`));
            break;
        }
      };

      let askedQuestions = 0;
      ws.on("open", () => client.start());
      ws.on("message", (raw: Buffer) => {
        try {
          const msg = parseServerMessage(raw.toString());
          client.handle(msg);
          if (msg.type === "explanation" || msg.type === "annotation") {
            artifactKinds.add(msg.payload.artifact.payload.kind);
          }
          act(msg.type);
        } catch (err) {
          reject(err as Error);
        }
      });
      ws.on("error", (err: Error) => reject(err));

      setTimeout(() => reject(new Error("session did not finish in time")), 45000);
    });

    try {
      await done;
    } finally {
      ws.close();
    }

    // a real back-and-forth: start, 3 questions, followups, evals, close-out
    expect(turns).toBeGreaterThanOrEqual(10);
    expect(artifactKinds.size).toBeGreaterThanOrEqual(3);
    expect(artifactKinds.has("text_annotation")).toBe(true);
  }, 60000);

  it("rejects a stale protocol version", async () => {
    const ws = new WebSocket(`ws://127.0.0.1:${PORT}/ws`);
    const reply = await new Promise<{ type: string }>((resolve, reject) => {
      ws.on("open", () =>
        ws.send(
          JSON.stringify({
            type: "start",
            payload: { proto_version: "99", participant_id: "stale" },
          }),
        ),
      );
      ws.on("message", (raw: Buffer) => resolve(JSON.parse(raw.toString())));
      ws.on("error", (err: Error) => reject(err));
      setTimeout(() => reject(new Error("no reply")), 10000);
    });
    ws.close();
    expect(reply.type).toBe("version_mismatch");
  }, 20000);
});
