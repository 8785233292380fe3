import { describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import {
  AppView,
  formatHash,
  parseHash,
  restoreFromHash,
  runEvaluationFlow,
} from "../src/app.js";
import { ChatController } from "../src/chat.js";
import { FixtureBackend } from "./fixture-backend.js";

const noSleep = async () => {};

function makeView() {
  const state = { progress: "", report: "", chat: "", error: "", hash: "" };
  const progressFrames: string[] = [];
  const view: AppView = {
    setProgress: (html) => {
      state.progress = html;
      progressFrames.push(html);
    },
    setReport: (html) => (state.report = html),
    setChat: (html) => (state.chat = html),
    setError: (message) => (state.error = message),
    setHash: (hash) => (state.hash = hash),
  };
  return { view, state, progressFrames };
}

describe("hash state", () => {
  it("round-trips run and session ids", () => {
    const hash = formatHash({ runId: "run-1", sessionId: "session-2" });
    expect(parseHash(hash)).toEqual({ runId: "run-1", sessionId: "session-2" });
    expect(parseHash("")).toEqual({ runId: undefined, sessionId: undefined });
  });
});

describe("upload → progress → report flow", () => {
  it("renders staged progress then the full report", async () => {
    const backend = new FixtureBackend();
    const api = new ApiClient("", backend.fetch);
    const { view, state, progressFrames } = makeView();

    const runId = await runEvaluationFlow(
      api,
      view,
      { name: "doc.json", content: "{}" },
      0,
      noSleep,
    );
    expect(runId).toBe("run-1");
    expect(state.hash).toBe("#run=run-1");
    expect(progressFrames.length).toBeGreaterThan(1);
    expect(state.progress).toContain("27 / 27 items");
    expect((state.report.match(/data-item-id=/g) ?? []).length).toBe(27);
    expect((state.report.match(/data-society=/g) ?? []).length).toBe(6);
    expect(state.error).toBe("");
  });

  it("reports upload rejection without starting a poll", async () => {
    const backend = new FixtureBackend();
    const failingFetch: typeof backend.fetch = async (url, init) => {
      if (init?.method === "POST") {
        return new Response(
          JSON.stringify({ code: "empty_document", message: "uploaded file is empty" }),
          { status: 400 },
        );
      }
      return backend.fetch(url, init);
    };
    const api = new ApiClient("", failingFetch);
    const { view, state } = makeView();
    const runId = await runEvaluationFlow(api, view, { name: "d.json", content: "" }, 0, noSleep);
    expect(runId).toBeUndefined();
    expect(state.error).toContain("empty");
    expect(state.report).toBe("");
  });
});

describe("hard reload reconstruction", () => {
  it("rebuilds report and chat views purely from server state", async () => {
    const backend = new FixtureBackend();
    const api = new ApiClient("", backend.fetch);

    // first page load: run a full evaluation and a chat turn
    const first = makeView();
    const runId = (await runEvaluationFlow(
      api,
      first.view,
      { name: "doc.json", content: "{}" },
      0,
      noSleep,
    ))!;
    const chat = new ChatController(api, runId);
    await chat.send("seed the session");
    const hash = formatHash({ runId, sessionId: chat.sessionId });

    // simulated reload: fresh view + fresh client, state only from the hash
    const second = makeView();
    const restored = await restoreFromHash(
      new ApiClient("", backend.fetch),
      second.view,
      hash,
      0,
      noSleep,
    );
    expect(restored).toBeDefined();
    expect(restored!.sessionId).toBe(chat.sessionId);
    expect((second.state.report.match(/data-item-id=/g) ?? []).length).toBe(27);
    expect(second.state.progress).toContain("complete");

    // the restored controller continues the same server-side session
    await restored!.send("continue after reload");
    const reply = restored!.turns[restored!.turns.length - 1]!;
    expect(reply.role).toBe("assistant");
    expect(reply.text).toContain("reply 2");
  });

  it("surfaces an unknown run id from the hash as an error", async () => {
    const backend = new FixtureBackend();
    const { view, state } = makeView();
    const restored = await restoreFromHash(
      new ApiClient("", backend.fetch),
      view,
      "#run=ghost",
      0,
      noSleep,
    ).catch(() => undefined);
    expect(restored).toBeUndefined();
    expect(state.report).toBe("");
  });
});
