/**
 * Page shell wiring the upload form, progress bar, report view, and chat
 * panel together. State is kept in the URL hash (#run=<id>&session=<id>) so a
 * hard reload reconstructs both views from server state alone.
 */
import { ApiClient, ApiError } from "./api.js";
import { ChatController, renderChat } from "./chat.js";
import { ProgressPoller, renderProgress } from "./progress.js";
import { renderReport } from "./report.js";

export interface AppHash {
  runId?: string;
  sessionId?: string;
}

export function parseHash(hash: string): AppHash {
  const params = new URLSearchParams(hash.replace(/^#/, ""));
  return {
    runId: params.get("run") ?? undefined,
    sessionId: params.get("session") ?? undefined,
  };
}

export function formatHash(state: AppHash): string {
  const params = new URLSearchParams();
  if (state.runId) params.set("run", state.runId);
  if (state.sessionId) params.set("session", state.sessionId);
  const encoded = params.toString();
  return encoded ? `#${encoded}` : "";
}

export interface AppView {
  setProgress(html: string): void;
  setReport(html: string): void;
  setChat(html: string): void;
  setError(message: string): void;
  setHash(hash: string): void;
}

/** Upload a document, follow its progress, and render the final report. */
export async function runEvaluationFlow(
  api: ApiClient,
  view: AppView,
  file: { name: string; content: string | Blob },
  pollIntervalMs = 500,
  sleep?: (ms: number) => Promise<void>,
): Promise<string | undefined> {
  let runId: string;
  try {
    const created = await api.createRun(file);
    runId = created.run_id;
  } catch (error) {
    view.setError(error instanceof ApiError ? error.message : String(error));
    return undefined;
  }
  view.setHash(formatHash({ runId }));
  const poller = new ProgressPoller(api, runId, pollIntervalMs, sleep);
  const final = await poller.run((snapshot) =>
    view.setProgress(renderProgress(snapshot)),
  );
  if (final.runState === "failed") {
    view.setError(`run ${runId} failed`);
    return runId;
  }
  view.setReport(renderReport(await api.getReport(runId)));
  return runId;
}

/** Rebuild progress + report + chat views for an existing run after reload. */
export async function restoreFromHash(
  api: ApiClient,
  view: AppView,
  hash: string,
  pollIntervalMs = 500,
  sleep?: (ms: number) => Promise<void>,
): Promise<ChatController | undefined> {
  const { runId, sessionId } = parseHash(hash);
  if (!runId) return undefined;
  const poller = new ProgressPoller(api, runId, pollIntervalMs, sleep);
  const final = await poller.run((snapshot) =>
    view.setProgress(renderProgress(snapshot)),
  );
  if (final.runState !== "complete") {
    view.setError(`run ${runId} is in state ${final.runState}`);
    return undefined;
  }
  view.setReport(renderReport(await api.getReport(runId)));
  const chat = new ChatController(api, runId);
  chat.sessionId = sessionId;
  view.setChat(renderChat(chat));
  return chat;
}

/** Browser entry point; a no-op under node so tests can import this module. */
export function mount(): void {
  if (typeof document === "undefined") return;
  const api = new ApiClient("");
  const byId = (id: string) => document.getElementById(id)!;
  const view: AppView = {
    setProgress: (html) => (byId("progress").innerHTML = html),
    setReport: (html) => (byId("report").innerHTML = html),
    setChat: (html) => (byId("chat-log").innerHTML = html),
    setError: (message) => (byId("error").textContent = message),
    setHash: (hash) => history.replaceState(null, "", hash || "#"),
  };

  let chat: ChatController | undefined;

  const form = byId("upload-form") as HTMLFormElement;
  form.addEventListener("submit", async (event) => {
    event.preventDefault();
    const input = byId("file-input") as HTMLInputElement;
    const file = input.files?.[0];
    if (!file) return;
    const runId = await runEvaluationFlow(api, view, {
      name: file.name,
      content: file,
    });
    if (runId) {
      chat = new ChatController(api, runId);
      view.setChat(renderChat(chat));
    }
  });

  const chatForm = byId("chat-form") as HTMLFormElement;
  chatForm.addEventListener("submit", async (event) => {
    event.preventDefault();
    if (!chat) return;
    const input = byId("chat-input") as HTMLInputElement;
    const message = input.value;
    input.value = "";
    view.setChat(renderChat(chat));
    await chat.send(message);
    const { runId } = parseHash(location.hash);
    view.setHash(formatHash({ runId, sessionId: chat.sessionId }));
    view.setChat(renderChat(chat));
  });

  void restoreFromHash(api, view, location.hash).then((restored) => {
    if (restored) chat = restored;
  });
}

mount();
