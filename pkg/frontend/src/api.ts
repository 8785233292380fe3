/**
 * Thin typed client over the evaluation service's HTTP API.
 * The fetch implementation is injectable so tests can run against a fixture
 * backend without any network.
 */
import {
  ApiErrorSchema,
  ChatReply,
  ChatReplySchema,
  EventPage,
  EventPageSchema,
  Report,
  ReportSchema,
  RunCreated,
  RunCreatedSchema,
  RunState,
  RunStateSchema,
} from "./types.js";

export type FetchLike = (
  url: string,
  init?: RequestInit,
) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
    readonly details: Record<string, unknown> = {},
  ) {
    super(message);
    this.name = "ApiError";
  }
}

async function raiseForStatus(response: Response): Promise<void> {
  if (response.ok) return;
  let code = "unknown_error";
  let message = `HTTP ${response.status}`;
  let details: Record<string, unknown> = {};
  try {
    const parsed = ApiErrorSchema.safeParse(await response.json());
    if (parsed.success) {
      code = parsed.data.code;
      message = parsed.data.message;
      details = parsed.data.details ?? {};
    }
  } catch {
    // non-JSON error body; keep the generic message
  }
  throw new ApiError(response.status, code, message, details);
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchImpl: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async getJson<T>(path: string, parse: (raw: unknown) => T): Promise<T> {
    const response = await this.fetchImpl(this.baseUrl + path);
    await raiseForStatus(response);
    return parse(await response.json());
  }

  async createRun(file: { name: string; content: string | Blob }): Promise<RunCreated> {
    const form = new FormData();
    const blob =
      typeof file.content === "string"
        ? new Blob([file.content], { type: "application/octet-stream" })
        : file.content;
    form.append("file", blob, file.name);
    const response = await this.fetchImpl(`${this.baseUrl}/runs`, {
      method: "POST",
      body: form,
    });
    await raiseForStatus(response);
    return RunCreatedSchema.parse(await response.json());
  }

  getRun(runId: string): Promise<RunState> {
    return this.getJson(`/runs/${runId}`, (raw) => RunStateSchema.parse(raw));
  }

  getEvents(runId: string, cursor = 0): Promise<EventPage> {
    return this.getJson(`/runs/${runId}/events?cursor=${cursor}`, (raw) =>
      EventPageSchema.parse(raw),
    );
  }

  getReport(runId: string): Promise<Report> {
    return this.getJson(`/runs/${runId}/report`, (raw) => ReportSchema.parse(raw));
  }

  async sendChat(
    runId: string,
    message: string,
    sessionId?: string,
  ): Promise<ChatReply> {
    const body: Record<string, string> = { message };
    if (sessionId) body.session_id = sessionId;
    const response = await this.fetchImpl(`${this.baseUrl}/runs/${runId}/chat`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    await raiseForStatus(response);
    return ChatReplySchema.parse(await response.json());
  }
}
