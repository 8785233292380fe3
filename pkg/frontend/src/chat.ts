/**
 * Chat panel state: one session per run, at most one message in flight.
 * Rendering is string-based like the report module.
 */
import { ApiClient, ApiError } from "./api.js";
import { escapeHtml } from "./report.js";

export interface ChatTurn {
  role: "user" | "assistant" | "error";
  text: string;
}

export class ChatController {
  sessionId: string | undefined;
  readonly turns: ChatTurn[] = [];
  private inFlight = false;

  constructor(
    private readonly api: ApiClient,
    private readonly runId: string,
  ) {}

  get busy(): boolean {
    return this.inFlight;
  }

  /**
   * Send one message. Returns false without side effects when a message is
   * already in flight or the input is blank.
   */
  async send(message: string): Promise<boolean> {
    const trimmed = message.trim();
    if (!trimmed || this.inFlight) return false;
    this.inFlight = true;
    this.turns.push({ role: "user", text: trimmed });
    try {
      const reply = await this.api.sendChat(this.runId, trimmed, this.sessionId);
      this.sessionId = reply.session_id;
      this.turns.push({ role: "assistant", text: reply.reply });
      return true;
    } catch (error) {
      const text =
        error instanceof ApiError
          ? `${error.code}: ${error.message}`
          : String(error);
      this.turns.push({ role: "error", text });
      return false;
    } finally {
      this.inFlight = false;
    }
  }
}

export function renderChat(controller: ChatController): string {
  const turns = controller.turns
    .map(
      (turn) =>
        `<div class="turn turn-${turn.role}">${escapeHtml(turn.text)}</div>`,
    )
    .join("\n");
  const sending = controller.busy
    ? `<div class="turn turn-pending">…</div>`
    : "";
  return `<div class="chat">
${turns}
${sending}
</div>`;
}
