/**
 * Cursor-based progress polling. The poller owns no timers of its own beyond
 * an injectable sleep, so tests can drive it to completion synchronously.
 */
import { ApiClient } from "./api.js";
import { ProgressEvent } from "./types.js";

export interface TaskProgress {
  taskId: string;
  state: "running" | "retrying" | "done" | "failed";
}

export interface ProgressSnapshot {
  runState: string;
  tasks: Map<string, TaskProgress>;
  done: number;
  failed: number;
}

export type SleepFn = (ms: number) => Promise<void>;

const defaultSleep: SleepFn = (ms) => new Promise((r) => setTimeout(r, ms));

export class ProgressPoller {
  private cursor = 0;
  private readonly tasks = new Map<string, TaskProgress>();

  constructor(
    private readonly api: ApiClient,
    private readonly runId: string,
    private readonly intervalMs = 500,
    private readonly sleep: SleepFn = defaultSleep,
  ) {}

  applyEvents(events: ProgressEvent[]): void {
    for (const event of events) {
      this.tasks.set(event.task_id, { taskId: event.task_id, state: event.state });
      if (event.seq > this.cursor) this.cursor = event.seq;
    }
  }

  snapshot(runState: string): ProgressSnapshot {
    let done = 0;
    let failed = 0;
    for (const task of this.tasks.values()) {
      if (task.state === "done") done += 1;
      if (task.state === "failed") failed += 1;
    }
    return { runState, tasks: new Map(this.tasks), done, failed };
  }

  /** One poll step: fetch new events past the cursor plus the run state. */
  async step(): Promise<ProgressSnapshot> {
    const page = await this.api.getEvents(this.runId, this.cursor);
    this.applyEvents(page.events);
    const run = await this.api.getRun(this.runId);
    return this.snapshot(run.state);
  }

  /** Poll until the run reaches a terminal state, reporting each snapshot. */
  async run(onUpdate: (snapshot: ProgressSnapshot) => void): Promise<ProgressSnapshot> {
    for (;;) {
      const snapshot = await this.step();
      onUpdate(snapshot);
      if (snapshot.runState === "complete" || snapshot.runState === "failed") {
        return snapshot;
      }
      await this.sleep(this.intervalMs);
    }
  }
}

export function renderProgress(snapshot: ProgressSnapshot, total = 27): string {
  const settled = snapshot.done + snapshot.failed;
  const pct = Math.round((settled / total) * 100);
  const failed = snapshot.failed
    ? ` <span class="badge badge-failed">${snapshot.failed} failed</span>`
    : "";
  return `<div class="progress" data-state="${snapshot.runState}">
  <div class="progress-bar"><div class="progress-fill" style="width:${pct}%"></div></div>
  <span class="progress-label">${settled} / ${total} items — ${snapshot.runState}</span>${failed}
</div>`;
}
