import { describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { ProgressPoller, renderProgress } from "../src/progress.js";
import { FixtureBackend } from "./fixture-backend.js";

const noSleep = async () => {};

describe("ProgressPoller", () => {
  it("accumulates task states across polls until the run completes", async () => {
    const backend = new FixtureBackend();
    const api = new ApiClient("", backend.fetch);
    const { run_id } = await api.createRun({ name: "d.json", content: "{}" });

    const poller = new ProgressPoller(api, run_id, 0, noSleep);
    const snapshots: number[] = [];
    const final = await poller.run((s) => snapshots.push(s.done));
    expect(final.runState).toBe("complete");
    expect(final.done).toBe(27);
    expect(final.failed).toBe(0);
    // progress is monotone and took more than one poll
    expect(snapshots.length).toBeGreaterThan(1);
    expect([...snapshots].sort((a, b) => a - b)).toEqual(snapshots);
  });

  it("later events override earlier ones per task", async () => {
    const backend = new FixtureBackend();
    const api = new ApiClient("", backend.fetch);
    const { run_id } = await api.createRun({ name: "d.json", content: "{}" });
    const poller = new ProgressPoller(api, run_id, 0, noSleep);
    const final = await poller.run(() => {});
    for (const task of final.tasks.values()) {
      expect(task.state).toBe("done");
    }
    expect(final.tasks.size).toBe(27);
  });

  it("does not refetch events before the cursor", async () => {
    const backend = new FixtureBackend();
    const api = new ApiClient("", backend.fetch);
    const { run_id } = await api.createRun({ name: "d.json", content: "{}" });
    const poller = new ProgressPoller(api, run_id, 0, noSleep);
    await poller.run(() => {});
    const cursors = backend.requestLog
      .filter((line) => line.includes("/events"))
      .map((line) => Number(line.match(/cursor=(\d+)/)?.[1] ?? -1));
    expect([...cursors].sort((a, b) => a - b)).toEqual(cursors);
    expect(new Set(cursors).size).toBe(cursors.length);
  });
});

describe("renderProgress", () => {
  it("renders counts, state, and percentage width", () => {
    const html = renderProgress(
      {
        runState: "evaluating",
        tasks: new Map(),
        done: 9,
        failed: 0,
      },
      27,
    );
    expect(html).toContain("9 / 27 items");
    expect(html).toContain('data-state="evaluating"');
    expect(html).toContain("width:33%");
  });

  it("shows a failure badge when items failed", () => {
    const html = renderProgress(
      { runState: "complete", tasks: new Map(), done: 26, failed: 1 },
      27,
    );
    expect(html).toContain("1 failed");
  });
});
