import { describe, expect, it } from "vitest";

import { PendingDecision, SubmitQueue } from "../src/queue.js";

function flaky(failures: number) {
  const delivered: PendingDecision[] = [];
  let remaining = failures;
  const post = async (d: PendingDecision) => {
    if (remaining > 0) {
      remaining -= 1;
      throw new Error("server unreachable");
    }
    delivered.push(d);
  };
  return { post, delivered };
}

const decision = (n: number): PendingDecision => ({
  taskId: `task-${n}`,
  reviewer: "r1",
  value: `value-${n}`,
});

describe("SubmitQueue", () => {
  it("delivers immediately when the server is up", async () => {
    const { post, delivered } = flaky(0);
    const queue = new SubmitQueue(post);
    expect(await queue.push(decision(1))).toBe(true);
    expect(queue.size).toBe(0);
    expect(delivered.map((d) => d.taskId)).toEqual(["task-1"]);
  });

  it("buffers failed decisions and retries them in order", async () => {
    const { post, delivered } = flaky(2);
    const queue = new SubmitQueue(post);
    expect(await queue.push(decision(1))).toBe(false);
    expect(await queue.push(decision(2))).toBe(false);
    expect(queue.size).toBe(2);
    expect(await queue.flush()).toBe(true);
    expect(queue.size).toBe(0);
    expect(delivered.map((d) => d.value)).toEqual(["value-1", "value-2"]);
  });

  it("never drops or reorders under repeated failures", async () => {
    const { post, delivered } = flaky(5);
    const queue = new SubmitQueue(post);
    for (let i = 0; i < 4; i++) await queue.push(decision(i));
    while (!(await queue.flush())) {
      /* keep retrying, as the app's timer would */
    }
    expect(delivered.map((d) => d.taskId)).toEqual([
      "task-0",
      "task-1",
      "task-2",
      "task-3",
    ]);
  });
});
