/** Buffered decision submission: nothing a reviewer typed is ever lost.
 *
 * A submission that fails (server unreachable) is kept in order and
 * retried; the UI surfaces the buffer size while it drains.
 */

export interface PendingDecision {
  taskId: string;
  reviewer: string;
  value: string;
}

export type PostFn = (decision: PendingDecision) => Promise<void>;

export class SubmitQueue {
  private buffer: PendingDecision[] = [];

  constructor(private readonly post: PostFn) {}

  get size(): number {
    return this.buffer.length;
  }

  /** Submit now if possible, otherwise buffer. Returns true if the
   * decision (and any previously buffered ones) reached the server. */
  async push(decision: PendingDecision): Promise<boolean> {
    this.buffer.push(decision);
    return (await this.flush()) && this.buffer.length === 0;
  }

  /** Retry buffered decisions in order; stops at the first failure so
   * ordering is preserved. Returns true when the buffer fully drained. */
  async flush(): Promise<boolean> {
    while (this.buffer.length > 0) {
      const head = this.buffer[0]!;
      try {
        await this.post(head);
      } catch {
        return false;
      }
      this.buffer.shift();
    }
    return true;
  }
}
