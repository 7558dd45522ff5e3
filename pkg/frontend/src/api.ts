/** Typed client for the review-service wire protocol (v1). */

export type TaskKind = "divergence" | "verification" | "conflict";

export interface FieldKeyPayload {
  column: string;
  ordinal: number;
  field: string;
}

export interface TaskPayload {
  version: number;
  task_id: string;
  queue_id: string;
  kind: TaskKind;
  key: FieldKeyPayload;
  value_a: string | null;
  value_b: string | null;
  spans_a: [number, number][];
  spans_b: [number, number][];
  image_url: string | null;
}

export interface QueueSummary {
  queue_id: string;
  total: number;
  completed: number;
  pending: number;
}

export interface ProgressReport {
  version: number;
  queues: Record<string, { total: number; completed: number; pending: number }>;
  stages: Record<string, string>;
  dropped: string[];
}

export interface SubmitAck {
  status: "accepted" | "duplicate";
  task_id: string;
  queue_id: string;
  queue_pending: number;
}

export class ApiError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
    this.name = "ApiError";
  }
}

async function asJson<T>(response: Response): Promise<T> {
  if (!response.ok) {
    let detail = response.statusText;
    try {
      const body = (await response.json()) as { error?: string };
      if (body.error) detail = body.error;
    } catch {
      /* non-JSON error body */
    }
    throw new ApiError(response.status, detail);
  }
  return (await response.json()) as T;
}

export class ApiClient {
  constructor(readonly baseUrl: string = "") {}

  private url(path: string): string {
    return `${this.baseUrl}${path}`;
  }

  async nextTask(
    queueId: string,
    reviewer: string,
    skipTaskId?: string,
  ): Promise<TaskPayload | null> {
    const params = new URLSearchParams({ reviewer });
    if (skipTaskId) params.set("skip", skipTaskId);
    const doc = await asJson<{ task: TaskPayload | null }>(
      await fetch(this.url(`/api/v1/queues/${encodeURIComponent(queueId)}/next?${params}`)),
    );
    return doc.task;
  }

  async submitDecision(taskId: string, reviewer: string, value: string): Promise<SubmitAck> {
    // the value travels byte-identical to what the reviewer typed;
    // normalization is a server concern
    return asJson<SubmitAck>(
      await fetch(this.url("/api/v1/decisions"), {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ task_id: taskId, reviewer_id: reviewer, value }),
      }),
    );
  }

  async progress(): Promise<ProgressReport> {
    return asJson<ProgressReport>(await fetch(this.url("/api/v1/progress")));
  }

  async queues(): Promise<QueueSummary[]> {
    const doc = await asJson<{ queues: QueueSummary[] }>(
      await fetch(this.url("/api/v1/queues")),
    );
    return doc.queues;
  }
}
