/** Review client: side-by-side values with highlighted differences, the
 * column image, and a correction field. Keyboard-first: per-task latency
 * dominates total reviewer cost at thousands of tasks.
 *
 *   a      accept value A        b     accept value B
 *   e      focus the editor      Enter submit the typed value
 *   s      skip (re-queued)      0     confirm "field is empty"
 */

import { ApiClient, ApiError, TaskPayload } from "./api.js";
import { segmentsFor } from "./diff.js";
import { SubmitQueue } from "./queue.js";

const KIND_BANNERS: Record<string, string> = {
  verification: "verification sample: confirm or correct the auto-accepted value",
  conflict: "cross-system conflict: final reviewer decision",
};

export function validatePayload(task: unknown): string | null {
  if (typeof task !== "object" || task === null) return "task payload is not an object";
  const t = task as Partial<TaskPayload>;
  if (typeof t.task_id !== "string" || !t.task_id) return "missing task_id";
  if (typeof t.kind !== "string") return "missing kind";
  if (t.value_a === undefined || t.value_b === undefined) return "missing values";
  if (t.value_a === null && t.value_b === null) return "both values absent";
  if (!Array.isArray(t.spans_a) || !Array.isArray(t.spans_b)) return "missing diff spans";
  return null;
}

function el<K extends keyof HTMLElementTagNameMap>(
  doc: Document,
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = doc.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function renderValue(
  doc: Document,
  label: string,
  value: string | null,
  spans: [number, number][],
): HTMLElement {
  const panel = el(doc, "div", "value-panel");
  panel.appendChild(el(doc, "div", "value-label", label));
  if (value === null) {
    const missing = el(doc, "div", "value-missing", "(missing)");
    missing.setAttribute("data-missing", "true");
    panel.appendChild(missing);
    return panel;
  }
  const body = el(doc, "div", "value-text");
  for (const segment of segmentsFor(value, spans)) {
    if (segment.highlighted) {
      body.appendChild(el(doc, "mark", "diff", segment.text));
    } else {
      body.appendChild(doc.createTextNode(segment.text));
    }
  }
  if (value.length === 0) body.appendChild(el(doc, "span", "value-empty", "(empty)"));
  panel.appendChild(body);
  return panel;
}

/** Render one task into the container. Returns false when the payload is
 * malformed, in which case an error banner is shown and no submission is
 * possible. */
export function renderTask(container: HTMLElement, task: TaskPayload | null): boolean {
  const doc = container.ownerDocument;
  container.replaceChildren();
  if (task === null) {
    container.appendChild(el(doc, "div", "all-done", "queue empty — nothing to review"));
    return false;
  }
  const problem = validatePayload(task);
  if (problem !== null) {
    const banner = el(doc, "div", "banner error", `malformed task payload: ${problem}`);
    banner.setAttribute("data-error", "true");
    container.appendChild(banner);
    return false;
  }

  const banner = KIND_BANNERS[task.kind];
  if (banner) container.appendChild(el(doc, "div", `banner ${task.kind}`, banner));

  const meta = `${task.key.column} · entry ${task.key.ordinal} · ${task.key.field}`;
  container.appendChild(el(doc, "div", "task-meta", meta));

  if (task.image_url) {
    const figure = el(doc, "div", "image-panel");
    const img = el(doc, "img");
    img.src = task.image_url;
    img.alt = `column image for ${task.key.column}`;
    figure.appendChild(img);
    container.appendChild(figure);
  }

  const values = el(doc, "div", "values");
  values.appendChild(renderValue(doc, "A", task.value_a, task.spans_a));
  values.appendChild(renderValue(doc, "B", task.value_b, task.spans_b));
  container.appendChild(values);

  const editor = el(doc, "div", "editor");
  const input = el(doc, "input", "correction");
  input.id = "correction";
  // prefilled with value A (fixed choice; both accept shortcuts are equally
  // prominent so the prefill does not anchor the reviewer); never auto-submits
  input.value = task.value_a ?? "";
  editor.appendChild(input);
  container.appendChild(editor);
  return true;
}

export interface AppOptions {
  queueId: string;
  reviewer: string;
  client?: ApiClient;
  retryMs?: number;
}

export class ReviewApp {
  readonly client: ApiClient;
  private task: TaskPayload | null = null;
  private submittable = false;
  private readonly queue: SubmitQueue;
  private retryTimer: ReturnType<typeof setInterval> | null = null;
  private keyHandler: ((event: KeyboardEvent) => void) | null = null;

  constructor(
    private readonly root: HTMLElement,
    private readonly options: AppOptions,
  ) {
    this.client = options.client ?? new ApiClient("");
    this.queue = new SubmitQueue(async (d) => {
      await this.client.submitDecision(d.taskId, d.reviewer, d.value);
    });
  }

  private get doc(): Document {
    return this.root.ownerDocument;
  }

  private byId(id: string): HTMLElement {
    const node = this.doc.getElementById(id);
    if (!node) throw new Error(`missing #${id} in page shell`);
    return node;
  }

  async start(): Promise<void> {
    this.keyHandler = (event) => this.onKey(event);
    this.doc.addEventListener("keydown", this.keyHandler);
    const form = this.byId("controls");
    form.addEventListener("click", (event) => {
      const target = event.target as HTMLElement;
      const action = target.getAttribute("data-action");
      if (action) void this.onAction(action);
    });
    await this.refreshProgress();
    await this.advance();
  }

  /** Detach document-level listeners and timers (tab teardown, tests). */
  stop(): void {
    if (this.keyHandler) {
      this.doc.removeEventListener("keydown", this.keyHandler);
      this.keyHandler = null;
    }
    if (this.retryTimer !== null) {
      clearInterval(this.retryTimer);
      this.retryTimer = null;
    }
  }

  private setStatus(text: string, kind: "ok" | "warn" = "ok"): void {
    const status = this.byId("status");
    status.textContent = text;
    status.className = `status ${kind}`;
  }

  private async refreshProgress(): Promise<void> {
    try {
      const progress = await this.client.progress();
      const queue = progress.queues[this.options.queueId];
      if (queue) {
        this.byId("progress").textContent =
          `${queue.completed} / ${queue.total} done · ${queue.pending} pending`;
      }
    } catch {
      /* progress is cosmetic; never blocks reviewing */
    }
  }

  private async advance(skipTaskId?: string): Promise<void> {
    try {
      this.task = await this.client.nextTask(
        this.options.queueId,
        this.options.reviewer,
        skipTaskId,
      );
    } catch (error) {
      this.setStatus(`cannot reach service: ${(error as Error).message}`, "warn");
      return;
    }
    this.submittable = renderTask(this.byId("task"), this.task);
    if (this.task && this.submittable) this.setStatus("ready");
    if (!this.task) this.setStatus("queue empty");
  }

  private correctionInput(): HTMLInputElement {
    return this.byId("correction") as HTMLInputElement;
  }

  private async submitValue(value: string): Promise<void> {
    if (!this.task || !this.submittable) return;
    const decision = {
      taskId: this.task.task_id,
      reviewer: this.options.reviewer,
      value,
    };
    const delivered = await this.queue.push(decision);
    if (!delivered) {
      this.setStatus(`offline — ${this.queue.size} decision(s) queued, retrying`, "warn");
      this.armRetry();
      return;
    }
    await this.refreshProgress();
    await this.advance();
  }

  private armRetry(): void {
    if (this.retryTimer !== null) return;
    this.retryTimer = setInterval(async () => {
      if (await this.queue.flush()) {
        if (this.retryTimer !== null) clearInterval(this.retryTimer);
        this.retryTimer = null;
        this.setStatus("reconnected, queue drained");
        await this.refreshProgress();
        await this.advance();
      }
    }, this.options.retryMs ?? 2000);
  }

  private async onAction(action: string): Promise<void> {
    if (!this.task) return;
    switch (action) {
      case "accept-a":
        if (this.task.value_a !== null) await this.submitValue(this.task.value_a);
        break;
      case "accept-b":
        if (this.task.value_b !== null) await this.submitValue(this.task.value_b);
        break;
      case "submit": {
        const typed = this.correctionInput().value;
        if (typed === "") {
          this.setStatus("empty value: use “mark empty” to confirm", "warn");
          break;
        }
        await this.submitValue(typed);
        break;
      }
      case "mark-empty":
        await this.submitValue("");
        break;
      case "skip":
        await this.advance(this.task.task_id);
        break;
      default:
        break;
    }
  }

  private onKey(event: KeyboardEvent): void {
    const editing = this.doc.activeElement === this.correctionInput();
    if (editing && event.key !== "Enter" && event.key !== "Escape") return;
    const actions: Record<string, string> = {
      a: "accept-a",
      b: "accept-b",
      s: "skip",
      "0": "mark-empty",
      Enter: "submit",
    };
    if (event.key === "e" && !editing) {
      event.preventDefault();
      this.correctionInput().focus();
      return;
    }
    if (event.key === "Escape" && editing) {
      (this.doc.activeElement as HTMLElement).blur();
      return;
    }
    const action = actions[event.key];
    if (action) {
      event.preventDefault();
      void this.onAction(action);
    }
  }
}

export function startApp(doc: Document): ReviewApp {
  const params = new URLSearchParams(doc.defaultView?.location.search ?? "");
  const app = new ReviewApp(doc.getElementById("app") as HTMLElement, {
    queueId: params.get("queue") ?? "jury-a",
    reviewer: params.get("reviewer") ?? "anonymous",
  });
  void app.start();
  return app;
}
