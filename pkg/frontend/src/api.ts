/** Typed client for the annotation backend's JSON API. */

import type { Span } from "./spans";

export interface TaskSummary {
  task_id: string;
  image_ref: string;
  prompt: string;
  num_responses: number;
  status: "pending" | "done";
}

export interface TaskDetail {
  task_id: string;
  image_ref: string;
  prompt: string;
  responses: string[];
  status: "pending" | "done";
  annotations: Span[][] | null;
}

export interface Violation {
  response_index: number;
  code: string;
  message: string;
}

export class SubmitRejected extends Error {
  violations: Violation[];
  constructor(violations: Violation[]) {
    super("submission rejected");
    this.violations = violations;
  }
}

export class SubmitConflict extends Error {}

export class ApiClient {
  constructor(private base: string = "") {}

  async pendingTasks(): Promise<TaskSummary[]> {
    const resp = await fetch(`${this.base}/api/tasks?status=pending`);
    if (!resp.ok) {
      throw new Error(`task listing failed: ${resp.status}`);
    }
    return (await resp.json()) as TaskSummary[];
  }

  async task(taskId: string): Promise<TaskDetail> {
    const resp = await fetch(`${this.base}/api/tasks/${encodeURIComponent(taskId)}`);
    if (!resp.ok) {
      throw new Error(`task fetch failed: ${resp.status}`);
    }
    return (await resp.json()) as TaskDetail;
  }

  async submit(taskId: string, annotations: Span[][], overwrite = false): Promise<void> {
    const query = overwrite ? "?overwrite=true" : "";
    const resp = await fetch(
      `${this.base}/api/tasks/${encodeURIComponent(taskId)}/annotations${query}`,
      {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ annotations }),
      },
    );
    if (resp.status === 400) {
      const body = (await resp.json()) as { violations?: Violation[] };
      throw new SubmitRejected(body.violations ?? []);
    }
    if (resp.status === 409) {
      throw new SubmitConflict();
    }
    if (!resp.ok) {
      throw new Error(`submission failed: ${resp.status}`);
    }
  }
}
