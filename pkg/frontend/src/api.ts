/**
 * Typed client for the triage HTTP API.
 *
 * The UI consumes only these endpoints; everything it displays (including
 * breakdown percentages) comes back from the server verbatim.
 */

export type Category = "data-a" | "data-b" | "llm-c" | "llm-d";

export const CATEGORIES: readonly Category[] = ["data-a", "data-b", "llm-c", "llm-d"];

export const CATEGORY_LABELS: Record<Category, string> = {
  "data-a": "Inappropriate annotation",
  "data-b": "Insufficient context",
  "llm-c": "Wrong moral reasoning",
  "llm-d": "Overestimated risks",
};

export interface Annotation {
  category: Category;
  note: string;
  annotator: string;
  at: string;
}

export interface TriageCase {
  uid: string;
  case_id: string;
  method: string;
  scenario: string;
  scenario_b: string | null;
  statement: string | null;
  gold: string;
  judgment: string;
  raw_token: string;
  analysis_fields: Record<string, string>;
  annotation: Annotation | null;
  history: Annotation[];
}

export interface QueueResponse {
  run_id: string;
  pending: number;
  done: number;
  cases: TriageCase[];
}

export interface Breakdown {
  label: string;
  counts: Record<Category, number>;
  percentages: Record<Category, number>;
}

export interface RunInfo {
  run_id: string;
  queue_size: number;
  pending: number;
  done: number;
}

/** Non-2xx response; carries the HTTP status so callers can branch on 404/422. */
export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

async function asJson<T>(response: Response): Promise<T> {
  if (!response.ok) {
    let detail = `HTTP ${response.status}`;
    try {
      const body = (await response.json()) as { detail?: string };
      if (body.detail) detail = body.detail;
    } catch {
      // keep the status text
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

  async listRuns(): Promise<RunInfo[]> {
    return asJson(await fetch(this.url("/api/runs")));
  }

  async fetchQueue(runId: string, status: "pending" | "done" | "all"): Promise<QueueResponse> {
    const encoded = encodeURIComponent(runId);
    return asJson(await fetch(this.url(`/api/runs/${encoded}/queue?status=${status}`)));
  }

  async submitAnnotation(
    uid: string,
    body: { category: Category; note: string; annotator: string },
  ): Promise<TriageCase> {
    return asJson(
      await fetch(this.url(`/api/cases/${encodeURIComponent(uid)}/annotation`), {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(body),
      }),
    );
  }

  async fetchBreakdown(runId: string): Promise<Breakdown> {
    return asJson(await fetch(this.url(`/api/runs/${encodeURIComponent(runId)}/breakdown`)));
  }
}
