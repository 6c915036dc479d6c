/**
 * In-memory stand-in for the triage API, installed as a fetch mock so the
 * UI can be developed and tested with no core build present.
 *
 * Percentages returned here are whatever the test configured; the fixture
 * never recomputes them from counts, which is exactly what lets tests prove
 * the UI renders server values verbatim.
 */

import { Annotation, Breakdown, Category, TriageCase } from "../src/api.js";

export const CATEGORY_LIST: Category[] = ["data-a", "data-b", "llm-c", "llm-d"];

export function makeCase(uid: string, overrides: Partial<TriageCase> = {}): TriageCase {
  return {
    uid,
    case_id: uid,
    method: "tdm-gen",
    scenario: `scenario for ${uid}`,
    scenario_b: null,
    statement: null,
    gold: "not_wrong",
    judgment: "wrong",
    raw_token: "1",
    analysis_fields: {
      "Violation of norms": "mock norms analysis",
      "Negative affects": "mock affect analysis",
      "Perceived harm": "mock harm analysis",
    },
    annotation: null,
    history: [],
    ...overrides,
  };
}

export class FixtureServer {
  cases: TriageCase[];
  annotations = new Map<string, Annotation>();
  requests: string[] = [];
  failNetwork = false;
  rejectCategory: string | null = null;
  /** Server-side percentages handed back verbatim (no recomputation). */
  percentages: Record<Category, number> = { "data-a": 0, "data-b": 0, "llm-c": 0, "llm-d": 0 };

  constructor(
    public runId = "fixture-run",
    caseCount = 5,
  ) {
    this.cases = Array.from({ length: caseCount }, (_, i) => makeCase(`fx:${i}`));
  }

  counts(): Record<Category, number> {
    const counts: Record<Category, number> = { "data-a": 0, "data-b": 0, "llm-c": 0, "llm-d": 0 };
    for (const annotation of this.annotations.values()) counts[annotation.category] += 1;
    return counts;
  }

  breakdown(): Breakdown {
    return { label: this.runId, counts: this.counts(), percentages: { ...this.percentages } };
  }

  private withAnnotations(tc: TriageCase): TriageCase {
    const annotation = this.annotations.get(tc.uid) ?? null;
    return { ...tc, annotation, history: annotation ? [annotation] : [] };
  }

  install(): void {
    globalThis.fetch = (async (input: RequestInfo | URL, init?: RequestInit) => {
      const url = typeof input === "string" ? input : input.toString();
      this.requests.push(`${init?.method ?? "GET"} ${url}`);
      if (this.failNetwork) throw new TypeError("fetch failed (fixture network down)");

      if (url.endsWith("/api/runs")) {
        const done = this.annotations.size;
        return Response.json([
          {
            run_id: this.runId,
            queue_size: this.cases.length,
            pending: this.cases.length - done,
            done,
          },
        ]);
      }
      const queueMatch = url.match(/\/api\/runs\/([^/]+)\/queue\?status=(\w+)/);
      if (queueMatch) {
        const merged = this.cases.map((c) => this.withAnnotations(c));
        const pending = merged.filter((c) => c.annotation === null);
        const done = merged.filter((c) => c.annotation !== null);
        const status = queueMatch[2] as "pending" | "done" | "all";
        const selected = status === "pending" ? pending : status === "done" ? done : merged;
        return Response.json({
          run_id: this.runId,
          pending: pending.length,
          done: done.length,
          cases: selected,
        });
      }
      if (url.includes("/breakdown")) {
        return Response.json(this.breakdown());
      }
      const annotateMatch = url.match(/\/api\/cases\/([^/]+)\/annotation/);
      if (annotateMatch && init?.method === "POST") {
        const uid = decodeURIComponent(annotateMatch[1] ?? "");
        const body = JSON.parse(String(init.body)) as Annotation;
        if (this.rejectCategory !== null && body.category === this.rejectCategory) {
          return Response.json({ detail: `unknown error category '${body.category}'` }, { status: 422 });
        }
        const target = this.cases.find((c) => c.uid === uid);
        if (!target) {
          return Response.json({ detail: `no triage case '${uid}' in any run` }, { status: 404 });
        }
        this.annotations.set(uid, { ...body, at: new Date().toISOString() });
        return Response.json(this.withAnnotations(target));
      }
      return Response.json({ detail: `unhandled fixture url ${url}` }, { status: 500 });
    }) as typeof fetch;
  }
}
