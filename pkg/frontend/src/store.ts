/**
 * Application state and the transitions the UI performs.
 *
 * Annotations are never persisted client-side: the queue and breakdown are
 * whatever the server last said, plus an optimistic count bump that is
 * reconciled against GET /breakdown right after each successful submit.
 */

import {
  ApiClient,
  ApiError,
  Breakdown,
  CATEGORIES,
  Category,
  QueueResponse,
  RunInfo,
  TriageCase,
} from "./api.js";

export type Filter = "pending" | "done";

export interface StoreState {
  runs: RunInfo[];
  runId: string | null;
  filter: Filter;
  pending: TriageCase[];
  done: TriageCase[];
  pendingCount: number;
  doneCount: number;
  breakdown: Breakdown | null;
  /** Local count bump shown between a 200 and the breakdown reconcile. */
  optimisticCounts: Record<Category, number> | null;
  note: string;
  selectedCategory: Category | null;
  annotator: string;
  /** Network-failure banner; a retry re-runs the failed load, no state lost. */
  banner: string | null;
  /** 404/422 and validation errors surfaced next to the form. */
  inlineError: string | null;
  loading: boolean;
}

export const KEY_TO_CATEGORY: Record<string, Category> = {
  "1": "data-a",
  "2": "data-b",
  "3": "llm-c",
  "4": "llm-d",
};

type Listener = (state: StoreState) => void;

export class Store {
  state: StoreState;
  private listeners: Listener[] = [];
  private inFlight = 0;
  private idleWaiters: (() => void)[] = [];

  constructor(private api: ApiClient) {
    this.state = {
      runs: [],
      runId: null,
      filter: "pending",
      pending: [],
      done: [],
      pendingCount: 0,
      doneCount: 0,
      breakdown: null,
      optimisticCounts: null,
      note: "",
      selectedCategory: null,
      annotator: "",
      banner: null,
      inlineError: null,
      loading: false,
    };
  }

  subscribe(listener: Listener): void {
    this.listeners.push(listener);
  }

  private emit(): void {
    for (const listener of this.listeners) listener(this.state);
  }

  /** Resolves once no request is in flight; test synchronization hook. */
  whenIdle(): Promise<void> {
    if (this.inFlight === 0) return Promise.resolve();
    return new Promise((resolve) => this.idleWaiters.push(resolve));
  }

  private async track<T>(work: Promise<T>): Promise<T> {
    this.inFlight += 1;
    try {
      return await work;
    } finally {
      this.inFlight -= 1;
      if (this.inFlight === 0) {
        const waiters = this.idleWaiters.splice(0);
        for (const resolve of waiters) resolve();
      }
    }
  }

  get current(): TriageCase | null {
    return this.state.filter === "pending" ? (this.state.pending[0] ?? null) : null;
  }

  init(): Promise<void> {
    return this.track(this.initInner());
  }

  private async initInner(): Promise<void> {
    this.state.loading = true;
    this.emit();
    try {
      const runs = await this.api.listRuns();
      this.state.runs = runs;
      this.state.banner = null;
      const first = runs[0];
      if (this.state.runId === null && first !== undefined) {
        await this.openRunInner(first.run_id, "pending");
        return;
      }
    } catch {
      this.state.banner = "Could not reach the server.";
    }
    this.state.loading = false;
    this.emit();
  }

  openRun(runId: string, filter: Filter = "pending"): Promise<void> {
    return this.track(this.openRunInner(runId, filter));
  }

  private async openRunInner(runId: string, filter: Filter): Promise<void> {
    this.state.loading = true;
    this.emit();
    try {
      const [queue, breakdown] = await Promise.all([
        this.api.fetchQueue(runId, "all"),
        this.api.fetchBreakdown(runId),
      ]);
      this.applyQueue(runId, queue, breakdown);
      this.state.filter = filter;
      this.state.banner = null;
      this.state.inlineError = null;
    } catch {
      // retry banner; whatever was on screen stays on screen
      this.state.banner = "Could not load the queue. Check the server and retry.";
    }
    this.state.loading = false;
    this.emit();
  }

  private applyQueue(runId: string, queue: QueueResponse, breakdown: Breakdown): void {
    this.state.runId = runId;
    this.state.pending = queue.cases.filter((c) => c.annotation === null);
    this.state.done = queue.cases.filter((c) => c.annotation !== null);
    this.state.pendingCount = queue.pending;
    this.state.doneCount = queue.done;
    this.state.breakdown = breakdown;
    this.state.optimisticCounts = null;
  }

  setFilter(filter: Filter): void {
    this.state.filter = filter;
    this.state.inlineError = null;
    this.emit();
  }

  setNote(note: string): void {
    this.state.note = note;
  }

  setAnnotator(annotator: string): void {
    this.state.annotator = annotator;
  }

  selectCategory(category: Category): void {
    this.state.selectedCategory = category;
    this.state.inlineError = null;
    this.emit();
  }

  /** Keyboard shortcut: select the category and submit in one stroke. */
  async keyPressed(key: string): Promise<void> {
    const category = KEY_TO_CATEGORY[key];
    if (!category || this.state.filter !== "pending" || this.state.loading) return;
    if (this.current === null) return;
    this.state.selectedCategory = category;
    await this.submit();
  }

  submit(): Promise<void> {
    return this.track(this.submitInner());
  }

  private async submitInner(): Promise<void> {
    const target = this.current;
    const category = this.state.selectedCategory;
    if (target === null) return;
    if (category === null) {
      this.state.inlineError = "Select an error category (1-4) before submitting.";
      this.emit();
      return;
    }
    try {
      const updated = await this.api.submitAnnotation(target.uid, {
        category,
        note: this.state.note,
        annotator: this.state.annotator || "anonymous",
      });
      this.state.pending = this.state.pending.filter((c) => c.uid !== target.uid);
      this.state.done = [...this.state.done, updated];
      this.state.pendingCount -= 1;
      this.state.doneCount += 1;
      this.bumpOptimistic(category);
      this.state.note = "";
      this.state.selectedCategory = null;
      this.state.inlineError = null;
      this.emit();
      await this.reconcileBreakdown();
    } catch (error) {
      if (error instanceof ApiError) {
        // surface inline; the case is not skipped and the selection stays
        this.state.inlineError = `${error.status}: ${error.message}`;
      } else {
        this.state.banner = "Network failure while submitting; nothing was lost. Retry.";
      }
      this.emit();
    }
  }

  private bumpOptimistic(category: Category): void {
    const base: Record<Category, number> = {
      "data-a": 0,
      "data-b": 0,
      "llm-c": 0,
      "llm-d": 0,
    };
    for (const c of CATEGORIES) {
      base[c] = this.state.optimisticCounts?.[c] ?? this.state.breakdown?.counts[c] ?? 0;
    }
    base[category] += 1;
    this.state.optimisticCounts = base;
  }

  private async reconcileBreakdown(): Promise<void> {
    if (this.state.runId === null) return;
    try {
      const breakdown = await this.api.fetchBreakdown(this.state.runId);
      this.state.breakdown = breakdown;
      this.state.optimisticCounts = null;
    } catch {
      this.state.banner = "Annotation saved; breakdown refresh failed. Retry.";
    }
    this.emit();
  }

  async retry(): Promise<void> {
    this.state.banner = null;
    if (this.state.runId !== null) {
      await this.openRun(this.state.runId, this.state.filter);
    } else {
      await this.init();
    }
  }
}
