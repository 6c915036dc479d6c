/**
 * DOM rendering. Pure projection of store state; all mutation goes back
 * through the store. Percentages shown on the breakdown bar are exactly the
 * server's integers; this module never divides counts.
 */

import { Breakdown, CATEGORIES, CATEGORY_LABELS, Category, TriageCase } from "./api.js";
import { Filter, Store, StoreState } from "./store.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  children: (Node | string)[] = [],
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    if (key === "class") node.className = value;
    else node.setAttribute(key, value);
  }
  for (const child of children) node.append(child);
  return node;
}

export function renderBreakdownBar(breakdown: Breakdown | null): HTMLElement {
  const container = el("div", { class: "breakdown", "data-testid": "breakdown" });
  const total = breakdown
    ? CATEGORIES.reduce((sum, c) => sum + breakdown.counts[c], 0)
    : 0;
  if (!breakdown || total === 0) {
    container.append(el("p", { class: "placeholder" }, ["no annotations yet"]));
    return container;
  }
  const bar = el("div", { class: "bar", role: "img", "aria-label": breakdown.label });
  for (const category of CATEGORIES) {
    const pct = breakdown.percentages[category];
    const segment = el("div", {
      class: `segment ${category}`,
      "data-testid": `segment-${category}`,
      "data-percent": String(pct),
      style: `width: ${pct}%`,
    });
    if (pct > 0) {
      segment.append(el("span", { class: "segment-label" }, [`${pct}%`]));
    }
    bar.append(segment);
  }
  container.append(bar);
  const legend = el(
    "div",
    { class: "legend" },
    CATEGORIES.map((c) =>
      el("span", { class: `legend-item ${c}` }, [`${c} ${CATEGORY_LABELS[c]}`]),
    ),
  );
  container.append(legend);
  return container;
}

function renderCounts(state: StoreState): HTMLElement {
  const counts = state.optimisticCounts ?? state.breakdown?.counts ?? null;
  const line = counts
    ? CATEGORIES.map((c) => `${c}: ${counts[c]}`).join("  ")
    : "";
  return el("div", { class: "counts", "data-testid": "counts" }, [line]);
}

function renderCase(tc: TriageCase, readOnly: boolean): HTMLElement {
  const card = el("div", { class: "case-card", "data-testid": "case-card", "data-uid": tc.uid });
  card.append(el("h3", {}, [`${tc.case_id} · ${tc.method}`]));
  card.append(el("p", { class: "scenario" }, [tc.scenario]));
  if (tc.scenario_b) card.append(el("p", { class: "scenario-b" }, [`Scenario 1: ${tc.scenario_b}`]));
  if (tc.statement) card.append(el("p", { class: "statement" }, [`Statement: ${tc.statement}`]));
  card.append(
    el("p", { class: "verdicts" }, [
      el("span", { class: "gold", "data-testid": "gold" }, [`gold: ${tc.gold}`]),
      " ",
      el("span", { class: "judgment", "data-testid": "judgment" }, [`model: ${tc.judgment}`]),
    ]),
  );
  const sections = el("dl", { class: "analysis" });
  for (const [key, text] of Object.entries(tc.analysis_fields)) {
    sections.append(el("dt", {}, [key]));
    sections.append(el("dd", {}, [text]));
  }
  card.append(sections);
  if (readOnly && tc.annotation) {
    card.append(
      el("p", { class: "annotation-summary" }, [
        `annotated ${tc.annotation.category} by ${tc.annotation.annotator}`,
      ]),
    );
  }
  return card;
}

function renderForm(store: Store, state: StoreState): HTMLElement {
  const form = el("div", { class: "annotation-form" });
  const buttons = el("div", { class: "category-buttons", role: "group" });
  CATEGORIES.forEach((category, index) => {
    const selected = state.selectedCategory === category ? " selected" : "";
    const button = el(
      "button",
      {
        class: `category${selected}`,
        "data-testid": `category-${category}`,
        type: "button",
      },
      [`${index + 1} · ${CATEGORY_LABELS[category]}`],
    );
    button.addEventListener("click", () => store.selectCategory(category));
    buttons.append(button);
  });
  form.append(buttons);

  const note = el("textarea", {
    class: "note",
    "data-testid": "note",
    placeholder: "note (optional)",
  }) as HTMLTextAreaElement;
  note.value = state.note;
  note.addEventListener("input", () => store.setNote(note.value));
  form.append(note);

  const annotator = el("input", {
    class: "annotator",
    "data-testid": "annotator",
    placeholder: "your name",
  }) as HTMLInputElement;
  annotator.value = state.annotator;
  annotator.addEventListener("input", () => store.setAnnotator(annotator.value));
  form.append(annotator);

  const submit = el("button", { class: "submit", "data-testid": "submit", type: "button" }, [
    "Annotate",
  ]);
  submit.addEventListener("click", () => {
    void store.submit();
  });
  form.append(submit);

  if (state.inlineError) {
    form.append(el("p", { class: "inline-error", "data-testid": "inline-error" }, [state.inlineError]));
  }
  form.append(
    el("p", { class: "hint" }, ["keys 1-4 annotate and advance; the note field is carried along"]),
  );
  return form;
}

export function render(root: HTMLElement, store: Store): void {
  const state = store.state;
  root.textContent = "";
  const app = el("div", { class: "app" });

  if (state.banner) {
    const banner = el("div", { class: "banner", "data-testid": "banner" }, [state.banner, " "]);
    const retry = el("button", { "data-testid": "retry", type: "button" }, ["Retry"]);
    retry.addEventListener("click", () => {
      void store.retry();
    });
    banner.append(retry);
    app.append(banner);
  }

  const header = el("header", {}, [
    el("h1", {}, ["Misalignment triage"]),
    el("p", { class: "queue-counts", "data-testid": "queue-counts" }, [
      `${state.pendingCount} pending · ${state.doneCount} done`,
    ]),
  ]);
  app.append(header);

  if (state.runs.length > 1) {
    const picker = el("select", { "data-testid": "run-picker" }) as HTMLSelectElement;
    for (const run of state.runs) {
      const option = el("option", { value: run.run_id }, [
        `${run.run_id} (${run.pending} pending)`,
      ]) as HTMLOptionElement;
      option.selected = run.run_id === state.runId;
      picker.append(option);
    }
    picker.addEventListener("change", () => {
      void store.openRun(picker.value);
    });
    app.append(picker);
  }

  const tabs = el("div", { class: "tabs" });
  (["pending", "done"] as Filter[]).forEach((filter) => {
    const active = state.filter === filter ? " active" : "";
    const tab = el("button", { class: `tab${active}`, "data-testid": `tab-${filter}`, type: "button" }, [
      filter,
    ]);
    tab.addEventListener("click", () => store.setFilter(filter));
    app.append(tab);
    tabs.append(tab);
  });
  app.append(tabs);

  if (state.filter === "pending") {
    const current = store.current;
    if (current) {
      app.append(renderCase(current, false));
      app.append(renderForm(store, state));
    } else if (!state.loading) {
      const complete = el("div", { class: "complete", "data-testid": "complete" }, [
        el("h2", {}, ["Queue complete"]),
        el("p", {}, ["Every misaligned case is annotated. "]),
        el("a", { href: "#breakdown" }, ["See the breakdown"]),
      ]);
      app.append(complete);
    }
  } else {
    const list = el("div", { class: "done-list", "data-testid": "done-list" });
    for (const tc of state.done) list.append(renderCase(tc, true));
    if (state.done.length === 0) list.append(el("p", {}, ["nothing annotated yet"]));
    app.append(list);
  }

  const anchor = el("div", { id: "breakdown" });
  anchor.append(renderCounts(state));
  anchor.append(renderBreakdownBar(state.breakdown));
  app.append(anchor);

  root.append(app);
}
