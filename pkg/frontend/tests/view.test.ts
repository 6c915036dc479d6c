import { beforeEach, describe, expect, it } from "vitest";

import { ApiClient, Breakdown } from "../src/api.js";
import { Store } from "../src/store.js";
import { render, renderBreakdownBar } from "../src/view.js";
import { FixtureServer } from "./fixture.js";

function breakdown(partial: Partial<Breakdown> = {}): Breakdown {
  return {
    label: "run",
    counts: { "data-a": 43, "data-b": 38, "llm-c": 19, "llm-d": 0 },
    percentages: { "data-a": 43, "data-b": 38, "llm-c": 19, "llm-d": 0 },
    ...partial,
  };
}

describe("renderBreakdownBar", () => {
  it("renders four segments in fixed order with integer labels, zeros unlabeled", () => {
    const bar = renderBreakdownBar(breakdown());
    const segments = [...bar.querySelectorAll(".segment")];
    expect(segments.map((s) => s.getAttribute("data-percent"))).toEqual(["43", "38", "19", "0"]);
    const labels = [...bar.querySelectorAll(".segment-label")].map((s) => s.textContent);
    expect(labels).toEqual(["43%", "38%", "19%"]); // the zero segment has no label
  });

  it("renders the util-style row", () => {
    const bar = renderBreakdownBar(
      breakdown({
        counts: { "data-a": 39, "data-b": 4, "llm-c": 7, "llm-d": 0 },
        percentages: { "data-a": 78, "data-b": 8, "llm-c": 14, "llm-d": 0 },
      }),
    );
    const labels = [...bar.querySelectorAll(".segment-label")].map((s) => s.textContent);
    expect(labels).toEqual(["78%", "8%", "14%"]);
  });

  it("never recomputes percentages: server values render verbatim", () => {
    // counts say 50/50; the (fixture) server says 70/30 -- the bar must obey
    // the server, proving no client-side arithmetic happens
    const bar = renderBreakdownBar(
      breakdown({
        counts: { "data-a": 5, "data-b": 5, "llm-c": 0, "llm-d": 0 },
        percentages: { "data-a": 70, "data-b": 30, "llm-c": 0, "llm-d": 0 },
      }),
    );
    const labels = [...bar.querySelectorAll(".segment-label")].map((s) => s.textContent);
    expect(labels).toEqual(["70%", "30%"]);
  });

  it("all zeros shows the placeholder", () => {
    const bar = renderBreakdownBar(
      breakdown({
        counts: { "data-a": 0, "data-b": 0, "llm-c": 0, "llm-d": 0 },
        percentages: { "data-a": 0, "data-b": 0, "llm-c": 0, "llm-d": 0 },
      }),
    );
    expect(bar.textContent).toContain("no annotations yet");
    expect(bar.querySelectorAll(".segment").length).toBe(0);
  });
});

describe("full view", () => {
  let server: FixtureServer;
  let root: HTMLElement;
  let store: Store;

  beforeEach(async () => {
    server = new FixtureServer();
    server.install();
    document.body.innerHTML = '<div id="app"></div>';
    root = document.getElementById("app") as HTMLElement;
    store = new Store(new ApiClient(""));
    store.subscribe(() => render(root, store));
    await store.init();
  });

  it("shows the pending header and the first case", () => {
    expect(root.querySelector('[data-testid="queue-counts"]')?.textContent).toBe(
      "5 pending · 0 done",
    );
    const card = root.querySelector('[data-testid="case-card"]');
    expect(card?.getAttribute("data-uid")).toBe("fx:0");
    expect(card?.textContent).toContain("scenario for fx:0");
    expect(card?.textContent).toContain("mock norms analysis");
  });

  it("annotating advances the card and updates the header", async () => {
    store.selectCategory("data-a");
    await store.submit();
    expect(root.querySelector('[data-testid="case-card"]')?.getAttribute("data-uid")).toBe("fx:1");
    expect(root.querySelector('[data-testid="queue-counts"]')?.textContent).toBe(
      "4 pending · 1 done",
    );
  });

  it("client-side validation error renders inline", async () => {
    await store.submit(); // nothing selected
    expect(root.querySelector('[data-testid="inline-error"]')?.textContent).toMatch(/category/);
  });

  it("done tab lists annotated cases read-only", async () => {
    store.selectCategory("llm-c");
    await store.submit();
    store.setFilter("done");
    const list = root.querySelector('[data-testid="done-list"]');
    expect(list?.textContent).toContain("annotated llm-c");
    expect(root.querySelector('[data-testid="submit"]')).toBeNull();
  });

  it("an empty queue renders the completion screen with a breakdown link", async () => {
    for (const key of ["1", "2", "3", "4", "1"]) {
      await store.keyPressed(key);
    }
    const complete = root.querySelector('[data-testid="complete"]');
    expect(complete).not.toBeNull();
    expect(complete?.querySelector("a")?.getAttribute("href")).toBe("#breakdown");
  });

  it("network failure shows the retry banner", async () => {
    server.failNetwork = true;
    await store.openRun("fixture-run");
    expect(root.querySelector('[data-testid="banner"]')).not.toBeNull();
    server.failNetwork = false;
    (root.querySelector('[data-testid="retry"]') as HTMLButtonElement).click();
    await store.whenIdle();
    expect(root.querySelector('[data-testid="banner"]')).toBeNull();
  });
});
