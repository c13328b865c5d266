import { JSDOM } from "jsdom";
import { beforeEach, describe, expect, test } from "vitest";

import { renderApp, type Handlers } from "../src/render.js";
import {
  choose,
  deriveView,
  initialState,
  withQueries,
  withScatter,
  withStatus,
  type SessionState,
} from "../src/state.js";
import type { StatusPayload } from "../src/api.js";

function mkStatus(overrides: Partial<StatusPayload> = {}): StatusPayload {
  return {
    run_id: "run-xyz",
    phase: "WAITING_FOR_LABELS",
    fold: 0,
    epoch: 6,
    c_active: 1,
    n_active: 4,
    labeled_count: 9,
    num_classes: 3,
    interactive: true,
    pending_queries: [],
    query_epoch: 6,
    metrics_tail: [],
    snapshots: {},
    ...overrides,
  };
}

function sessionWithQueries(): SessionState {
  let s = withStatus(initialState(), mkStatus());
  s = withQueries(s, {
    query_epoch: 6,
    items: [
      { id: 11, confidence: 0.62, payload_ref: "sample-11", x: 0.4, y: 1.2, suggested: 1 },
      { id: 27, confidence: 0.55, payload_ref: "sample-27", x: -0.9, y: 0.3, suggested: 2 },
    ],
  });
  return withScatter(s, [
    { id: 11, x: 0.4, y: 1.2, state: "pseudo", label: 1, confidence: 0.62 },
    { id: 3, x: -1.0, y: 0.2, state: "seed", label: 0, confidence: 1.0 },
    { id: 5, x: 2.0, y: -0.5, state: "unlabeled", label: -1, confidence: 0.8 },
  ]);
}

const noopHandlers: Handlers = {
  onChoose() {},
  onSubmit() {},
  onNetwork() {},
};

let root: HTMLElement;

beforeEach(() => {
  const dom = new JSDOM('<div id="app"></div>');
  root = dom.window.document.getElementById("app") as HTMLElement;
});

describe("renderApp", () => {
  test("shows the phase chip and run id", () => {
    renderApp(root, deriveView(sessionWithQueries()), noopHandlers);
    expect(root.querySelector('[data-testid="phase-chip"]')!.textContent).toBe(
      "WAITING_FOR_LABELS",
    );
    expect(root.textContent).toContain("run run-xyz");
  });

  test("renders one card per pending query with a full class picker", () => {
    renderApp(root, deriveView(sessionWithQueries()), noopHandlers);
    const cards = root.querySelectorAll('[data-testid="query-card"]');
    expect(cards).toHaveLength(2);
    const ids = Array.from(cards).map((c) => c.getAttribute("data-id"));
    expect(ids).toEqual(["11", "27"]);
    // every card offers every class exactly once
    for (const card of Array.from(cards)) {
      expect(card.querySelectorAll('[data-testid="class-btn"]')).toHaveLength(3);
    }
    expect(root.textContent).toContain("confidence 0.620");
  });

  test("marks the suggested class and the chosen class", () => {
    const view = deriveView(choose(sessionWithQueries(), 11, 0));
    renderApp(root, view, noopHandlers);
    const card = root.querySelector('[data-testid="query-card"][data-id="11"]')!;
    const suggested = card.querySelector(".class-btn.suggested")!;
    expect(suggested.getAttribute("data-class")).toBe("1");
    const chosen = card.querySelector(".class-btn.chosen")!;
    expect(chosen.getAttribute("data-class")).toBe("0");
  });

  test("class buttons report their card and class to the handler", () => {
    const picks: Array<[number, number]> = [];
    renderApp(root, deriveView(sessionWithQueries()), {
      ...noopHandlers,
      onChoose: (id, cls) => picks.push([id, cls]),
    });
    const btn = root.querySelector(
      '[data-testid="query-card"][data-id="27"] [data-testid="class-btn"][data-class="2"]',
    ) as HTMLElement;
    btn.click();
    expect(picks).toEqual([[27, 2]]);
  });

  test("submit stays disabled until the view allows it, then fires the handler", () => {
    let submits = 0;
    const handlers = { ...noopHandlers, onSubmit: () => submits++ };
    const partial = sessionWithQueries();
    renderApp(root, deriveView(partial), handlers);
    let btn = root.querySelector('[data-testid="submit-btn"]') as HTMLButtonElement;
    expect(btn.hasAttribute("disabled")).toBe(true);
    expect(root.querySelector('[data-testid="submit-hint"]')!.textContent).toBe(
      "choose a class for every query",
    );

    const ready = choose(choose(partial, 11, 0), 27, 2);
    renderApp(root, deriveView(ready), handlers);
    btn = root.querySelector('[data-testid="submit-btn"]') as HTMLButtonElement;
    expect(btn.hasAttribute("disabled")).toBe(false);
    btn.click();
    expect(submits).toBe(1);
  });

  test("scatter draws every row and highlights pending ids", () => {
    renderApp(root, deriveView(sessionWithQueries()), noopHandlers);
    const points = root.querySelectorAll('[data-testid="scatter-point"]');
    expect(points).toHaveLength(3);
    const highlighted = root.querySelectorAll('[data-testid="scatter-point"][data-highlighted="1"]');
    expect(highlighted).toHaveLength(1);
    expect(highlighted[0]!.getAttribute("data-id")).toBe("11");
  });

  test("network toggle reflects the active network and fires the handler", () => {
    const networks: number[] = [];
    renderApp(root, deriveView(sessionWithQueries()), {
      ...noopHandlers,
      onNetwork: (n) => networks.push(n),
    });
    expect(root.querySelector('[data-testid="network-btn-1"]')!.className).toContain("active");
    (root.querySelector('[data-testid="network-btn-2"]') as HTMLElement).click();
    expect(networks).toEqual([2]);
  });

  test("duplicate notice and banner render only when set", () => {
    const base = sessionWithQueries();
    renderApp(root, deriveView(base), noopHandlers);
    expect(root.querySelector('[data-testid="dup-notice"]')).toBeNull();
    expect(root.querySelector('[data-testid="banner"]')).toBeNull();

    renderApp(
      root,
      deriveView({ ...base, duplicateNotice: true, banner: "service unreachable" }),
      noopHandlers,
    );
    expect(root.querySelector('[data-testid="dup-notice"]')!.textContent).toContain(
      "changed nothing",
    );
    expect(root.querySelector('[data-testid="banner"]')!.textContent).toContain("unreachable");
  });

  test("inline card errors render inside their card", () => {
    const s = { ...sessionWithQueries(), cardErrors: { 27: "id 27 is not pending" } };
    renderApp(root, deriveView(s), noopHandlers);
    const card = root.querySelector('[data-testid="query-card"][data-id="27"]')!;
    expect(card.querySelector('[data-testid="card-error"]')!.textContent).toContain("not pending");
    const clean = root.querySelector('[data-testid="query-card"][data-id="11"]')!;
    expect(clean.querySelector('[data-testid="card-error"]')).toBeNull();
  });

  test("empty states for projection and queue", () => {
    const bare = withStatus(initialState(), mkStatus({ phase: "WARMUP" }));
    renderApp(root, deriveView(bare), noopHandlers);
    expect(root.querySelector('[data-testid="scatter-empty"]')).not.toBeNull();
    expect(root.querySelector('[data-testid="queue-empty"]')).not.toBeNull();
    expect(root.querySelector('[data-testid="submit-btn"]')).toBeNull();
  });

  test("progress panel shows oracle budget and fills the bar", () => {
    renderApp(root, deriveView(sessionWithQueries()), noopHandlers);
    expect(root.querySelector('[data-testid="stat-active"]')!.textContent).toBe("1 / 4");
    const fill = root.querySelector('[data-testid="active-bar"]') as HTMLElement;
    expect(fill.getAttribute("style")).toContain("25.0%");
  });

  test("run failure and final results surface in the progress panel", () => {
    const failed = withStatus(initialState(), mkStatus({ phase: "FAILED", error: "exploded" }));
    renderApp(root, deriveView(failed), noopHandlers);
    expect(root.querySelector('[data-testid="run-error"]')!.textContent).toBe("exploded");

    const done = withStatus(
      initialState(),
      mkStatus({ phase: "DONE", results: { mean_accuracy: 0.83 } }),
    );
    renderApp(root, deriveView(done), noopHandlers);
    expect(root.querySelector('[data-testid="results"]')!.textContent).toContain("0.83");
  });

  test("re-rendering the same view is idempotent", () => {
    const view = deriveView(choose(sessionWithQueries(), 11, 1));
    renderApp(root, view, noopHandlers);
    const first = root.innerHTML;
    renderApp(root, view, noopHandlers);
    expect(root.innerHTML).toBe(first);
  });
});
