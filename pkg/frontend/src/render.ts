/** DOM renderer.
 *
 * `renderApp` rebuilds the console inside `root` from a UiSessionView and
 * nothing else, so calling it twice with equal views yields equal DOM.
 * It resolves the document from `root`, which keeps it usable under any
 * DOM implementation in tests.
 */

import type { UiSessionView } from "./state.js";

export interface Handlers {
  onChoose(id: number, cls: number): void;
  onSubmit(): void;
  onNetwork(network: 1 | 2): void;
}

const SVG_NS = "http://www.w3.org/2000/svg";

type Attrs = Record<string, string>;

function el(
  doc: Document,
  tag: string,
  attrs: Attrs = {},
  text?: string,
): HTMLElement {
  const node = doc.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) node.setAttribute(key, value);
  if (text !== undefined) node.textContent = text;
  return node;
}

function svgEl(doc: Document, tag: string, attrs: Attrs = {}): SVGElement {
  const node = doc.createElementNS(SVG_NS, tag) as SVGElement;
  for (const [key, value] of Object.entries(attrs)) node.setAttribute(key, value);
  return node;
}

interface Bounds {
  x0: number;
  x1: number;
  y0: number;
  y1: number;
}

function bounds(xs: number[], ys: number[]): Bounds {
  let x0 = Math.min(...xs);
  let x1 = Math.max(...xs);
  let y0 = Math.min(...ys);
  let y1 = Math.max(...ys);
  // degenerate extents still need a nonzero span to divide by
  if (x1 - x0 < 1e-9) {
    x0 -= 0.5;
    x1 += 0.5;
  }
  if (y1 - y0 < 1e-9) {
    y0 -= 0.5;
    y1 += 0.5;
  }
  return { x0, x1, y0, y1 };
}

function renderScatter(doc: Document, view: UiSessionView, handlers: Handlers): HTMLElement {
  const section = el(doc, "section", { class: "panel scatter" });
  const head = el(doc, "div", { class: "panel-head" });
  head.appendChild(el(doc, "h2", {}, "projection"));
  const toggle = el(doc, "div", { class: "net-toggle" });
  for (const network of [1, 2] as const) {
    const btn = el(
      doc,
      "button",
      {
        type: "button",
        "data-testid": `network-btn-${network}`,
        class: view.network === network ? "net-btn active" : "net-btn",
      },
      `net ${network}`,
    );
    btn.addEventListener("click", () => handlers.onNetwork(network));
    toggle.appendChild(btn);
  }
  head.appendChild(toggle);
  section.appendChild(head);

  if (view.scatter.length === 0) {
    section.appendChild(
      el(doc, "p", { class: "empty", "data-testid": "scatter-empty" }, "no projection snapshot yet"),
    );
    return section;
  }

  const size = 420;
  const pad = 16;
  const b = bounds(
    view.scatter.map((p) => p.x),
    view.scatter.map((p) => p.y),
  );
  const sx = (x: number) => pad + ((x - b.x0) / (b.x1 - b.x0)) * (size - 2 * pad);
  const sy = (y: number) => size - pad - ((y - b.y0) / (b.y1 - b.y0)) * (size - 2 * pad);

  const svg = svgEl(doc, "svg", {
    viewBox: `0 0 ${size} ${size}`,
    "data-testid": "scatter-svg",
    class: "scatter-svg",
  });
  for (const point of view.scatter) {
    const circle = svgEl(doc, "circle", {
      cx: sx(point.x).toFixed(2),
      cy: sy(point.y).toFixed(2),
      r: point.highlighted ? "7" : "3.5",
      fill: point.fill,
      stroke: point.highlighted ? "#111" : point.outline,
      "stroke-width": point.highlighted ? "2.5" : "1",
      "data-testid": "scatter-point",
      "data-id": String(point.id),
      "data-state": point.state,
      "data-highlighted": point.highlighted ? "1" : "0",
    });
    const title = svgEl(doc, "title");
    title.textContent =
      `#${point.id} ${point.state} label=${point.label} ` +
      `conf=${point.confidence.toFixed(3)}`;
    circle.appendChild(title);
    svg.appendChild(circle);
  }
  section.appendChild(svg);

  const legend = el(doc, "div", { class: "legend" });
  for (const state of ["seed", "oracle", "pseudo", "unlabeled"]) {
    const entry = el(doc, "span", { class: "legend-entry" }, state);
    entry.prepend(el(doc, "i", { class: `swatch swatch-${state}` }));
    legend.appendChild(entry);
  }
  section.appendChild(legend);
  return section;
}

function renderQueue(doc: Document, view: UiSessionView, handlers: Handlers): HTMLElement {
  const section = el(doc, "section", { class: "panel queue" });
  section.appendChild(el(doc, "h2", {}, "label queries"));

  if (view.duplicateNotice) {
    section.appendChild(
      el(
        doc,
        "p",
        { class: "dup-notice", "data-testid": "dup-notice" },
        "already answered: this submission changed nothing",
      ),
    );
  }

  if (view.cards.length === 0) {
    section.appendChild(
      el(doc, "p", { class: "empty", "data-testid": "queue-empty" }, "nothing to label right now"),
    );
    return section;
  }

  for (const card of view.cards) {
    const box = el(doc, "article", {
      class: card.error ? "card card-error" : "card",
      "data-testid": "query-card",
      "data-id": String(card.id),
    });
    const head = el(doc, "div", { class: "card-head" });
    head.appendChild(el(doc, "strong", {}, `sample #${card.id}`));
    head.appendChild(
      el(doc, "span", { class: "conf" }, `confidence ${card.confidence.toFixed(3)}`),
    );
    box.appendChild(head);
    if (card.payloadRef !== null) {
      box.appendChild(el(doc, "p", { class: "payload" }, card.payloadRef));
    }
    const picker = el(doc, "div", { class: "picker" });
    for (const cls of view.classes) {
      const parts = ["class-btn"];
      if (card.chosen === cls) parts.push("chosen");
      if (card.suggested === cls) parts.push("suggested");
      const btn = el(
        doc,
        "button",
        {
          type: "button",
          class: parts.join(" "),
          "data-testid": "class-btn",
          "data-id": String(card.id),
          "data-class": String(cls),
        },
        card.suggested === cls ? `${cls} ★` : String(cls),
      );
      btn.addEventListener("click", () => handlers.onChoose(card.id, cls));
      picker.appendChild(btn);
    }
    box.appendChild(picker);
    if (card.error) {
      box.appendChild(el(doc, "p", { class: "card-error-text", "data-testid": "card-error" }, card.error));
    }
    if (card.submitted) {
      box.appendChild(el(doc, "p", { class: "card-submitted" }, "submitted"));
    }
    section.appendChild(box);
  }

  const submit = el(
    doc,
    "button",
    { type: "button", class: "submit-btn", "data-testid": "submit-btn" },
    view.inFlight ? "submitting..." : `submit ${view.cards.length} labels`,
  );
  if (!view.canSubmit) submit.setAttribute("disabled", "");
  submit.addEventListener("click", () => handlers.onSubmit());
  section.appendChild(submit);
  if (view.submitHint !== null) {
    section.appendChild(el(doc, "p", { class: "hint", "data-testid": "submit-hint" }, view.submitHint));
  }
  return section;
}

function renderSparkline(doc: Document, view: UiSessionView): HTMLElement {
  const wrap = el(doc, "div", { class: "spark" });
  if (view.spark.length < 2) {
    wrap.appendChild(el(doc, "p", { class: "empty" }, "metrics appear after the first checkpoint"));
    return wrap;
  }
  const w = 220;
  const h = 48;
  const n = view.spark.length;
  const path = view.spark
    .map((pt, i) => {
      const x = (i / (n - 1)) * (w - 4) + 2;
      const k = Math.min(1, Math.max(0, pt.kappa));
      const y = h - 4 - k * (h - 8);
      return `${i === 0 ? "M" : "L"}${x.toFixed(1)},${y.toFixed(1)}`;
    })
    .join(" ");
  const svg = svgEl(doc, "svg", {
    viewBox: `0 0 ${w} ${h}`,
    class: "spark-svg",
    "data-testid": "sparkline",
  });
  svg.appendChild(svgEl(doc, "path", { d: path, fill: "none", stroke: "#2563eb", "stroke-width": "2" }));
  wrap.appendChild(svg);
  const last = view.spark[view.spark.length - 1]!;
  wrap.appendChild(
    el(doc, "p", { class: "spark-caption" }, `kappa ${last.kappa.toFixed(3)} at epoch ${last.epoch}`),
  );
  return wrap;
}

function renderProgress(doc: Document, view: UiSessionView): HTMLElement {
  const section = el(doc, "section", { class: "panel progress" });
  section.appendChild(el(doc, "h2", {}, "run progress"));

  const grid = el(doc, "dl", { class: "stats" });
  const stat = (label: string, value: string, testid?: string) => {
    grid.appendChild(el(doc, "dt", {}, label));
    grid.appendChild(el(doc, "dd", testid ? { "data-testid": testid } : {}, value));
  };
  stat("fold", view.fold === null ? "-" : String(view.fold));
  stat("epoch", String(view.epoch), "stat-epoch");
  stat("labeled samples", String(view.labeledCount), "stat-labeled");
  stat("oracle answers", `${view.cActive} / ${view.nActive}`, "stat-active");
  section.appendChild(grid);

  const frac = view.nActive > 0 ? Math.min(1, view.cActive / view.nActive) : 0;
  const bar = el(doc, "div", { class: "bar" });
  bar.appendChild(
    el(doc, "div", {
      class: "bar-fill",
      style: `width: ${(frac * 100).toFixed(1)}%`,
      "data-testid": "active-bar",
    }),
  );
  section.appendChild(bar);
  section.appendChild(renderSparkline(doc, view));

  if (view.error !== null) {
    section.appendChild(el(doc, "p", { class: "run-error", "data-testid": "run-error" }, view.error));
  }
  if (view.results !== null) {
    section.appendChild(
      el(
        doc,
        "pre",
        { class: "results", "data-testid": "results" },
        JSON.stringify(view.results, null, 2),
      ),
    );
  }
  return section;
}

export function renderApp(root: HTMLElement, view: UiSessionView, handlers: Handlers): void {
  const doc = root.ownerDocument;
  root.textContent = "";

  const header = el(doc, "header", { class: "topbar" });
  header.appendChild(el(doc, "h1", {}, "annotation console"));
  header.appendChild(
    el(
      doc,
      "span",
      {
        class: `chip phase-${view.phase.toLowerCase()}`,
        "data-testid": "phase-chip",
      },
      view.phase,
    ),
  );
  if (view.runId !== null) {
    header.appendChild(el(doc, "span", { class: "run-id" }, `run ${view.runId}`));
  }
  if (!view.interactive && view.runId !== null) {
    header.appendChild(el(doc, "span", { class: "chip chip-muted" }, "read only"));
  }
  root.appendChild(header);

  if (view.banner !== null) {
    root.appendChild(el(doc, "div", { class: "banner", "data-testid": "banner" }, view.banner));
  }

  const main = el(doc, "main", { class: "columns" });
  main.appendChild(renderScatter(doc, view, handlers));
  main.appendChild(renderQueue(doc, view, handlers));
  main.appendChild(renderProgress(doc, view));
  root.appendChild(main);
}
