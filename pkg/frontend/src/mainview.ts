/**
 * Diverging stacked bar view: one row per attribute, underprediction mass
 * stacked leftward in blues, overprediction mass rightward in reds, unseen
 * signature encodings in the center strip, and a layered orange weight bar.
 *
 * The view never computes scores or orders locally. Row order, stacking
 * order, matrices, and weights all come from the diagnostics payload; the
 * only math here is mapping values to pixels on one shared scale.
 */

import type { DiagnosticsPayload, Side } from "./api.js";

export type CenterMode = "none" | "single" | "layered" | "overlap";

export interface MainViewHandlers {
  onBarClick(attr: number): void;
  onCellHover(attr: number, category: string, side: Side): void;
  onCellLeave(): void;
}

const SVG_NS = "http://www.w3.org/2000/svg";

export const HALF_W = 260;
export const CENTER_W = 96;
export const ROW_H = 26;
export const TOTAL_W = HALF_W + CENTER_W + HALF_W;

const GUIDANCE_FLOOR = 0.5;

/** Center encoding is a pure function of how many unseen classes are selected. */
export function centerMode(unseenCount: number): CenterMode {
  if (unseenCount <= 0) return "none";
  if (unseenCount === 1) return "single";
  if (unseenCount === 2) return "layered";
  return "overlap";
}

/**
 * Per attribute, how many of the selected unseen categories carry the
 * attribute (signature above its class-population mean, i.e. z > 0). Bars
 * for these categories would overlap at the center baseline.
 */
export function overlapCounts(signatureRows: number[][], nAttributes: number): number[] {
  const counts = new Array<number>(nAttributes).fill(0);
  for (const row of signatureRows) {
    for (let k = 0; k < nAttributes; k++) {
      if (row[k] > 0) counts[k] += 1;
    }
  }
  return counts;
}

/** Ordinal greyscale: 0 overlaps near-white, the maximum near-black. */
export function greyShade(count: number, maxCount: number): string {
  const t = maxCount > 0 ? count / maxCount : 0;
  const light = Math.round(92 - t * 67);
  return `hsl(0, 0%, ${light}%)`;
}

function svgEl<K extends keyof SVGElementTagNameMap>(tag: K): SVGElementTagNameMap[K] {
  return document.createElementNS(SVG_NS, tag);
}

function rect(x: number, y: number, w: number, h: number, fill: string): SVGRectElement {
  const r = svgEl("rect");
  r.setAttribute("x", String(x));
  r.setAttribute("y", String(y));
  r.setAttribute("width", String(Math.max(0, w)));
  r.setAttribute("height", String(h));
  r.setAttribute("fill", fill);
  return r;
}

function rampColor(side: Side, position: number, total: number): string {
  // sequential ramps: deeper shades sit nearer the baseline
  const t = total > 1 ? position / (total - 1) : 0;
  const light = 38 + t * 34;
  return side === "over" ? `hsl(6, 68%, ${light}%)` : `hsl(212, 62%, ${light}%)`;
}

interface RowGeometry {
  qScale: number;
  sigScale: number;
}

function geometry(payload: DiagnosticsPayload): RowGeometry {
  let qMax = 0;
  const a = payload.attributes.length;
  for (let k = 0; k < a; k++) {
    const underSum = payload.q_under[k].reduce((s, v) => s + v, 0);
    const overSum = payload.q_over[k].reduce((s, v) => s + v, 0);
    qMax = Math.max(qMax, underSum, overSum);
  }
  let sigMax = 0;
  for (const row of Object.values(payload.unseen_signatures)) {
    for (const v of row) sigMax = Math.max(sigMax, Math.abs(v));
  }
  return {
    qScale: qMax > 0 ? (HALF_W - 4) / qMax : 0,
    sigScale: sigMax > 0 ? (CENTER_W - 8) / sigMax : 0,
  };
}

function renderStack(
  svg: SVGSVGElement,
  payload: DiagnosticsPayload,
  attr: number,
  side: Side,
  geo: RowGeometry,
  handlers: MainViewHandlers,
): void {
  const q = side === "over" ? payload.q_over : payload.q_under;
  const columnOf = new Map(payload.categories.map((name, j) => [name, j]));
  let offset = 0;
  payload.stacking.forEach((name, position) => {
    const j = columnOf.get(name);
    if (j === undefined) return;
    const w = q[attr][j] * geo.qScale;
    if (w <= 0) return;
    const x = side === "over" ? HALF_W + CENTER_W + offset : HALF_W - offset - w;
    const seg = rect(x, 4, w, ROW_H - 12, rampColor(side, position, payload.stacking.length));
    seg.setAttribute("class", `segment ${side}`);
    seg.setAttribute("data-category", name);
    seg.addEventListener("mouseenter", () => handlers.onCellHover(attr, name, side));
    svg.appendChild(seg);
    offset += w;
  });
}

function renderCenter(svg: SVGSVGElement, payload: DiagnosticsPayload, attr: number, geo: RowGeometry): void {
  const entries = Object.entries(payload.unseen_signatures);
  const mode = centerMode(entries.length);
  const left = HALF_W + 4;
  if (mode === "none") return;

  if (mode === "single" || mode === "layered") {
    // larger magnitudes first so the smaller bar stays visible on top
    const bars = entries
      .map(([name, row], i) => ({ name, value: row[attr], catIndex: i }))
      .sort((p, q) => Math.abs(q.value) - Math.abs(p.value));
    bars.forEach((bar, paintOrder) => {
      const w = Math.abs(bar.value) * geo.sigScale;
      const h = ROW_H - 12;
      const r = rect(left, 4, w, h, bar.catIndex === 0 ? "hsl(275, 45%, 55%)" : "hsl(165, 55%, 40%)");
      r.setAttribute("class", `center-bar ${bar.value >= 0 ? "pos" : "neg"}`);
      r.setAttribute("data-category", bar.name);
      r.setAttribute("data-layer", paintOrder === bars.length - 1 ? "top" : "bottom");
      if (bar.value < 0) r.setAttribute("fill-opacity", "0.45");
      svg.appendChild(r);
    });
    return;
  }

  const counts = overlapCounts(entries.map(([, row]) => row), payload.attributes.length);
  const maxCount = entries.length;
  const cell = rect(left, 4, CENTER_W - 8, ROW_H - 12, greyShade(counts[attr], maxCount));
  cell.setAttribute("class", "center-overlap");
  cell.setAttribute("data-count", String(counts[attr]));
  svg.appendChild(cell);
}

function renderWeightBar(svg: SVGSVGElement, attr: number, weight: number): void {
  const bar = rect(0, ROW_H - 5, weight * TOTAL_W, 4, "hsl(32, 93%, 52%)");
  bar.setAttribute("class", "weight-bar");
  bar.setAttribute("data-attr", String(attr));
  bar.setAttribute("data-weight", String(weight));
  svg.appendChild(bar);

  if (weight < GUIDANCE_FLOOR) {
    const mark = svgEl("text");
    mark.setAttribute("x", String(TOTAL_W - 10));
    mark.setAttribute("y", String(ROW_H - 8));
    mark.setAttribute("class", "guidance-warning");
    mark.textContent = "!";
    svg.appendChild(mark);
  }
}

/** Rebuild the bar view from a fresh payload. */
export function renderMainView(
  root: HTMLElement,
  payload: DiagnosticsPayload,
  handlers: MainViewHandlers,
): void {
  root.textContent = "";
  const geo = geometry(payload);

  for (const attr of payload.ordering) {
    const row = document.createElement("div");
    row.className = "attr-row";
    row.dataset.attr = String(attr);

    const label = document.createElement("span");
    label.className = "attr-label";
    label.textContent = payload.attributes[attr];
    row.appendChild(label);

    const svg = svgEl("svg");
    svg.setAttribute("class", "attr-svg");
    svg.setAttribute("width", String(TOTAL_W));
    svg.setAttribute("height", String(ROW_H));
    svg.setAttribute("viewBox", `0 0 ${TOTAL_W} ${ROW_H}`);

    const baseline = rect(HALF_W, 2, CENTER_W, ROW_H - 8, "transparent");
    baseline.setAttribute("class", "center-strip");
    baseline.setAttribute("stroke", "#d5d5d5");
    svg.appendChild(baseline);

    renderStack(svg, payload, attr, "under", geo, handlers);
    renderStack(svg, payload, attr, "over", geo, handlers);
    renderCenter(svg, payload, attr, geo);
    renderWeightBar(svg, attr, payload.weights[attr]);

    svg.addEventListener("click", () => handlers.onBarClick(attr));
    svg.addEventListener("mouseleave", () => handlers.onCellLeave());
    row.appendChild(svg);
    root.appendChild(row);
  }
}

/** Redraw only the weight bars after a weights response, leaving bars alone. */
export function updateWeightBars(root: HTMLElement, weights: number[]): void {
  for (const bar of Array.from(root.querySelectorAll<SVGRectElement>(".weight-bar"))) {
    const attr = Number(bar.getAttribute("data-attr"));
    bar.setAttribute("width", String(Math.max(0, weights[attr] * TOTAL_W)));
    bar.setAttribute("data-weight", String(weights[attr]));
  }
  for (const row of Array.from(root.querySelectorAll<HTMLElement>(".attr-row"))) {
    const attr = Number(row.dataset.attr);
    const svg = row.querySelector("svg");
    const existing = svg?.querySelector(".guidance-warning");
    const needed = weights[attr] < GUIDANCE_FLOOR;
    if (existing && !needed) existing.remove();
    if (!existing && needed && svg) {
      const mark = svgEl("text");
      mark.setAttribute("x", String(TOTAL_W - 10));
      mark.setAttribute("y", String(ROW_H - 8));
      mark.setAttribute("class", "guidance-warning");
      mark.textContent = "!";
      svg.appendChild(mark);
    }
  }
}
