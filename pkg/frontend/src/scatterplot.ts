/**
 * Category scatterplot over the 2-D signature projection. Seen classes are
 * blue (orange when selected), unseen classes red (grey when selected).
 * A rectangular brush selects seen classes only; unseen classes toggle on
 * click.
 */

import type { OverviewPayload } from "./api.js";
import type { Selection } from "./state.js";

export interface ScatterHandlers {
  onBrushSeen(names: string[]): void;
  onToggleUnseen(name: string): void;
}

const SVG_NS = "http://www.w3.org/2000/svg";
export const PLOT_W = 320;
export const PLOT_H = 320;
const PAD = 18;

export const COLORS = {
  seen: "hsl(212, 62%, 47%)",
  unseen: "hsl(6, 68%, 50%)",
  selectedSeen: "hsl(32, 93%, 52%)",
  selectedUnseen: "hsl(0, 0%, 55%)",
};

interface Placed {
  name: string;
  seen: boolean;
  x: number;
  y: number;
}

function place(overview: OverviewPayload): Placed[] {
  const xs = overview.classes.map((c) => c.coords[0]);
  const ys = overview.classes.map((c) => c.coords[1]);
  const xMin = Math.min(...xs);
  const xMax = Math.max(...xs);
  const yMin = Math.min(...ys);
  const yMax = Math.max(...ys);
  const xSpan = xMax - xMin || 1;
  const ySpan = yMax - yMin || 1;
  return overview.classes.map((c) => ({
    name: c.name,
    seen: c.seen,
    x: PAD + ((c.coords[0] - xMin) / xSpan) * (PLOT_W - 2 * PAD),
    y: PAD + ((c.coords[1] - yMin) / ySpan) * (PLOT_H - 2 * PAD),
  }));
}

export function renderScatterplot(
  root: HTMLElement,
  overview: OverviewPayload,
  selection: Selection,
  handlers: ScatterHandlers,
): void {
  root.textContent = "";
  const svg = document.createElementNS(SVG_NS, "svg");
  svg.setAttribute("class", "scatter-svg");
  svg.setAttribute("width", String(PLOT_W));
  svg.setAttribute("height", String(PLOT_H));
  svg.setAttribute("viewBox", `0 0 ${PLOT_W} ${PLOT_H}`);

  const placed = place(overview);
  for (const p of placed) {
    const dot = document.createElementNS(SVG_NS, "circle");
    const selected = p.seen ? selection.seen.has(p.name) : selection.unseen.has(p.name);
    dot.setAttribute("cx", String(p.x));
    dot.setAttribute("cy", String(p.y));
    dot.setAttribute("r", "6");
    dot.setAttribute(
      "fill",
      p.seen
        ? selected
          ? COLORS.selectedSeen
          : COLORS.seen
        : selected
          ? COLORS.selectedUnseen
          : COLORS.unseen,
    );
    dot.setAttribute("class", `dot ${p.seen ? "seen" : "unseen"}${selected ? " selected" : ""}`);
    dot.setAttribute("data-name", p.name);
    if (!p.seen) {
      dot.addEventListener("click", (ev) => {
        ev.stopPropagation();
        handlers.onToggleUnseen(p.name);
      });
    }
    svg.appendChild(dot);
    const tip = document.createElementNS(SVG_NS, "title");
    tip.textContent = p.name;
    dot.appendChild(tip);
  }

  // brush: drag on empty canvas selects the seen classes inside the box
  let start: [number, number] | null = null;
  let box: SVGRectElement | null = null;

  const toLocal = (ev: MouseEvent): [number, number] => {
    const bounds = svg.getBoundingClientRect();
    return [ev.clientX - bounds.left, ev.clientY - bounds.top];
  };

  svg.addEventListener("mousedown", (ev) => {
    if ((ev.target as Element).tagName === "circle") return;
    start = toLocal(ev);
    box = document.createElementNS(SVG_NS, "rect");
    box.setAttribute("class", "brush-box");
    box.setAttribute("fill", "rgba(120, 150, 190, 0.2)");
    box.setAttribute("stroke", "rgba(120, 150, 190, 0.8)");
    svg.appendChild(box);
  });

  svg.addEventListener("mousemove", (ev) => {
    if (!start || !box) return;
    const [x, y] = toLocal(ev);
    box.setAttribute("x", String(Math.min(start[0], x)));
    box.setAttribute("y", String(Math.min(start[1], y)));
    box.setAttribute("width", String(Math.abs(x - start[0])));
    box.setAttribute("height", String(Math.abs(y - start[1])));
  });

  svg.addEventListener("mouseup", (ev) => {
    if (!start) return;
    const [x, y] = toLocal(ev);
    const x0 = Math.min(start[0], x);
    const x1 = Math.max(start[0], x);
    const y0 = Math.min(start[1], y);
    const y1 = Math.max(start[1], y);
    start = null;
    box?.remove();
    box = null;
    const hit = placed
      .filter((p) => p.seen && p.x >= x0 && p.x <= x1 && p.y >= y0 && p.y <= y1)
      .map((p) => p.name);
    handlers.onBrushSeen(hit);
  });

  root.appendChild(svg);
}
