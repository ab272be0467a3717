/**
 * False-positive decomposition panel: for the hovered bar cell, one row per
 * wrongly predicted class, descending by contribution (server order), with
 * the cell total annotated for cross-checking against the hovered bar.
 */

import type { DecompositionPayload } from "./api.js";

export function renderDecomposition(root: HTMLElement, payload: DecompositionPayload | null, attributeName: string | null): void {
  root.textContent = "";
  if (payload === null) {
    const hint = document.createElement("p");
    hint.className = "panel-hint";
    hint.textContent = "Hover a bar segment to see which classes it was mispredicted as.";
    root.appendChild(hint);
    return;
  }

  const title = document.createElement("h3");
  title.textContent = `${attributeName ?? `attribute ${payload.attribute}`} / ${payload.category_name} / ${payload.side}`;
  root.appendChild(title);

  const total = document.createElement("p");
  total.className = "decomp-total";
  total.textContent = `cell total ${payload.total.toFixed(4)}`;
  root.appendChild(total);

  if (payload.breakdown.length === 0) {
    const empty = document.createElement("p");
    empty.className = "panel-hint";
    empty.textContent = "No mass in this cell.";
    root.appendChild(empty);
    return;
  }

  const maxValue = payload.breakdown[0].value || 1;
  const list = document.createElement("div");
  list.className = "decomp-rows";
  for (const entry of payload.breakdown) {
    const row = document.createElement("div");
    row.className = "decomp-row";

    const name = document.createElement("span");
    name.className = "decomp-name";
    name.textContent = entry.predicted;
    row.appendChild(name);

    const bar = document.createElement("span");
    bar.className = "decomp-bar";
    bar.style.width = `${(entry.value / maxValue) * 160}px`;
    row.appendChild(bar);

    const value = document.createElement("span");
    value.className = "decomp-value";
    value.textContent = entry.value.toFixed(4);
    row.appendChild(value);

    list.appendChild(row);
  }
  root.appendChild(list);
}
