/**
 * Client-side selection state. The server never stores what is selected;
 * every change here turns into one request for fresh matrices.
 */

import type { SortKey } from "./api.js";

export interface Selection {
  seen: Set<string>;
  unseen: Set<string>;
  sort: SortKey;
}

export function initialSelection(): Selection {
  return { seen: new Set(), unseen: new Set(), sort: "total" };
}

export function toggleUnseen(selection: Selection, name: string): void {
  if (selection.unseen.has(name)) {
    selection.unseen.delete(name);
  } else {
    selection.unseen.add(name);
  }
}

/** Sorted copies keep query strings and render order deterministic. */
export function seenList(selection: Selection): string[] {
  return [...selection.seen].sort();
}

export function unseenList(selection: Selection): string[] {
  return [...selection.unseen].sort();
}

/**
 * Monotonic token dispenser so that out-of-order diagnostics responses are
 * dropped: only the response matching the newest token may render.
 */
export class LatestWins {
  private current = 0;

  next(): number {
    return ++this.current;
  }

  isCurrent(token: number): boolean {
    return token === this.current;
  }
}
