// Review-session state. Pure data + transition functions so the whole
// thing is testable without a DOM: the UI layer just renders whatever
// `SessionState` currently says.

import type { Category, ErrorCard } from "./api.js";

export const ASSIGNABLE: Category[] = ["occlusion", "both_off", "opposite_side", "blur", "other"];

export type WriteStatus = "idle" | "saving" | "saved" | "failed";

export interface SessionState {
  cards: ErrorCard[];
  cursor: number;
  writeStatus: WriteStatus;
  // last assignment that failed, kept so the user can retry with `r`
  pendingRetry: { frameId: string; category: Category } | null;
  statusMessage: string;
}

export function initialState(cards: ErrorCard[]): SessionState {
  return {
    cards,
    cursor: 0,
    writeStatus: "idle",
    pendingRetry: null,
    statusMessage: cards.length ? "" : "no errors to review",
  };
}

export function currentCard(state: SessionState): ErrorCard | null {
  return state.cards[state.cursor] ?? null;
}

export function moveCursor(state: SessionState, delta: number): SessionState {
  if (!state.cards.length) return state;
  const cursor = Math.min(state.cards.length - 1, Math.max(0, state.cursor + delta));
  return { ...state, cursor };
}

/** Optimistically mark the card; the caller then POSTs and settles. */
export function beginAssignment(state: SessionState, category: Category): SessionState {
  const card = currentCard(state);
  if (!card) return state;
  return {
    ...state,
    writeStatus: "saving",
    pendingRetry: null,
    statusMessage: `saving ${card.frame_id} = ${category}...`,
  };
}

export function settleAssignment(
  state: SessionState,
  frameId: string,
  category: Category,
  ok: boolean,
  detail = "",
): SessionState {
  if (!ok) {
    return {
      ...state,
      writeStatus: "failed",
      pendingRetry: { frameId, category },
      statusMessage: `save failed for ${frameId}: ${detail || "server unreachable"} (press r to retry)`,
    };
  }
  const cards = state.cards.map((c) => (c.frame_id === frameId ? { ...c, category } : c));
  return {
    ...state,
    cards,
    writeStatus: "saved",
    pendingRetry: null,
    statusMessage: `${frameId} = ${category}`,
  };
}

export function categorizedCount(state: SessionState): number {
  return state.cards.filter((c) => c.category !== "unassigned").length;
}

export function tallies(state: SessionState): Record<string, number> {
  const out: Record<string, number> = {};
  for (const cat of ASSIGNABLE) out[cat] = 0;
  for (const card of state.cards) {
    if (card.category !== "unassigned") out[card.category] += 1;
  }
  return out;
}

/** The apply button is only live once at least one error is categorized. */
export function applyEnabled(state: SessionState): boolean {
  return categorizedCount(state) > 0;
}
