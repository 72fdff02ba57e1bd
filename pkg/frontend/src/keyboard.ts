// Keyboard map for the review gallery: digits 1-5 assign categories,
// arrows navigate, r retries a failed save, p toggles the plan panel.

import type { Category } from "./api.js";
import { ASSIGNABLE } from "./state.js";

export type Action =
  | { kind: "assign"; category: Category }
  | { kind: "move"; delta: number }
  | { kind: "retry" }
  | { kind: "toggle-plan" }
  | { kind: "none" };

export function actionForKey(key: string): Action {
  const digit = Number.parseInt(key, 10);
  if (digit >= 1 && digit <= ASSIGNABLE.length) {
    return { kind: "assign", category: ASSIGNABLE[digit - 1] };
  }
  switch (key) {
    case "ArrowRight":
    case "ArrowDown":
      return { kind: "move", delta: 1 };
    case "ArrowLeft":
    case "ArrowUp":
      return { kind: "move", delta: -1 };
    case "r":
      return { kind: "retry" };
    case "p":
      return { kind: "toggle-plan" };
    default:
      return { kind: "none" };
  }
}
