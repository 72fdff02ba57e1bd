// DOM glue: renders the current SessionState and routes keyboard/button
// events through the pure state module and the API client.

import { ApiError, TriageApi } from "./api.js";
import type { Category, IterationPlan } from "./api.js";
import { actionForKey } from "./keyboard.js";
import {
  applyEnabled,
  beginAssignment,
  currentCard,
  initialState,
  moveCursor,
  settleAssignment,
  tallies,
  type SessionState,
} from "./state.js";

const PAGE_SIZE = 500; // the desk-scale error lists are small; fetch once

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function handLabel(on: boolean): string {
  return on ? "ON" : "OFF";
}

class App {
  private state: SessionState = initialState([]);
  private planVisible = false;
  private lastApplyHash: string | null = null;

  constructor(private readonly api: TriageApi) {}

  async start(): Promise<void> {
    try {
      const page = await this.api.listErrors(1, PAGE_SIZE);
      this.state = initialState(page.errors);
    } catch (err) {
      this.state = { ...this.state, statusMessage: `could not load errors: ${describe(err)}` };
    }
    document.addEventListener("keydown", (ev) => this.onKey(ev));
    el<HTMLButtonElement>("apply-btn").addEventListener("click", () => void this.apply());
    this.render();
  }

  private onKey(ev: KeyboardEvent): void {
    const action = actionForKey(ev.key);
    if (action.kind === "none") return;
    ev.preventDefault();
    if (action.kind === "move") {
      this.state = moveCursor(this.state, action.delta);
    } else if (action.kind === "assign") {
      void this.assign(action.category);
    } else if (action.kind === "retry" && this.state.pendingRetry) {
      const { frameId, category } = this.state.pendingRetry;
      void this.postAssignment(frameId, category);
    } else if (action.kind === "toggle-plan") {
      this.planVisible = !this.planVisible;
      void this.refreshPlan();
    }
    this.render();
  }

  private async assign(category: Category): Promise<void> {
    const card = currentCard(this.state);
    if (!card) return;
    this.state = beginAssignment(this.state, category);
    this.render();
    await this.postAssignment(card.frame_id, category);
  }

  private async postAssignment(frameId: string, category: Category): Promise<void> {
    try {
      await this.api.assignCategory(frameId, category);
      this.state = settleAssignment(this.state, frameId, category, true);
      this.state = moveCursor(this.state, 1); // advance to the next card
    } catch (err) {
      this.state = settleAssignment(this.state, frameId, category, false, describe(err));
    }
    this.render();
    if (this.planVisible) await this.refreshPlan();
  }

  private async refreshPlan(): Promise<void> {
    const panel = el("plan-panel");
    panel.hidden = !this.planVisible;
    if (!this.planVisible) return;
    try {
      const plan = await this.api.getPlan();
      el("plan-body").textContent = plan ? formatPlan(plan) : "categorize at least one error to build a plan";
    } catch (err) {
      el("plan-body").textContent = `plan unavailable: ${describe(err)}`;
    }
  }

  private async apply(): Promise<void> {
    try {
      const result = await this.api.applyPlan();
      this.lastApplyHash = result.hash;
      this.state = { ...this.state, statusMessage: `applied: new config ${result.hash} at ${result.path}` };
      await this.refreshPlan();
    } catch (err) {
      this.state = { ...this.state, statusMessage: `apply failed: ${describe(err)}` };
    }
    this.render();
  }

  private render(): void {
    const card = currentCard(this.state);
    const counter = el("counter");
    const img = el<HTMLImageElement>("frame-img");
    if (!card) {
      counter.textContent = "0 / 0";
      img.removeAttribute("src");
    } else {
      counter.textContent = `${this.state.cursor + 1} / ${this.state.cards.length}`;
      img.src = this.api.frameUrl(card.frame_id);
      el("hand-left").textContent = `left: true ${handLabel(card.label_left)} / pred ${handLabel(card.pred_left)} (${card.score_left.toFixed(2)})`;
      el("hand-right").textContent = `right: true ${handLabel(card.label_right)} / pred ${handLabel(card.pred_right)} (${card.score_right.toFixed(2)})`;
      el("card-meta").textContent = `${card.frame_id} · ${card.behavior} · ${card.lighting}${card.occluded ? " · occluded" : ""}`;
      el("card-category").textContent = card.category;
      el("card-category").className = card.category === "unassigned" ? "cat unset" : "cat set";
    }
    el("status-line").textContent = this.state.statusMessage;
    el("status-line").className = this.state.writeStatus === "failed" ? "status bad" : "status";
    const tally = tallies(this.state);
    el("tally-line").textContent = Object.entries(tally)
      .map(([k, v]) => `${k}:${v}`)
      .join("  ");
    const applyBtn = el<HTMLButtonElement>("apply-btn");
    applyBtn.disabled = !applyEnabled(this.state);
    if (this.lastApplyHash) el("apply-result").textContent = `last applied config: ${this.lastApplyHash}`;
  }
}

function formatPlan(plan: IterationPlan): string {
  const lines: string[] = [];
  lines.push(`tallies: ${JSON.stringify(plan.counts)}`);
  lines.push(`added sequences: ${plan.added_sequences}`);
  for (const [behavior, delta] of Object.entries(plan.behavior_weight_deltas)) {
    lines.push(`weight ${behavior}: +${delta.toFixed(4)}`);
  }
  if (plan.enable_cross_reach) lines.push("enable cross-reach scripts");
  if (plan.motion_blur_frames_delta > 0) lines.push(`motion blur frames: +${plan.motion_blur_frames_delta}`);
  return lines.join("\n");
}

function describe(err: unknown): string {
  if (err instanceof ApiError) return `${err.status} ${err.message}`;
  return err instanceof Error ? err.message : String(err);
}

const api = new TriageApi((input, init) => fetch(input, init));
void new App(api).start();
