/** Operator-session state machine.
 *
 * Pure logic, no DOM: enforces click-count-vs-arity, single in-flight
 * request, and the task lifecycle (a rollout consumes the task, matching
 * the service's behavior).
 */

import { SKILL_ARITY, type MaskPixel, type SkillName } from "./types.js";

export type Phase =
  | "no-session"
  | "collecting" // scene shown, gathering clicks / text
  | "task-set" // mask echoed by the service, ready to run
  | "in-flight" // one request outstanding
  | "playback"; // rollout finished, frames available

export interface SceneInfo {
  sessionId: string;
  frameB64: string;
  width: number;
  height: number;
  seed: number;
  split: string;
}

export interface RolloutResult {
  success: boolean;
  steps: number;
}

export class UiSession {
  phase: Phase = "no-session";
  scene: SceneInfo | null = null;
  skill: SkillName = "pick";
  clicks: [number, number][] = [];
  mask: MaskPixel[] = [];
  lastResult: RolloutResult | null = null;

  get clicksNeeded(): number {
    return SKILL_ARITY[this.skill];
  }

  /** A second click is still required before the task can be submitted. */
  get awaitingSecondClick(): boolean {
    return (
      this.phase === "collecting" &&
      this.clicks.length > 0 &&
      this.clicks.length < this.clicksNeeded
    );
  }

  get canRun(): boolean {
    return this.phase === "task-set";
  }

  get busy(): boolean {
    return this.phase === "in-flight";
  }

  beginRequest(): void {
    if (this.busy) {
      throw new Error("a request is already in flight");
    }
    this.phase = "in-flight";
  }

  failRequest(): void {
    // drop back to collecting so the operator can retry
    this.phase = this.scene ? "collecting" : "no-session";
    this.clicks = [];
  }

  sceneLoaded(scene: SceneInfo): void {
    this.scene = scene;
    this.phase = "collecting";
    this.clicks = [];
    this.mask = [];
    this.lastResult = null;
  }

  selectSkill(skill: SkillName): void {
    if (this.busy) return;
    this.skill = skill;
    this.clicks = [];
    this.mask = [];
    if (this.phase === "task-set" || this.phase === "playback") {
      this.phase = "collecting";
    }
  }

  /** Record a click; true when enough clicks exist to submit the task. */
  addClick(pixel: [number, number]): boolean {
    if (this.phase !== "collecting" && this.phase !== "playback") {
      return false;
    }
    if (this.phase === "playback") {
      // re-clicking after a rollout starts a fresh task on the end state
      this.phase = "collecting";
      this.clicks = [];
      this.mask = [];
    }
    if (this.clicks.length >= this.clicksNeeded) {
      throw new Error("click count exceeds skill arity");
    }
    this.clicks.push(pixel);
    return this.clicks.length === this.clicksNeeded;
  }

  taskAccepted(mask: MaskPixel[]): void {
    this.mask = mask;
    this.phase = "task-set";
  }

  taskRejected(): void {
    this.clicks = [];
    this.mask = [];
    this.phase = "collecting";
  }

  rolloutFinished(result: RolloutResult): void {
    this.lastResult = result;
    // the service consumed the task; a new task or scene is needed
    this.clicks = [];
    this.mask = [];
    this.phase = "playback";
  }
}
