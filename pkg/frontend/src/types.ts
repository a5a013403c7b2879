/** Wire types for the rollout service. Field names must match the server. */

export type SplitName = "seen" | "unseen_seen_category" | "unseen_category";

export type SkillName =
  | "pick"
  | "move_near"
  | "knock_over"
  | "place_upright"
  | "place_into";

/** Clicks required per skill; mirrors the template arity table. */
export const SKILL_ARITY: Record<SkillName, 1 | 2> = {
  pick: 1,
  move_near: 2,
  knock_over: 1,
  place_upright: 1,
  place_into: 2,
};

export const SKILLS: SkillName[] = [
  "pick",
  "move_near",
  "knock_over",
  "place_upright",
  "place_into",
];

export interface CreateSessionRequest {
  seed: number;
  distractors: number;
  split: SplitName;
}

export interface CreateSessionResponse {
  id: string;
  frame_png_b64: string;
  w: number;
  h: number;
}

export interface MaskPixel {
  x: number;
  y: number;
  v: number; // 1.0 target, 0.5 secondary
}

export interface TaskResponse {
  verb: number;
  mask: MaskPixel[];
  error?: string;
  detail?: string;
}

export interface TaskTextRequest {
  text: string;
}

export interface TaskClickRequest {
  skill: SkillName;
  primary: [number, number];
  secondary?: [number, number];
}

export interface RolloutRequest {
  max_steps: number;
}

export interface RolloutResponse {
  success: boolean;
  frames: string[]; // base64 PNGs
  actions: number[][]; // 7 numbers each
}

export interface ServiceError {
  error: string;
  detail?: string;
}
