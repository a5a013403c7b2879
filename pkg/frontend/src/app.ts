/** DOM wiring for the operator console. All policy/simulator logic lives
 * on the service side; this file only moves pixels and JSON.
 */

import { ApiError, ConnectionError, ServiceClient } from "./api.js";
import { displayToImage, inBounds, SCALE_CHOICES } from "./coords.js";
import { Playback } from "./playback.js";
import { drawFrame, drawMaskOverlay, drawPendingClicks, loadImage } from "./render.js";
import { UiSession } from "./session.js";
import { SKILLS, type SkillName, type SplitName } from "./types.js";

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
};

const canvas = $<HTMLCanvasElement>("scene");
const ctx = canvas.getContext("2d")!;
const notices = $<HTMLDivElement>("notices");
const banner = $<HTMLDivElement>("banner");
const sceneMeta = $<HTMLSpanElement>("scene-meta");
const runButton = $<HTMLButtonElement>("run");
const newSceneButton = $<HTMLButtonElement>("new-scene");
const textForm = $<HTMLFormElement>("text-form");
const textInput = $<HTMLInputElement>("text-input");
const scrubber = $<HTMLInputElement>("scrubber");
const stepLabel = $<HTMLSpanElement>("step-label");
const skillBar = $<HTMLDivElement>("skill-bar");
const scaleSelect = $<HTMLSelectElement>("scale");
const hint = $<HTMLSpanElement>("hint");

const state = new UiSession();
let client = new ServiceClient(readBaseUrl());
let scale = 10;
let frameImage: HTMLImageElement | null = null;
let playback: Playback | null = null;
let playTimer: number | null = null;
const PLAY_INTERVAL_MS = 120;

function readBaseUrl(): string {
  const input = $<HTMLInputElement>("base-url");
  return input.value.replace(/\/$/, "");
}

function notify(message: string, kind: "error" | "info" = "error"): void {
  const note = document.createElement("div");
  note.className = `notice ${kind}`;
  note.textContent = message;
  const close = document.createElement("button");
  close.textContent = "x";
  close.onclick = () => note.remove();
  note.appendChild(close);
  notices.appendChild(note);
}

function setBanner(result: { success: boolean; steps: number } | null): void {
  if (!result) {
    banner.className = "banner hidden";
    banner.textContent = "";
    return;
  }
  banner.className = `banner ${result.success ? "success" : "failure"}`;
  banner.textContent = result.success
    ? `success in ${result.steps} steps`
    : `failed after ${result.steps} steps`;
}

function updateControls(): void {
  runButton.disabled = !state.canRun || state.busy;
  newSceneButton.disabled = state.busy;
  for (const button of skillBar.querySelectorAll("button")) {
    button.classList.toggle("active", button.dataset.skill === state.skill);
  }
  hint.textContent = state.awaitingSecondClick
    ? "click the second object"
    : state.canRun
      ? "task set - press Run"
      : state.phase === "collecting"
        ? "click a target or type an instruction"
        : "";
}

async function redraw(): Promise<void> {
  if (!state.scene) return;
  const { width, height } = state.scene;
  canvas.width = width * scale;
  canvas.height = height * scale;
  if (frameImage) {
    drawFrame(ctx, frameImage, scale, width, height);
  }
  drawPendingClicks(ctx, state.clicks, scale);
  drawMaskOverlay(ctx, state.mask, scale);
}

async function showFrame(b64: string): Promise<void> {
  frameImage = await loadImage(b64);
  await redraw();
}

async function newScene(): Promise<void> {
  const seedInput = $<HTMLInputElement>("seed");
  const seed = seedInput.value
    ? Number(seedInput.value)
    : Math.floor(Math.random() * 1_000_000);
  seedInput.value = String(seed);
  const split = $<HTMLSelectElement>("split").value as SplitName;
  const distractors = Number($<HTMLSelectElement>("distractors").value);
  client = new ServiceClient(readBaseUrl());
  try {
    state.beginRequest();
    updateControls();
    const created = await client.createSession({ seed, distractors, split });
    state.sceneLoaded({
      sessionId: created.id,
      frameB64: created.frame_png_b64,
      width: created.w,
      height: created.h,
      seed,
      split,
    });
    setBanner(null);
    stopPlayback();
    sceneMeta.textContent = `session ${created.id} | split ${split} | seed ${seed}`;
    await showFrame(created.frame_png_b64);
  } catch (err) {
    state.failRequest();
    if (err instanceof ConnectionError) {
      notify(`cannot reach service at ${readBaseUrl()}`);
    } else if (err instanceof ApiError) {
      notify(`service rejected the scene: ${err.message}`);
    } else {
      throw err;
    }
  } finally {
    if (state.busy) state.failRequest();
    updateControls();
  }
}

async function submitClicks(): Promise<void> {
  if (!state.scene) return;
  const [primary, secondary] = state.clicks;
  try {
    state.beginRequest();
    updateControls();
    const response = await client.setTaskClick(state.scene.sessionId, {
      skill: state.skill,
      primary,
      ...(secondary ? { secondary } : {}),
    });
    if (response.error) {
      state.taskRejected();
      notify(`task failed: ${response.error}`);
    } else {
      state.taskAccepted(response.mask);
    }
  } catch (err) {
    state.taskRejected();
    notify(err instanceof Error ? err.message : String(err));
  } finally {
    await redraw();
    updateControls();
  }
}

async function submitText(text: string): Promise<void> {
  if (!state.scene) return;
  try {
    state.beginRequest();
    updateControls();
    const response = await client.setTaskText(state.scene.sessionId, { text });
    if (response.error) {
      state.taskRejected();
      notify(`task failed: ${response.error}${response.detail ? ` (${response.detail})` : ""}`);
    } else {
      state.taskAccepted(response.mask);
    }
  } catch (err) {
    state.taskRejected();
    notify(err instanceof Error ? err.message : String(err));
  } finally {
    await redraw();
    updateControls();
  }
}

function stopPlayback(): void {
  if (playTimer !== null) {
    window.clearInterval(playTimer);
    playTimer = null;
  }
  playback = null;
  scrubber.disabled = true;
  stepLabel.textContent = "";
}

async function showPlaybackFrame(): Promise<void> {
  if (!playback) return;
  scrubber.value = String(playback.position);
  stepLabel.textContent = `${playback.position}/${playback.maxIndex}`;
  await showFrame(playback.current);
}

async function runRollout(): Promise<void> {
  if (!state.scene) return;
  const maxSteps = Number($<HTMLInputElement>("max-steps").value) || 60;
  try {
    state.beginRequest();
    updateControls();
    const result = await client.rollout(state.scene.sessionId, {
      max_steps: maxSteps,
    });
    state.rolloutFinished({
      success: result.success,
      steps: result.actions.length,
    });
    setBanner({ success: result.success, steps: result.actions.length });
    playback = new Playback(result.frames);
    scrubber.disabled = false;
    scrubber.min = "0";
    scrubber.max = String(playback.maxIndex);
    playback.playing = true;
    playTimer = window.setInterval(async () => {
      if (playback && playback.playing) {
        if (!playback.tick()) stopTimerOnly();
        await showPlaybackFrame();
      }
    }, PLAY_INTERVAL_MS);
    await showPlaybackFrame();
  } catch (err) {
    state.failRequest();
    if (err instanceof ApiError && err.code === "busy") {
      notify("the session is busy with another rollout");
    } else if (err instanceof ApiError && err.code === "task_unset") {
      notify("set a task first");
    } else {
      notify(err instanceof Error ? err.message : String(err));
    }
  } finally {
    updateControls();
  }
}

function stopTimerOnly(): void {
  if (playTimer !== null) {
    window.clearInterval(playTimer);
    playTimer = null;
  }
}

canvas.addEventListener("click", async (ev) => {
  if (!state.scene || state.busy) return;
  const rect = canvas.getBoundingClientRect();
  const [px, py] = displayToImage(
    ev.clientX - rect.left,
    ev.clientY - rect.top,
    scale,
  );
  if (!inBounds(px, py, state.scene.width, state.scene.height)) return;
  const complete = state.addClick([px, py]);
  await redraw();
  updateControls();
  if (complete) await submitClicks();
});

for (const skill of SKILLS) {
  const button = document.createElement("button");
  button.textContent = skill.replace("_", " ");
  button.dataset.skill = skill;
  button.onclick = () => {
    state.selectSkill(skill);
    void redraw().then(updateControls);
  };
  skillBar.appendChild(button);
}

document.addEventListener("keydown", (ev) => {
  const idx = Number(ev.key) - 1;
  if (idx >= 0 && idx < SKILLS.length && !state.busy) {
    state.selectSkill(SKILLS[idx] as SkillName);
    void redraw().then(updateControls);
  }
});

for (const choice of SCALE_CHOICES) {
  const option = document.createElement("option");
  option.value = String(choice);
  option.textContent = choice === 1 ? "1x (pixel-accurate)" : `${choice}x`;
  if (choice === scale) option.selected = true;
  scaleSelect.appendChild(option);
}
scaleSelect.onchange = () => {
  scale = Number(scaleSelect.value);
  void redraw();
};

scrubber.addEventListener("input", async () => {
  if (!playback) return;
  playback.playing = false;
  stopTimerOnly();
  playback.scrubTo(Number(scrubber.value));
  await showPlaybackFrame();
});

textForm.addEventListener("submit", (ev) => {
  ev.preventDefault();
  const text = textInput.value.trim().toLowerCase();
  if (text) void submitText(text);
});

runButton.onclick = () => void runRollout();
newSceneButton.onclick = () => void newScene();

updateControls();
void client.health().then((ok) => {
  if (!ok) notify(`service not reachable at ${readBaseUrl()} - start it with: maskmanip serve`, "info");
});
