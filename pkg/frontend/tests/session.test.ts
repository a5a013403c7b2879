import { beforeEach, describe, expect, it } from "vitest";

import { UiSession } from "../src/session.js";

function loadedSession(): UiSession {
  const s = new UiSession();
  s.sceneLoaded({
    sessionId: "s0001",
    frameB64: "",
    width: 48,
    height: 48,
    seed: 1,
    split: "seen",
  });
  return s;
}

describe("operator state machine", () => {
  let s: UiSession;
  beforeEach(() => {
    s = loadedSession();
  });

  it("needs one click for pick, two for move_near", () => {
    s.selectSkill("pick");
    expect(s.addClick([1, 2])).toBe(true);
    s = loadedSession();
    s.selectSkill("move_near");
    expect(s.addClick([1, 2])).toBe(false);
    expect(s.awaitingSecondClick).toBe(true);
    expect(s.addClick([3, 4])).toBe(true);
  });

  it("never lets clicks exceed the skill arity", () => {
    s.selectSkill("pick");
    s.addClick([1, 1]);
    expect(() => s.addClick([2, 2])).toThrow(/arity/);
  });

  it("switching skill clears pending clicks", () => {
    s.selectSkill("move_near");
    s.addClick([1, 1]);
    s.selectSkill("place_into");
    expect(s.clicks).toEqual([]);
    expect(s.awaitingSecondClick).toBe(false);
  });

  it("run is enabled only after the service echoes a mask", () => {
    expect(s.canRun).toBe(false);
    s.selectSkill("pick");
    s.addClick([5, 5]);
    s.taskAccepted([{ x: 5, y: 5, v: 1.0 }]);
    expect(s.canRun).toBe(true);
  });

  it("prevents double submits while a request is in flight", () => {
    s.beginRequest();
    expect(s.busy).toBe(true);
    expect(() => s.beginRequest()).toThrow(/in flight/);
    s.failRequest();
    expect(s.busy).toBe(false);
  });

  it("a rollout consumes the task", () => {
    s.selectSkill("pick");
    s.addClick([5, 5]);
    s.taskAccepted([{ x: 5, y: 5, v: 1.0 }]);
    s.beginRequest();
    s.rolloutFinished({ success: true, steps: 12 });
    expect(s.canRun).toBe(false);
    expect(s.phase).toBe("playback");
    expect(s.lastResult).toEqual({ success: true, steps: 12 });
    // re-clicking starts collecting a fresh task
    expect(s.addClick([7, 7])).toBe(true);
    expect(s.phase).toBe("collecting");
  });

  it("a rejected task returns to collecting", () => {
    s.selectSkill("move_near");
    s.addClick([1, 1]);
    s.addClick([2, 2]);
    s.beginRequest();
    s.taskRejected();
    expect(s.phase).toBe("collecting");
    expect(s.clicks).toEqual([]);
  });
});
