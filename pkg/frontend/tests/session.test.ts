import { describe, expect, it } from "vitest";

import { ApiError, MotionDoc } from "../src/api.js";
import { EditorSession } from "../src/session.js";
import { FakeApi, KICK_TEXT } from "./fake_api.js";

async function loadedSession(opts: { confirmDiscard?: (name: string) => boolean } = {}) {
  const api = new FakeApi({ kick: KICK_TEXT });
  const session = new EditorSession(api, { debounceMs: 0, ...opts });
  await session.init();
  const ok = await session.load("kick");
  expect(ok).toBe(true);
  return { api, session };
}

describe("loading", () => {
  it("populates the session and starts clean", async () => {
    const { session } = await loadedSession();
    const doc = JSON.parse(KICK_TEXT) as MotionDoc;
    expect(session.motion).toEqual(doc);
    expect(session.baseline).toEqual(doc);
    expect(session.dirty).toBe(false);
    expect(session.canUndo).toBe(false);
    expect(session.selectedKeyframe).toBe(0);
    expect(session.selectedJoint).toBe(doc.joints[0]);
    expect(session.cursor).toBe(doc.keyframes[0].t);
    expect(session.schemaErrors).toEqual([]);
    expect(session.violations).toEqual([]);
  });

  it("reports a missing motion without touching state", async () => {
    const { session } = await loadedSession();
    const before = session.motion;
    const ok = await session.load("no_such_motion");
    expect(ok).toBe(false);
    expect(session.banner).toContain("no motion named");
    expect(session.motion).toBe(before);
  });

  it("asks before discarding unsaved edits", async () => {
    let asked = 0;
    let allow = false;
    const { session } = await loadedSession({
      confirmDiscard: () => ((asked += 1), allow),
    });
    session.setJointPosition(0, "neck_yaw", 0.5);
    expect(session.dirty).toBe(true);

    expect(await session.load("kick")).toBe(false);
    expect(asked).toBe(1);
    expect(session.motion!.keyframes[0].pos["neck_yaw"]).toBe(0.5);

    allow = true;
    expect(await session.load("kick")).toBe(true);
    expect(asked).toBe(2);
    expect(session.dirty).toBe(false);
  });
});

describe("editing", () => {
  it("marks the session dirty and undo restores the loaded state", async () => {
    const { session } = await loadedSession();
    session.setJointPosition(1, "neck_yaw", 0.25);
    expect(session.motion!.keyframes[1].pos["neck_yaw"]).toBe(0.25);
    expect(session.dirty).toBe(true);
    expect(session.canUndo).toBe(true);

    session.undo();
    expect(session.motion).toEqual(session.baseline);
    expect(session.dirty).toBe(false);
  });

  it("stacks undo across several edits", async () => {
    const { session } = await loadedSession();
    const original = session.motion!.keyframes[0].pos["neck_yaw"];
    session.setJointPosition(0, "neck_yaw", 0.1);
    session.setJointPosition(0, "neck_yaw", 0.2);
    session.setSupport(0, "left");
    session.undo();
    expect(session.motion!.keyframes[0].support).not.toBe("left");
    expect(session.motion!.keyframes[0].pos["neck_yaw"]).toBe(0.2);
    session.undo();
    expect(session.motion!.keyframes[0].pos["neck_yaw"]).toBe(0.1);
    session.undo();
    expect(session.motion!.keyframes[0].pos["neck_yaw"]).toBe(original);
    expect(session.dirty).toBe(false);
  });

  it("clamps keyframe times between neighbors", async () => {
    const { session } = await loadedSession();
    const doc = session.motion!;
    const before = doc.keyframes[1].t;
    const ceiling = doc.keyframes[2].t;

    session.setKeyframeTime(1, ceiling + 5);
    expect(doc.keyframes[1].t).toBeLessThan(ceiling);
    expect(doc.keyframes[1].t).toBeGreaterThan(before);

    session.setKeyframeTime(1, -3);
    expect(doc.keyframes[1].t).toBeGreaterThan(doc.keyframes[0].t);
    expect(session.schemaErrors).toEqual([]);
  });

  it("keeps efforts inside [0, 1]", async () => {
    const { session } = await loadedSession();
    session.setJointEffort(0, "neck_yaw", 3.5);
    expect(session.motion!.keyframes[0].eff!["neck_yaw"]).toBe(1);
    session.setJointEffort(0, "neck_yaw", -2);
    expect(session.motion!.keyframes[0].eff!["neck_yaw"]).toBe(0);
    expect(session.schemaErrors).toEqual([]);
  });

  it("duplicating and deleting keyframes keeps the document valid", async () => {
    const { session } = await loadedSession();
    const n = session.motion!.keyframes.length;
    session.duplicateKeyframe(0);
    expect(session.motion!.keyframes.length).toBe(n + 1);
    expect(session.schemaErrors).toEqual([]);
    session.deleteKeyframe(1);
    expect(session.motion!.keyframes.length).toBe(n);
    expect(session.schemaErrors).toEqual([]);
    session.undo();
    session.undo();
    expect(session.motion).toEqual(session.baseline);
  });
});

describe("joint limits", () => {
  it("flags out-of-limit values instead of saving them", async () => {
    const { api, session } = await loadedSession();
    const info = session.jointInfo("neck_pitch")!;
    session.setJointPosition(0, "neck_pitch", info.upper + 0.4);

    expect(session.violationAt(0, "neck_pitch")).toMatchObject({
      keyframe: 0,
      joint: "neck_pitch",
      upper: info.upper,
    });
    expect(session.canSave).toBe(false);
    expect(await session.save()).toBe(false);
    expect(api.putCalls).toHaveLength(0);

    session.setJointPosition(0, "neck_pitch", info.upper - 0.1);
    expect(session.violations).toEqual([]);
    expect(session.canSave).toBe(true);
  });
});

describe("saving", () => {
  it("PUTs the edited motion and clears the dirty flag", async () => {
    const { api, session } = await loadedSession();
    session.setJointPosition(2, "neck_yaw", 0.3);
    expect(session.dirty).toBe(true);

    expect(await session.save()).toBe(true);
    expect(api.putCalls).toHaveLength(1);
    expect(api.putCalls[0].name).toBe("kick");
    expect(api.putCalls[0].motion).toEqual(session.motion);
    expect(session.baseline).toEqual(session.motion);
    expect(session.dirty).toBe(false);
    expect(session.banner).toBeNull();
  });

  it("reloading after save reproduces the saved state", async () => {
    const { session } = await loadedSession();
    session.setJointPosition(1, "neck_yaw", -0.15);
    session.setSupport(2, "left");
    expect(await session.save()).toBe(true);
    const saved = structuredClone(session.motion);

    expect(await session.load("kick")).toBe(true);
    expect(session.motion).toEqual(saved);
    expect(session.dirty).toBe(false);
  });

  it("maps 400 diagnostics onto fields and stays dirty", async () => {
    const { api, session } = await loadedSession();
    session.setJointPosition(0, "neck_yaw", 0.4);
    api.failPut = new ApiError(400, "joints: unknown joint weird_joint", [
      { field: "joints", message: "unknown joint weird_joint" },
    ]);

    expect(await session.save()).toBe(false);
    expect(session.fieldErrors["joints"]).toContain("unknown joint");
    expect(session.banner).toContain("save rejected");
    expect(session.dirty).toBe(true);

    api.failPut = null;
    expect(await session.save()).toBe(true);
    expect(session.fieldErrors).toEqual({});
  });
});
