import { describe, expect, it } from "vitest";

import { CurvePayload, MotionDoc } from "../src/api.js";
import { EditorSession } from "../src/session.js";
import { SkeletonPanel } from "../src/skeleton.js";
import { TimelinePanel } from "../src/timeline.js";
import { FakeApi, KICK_TEXT } from "./fake_api.js";

const TINY: MotionDoc = {
  name: "tiny",
  joints: ["neck_yaw"],
  keyframes: [
    { t: 0.0, pos: { neck_yaw: 0.1 } },
    { t: 1.0, pos: { neck_yaw: -0.2 } },
  ],
};

async function loaded(motionText = KICK_TEXT, name = "kick") {
  const api = new FakeApi({ [name]: motionText });
  const session = new EditorSession(api, { debounceMs: 0 });
  await session.init();
  await session.load(name);
  return { api, session };
}

describe("curves", () => {
  it("shows the interpolate response verbatim", async () => {
    const { api, session } = await loaded();
    expect(api.interpolateCalls.length).toBeGreaterThan(0);
    const call = api.interpolateCalls[api.interpolateCalls.length - 1];
    expect(call.motion).toEqual(session.motion);
    expect(call.rate).toBe(100);

    const served: CurvePayload = {
      times: [0, 0.5, 1],
      positions: { neck_yaw: [0.125, 0.5, -0.25] },
      velocities: { neck_yaw: [0, 0.1, 0] },
      efforts: { neck_yaw: [1, 1, 1] },
      supports: ["both", "both", "both"],
    };
    api.nextCurves = served;
    await session.refreshPreview();
    expect(session.curves).toBe(served);

    const mount = document.createElement("div");
    const timeline = new TimelinePanel(session, mount);
    timeline.render();
    expect(timeline.lastDrawn).toBe(served);
    const active = mount.querySelectorAll("polyline");
    expect(active.length).toBeGreaterThan(0);
    // one time marker per keyframe of the loaded motion
    const markers = mount.querySelectorAll(".kf-line");
    expect(markers.length).toBe(session.motion!.keyframes.length);
  });

  it("keeps the old curves and raises the stale flag when the service fails", async () => {
    const { api, session } = await loaded();
    const good = session.curves;
    expect(good).not.toBeNull();
    expect(session.staleCurves).toBe(false);

    api.failInterpolate = true;
    session.setJointPosition(0, "neck_yaw", 0.2);
    await session.refreshPreview();
    expect(session.staleCurves).toBe(true);
    expect(session.curves).toBe(good);

    api.failInterpolate = false;
    await session.refreshPreview();
    expect(session.staleCurves).toBe(false);
    expect(session.curves).not.toBe(good);
  });
});

describe("skeleton", () => {
  it("asks fk for the exact keyframe pose when the cursor sits on a keyframe", async () => {
    const { api, session } = await loaded(JSON.stringify(TINY), "tiny");
    session.setCursor(1.0);
    await session.refreshPreview({ curves: false });
    const q = api.fkCalls[api.fkCalls.length - 1];
    expect(q).toEqual(TINY.keyframes[1].pos);
  });

  it("uses the nearest server sample between keyframes", async () => {
    const { api, session } = await loaded(JSON.stringify(TINY), "tiny");
    api.nextCurves = {
      times: [0, 0.5, 1],
      positions: { neck_yaw: [0.111, 0.222, 0.333] },
      velocities: { neck_yaw: [0, 0, 0] },
      efforts: { neck_yaw: [1, 1, 1] },
      supports: ["both", "both", "both"],
    };
    await session.refreshPreview();
    session.setCursor(0.49);
    await session.refreshPreview({ curves: false });
    const q = api.fkCalls[api.fkCalls.length - 1];
    expect(q).toEqual({ neck_yaw: 0.222 });
  });

  it("renders the fk response verbatim and flags failures as stale", async () => {
    const { api, session } = await loaded();
    const mount = document.createElement("div");
    const panel = new SkeletonPanel(session, mount);
    await session.refreshPreview();
    panel.render();
    expect(panel.lastDrawn).toBe(session.skeleton);
    expect(session.staleSkeleton).toBe(false);

    const good = session.skeleton;
    api.failFk = true;
    session.setCursor(session.motion!.keyframes[1].t);
    await session.refreshPreview({ curves: false });
    expect(session.staleSkeleton).toBe(true);
    expect(session.skeleton).toBe(good);
  });

  it("draws one segment per parented link present in the response", async () => {
    const { session } = await loaded();
    await session.refreshPreview();
    const mount = document.createElement("div");
    const panel = new SkeletonPanel(session, mount);
    panel.render();
    // the fake fk returns only the root link, so there must be no bones
    expect(mount.querySelectorAll("line.bone, .bone").length).toBe(0);
    expect(mount.querySelectorAll("circle").length).toBeGreaterThan(0);
  });
});
