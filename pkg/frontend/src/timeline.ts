/**
 * Timeline panel: joint-angle curves over time with draggable keyframe
 * handles and a playhead. The polylines are a direct plot of the samples
 * returned by /api/interpolate; nothing is interpolated client-side, so
 * what the user sees is exactly what the motion player will do.
 */

import { CurvePayload, MotionDoc } from "./api.js";
import { EditorSession } from "./session.js";

const SVG_NS = "http://www.w3.org/2000/svg";
const WIDTH = 760;
const HEIGHT = 260;
const PAD = { left: 44, right: 12, top: 10, bottom: 22 };

interface DragState {
  keyframe: number;
  mode: "time" | "value";
}

export class TimelinePanel {
  readonly svg: SVGSVGElement;
  /** The exact payload reference last rendered; tests compare it to the server response. */
  lastDrawn: CurvePayload | null = null;

  private readonly session: EditorSession;
  private drag: DragState | null = null;
  private timeSpan = 1;
  private valueLo = -1;
  private valueHi = 1;

  constructor(session: EditorSession, mount: HTMLElement) {
    this.session = session;
    this.svg = document.createElementNS(SVG_NS, "svg") as SVGSVGElement;
    this.svg.setAttribute("viewBox", `0 0 ${WIDTH} ${HEIGHT}`);
    this.svg.setAttribute("class", "timeline");
    mount.appendChild(this.svg);

    this.svg.addEventListener("pointermove", (ev) => this.onPointerMove(ev as PointerEvent));
    this.svg.addEventListener("pointerup", () => (this.drag = null));
    this.svg.addEventListener("pointerleave", () => (this.drag = null));
    this.svg.addEventListener("pointerdown", (ev) => this.onBackgroundDown(ev as PointerEvent));
  }

  private xOf(t: number): number {
    const usable = WIDTH - PAD.left - PAD.right;
    return PAD.left + (t / this.timeSpan) * usable;
  }

  private tOf(x: number): number {
    const usable = WIDTH - PAD.left - PAD.right;
    return ((x - PAD.left) / usable) * this.timeSpan;
  }

  private yOf(v: number): number {
    const usable = HEIGHT - PAD.top - PAD.bottom;
    const frac = (v - this.valueLo) / (this.valueHi - this.valueLo);
    return HEIGHT - PAD.bottom - frac * usable;
  }

  private vOf(y: number): number {
    const usable = HEIGHT - PAD.top - PAD.bottom;
    const frac = (HEIGHT - PAD.bottom - y) / usable;
    return this.valueLo + frac * (this.valueHi - this.valueLo);
  }

  private toLocal(ev: PointerEvent): { x: number; y: number } {
    const rect = this.svg.getBoundingClientRect();
    const sx = rect.width > 0 ? WIDTH / rect.width : 1;
    const sy = rect.height > 0 ? HEIGHT / rect.height : 1;
    return { x: (ev.clientX - rect.left) * sx, y: (ev.clientY - rect.top) * sy };
  }

  render(): void {
    const session = this.session;
    const motion = session.motion;
    this.svg.replaceChildren();
    this.lastDrawn = session.curves;
    if (motion === null) return;

    const lastT = motion.keyframes[motion.keyframes.length - 1].t;
    this.timeSpan = Math.max(lastT, 1e-6);
    this.computeValueRange(motion, session.curves);

    this.drawAxes();
    if (session.curves !== null) this.drawCurves(session.curves, session.selectedJoint);
    this.drawKeyframeHandles(motion);
    this.drawPlayhead(session.cursor);
  }

  private computeValueRange(motion: MotionDoc, curves: CurvePayload | null): void {
    let lo = Infinity;
    let hi = -Infinity;
    for (const kf of motion.keyframes) {
      for (const v of Object.values(kf.pos)) {
        lo = Math.min(lo, v);
        hi = Math.max(hi, v);
      }
    }
    if (curves !== null) {
      for (const samples of Object.values(curves.positions)) {
        for (const v of samples) {
          lo = Math.min(lo, v);
          hi = Math.max(hi, v);
        }
      }
    }
    if (!Number.isFinite(lo) || !Number.isFinite(hi)) {
      lo = -1;
      hi = 1;
    }
    const pad = Math.max(0.1, (hi - lo) * 0.1);
    this.valueLo = lo - pad;
    this.valueHi = hi + pad;
  }

  private drawAxes(): void {
    const axis = document.createElementNS(SVG_NS, "path");
    const y0 = this.yOf(0);
    axis.setAttribute(
      "d",
      `M ${PAD.left} ${PAD.top} V ${HEIGHT - PAD.bottom} H ${WIDTH - PAD.right}` +
        (y0 >= PAD.top && y0 <= HEIGHT - PAD.bottom
          ? ` M ${PAD.left} ${y0} H ${WIDTH - PAD.right}`
          : ""),
    );
    axis.setAttribute("class", "axis");
    this.svg.appendChild(axis);

    const ticks = 5;
    for (let i = 0; i <= ticks; i++) {
      const t = (this.timeSpan * i) / ticks;
      const label = document.createElementNS(SVG_NS, "text");
      label.setAttribute("x", String(this.xOf(t)));
      label.setAttribute("y", String(HEIGHT - 6));
      label.setAttribute("class", "tick");
      label.textContent = t.toFixed(2);
      this.svg.appendChild(label);
    }
  }

  private drawCurves(curves: CurvePayload, selectedJoint: string | null): void {
    const joints = Object.keys(curves.positions);
    for (const joint of joints) {
      if (joint === selectedJoint) continue;
      this.svg.appendChild(this.polyline(curves, joint, "curve-dim"));
    }
    if (selectedJoint !== null && selectedJoint in curves.positions) {
      this.svg.appendChild(this.polyline(curves, selectedJoint, "curve-active"));
    }
  }

  private polyline(curves: CurvePayload, joint: string, cls: string): SVGPolylineElement {
    const el = document.createElementNS(SVG_NS, "polyline") as SVGPolylineElement;
    const samples = curves.positions[joint];
    const pts: string[] = [];
    for (let i = 0; i < curves.times.length; i++) {
      pts.push(`${this.xOf(curves.times[i])},${this.yOf(samples[i])}`);
    }
    el.setAttribute("points", pts.join(" "));
    el.setAttribute("class", cls);
    el.setAttribute("data-joint", joint);
    return el;
  }

  private drawKeyframeHandles(motion: MotionDoc): void {
    const session = this.session;
    const joint = session.selectedJoint;
    motion.keyframes.forEach((kf, i) => {
      const marker = document.createElementNS(SVG_NS, "line");
      marker.setAttribute("x1", String(this.xOf(kf.t)));
      marker.setAttribute("x2", String(this.xOf(kf.t)));
      marker.setAttribute("y1", String(PAD.top));
      marker.setAttribute("y2", String(HEIGHT - PAD.bottom));
      marker.setAttribute("class", i === session.selectedKeyframe ? "kf-line selected" : "kf-line");
      marker.setAttribute("data-keyframe", String(i));
      marker.addEventListener("pointerdown", (ev) => {
        ev.stopPropagation();
        session.select(i);
        this.drag = { keyframe: i, mode: "time" };
      });
      this.svg.appendChild(marker);

      if (joint !== null && joint in kf.pos) {
        const handle = document.createElementNS(SVG_NS, "circle");
        handle.setAttribute("cx", String(this.xOf(kf.t)));
        handle.setAttribute("cy", String(this.yOf(kf.pos[joint])));
        handle.setAttribute("r", "5");
        const violated = session.violationAt(i, joint) !== undefined;
        handle.setAttribute("class", violated ? "kf-handle violated" : "kf-handle");
        handle.setAttribute("data-keyframe", String(i));
        handle.addEventListener("pointerdown", (ev) => {
          ev.stopPropagation();
          session.select(i, joint);
          this.drag = { keyframe: i, mode: "value" };
        });
        this.svg.appendChild(handle);
      }
    });
  }

  private drawPlayhead(cursor: number): void {
    const line = document.createElementNS(SVG_NS, "line");
    const x = this.xOf(cursor);
    line.setAttribute("x1", String(x));
    line.setAttribute("x2", String(x));
    line.setAttribute("y1", String(PAD.top));
    line.setAttribute("y2", String(HEIGHT - PAD.bottom));
    line.setAttribute("class", "playhead");
    this.svg.appendChild(line);
  }

  private onBackgroundDown(ev: PointerEvent): void {
    const { x } = this.toLocal(ev);
    this.session.setCursor(this.tOf(x));
  }

  private onPointerMove(ev: PointerEvent): void {
    const drag = this.drag;
    if (drag === null) return;
    const { x, y } = this.toLocal(ev);
    if (drag.mode === "time") {
      this.session.setKeyframeTime(drag.keyframe, this.tOf(x));
    } else {
      const joint = this.session.selectedJoint;
      if (joint !== null) {
        this.session.setJointPosition(drag.keyframe, joint, this.vOf(y));
      }
    }
  }
}
