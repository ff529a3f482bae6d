/**
 * Editor session state: the loaded motion (a client-side copy), selection,
 * playback cursor, dirty tracking, undo, joint-limit validation, and the
 * server-backed preview data.
 *
 * Two rules shape everything here. The client motion must stay
 * schema-valid at all times, so edits clamp or are rejected rather than
 * corrupting the document. And the preview never computes robot math:
 * curves come from /api/interpolate and poses from /api/fk, verbatim.
 */

import {
  ApiError,
  CurvePayload,
  EditorApi,
  FkPayload,
  JointInfo,
  ModelInfo,
  MotionDoc,
} from "./api.js";

export interface Violation {
  keyframe: number;
  joint: string;
  value: number;
  lower: number;
  upper: number;
}

export interface SessionOptions {
  /** Samples per second requested from /api/interpolate. */
  previewRate?: number;
  /** Debounce for preview refreshes after edits, in ms. */
  debounceMs?: number;
  /** Called before discarding unsaved edits; return true to proceed. */
  confirmDiscard?: (motionName: string) => boolean;
}

const SUPPORT_MODES = ["both", "left", "right"];
const MIN_KEYFRAME_GAP = 0.01;

function clone<T>(value: T): T {
  return structuredClone(value);
}

function deepEqual(a: unknown, b: unknown): boolean {
  if (Object.is(a, b)) return true;
  if (typeof a !== "object" || typeof b !== "object" || a === null || b === null) {
    return false;
  }
  if (Array.isArray(a) !== Array.isArray(b)) return false;
  const ka = Object.keys(a as object);
  const kb = Object.keys(b as object);
  if (ka.length !== kb.length) return false;
  return ka.every((k) =>
    deepEqual((a as Record<string, unknown>)[k], (b as Record<string, unknown>)[k]),
  );
}

export class EditorSession {
  readonly api: EditorApi;

  model: ModelInfo | null = null;
  motion: MotionDoc | null = null;
  /** Last loaded or saved version; dirty means "differs from this". */
  baseline: MotionDoc | null = null;

  selectedKeyframe = 0;
  selectedJoint: string | null = null;
  cursor = 0;

  curves: CurvePayload | null = null;
  skeleton: FkPayload | null = null;
  staleCurves = false;
  staleSkeleton = false;

  violations: Violation[] = [];
  fieldErrors: Record<string, string> = {};
  banner: string | null = null;

  private undoStack: MotionDoc[] = [];
  private listeners = new Set<() => void>();
  private previewTimer: ReturnType<typeof setTimeout> | null = null;
  private previewEpoch = 0;
  private readonly previewRate: number;
  private readonly debounceMs: number;
  private readonly confirmDiscard: (motionName: string) => boolean;

  constructor(api: EditorApi, options: SessionOptions = {}) {
    this.api = api;
    this.previewRate = options.previewRate ?? 100;
    this.debounceMs = options.debounceMs ?? 150;
    this.confirmDiscard = options.confirmDiscard ?? (() => true);
  }

  onChange(listener: () => void): () => void {
    this.listeners.add(listener);
    return () => this.listeners.delete(listener);
  }

  private emit(): void {
    for (const listener of this.listeners) listener();
  }

  get dirty(): boolean {
    return this.motion !== null && !deepEqual(this.motion, this.baseline);
  }

  get canUndo(): boolean {
    return this.undoStack.length > 0;
  }

  /** Violations lie outside joint limits; schema errors break the file format. */
  get schemaErrors(): string[] {
    const m = this.motion;
    if (m === null) return ["no motion loaded"];
    const errors: string[] = [];
    if (!m.name) errors.push("motion needs a name");
    if (m.keyframes.length === 0) errors.push("motion needs at least one keyframe");
    const joints = new Set(m.joints);
    if (joints.size !== m.joints.length) errors.push("duplicate joint");
    let prev = -Infinity;
    m.keyframes.forEach((kf, i) => {
      if (!Number.isFinite(kf.t) || kf.t < 0) errors.push(`keyframe ${i}: bad time`);
      if (kf.t <= prev) errors.push(`keyframe ${i}: times must increase`);
      prev = kf.t;
      const posKeys = Object.keys(kf.pos);
      if (posKeys.length !== m.joints.length || !posKeys.every((j) => joints.has(j))) {
        errors.push(`keyframe ${i}: positions must cover the joint list`);
      }
      for (const [j, e] of Object.entries(kf.eff ?? {})) {
        if (!(e >= 0 && e <= 1)) errors.push(`keyframe ${i}: effort ${j} outside [0, 1]`);
      }
      if (kf.support !== undefined && !SUPPORT_MODES.includes(kf.support)) {
        errors.push(`keyframe ${i}: bad support`);
      }
    });
    return errors;
  }

  get canSave(): boolean {
    return (
      this.motion !== null &&
      this.schemaErrors.length === 0 &&
      this.violations.length === 0
    );
  }

  jointInfo(name: string): JointInfo | undefined {
    return this.model?.joints.find((j) => j.name === name);
  }

  async init(): Promise<void> {
    try {
      this.model = await this.api.model();
      this.banner = null;
    } catch (err) {
      this.banner = `service unreachable: ${(err as Error).message}`;
    }
    this.emit();
  }

  async load(name: string): Promise<boolean> {
    if (this.dirty && this.motion && !this.confirmDiscard(this.motion.name)) {
      return false;
    }
    let text: string;
    try {
      text = await this.api.motionText(name);
    } catch (err) {
      this.banner =
        err instanceof ApiError && err.status === 404
          ? `no motion named ${name}`
          : `load failed: ${(err as Error).message}`;
      this.emit();
      return false;
    }
    const doc = JSON.parse(text) as MotionDoc;
    this.motion = doc;
    this.baseline = clone(doc);
    this.undoStack = [];
    this.selectedKeyframe = 0;
    this.selectedJoint = doc.joints[0] ?? null;
    this.cursor = doc.keyframes[0]?.t ?? 0;
    this.curves = null;
    this.skeleton = null;
    this.fieldErrors = {};
    this.banner = null;
    this.recheckLimits();
    this.emit();
    await this.refreshPreview();
    return true;
  }

  select(keyframe: number, joint?: string): void {
    const m = this.motion;
    if (m === null) return;
    this.selectedKeyframe = Math.max(0, Math.min(m.keyframes.length - 1, keyframe));
    if (joint !== undefined) this.selectedJoint = joint;
    this.cursor = m.keyframes[this.selectedKeyframe].t;
    this.emit();
    this.schedulePreview({ curves: false });
  }

  setCursor(t: number): void {
    const m = this.motion;
    if (m === null) return;
    const end = m.keyframes[m.keyframes.length - 1].t;
    this.cursor = Math.max(0, Math.min(end, t));
    this.emit();
    this.schedulePreview({ curves: false });
  }

  // --- edits ------------------------------------------------------------

  private beginEdit(): void {
    if (this.motion !== null) this.undoStack.push(clone(this.motion));
  }

  private finishEdit(): void {
    this.recheckLimits();
    this.emit();
    this.schedulePreview();
  }

  setJointPosition(keyframe: number, joint: string, value: number): void {
    const kf = this.motion?.keyframes[keyframe];
    if (!kf || !Number.isFinite(value)) return;
    this.beginEdit();
    kf.pos[joint] = value;
    this.finishEdit();
  }

  setJointVelocity(keyframe: number, joint: string, value: number): void {
    const kf = this.motion?.keyframes[keyframe];
    if (!kf || !Number.isFinite(value)) return;
    this.beginEdit();
    kf.vel = { ...(kf.vel ?? {}), [joint]: value };
    this.finishEdit();
  }

  setJointEffort(keyframe: number, joint: string, value: number): void {
    const kf = this.motion?.keyframes[keyframe];
    if (!kf || !Number.isFinite(value)) return;
    this.beginEdit();
    kf.eff = { ...(kf.eff ?? {}), [joint]: Math.max(0, Math.min(1, value)) };
    this.finishEdit();
  }

  /** Move a keyframe in time, clamped between its neighbors. */
  setKeyframeTime(keyframe: number, t: number): void {
    const m = this.motion;
    const kf = m?.keyframes[keyframe];
    if (!m || !kf || !Number.isFinite(t)) return;
    const lo = keyframe > 0 ? m.keyframes[keyframe - 1].t + MIN_KEYFRAME_GAP : 0;
    const hi =
      keyframe < m.keyframes.length - 1
        ? m.keyframes[keyframe + 1].t - MIN_KEYFRAME_GAP
        : Infinity;
    if (lo > hi) return;
    this.beginEdit();
    kf.t = Math.max(lo, Math.min(hi, t));
    if (this.selectedKeyframe === keyframe) this.cursor = kf.t;
    this.finishEdit();
  }

  setSupport(keyframe: number, support: string): void {
    const kf = this.motion?.keyframes[keyframe];
    if (!kf || !SUPPORT_MODES.includes(support)) return;
    this.beginEdit();
    kf.support = support;
    this.finishEdit();
  }

  /** Insert a copy of a keyframe halfway to its successor (or 0.5 s after the end). */
  duplicateKeyframe(keyframe: number): void {
    const m = this.motion;
    const kf = m?.keyframes[keyframe];
    if (!m || !kf) return;
    const next = m.keyframes[keyframe + 1];
    const t = next !== undefined ? (kf.t + next.t) / 2 : kf.t + 0.5;
    if (next !== undefined && next.t - kf.t < 2 * MIN_KEYFRAME_GAP) return;
    this.beginEdit();
    m.keyframes.splice(keyframe + 1, 0, { ...clone(kf), t });
    this.selectedKeyframe = keyframe + 1;
    this.cursor = t;
    this.finishEdit();
  }

  deleteKeyframe(keyframe: number): void {
    const m = this.motion;
    if (!m || m.keyframes.length <= 1 || !m.keyframes[keyframe]) return;
    this.beginEdit();
    m.keyframes.splice(keyframe, 1);
    this.selectedKeyframe = Math.min(this.selectedKeyframe, m.keyframes.length - 1);
    this.cursor = m.keyframes[this.selectedKeyframe].t;
    this.finishEdit();
  }

  undo(): void {
    const previous = this.undoStack.pop();
    if (previous === undefined) return;
    this.motion = previous;
    const last = previous.keyframes.length - 1;
    this.selectedKeyframe = Math.min(this.selectedKeyframe, last);
    this.recheckLimits();
    this.emit();
    this.schedulePreview();
  }

  private recheckLimits(): void {
    const m = this.motion;
    this.violations = [];
    if (m === null || this.model === null) return;
    const limits = new Map(this.model.joints.map((j) => [j.name, j]));
    m.keyframes.forEach((kf, i) => {
      for (const [joint, value] of Object.entries(kf.pos)) {
        const info = limits.get(joint);
        if (info && (value < info.lower || value > info.upper)) {
          this.violations.push({
            keyframe: i,
            joint,
            value,
            lower: info.lower,
            upper: info.upper,
          });
        }
      }
    });
  }

  violationAt(keyframe: number, joint: string): Violation | undefined {
    return this.violations.find((v) => v.keyframe === keyframe && v.joint === joint);
  }

  // --- preview ----------------------------------------------------------

  /**
   * The pose /api/fk is asked about. On a keyframe the keyframe's own
   * positions are used, so the skeleton matches the edited pose exactly;
   * between keyframes the nearest server-interpolated sample is used.
   */
  poseAtCursor(): Record<string, number> | null {
    const m = this.motion;
    if (m === null) return null;
    const onKeyframe = m.keyframes.find((kf) => Math.abs(kf.t - this.cursor) < 1e-9);
    if (onKeyframe !== undefined) return { ...onKeyframe.pos };
    const curves = this.curves;
    if (curves === null || curves.times.length === 0) return null;
    let nearest = 0;
    for (let i = 1; i < curves.times.length; i++) {
      if (
        Math.abs(curves.times[i] - this.cursor) <
        Math.abs(curves.times[nearest] - this.cursor)
      ) {
        nearest = i;
      }
    }
    const q: Record<string, number> = {};
    for (const [joint, samples] of Object.entries(curves.positions)) {
      q[joint] = samples[nearest];
    }
    return q;
  }

  schedulePreview(parts: { curves?: boolean; skeleton?: boolean } = {}): void {
    if (this.previewTimer !== null) clearTimeout(this.previewTimer);
    const wantCurves = parts.curves ?? true;
    this.previewTimer = setTimeout(() => {
      this.previewTimer = null;
      void this.refreshPreview({ curves: wantCurves });
    }, this.debounceMs);
  }

  /** Fetch preview data now (edits normally go through schedulePreview). */
  async refreshPreview(parts: { curves?: boolean; skeleton?: boolean } = {}): Promise<void> {
    const m = this.motion;
    if (m === null) return;
    const epoch = ++this.previewEpoch;

    if (parts.curves ?? true) {
      try {
        const payload = await this.api.interpolate(m, this.previewRate);
        if (epoch !== this.previewEpoch) return;
        this.curves = payload;
        this.staleCurves = false;
      } catch {
        if (epoch !== this.previewEpoch) return;
        this.staleCurves = true;
      }
    }

    if (parts.skeleton ?? true) {
      const q = this.poseAtCursor();
      if (q !== null) {
        try {
          const payload = await this.api.fk(q);
          if (epoch !== this.previewEpoch) return;
          this.skeleton = payload;
          this.staleSkeleton = false;
        } catch {
          if (epoch !== this.previewEpoch) return;
          this.staleSkeleton = true;
        }
      }
    }
    this.emit();
  }

  // --- persistence --------------------------------------------------------

  /**
   * PUT the motion. The service canonicalizes and stores by value, so an
   * unedited session writes back the exact bytes it loaded. Last write
   * wins; the only guard is the local dirty prompt on load.
   */
  async save(): Promise<boolean> {
    const m = this.motion;
    if (m === null || !this.canSave) return false;
    try {
      await this.api.putMotion(m.name, m);
    } catch (err) {
      if (err instanceof ApiError) {
        this.fieldErrors = Object.fromEntries(err.fields.map((f) => [f.field, f.message]));
        this.banner = `save rejected: ${err.message}`;
      } else {
        this.banner = `save failed: ${(err as Error).message}`;
      }
      this.emit();
      return false;
    }
    this.baseline = clone(m);
    this.fieldErrors = {};
    this.banner = null;
    this.emit();
    return true;
  }

  /** Save under a new name (also how new motions are created). */
  async saveAs(name: string): Promise<boolean> {
    if (this.motion === null || !name) return false;
    this.beginEdit();
    this.motion.name = name;
    this.recheckLimits();
    const ok = await this.save();
    if (!ok) this.undo();
    else this.emit();
    return ok;
  }
}
