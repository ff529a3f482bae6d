/**
 * Typed client for the op2stack HTTP service.
 *
 * Every piece of robot math the editor shows comes through here: curves
 * from POST /api/interpolate and poses from POST /api/fk. The client holds
 * no interpolation or kinematics of its own, so the preview can never
 * drift from what the robot-side player computes.
 */

export interface JointInfo {
  name: string;
  chain: string;
  lower: number;
  upper: number;
}

export interface LinkInfo {
  name: string;
  parent: string | null;
}

export interface ModelInfo {
  name: string;
  dof: number;
  actuator_count: number;
  total_mass: number;
  joints: JointInfo[];
  links: LinkInfo[];
  actuators: string[];
  leg_geometry: Record<string, number>;
  motions: string[];
}

export interface KeyframeDoc {
  t: number;
  pos: Record<string, number>;
  vel?: Record<string, number>;
  eff?: Record<string, number>;
  pid?: string[];
  support?: string;
}

export interface MotionDoc {
  name: string;
  joints: string[];
  keyframes: KeyframeDoc[];
  pid_gains?: Record<string, unknown>;
}

export interface CurvePayload {
  times: number[];
  positions: Record<string, number[]>;
  velocities: Record<string, number[]>;
  efforts: Record<string, number[]>;
  supports: string[];
}

export interface FkPayload {
  positions: Record<string, [number, number, number]>;
  rotations: Record<string, number[][]>;
}

export interface FieldDiagnostic {
  field: string;
  message: string;
}

export class ApiError extends Error {
  status: number;
  fields: FieldDiagnostic[];

  constructor(status: number, message: string, fields: FieldDiagnostic[] = []) {
    super(message);
    this.status = status;
    this.fields = fields;
  }
}

function detailToError(status: number, detail: unknown): ApiError {
  if (Array.isArray(detail)) {
    const fields = detail.filter(
      (d): d is FieldDiagnostic =>
        typeof d === "object" && d !== null && "field" in d && "message" in d,
    );
    const summary = fields.map((f) => `${f.field}: ${f.message}`).join("; ");
    return new ApiError(status, summary || `request failed (${status})`, fields);
  }
  if (typeof detail === "string") {
    return new ApiError(status, detail);
  }
  return new ApiError(status, `request failed (${status})`);
}

/** What the editor needs from the service; ApiClient is the real transport. */
export interface EditorApi {
  model(): Promise<ModelInfo>;
  motionText(name: string): Promise<string>;
  putMotion(name: string, motion: MotionDoc): Promise<string>;
  interpolate(motion: MotionDoc, rate: number): Promise<CurvePayload>;
  fk(q: Record<string, number>): Promise<FkPayload>;
}

export class ApiClient implements EditorApi {
  constructor(readonly base: string = "") {}

  private async request(path: string, init?: RequestInit): Promise<Response> {
    const response = await fetch(this.base + path, init);
    if (!response.ok) {
      let detail: unknown = null;
      try {
        detail = (await response.json()).detail;
      } catch {
        // non-JSON error body; fall through to the generic message
      }
      throw detailToError(response.status, detail);
    }
    return response;
  }

  async model(): Promise<ModelInfo> {
    const response = await this.request("/api/model");
    return (await response.json()) as ModelInfo;
  }

  /** Raw canonical bytes of a stored motion, as text. */
  async motionText(name: string): Promise<string> {
    const response = await this.request(`/api/motions/${encodeURIComponent(name)}`);
    return await response.text();
  }

  /**
   * Store a motion. The body is the parsed document; the service
   * canonicalizes it, so the returned text is the exact stored bytes.
   */
  async putMotion(name: string, motion: MotionDoc): Promise<string> {
    const response = await this.request(`/api/motions/${encodeURIComponent(name)}`, {
      method: "PUT",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(motion),
    });
    return await response.text();
  }

  async interpolate(motion: MotionDoc, rate: number): Promise<CurvePayload> {
    const response = await this.request("/api/interpolate", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ motion, rate }),
    });
    return (await response.json()) as CurvePayload;
  }

  async fk(q: Record<string, number>): Promise<FkPayload> {
    const response = await this.request("/api/fk", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ q }),
    });
    return (await response.json()) as FkPayload;
  }
}
