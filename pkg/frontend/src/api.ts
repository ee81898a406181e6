/**
 * Typed client for the studio service. Every UI action maps to exactly one
 * endpoint here; the client holds no geometric state of its own.
 */

export interface CameraSpec {
  eye_dir: number[];
  up: number[];
  center: number[];
  half_extent: number;
  image_size: number;
}

export interface StepSpec {
  op: string;
  params: Record<string, unknown>;
  label: string | null;
}

export interface PendingSpec {
  op: string;
  params: Record<string, unknown>;
  op_type: string;
  ambiguous: boolean;
  diagnostics: string[];
  preview: { vertices: number[][]; triangles: number[][]; decimated: boolean };
  preview_volume: number;
}

export interface SessionState {
  id: string;
  steps: StepSpec[];
  volume: number;
  face_count: number;
  pending: PendingSpec | null;
  regularizer_enabled: boolean;
}

export class ServiceError extends Error {
  constructor(public status: number, public detail: unknown) {
    super(`service error ${status}: ${JSON.stringify(detail)}`);
  }
}

export class StudioClient {
  constructor(private baseUrl: string) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const res = await fetch(`${this.baseUrl}${path}`, {
      method,
      headers: body !== undefined ? { "content-type": "application/json" } : undefined,
      body: body !== undefined ? JSON.stringify(body) : undefined,
    });
    if (!res.ok) {
      let detail: unknown;
      try {
        detail = await res.json();
      } catch {
        detail = await res.text();
      }
      throw new ServiceError(res.status, detail);
    }
    const text = await res.text();
    return (text ? JSON.parse(text) : {}) as T;
  }

  async createSession(): Promise<string> {
    const out = await this.request<{ id: string }>("POST", "/sessions");
    return out.id;
  }

  getState(sid: string): Promise<SessionState> {
    return this.request("GET", `/sessions/${sid}`);
  }

  renderUrl(sid: string, camera?: CameraSpec): string {
    if (!camera) return `${this.baseUrl}/sessions/${sid}/render`;
    const q = new URLSearchParams({
      eye_dir: JSON.stringify(camera.eye_dir),
      up: JSON.stringify(camera.up),
      center: JSON.stringify(camera.center),
      half_extent: String(camera.half_extent),
    });
    return `${this.baseUrl}/sessions/${sid}/render?${q.toString()}`;
  }

  submitStrokes(sid: string, strokes: number[][][], camera: CameraSpec):
      Promise<{ interpretation: PendingSpec }> {
    return this.request("POST", `/sessions/${sid}/strokes`, { strokes, camera });
  }

  confirm(sid: string): Promise<SessionState> {
    return this.request("POST", `/sessions/${sid}/confirm`);
  }

  undo(sid: string): Promise<SessionState> {
    return this.request("POST", `/sessions/${sid}/undo`);
  }

  switchOption(sid: string): Promise<{ interpretation: PendingSpec }> {
    return this.request("POST", `/sessions/${sid}/option`);
  }

  tune(sid: string, step: number, path: string, value: unknown): Promise<SessionState> {
    return this.request("PATCH", `/sessions/${sid}/ops/${step}`, { path, value });
  }

  async getProtocolText(sid: string): Promise<string> {
    const res = await fetch(`${this.baseUrl}/sessions/${sid}/protocol`);
    if (!res.ok) throw new ServiceError(res.status, await res.text());
    return res.text();
  }

  putProtocolText(sid: string, text: string): Promise<SessionState> {
    return this.request("PUT", `/sessions/${sid}/protocol`, JSON.parse(text));
  }

  symmetry(sid: string, step: number, plane: number): Promise<SessionState> {
    return this.request("POST", `/sessions/${sid}/symmetry`, { step, plane });
  }

  setRegularizer(sid: string, enabled: boolean): Promise<SessionState> {
    return this.request("PATCH", `/sessions/${sid}/config`, { regularizer: { enabled } });
  }
}
