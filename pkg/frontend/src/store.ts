/**
 * Client session store. Holds no geometric truth: every mutation round-trips
 * through the service and the store adopts whatever state comes back, so
 * reloading and re-fetching always reproduces the identical view.
 */

import { CameraSpec, PendingSpec, ServiceError, SessionState, StudioClient } from "./api.js";
import { defaultCamera } from "./camera.js";

export type StoreListener = (store: SessionStore) => void;

export class SessionStore {
  sid: string | null = null;
  state: SessionState | null = null;
  camera: CameraSpec = defaultCamera();
  lastError: string | null = null;
  busy = false;

  private listeners: StoreListener[] = [];

  constructor(public client: StudioClient) {}

  subscribe(fn: StoreListener): void {
    this.listeners.push(fn);
  }

  private emit(): void {
    for (const fn of this.listeners) fn(this);
  }

  private adopt(state: SessionState): void {
    this.state = state;
    this.lastError = null;
    this.emit();
  }

  get pending(): PendingSpec | null {
    return this.state?.pending ?? null;
  }

  get steps() {
    return this.state?.steps ?? [];
  }

  async start(): Promise<void> {
    this.sid = await this.client.createSession();
    this.adopt(await this.client.getState(this.sid));
  }

  async refresh(): Promise<void> {
    if (!this.sid) return;
    this.adopt(await this.client.getState(this.sid));
  }

  /** One in-flight interpretation at a time; later submissions wait. */
  private queue: Promise<unknown> = Promise.resolve();

  private enqueue<T>(job: () => Promise<T>): Promise<T> {
    const next = this.queue.then(job, job);
    this.queue = next.catch(() => undefined);
    return next;
  }

  submitStrokes(strokes: number[][][]): Promise<void> {
    return this.enqueue(async () => {
      if (!this.sid) throw new Error("no session");
      this.busy = true;
      this.emit();
      try {
        await this.client.submitStrokes(this.sid, strokes, this.camera);
        this.adopt(await this.client.getState(this.sid));
      } catch (err) {
        this.lastError = err instanceof ServiceError
          ? JSON.stringify(err.detail) : String(err);
        this.emit();
        throw err;
      } finally {
        this.busy = false;
        this.emit();
      }
    });
  }

  async confirm(): Promise<void> {
    if (!this.sid) return;
    this.adopt(await this.client.confirm(this.sid));
  }

  async undo(): Promise<void> {
    if (!this.sid) return;
    this.adopt(await this.client.undo(this.sid));
  }

  async switchOption(): Promise<void> {
    if (!this.sid) return;
    await this.client.switchOption(this.sid);
    this.adopt(await this.client.getState(this.sid));
  }

  async tune(step: number, path: string, value: unknown): Promise<void> {
    if (!this.sid) return;
    try {
      this.adopt(await this.client.tune(this.sid, step, path, value));
    } catch (err) {
      this.lastError = err instanceof ServiceError
        ? JSON.stringify(err.detail) : String(err);
      this.emit();
      throw err;
    }
  }

  async symmetry(step: number, plane: number): Promise<void> {
    if (!this.sid) return;
    this.adopt(await this.client.symmetry(this.sid, step, plane));
  }

  async setRegularizer(enabled: boolean): Promise<void> {
    if (!this.sid) return;
    this.adopt(await this.client.setRegularizer(this.sid, enabled));
  }

  exportProtocol(): Promise<string> {
    if (!this.sid) throw new Error("no session");
    return this.client.getProtocolText(this.sid);
  }

  async importProtocol(text: string): Promise<void> {
    if (!this.sid) throw new Error("no session");
    this.adopt(await this.client.putProtocolText(this.sid, text));
  }

  /** Invariant check used by tests: the store's step list must equal the
   * server's protocol, field for field. */
  async mirrorsServer(): Promise<boolean> {
    if (!this.sid || !this.state) return false;
    const text = await this.client.getProtocolText(this.sid);
    const doc = JSON.parse(text) as { steps: { op: string; params: unknown }[] };
    if (doc.steps.length !== this.steps.length) return false;
    return doc.steps.every((s, i) =>
      s.op === this.steps[i].op &&
      JSON.stringify(s.params) === JSON.stringify(this.steps[i].params));
  }
}
