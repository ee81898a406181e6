/**
 * Freehand stroke capture. Canvas pixels go in, normalized [0,1]^2 points
 * (y up, matching the service) come out. Raw points are what gets submitted;
 * any smoothing is display-only and happens at draw time, not here.
 */

export interface CanvasPoint {
  x: number;
  y: number;
  t?: number;
}

export class StrokeCapture {
  private strokes: number[][][] = [];
  private active: number[][] | null = null;

  constructor(private canvasSize: number) {}

  private normalize(p: CanvasPoint): number[] {
    return [p.x / this.canvasSize, 1.0 - p.y / this.canvasSize];
  }

  begin(p: CanvasPoint): void {
    this.active = [this.normalize(p)];
  }

  move(p: CanvasPoint): void {
    if (!this.active) return;
    const q = this.normalize(p);
    const last = this.active[this.active.length - 1];
    // drop sub-pixel jitter so strokes stay compact
    if (Math.hypot(q[0] - last[0], q[1] - last[1]) < 0.5 / this.canvasSize) return;
    this.active.push(q);
  }

  end(p?: CanvasPoint): void {
    if (!this.active) return;
    if (p) this.move(p);
    if (this.active.length >= 2) this.strokes.push(this.active);
    this.active = null;
  }

  /** Feed a whole polyline of canvas points as one stroke. */
  addPolyline(points: CanvasPoint[]): void {
    if (points.length < 2) return;
    this.begin(points[0]);
    for (const p of points.slice(1)) this.move(p);
    this.end();
  }

  get count(): number {
    return this.strokes.length;
  }

  all(): number[][][] {
    return this.strokes.map((s) => s.map((p) => [...p]));
  }

  clear(): void {
    this.strokes = [];
    this.active = null;
  }
}
