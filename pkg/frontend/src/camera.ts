/**
 * Orbit-camera math matching the server's conventions: the camera looks along
 * eye_dir, image x runs along eye_dir x up, a point at center projects to the
 * image center, and half_extent is half the frustum side.
 */

import type { CameraSpec } from "./api.js";

export type Vec3 = [number, number, number];

const norm = (v: Vec3): number => Math.hypot(v[0], v[1], v[2]);

export function unit(v: Vec3): Vec3 {
  const n = norm(v);
  if (n < 1e-12) throw new Error("zero vector");
  return [v[0] / n, v[1] / n, v[2] / n];
}

export function cross(a: Vec3, b: Vec3): Vec3 {
  return [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]];
}

export function dot(a: Vec3, b: Vec3): number {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}

function rotateAbout(v: Vec3, axis: Vec3, angle: number): Vec3 {
  const a = unit(axis);
  const c = Math.cos(angle);
  const s = Math.sin(angle);
  const d = dot(a, v) * (1 - c);
  const cx = cross(a, v);
  return [
    v[0] * c + cx[0] * s + a[0] * d,
    v[1] * c + cx[1] * s + a[1] * d,
    v[2] * c + cx[2] * s + a[2] * d,
  ];
}

export const WORLD_UP: Vec3 = [0, 0, 1];

export function defaultCamera(): CameraSpec {
  return {
    eye_dir: unit([-1, -1, -1]),
    up: [...WORLD_UP],
    center: [0, 0, 0],
    half_extent: 0.85,
    image_size: 256,
  };
}

/** Orbit by screen-drag deltas: yaw about world up, pitch about the camera's
 * right axis, clamped so the view never crosses the poles. */
export function orbit(cam: CameraSpec, yaw: number, pitch: number): CameraSpec {
  let dir = cam.eye_dir as Vec3;
  dir = rotateAbout(dir, WORLD_UP, -yaw);
  const right = unit(cross(dir, WORLD_UP));
  const pitched = rotateAbout(dir, right, -pitch);
  // stay off the poles: keep at least ~3 degrees from straight up/down
  if (Math.abs(dot(unit(pitched), WORLD_UP)) < 0.9986) dir = pitched;
  return { ...cam, eye_dir: unit(dir), up: [...WORLD_UP] };
}

/** Zoom by a positive factor; the half-extent stays in sane bounds. */
export function zoom(cam: CameraSpec, factor: number): CameraSpec {
  const half = Math.min(5.0, Math.max(0.05, cam.half_extent * factor));
  return { ...cam, half_extent: half };
}

/** Project a world point to normalized [0,1]^2 image coordinates (y up). */
export function project(cam: CameraSpec, p: Vec3): [number, number] {
  const d = unit(cam.eye_dir as Vec3);
  const right = unit(cross(d, cam.up as Vec3));
  const upO = cross(right, d);
  const rel: Vec3 = [p[0] - cam.center[0], p[1] - cam.center[1], p[2] - cam.center[2]];
  return [
    dot(rel, right) / (2 * cam.half_extent) + 0.5,
    dot(rel, upO) / (2 * cam.half_extent) + 0.5,
  ];
}
