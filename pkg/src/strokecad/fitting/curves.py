"""2D curve fitting: direct least-squares ellipses, circles, clamped cubic
Beziers with chord-length parameterization, and polygon ICP."""

from __future__ import annotations

import numpy as np

from ..geometry import cubic_bezier_basis


class CurveFitError(Exception):
    pass


def fit_ellipse(points: np.ndarray):
    """Direct least-squares ellipse fit (Fitzgibbon/Halir-Flusser).

    Returns (center (2,), semi_axes (2,), angle) with semi_axes[0] >= semi_axes[1].
    """
    pts = np.asarray(points, dtype=np.float64)
    if len(pts) < 5:
        raise CurveFitError("ellipse fit needs at least 5 points")
    mean = pts.mean(axis=0)
    scale = max(float(np.abs(pts - mean).max()), 1e-12)
    x, y = (pts[:, 0] - mean[0]) / scale, (pts[:, 1] - mean[1]) / scale
    D1 = np.stack([x * x, x * y, y * y], axis=1)
    D2 = np.stack([x, y, np.ones_like(x)], axis=1)
    S1 = D1.T @ D1
    S2 = D1.T @ D2
    S3 = D2.T @ D2
    try:
        T = -np.linalg.solve(S3, S2.T)
    except np.linalg.LinAlgError:
        raise CurveFitError("degenerate point configuration") from None
    M = S1 + S2 @ T
    C1inv = np.array([[0.0, 0.0, 0.5], [0.0, -1.0, 0.0], [0.5, 0.0, 0.0]])
    evals, evecs = np.linalg.eig(C1inv @ M)
    cond = 4.0 * evecs[0] * evecs[2] - evecs[1] ** 2
    good = np.nonzero((cond > 0) & np.isfinite(evals))[0]
    if len(good) == 0:
        raise CurveFitError("no elliptical solution")
    a1 = np.real(evecs[:, good[0]])
    A, B, C = a1
    D, E, F = T @ a1
    # geometry from the conic's quadratic form
    Q = np.array([[A, B / 2.0], [B / 2.0, C]])
    try:
        center_n = np.linalg.solve(Q, [-D / 2.0, -E / 2.0])
    except np.linalg.LinAlgError:
        raise CurveFitError("degenerate ellipse center") from None
    cx, cy = center_n
    Fc = A * cx * cx + B * cx * cy + C * cy * cy + D * cx + E * cy + F
    evals2, evecs2 = np.linalg.eigh(Q)
    with np.errstate(divide="ignore", invalid="ignore"):
        axes2 = -Fc / evals2
    if not np.all(axes2 > 0):
        raise CurveFitError("degenerate ellipse axes")
    semi = np.sqrt(axes2)
    order = np.argsort(-semi)
    semi = semi[order]
    major = evecs2[:, order[0]]
    angle = float(np.arctan2(major[1], major[0]) % np.pi)
    center = center_n * scale + mean
    return center, semi * scale, angle


def ellipse_points(center, semi_axes, angle, n: int = 64, closed: bool = False) -> np.ndarray:
    t = np.linspace(0.0, 2.0 * np.pi, n, endpoint=False)
    ca, sa = np.cos(angle), np.sin(angle)
    x = semi_axes[0] * np.cos(t)
    y = semi_axes[1] * np.sin(t)
    pts = np.stack([center[0] + ca * x - sa * y, center[1] + sa * x + ca * y], axis=1)
    if closed:
        pts = np.concatenate([pts, pts[:1]])
    return pts


def ellipse_max_deviation(points: np.ndarray, center, semi_axes, angle, samples: int = 256) -> float:
    """Max distance from the points to the ellipse (polyline-segment metric)."""
    from ..geometry import points_segments_distance
    path = ellipse_points(center, semi_axes, angle, samples, closed=True)
    d = points_segments_distance(np.asarray(points, dtype=np.float64), path[:-1], path[1:])
    return float(d.max())


def fit_circle(points: np.ndarray):
    """Algebraic (Kasa) circle fit; returns (center (2,), radius)."""
    pts = np.asarray(points, dtype=np.float64)
    if len(pts) < 3:
        raise CurveFitError("circle fit needs at least 3 points")
    A = np.concatenate([2.0 * pts, np.ones((len(pts), 1))], axis=1)
    b = (pts ** 2).sum(axis=1)
    sol, *_ = np.linalg.lstsq(A, b, rcond=None)
    center = sol[:2]
    r2 = sol[2] + float(center @ center)
    if r2 <= 0:
        raise CurveFitError("degenerate circle")
    return center, float(np.sqrt(r2))


def chord_length_params(points: np.ndarray) -> np.ndarray:
    seg = np.linalg.norm(np.diff(points, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    total = s[-1]
    if total < 1e-15:
        return np.linspace(0.0, 1.0, len(points))
    return s / total


def _bezier_eval(ctrl: np.ndarray, t: np.ndarray) -> np.ndarray:
    return cubic_bezier_basis(t) @ ctrl


def _reproject_params(ctrl: np.ndarray, points: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Two Newton steps moving each parameter to the foot point on the curve."""
    for _ in range(2):
        u = 1.0 - t
        d1 = (3 * u ** 2)[:, None] * (ctrl[1] - ctrl[0]) \
            + (6 * u * t)[:, None] * (ctrl[2] - ctrl[1]) \
            + (3 * t ** 2)[:, None] * (ctrl[3] - ctrl[2])
        d2 = (6 * u)[:, None] * (ctrl[2] - 2 * ctrl[1] + ctrl[0]) \
            + (6 * t)[:, None] * (ctrl[3] - 2 * ctrl[2] + ctrl[1])
        diff = _bezier_eval(ctrl, t) - points
        num = np.einsum("ij,ij->i", diff, d1)
        den = np.einsum("ij,ij->i", d1, d1) + np.einsum("ij,ij->i", diff, d2)
        step = np.where(np.abs(den) > 1e-18, num / np.where(np.abs(den) > 1e-18, den, 1.0), 0.0)
        t = np.clip(t - step, 0.0, 1.0)
    return t


def fit_cubic_bezier_clamped(points: np.ndarray, p0: np.ndarray, p3: np.ndarray,
                             reparam_iters: int = 24) -> np.ndarray:
    """Least-squares interior control points with fixed endpoints.

    Starts from chord-length parameterization and applies a fixed number of
    Newton reparameterization rounds; chord-length alone biases curved fits by
    several pixels at 256^2, and the alternating refinement converges linearly,
    so a generous fixed budget keeps the result deterministic and sub-pixel.
    """
    pts = np.asarray(points, dtype=np.float64)
    p0 = np.asarray(p0, dtype=np.float64)
    p3 = np.asarray(p3, dtype=np.float64)
    t = chord_length_params(pts)

    def solve(tp):
        B = cubic_bezier_basis(tp)
        rhs = pts - np.outer(B[:, 0], p0) - np.outer(B[:, 3], p3)
        A = B[:, 1:3]
        AtA = A.T @ A
        if abs(np.linalg.det(AtA)) < 1e-15:
            return np.stack([p0, p0 + (p3 - p0) / 3.0, p0 + 2.0 * (p3 - p0) / 3.0, p3])
        sol = np.linalg.solve(AtA, A.T @ rhs)
        return np.stack([p0, sol[0], sol[1], p3])

    ctrl = solve(t)
    for _ in range(reparam_iters):
        t = _reproject_params(ctrl, pts, t)
        ctrl = solve(t)
    return ctrl


def _similarity_transform(src: np.ndarray, dst: np.ndarray):
    """Least-squares 2D similarity (scale+rotation+translation), no reflection."""
    sc = src.mean(axis=0)
    dc = dst.mean(axis=0)
    s = src - sc
    d = dst - dc
    a = float((s * d).sum())
    b = float(s[:, 0] @ d[:, 1] - s[:, 1] @ d[:, 0])
    denom = float((s * s).sum())
    if denom < 1e-18:
        return np.eye(2), dc - sc
    ka = a / denom
    kb = b / denom
    R = np.array([[ka, -kb], [kb, ka]])
    return R, dc - R @ sc


def _closest_on_polygon(polygon: np.ndarray, points: np.ndarray):
    """For each point: (closest point on the closed polygon, edge index)."""
    a = polygon
    b = np.roll(polygon, -1, axis=0)
    ab = b - a
    denom = np.einsum("ij,ij->i", ab, ab)
    denom = np.where(denom < 1e-18, 1.0, denom)
    ap = points[:, None, :] - a[None, :, :]
    t = np.clip(np.einsum("pij,ij->pi", ap, ab) / denom[None, :], 0.0, 1.0)
    proj = a[None, :, :] + t[..., None] * ab[None, :, :]
    d = np.linalg.norm(points[:, None, :] - proj, axis=2)
    edge = d.argmin(axis=1)
    rows = np.arange(len(points))
    return proj[rows, edge], edge


def icp_fit_polygon(stroke_points: np.ndarray, init_polygon: np.ndarray,
                    iterations: int = 20, tol: float = 1e-4) -> np.ndarray:
    """Fit an N-gon to stroke points: similarity-transform ICP from the seed
    polygon, then per-edge line refinement that rebuilds vertices from
    consecutive edge-line intersections."""
    poly = np.asarray(init_polygon, dtype=np.float64).copy()
    pts = np.asarray(stroke_points, dtype=np.float64)
    for _ in range(iterations):
        matched, _ = _closest_on_polygon(poly, pts)
        R, t = _similarity_transform(matched, pts)
        new_poly = poly @ R.T + t
        delta = float(np.abs(new_poly - poly).max())
        poly = new_poly
        if delta < tol:
            break
    # per-vertex refinement: total-least-squares line per edge, vertices at
    # consecutive line intersections; repeated so corner-adjacent samples
    # migrate to the right edge once the estimate improves
    n = len(poly)
    for _ in range(3):
        _, edge_of = _closest_on_polygon(poly, pts)
        lines = []
        for e in range(n):
            sel = pts[edge_of == e]
            # trim samples hugging the corners: they may belong to either edge
            if len(sel) >= 6:
                a, b = poly[e], poly[(e + 1) % n]
                ab = b - a
                denom = max(float(ab @ ab), 1e-18)
                t = np.clip((sel - a) @ ab / denom, 0.0, 1.0)
                core = sel[(t > 0.12) & (t < 0.88)]
                if len(core) >= 2:
                    sel = core
            if len(sel) < 2:
                a, b = poly[e], poly[(e + 1) % n]
                direction = b - a
                nrm = np.linalg.norm(direction)
                lines.append((a, direction / nrm if nrm > 1e-15 else np.array([1.0, 0.0])))
                continue
            c = sel.mean(axis=0)
            _, _, vt = np.linalg.svd(sel - c)
            lines.append((c, vt[0]))
        refined = []
        for e in range(n):
            (c1, d1) = lines[(e - 1) % n]
            (c2, d2) = lines[e]
            cross = d1[0] * d2[1] - d1[1] * d2[0]
            if abs(cross) < 1e-9:
                refined.append(poly[e])
                continue
            t1 = ((c2[0] - c1[0]) * d2[1] - (c2[1] - c1[1]) * d2[0]) / cross
            refined.append(c1 + t1 * d1)
        new_poly = np.asarray(refined)
        delta = float(np.abs(new_poly - poly).max())
        poly = new_poly
        if delta < tol:
            break
    return poly
