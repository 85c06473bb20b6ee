"""Continuous geodesic extraction from completed distance fields.

Paths descend the distance map by integrating
``x' = -M^-1 grad(U) / |M^-1 grad(U)|`` with a second-order (Heun) step,
central-difference gradients and bilinear/trilinear sampling of both the
field and the metric.  Near masked or unreached cells the gradient falls
back to one-sided differences; if the sampled distance stagnates the
tracer steps along the discrete ancestor chain instead (flagged on the
output).  Utilities cover truncated discrete backtracking (reference
points), saddle concatenation and uniform arc-length resampling.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from ._solver import ACCEPTED
from .errors import InvalidInputError, NumericError
from .fastmarch import FrontState
from .metrics import MscaleField

__all__ = [
    "GeodesicPath",
    "ancestor_chain",
    "backtrack_geodesic",
    "concatenate_paths",
    "export_path_csv",
    "export_path_json",
    "resample_path",
    "truncated_backtrack",
]

_STAGNATION_LIMIT = 10
_TERMINATION_RADIUS = 1.5


@dataclass
class GeodesicPath:
    """Ordered polyline of subpixel points, optionally radius-lifted.

    ``points`` is (n, 2) in cell coordinates; ``radii`` (n,) carries the
    tube radius per sample when the path lives in the lifted domain.
    """

    points: np.ndarray
    radii: np.ndarray | None = None
    used_fallback: bool = False

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        if self.points.ndim != 2 or self.points.shape[1] != 2:
            raise InvalidInputError("path points must have shape (n, 2)")
        if self.radii is not None:
            self.radii = np.asarray(self.radii, dtype=np.float64)
            if self.radii.shape[0] != self.points.shape[0]:
                raise InvalidInputError("radii length must match points")

    def __len__(self) -> int:
        return len(self.points)

    @property
    def arc_length(self) -> float:
        if len(self.points) < 2:
            return 0.0
        return float(np.sum(np.linalg.norm(np.diff(self.points, axis=0), axis=1)))

    def as_array(self) -> np.ndarray:
        """(n, 2) or (n, 3) array; the third column is the radius."""
        if self.radii is None:
            return self.points.copy()
        return np.column_stack([self.points, self.radii])

    def reversed(self) -> "GeodesicPath":
        return GeodesicPath(
            points=self.points[::-1].copy(),
            radii=None if self.radii is None else self.radii[::-1].copy(),
            used_fallback=self.used_fallback,
        )


def _safe_sample(values: np.ndarray, idx) -> float:
    """Multilinear sample ignoring non-finite corners (inf if none finite)."""
    nd = values.ndim
    base = []
    frac = []
    for ax in range(nd):
        c = min(max(idx[ax], 0.0), values.shape[ax] - 1)
        i0 = min(int(math.floor(c)), values.shape[ax] - 2) if values.shape[ax] > 1 else 0
        base.append(i0)
        frac.append(c - i0)
    total = 0.0
    weight = 0.0
    for corner in range(1 << nd):
        w = 1.0
        pos = []
        for ax in range(nd):
            if corner >> ax & 1:
                w *= frac[ax]
                pos.append(base[ax] + 1)
            else:
                w *= 1.0 - frac[ax]
                pos.append(base[ax])
        v = values[tuple(pos)]
        if np.isfinite(v) and w > 0.0:
            total += w * v
            weight += w
    if weight <= 0.0:
        return math.inf
    return total / weight


def _gradient(values: np.ndarray, idx, h: float) -> np.ndarray:
    """Central-difference gradient with one-sided fallback near inf cells."""
    g = np.zeros(len(idx))
    here = _safe_sample(values, idx)
    for ax in range(len(idx)):
        up = list(idx)
        dn = list(idx)
        up[ax] = min(idx[ax] + h, values.shape[ax] - 1)
        dn[ax] = max(idx[ax] - h, 0.0)
        vu = _safe_sample(values, up)
        vd = _safe_sample(values, dn)
        span = up[ax] - dn[ax]
        if np.isfinite(vu) and np.isfinite(vd) and span > 0:
            g[ax] = (vu - vd) / span
        elif np.isfinite(vu) and np.isfinite(here) and up[ax] > idx[ax]:
            g[ax] = (vu - here) / (up[ax] - idx[ax])
        elif np.isfinite(vd) and np.isfinite(here) and idx[ax] > dn[ax]:
            g[ax] = (here - vd) / (idx[ax] - dn[ax])
    return g


def _descent_direction_2d(u, metric, p, h):
    # index order (y, x)
    g = _gradient(u, (p[1], p[0]), h)
    gy, gx = g[0], g[1]
    a11 = _safe_sample(metric[..., 0], (p[1], p[0]))
    a12 = _safe_sample(metric[..., 1], (p[1], p[0]))
    a22 = _safe_sample(metric[..., 2], (p[1], p[0]))
    det = a11 * a22 - a12 * a12
    if not np.isfinite(det) or det <= 0:
        vx, vy = -gx, -gy
    else:
        vx = -(a22 * gx - a12 * gy) / det
        vy = -(-a12 * gx + a11 * gy) / det
    n = math.hypot(vx, vy)
    if n <= 0 or not math.isfinite(n):
        return None
    return np.array([vx / n, vy / n])


def _descent_direction_3d(u, spatial, radial, p, h):
    g = _gradient(u, (p[2], p[1], p[0]), h)
    gr, gy, gx = g[0], g[1], g[2]
    idx = (p[2], p[1], p[0])
    a11 = _safe_sample(spatial[..., 0], idx)
    a12 = _safe_sample(spatial[..., 1], idx)
    a22 = _safe_sample(spatial[..., 2], idx)
    pr = _safe_sample(radial, idx)
    det = a11 * a22 - a12 * a12
    if not np.isfinite(det) or det <= 0 or not np.isfinite(pr) or pr <= 0:
        vx, vy, vr = -gx, -gy, -gr
    else:
        vx = -(a22 * gx - a12 * gy) / det
        vy = -(-a12 * gx + a11 * gy) / det
        vr = -gr / pr
    n = math.sqrt(vx * vx + vy * vy + vr * vr)
    if n <= 0 or not math.isfinite(n):
        return None
    return np.array([vx / n, vy / n, vr / n])


def _nearest_accepted_node(front: FrontState, p):
    """Grid node nearest to the continuous point with an accepted label."""
    shape = front.grid_shape
    if len(shape) == 2:
        h, w = shape
        cand = (int(round(p[0])), int(round(p[1])))
        best, best_d = None, math.inf
        for dy in range(-1, 2):
            for dx in range(-1, 2):
                x, y = cand[0] + dx, cand[1] + dy
                if 0 <= x < w and 0 <= y < h and front.labels[y, x] == ACCEPTED:
                    d = (x - p[0]) ** 2 + (y - p[1]) ** 2
                    if d < best_d:
                        best, best_d = (x, y), d
        return best
    nr, h, w = shape
    cand = (int(round(p[0])), int(round(p[1])), int(round(p[2])))
    best, best_d = None, math.inf
    for dr in range(-1, 2):
        for dy in range(-1, 2):
            for dx in range(-1, 2):
                x, y, r = cand[0] + dx, cand[1] + dy, cand[2] + dr
                if (
                    0 <= x < w and 0 <= y < h and 0 <= r < nr
                    and front.labels[r, y, x] == ACCEPTED
                ):
                    d = (x - p[0]) ** 2 + (y - p[1]) ** 2 + (r - p[2]) ** 2
                    if d < best_d:
                        best, best_d = (x, y, r), d
    return best


def backtrack_geodesic(
    front: FrontState,
    metric,
    start,
    h_ode: float = 0.5,
) -> GeodesicPath:
    """Integrate the gradient-descent ODE from an accepted node to a source.

    Parameters
    ----------
    front : FrontState
        Completed run whose distance field is descended.
    metric : ndarray (H, W, 3) or MscaleField
        Metric matching the front's grid; the lifted form uses the block
        inverse per axis group.
    start : grid point
        Must be Accepted with finite distance.
    h_ode : float
        Integration step in cells.

    Returns
    -------
    GeodesicPath
        From ``start`` to the source (appended exactly);
        ``used_fallback`` marks segments walked on the ancestor chain
        after the sampled distance stagnated.
    """
    shape = front.grid_shape
    lifted = len(shape) == 3
    if lifted:
        if not isinstance(metric, MscaleField):
            raise InvalidInputError("lifted backtracking needs an MscaleField")
        spatial, radial = metric.spatial, metric.radial
        nr, h, w = shape
        bounds = (w - 1.0, h - 1.0, nr - 1.0)
    else:
        values = metric.values if hasattr(metric, "values") else np.asarray(metric)
        if values.shape[:2] != shape:
            raise InvalidInputError("metric shape does not match the front")
        h, w = shape
        bounds = (w - 1.0, h - 1.0)

    node = tuple(int(c) for c in start)
    label_idx = (node[2], node[1], node[0]) if lifted else (node[1], node[0])
    if front.labels[label_idx] != ACCEPTED:
        raise InvalidInputError(f"start point {node} is not Accepted")

    u = front.distance
    sources = [np.asarray(s, dtype=np.float64) for s in front.sources]

    def u_at(p):
        return _safe_sample(u, (p[2], p[1], p[0]) if lifted else (p[1], p[0]))

    def direction(p):
        if lifted:
            return _descent_direction_3d(u, spatial, radial, p, 0.5)
        return _descent_direction_2d(u, values, p, 0.5)

    p = np.array(node, dtype=np.float64)
    pts = [p.copy()]
    used_fallback = False
    stagnant = 0
    last_u = u_at(p)
    max_steps = int(40 * sum(shape) / h_ode) + 1000

    for _ in range(max_steps):
        near = min(float(np.linalg.norm(p - s)) for s in sources)
        if near <= _TERMINATION_RADIUS:
            src = min(sources, key=lambda s: float(np.linalg.norm(p - s)))
            if np.linalg.norm(p - src) > 1e-12:
                pts.append(src.copy())
            break

        d1 = direction(p)
        advanced = False
        if d1 is not None:
            mid = np.clip(p + h_ode * d1, 0.0, bounds)
            d2 = direction(mid)
            if d2 is None:
                d2 = d1
            p_new = np.clip(p + 0.5 * h_ode * (d1 + d2), 0.0, bounds)
            u_new = u_at(p_new)
            if np.isfinite(u_new) and u_new < last_u - 1e-12:
                p = p_new
                pts.append(p.copy())
                last_u = u_new
                stagnant = 0
                advanced = True
            else:
                stagnant += 1
        else:
            stagnant += 1

        if not advanced and (d1 is None or stagnant >= _STAGNATION_LIMIT):
            # discrete fallback: walk the ancestor chain until U drops
            node_near = _nearest_accepted_node(front, p)
            if node_near is None:
                raise NumericError("backtracking lost the accepted region")
            used_fallback = True
            cur = front.node_index(node_near)
            for _walk in range(4 * _STAGNATION_LIMIT):
                pt = np.array(front.node_point(cur), dtype=np.float64)
                if np.linalg.norm(pt - p) > 1e-9:
                    p = pt
                    pts.append(p.copy())
                val = u.ravel()[cur]
                nxt = front.ancestor[cur]
                if (np.isfinite(val) and val < last_u - 1e-12) or nxt < 0:
                    break
                cur = int(nxt)
            last_u = u_at(p)
            stagnant = 0
    else:
        raise NumericError("backtracking exceeded the step budget")

    arr = _densify(np.array(pts), max_step=1.0)
    if lifted:
        radii = np.interp(arr[:, 2], np.arange(len(metric.radii)), metric.radii)
        return GeodesicPath(points=arr[:, :2], radii=radii, used_fallback=used_fallback)
    return GeodesicPath(points=arr, used_fallback=used_fallback)


def _densify(arr: np.ndarray, max_step: float) -> np.ndarray:
    """Subdivide hops longer than ``max_step`` (source append, fallback)."""
    if len(arr) < 2:
        return arr
    out = [arr[0]]
    for a, b in zip(arr[:-1], arr[1:]):
        gap = float(np.linalg.norm(b - a))
        if gap > max_step:
            n = int(math.ceil(gap / max_step))
            for i in range(1, n):
                out.append(a + (b - a) * (i / n))
        out.append(b)
    return np.array(out)


def ancestor_chain(front: FrontState, start) -> np.ndarray:
    """Full discrete ancestor chain from a node to its source."""
    cur = front.node_index(start)
    out = [front.node_point(cur)]
    guard = front.ancestor.shape[0] + 1
    for _ in range(guard):
        nxt = front.ancestor[cur]
        if nxt < 0:
            break
        cur = int(nxt)
        out.append(front.node_point(cur))
    return np.array(out, dtype=np.float64)


def truncated_backtrack(front: FrontState, start, count: int):
    """Follow ancestor links ``count`` times; stops early at a source."""
    cur = front.node_index(start)
    for _ in range(count):
        nxt = front.ancestor[cur]
        if nxt < 0:
            break
        cur = int(nxt)
    return front.node_point(cur)


def resample_path(path: GeodesicPath, spacing: float) -> GeodesicPath:
    """Uniform arc-length resampling preserving both endpoints."""
    pts = path.points
    if len(pts) < 2:
        return path
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    arc = np.concatenate([[0.0], np.cumsum(seg)])
    total = arc[-1]
    if total <= 0:
        return path
    n_out = max(int(round(total / spacing)) + 1, 2)
    targets = np.linspace(0.0, total, n_out)
    out = np.column_stack(
        [np.interp(targets, arc, pts[:, i]) for i in range(pts.shape[1])]
    )
    radii = None
    if path.radii is not None:
        radii = np.interp(targets, arc, path.radii)
    return GeodesicPath(points=out, radii=radii, used_fallback=path.used_fallback)


def concatenate_paths(
    path_from_s: GeodesicPath,
    path_from_q: GeodesicPath,
    meeting_point,
    spacing: float | None = None,
) -> GeodesicPath:
    """Splice two half-geodesics that both terminate at the meeting node.

    The output runs start-to-end with the meeting point at the weld (the
    second half traverses ``path_from_q`` in reverse).  With ``spacing``
    given, the welded path is resampled to uniform arc-length steps.
    """
    m = np.asarray(meeting_point, dtype=np.float64)
    for name, p in (("first", path_from_s), ("second", path_from_q)):
        gap = float(np.linalg.norm(p.points[-1] - m))
        if gap > _TERMINATION_RADIUS:
            raise InvalidInputError(
                f"{name} path ends {gap:.2f} cells from the meeting point"
            )
    rev = path_from_q.reversed()
    pts = np.vstack([path_from_s.points, rev.points[1:]])
    radii = None
    if path_from_s.radii is not None and rev.radii is not None:
        radii = np.concatenate([path_from_s.radii, rev.radii[1:]])
    joined = GeodesicPath(
        points=pts,
        radii=radii,
        used_fallback=path_from_s.used_fallback or path_from_q.used_fallback,
    )
    if spacing is None:
        return joined
    return resample_path(joined, spacing)


def export_path_json(path: GeodesicPath, fp) -> None:
    """Write the path as a JSON array of [x, y] or [x, y, r] samples."""
    data = [[round(float(c), 6) for c in row] for row in path.as_array()]
    if hasattr(fp, "write"):
        json.dump(data, fp)
    else:
        with open(fp, "w") as fh:
            json.dump(data, fh)


def export_path_csv(path: GeodesicPath, fp) -> None:
    """CSV alternative to the JSON export."""
    arr = path.as_array()
    header = "x,y" if arr.shape[1] == 2 else "x,y,r"
    np.savetxt(fp, arr, delimiter=",", header=header, comments="", fmt="%.6f")
