"""Synthetic tubular scenes with exact ground truth.

Dark anti-aliased tubes (straight segments and circular arcs) on a bright
background, optional additive Gaussian noise, plus per-tube coverage
masks and sampled centerlines.  Presets reproduce the qualitative failure
geometries used throughout the tests: near-parallel tubes, a single
crossing, a loop whose target branch is the Euclidean-longer one, and a
weak arc bridged by a strong straight distractor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .grid import ScalarImage

__all__ = [
    "SyntheticScene",
    "TubeSpec",
    "disk_image",
    "generate_synthetic_crossing",
    "preset_spec",
    "tube_image",
]


@dataclass(frozen=True)
class TubeSpec:
    """One tube: a centerline curve, a half-width and an intensity depth.

    ``kind`` is ``"segment"`` (params ``p0``, ``p1``) or ``"arc"``
    (params ``center``, ``radius``, ``a0``, ``a1`` in radians, traversed
    counterclockwise from a0 to a1).
    """

    kind: str
    params: dict
    half_width: float
    depth: float

    def centerline(self, step: float = 1.0) -> np.ndarray:
        if self.kind == "segment":
            p0 = np.asarray(self.params["p0"], dtype=np.float64)
            p1 = np.asarray(self.params["p1"], dtype=np.float64)
            n = max(int(np.ceil(np.linalg.norm(p1 - p0) / step)), 1) + 1
            t = np.linspace(0.0, 1.0, n)[:, None]
            return p0[None, :] * (1 - t) + p1[None, :] * t
        if self.kind == "arc":
            c = np.asarray(self.params["center"], dtype=np.float64)
            r = float(self.params["radius"])
            a0, a1 = float(self.params["a0"]), float(self.params["a1"])
            n = max(int(np.ceil(abs(a1 - a0) * r / step)), 2) + 1
            ang = np.linspace(a0, a1, n)
            return np.column_stack([c[0] + r * np.cos(ang), c[1] + r * np.sin(ang)])
        if self.kind == "polyline":
            return np.asarray(self.params["points"], dtype=np.float64)
        raise ConfigurationError(f"unknown tube kind {self.kind!r}")

    def distance(self, xx: np.ndarray, yy: np.ndarray) -> np.ndarray:
        """Euclidean distance from each grid point to the centerline."""
        if self.kind == "segment":
            p0 = np.asarray(self.params["p0"], dtype=np.float64)
            p1 = np.asarray(self.params["p1"], dtype=np.float64)
            return _segment_distance(xx, yy, p0, p1)
        if self.kind == "polyline":
            pts = np.asarray(self.params["points"], dtype=np.float64)
            best = np.full(xx.shape, np.inf)
            for p0, p1 in zip(pts[:-1], pts[1:]):
                np.minimum(best, _segment_distance(xx, yy, p0, p1), out=best)
            return best
        c = np.asarray(self.params["center"], dtype=np.float64)
        r = float(self.params["radius"])
        a0, a1 = float(self.params["a0"]), float(self.params["a1"])
        ang = np.arctan2(yy - c[1], xx - c[0])
        span = a1 - a0
        rel = np.mod(ang - a0, 2.0 * np.pi)
        inside = rel <= span
        d_ring = np.abs(np.hypot(xx - c[0], yy - c[1]) - r)
        e0 = c + r * np.array([math.cos(a0), math.sin(a0)])
        e1 = c + r * np.array([math.cos(a1), math.sin(a1)])
        d_ends = np.minimum(
            np.hypot(xx - e0[0], yy - e0[1]), np.hypot(xx - e1[0], yy - e1[1])
        )
        return np.where(inside, d_ring, d_ends)


def _segment_distance(xx, yy, p0, p1):
    d = p1 - p0
    denom = float(d @ d)
    if denom <= 0:
        return np.hypot(xx - p0[0], yy - p0[1])
    t = np.clip(((xx - p0[0]) * d[0] + (yy - p0[1]) * d[1]) / denom, 0.0, 1.0)
    return np.hypot(xx - (p0[0] + t * d[0]), yy - (p0[1] + t * d[1]))


@dataclass
class SyntheticScene:
    """Rendered image plus exact per-tube ground truth."""

    image: ScalarImage
    masks: list[np.ndarray]
    centerlines: list[np.ndarray]
    tubes: list[TubeSpec]
    seed: int
    background: float
    noise_sigma: float


def generate_synthetic_crossing(
    tubes: list[TubeSpec],
    shape=(128, 128),
    background: float = 0.92,
    noise_sigma: float = 0.0,
    seed: int = 0,
) -> SyntheticScene:
    """Render dark tubes on a bright background with exact masks.

    Tube coverage is anti-aliased over one cell; overlaps take the darker
    tube.  Noise is seeded, additive Gaussian, clamped to [0, 1].

    Raises
    ------
    ConfigurationError
        If a tube does not fit the canvas.
    """
    h, w = shape
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    drop = np.zeros((h, w))
    masks = []
    centerlines = []
    for tube in tubes:
        line = tube.centerline()
        margin = tube.half_width + 1.0
        if (
            line[:, 0].min() < -margin or line[:, 0].max() > w - 1 + margin
            or line[:, 1].min() < -margin or line[:, 1].max() > h - 1 + margin
        ):
            raise ConfigurationError("tube centerline leaves the canvas")
        dist = tube.distance(xx, yy)
        coverage = np.clip(tube.half_width + 0.5 - dist, 0.0, 1.0)
        masks.append(dist < tube.half_width)
        centerlines.append(line)
        drop = np.maximum(drop, tube.depth * coverage)
    values = background - drop
    if noise_sigma > 0:
        rng = np.random.default_rng(seed)
        values = values + rng.normal(0.0, noise_sigma, size=values.shape)
    values = np.clip(values, 0.0, 1.0)
    return SyntheticScene(
        image=ScalarImage(values),
        masks=masks,
        centerlines=centerlines,
        tubes=list(tubes),
        seed=seed,
        background=background,
        noise_sigma=noise_sigma,
    )


def _arc_through(p0, apex, p1) -> dict:
    """Circle-arc parameters through three points (p0 -> apex -> p1)."""
    ax, ay = p0
    bx, by = apex
    cx_, cy_ = p1
    d = 2.0 * (ax * (by - cy_) + bx * (cy_ - ay) + cx_ * (ay - by))
    if abs(d) < 1e-9:
        raise ConfigurationError("arc points are collinear")
    ux = (
        (ax * ax + ay * ay) * (by - cy_)
        + (bx * bx + by * by) * (cy_ - ay)
        + (cx_ * cx_ + cy_ * cy_) * (ay - by)
    ) / d
    uy = (
        (ax * ax + ay * ay) * (cx_ - bx)
        + (bx * bx + by * by) * (ax - cx_)
        + (cx_ * cx_ + cy_ * cy_) * (bx - ax)
    ) / d
    r = math.hypot(ax - ux, ay - uy)
    a_start = math.atan2(ay - uy, ax - ux)
    a_mid = math.atan2(by - uy, bx - ux)
    a_end = math.atan2(cy_ - uy, cx_ - ux)
    # orient the span counterclockwise from start and make sure it passes
    # through the apex angle
    span = (a_end - a_start) % (2.0 * math.pi)
    mid = (a_mid - a_start) % (2.0 * math.pi)
    if mid > span:  # apex on the other side: start from the end instead
        a_start, a_end = a_end, a_start
        span = (a_end - a_start) % (2.0 * math.pi)
    return {"center": (ux, uy), "radius": r, "a0": a_start, "a1": a_start + span}


def preset_spec(name: str, seed: int = 0, shape=(160, 160)) -> dict:
    """Parameters of one named fixture.

    Returns a dict with ``tubes`` (target first), ``shape``, ``noise``,
    ``seed``, endpoint suggestions ``s``/``q`` on the target tube and a
    ``waypoint`` for the loop recovery flow.  Structures keep enough
    clearance (away from the crossings) that the multi-scale filters do
    not bridge the gap.

    Presets: ``parallel`` (two near-parallel tubes, similar contrast),
    ``cross`` (single crossing, similar contrast), ``loop`` (target is
    the longer branch of a loop), ``weak-cross`` (weak target arc crossed
    twice by a strong straight tube).
    """
    h, w = shape
    rng = np.random.default_rng(seed)
    jit = lambda s: float(rng.uniform(-s, s))
    cy = h // 2
    if name == "parallel":
        gap = 16.0 + jit(2.0)
        y0 = cy - gap / 2 + jit(2.0)
        y1 = cy + gap / 2 + jit(2.0)
        tubes = [
            TubeSpec("segment", {"p0": (10.0, y0), "p1": (w - 11.0, y0)}, 2.4, 0.50),
            TubeSpec("segment", {"p0": (10.0, y1), "p1": (w - 11.0, y1)}, 2.6, 0.56),
        ]
        s = (14, int(round(y0)))
        q = (w - 15, int(round(y0)))
        way = None
    elif name == "cross":
        angle = math.radians(55.0 + jit(8.0))
        cx = w / 2 + jit(4.0)
        dx, dy = math.cos(angle), math.sin(angle)
        reach = min(h, w) / 2 - 16
        ty = cy + jit(2.0)
        tubes = [
            TubeSpec("segment", {"p0": (12.0, ty), "p1": (w - 13.0, ty)}, 2.5, 0.50),
            TubeSpec("segment", {"p0": (cx - reach * dx, cy - reach * dy),
                                 "p1": (cx + reach * dx, cy + reach * dy)}, 2.7, 0.56),
        ]
        s = (16, int(round(ty)))
        q = (w - 17, int(round(ty)))
        way = None
    elif name == "loop":
        # the target detours over a trapezoid bump while a straight
        # distractor of near-identical contrast closes the loop along the
        # bump's chord; at each junction the chord is the straight-ahead
        # continuation of the stems, so a two-point extraction rides it
        # and misses the longer target branch
        base_y = h / 2 + 30.0 + jit(2.0)
        amp = 48.0 + jit(3.0)
        x0 = 26.0 + jit(2.0)
        x1 = w - 26.0 + jit(2.0)
        mid = (x0 + x1) / 2 + jit(2.0)
        top = base_y - amp
        pts = np.array([
            (12.0, base_y),
            (x0, base_y),
            (mid - 10.0, top + 4.0),
            (mid - 2.0, top),
            (mid + 2.0, top),
            (mid + 10.0, top + 4.0),
            (x1, base_y),
            (w - 13.0, base_y),
        ])
        tubes = [
            TubeSpec("polyline", {"points": pts}, 3.0, 0.52),
            TubeSpec("segment", {"p0": (x0, base_y), "p1": (x1, base_y)}, 3.0,
                     0.52 + jit(0.01)),
        ]
        s = (16, int(round(base_y)))
        q = (w - 17, int(round(base_y)))
        way = (int(round(mid)), int(round(top)))
    elif name == "weak-cross":
        base_y = h - 28.0 + jit(2.0)
        left = (20.0, base_y)
        right = (w - 21.0, base_y)
        apex = (w / 2 + jit(4.0), base_y - 62.0 - jit(4.0))
        arc = _arc_through(left, apex, right)
        cross_y = base_y - 22.0 + jit(2.0)
        tilt = jit(0.04)
        tubes = [
            TubeSpec("arc", arc, 2.5, 0.36 + jit(0.03)),
            TubeSpec("segment", {"p0": (8.0, cross_y - tilt * w / 2),
                                 "p1": (w - 9.0, cross_y + tilt * w / 2)}, 3.0,
                     0.68 + jit(0.04)),
        ]
        s = (int(left[0]) + 2, int(round(base_y)) - 1)
        q = (int(right[0]) - 2, int(round(base_y)) - 1)
        way = (int(round(apex[0])), int(round(apex[1])))
    else:
        raise ConfigurationError(f"unknown preset {name!r}")
    return {
        "tubes": tubes,
        "shape": shape,
        "noise": 0.01,
        "seed": seed,
        "s": s,
        "q": q,
        "waypoint": way,
    }


def disk_image(size: int = 64, radius: float = 4.0, depth: float = 0.6,
               background: float = 0.9) -> ScalarImage:
    """Dark disk on a bright background (anti-aliased boundary)."""
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    c = (size - 1) / 2.0
    dist = np.hypot(xx - c, yy - c)
    cov = np.clip(radius + 0.5 - dist, 0.0, 1.0)
    return ScalarImage(np.clip(background - depth * cov, 0.0, 1.0))


def tube_image(
    shape=(64, 96), half_width: float = 3.0, depth: float = 0.6,
    background: float = 0.9, y: float | None = None,
):
    """Straight horizontal dark tube; returns ``(image, mask, centerline)``."""
    h, w = shape
    cy = h / 2.0 if y is None else float(y)
    tube = TubeSpec("segment", {"p0": (-0.4, cy), "p1": (w - 0.6, cy)},
                    half_width, depth)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    dist = tube.distance(xx, yy)
    cov = np.clip(half_width + 0.5 - dist, 0.0, 1.0)
    img = ScalarImage(np.clip(background - depth * cov, 0.0, 1.0))
    line = np.column_stack([np.arange(w, dtype=np.float64),
                            np.full(w, cy)])
    return img, dist < half_width, line
