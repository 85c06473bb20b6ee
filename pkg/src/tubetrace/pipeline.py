"""End-to-end extraction pipelines and the evaluation harness.

Wires the stages together: feature filtering (multi-scale oriented flux),
orientation scoring and coherence enhancement, dynamic fast marching
(single front or two partial fronts meeting at a saddle), continuous
backtracking, and the optional region-constrained radius-lifted pass that
recovers the vessel thickness along a prior centerline.  Also the
path-overlap measure used for evaluation and the deterministic supercover
rasterizer behind it.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .errors import (
    ConfigurationError,
    InvalidInputError,
    MaskTooTightError,
    UnreachableTargetError,
)
from .fastmarch import fm_run_dynamic, fm_run_static_lifted, partial_fronts_run
from .grid import ScalarImage, TensorField
from .metrics import MscaleField, RegionMask, build_mscale, build_region_mask
from .oof import (
    OofVolume,
    OptimalScaleMap,
    RadiusSpace,
    normalize_responses,
    oof_response,
    optimal_scale_features,
)
from .orientation import (
    KernelBank,
    OrientationPeakSet,
    OrientationVolume,
    build_T_base,
    build_kernel_bank,
    coherence_enhance,
    local_maxima_set,
    orientation_score_psi,
)
from .tracing import GeodesicPath, backtrack_geodesic, concatenate_paths

__all__ = [
    "ExtractionConfig",
    "ExtractionResult",
    "FeatureBundle",
    "compute_features",
    "evaluate_theta",
    "extract_centerline_afc",
    "extract_radius_lifted_rc",
    "rasterize_path",
]


@dataclass(frozen=True)
class ExtractionConfig:
    """Every tunable of the pipeline with its default value.

    ``mode`` selects the propagation scheme: ``"partial"`` (two fronts
    meeting at a saddle, the default) or ``"single"`` (one front from the
    source).  ``dilation_radius`` defaults to ``r_max + 2`` when unset.
    """

    sigma1: float = 300.0
    sigma2: float = 1.0
    w: int = 11
    n_theta: int = 64
    peak_window: int = 5
    eps1: float = 1e-8
    eps2: float = 1e-8
    chi1: int = 1
    chi2: int = 12
    alpha: float = 2.0
    lam: float = 20.0
    xi_aniso: float = 10.0
    xi_ident: float = 0.1
    c_ratio: float = 10.0
    beta_scale: float = 1.0
    oof_sigma: float = 1.0
    r_min: float = 1.0
    r_max: float = 8.0
    n_r: int = 8
    dilation_radius: float | None = None
    h_ode: float = 0.5
    mode: str = "partial"
    invert: bool = False

    def __post_init__(self):
        if self.chi1 > self.chi2:
            raise ConfigurationError("chi1 must not exceed chi2")
        if self.sigma1 <= self.sigma2:
            raise ConfigurationError("sigma1 must exceed sigma2")
        if self.r_min >= self.r_max:
            raise ConfigurationError("r_min must be below r_max")
        if self.mode not in ("single", "partial"):
            raise ConfigurationError("mode must be 'single' or 'partial'")
        if self.h_ode <= 0:
            raise ConfigurationError("h_ode must be positive")

    @property
    def effective_dilation(self) -> float:
        return self.r_max + 2.0 if self.dilation_radius is None else self.dilation_radius

    def radius_space(self) -> RadiusSpace:
        return RadiusSpace(self.r_min, self.r_max, self.n_r)

    def as_dict(self) -> dict:
        return asdict(self)

    def replace(self, **kwargs) -> "ExtractionConfig":
        data = self.as_dict()
        data.update(kwargs)
        return ExtractionConfig.from_mapping(data)

    @staticmethod
    def from_mapping(data: dict) -> "ExtractionConfig":
        known = {f.name: f.type for f in fields(ExtractionConfig)}
        kwargs = {}
        for key, value in data.items():
            if key not in known:
                raise ConfigurationError(f"unknown config key {key!r}")
            kwargs[key] = value
        return ExtractionConfig(**kwargs)

    @staticmethod
    def from_file(path) -> "ExtractionConfig":
        """Parse a flat ``key = value`` text file; every key optional."""
        data: dict = {}
        with open(path) as fh:
            for line_no, line in enumerate(fh, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigurationError(
                        f"line {line_no}: expected 'key = value'"
                    )
                key, value = (part.strip() for part in line.split("=", 1))
                data[key] = _parse_scalar(value)
        return ExtractionConfig.from_mapping(data)


def _parse_scalar(text: str):
    low = text.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    if low in ("none", "null"):
        return None
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


@dataclass
class FeatureBundle:
    """Everything derived from one image under one config, immutable.

    Shared read-only across extraction requests for the same image.
    """

    config: ExtractionConfig
    image: ScalarImage
    volume: OofVolume              # globally rescaled responses
    features: OptimalScaleMap
    bank: KernelBank
    raw: OrientationVolume         # psi
    enhanced: OrientationVolume    # Psi
    peaks: OrientationPeakSet
    t_base: TensorField
    timings: dict = field(default_factory=dict)
    _mscale: MscaleField | None = None

    @property
    def shape(self):
        return self.image.values.shape

    def mscale(self) -> MscaleField:
        if self._mscale is None:
            self._mscale = build_mscale(
                self.volume, self.config.c_ratio, self.config.beta_scale
            )
        return self._mscale


def compute_features(image: ScalarImage, config: ExtractionConfig) -> FeatureBundle:
    """Run the feature stack once for an image (cacheable per image)."""
    timings = {}
    t0 = time.perf_counter()
    vol = oof_response(image, config.radius_space(), config.oof_sigma)
    vol = normalize_responses(vol)
    timings["oof"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    features = optimal_scale_features(vol)
    raw = orientation_score_psi(features, config.n_theta)
    timings["psi"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    bank = build_kernel_bank(
        config.sigma1, config.sigma2, config.w, config.n_theta, config.eps1
    )
    enhanced = coherence_enhance(raw, bank)
    timings["enhance"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    peaks = local_maxima_set(enhanced, config.peak_window)
    t_base = build_T_base(
        raw, peaks, enhanced, config.alpha, config.xi_ident, config.eps2
    )
    timings["tensors"] = time.perf_counter() - t0
    return FeatureBundle(
        config=config,
        image=image,
        volume=vol,
        features=features,
        bank=bank,
        raw=raw,
        enhanced=enhanced,
        peaks=peaks,
        t_base=t_base,
        timings=timings,
    )


@dataclass
class ExtractionResult:
    """Output of an end-to-end extraction."""

    path: GeodesicPath
    config: ExtractionConfig
    points: list
    mode: str
    timings: dict
    diagnostics: dict
    radius_path: GeodesicPath | None = None
    region_mask: RegionMask | None = None


def _dyn_metric(dyn_state) -> np.ndarray:
    """Assembled coherence tensors with identity where never assembled.

    Any SPD substitute keeps the descent direction a descent direction;
    unassembled cells sit outside the accepted region the tracer visits.
    """
    t = dyn_state.tensor.copy()
    unset = ~dyn_state.assembled
    t[unset] = np.array([1.0, 0.0, 1.0])
    return t


def _extract_segment(bundle: FeatureBundle, s, q, config: ExtractionConfig):
    """One endpoint pair, by the configured propagation scheme."""
    diag: dict = {}
    if config.mode == "single":
        front, dyn = fm_run_dynamic(
            bundle.t_base, bundle.enhanced, bundle.peaks, s, q,
            config.chi1, config.chi2, config.lam, config.xi_aniso,
        )
        path = backtrack_geodesic(front, _dyn_metric(dyn), q, config.h_ode)
        path = GeodesicPath(
            points=path.points[::-1].copy(), used_fallback=path.used_fallback
        )
        diag["fallback_pixels"] = int(dyn.fallback.sum())
        diag["accepted"] = len(front.order)
        return path, diag
    saddle, front_s, front_q, dyn_s, dyn_q = partial_fronts_run(
        bundle.t_base, bundle.enhanced, bundle.peaks, s, q,
        config.chi1, config.chi2, config.lam, config.xi_aniso,
    )
    half_s = backtrack_geodesic(front_s, _dyn_metric(dyn_s), saddle, config.h_ode)
    half_q = backtrack_geodesic(front_q, _dyn_metric(dyn_q), saddle, config.h_ode)
    path = concatenate_paths(
        half_s.reversed(), half_q.reversed(), saddle, spacing=config.h_ode
    )
    diag["saddle"] = [int(saddle[0]), int(saddle[1])]
    diag["fallback_pixels"] = int(dyn_s.fallback.sum() + dyn_q.fallback.sum())
    diag["accepted"] = len(front_s.order) + len(front_q.order)
    diag["saddle_gap"] = abs(
        float(front_s.distance[saddle[1], saddle[0]])
        - float(front_q.distance[saddle[1], saddle[0]])
    )
    return path, diag


def extract_centerline_afc(
    image: ScalarImage,
    points,
    config: ExtractionConfig | None = None,
    features: FeatureBundle | None = None,
) -> ExtractionResult:
    """Extract the centerline through an ordered point list.

    Consecutive point pairs are extracted independently (single-front or
    partial-fronts per the config) and concatenated at the shared
    waypoints, which is also the interactive recovery flow when a
    two-point path takes the wrong branch.
    """
    config = config or ExtractionConfig()
    pts = [(int(p[0]), int(p[1])) for p in points]
    if len(pts) < 2:
        raise InvalidInputError("need at least source and end point")
    for a, b in zip(pts, pts[1:]):
        if a == b:
            raise InvalidInputError("consecutive points must be distinct")

    timings = {}
    if features is None:
        t0 = time.perf_counter()
        features = compute_features(image, config)
        timings["features"] = time.perf_counter() - t0
        timings.update({f"features.{k}": v for k, v in features.timings.items()})

    t0 = time.perf_counter()
    seg_paths = []
    diagnostics: dict = {"segments": []}
    for a, b in zip(pts, pts[1:]):
        path, diag = _extract_segment(features, a, b, config)
        seg_paths.append(path)
        diagnostics["segments"].append(diag)
    full = seg_paths[0]
    for nxt in seg_paths[1:]:
        joined = np.vstack([full.points, nxt.points[1:]])
        full = GeodesicPath(
            points=joined,
            used_fallback=full.used_fallback or nxt.used_fallback,
        )
    timings["propagation"] = time.perf_counter() - t0
    diagnostics["used_fallback"] = full.used_fallback
    return ExtractionResult(
        path=full,
        config=config,
        points=pts,
        mode=config.mode,
        timings=timings,
        diagnostics=diagnostics,
    )


def extract_radius_lifted_rc(
    image: ScalarImage,
    prior: GeodesicPath,
    s,
    q,
    config: ExtractionConfig | None = None,
    features: FeatureBundle | None = None,
) -> ExtractionResult:
    """Region-constrained radius-lifted extraction along a prior curve.

    The prior is rasterized and dilated into the allowed region; a static
    radius-lifted run propagates from the lifted source to the lifted end
    (each placed at its optimal-scale radius), and the backtracked
    geodesic splits into the centerline and the radius profile.

    Raises
    ------
    MaskTooTightError
        If the lifted end is unreachable inside the region (the caller
        may enlarge the dilation radius).
    """
    config = config or ExtractionConfig()
    if features is None:
        features = compute_features(image, config)
    timings = {}
    t0 = time.perf_counter()
    mask = build_region_mask(
        prior.points, image.values.shape, config.effective_dilation
    )
    mscale = features.mscale()
    timings["metric"] = time.perf_counter() - t0

    def lift(p):
        x, y = int(p[0]), int(p[1])
        if not mask.mask[y, x]:
            raise InvalidInputError(f"endpoint ({x}, {y}) outside the region")
        return (x, y, int(features.features.zeta_index[y, x]))

    s_hat = lift(s)
    q_hat = lift(q)
    t0 = time.perf_counter()
    try:
        front = fm_run_static_lifted(mscale, s_hat, q_hat, mask)
    except UnreachableTargetError as exc:
        raise MaskTooTightError(
            "lifted end point unreachable; enlarge the dilation radius"
        ) from exc
    lifted = backtrack_geodesic(front, mscale, q_hat, config.h_ode)
    timings["propagation"] = time.perf_counter() - t0
    path = GeodesicPath(
        points=lifted.points[::-1].copy(),
        radii=lifted.radii[::-1].copy(),
        used_fallback=lifted.used_fallback,
    )
    return ExtractionResult(
        path=path,
        config=config,
        points=[tuple(s), tuple(q)],
        mode="region-constrained",
        timings=timings,
        diagnostics={"accepted": len(front.order), "used_fallback": path.used_fallback},
        radius_path=path,
        region_mask=mask,
    )


# ---------------------------------------------------------------------------
# rasterization and the overlap measure
# ---------------------------------------------------------------------------

def _supercover_segment(a, b):
    """Cells traversed by a segment, 4-connected (corner hits take both)."""
    ax, ay = float(a[0]), float(a[1])
    bx, by = float(b[0]), float(b[1])
    x, y = int(round(ax)), int(round(ay))
    x1, y1 = int(round(bx)), int(round(by))
    cells = [(x, y)]
    dx, dy = bx - ax, by - ay
    step_x = 1 if dx > 0 else -1
    step_y = 1 if dy > 0 else -1
    tx = ((x + 0.5 * step_x) - ax) / dx if dx != 0 else math.inf
    ty = ((y + 0.5 * step_y) - ay) / dy if dy != 0 else math.inf
    dtx = abs(1.0 / dx) if dx != 0 else math.inf
    dty = abs(1.0 / dy) if dy != 0 else math.inf
    guard = 2 * (abs(x1 - x) + abs(y1 - y)) + 8
    while (x, y) != (x1, y1) and guard > 0:
        guard -= 1
        if abs(tx - ty) < 1e-12:
            cells.append((x + step_x, y))
            cells.append((x, y + step_y))
            x += step_x
            y += step_y
            tx += dtx
            ty += dty
        elif tx < ty:
            x += step_x
            tx += dtx
        else:
            y += step_y
            ty += dty
        cells.append((x, y))
    return cells


def rasterize_path(points) -> list[tuple[int, int]]:
    """All grid cells traversed by a polyline (4-connected supercover).

    Deterministic and conservative: cells are listed once, in first-visit
    order.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] == 0:
        raise InvalidInputError("empty path cannot be rasterized")
    seen = set()
    out = []
    if pts.shape[0] == 1:
        cell = (int(round(pts[0, 0])), int(round(pts[0, 1])))
        return [cell]
    for a, b in zip(pts[:-1], pts[1:]):
        for cell in _supercover_segment(a, b):
            if cell not in seen:
                seen.add(cell)
                out.append(cell)
    return out


def evaluate_theta(path: GeodesicPath | np.ndarray, truth_mask: np.ndarray) -> float:
    """Fraction of the path's traversed cells inside the truth mask."""
    pts = path.points if isinstance(path, GeodesicPath) else np.asarray(path)
    if pts.shape[0] == 0:
        raise InvalidInputError("empty path")
    mask = np.asarray(truth_mask, dtype=bool)
    h, w = mask.shape
    cells = rasterize_path(pts)
    inside = sum(
        1 for cx, cy in cells if 0 <= cx < w and 0 <= cy < h and mask[cy, cx]
    )
    return inside / len(cells)
