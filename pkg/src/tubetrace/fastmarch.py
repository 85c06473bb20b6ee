"""Anisotropic fast-marching Eikonal solvers.

Front propagation accepts grid nodes in nondecreasing distance order,
updating neighbors through a semi-Lagrangian Hopf-Lax operator evaluated
over metric-acute simplex stencils (obtuse-superbase reduction).  Three
engines: a static 2D solver, a static radius-lifted 3D solver for
block-diagonal tensors, and the dynamic single-front scheme that
reassembles the coherence metric from trailing reference points as the
front advances, plus a two-front variant that halts at the first meeting
node (saddle).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _solver
from .errors import (
    InvalidInputError,
    InvalidSeedError,
    NumericError,
    UnreachableTargetError,
)
from .grid import SymTensor2, TensorField
from .metrics import MscaleField, RegionMask
from .orientation import OrientationPeakSet, OrientationVolume, unit_vectors

__all__ = [
    "DynamicMetricState",
    "FrontState",
    "StencilSet",
    "build_stencil",
    "dump_distance_map",
    "fm_run_dynamic",
    "fm_run_static",
    "fm_run_static_lifted",
    "hopf_lax_update",
    "partial_fronts_run",
]


@dataclass
class StencilSet:
    """Update neighborhood of one node: a vertex cycle and its simplexes.

    ``offsets`` is the (m, 2) or (m, 3) integer vertex cycle; ``simplexes``
    lists index tuples into it (pairs in 2D, triples in 3D).
    """

    offsets: np.ndarray
    simplexes: list[tuple]

    def is_acute(self, metric) -> bool:
        """Causality predicate: ``<e_i, M e_j> >= 0`` inside each simplex."""
        m = np.asarray(metric, dtype=np.float64)
        for simplex in self.simplexes:
            for i in range(len(simplex)):
                for j in range(i + 1, len(simplex)):
                    ei = self.offsets[simplex[i]].astype(np.float64)
                    ej = self.offsets[simplex[j]].astype(np.float64)
                    if float(ei @ m @ ej) < -1e-9 * math.sqrt(
                        float(ei @ m @ ei) * float(ej @ m @ ej)
                    ):
                        return False
        return True


@dataclass
class FrontState:
    """Result of one propagation run.

    ``distance`` and ``labels`` are grid-shaped; ``ancestor`` holds, per
    linear node index, the Hopf-Lax minimizing neighbor used for discrete
    backtracking (-1 at sources).  ``order`` lists accepted linear indices
    in acceptance order.
    """

    distance: np.ndarray
    labels: np.ndarray
    ancestor: np.ndarray
    order: np.ndarray
    sources: list

    @property
    def grid_shape(self):
        return self.distance.shape

    def node_index(self, point) -> int:
        """Linear index of an integer grid point (x, y) or (x, y, r)."""
        if len(self.grid_shape) == 2:
            h, w = self.grid_shape
            return int(point[1]) * w + int(point[0])
        nr, h, w = self.grid_shape
        return (int(point[2]) * h + int(point[1])) * w + int(point[0])

    def node_point(self, index: int):
        if len(self.grid_shape) == 2:
            h, w = self.grid_shape
            return (index % w, index // w)
        nr, h, w = self.grid_shape
        return (index % w, (index // w) % h, index // (w * h))

    @property
    def accepted_values(self) -> np.ndarray:
        return self.distance.ravel()[self.order]

    @property
    def max_accepted_increment(self) -> float:
        vals = self.accepted_values
        if len(vals) < 2:
            return 0.0
        return float(np.max(np.diff(vals)))


@dataclass
class DynamicMetricState:
    """Per-pixel feature state assembled during a dynamic run.

    ``mu_bin`` is -1 where the front never touched; elsewhere the frozen
    orientation bin, with ``p`` the matching unit vector and ``tensor``
    the assembled coherence tensor.  ``fallback`` marks pixels where no
    orientation peak existed and the reference direction was propagated.
    """

    mu_bin: np.ndarray
    tensor: np.ndarray        # (H, W, 3)
    fallback: np.ndarray      # (H, W) bool
    t_base: TensorField
    n_theta: int
    params: dict

    @property
    def p(self) -> np.ndarray:
        gx, gy = unit_vectors(self.n_theta)
        k = np.clip(self.mu_bin, 0, None)
        out = np.stack([gx[k], gy[k]], axis=-1)
        out[self.mu_bin < 0] = 0.0
        return out

    @property
    def assembled(self) -> np.ndarray:
        return self.mu_bin >= 0

    def tensor_at(self, x: int, y: int) -> SymTensor2:
        a11, a12, a22 = self.tensor[y, x]
        return SymTensor2(a11, a12, a22)


def build_stencil(t) -> StencilSet:
    """Acute simplex stencil of an SPD tensor (2x2 or lifted block).

    2x2 inputs give the obtuse-superbase vertex cycle (4 simplexes for
    axis-aligned tensors, 6 otherwise).  A ``(SymTensor2, radial)`` pair
    gives the lifted stencil whose simplexes are triangles joining each
    spatial edge to the two radial apexes.

    Raises
    ------
    NumericError
        If the superbase reduction does not converge (non-SPD input).
    """
    radial = None
    if isinstance(t, tuple):
        t, radial = t
    ex = np.empty(_solver.MAX_STENCIL)
    ey = np.empty(_solver.MAX_STENCIL)
    m = _solver._stencil_cycle(float(t.a11), float(t.a12), float(t.a22), ex, ey)
    if m < 0:
        raise NumericError("superbase reduction did not converge; tensor not SPD")
    cycle = np.stack([ex[:m], ey[:m]], axis=1).astype(np.int64)
    if radial is None:
        simplexes = [(i, (i + 1) % m) for i in range(m)]
        return StencilSet(offsets=cycle, simplexes=simplexes)
    offsets = np.zeros((m + 2, 3), dtype=np.int64)
    offsets[:m, :2] = cycle
    offsets[m] = (0, 0, 1)
    offsets[m + 1] = (0, 0, -1)
    simplexes = []
    for i in range(m):
        j = (i + 1) % m
        simplexes.append((i, j, m))
        simplexes.append((i, j, m + 1))
    return StencilSet(offsets=offsets, simplexes=simplexes)


def hopf_lax_update(stencil: StencilSet, metric, u_values):
    """Candidate distance at a node from one Hopf-Lax evaluation.

    Parameters
    ----------
    stencil : StencilSet
    metric : SymTensor2 or ndarray
        Metric tensor at the node (dense matrix for lifted stencils).
    u_values : array
        Current distance of each stencil vertex (``inf`` where unknown).

    Returns
    -------
    (candidate, ancestor_vertex)
        Minimum over all simplex boundaries of metric cost plus linearly
        interpolated distance, and the index (into ``stencil.offsets``) of
        the minimizing support vertex; ``(inf, -1)`` with no finite
        vertex.
    """
    if isinstance(metric, SymTensor2):
        m = metric.as_matrix()
    else:
        m = np.asarray(metric, dtype=np.float64)
    u = np.asarray(u_values, dtype=np.float64)
    offs = stencil.offsets.astype(np.float64)
    best = np.inf
    anc = -1
    for simplex in stencil.simplexes:
        ids = list(simplex)
        g = np.array([[offs[i] @ m @ offs[j] for j in ids] for i in ids])
        uu = u[ids]
        if len(ids) == 2:
            val, pick = _solver._segment_best(
                g[0, 0], g[0, 1], g[1, 1], uu[0], uu[1]
            )
        else:
            val, pick = _solver._triangle_best(
                g[0, 0], g[0, 1], g[0, 2], g[1, 1], g[1, 2], g[2, 2],
                uu[0], uu[1], uu[2],
            )
        if val < best:
            best = val
            anc = ids[pick]
    return best, anc


def _as_mask(mask, shape) -> np.ndarray:
    if mask is None:
        return np.ones(shape, dtype=bool)
    m = np.asarray(mask, dtype=bool)
    if m.shape != shape:
        raise InvalidInputError("mask shape does not match the grid")
    return m


def _check_point(p, w, h, name):
    x, y = int(p[0]), int(p[1])
    if not (0 <= x < w and 0 <= y < h):
        raise InvalidInputError(f"{name} ({x}, {y}) outside the {w}x{h} grid")
    return x, y


def fm_run_static(
    metric: TensorField,
    sources,
    stops=None,
    mask=None,
) -> FrontState:
    """Static-metric fast marching on the 2D grid.

    Halts once every stop point is accepted (or the queue empties when no
    stops are given); the distance field then matches the discrete
    geodesic distance of the metric.

    Raises
    ------
    UnreachableTargetError
        If a stop node can never be accepted (masked off / disconnected).
    """
    h, w = metric.shape
    allowed = _as_mask(mask, (h, w))
    src = np.array(
        [y * w + x for x, y in (_check_point(p, w, h, "source") for p in sources)],
        dtype=np.int64,
    )
    stop_list = [] if stops is None else list(stops)
    stp = np.array(
        [y * w + x for x, y in (_check_point(p, w, h, "stop") for p in stop_list)],
        dtype=np.int64,
    )
    tens = np.ascontiguousarray(metric.values.reshape(-1, 3))
    u, v, anc, order, n_acc, status = _solver.fm_static_2d(
        tens, w, h, allowed.ravel(), src, stp
    )
    if status == 2:
        raise NumericError("stencil reduction failed: metric tensor not SPD")
    if status == 1:
        raise UnreachableTargetError("stop set not reachable from the sources")
    return FrontState(
        distance=u.reshape(h, w),
        labels=v.reshape(h, w),
        ancestor=anc,
        order=order[:n_acc].copy(),
        sources=[tuple(p) for p in sources],
    )


def fm_run_static_lifted(
    mscale: MscaleField,
    source,
    stop=None,
    mask: RegionMask | np.ndarray | None = None,
) -> FrontState:
    """Static fast marching on the radius-lifted grid.

    ``source``/``stop`` are ``(x, y, r_index)`` triples; the optional
    spatial mask is broadcast over the radius axis and masked nodes are
    never accepted.
    """
    nr, h, w = mscale.shape
    spatial_mask = mask.mask if isinstance(mask, RegionMask) else mask
    allowed2 = _as_mask(spatial_mask, (h, w))
    allowed = np.broadcast_to(allowed2, (nr, h, w)).reshape(-1)

    def lifted_index(p, name):
        x, y = _check_point(p, w, h, name)
        r = int(p[2])
        if not 0 <= r < nr:
            raise InvalidInputError(f"{name} radius index {r} outside [0, {nr})")
        return (r * h + y) * w + x

    src = np.array([lifted_index(source, "source")], dtype=np.int64)
    stp = (
        np.empty(0, dtype=np.int64)
        if stop is None
        else np.array([lifted_index(stop, "stop")], dtype=np.int64)
    )
    spatial = np.ascontiguousarray(mscale.spatial.reshape(-1, 3))
    radial = np.ascontiguousarray(mscale.radial.reshape(-1))
    u, v, anc, order, n_acc, status = _solver.fm_static_3d(
        spatial, radial, w, h, nr, np.ascontiguousarray(allowed), src, stp
    )
    if status == 2:
        raise NumericError("stencil reduction failed: spatial block not SPD")
    if status == 1:
        raise UnreachableTargetError(
            "lifted stop not reachable inside the constrained region"
        )
    return FrontState(
        distance=u.reshape(nr, h, w),
        labels=v.reshape(nr, h, w),
        ancestor=anc,
        order=order[:n_acc].copy(),
        sources=[tuple(source)],
    )


def _seed_orientation(enhanced: OrientationVolume, peaks: OrientationPeakSet, p, name):
    x, y = int(p[0]), int(p[1])
    if not peaks.mask[y, x].any():
        raise InvalidSeedError(
            f"{name} ({x}, {y}) has no orientation peak; "
            "place it on a detectable structure"
        )
    return int(np.argmax(enhanced.values[y, x]))


def _dynamic_inputs(t_base: TensorField, enhanced: OrientationVolume,
                    peaks: OrientationPeakSet):
    h, w = t_base.shape
    n = enhanced.n_theta
    tb = np.ascontiguousarray(t_base.values.reshape(-1, 3))
    psi2 = np.ascontiguousarray(enhanced.values.reshape(-1, n))
    pk2 = np.ascontiguousarray(peaks.mask.reshape(-1, n))
    gx, gy = unit_vectors(n)
    return h, w, n, tb, psi2, pk2, gx, gy


def _dynamic_state(mu, fb, tcoh, t_base, n_theta, params, shape):
    h, w = shape
    return DynamicMetricState(
        mu_bin=mu.reshape(h, w).copy(),
        tensor=tcoh.reshape(h, w, 3).copy(),
        fallback=fb.reshape(h, w).astype(bool),
        t_base=t_base,
        n_theta=n_theta,
        params=dict(params),
    )


def fm_run_dynamic(
    t_base: TensorField,
    enhanced: OrientationVolume,
    peaks: OrientationPeakSet,
    s,
    q,
    chi1: int = 1,
    chi2: int = 12,
    lam: float = 20.0,
    xi_aniso: float = 10.0,
) -> tuple[FrontState, DynamicMetricState]:
    """Single-front propagation with on-the-fly metric assembly.

    Each iteration accepts the smallest Front node, backtracks its
    discrete ancestor chain to the two reference points (``chi1`` and
    ``chi2`` links, stopping early at the source), and for every
    non-Accepted neighbor re-selects the feature orientation against the
    near reference, re-prices the coherence penalty against the far one,
    reassembles the tensor, and keeps the smaller of the stored and fresh
    Hopf-Lax values.  Halts when ``q`` is accepted.
    """
    h, w, n, tb, psi2, pk2, gx, gy = _dynamic_inputs(t_base, enhanced, peaks)
    sx, sy = _check_point(s, w, h, "source")
    qx, qy = _check_point(q, w, h, "target")
    if (sx, sy) == (qx, qy):
        raise InvalidInputError("source and target coincide")
    if chi1 > chi2 or chi1 < 0:
        raise InvalidInputError("need 0 <= chi1 <= chi2")
    mu_s = _seed_orientation(enhanced, peaks, (sx, sy), "source")
    u, v, anc, mu, fb, tcoh, order, n_acc, status = _solver.dyn_run(
        w, h, tb, psi2, pk2, gx, gy, chi1, chi2, lam, xi_aniso,
        sy * w + sx, mu_s, qy * w + qx,
    )
    if status != 0:
        raise UnreachableTargetError("target never accepted by the front")
    front = FrontState(
        distance=u.reshape(h, w),
        labels=v.reshape(h, w),
        ancestor=anc,
        order=order[:n_acc].copy(),
        sources=[(sx, sy)],
    )
    params = {"chi1": chi1, "chi2": chi2, "lam": lam, "xi_aniso": xi_aniso}
    return front, _dynamic_state(mu, fb, tcoh, t_base, n, params, (h, w))


def partial_fronts_run(
    t_base: TensorField,
    enhanced: OrientationVolume,
    peaks: OrientationPeakSet,
    s,
    q,
    chi1: int = 1,
    chi2: int = 12,
    lam: float = 20.0,
    xi_aniso: float = 10.0,
):
    """Two dynamic fronts from both endpoints meeting at a saddle.

    The instances advance in lockstep, always popping the globally
    smallest Front value; the saddle is the first node accepted by one
    instance that the other had already accepted, and both halt there.

    Returns ``(saddle_point, front_s, front_q, dyn_s, dyn_q)``.
    """
    h, w, n, tb, psi2, pk2, gx, gy = _dynamic_inputs(t_base, enhanced, peaks)
    sx, sy = _check_point(s, w, h, "source")
    qx, qy = _check_point(q, w, h, "target")
    if (sx, sy) == (qx, qy):
        raise InvalidInputError("source and target coincide")
    if chi1 > chi2 or chi1 < 0:
        raise InvalidInputError("need 0 <= chi1 <= chi2")
    mu_s = _seed_orientation(enhanced, peaks, (sx, sy), "source")
    mu_q = _seed_orientation(enhanced, peaks, (qx, qy), "target")
    saddle, st_s, st_q = _solver.dyn_run_partial(
        w, h, tb, psi2, pk2, gx, gy, chi1, chi2, lam, xi_aniso,
        sy * w + sx, mu_s, qy * w + qx, mu_q,
    )
    if saddle < 0:
        raise UnreachableTargetError("fronts exhausted without meeting")
    params = {"chi1": chi1, "chi2": chi2, "lam": lam, "xi_aniso": xi_aniso}

    def unpack(state, origin):
        (u, v, anc, mu, fb, tcoh, order, _st, _sm,
         _rh, _pn, _pl, _stp, _hk, _hn, counters) = state
        front = FrontState(
            distance=u.reshape(h, w),
            labels=v.reshape(h, w),
            ancestor=anc,
            order=order[: counters[1]].copy(),
            sources=[origin],
        )
        dyn = _dynamic_state(mu, fb, tcoh, t_base, n, params, (h, w))
        return front, dyn

    front_s, dyn_s = unpack(st_s, (sx, sy))
    front_q, dyn_q = unpack(st_q, (qx, qy))
    saddle_pt = (saddle % w, saddle // w)
    return saddle_pt, front_s, front_q, dyn_s, dyn_q


_COLORMAP = np.array(
    [(0.267, 0.005, 0.329), (0.283, 0.141, 0.458), (0.254, 0.265, 0.530),
     (0.207, 0.372, 0.553), (0.164, 0.471, 0.558), (0.128, 0.567, 0.551),
     (0.135, 0.659, 0.518), (0.267, 0.749, 0.441), (0.478, 0.821, 0.318),
     (0.741, 0.873, 0.150), (0.993, 0.906, 0.144)]
)


def dump_distance_map(front: FrontState, png_path=None, raw_path=None) -> None:
    """Export a 2D distance field: raw little-endian f32 and/or color PNG.

    Unreached (infinite) cells render black in the PNG and stay ``inf`` in
    the raw dump.
    """
    if front.distance.ndim != 2:
        raise InvalidInputError("distance dump expects a 2D front")
    u = front.distance
    if raw_path is not None:
        u.astype("<f4").tofile(raw_path)
    if png_path is not None:
        finite = np.isfinite(u)
        hi = float(u[finite].max()) if finite.any() else 1.0
        t = np.clip(np.where(finite, u / max(hi, 1e-30), 0.0), 0.0, 1.0)
        idx = t * (len(_COLORMAP) - 1)
        lo = np.floor(idx).astype(int)
        hi_i = np.minimum(lo + 1, len(_COLORMAP) - 1)
        frac = (idx - lo)[..., None]
        rgb = _COLORMAP[lo] * (1 - frac) + _COLORMAP[hi_i] * frac
        rgb[~finite] = 0.0
        from PIL import Image

        Image.fromarray((rgb * 255 + 0.5).astype(np.uint8)).save(png_path)

