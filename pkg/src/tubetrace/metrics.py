"""Riemannian metric tensors for the propagation engines.

Three cost constructions live here: the static radius-lifted tensor field
(spatial anisotropic block plus radial weight, calibrated to a prescribed
anisotropy ratio), the dynamic coherence tensor assembled per node during
front propagation (coherence penalty times base-plus-transverse tensor),
and the region-constrained cost that walls off everything outside a
tubular neighborhood of a prior curve.  Control-set ellipses visualize the
local anisotropy of any of them.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from ._solver import select_orientation
from .errors import (
    ConfigurationError,
    DegenerateFeatureError,
    InvalidInputError,
)
from .grid import SymTensor2, eigendecompose_sym2, is_spd
from .oof import OofVolume
from .orientation import OrientationPeakSet, OrientationVolume, unit_vectors

__all__ = [
    "MscaleField",
    "RegionMask",
    "assemble_T_coh",
    "build_mscale",
    "build_region_mask",
    "coherence_penalty",
    "control_set_csv",
    "control_set_ellipse",
    "region_constrained_cost",
    "select_feature_vector",
]

UNREACHABLE = np.inf


@dataclass
class MscaleField:
    """Radius-lifted block-diagonal tensor field.

    ``spatial`` holds the 2x2 anisotropic block per ``(r, y, x)`` and
    ``radial`` the positive scalar weighting motion along the radius axis.
    ``alpha`` is the calibrated (negative) exponent so cost is lowest
    along the tube direction and the realized anisotropy ratio equals
    ``c_ratio``.
    """

    radii: np.ndarray
    spatial: np.ndarray  # (n_r, H, W, 3)
    radial: np.ndarray   # (n_r, H, W)
    alpha: float
    beta_scale: float
    c_ratio: float

    @property
    def shape(self):
        return self.radial.shape


@dataclass
class RegionMask:
    """Boolean in-region flag per pixel with its construction provenance."""

    mask: np.ndarray  # (H, W) bool
    dilation_radius: float
    prior: np.ndarray = field(repr=False, default=None)  # (n, 2) polyline


def build_mscale(
    vol: OofVolume, c_ratio: float = 10.0, beta_scale: float = 1.0
) -> MscaleField:
    """Anisotropic radius-lifted tensors from (rescaled) filter responses.

    The spatial block at ``(x, r)`` is
    ``exp(alpha*rho2) q q^T + exp(alpha*rho1) q_perp q_perp^T`` with ``q``
    the tube direction, and the radial weight is
    ``beta_scale * exp(alpha*(rho1+rho2)/2)``.  ``alpha`` is negative and
    sized so the largest per-pixel anisotropy ratio
    ``exp(|alpha|*(rho2-rho1)/2)`` equals ``c_ratio``.
    """
    if c_ratio <= 1.0:
        raise ConfigurationError("c_ratio must exceed 1")
    if beta_scale <= 0.0:
        raise ConfigurationError("beta_scale must be positive")
    spread = float(np.max(vol.rho2 - vol.rho1))
    if spread <= 0.0:
        raise DegenerateFeatureError("feature volume has no eigenvalue spread")
    alpha = -2.0 * math.log(c_ratio) / spread

    e_hi = np.exp(alpha * vol.rho2)
    e_lo = np.exp(alpha * vol.rho1)
    qx, qy = vol.q1x, vol.q1y
    px, py = -qy, qx
    spatial = np.stack(
        [
            e_hi * qx * qx + e_lo * px * px,
            e_hi * qx * qy + e_lo * px * py,
            e_hi * qy * qy + e_lo * py * py,
        ],
        axis=-1,
    )
    radial = beta_scale * np.exp(0.5 * alpha * (vol.rho1 + vol.rho2))
    return MscaleField(
        radii=vol.radii.copy(),
        spatial=spatial,
        radial=radial,
        alpha=alpha,
        beta_scale=beta_scale,
        c_ratio=c_ratio,
    )


def coherence_penalty(
    enhanced: OrientationVolume,
    x: int,
    y: int,
    mu_x: int,
    bx: int,
    by: int,
    mu_b: int,
    lam: float = 20.0,
) -> float:
    """Appearance coherence penalty between a node and its reference.

    ``exp(lam * |Psi(x, mu_x) - Psi(b, mu_b)|) >= 1``; equal enhanced
    scores at the two selected orientations give exactly 1.
    """
    if lam <= 0:
        raise ConfigurationError("lam must be positive")
    v = enhanced.values
    return float(np.exp(lam * abs(v[y, x, mu_x] - v[by, bx, mu_b])))


def select_feature_vector(
    peaks: OrientationPeakSet | np.ndarray,
    enhanced: OrientationVolume | np.ndarray,
    x: int,
    y: int,
    mu_a: int,
    score_a: float,
):
    """Resolve the feature orientation at a pixel from its reference.

    Among the locally maximal bins at ``(x, y)``, keep those maximizing
    the absolute dot product with the reference direction ``g(mu_a)``,
    then pick the one whose enhanced score is closest to ``score_a``
    (ties: smallest bin).  With no candidates the reference orientation is
    propagated and the ``fallback`` flag is set.

    Returns ``(mu_bin, p_vector, fallback)``.
    """
    mask = peaks.mask if isinstance(peaks, OrientationPeakSet) else np.asarray(peaks)
    values = (
        enhanced.values if isinstance(enhanced, OrientationVolume) else np.asarray(enhanced)
    )
    row_mask = np.ascontiguousarray(mask[y, x])
    row_psi = np.ascontiguousarray(values[y, x])
    n = row_mask.shape[0]
    k, found = select_orientation(row_mask, row_psi, mu_a, float(score_a), n)
    if not found:
        k = mu_a
    gx, gy = unit_vectors(n)
    return int(k), np.array([gx[k], gy[k]]), not found


def maximal_alignment_bins(candidate_bins, mu_a: int, n_theta: int) -> list[int]:
    """Candidate bins maximizing ``|<g(bin), g(mu_a)>|`` (exact integer rank)."""
    half = n_theta // 2
    best = half
    out: list[int] = []
    for k in candidate_bins:
        d = (int(k) - int(mu_a)) % n_theta
        m = d % half
        rank = min(m, half - m)
        if rank < best:
            best = rank
            out = [int(k)]
        elif rank == best:
            out.append(int(k))
    return out


def assemble_T_coh(
    t_base: SymTensor2,
    p_vector,
    phi_coh: float,
    xi_aniso: float = 10.0,
) -> SymTensor2:
    """Dynamic tensor ``phi * (T_base + xi * p_perp p_perp^T)``."""
    if phi_coh < 1.0:
        raise InvalidInputError("phi_coh must be >= 1")
    px, py = -float(p_vector[1]), float(p_vector[0])
    return SymTensor2(
        phi_coh * (t_base.a11 + xi_aniso * px * px),
        phi_coh * (t_base.a12 + xi_aniso * px * py),
        phi_coh * (t_base.a22 + xi_aniso * py * py),
    )


def build_region_mask(
    prior: np.ndarray, shape, dilation_radius: float
) -> RegionMask:
    """Tubular neighborhood of a prior curve by morphological dilation.

    The curve is rasterized with 4-connected supercover traversal, then
    dilated with a disk structuring element of the given radius.
    """
    from .pipeline import rasterize_path  # local import: avoids a cycle

    h, w = shape
    base = np.zeros((h, w), dtype=bool)
    for cx, cy in rasterize_path(np.asarray(prior)):
        if 0 <= cx < w and 0 <= cy < h:
            base[cy, cx] = True
    if not base.any():
        raise InvalidInputError("prior curve does not intersect the grid")
    rad = int(math.ceil(dilation_radius))
    yy, xx = np.mgrid[-rad : rad + 1, -rad : rad + 1]
    disk = xx * xx + yy * yy <= dilation_radius * dilation_radius
    mask = ndimage.binary_dilation(base, structure=disk)
    return RegionMask(mask=mask, dilation_radius=dilation_radius, prior=np.asarray(prior))


def region_constrained_cost(
    mscale: MscaleField, mask: RegionMask, point, u
) -> float:
    """Cost of moving along ``u`` at lifted point ``(x, y, r_index)``.

    Inside the region this is the block-tensor norm of ``u``; outside it
    is the unreachable sentinel (``inf``) that the solver treats as a
    never-Accepted wall.
    """
    x, y, r = int(point[0]), int(point[1]), int(point[2])
    if not mask.mask[y, x]:
        return UNREACHABLE
    a11, a12, a22 = mscale.spatial[r, y, x]
    p = mscale.radial[r, y, x]
    ux, uy, ur = float(u[0]), float(u[1]), float(u[2])
    q = a11 * ux * ux + 2.0 * a12 * ux * uy + a22 * uy * uy + p * ur * ur
    return math.sqrt(q)


def control_set_ellipse(t: SymTensor2, n_samples: int = 64) -> np.ndarray:
    """Boundary polyline of the unit ball ``{u : <u, t u> = 1}``.

    The ellipse has semi-axis ``1/sqrt(eigenvalue)`` along each
    eigenvector; every returned point satisfies the quadric exactly.
    """
    if not is_spd(t):
        raise InvalidInputError("control set requires an SPD tensor")
    rho1, rho2, q1, q2 = eigendecompose_sym2(t)
    angles = 2.0 * np.pi * np.arange(n_samples) / n_samples
    c, s = np.cos(angles), np.sin(angles)
    axis1 = q1.components / math.sqrt(rho1)
    axis2 = q2.components / math.sqrt(rho2)
    pts = c[:, None] * axis1[None, :] + s[:, None] * axis2[None, :]
    # exact projection onto the quadric kills residual rounding
    quad = (
        t.a11 * pts[:, 0] ** 2
        + 2.0 * t.a12 * pts[:, 0] * pts[:, 1]
        + t.a22 * pts[:, 1] ** 2
    )
    return pts / np.sqrt(quad)[:, None]


def control_set_csv(tensors, path, n_samples: int = 64) -> None:
    """Export control-set ellipses as CSV polylines.

    ``tensors`` is an iterable of ``(label, SymTensor2, center)``; rows are
    ``label, sample_index, x, y`` with the ellipse translated to its
    center.
    """
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label", "index", "x", "y"])
        for label, tensor, center in tensors:
            pts = control_set_ellipse(tensor, n_samples)
            for i, (px, py) in enumerate(pts):
                writer.writerow(
                    [label, i, f"{px + center[0]:.8g}", f"{py + center[1]:.8g}"]
                )
