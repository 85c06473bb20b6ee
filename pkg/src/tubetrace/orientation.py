"""Orientation scores and the oriented Gaussian kernel machinery.

The raw score ``psi(x, theta)`` probes the oriented-flux tensor at the
per-pixel optimal scale along every direction of a discretized circle.
Crossings corrupt it, so a coherence-enhanced score ``Psi`` is built by
normalized convolution with asymmetric oriented Gaussian kernels: a thin
anisotropic Gaussian ridge cut to a half-window by the sign of the
directional derivative of an isotropic Gaussian.  Local maxima of
``Psi(x, .)`` above its circular mean give the candidate tube directions
per pixel, from which the orientation tensor ``T_os`` and the data-driven
cost tensor ``T_base`` are assembled.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy import fft as sfft
from scipy import ndimage

from .errors import ConfigurationError, InvalidInputError
from .grid import TensorField
from .oof import OptimalScaleMap

__all__ = [
    "KernelBank",
    "OrientationPeakSet",
    "OrientationVolume",
    "build_T_base",
    "build_T_os",
    "build_kernel_bank",
    "coherence_enhance",
    "local_maxima_set",
    "orientation_score_psi",
    "psi_polar_csv",
    "unit_vectors",
]


def unit_vectors(n_theta: int):
    """Unit vectors of the ``n_theta`` circle bins ``theta_k = 2*pi*k/n``.

    The second half mirrors the first exactly (``g[k + n/2] == -g[k]``
    bitwise) so pi-symmetry identities hold without rounding slack.
    """
    if n_theta < 8 or n_theta % 2 != 0:
        raise ConfigurationError("n_theta must be even and at least 8")
    half = n_theta // 2
    ang = 2.0 * np.pi * np.arange(half) / n_theta
    gx = np.concatenate([np.cos(ang), -np.cos(ang)])
    gy = np.concatenate([np.sin(ang), -np.sin(ang)])
    return gx, gy


@dataclass
class KernelBank:
    """Oriented Gaussian kernels on a ``(2w+1) x (2w+1)`` window.

    ``q[k]`` is the symmetric ridge kernel for bin ``k``; ``h[k]`` the
    asymmetric half-window kernel (``h = cutoff * q``).
    """

    sigma1: float
    sigma2: float
    w: int
    n_theta: int
    eps1: float
    q: np.ndarray  # (n_theta, 2w+1, 2w+1)
    h: np.ndarray  # (n_theta, 2w+1, 2w+1)

    @property
    def angles(self) -> np.ndarray:
        return 2.0 * np.pi * np.arange(self.n_theta) / self.n_theta


@dataclass
class OrientationVolume:
    """Scores over ``(x, theta)``; ``enhanced`` distinguishes Psi from psi."""

    values: np.ndarray  # (H, W, n_theta)
    enhanced: bool

    @property
    def n_theta(self) -> int:
        return self.values.shape[2]

    @property
    def angles(self) -> np.ndarray:
        n = self.n_theta
        return 2.0 * np.pi * np.arange(n) / n


@dataclass
class OrientationPeakSet:
    """Locally maximal orientation bins per pixel (indicator over bins)."""

    mask: np.ndarray  # (H, W, n_theta) bool
    window_bins: int

    def bins_at(self, x: int, y: int) -> np.ndarray:
        return np.nonzero(self.mask[y, x])[0]

    @property
    def n_theta(self) -> int:
        return self.mask.shape[2]


def build_kernel_bank(
    sigma1: float = 300.0,
    sigma2: float = 1.0,
    w: int = 11,
    n_theta: int = 64,
    eps1: float = 1e-8,
) -> KernelBank:
    """Build the oriented/asymmetric Gaussian kernel bank.

    The ridge kernel for orientation ``theta`` is
    ``q(x) = exp(-<g,x>^2/(2*sigma1^2) - <g_perp,x>^2/(2*sigma2^2))
    / (2*pi*sigma1*sigma2)``.  The asymmetric kernel keeps the half-window
    where ``<grad G_sigma1(x), g(theta)> >= eps1``, using the analytic
    gradient ``grad G(x) = -x * G(x) / sigma1^2`` of the unnormalized
    Gaussian ``G(x) = exp(-|x|^2 / (2*sigma1^2))``.
    """
    if not sigma1 > sigma2 > 0:
        raise ConfigurationError("need sigma1 > sigma2 > 0")
    if w < 1:
        raise ConfigurationError("window half-size w must be >= 1")
    gx, gy = unit_vectors(n_theta)
    coords = np.arange(-w, w + 1, dtype=np.float64)
    xx, yy = np.meshgrid(coords, coords)
    g_iso = np.exp(-(xx * xx + yy * yy) / (2.0 * sigma1 * sigma1))
    norm = 1.0 / (2.0 * np.pi * sigma1 * sigma2)
    q = np.empty((n_theta, 2 * w + 1, 2 * w + 1))
    h = np.empty_like(q)
    for k in range(n_theta):
        t1 = gx[k] * xx + gy[k] * yy
        t2 = -gy[k] * xx + gx[k] * yy
        q[k] = norm * np.exp(
            -t1 * t1 / (2.0 * sigma1 * sigma1) - t2 * t2 / (2.0 * sigma2 * sigma2)
        )
        grad_dot = -t1 * g_iso / (sigma1 * sigma1)
        h[k] = (grad_dot >= eps1) * q[k]
    return KernelBank(sigma1, sigma2, w, n_theta, eps1, q, h)


def orientation_score_psi(features: OptimalScaleMap, n_theta: int = 64) -> OrientationVolume:
    """Raw orientation score from optimal-scale oriented-flux tensors.

    ``psi(x, theta) = max(<g_perp, T(x) g_perp>, 0)`` with ``T`` the filter
    response at the optimal scale of ``x``; pi-periodic in ``theta``.
    """
    gx, gy = unit_vectors(n_theta)
    a11 = features.tensor[..., 0]
    a12 = features.tensor[..., 1]
    a22 = features.tensor[..., 2]
    h, w = a11.shape
    psi = np.empty((h, w, n_theta))
    for k in range(n_theta):
        px, py = -gy[k], gx[k]
        val = a11 * px * px + 2.0 * a12 * px * py + a22 * py * py
        psi[:, :, k] = np.maximum(val, 0.0)
    return OrientationVolume(values=psi, enhanced=False)


def coherence_enhance(
    raw: OrientationVolume,
    bank: KernelBank,
    engine: str = "fft",
) -> OrientationVolume:
    """Coherence-enhanced orientation score.

    For each fixed bin ``k`` the slice ``psi(., k) / max(psi)`` is convolved
    with the opposite-bin asymmetric kernel and normalized by its mass,
    with reflection boundary handling.  ``engine='direct'`` runs the same
    operation as an explicit sliding window (test oracle path).
    """
    if raw.enhanced:
        raise InvalidInputError("input volume is already enhanced")
    n = raw.n_theta
    if bank.n_theta != n:
        raise InvalidInputError("kernel bank and volume bin counts differ")
    psi_max = float(raw.values.max())
    if psi_max <= 0.0:
        return OrientationVolume(values=np.zeros_like(raw.values), enhanced=True)
    half = n // 2
    masses = bank.h.sum(axis=(1, 2))
    if np.any(masses <= 0.0):
        raise ConfigurationError(
            "asymmetric kernel has zero mass (eps1 too large for this window)"
        )
    norm = raw.values / psi_max
    out = np.empty_like(norm)
    if engine == "direct":
        for k in range(n):
            kern = bank.h[(k + half) % n]
            out[:, :, k] = ndimage.convolve(
                norm[:, :, k], kern, mode="reflect"
            ) / masses[(k + half) % n]
        return OrientationVolume(values=out, enhanced=True)
    if engine != "fft":
        raise ConfigurationError(f"unknown convolution engine {engine!r}")

    w = bank.w
    padded = np.pad(norm, ((w, w), (w, w), (0, 0)), mode="symmetric")
    # extra zero rows/cols up to an FFT-friendly size never reach the crop
    # (the kernel radius equals the symmetric pad width)
    ph = sfft.next_fast_len(padded.shape[0], real=True)
    pw = sfft.next_fast_len(padded.shape[1], real=True)
    stack = np.zeros((n, ph, pw))
    stack[:, : padded.shape[0], : padded.shape[1]] = np.moveaxis(padded, 2, 0)
    # Kernels embedded at the origin of the padded frame so the circular
    # convolution's central crop equals the sliding-window result exactly.
    kern_embed = np.zeros((n, ph, pw))
    size = 2 * w + 1
    for k in range(n):
        kern_embed[k, :size, :size] = bank.h[(k + half) % n]
    kern_embed = np.roll(kern_embed, (-w, -w), axis=(1, 2))
    spec = sfft.rfft2(stack, axes=(1, 2), workers=-1)
    kspec = sfft.rfft2(kern_embed, axes=(1, 2), workers=-1)
    conv = sfft.irfft2(spec * kspec, s=(ph, pw), axes=(1, 2), workers=-1)
    h_img, w_img = raw.values.shape[:2]
    cropped = conv[:, w : w + h_img, w : w + w_img]
    out = np.moveaxis(cropped, 0, 2) / masses[(np.arange(n) + half) % n]
    return OrientationVolume(values=np.ascontiguousarray(out), enhanced=True)


def local_maxima_set(enhanced: OrientationVolume, window_bins: int = 5) -> OrientationPeakSet:
    """Strict circular local maxima of ``Psi(x, .)`` above its mean.

    A bin qualifies when it strictly exceeds every other bin in the
    circular window of ``window_bins`` bins centred on it and exceeds the
    mean of ``Psi(x, .)`` over the circle.
    """
    if window_bins < 3 or window_bins % 2 == 0:
        raise ConfigurationError("window_bins must be odd and >= 3")
    v = enhanced.values
    mask = v > np.mean(v, axis=2, keepdims=True)
    for off in range(1, window_bins // 2 + 1):
        mask &= v > np.roll(v, off, axis=2)
        mask &= v > np.roll(v, -off, axis=2)
    return OrientationPeakSet(mask=mask, window_bins=window_bins)


def build_T_os(
    enhanced: OrientationVolume,
    peaks: OrientationPeakSet,
    xi_ident: float = 0.1,
    eps2: float = 1e-8,
) -> TensorField:
    """Orientation tensor: peak-weighted second moment of the directions.

    ``T_os = (sum_k c_k Psi_k g_k g_k^T dtheta) / max(eps2, sum_k c_k dtheta)
    + xi_ident * Id`` with bin sums scaled by ``dtheta = 2*pi/n``.
    """
    if xi_ident <= 0 or eps2 <= 0:
        raise ConfigurationError("xi_ident and eps2 must be positive")
    n = enhanced.n_theta
    gx, gy = unit_vectors(n)
    dtheta = 2.0 * np.pi / n
    c = peaks.mask.astype(np.float64)
    weighted = c * enhanced.values * dtheta
    num11 = np.tensordot(weighted, gx * gx, axes=([2], [0]))
    num12 = np.tensordot(weighted, gx * gy, axes=([2], [0]))
    num22 = np.tensordot(weighted, gy * gy, axes=([2], [0]))
    den = np.maximum(eps2, c.sum(axis=2) * dtheta)
    t = np.stack([num11 / den, num12 / den, num22 / den], axis=-1)
    t[..., 0] += xi_ident
    t[..., 2] += xi_ident
    return TensorField(t)


def build_T_base(
    raw: OrientationVolume,
    peaks: OrientationPeakSet,
    enhanced: OrientationVolume,
    alpha: float = 2.0,
    xi_ident: float = 0.1,
    eps2: float = 1e-8,
    isotropic: bool = False,
) -> TensorField:
    """Image-data cost tensor ``exp(-alpha * max_theta psi) * T_os^-1``.

    ``isotropic=True`` replaces ``T_os^-1`` with the identity.
    """
    if alpha <= 0:
        raise ConfigurationError("alpha must be positive")
    weight = np.exp(-alpha * raw.values.max(axis=2))
    if isotropic:
        h, w = weight.shape
        t = np.zeros((h, w, 3))
        t[..., 0] = weight
        t[..., 2] = weight
        return TensorField(t)
    tos = build_T_os(enhanced, peaks, xi_ident, eps2).values
    det = tos[..., 0] * tos[..., 2] - tos[..., 1] ** 2
    inv = np.stack(
        [tos[..., 2] / det, -tos[..., 1] / det, tos[..., 0] / det], axis=-1
    )
    return TensorField(inv * weight[..., None])


def psi_polar_csv(volume: OrientationVolume, x: int, y: int, path) -> None:
    """Dump ``(bin angle, score)`` rows for one pixel (polar-plot input)."""
    angles = volume.angles
    values = volume.values[y, x]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["angle_rad", "score"])
        for a, v in zip(angles, values):
            writer.writerow([f"{a:.10g}", f"{v:.10g}"])
