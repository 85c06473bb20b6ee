"""Multi-scale optimally-oriented-flux filtering.

For each radius ``r`` the filter response at a pixel is the symmetric 2x2
matrix ``(1/r) * (hessian(G_sigma) * disk_r * I)`` where ``disk_r`` is the
indicator of a centred circle of radius ``r`` and ``*`` is convolution.
Responses are computed in the Fourier domain on a reflection-padded image;
eigen features are cached with ``rho1 <= rho2``.  With dark structures on a
bright background, ``rho2`` is large inside tubes and the eigenvector of
``rho1`` points along the tube.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import fft as sfft
from scipy.special import j1

from .errors import ConfigurationError
from .grid import ScalarImage, eigendecompose_sym2_field, save_image

__all__ = [
    "OofVolume",
    "OptimalScaleMap",
    "RadiusSpace",
    "disk_coverage",
    "disk_spectrum",
    "dump_scale_map",
    "normalize_responses",
    "oof_response",
    "optimal_scale_features",
]


@dataclass(frozen=True)
class RadiusSpace:
    """Strictly increasing radii (in cells) to probe for tubular structures."""

    r_min: float = 1.0
    r_max: float = 8.0
    n_r: int = 8

    def __post_init__(self):
        if not (0 < self.r_min < self.r_max):
            raise ConfigurationError("need 0 < r_min < r_max")
        if self.n_r < 2:
            raise ConfigurationError("need at least two radii")

    @property
    def radii(self) -> np.ndarray:
        return np.linspace(self.r_min, self.r_max, self.n_r)


@dataclass
class OofVolume:
    """Filter responses and cached eigen features per ``(x, r)``.

    Attributes
    ----------
    responses : ndarray, shape (n_r, H, W, 3)
        Symmetric tensor components ``(a11, a12, a22)``.
    rho1, rho2 : ndarray, shape (n_r, H, W)
        Eigenvalues with ``rho1 <= rho2`` everywhere.
    q1x, q1y : ndarray, shape (n_r, H, W)
        Unit eigenvector of ``rho1`` (the tube direction inside vessels).
    scale_applied : float
        Global factor the raw responses were divided by (1.0 = raw).
    """

    radii: np.ndarray
    sigma: float
    responses: np.ndarray
    rho1: np.ndarray = field(init=False)
    rho2: np.ndarray = field(init=False)
    q1x: np.ndarray = field(init=False)
    q1y: np.ndarray = field(init=False)
    scale_applied: float = 1.0

    def __post_init__(self):
        r = self.responses
        self.rho1, self.rho2, self.q1x, self.q1y = eigendecompose_sym2_field(
            r[..., 0], r[..., 1], r[..., 2]
        )

    @property
    def shape(self):
        return self.responses.shape[1:3]


@dataclass
class OptimalScaleMap:
    """Per-pixel winning radius and the features at that radius."""

    radii: np.ndarray
    zeta: np.ndarray          # (H, W) radius value
    zeta_index: np.ndarray    # (H, W) index into radii
    rho1: np.ndarray
    rho2: np.ndarray
    q1x: np.ndarray
    q1y: np.ndarray
    tensor: np.ndarray        # (H, W, 3) OOF response at the winning radius


def disk_spectrum(freq_radius: np.ndarray, r: float) -> np.ndarray:
    """Closed-form Fourier transform of the radius-``r`` disk indicator.

    ``freq_radius`` holds angular frequency magnitudes; the transform is
    ``2*pi*r*J1(rho*r)/rho`` with value ``pi*r^2`` at ``rho=0``.
    """
    rho = np.asarray(freq_radius, dtype=np.float64)
    out = np.empty_like(rho)
    nz = rho > 0
    out[nz] = 2.0 * np.pi * r * j1(rho[nz] * r) / rho[nz]
    out[~nz] = np.pi * r * r
    return out


def disk_coverage(r: float, subsamples: int = 16) -> np.ndarray:
    """Spatial rasterization of the disk with area-weighted boundary cells.

    Returns an odd-sized patch whose entries are the fraction of each cell
    covered by the disk (supersampled on interior-boundary cells only).
    """
    half = int(np.ceil(r)) + 1
    n = 2 * half + 1
    yy, xx = np.mgrid[-half : half + 1, -half : half + 1].astype(np.float64)
    dist = np.hypot(xx, yy)
    cov = np.zeros((n, n))
    cov[dist <= r - 0.71] = 1.0
    border = (dist > r - 0.71) & (dist < r + 0.71)
    if np.any(border):
        offs = (np.arange(subsamples) + 0.5) / subsamples - 0.5
        ox, oy = np.meshgrid(offs, offs)
        bx = xx[border][:, None] + ox.ravel()[None, :]
        by = yy[border][:, None] + oy.ravel()[None, :]
        cov[border] = np.mean(bx * bx + by * by < r * r, axis=1)
    return cov


def _hessian_gaussian_spectrum(wx, wy, sigma):
    """Fourier multipliers of the three Gaussian-Hessian components."""
    g = np.exp(-0.5 * sigma * sigma * (wx * wx + wy * wy))
    return (-wx * wx * g, -wx * wy * g, -wy * wy * g)


def oof_response(
    image: ScalarImage,
    radii: RadiusSpace,
    sigma: float = 1.0,
    disk: str = "analytic",
) -> OofVolume:
    """Multi-scale oriented-flux responses of an image.

    Parameters
    ----------
    image : ScalarImage
    radii : RadiusSpace
        Must fit inside half the smaller image extent.
    sigma : float
        Std of the Gaussian whose Hessian drives the filter (>= 0.5 cells).
    disk : {"analytic", "raster"}
        Frequency representation of the circle indicator: closed-form disk
        transform, or the DFT of an area-weighted spatial rasterization.

    Returns
    -------
    OofVolume
        Raw (unscaled) responses with cached eigen features.
    """
    if sigma < 0.5:
        raise ConfigurationError("sigma must be at least 0.5 cells")
    if disk not in ("analytic", "raster"):
        raise ConfigurationError(f"unknown disk representation {disk!r}")
    h, w = image.values.shape
    if radii.r_max > 0.5 * min(h, w):
        raise ConfigurationError("r_max exceeds half the image extent")

    pad = int(np.ceil(radii.r_max + 4.0 * sigma))
    padded = np.pad(image.values, pad, mode="symmetric")
    ph = sfft.next_fast_len(padded.shape[0], real=True)
    pw = sfft.next_fast_len(padded.shape[1], real=True)
    frame = np.zeros((ph, pw))
    frame[: padded.shape[0], : padded.shape[1]] = padded
    spec = sfft.rfft2(frame, workers=-1)

    fy = 2.0 * np.pi * np.fft.fftfreq(ph)[:, None]
    fx = 2.0 * np.pi * np.fft.rfftfreq(pw)[None, :]
    rho = np.hypot(fx, fy)
    hxx, hxy, hyy = _hessian_gaussian_spectrum(fx, fy, sigma)

    rs = radii.radii
    out = np.empty((len(rs), h, w, 3))
    for k, r in enumerate(rs):
        if disk == "analytic":
            dsp = disk_spectrum(rho, r)
        else:
            cov = disk_coverage(r)
            patch = np.zeros((ph, pw))
            c = cov.shape[0] // 2
            patch[: cov.shape[0], : cov.shape[1]] = cov
            patch = np.roll(patch, (-c, -c), axis=(0, 1))
            dsp = sfft.rfft2(patch, workers=-1)
        base = spec * dsp / r
        for ci, comp in enumerate((hxx, hxy, hyy)):
            full = sfft.irfft2(base * comp, s=(ph, pw), workers=-1)
            out[k, :, :, ci] = full[pad : pad + h, pad : pad + w]
    return OofVolume(radii=rs.copy(), sigma=sigma, responses=out)


def normalize_responses(vol: OofVolume) -> OofVolume:
    """Rescale the whole volume by ``max |rho2|`` for use in exponentials.

    The applied factor is recorded in ``scale_applied``; a featureless
    volume (all-zero ``rho2``) is returned unchanged.
    """
    scale = float(np.max(np.abs(vol.rho2)))
    if scale <= 1e-12:
        return vol
    out = OofVolume(
        radii=vol.radii,
        sigma=vol.sigma,
        responses=vol.responses / scale,
        scale_applied=vol.scale_applied * scale,
    )
    return out


def optimal_scale_features(vol: OofVolume) -> OptimalScaleMap:
    """Select, per pixel, the radius maximizing ``rho2`` (ties: smaller r)."""
    idx = np.argmax(vol.rho2, axis=0)
    jj, ii = np.meshgrid(
        np.arange(vol.rho2.shape[1]), np.arange(vol.rho2.shape[2]), indexing="ij"
    )
    return OptimalScaleMap(
        radii=vol.radii,
        zeta=vol.radii[idx],
        zeta_index=idx,
        rho1=vol.rho1[idx, jj, ii],
        rho2=vol.rho2[idx, jj, ii],
        q1x=vol.q1x[idx, jj, ii],
        q1y=vol.q1y[idx, jj, ii],
        tensor=vol.responses[idx, jj, ii, :],
    )


def dump_scale_map(features: OptimalScaleMap, png_path=None, raw_path=None):
    """Debug export of the optimal-scale ``rho2`` map.

    Writes a PNG heat map (min-max normalized) and/or the raw values as
    row-major little-endian 32-bit floats.
    """
    data = features.rho2
    if png_path is not None:
        lo, hi = float(data.min()), float(data.max())
        rng = hi - lo if hi > lo else 1.0
        save_image((data - lo) / rng, png_path)
    if raw_path is not None:
        data.astype("<f4").tofile(raw_path)

