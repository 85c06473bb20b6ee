"""Grid geometry, 2x2 tensor algebra and interpolation.

Shared numeric substrate: scalar images on uniform pixel grids, symmetric
2x2 tensors (stored as ``(a11, a12, a22)`` triples), unit vectors on the
circle, closed-form eigendecomposition and bilinear sampling.

Conventions
-----------
Arrays are indexed ``[y, x]`` (row-major); points are ``(x, y)`` pairs in
cell coordinates with node ``(i, j)`` at position ``x=i, y=j``.  Grid
spacing is uniform and identical along both axes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .errors import DomainError, InvalidInputError

__all__ = [
    "ScalarImage",
    "SymTensor2",
    "TensorField",
    "UnitVector2",
    "eigendecompose_sym2",
    "eigendecompose_sym2_field",
    "is_spd",
    "load_image",
    "sample_bilinear",
    "save_image",
]


@dataclass(frozen=True)
class ScalarImage:
    """A 2D grid of scalar values with spacing metadata.

    Parameters
    ----------
    values : ndarray, shape (height, width)
        Finite scalar per cell.
    spacing : float
        Physical length per cell (both axes).
    """

    values: np.ndarray
    spacing: float = 1.0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", v)
        if v.ndim != 2 or v.shape[0] < 2 or v.shape[1] < 2:
            raise InvalidInputError("image must be at least 2x2")
        if not np.all(np.isfinite(v)):
            raise InvalidInputError("image values must be finite")
        if self.spacing <= 0:
            raise InvalidInputError("spacing must be positive")

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class SymTensor2:
    """Symmetric 2x2 matrix ``[[a11, a12], [a12, a22]]``."""

    a11: float
    a12: float
    a22: float

    def as_matrix(self) -> np.ndarray:
        return np.array([[self.a11, self.a12], [self.a12, self.a22]])

    def quadratic_form(self, u) -> float:
        """``<u, T u>`` for a length-2 vector ``u``."""
        return (
            self.a11 * u[0] * u[0]
            + 2.0 * self.a12 * u[0] * u[1]
            + self.a22 * u[1] * u[1]
        )


class TensorField:
    """Symmetric 2x2 tensor per cell, components stacked on the last axis.

    ``values`` has shape ``(height, width, 3)`` holding ``(a11, a12, a22)``.
    """

    def __init__(self, values: np.ndarray):
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 3 or values.shape[2] != 3:
            raise InvalidInputError("tensor field must have shape (H, W, 3)")
        self.values = values

    @property
    def shape(self):
        return self.values.shape[:2]

    def at(self, x: int, y: int) -> SymTensor2:
        a11, a12, a22 = self.values[y, x]
        return SymTensor2(a11, a12, a22)


@dataclass(frozen=True)
class UnitVector2:
    """Unit vector on the circle, addressed by its angle in ``[0, 2*pi)``."""

    angle: float
    components: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        a = float(self.angle) % (2.0 * math.pi)
        object.__setattr__(self, "angle", a)
        object.__setattr__(
            self, "components", np.array([math.cos(a), math.sin(a)])
        )

    @staticmethod
    def from_components(vx: float, vy: float) -> "UnitVector2":
        n = math.hypot(vx, vy)
        if n < 1e-300 or not math.isfinite(n):
            raise InvalidInputError("cannot normalize a zero/non-finite vector")
        return UnitVector2(math.atan2(vy, vx))

    def perp(self) -> "UnitVector2":
        return UnitVector2(self.angle + 0.5 * math.pi)


def eigendecompose_sym2(t: SymTensor2):
    """Closed-form eigendecomposition of a symmetric 2x2 tensor.

    Returns ``(rho1, rho2, q1, q2)`` with ``rho1 <= rho2``, ``q1`` the unit
    eigenvector of ``rho1`` and ``q2 = q1`` rotated by 90 degrees, so that
    ``rho1*q1 q1^T + rho2*q2 q2^T`` reconstructs ``t``.  In the degenerate
    ``rho1 == rho2`` case ``q1`` is the x-axis.
    """
    a, b, c = float(t.a11), float(t.a12), float(t.a22)
    if not (math.isfinite(a) and math.isfinite(b) and math.isfinite(c)):
        raise InvalidInputError("tensor entries must be finite")
    mean = 0.5 * (a + c)
    half_diff = 0.5 * (a - c)
    disc = math.hypot(half_diff, b)
    rho1 = mean - disc
    rho2 = mean + disc
    scale = abs(a) + abs(b) + abs(c)
    if disc <= 1e-14 * max(scale, 1e-300):
        q1 = UnitVector2(0.0)
    else:
        # Eigenvector of rho1: pick the better-conditioned formula.
        vx1, vy1 = b, rho1 - a
        vx2, vy2 = rho1 - c, b
        if vx1 * vx1 + vy1 * vy1 >= vx2 * vx2 + vy2 * vy2:
            q1 = UnitVector2.from_components(vx1, vy1)
        else:
            q1 = UnitVector2.from_components(vx2, vy2)
    return rho1, rho2, q1, q1.perp()


def eigendecompose_sym2_field(a11, a12, a22):
    """Vectorized closed-form eigen features of symmetric 2x2 tensors.

    Returns ``(rho1, rho2, q1x, q1y)`` arrays; ``q1`` is the unit
    eigenvector of the smaller eigenvalue (x-axis where degenerate).
    """
    a11 = np.asarray(a11, dtype=np.float64)
    a12 = np.asarray(a12, dtype=np.float64)
    a22 = np.asarray(a22, dtype=np.float64)
    mean = 0.5 * (a11 + a22)
    half_diff = 0.5 * (a11 - a22)
    disc = np.hypot(half_diff, a12)
    rho1 = mean - disc
    rho2 = mean + disc
    vx1, vy1 = a12, rho1 - a11
    vx2, vy2 = rho1 - a22, a12
    use1 = vx1 * vx1 + vy1 * vy1 >= vx2 * vx2 + vy2 * vy2
    vx = np.where(use1, vx1, vx2)
    vy = np.where(use1, vy1, vy2)
    norm = np.hypot(vx, vy)
    scale = np.abs(a11) + np.abs(a12) + np.abs(a22)
    degenerate = disc <= 1e-14 * np.maximum(scale, 1e-300)
    safe = np.where(norm > 0, norm, 1.0)
    q1x = np.where(degenerate, 1.0, vx / safe)
    q1y = np.where(degenerate, 0.0, vy / safe)
    return rho1, rho2, q1x, q1y


def is_spd(t: SymTensor2) -> bool:
    """SPD test via the closed-form eigenvalues (both strictly positive)."""
    rho1, _, _, _ = eigendecompose_sym2(t)
    return rho1 > 0.0


def sample_bilinear(field_values: np.ndarray, p) -> np.ndarray | float:
    """Bilinear sample of a scalar/tensor/vector field at a continuous point.

    Parameters
    ----------
    field_values : ndarray, shape (H, W) or (H, W, C)
        Node values; trailing channels are interpolated componentwise.
    p : (x, y)
        Continuous point; must satisfy ``0 <= x <= W-1`` and
        ``0 <= y <= H-1``.

    Raises
    ------
    DomainError
        If ``p`` falls outside the node hull of the grid.
    """
    v = np.asarray(field_values)
    x, y = float(p[0]), float(p[1])
    h, w = v.shape[0], v.shape[1]
    if not (0.0 <= x <= w - 1 and 0.0 <= y <= h - 1):
        raise DomainError(f"point ({x}, {y}) outside grid {w}x{h}")
    x0 = min(int(math.floor(x)), w - 2)
    y0 = min(int(math.floor(y)), h - 2)
    fx = x - x0
    fy = y - y0
    out = (
        v[y0, x0] * (1 - fx) * (1 - fy)
        + v[y0, x0 + 1] * fx * (1 - fy)
        + v[y0 + 1, x0] * (1 - fx) * fy
        + v[y0 + 1, x0 + 1] * fx * fy
    )
    if v.ndim == 2:
        return float(out)
    return out


def load_image(path, invert: bool = False) -> ScalarImage:
    """Read an 8/16-bit grayscale PNG or PGM as a [0, 1] scalar image.

    Color inputs are reduced to the green channel (standard for retinal
    imagery).  ``invert`` flips the contrast for bright-on-dark targets.
    """
    img = Image.open(path)
    if img.mode in ("RGB", "RGBA"):
        arr = np.asarray(img, dtype=np.float64)[..., 1] / 255.0
    elif img.mode in ("I;16", "I;16B", "I;16L"):
        arr = np.asarray(img, dtype=np.float64) / 65535.0
    elif img.mode == "I":
        arr = np.asarray(img, dtype=np.float64)
        arr = arr / max(arr.max(), 1.0)
    elif img.mode == "L":
        arr = np.asarray(img, dtype=np.float64) / 255.0
    else:
        arr = np.asarray(img.convert("L"), dtype=np.float64) / 255.0
    if invert:
        arr = 1.0 - arr
    return ScalarImage(arr)


def save_image(image: ScalarImage | np.ndarray, path) -> None:
    """Write a [0, 1] scalar array as an 8-bit grayscale PNG/PGM.

    File-like targets receive PNG bytes.
    """
    arr = image.values if isinstance(image, ScalarImage) else np.asarray(image)
    data = np.clip(arr, 0.0, 1.0)
    pil = Image.fromarray((data * 255.0 + 0.5).astype(np.uint8))
    if hasattr(path, "write"):
        pil.save(path, format="PNG")
    else:
        pil.save(path)
