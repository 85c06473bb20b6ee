import numpy as np
import pytest

from tubetrace.errors import DomainError, InvalidInputError
from tubetrace.grid import (
    ScalarImage,
    SymTensor2,
    TensorField,
    UnitVector2,
    eigendecompose_sym2,
    eigendecompose_sym2_field,
    is_spd,
    load_image,
    sample_bilinear,
    save_image,
)


def reconstruct(rho1, rho2, q1, q2):
    return (
        rho1 * np.outer(q1.components, q1.components)
        + rho2 * np.outer(q2.components, q2.components)
    )


class TestEigendecompose:
    def test_identity(self):
        rho1, rho2, q1, q2 = eigendecompose_sym2(SymTensor2(1.0, 0.0, 1.0))
        assert rho1 == pytest.approx(1.0)
        assert rho2 == pytest.approx(1.0)
        assert abs(q1.components @ q2.components) < 1e-12

    def test_diagonal(self):
        rho1, rho2, q1, q2 = eigendecompose_sym2(SymTensor2(0.5, 0.0, 2.0))
        assert rho1 == pytest.approx(0.5)
        assert rho2 == pytest.approx(2.0)
        # rho1's axis is x, rho2's axis is y (sign-free)
        assert abs(q1.components[0]) == pytest.approx(1.0, abs=1e-12)
        assert abs(q2.components[1]) == pytest.approx(1.0, abs=1e-12)

    def test_random_symmetric_reconstruction(self, rng):
        for _ in range(200):
            a, b, c = rng.normal(scale=3.0, size=3)
            t = SymTensor2(a, b, c)
            rho1, rho2, q1, q2 = eigendecompose_sym2(t)
            assert rho1 <= rho2
            err = np.abs(reconstruct(rho1, rho2, q1, q2) - t.as_matrix()).max()
            assert err < 1e-12 * max(1.0, abs(a) + abs(b) + abs(c))

    def test_reconstruction_bulk_spd(self, rng):
        # 1e4 random SPD tensors reconstruct within 1e-10
        n = 10_000
        g = rng.normal(size=(n, 2, 2))
        spd = g @ np.swapaxes(g, 1, 2) + 0.05 * np.eye(2)
        rho1, rho2, q1x, q1y = eigendecompose_sym2_field(
            spd[:, 0, 0], spd[:, 0, 1], spd[:, 1, 1]
        )
        q2x, q2y = -q1y, q1x
        rec11 = rho1 * q1x * q1x + rho2 * q2x * q2x
        rec12 = rho1 * q1x * q1y + rho2 * q2x * q2y
        rec22 = rho1 * q1y * q1y + rho2 * q2y * q2y
        assert np.abs(rec11 - spd[:, 0, 0]).max() < 1e-10
        assert np.abs(rec12 - spd[:, 0, 1]).max() < 1e-10
        assert np.abs(rec22 - spd[:, 1, 1]).max() < 1e-10
        assert np.all(rho1 > 0)

    def test_spd_check_matches_eigenvalues(self, rng):
        for _ in range(300):
            a, b, c = rng.normal(scale=2.0, size=3)
            t = SymTensor2(a, b, c)
            rho1, _, _, _ = eigendecompose_sym2(t)
            assert is_spd(t) == (rho1 > 0)

    def test_degenerate_axis_convention(self):
        _, _, q1, _ = eigendecompose_sym2(SymTensor2(2.0, 0.0, 2.0))
        assert q1.components @ np.array([1.0, 0.0]) == pytest.approx(1.0)

    def test_non_finite_rejected(self):
        with pytest.raises(InvalidInputError):
            eigendecompose_sym2(SymTensor2(np.nan, 0.0, 1.0))
        with pytest.raises(InvalidInputError):
            eigendecompose_sym2(SymTensor2(1.0, np.inf, 1.0))


class TestBilinear:
    def test_node_values(self, rng):
        field = rng.uniform(size=(5, 7))
        for _ in range(20):
            x = rng.integers(0, 7)
            y = rng.integers(0, 5)
            assert sample_bilinear(field, (x, y)) == field[y, x]

    def test_cell_center(self):
        field = np.array([[0.0, 1.0], [2.0, 3.0]])
        assert sample_bilinear(field, (0.5, 0.5)) == pytest.approx(1.5)

    def test_ramp_exact(self, rng):
        yy, xx = np.mgrid[0:9, 0:11].astype(float)
        field = xx + 2.0 * yy
        for _ in range(50):
            x = rng.uniform(0, 10)
            y = rng.uniform(0, 8)
            assert sample_bilinear(field, (x, y)) == pytest.approx(
                x + 2 * y, abs=1e-12
            )

    def test_affine_exact(self, rng):
        a, b, c = rng.normal(size=3)
        yy, xx = np.mgrid[0:6, 0:6].astype(float)
        field = a + b * xx + c * yy
        for _ in range(50):
            x = rng.uniform(0, 5)
            y = rng.uniform(0, 5)
            expect = a + b * x + c * y
            assert sample_bilinear(field, (x, y)) == pytest.approx(expect, abs=1e-12)

    def test_tensor_componentwise(self, rng):
        field = rng.uniform(size=(4, 4, 3))
        out = sample_bilinear(field, (1.25, 2.5))
        for c in range(3):
            assert out[c] == pytest.approx(
                sample_bilinear(field[..., c], (1.25, 2.5))
            )

    def test_out_of_bounds(self):
        field = np.zeros((4, 4))
        with pytest.raises(DomainError):
            sample_bilinear(field, (-0.1, 1.0))
        with pytest.raises(DomainError):
            sample_bilinear(field, (1.0, 3.5))


class TestScalarImage:
    def test_invariants(self):
        with pytest.raises(InvalidInputError):
            ScalarImage(np.zeros((1, 5)))
        with pytest.raises(InvalidInputError):
            ScalarImage(np.full((4, 4), np.nan))

    def test_png_roundtrip(self, tmp_path):
        img = ScalarImage(np.linspace(0, 1, 64).reshape(8, 8))
        save_image(img, tmp_path / "a.png")
        back = load_image(tmp_path / "a.png")
        assert back.values.shape == (8, 8)
        assert np.abs(back.values - img.values).max() < 1.0 / 255

    def test_pgm_roundtrip(self, tmp_path):
        img = ScalarImage(np.linspace(0, 1, 64).reshape(8, 8))
        save_image(img, tmp_path / "a.pgm")
        back = load_image(tmp_path / "a.pgm")
        assert np.abs(back.values - img.values).max() < 1.0 / 255

    def test_green_channel(self, tmp_path):
        from PIL import Image

        rgb = np.zeros((6, 6, 3), dtype=np.uint8)
        rgb[..., 0] = 10
        rgb[..., 1] = 200
        rgb[..., 2] = 70
        Image.fromarray(rgb).save(tmp_path / "rgb.png")
        img = load_image(tmp_path / "rgb.png")
        assert np.allclose(img.values, 200 / 255)

    def test_16bit(self, tmp_path):
        from PIL import Image

        data = (np.linspace(0, 65535, 36).reshape(6, 6)).astype(np.uint16)
        Image.fromarray(data).save(tmp_path / "deep.png")
        img = load_image(tmp_path / "deep.png")
        assert img.values.max() == pytest.approx(1.0)

    def test_invert(self, tmp_path):
        img = ScalarImage(np.full((4, 4), 0.25))
        save_image(img, tmp_path / "a.png")
        inv = load_image(tmp_path / "a.png", invert=True)
        assert np.allclose(inv.values, 0.75, atol=1 / 255)


class TestUnitVector:
    def test_normalization(self):
        v = UnitVector2.from_components(3.0, 4.0)
        assert np.linalg.norm(v.components) == pytest.approx(1.0, abs=1e-12)

    def test_perp(self):
        v = UnitVector2(0.3)
        assert v.components @ v.perp().components == pytest.approx(0.0, abs=1e-12)


def test_tensor_field_shape_validation():
    with pytest.raises(InvalidInputError):
        TensorField(np.zeros((4, 4, 2)))
    tf = TensorField(np.zeros((4, 4, 3)))
    assert tf.shape == (4, 4)
    assert tf.at(1, 2) == SymTensor2(0.0, 0.0, 0.0)
