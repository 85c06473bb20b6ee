import math

import numpy as np
import pytest

from tubetrace.errors import (
    ConfigurationError,
    DegenerateFeatureError,
    InvalidInputError,
)
from tubetrace.grid import ScalarImage, SymTensor2
from tubetrace.metrics import (
    RegionMask,
    assemble_T_coh,
    build_mscale,
    build_region_mask,
    coherence_penalty,
    control_set_csv,
    control_set_ellipse,
    maximal_alignment_bins,
    region_constrained_cost,
    select_feature_vector,
)
from tubetrace.oof import RadiusSpace, normalize_responses, oof_response
from tubetrace.orientation import OrientationVolume, unit_vectors
from tubetrace.synth import tube_image


@pytest.fixture(scope="module")
def tube_volume():
    img, _, _ = tube_image(shape=(48, 96), half_width=3.0)
    return normalize_responses(oof_response(img, RadiusSpace(1, 8, 8)))


class TestMscale:
    def test_default_ratio_calibrated(self, tube_volume):
        field = build_mscale(tube_volume)
        assert field.c_ratio == 10.0
        a11 = field.spatial[..., 0]
        a12 = field.spatial[..., 1]
        a22 = field.spatial[..., 2]
        mean = 0.5 * (a11 + a22)
        disc = np.hypot(0.5 * (a11 - a22), a12)
        ratio = np.sqrt((mean + disc) / (mean - disc))
        assert abs(ratio.max() - 10.0) < 1e-6

    def test_alpha_negative_low_cost_along_tube(self, tube_volume):
        field = build_mscale(tube_volume)
        assert field.alpha < 0
        # at the tube center the along-x cost must undercut the across cost
        k = int(np.argmax(tube_volume.rho2[:, 24, 48]))
        a11, _, a22 = field.spatial[k, 24, 48]
        assert a11 < a22

    def test_isotropic_where_eigenvalues_tie(self, tube_volume):
        field = build_mscale(tube_volume)
        rho1 = tube_volume.rho1
        rho2 = tube_volume.rho2
        tied = np.abs(rho2 - rho1) < 1e-12
        if tied.any():
            idx = np.argwhere(tied)[0]
            a11, a12, a22 = field.spatial[tuple(idx)]
            assert a12 == pytest.approx(0.0, abs=1e-12)
            assert a11 == pytest.approx(a22, rel=1e-9)

    def test_radial_weight_positive(self, tube_volume):
        field = build_mscale(tube_volume, beta_scale=2.0)
        assert np.all(field.radial > 0)
        assert field.beta_scale == 2.0

    def test_degenerate_volume_rejected(self):
        img = ScalarImage(np.full((24, 24), 0.5))
        vol = oof_response(img, RadiusSpace(1, 4, 4))
        with pytest.raises(DegenerateFeatureError):
            build_mscale(vol)

    def test_bad_ratio_rejected(self, tube_volume):
        with pytest.raises(ConfigurationError):
            build_mscale(tube_volume, c_ratio=1.0)


class TestCoherencePenalty:
    def _volume(self, values):
        return OrientationVolume(values=values, enhanced=True)

    def test_equal_scores_unity(self):
        v = np.zeros((4, 4, 8))
        v[1, 1, 3] = 0.5
        v[2, 2, 5] = 0.5
        vol = self._volume(v)
        assert coherence_penalty(vol, 1, 1, 3, 2, 2, 5) == pytest.approx(1.0)

    def test_strictly_increasing(self):
        for lam in (5.0, 20.0):
            vals = []
            for delta in np.linspace(0, 1, 11):
                v = np.zeros((2, 2, 8))
                v[0, 0, 0] = delta
                vals.append(coherence_penalty(self._volume(v), 0, 0, 0, 1, 1, 0, lam))
            assert all(b > a for a, b in zip(vals, vals[1:]))
            assert vals[0] == pytest.approx(1.0)

    def test_lambda_validation(self):
        v = np.zeros((2, 2, 8))
        with pytest.raises(ConfigurationError):
            coherence_penalty(self._volume(v), 0, 0, 0, 1, 1, 0, lam=0.0)


class TestSelectFeatureVector:
    N = 16

    def _setup(self, peak_bins, scores):
        mask = np.zeros((1, 1, self.N), dtype=bool)
        psi = np.zeros((1, 1, self.N))
        for b, s in zip(peak_bins, scores):
            mask[0, 0, b] = True
            psi[0, 0, b] = s
        return mask, psi

    def test_singleton(self):
        mask, psi = self._setup([5], [0.7])
        k, p, fallback = select_feature_vector(mask, psi, 0, 0, mu_a=5, score_a=0.7)
        assert k == 5 and not fallback
        gx, gy = unit_vectors(self.N)
        assert p[0] == pytest.approx(gx[5])

    def test_alignment_dominates(self):
        # candidates ~0.1 rad and ~1.6 rad apart from reference at bin 0
        bins = [1, 4]
        mask, psi = self._setup(bins, [0.2, 0.9])
        k, _, fallback = select_feature_vector(mask, psi, 0, 0, mu_a=0, score_a=0.9)
        assert k == 1 and not fallback  # larger |dot| wins despite worse score

    def test_tie_resolved_by_score_proximity(self):
        # bins symmetric about the reference have identical alignment
        mask, psi = self._setup([2, 14], [0.9, 0.4])
        k, _, _ = select_feature_vector(mask, psi, 0, 0, mu_a=0, score_a=0.45)
        assert k == 14
        k, _, _ = select_feature_vector(mask, psi, 0, 0, mu_a=0, score_a=0.85)
        assert k == 2

    def test_full_tie_takes_smallest_bin(self):
        mask, psi = self._setup([2, 14], [0.6, 0.6])
        k, _, _ = select_feature_vector(mask, psi, 0, 0, mu_a=0, score_a=0.1)
        assert k == 2

    def test_antipodal_candidates_distinguished_by_score(self):
        mask, psi = self._setup([3, 11], [0.2, 0.8])  # 11 = 3 + N/2
        k, _, _ = select_feature_vector(mask, psi, 0, 0, mu_a=3, score_a=0.75)
        assert k == 11

    def test_empty_peaks_fallback(self):
        mask, psi = self._setup([], [])
        k, p, fallback = select_feature_vector(mask, psi, 0, 0, mu_a=6, score_a=0.5)
        assert fallback and k == 6

    def test_alignment_stage_scale_invariant(self):
        bins = [1, 4, 9]
        assert maximal_alignment_bins(bins, 0, self.N) == maximal_alignment_bins(
            bins, 0, self.N
        )
        # the ranking is integer-valued, so any positive rescaling of the
        # score volume cannot change the maximal set
        mask, psi = self._setup(bins, [0.2, 0.9, 0.5])
        k1, _, _ = select_feature_vector(mask, psi, 0, 0, mu_a=0, score_a=0.2)
        star = maximal_alignment_bins(bins, 0, self.N)
        assert k1 in star


class TestAssembleTcoh:
    def test_penalty_free_case(self):
        tb = SymTensor2(0.5, 0.1, 0.8)
        out = assemble_T_coh(tb, (1.0, 0.0), phi_coh=1.0, xi_aniso=0.0)
        assert out == tb

    def test_invalid_phi(self):
        with pytest.raises(InvalidInputError):
            assemble_T_coh(SymTensor2(1, 0, 1), (1, 0), phi_coh=0.5)

    def test_random_spd_and_alignment(self, rng):
        gx, gy = unit_vectors(32)
        for _ in range(1000):
            g = rng.normal(size=(2, 2))
            m = g @ g.T + 0.05 * np.eye(2)
            tb = SymTensor2(m[0, 0], m[0, 1], m[1, 1])
            k = rng.integers(0, 32)
            p = np.array([gx[k], gy[k]])
            phi = float(np.exp(rng.uniform(0, 2)))
            xi = 10.0 * float(np.trace(m))  # dominant transverse term
            out = assemble_T_coh(tb, p, phi, xi)
            mat = out.as_matrix()
            eigs, vecs = np.linalg.eigh(mat)
            assert eigs[0] > 0
            # smallest-eigenvalue direction within 10 degrees of p
            cosang = abs(vecs[:, 0] @ p)
            assert cosang > math.cos(math.radians(10.0))


class TestRegionMask:
    def test_connected_and_contains_endpoints(self):
        prior = np.array([[5.0, 5.0], [20.0, 9.0], [40.0, 30.0]])
        mask = build_region_mask(prior, (48, 48), dilation_radius=4.0)
        assert mask.mask[5, 5] and mask.mask[30, 40]
        from scipy.ndimage import label

        _, n = label(mask.mask)
        assert n == 1

    def test_off_grid_prior_rejected(self):
        prior = np.array([[100.0, 100.0], [120.0, 120.0]])
        with pytest.raises(InvalidInputError):
            build_region_mask(prior, (32, 32), 3.0)


class TestRegionCost:
    def _field(self, tube_volume=None):
        img, _, _ = tube_image(shape=(32, 64), half_width=3.0)
        vol = normalize_responses(oof_response(img, RadiusSpace(1, 6, 6)))
        return build_mscale(vol)

    def test_inside_matches_block_norm(self):
        field = self._field()
        mask = RegionMask(mask=np.ones((32, 64), dtype=bool), dilation_radius=1)
        u = (0.6, -0.2, 0.5)
        got = region_constrained_cost(field, mask, (10, 16, 2), u)
        a11, a12, a22 = field.spatial[2, 16, 10]
        p = field.radial[2, 16, 10]
        expect = math.sqrt(
            a11 * 0.36 - 2 * a12 * 0.12 + a22 * 0.04 + p * 0.25
        )
        assert got == pytest.approx(expect)

    def test_outside_is_unreachable(self):
        field = self._field()
        mask = RegionMask(mask=np.zeros((32, 64), dtype=bool), dilation_radius=1)
        assert region_constrained_cost(field, mask, (10, 16, 2), (1, 0, 0)) == math.inf


class TestControlSet:
    def test_identity_unit_circle(self):
        pts = control_set_ellipse(SymTensor2(1, 0, 1), 32)
        assert np.allclose(np.linalg.norm(pts, axis=1), 1.0, atol=1e-12)

    def test_diagonal_semiaxes(self):
        pts = control_set_ellipse(SymTensor2(4.0, 0.0, 1.0), 256)
        assert np.abs(pts[:, 0]).max() == pytest.approx(0.5, abs=1e-6)
        assert np.abs(pts[:, 1]).max() == pytest.approx(1.0, abs=1e-6)

    def test_quadric_residual(self, rng):
        for _ in range(30):
            g = rng.normal(size=(2, 2))
            m = g @ g.T + 0.1 * np.eye(2)
            t = SymTensor2(m[0, 0], m[0, 1], m[1, 1])
            pts = control_set_ellipse(t, 64)
            quad = (
                t.a11 * pts[:, 0] ** 2
                + 2 * t.a12 * pts[:, 0] * pts[:, 1]
                + t.a22 * pts[:, 1] ** 2
            )
            assert np.abs(quad - 1.0).max() < 1e-9

    def test_non_spd_rejected(self):
        with pytest.raises(InvalidInputError):
            control_set_ellipse(SymTensor2(1.0, 2.0, 1.0))

    def test_csv_export(self, tmp_path):
        path = tmp_path / "cs.csv"
        control_set_csv(
            [("a", SymTensor2(1, 0, 1), (3.0, 4.0))], path, n_samples=8
        )
        rows = path.read_text().strip().splitlines()
        assert rows[0] == "label,index,x,y"
        assert len(rows) == 9
