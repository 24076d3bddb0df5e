"""Posterior-mean denoiser tests.

The two-point closed form is easy to re-derive by hand, so the OR variant
gets exact-point oracles (midpoint, value, derivative). The truncated
binomial variant is checked against structural facts: saturation to the
extreme atoms, monotonicity, the posterior-variance derivative identity
via central differences, and agreement with the two-point variant in the
regime where multiplicities carry negligible prior mass.
"""

import numpy as np
import pytest

from urasparc.config import build_section_prior
from urasparc.denoise import DenoiserSpec, denoise, posterior_stats


@pytest.fixture(scope="module")
def sparse_prior():
    # 25 users on 2^15 bins: P(count >= 2) ~ 2.8e-7 per component
    return build_section_prior(25, 15)


class TestPosteriorStats:
    def test_symmetric_two_atom(self):
        atoms = np.array([0.0, 1.0])
        logp = np.log([0.5, 0.5])
        shifts = np.array([0.0, 1.0]).reshape(2, 1)
        mean, second = posterior_stats(atoms, logp, shifts, 1.0,
                                       np.array([0.5]))
        assert mean[0] == pytest.approx(0.5, rel=1e-14)
        assert second[0] == pytest.approx(0.5, rel=1e-14)

    def test_equal_exponent_point(self):
        # x = 1 sits at distance 1 from both shifts, so the Gaussian
        # factors cancel and the posterior reduces to the prior
        atoms = np.array([0.0, 1.0])
        logp = np.log([0.3, 0.7])
        shifts = np.array([0.0, 2.0]).reshape(2, 1)
        mean, second = posterior_stats(atoms, logp, shifts, 4.0,
                                       np.array([1.0]))
        assert mean[0] == pytest.approx(0.7, rel=1e-14)
        assert second[0] == pytest.approx(0.7, rel=1e-14)


class TestTwoPointClosedForm:
    def test_midpoint_value_and_derivative(self, sparse_prior):
        phat, tau2 = 16.0, 1.3
        spec = DenoiserSpec("or", sparse_prior, [phat])
        p0 = spec.probs[0]
        sqp = np.sqrt(phat)
        xstar = sqp / 2 + tau2 / sqp * np.log(p0 / (1 - p0))
        val, der = denoise(spec, np.float64(xstar), tau2)
        assert val == pytest.approx(sqp / 2, rel=1e-12)
        # posterior variance at even odds is 1/4
        assert der == pytest.approx(phat / (4 * tau2), rel=1e-12)

    def test_saturation(self, sparse_prior):
        phat = 16.0
        spec = DenoiserSpec("or", sparse_prior, [phat])
        hi, _ = denoise(spec, np.float64(30.0), 1.0)
        lo, _ = denoise(spec, np.float64(-30.0), 1.0)
        assert hi == pytest.approx(4.0, abs=1e-9)
        assert lo == pytest.approx(0.0, abs=1e-9)


class TestFullPrior:
    def test_saturates_to_extreme_atoms(self, sparse_prior):
        phat = 16.0
        spec = DenoiserSpec("full", sparse_prior, [phat])
        top = spec.kmax * 4.0
        hi, _ = denoise(spec, np.float64(top + 10.0), 1.0)
        lo, _ = denoise(spec, np.float64(-10.0), 1.0)
        assert hi == pytest.approx(top, abs=1e-6)
        assert lo == pytest.approx(0.0, abs=1e-6)

    def test_bounds_and_monotonicity(self, sparse_prior):
        phat = 16.0
        for kind in ("full", "or", "orplus"):
            spec = DenoiserSpec(kind, sparse_prior, [phat])
            x = np.linspace(-12.0, spec.kmax * 4.0 + 12.0, 1001)
            val, der = denoise(spec, x, 1.0)
            assert np.all(val >= -1e-12)
            assert np.all(val <= spec.kmax * 4.0 + 1e-9)
            assert np.all(np.diff(val) >= -1e-12)
            assert np.all(der >= 0.0)

    def test_derivative_matches_central_difference(self, sparse_prior):
        # fd error floor ~ eps * val / h, hence the absolute term
        phat, tau2, h = 16.0, 1.0, 1e-6
        pts = np.linspace(-3.0, 7.0, 20)
        for kind in ("full", "or"):
            spec = DenoiserSpec(kind, sparse_prior, [phat])
            vp, _ = denoise(spec, pts + h, tau2)
            vm, _ = denoise(spec, pts - h, tau2)
            _, der = denoise(spec, pts, tau2)
            fd = (vp - vm) / (2 * h)
            assert np.all(np.abs(fd - der) <= 1e-6 * np.abs(der) + 1e-8)

    def test_variant_saturation_levels(self, sparse_prior):
        # the variants are indistinguishable below the multiplicity
        # crossover but saturate at their own top atom
        phat = 16.0
        f = DenoiserSpec("full", sparse_prior, [phat])
        o = DenoiserSpec("or", sparse_prior, [phat])
        op = DenoiserSpec("orplus", sparse_prior, [phat])
        x = np.float64(f.kmax * 4.0 + 10.0)
        vf, _ = denoise(f, x, 1.0)
        vo, _ = denoise(o, x, 1.0)
        vp, _ = denoise(op, x, 1.0)
        assert vo == pytest.approx(4.0, abs=1e-6)
        assert vp == pytest.approx(8.0, abs=1e-6)
        assert vf == pytest.approx(f.kmax * 4.0, abs=1e-6)


class TestTwoPointApproximation:
    def test_gap_small_below_multiplicity_crossover(self, sparse_prior):
        # on [-4 tau, sqrt(Phat) + 2 tau] the count>=2 atoms never take
        # over, and the two denoisers agree to a few parts in 1e4
        phat, tau2 = 16.0, 1.0
        f = DenoiserSpec("full", sparse_prior, [phat])
        o = DenoiserSpec("or", sparse_prior, [phat])
        x = np.linspace(-4.0, 6.0, 2001)
        vf, _ = denoise(f, x, tau2)
        vo, _ = denoise(o, x, tau2)
        assert np.max(np.abs(vf - vo)) < 1e-3 * 4.0

    def test_gap_rare_on_typical_observations(self, sparse_prior):
        phat, tau2 = 16.0, 1.0
        f = DenoiserSpec("full", sparse_prior, [phat])
        o = DenoiserSpec("or", sparse_prior, [phat])
        rng = np.random.default_rng(7)
        m = 200000
        s = rng.choice(sparse_prior.atoms, size=m, p=sparse_prior.probs)
        x = 4.0 * s + np.sqrt(tau2) * rng.standard_normal(m)
        vf, _ = denoise(f, x, tau2)
        vo, _ = denoise(o, x, tau2)
        gap = np.abs(vf - vo) / 4.0
        assert (gap > 1e-3).mean() < 1e-4
        assert gap.mean() < 1e-5


class TestShapesAndValidation:
    def test_scalar_round_trip(self, sparse_prior):
        spec = DenoiserSpec("full", sparse_prior, [4.0])
        val, der = denoise(spec, np.float64(1.0), 1.0)
        assert np.ndim(val) == 0 and np.ndim(der) == 0

    def test_sections_are_independent(self, sparse_prior):
        spec = DenoiserSpec("pa-full", sparse_prior, [1.0, 9.0])
        x = np.array([0.4, 0.9, 2.1, 2.9])   # two sections of two
        val, der = denoise(spec, x, 0.7)
        for l, ph in enumerate([1.0, 9.0]):
            solo = DenoiserSpec("full", sparse_prior, [ph])
            for j in range(2):
                v, d = denoise(solo, np.float64(x[2 * l + j]), 0.7)
                assert val[2 * l + j] == pytest.approx(v, rel=1e-13)
                assert der[2 * l + j] == pytest.approx(d, rel=1e-13)

    def test_two_dim_matches_flat(self, sparse_prior):
        spec = DenoiserSpec("full", sparse_prior, [1.0, 9.0])
        rng = np.random.default_rng(5)
        x = rng.standard_normal((2, 6))
        v2, d2 = denoise(spec, x, 1.0)
        v1, d1 = denoise(spec, x.ravel(), 1.0)
        assert np.array_equal(v2.ravel(), v1)
        assert np.array_equal(d2.ravel(), d1)

    def test_bad_length_raises(self, sparse_prior):
        spec = DenoiserSpec("full", sparse_prior, [1.0, 9.0])
        with pytest.raises(ValueError):
            denoise(spec, np.zeros(7), 1.0)

    def test_non_finite_raises(self, sparse_prior):
        spec = DenoiserSpec("full", sparse_prior, [1.0])
        for bad in (np.nan, np.inf, -np.inf):
            with pytest.raises(FloatingPointError):
                denoise(spec, np.array([0.0, bad]), 1.0)

    def test_unknown_kind_rejected(self, sparse_prior):
        with pytest.raises(ValueError):
            DenoiserSpec("soft", sparse_prior, [1.0])

    def test_orplus_needs_two_atoms(self):
        single = build_section_prior(1, 8)
        with pytest.raises(ValueError):
            DenoiserSpec("orplus", single, [1.0])
