"""Analysis engine tests.

Oracles, in decreasing strength: closed forms (zero-strength MMSE is the
prior variance, the limit thresholds, tiny-system KL by hand), direct
numerical integration on an r-grid for the two-point channel, the
information-derivative identity connecting two independently coded
quantities, and the exhaustive joint-section oracle for J <= 2.
"""

import math

import numpy as np
import pytest

from urasparc.analysis import (
    LOG2E,
    AnalysisModel,
    concatenated_caps,
    eta_bar,
    kl_mult_vs_product,
    limit_potential,
    limit_thresholds,
    min_energy_for_strength,
    mse_mismatched,
    mutual_info,
    mutual_info_or,
    potential_profile,
    required_energy_curve,
    rs_potential,
    scalar_mmse,
    se_fixed_point_alg,
    se_global_min,
    se_trajectory,
    vector_mmse_oracle,
)
from urasparc.config import build_section_prior, or_prior


class TestScalarMmse:
    def test_zero_strength_is_prior_variance(self):
        assert scalar_mmse(np.array([0.0, 1.0]), np.array([0.7, 0.3]), 0.0) \
            == pytest.approx(0.21, abs=1e-12)
        pr = build_section_prior(25, 8)
        assert scalar_mmse(pr.atoms, pr.probs, 0.0) \
            == pytest.approx(pr.variance, rel=1e-12)

    def test_strong_signal_vanishes(self):
        atoms, probs = or_prior(25, 8)
        assert scalar_mmse(atoms, probs, 1e6, atol=1e-13) < 1e-10

    def test_two_point_against_grid_integration(self):
        # independent oracle: posterior mean written out and integrated
        # with the trapezoid rule on a wide r grid
        p0, t = 0.5, 4.0
        st = math.sqrt(t)
        r = np.linspace(-12.0, 14.0, 200001)
        phi = lambda u: np.exp(-u * u / 2) / math.sqrt(2 * math.pi)
        w0, w1 = p0 * phi(r), (1 - p0) * phi(r - st)
        g = w1 / (w0 + w1)
        ref = np.trapezoid(w0 * g ** 2 + w1 * (1 - g) ** 2, r)
        mine = scalar_mmse(np.array([0.0, 1.0]), np.array([p0, 1 - p0]), t)
        assert mine == pytest.approx(ref, rel=1e-9)

    def test_monotone_in_strength(self):
        pr = build_section_prior(25, 8)
        vals = scalar_mmse(pr.atoms, pr.probs,
                           np.array([0.5, 1.0, 2.0, 4.0, 8.0, 16.0]))
        assert np.all(np.diff(vals) < 0)

    def test_vectorized_matches_scalar_calls(self):
        pr = build_section_prior(25, 8)
        ts = np.array([0.3, 2.0, 9.0])
        vec = scalar_mmse(pr.atoms, pr.probs, ts)
        for i, t in enumerate(ts):
            assert vec[i] == pytest.approx(
                scalar_mmse(pr.atoms, pr.probs, float(t)), rel=1e-12)

    def test_mismatched_dominates_and_gap_shrinks(self):
        # the binary estimator pays for ignoring multiplicities; the
        # price scales with the collision mass, which falls with J
        t = 4.0
        gaps = []
        for J in (8, 12):
            pr = build_section_prior(25, J)
            ea, ep = or_prior(25, J)
            mm = scalar_mmse(pr.atoms, pr.probs, t)
            mis = mse_mismatched(pr.atoms, pr.probs, ea, ep, t)
            assert mis >= mm - 1e-15
            gaps.append(mis - mm)
        assert gaps[1] < gaps[0]


class TestMutualInfo:
    def test_zero_at_zero_strength(self):
        pr = build_section_prior(25, 8)
        assert abs(mutual_info(pr.atoms, pr.probs, 0.0)) < 1e-9

    def test_saturates_to_prior_entropy(self):
        assert mutual_info_or(0.9, 1e6) == pytest.approx(0.4689956, abs=1e-4)

    def test_information_derivative_identity(self):
        atoms, probs = or_prior(25, 8)
        t = 4.0
        h = 1e-3 * t
        fd = (mutual_info(atoms, probs, t + h)
              - mutual_info(atoms, probs, t - h)) / (2 * h)
        ref = scalar_mmse(atoms, probs, t) / 2 * LOG2E
        assert fd == pytest.approx(ref, rel=1e-6)

    def test_information_derivative_random_strengths(self):
        pr = build_section_prior(25, 8)
        rng = np.random.default_rng(1)
        for t in 10 ** rng.uniform(-1.0, 1.4, 20):
            h = 1e-3 * t
            fd = (mutual_info(pr.atoms, pr.probs, t + h)
                  - mutual_info(pr.atoms, pr.probs, t - h)) / (2 * h)
            ref = scalar_mmse(pr.atoms, pr.probs, t) / 2 * LOG2E
            assert fd == pytest.approx(ref, rel=1e-5)


class TestModel:
    def test_auto_prior_resolution(self):
        assert AnalysisModel(Ka=25, J=12, R_in=0.01, E_in=1.0).kind == "full"
        assert AnalysisModel(Ka=300, J=20, R_in=0.0061, E_in=1.0).kind == "or"

    def test_derived_quantities(self):
        m = AnalysisModel(Ka=25, J=12, R_in=0.03, E_in=1.5)
        assert m.beta == pytest.approx(0.03 * 4096 / 12, rel=1e-15)
        assert m.phat == pytest.approx(2 * 12 * 1.5, rel=1e-15)
        m2 = m.with_energy(2.0)
        assert m2.E_in == 2.0 and m2.kind == m.kind
        assert m.E_in == 1.5

    def test_unknown_prior_kind(self):
        with pytest.raises(ValueError):
            AnalysisModel(Ka=25, J=12, R_in=0.01, E_in=1.0,
                          prior_kind="flat")


class TestPotential:
    def test_value_at_unit_eta(self):
        # the regularizer vanishes at eta = 1
        m = AnalysisModel(Ka=25, J=12, R_in=0.01, E_in=1.0)
        v = float(rs_potential(m, np.array([1.0]))[0])
        assert v == pytest.approx(m.info(m.phat) * 2 ** m.J, rel=1e-12)

    def test_fixed_point_is_stationary(self):
        m = AnalysisModel(Ka=25, J=12, R_in=0.01, E_in=1.0)
        eta = se_fixed_point_alg(m)
        resid = abs(1.0 / eta - (1.0 + m.beta * m.phat
                                 * m.mmse(eta * m.phat)))
        assert resid < 1e-9

    def test_binary_prior_tracks_full_minimizer(self):
        kw = dict(Ka=25, J=15, R_in=0.005, E_in=1.0)
        ef = se_global_min(AnalysisModel(prior_kind="full", **kw),
                           grid_points=200)
        eo = se_global_min(AnalysisModel(prior_kind="or", **kw),
                           grid_points=200)
        assert abs(ef - eo) < 1e-3

    def test_vanishing_load_gives_clean_channel(self):
        m = AnalysisModel(Ka=25, J=12, R_in=1e-9, E_in=1.0)
        assert se_fixed_point_alg(m) > 1.0 - 1e-6

    def test_single_minimum_regime(self):
        m = AnalysisModel(Ka=200, J=20, R_in=0.0061, E_in=1.2368)
        prof = potential_profile(m, grid_points=300)
        assert len(prof.local_minima) == 1
        assert abs(se_fixed_point_alg(m) - prof.eta_opt) < 1e-4

    def test_two_minima_regime_splits_decoders(self):
        m = AnalysisModel(Ka=300, J=20, R_in=0.0061, E_in=1.2368)
        prof = potential_profile(m, grid_points=300)
        assert len(prof.local_minima) == 2
        alg = se_fixed_point_alg(m)
        assert abs(alg - prof.local_minima[0]) < 1e-5
        assert prof.eta_opt == prof.local_minima[1]
        assert alg < prof.eta_opt - 0.5

    def test_profile_structure(self):
        m = AnalysisModel(Ka=300, J=20, R_in=0.0061, E_in=1.2368)
        prof = potential_profile(m, grid_points=300)
        assert prof.local_minima == sorted(prof.local_minima)
        assert prof.eta_opt in prof.local_minima
        assert prof.eta.shape == prof.value.shape == prof.deriv.shape


class TestLimitPotential:
    def test_eta_bar(self):
        assert eta_bar(1.0, 2.0) == pytest.approx(0.5 / LOG2E, rel=1e-15)

    def test_continuous_at_the_break(self):
        S, E, a = 1.0, 0.8, 2.0
        eb = eta_bar(E, a)
        lo = limit_potential(eb * (1 - 1e-9), S, E, a)
        hi = limit_potential(eb * (1 + 1e-9), S, E, a)
        mid = limit_potential(eb, S, E, a)
        assert lo == pytest.approx(hi, abs=1e-6)
        assert min(lo, hi) - 1e-9 <= mid <= max(lo, hi) + 1e-9

    def test_piecewise_convex(self):
        S, E, a = 1.0, 0.8, 2.0
        eb = eta_bar(E, a)
        below = np.linspace(0.05 * eb, 0.95 * eb, 200)
        above = np.linspace(1.05 * eb, 1.0, 200)
        for grid in (below, above):
            v = limit_potential(grid, S, E, a)
            d = np.diff(v) / np.diff(grid)
            assert np.all(np.diff(d) > -1e-9)


class TestLimitThresholds:
    def test_closed_form_values(self):
        r = limit_thresholds(2.0, 2.0)
        assert r.E_opt == pytest.approx(0.75, rel=1e-12)
        assert math.isinf(r.E_alg) and math.isinf(r.E_alg_db)
        r1 = limit_thresholds(1.0, 2.0)
        assert r1.E_opt == pytest.approx(0.5, rel=1e-12)
        assert r1.E_alg == pytest.approx(1.1294456766354648, rel=1e-12)
        assert r1.E_opt < r1.E_alg
        assert r1.regime == "two-minima"

    def test_algorithmic_divergence_boundary(self):
        assert math.isinf(limit_thresholds(LOG2E, 2.0).E_alg)
        just_below = limit_thresholds(LOG2E * (1 - 1e-6), 2.0)
        assert math.isfinite(just_below.E_alg)
        assert just_below.E_alg > 1e5

    def test_round_trip_dict(self):
        d = limit_thresholds(1.0, 2.0).to_dict()
        assert set(d) == {"S_in", "alpha", "E_opt", "E_alg",
                          "E_opt_db", "E_alg_db", "regime"}

    def test_validation(self):
        with pytest.raises(ValueError):
            limit_thresholds(1.0, 1.0)
        with pytest.raises(ValueError):
            limit_thresholds(0.0, 2.0)


class TestConcatenatedCaps:
    def test_known_values(self):
        opt, alg = concatenated_caps(1, 3.0, 1.0)
        assert opt == pytest.approx(1.0, rel=1e-15)
        assert alg == pytest.approx(0.2213475204444817, rel=1e-12)
        opt2, alg2 = concatenated_caps(2, 1.5, 2.0)
        assert opt2 == pytest.approx(1.0, rel=1e-15)
        assert alg2 == pytest.approx(0.4713475204444817, rel=1e-12)

    def test_monotone_in_population(self):
        a = concatenated_caps(10, 0.5, 2.0)[0]
        b = concatenated_caps(20, 0.5, 2.0)[0]
        assert b > a

    def test_validation(self):
        with pytest.raises(ValueError):
            concatenated_caps(0, 1.0, 1.0)


class TestEnergySearch:
    def test_minimal_energy_small_system(self):
        E = min_energy_for_strength(4, 4, 0.25, 8.0, decoder="alg")
        assert E == pytest.approx(1.6689, rel=1e-3)
        hit = se_fixed_point_alg(
            AnalysisModel(Ka=4, J=4, R_in=0.25, E_in=E)) * 2 * 4 * E
        assert hit >= 8.0
        shy = E * 0.999
        miss = se_fixed_point_alg(
            AnalysisModel(Ka=4, J=4, R_in=0.25, E_in=shy)) * 2 * 4 * shy
        assert miss < 8.0

    def test_unreachable_target_raises(self):
        with pytest.raises(ValueError):
            min_energy_for_strength(4, 4, 0.25, 1e9, decoder="alg",
                                    power_cap=10.0)

    def test_required_energy_falls_toward_limit(self):
        # same detection target at growing section size, S_in = 1 per
        # user; the threshold 1.1294 is the infinite-size floor
        rows6 = required_energy_curve(6, 2.0, [1.0], decoder="alg")
        rows10 = required_energy_curve(10, 2.0, [1.0], decoder="alg")
        (s6, e6, reg6), = rows6
        (s10, e10, reg10), = rows10
        assert e6 == pytest.approx(2.6962, rel=1e-3)
        assert e10 == pytest.approx(1.8252, rel=1e-3)
        assert e6 > e10 > 1.1294456766354648
        assert reg6 == reg10 == "unique-minimum"


class TestSeTrajectory:
    def test_loaded_system_recursion(self):
        pr = build_section_prior(25, 8)
        phat = np.full(8, 4.0)
        traj = se_trajectory(pr, phat, 4.0, 15)
        assert traj[0] == pytest.approx(
            1.0 + 4.0 * 4.0 * pr.second_moment, rel=1e-12)
        assert np.all(np.diff(traj) <= 1e-12)
        assert abs(traj[-1] - traj[-2]) < 1e-6
        assert 1.0 < traj[-1] < traj[0]

    def test_binary_estimator_never_beats_matched(self):
        pr = build_section_prior(25, 8)
        phat = np.full(8, 4.0)
        full = se_trajectory(pr, phat, 4.0, 10)
        binary = se_trajectory(pr, phat, 4.0, 10, denoiser_kind="or")
        assert np.all(binary[1:] >= full[1:] - 1e-12)

    def test_unknown_kind(self):
        pr = build_section_prior(25, 8)
        with pytest.raises(ValueError):
            se_trajectory(pr, [4.0], 4.0, 3, denoiser_kind="mmse")


class TestJointSectionOracle:
    def test_two_users_one_bit_at_zero_strength(self):
        # occupancies (2,0)/(1,1)/(0,2) with probs 1/4, 1/2, 1/4:
        # per-component variance is 1/2
        assert vector_mmse_oracle(2, 1, 0.0) == pytest.approx(0.5, rel=1e-9)

    def test_joint_knowledge_helps(self):
        pr = build_section_prior(1, 1)
        for t in (1.0, 4.0):
            vec = vector_mmse_oracle(1, 1, t)
            sca = scalar_mmse(pr.atoms, pr.probs, t)
            assert vec < sca

    def test_zero_strength_matches_scalar(self):
        pr = build_section_prior(1, 1)
        assert vector_mmse_oracle(1, 1, 0.0) == pytest.approx(
            scalar_mmse(pr.atoms, pr.probs, 0.0), abs=1e-10)

    def test_dependence_penalty_shrinks_with_section_size(self):
        t = 2.0
        p1, p2 = build_section_prior(1, 1), build_section_prior(1, 2)
        gap1 = scalar_mmse(p1.atoms, p1.probs, t) - vector_mmse_oracle(1, 1, t)
        gap2 = scalar_mmse(p2.atoms, p2.probs, t) - vector_mmse_oracle(1, 2, t)
        assert gap1 > gap2 > 0

    def test_work_guard(self):
        with pytest.raises(ValueError):
            vector_mmse_oracle(2, 2, 1.0, nodes_per_dim=100)


class TestKlDiagnostic:
    def test_two_users_one_bit_by_hand(self):
        # true law (1/4, 1/2, 1/4) on occupancies (2,0),(1,1),(0,2);
        # product-of-marginals gives 1/16, 1/4, 1/16: KL = 3/2 bits
        exact, asym = kl_mult_vs_product(2, 1)
        assert exact == pytest.approx(1.5, abs=1e-12)
        assert asym == pytest.approx(1.0, abs=1e-12)

    def test_single_user_closed_form(self):
        exact, asym = kl_mult_vs_product(1, 3)
        assert exact == pytest.approx(asym, rel=1e-12)
        assert exact == pytest.approx(-7 * math.log2(1 - 1 / 8), rel=1e-12)

    def test_approximation_tightens_with_section_size(self):
        diffs = []
        for J in (1, 2, 3):
            exact, asym = kl_mult_vs_product(2, J)
            assert exact > asym
            diffs.append(exact - asym)
        assert diffs[0] > diffs[1] > diffs[2]

    def test_large_system_skips_enumeration(self):
        exact, asym = kl_mult_vs_product(25, 12)
        assert exact is None
        assert asym == pytest.approx(3.64808, rel=1e-4)
