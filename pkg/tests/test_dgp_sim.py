import numpy as np
import pytest

from gpmmm import dgp_sim, transforms
from gpmmm.dgp_sim import (
    DGPSpec,
    HillDGP,
    IntroExampleConfig,
    NonlinearGPDGP,
    SpendingSpec,
    TimeVaryingGPDGP,
)
from gpmmm.errors import DomainError


class TestGenSpending:
    def test_constant_when_no_ar_no_noise(self):
        spec = SpendingSpec(gamma0=5.0, gamma1=0.0, tau_x=0.0, x0=2.0, T=10)
        x = dgp_sim.gen_spending(spec, seed=0)
        assert x[0] == 2.0
        np.testing.assert_allclose(x[1:], 5.0)

    def test_random_walk_mean_and_variance(self):
        # the unclamped walk has E(x_T) = x0, Var(x_T) = (T-1) tau^2 from x1 = x0
        T, tau, x0, n = 100, 1.0, 5.0, 2000
        spec = SpendingSpec(
            gamma0=0.0, gamma1=1.0, tau_x=tau, x0=x0, T=T, clamp_floor=float("-inf")
        )
        finals = np.array([dgp_sim.gen_spending(spec, s)[-1] for s in range(n)])
        se_mean = 3 * tau * np.sqrt(T) / np.sqrt(n)
        assert abs(finals.mean() - x0) <= se_mean
        assert finals.var() == pytest.approx((T - 1) * tau**2, rel=0.15)

    def test_clamping_floors_draws(self):
        spec = SpendingSpec(gamma0=-10.0, gamma1=0.0, tau_x=0.5, x0=1.0, T=50)
        x = dgp_sim.gen_spending(spec, seed=1)
        assert np.all(x >= 0.0)


class TestGenDataset:
    def test_zero_noise_equals_truth(self):
        dgp = DGPSpec(kind=NonlinearGPDGP(eta=2.0, rho_ratio=0.5), noise_ratio=0.0)
        spending = SpendingSpec(gamma0=10.0, gamma1=0.5, tau_x=3.0, x0=20.0, T=50)
        sim = dgp_sim.gen_dataset(dgp, spending, seed=0)
        np.testing.assert_array_equal(sim.y, sim.truth["deterministic"])

    def test_zero_amplitude_time_varying_collapses_to_intercept(self):
        dgp = DGPSpec(
            kind=TimeVaryingGPDGP(eta=1e-12, rho_ratio=0.5), noise_ratio=0.0, alpha=3.0
        )
        spending = SpendingSpec(gamma0=10.0, gamma1=0.5, tau_x=3.0, x0=20.0, T=50)
        sim = dgp_sim.gen_dataset(dgp, spending, seed=1)
        np.testing.assert_allclose(sim.y, 3.0, atol=1e-8)

    def test_hill_dgp_half_saturation_at_inflection(self):
        # direct Hill evaluation oracle at the resolved k
        dgp = DGPSpec(
            kind=HillDGP(shape=2.0, k_ratio=0.33, amplitude=4.0), noise_ratio=0.0, alpha=1.0
        )
        spending = SpendingSpec(gamma0=15.0, gamma1=0.0, tau_x=5.0, x0=15.0, T=100)
        sim = dgp_sim.gen_dataset(dgp, spending, seed=2)
        k = sim.truth["hill_k"]
        assert k == pytest.approx(0.33 * np.ptp(sim.x))
        direct = 1.0 + 4.0 * transforms.hill(np.array([k]), transforms.HillParams(k, 2.0))
        assert direct[0] == pytest.approx(1.0 + 2.0, abs=1e-12)

    def test_determinism_bit_identical(self):
        dgp = DGPSpec(kind=TimeVaryingGPDGP(eta=2.0, rho_ratio=0.5), noise_ratio=0.1)
        spending = SpendingSpec(gamma0=10.0, gamma1=0.5, tau_x=3.0, x0=20.0, T=60)
        a = dgp_sim.gen_dataset(dgp, spending, seed=7)
        b = dgp_sim.gen_dataset(dgp, spending, seed=7)
        np.testing.assert_array_equal(a.y, b.y)
        np.testing.assert_array_equal(a.x, b.x)
        np.testing.assert_array_equal(a.truth["beta"], b.truth["beta"])

    def test_truth_record_reconstructs_outcome(self):
        dgp = DGPSpec(
            kind=NonlinearGPDGP(eta=2.0, rho_ratio=0.1),
            noise_ratio=0.2,
            carryover=transforms.StockSpec(0.5, 3),
        )
        spending = SpendingSpec(gamma0=10.0, gamma1=0.5, tau_x=3.0, x0=20.0, T=60)
        sim = dgp_sim.gen_dataset(dgp, spending, seed=3)
        np.testing.assert_array_equal(sim.y - sim.truth["noise"], sim.truth["deterministic"])
        assert len(sim.x) == 60 - 3  # stock trimming

    def test_rho_resolution_uses_right_input(self):
        spending = SpendingSpec(gamma0=10.0, gamma1=0.5, tau_x=3.0, x0=20.0, T=80)
        tv = dgp_sim.gen_dataset(
            DGPSpec(kind=TimeVaryingGPDGP(eta=1.0, rho_ratio=0.2), noise_ratio=0.0),
            spending,
            seed=4,
        )
        assert tv.truth["rho_input"] == "t"
        assert tv.truth["rho"] == pytest.approx(0.2 * (80 - 1))
        nl = dgp_sim.gen_dataset(
            DGPSpec(kind=NonlinearGPDGP(eta=1.0, rho_ratio=0.2), noise_ratio=0.0),
            spending,
            seed=4,
        )
        assert nl.truth["rho_input"] == "x"
        assert nl.truth["rho"] == pytest.approx(0.2 * np.ptp(nl.x))

    def test_degenerate_spending_range_rejected(self):
        dgp = DGPSpec(kind=NonlinearGPDGP(eta=1.0, rho_ratio=0.5), noise_ratio=0.0)
        spending = SpendingSpec(gamma0=5.0, gamma1=0.0, tau_x=0.0, x0=5.0, T=30)
        with pytest.raises(DomainError, match="range"):
            dgp_sim.gen_dataset(dgp, spending, seed=0)

    def test_noise_calibration(self):
        # sample sd of recorded noise matches noise_ratio * sd(deterministic)
        dgp = DGPSpec(kind=NonlinearGPDGP(eta=2.0, rho_ratio=0.5), noise_ratio=0.1)
        spending = SpendingSpec(gamma0=10.0, gamma1=0.5, tau_x=3.0, x0=20.0, T=10000)
        sim = dgp_sim.gen_dataset(dgp, spending, seed=5)
        target = 0.1 * np.std(sim.truth["deterministic"])
        assert np.std(sim.truth["noise"]) == pytest.approx(target, rel=0.03)


class TestIntroExample:
    def test_noiseless_affine_map_perfect_correlation(self):
        cfg = IntroExampleConfig(x_noise_sd=0.0, noise_ratio=0.0)
        sim = dgp_sim.gen_intro_example(seed=1, config=cfg)
        beta_lagged = cfg.beta(sim.t - cfg.lag)
        assert abs(np.corrcoef(sim.x, beta_lagged)[0, 1]) == pytest.approx(1.0, abs=1e-12)

    def test_flat_coefficient_gives_linear_data(self):
        cfg = IntroExampleConfig(b1=0.0, noise_ratio=1e-9, x_noise_sd=0.5)
        sim = dgp_sim.gen_intro_example(seed=2, config=cfg)
        slope, icept = np.polyfit(sim.x, sim.y, 1)
        resid = sim.y - (slope * sim.x + icept)
        assert 1 - np.var(resid) / np.var(sim.y) > 0.99

    def test_scatter_single_valued_within_noise(self):
        # binning oracle: the "looks nonlinear" signature
        sim = dgp_sim.gen_intro_example(seed=0)
        x, y, sigma = sim.x, sim.y, sim.truth["sigma"]
        q = np.quantile(x, np.linspace(0, 1, 11))
        for i in range(10):
            mask = (x >= q[i]) & (x <= q[i + 1])
            if mask.sum() >= 3:
                assert np.std(y[mask]) < 3 * sigma


class TestSigmoidCase:
    def test_noise_free_monotone(self):
        cfg = dgp_sim.SigmoidCaseConfig(noise_ratio=0.0)
        sim = dgp_sim.gen_sigmoid_case(seed=0, config=cfg)
        order = np.argsort(sim.x)
        assert np.all(np.diff(sim.y[order]) >= -1e-9)

    def test_midpoint_halfway_in_log_units(self):
        cfg = dgp_sim.SigmoidCaseConfig()
        mid = np.exp(cfg.log_midpoint)
        val = cfg.log_revenue(np.array([mid]))[0]
        assert val == pytest.approx(0.5 * (cfg.log_y_low + cfg.log_y_high), abs=1e-12)

    def test_midpoint_inside_observed_range(self):
        sim = dgp_sim.gen_sigmoid_case(seed=0)
        mid = np.exp(sim.truth["log_midpoint"])
        assert sim.x.min() < mid < sim.x.max()
