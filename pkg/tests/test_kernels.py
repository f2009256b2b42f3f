import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gpmmm import kernels
from gpmmm.errors import DomainError, FactorizationError
from gpmmm.kernels import (
    SE,
    OnSeries,
    Periodic,
    PeriodicHyper,
    ScaledTime,
    SEHyper,
    Sum,
    TrendSeason,
)


def se(eta=1.0, rho=1.0):
    return SE(SEHyper(eta, rho))


class TestEvaluate:
    def test_se_at_identical_inputs_is_amplitude_squared(self):
        assert kernels.evaluate(se(2.0, 1.0), 0.0, 0.0) == pytest.approx(4.0)

    def test_se_unit_exponent(self):
        got = kernels.evaluate(se(1.0, 1.0), 0.0, math.sqrt(2.0))
        assert got == pytest.approx(math.exp(-1.0), abs=1e-12)

    def test_periodic_full_cycle(self):
        k = Periodic(PeriodicHyper(3.0, 1.0, 12.0))
        assert kernels.evaluate(k, 0.0, 12.0) == pytest.approx(9.0, abs=1e-12)

    def test_sum_adds_members(self):
        k = Sum([se(1.0, 1.0), se(2.0, 3.0)])
        expect = kernels.evaluate(se(1, 1), 0.0, 1.0) + kernels.evaluate(se(2, 3), 0.0, 1.0)
        assert kernels.evaluate(k, 0.0, 1.0) == pytest.approx(expect, abs=1e-12)

    def test_rejects_non_finite(self):
        with pytest.raises(DomainError):
            kernels.evaluate(se(), float("nan"), 0.0)
        with pytest.raises(DomainError):
            kernels.evaluate(se(), 0.0, float("inf"))

    def test_invalid_hyper_rejected(self):
        with pytest.raises(DomainError):
            SEHyper(-1.0, 1.0)
        with pytest.raises(DomainError):
            PeriodicHyper(1.0, 0.0, 12.0)

    @given(
        z=st.floats(-50, 50),
        z2=st.floats(-50, 50),
        eta=st.floats(0.1, 10),
        rho=st.floats(0.1, 10),
    )
    @settings(max_examples=60, deadline=None)
    def test_symmetry_se(self, z, z2, eta, rho):
        k = se(eta, rho)
        assert kernels.evaluate(k, z, z2) == pytest.approx(
            kernels.evaluate(k, z2, z), rel=1e-12, abs=1e-300
        )

    @given(z=st.floats(-30, 30), z2=st.floats(-30, 30))
    @settings(max_examples=60, deadline=None)
    def test_symmetry_and_diag_dominance_trendseason(self, z, z2):
        k = TrendSeason(SEHyper(1.5, 4.0), PeriodicHyper(0.7, 1.2, 12.0))
        assert kernels.evaluate(k, z, z2) == pytest.approx(kernels.evaluate(k, z2, z), rel=1e-12)
        assert kernels.evaluate(k, z, z) >= kernels.evaluate(k, z, z2) - 1e-12

    def test_periodicity(self):
        k = Periodic(PeriodicHyper(2.0, 0.8, 7.0))
        for z, z2 in [(0.0, 1.3), (2.5, 4.1), (-3.0, 0.4)]:
            assert kernels.evaluate(k, z, z2) == pytest.approx(
                kernels.evaluate(k, z, z2 + 7.0), abs=1e-12
            )


class TestGram:
    def test_single_point(self):
        g = kernels.gram(se(1, 1), np.array([0.0]), 0.0)
        assert g.shape == (1, 1) and g[0, 0] == pytest.approx(1.0)

    def test_sum_closure(self):
        x = np.linspace(0, 5, 8)
        a, b = se(1.0, 1.0), se(0.5, 2.0)
        gsum = kernels.gram(Sum([a, b]), x)
        np.testing.assert_allclose(gsum, kernels.gram(a, x) + kernels.gram(b, x), atol=1e-12)

    def test_doubled_kernel_doubles_gram(self):
        x = np.array([0.0, 1.0, 2.5])
        np.testing.assert_allclose(
            kernels.gram(Sum([se(1, 1), se(1, 1)]), x), 2 * kernels.gram(se(1, 1), x), atol=1e-12
        )

    def test_se_decay_underflows_to_zero(self):
        g = kernels.gram(se(1.0, 0.2), np.array([0.0, 10.0]))
        assert g[0, 1] < 1e-300

    def test_jitter_added_to_diagonal(self):
        g = kernels.gram(se(1, 1), np.array([0.0, 1.0]), jitter=0.5)
        assert g[0, 0] == pytest.approx(1.5)
        assert g[0, 1] == pytest.approx(math.exp(-0.5))

    def test_negative_jitter_rejected(self):
        with pytest.raises(DomainError):
            kernels.gram(se(), np.array([0.0]), -1.0)

    def test_psd_random_grams(self):
        rng = np.random.default_rng(0)
        variants = [
            se(1.0, 1.0),
            se(2.0, 0.3),
            Periodic(PeriodicHyper(1.0, 0.5, 12.0)),
            TrendSeason(SEHyper(1.0, 5.0), PeriodicHyper(0.5, 1.0, 12.0)),
        ]
        for i in range(200):
            n = int(rng.integers(2, 51))
            x = rng.uniform(-20, 20, n)
            k = variants[i % len(variants)]
            g = kernels.gram(k, x, jitter=1e-8)
            eigs = np.linalg.eigvalsh(g)
            assert eigs.min() >= -1e-6


class TestCross:
    def test_cross_equals_gram_without_jitter(self):
        x = np.linspace(0, 3, 5)
        np.testing.assert_allclose(
            kernels.cross(se(1.2, 0.7), x, x), kernels.gram(se(1.2, 0.7), x, 0.0), atol=1e-12
        )

    def test_scaled_time_zero_scale_zeroes_row(self):
        t = np.array([1.0, 2.0, 3.0])
        k = ScaledTime(SEHyper(1.0, 2.0), {1.0: 0.0, 2.0: 1.0, 3.0: 2.0})
        c = kernels.cross(k, t, t)
        assert np.all(c[0, :] == 0.0) and np.all(c[:, 0] == 0.0)

    def test_scaled_time_unit_scale_is_plain_se(self):
        t = np.linspace(1, 6, 6)
        k = ScaledTime(SEHyper(1.3, 2.0), {float(p): 1.0 for p in t})
        np.testing.assert_allclose(kernels.cross(k, t, t), kernels.cross(se(1.3, 2.0), t, t), atol=1e-12)

    def test_scaled_time_missing_period_raises(self):
        k = ScaledTime(SEHyper(1.0, 1.0), {1.0: 1.0})
        with pytest.raises(DomainError, match="period"):
            kernels.cross(k, np.array([1.0]), np.array([2.0]))

    def test_override_supplies_prediction_scale(self):
        k = ScaledTime(SEHyper(1.0, 2.0), {1.0: 2.0, 2.0: 3.0}, name="x")
        c = kernels.cross(
            k, np.array([1.0, 2.0]), np.array([4.0]), b_overrides={"x": {4.0: 5.0}}
        )
        base = kernels.cross(se(1.0, 2.0), np.array([1.0, 2.0]), np.array([4.0]))
        np.testing.assert_allclose(c, base * np.array([[2.0], [3.0]]) * 5.0, atol=1e-12)

    def test_on_series_maps_periods_to_inputs(self):
        series = {1.0: 0.0, 2.0: 4.0}
        k = OnSeries(base=se(1.0, 1.0), series=series, name="x")
        got = kernels.evaluate(k, 1.0, 2.0)
        assert got == pytest.approx(kernels.evaluate(se(1.0, 1.0), 0.0, 4.0), abs=1e-15)

    def test_induced_kernel_constant_scale_matches_scaled_amplitude(self):
        # one channel with x == c equals an SE-on-t GP with amplitude eta * c
        t = np.linspace(1, 20, 20)
        c = 3.7
        k = ScaledTime(SEHyper(1.4, 5.0), {float(p): c for p in t})
        np.testing.assert_allclose(
            kernels.gram(k, t), kernels.gram(se(1.4 * c, 5.0), t), atol=1e-10
        )


class TestJitteredCholesky:
    def test_returns_factor_for_spd(self):
        x = np.linspace(0, 5, 10)
        g = kernels.gram(se(1, 1), x)
        L, jit = kernels.jittered_cholesky(g)
        np.testing.assert_allclose(L @ L.T, g + jit * np.eye(10), atol=1e-10)
        assert jit == pytest.approx(1e-8 * np.mean(np.diag(g)))

    def test_relative_error_within_budget(self):
        x = np.linspace(0, 5, 30)
        g = kernels.gram(se(2.0, 1.0), x) + 0.01 * np.eye(30)
        L, _ = kernels.jittered_cholesky(g)
        rel = np.linalg.norm(L @ L.T - g) / np.linalg.norm(g)
        assert rel <= 1e-8

    def test_failure_names_kernel_and_condition(self):
        bad = np.array([[1.0, 2.0], [2.0, 1.0]])  # indefinite
        with pytest.raises(FactorizationError, match="condition"):
            kernels.jittered_cholesky(bad, what="SE(test)")
