import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kzising.scaling import (
    CollapseData, FitError, RankDeficiencyError, RescalingParams, exponent_scan, extract_xi,
    _solve, fit_power_law, fit_scaling_function, fit_xi_tilde, linear_fit, rescale,
)

TRUE = RescalingParams(1.0, 0.25)


def taylor_exp(coef, atilde):
    return lambda X: np.polyval(np.asarray(coef)[::-1], X) * np.exp(-atilde * X)


def smooth_profile(X):
    """A scaling function outside the fitted family."""
    return np.exp(-0.9 * X) * (1.0 + 0.3 * X ** 2) / (1.0 + 0.1 * X)


def synthetic(F, params=TRUE, Ts=(1.0, 2.0, 4.0, 8.0), xs=range(1, 9), xi_tilde=None, noise=0.0, seed=0):
    """Collapse data C(T, x) = T^-b F(x T^-a) [exp(-x T / xi_tilde)]."""
    T, x = np.meshgrid(np.asarray(Ts, float), np.asarray(list(xs), float), indexing="ij")
    T, x = T.ravel(), x.ravel()
    C = T ** (-params.b) * F(x * T ** (-params.a))
    if xi_tilde is not None:
        C = C * np.exp(-x * T / xi_tilde)
    if noise:
        C = C + noise * np.random.default_rng(seed).standard_normal(C.shape)
    return CollapseData(T, x, C)


class TestRescale:
    def test_ising_exponents(self):
        assert TRUE.a == 0.5 and TRUE.b == 0.125

    def test_unit_drive_time(self):
        d = CollapseData([1.0, 1.0], [1.0, 3.0], [0.4, 0.1], [0.01, 0.02])
        X, Y, dY = rescale(d, RescalingParams(0.8, 0.3))
        assert np.array_equal(X, d.x) and np.array_equal(Y, d.C) and np.array_equal(dY, d.dC)

    def test_infinite_xi_tilde(self):
        d = synthetic(smooth_profile)
        a = rescale(d, TRUE)
        b = rescale(d, TRUE, math.inf)
        for u, v in zip(a, b):
            assert np.array_equal(u, v)

    def test_xi_tilde_factor(self):
        d = CollapseData([2.0], [3.0], [0.5], [0.1])
        X, Y, dY = rescale(d, TRUE, 12.0)
        g = math.exp(0.5) * 2 ** 0.125
        assert Y[0] == pytest.approx(0.5 * g) and dY[0] == pytest.approx(0.1 * g)

    def test_domain(self):
        with pytest.raises(ValueError):
            rescale(CollapseData([0.0], [1.0], [1.0]), TRUE)
        with pytest.raises(ValueError):
            rescale(CollapseData([1.0], [0.5], [1.0]), TRUE)
        with pytest.raises(ValueError):
            RescalingParams(-1.0, 0.2)


class TestFit:
    def test_exact_recovery(self):
        coef, at = [1.2, 0.5, -0.3, 0.04, -0.002], 1.3
        X = np.linspace(0.1, 6.0, 40)
        Y = taylor_exp(coef, at)(X)
        fit = fit_scaling_function(X, Y, M=4)
        assert np.max(np.abs(fit.coefficients - coef)) < 1e-6
        assert fit.atilde == pytest.approx(at, rel=1e-6)
        assert fit.chi2_per_dof < 1e-12
        assert fit.ndof == 40 - 6 and fit.atilde_free

    def test_constant(self):
        fit = fit_scaling_function(np.arange(1.0, 6.0), np.full(5, 2.5), M=0, atilde_mode="fixed")
        assert fit.coefficients[0] == pytest.approx(2.5, abs=1e-14)
        assert fit.chi2 == pytest.approx(0.0, abs=1e-20) and fit.ndof == 4

    def test_fixed_value_mode(self):
        X = np.linspace(0.5, 5, 20)
        Y = taylor_exp([1.0, 0.2], 0.3)(X)
        fit = fit_scaling_function(X, Y, M=1, atilde_mode=0.3)
        assert fit.atilde == 0.3 and not fit.atilde_free and fit.chi2 < 1e-24

    def test_rank_deficiency(self):
        with pytest.raises(RankDeficiencyError) as e:
            fit_scaling_function(np.full(10, 2.0), np.linspace(0, 1, 10), M=2)
        assert e.value.x_range == (2.0, 2.0)

    def test_too_few_points(self):
        with pytest.raises(ValueError):
            fit_scaling_function(np.arange(5.0), np.ones(5), M=4)

    @settings(max_examples=20, deadline=None)
    @given(c=st.floats(1e-3, 1e3), seed=st.integers(0, 1000))
    def test_weight_scale_invariance(self, c, seed):
        rng = np.random.default_rng(seed)
        X = np.sort(rng.uniform(0.2, 6, 25))
        Y = smooth_profile(X) + 0.01 * rng.standard_normal(25)
        dY = rng.uniform(0.5, 2.0, 25)
        a = fit_scaling_function(X, Y, dY, M=3, atilde_mode="fixed")
        b = fit_scaling_function(X, Y, c * dY, M=3, atilde_mode="fixed")
        assert b.chi2 == pytest.approx(a.chi2 / c ** 2, rel=1e-8)
        assert np.allclose(a.coefficients, b.coefficients, rtol=1e-8, atol=1e-12)
        assert a.ndof == b.ndof

    def test_residual_orthogonality(self):
        rng = np.random.default_rng(3)
        X = np.sort(rng.uniform(0.2, 6, 30))
        Y = smooth_profile(X) + 0.02 * rng.standard_normal(30)
        dY = rng.uniform(0.5, 2.0, 30)
        fit = fit_scaling_function(X, Y, dY, M=4)
        w = 1 / dY
        A = np.vander(X, 5, increasing=True) * np.exp(-fit.atilde * X)[:, None] * w[:, None]
        r = (Y - fit(X)) * w
        g = A.T @ r
        assert np.max(np.abs(g)) <= 1e-8 * np.linalg.norm(A, axis=0).max() * np.linalg.norm(Y * w)

    def test_profile_derivative(self):
        rng = np.random.default_rng(4)
        X = np.sort(rng.uniform(0.2, 6, 25))
        Y = smooth_profile(X) + 0.01 * rng.standard_normal(25)
        w = 1 / rng.uniform(0.5, 2.0, 25)
        for a in (0.05, 0.4, 2.0):
            _, _, g = _solve(X, Y * w, w, 3, a, grad=True)
            h = 1e-6 * a
            fd = (_solve(X, Y * w, w, 3, a + h)[1] - _solve(X, Y * w, w, 3, a - h)[1]) / (2 * h)
            assert g == pytest.approx(fd, rel=1e-5)

    def test_narrow_well_between_grid_points(self):
        # the exact minimum is narrower than the search grid spacing
        coef, at = [0.9, -0.4, 0.3, 0.05, -0.01], 0.7
        X = np.linspace(0.2, 8.0, 40)
        fit = fit_scaling_function(X, taylor_exp(coef, at)(X), M=4)
        assert fit.atilde == pytest.approx(at, rel=1e-8)

    def test_free_search_not_worse_than_zero(self):
        X = np.linspace(0.3, 6, 30)
        Y = smooth_profile(X)
        free = fit_scaling_function(X, Y, M=2)
        fixed = fit_scaling_function(X, Y, M=2, atilde_mode="fixed")
        assert free.chi2 <= fixed.chi2


class TestScan:
    nu = np.linspace(0.7, 1.3, 7)
    eta = np.linspace(0.05, 0.45, 5)

    def test_minimum_at_truth(self):
        d = synthetic(smooth_profile, noise=1e-4)
        s = exponent_scan(d, self.nu, self.eta, M=4)
        assert s.argmin == pytest.approx((1.0, 0.25))
        assert s.contains(1.0, 0.25)

    def test_perturbed_exponents_worse(self):
        d = synthetic(smooth_profile, noise=1e-4)

        def score(nu, eta):
            X, Y, dY = rescale(d, RescalingParams(nu, eta))
            return fit_scaling_function(X, Y, dY, M=4).chi2_per_dof

        best = score(1.0, 0.25)
        for dn, de in [(0.3, 0), (-0.3, 0), (0, 0.3), (0, -0.3), (0.3, 0.3), (-0.3, -0.3)]:
            assert score(1.0 + dn, 0.25 + de) > best

    def test_grid_reordering(self):
        d = synthetic(smooth_profile)
        s = exponent_scan(d, self.nu, self.eta, M=3, atilde_mode="fixed")
        pi, pj = np.random.default_rng(1).permutation(7), np.random.default_rng(2).permutation(5)
        t = exponent_scan(d, self.nu[pi], self.eta[pj], M=3, atilde_mode="fixed")
        assert np.array_equal(t.surface, s.surface[np.ix_(pi, pj)])

    def test_failed_cells_flagged(self):
        d = synthetic(smooth_profile)
        s = exponent_scan(d, [-0.5, 1.0], [0.25], M=2, atilde_mode="fixed")
        assert s.failed[0, 0] and not s.failed[1, 0]
        assert np.isnan(s.surface[0, 0])
        with pytest.raises(FitError):
            exponent_scan(d, [-0.5], [0.25], M=2)

    def test_region_threshold(self):
        d = synthetic(smooth_profile, noise=1e-3)
        s = exponent_scan(d, self.nu, self.eta, M=2, atilde_mode="fixed", threshold=1.5)
        assert s.region.sum() >= 1
        assert np.all(s.surface[s.region] <= 1.5 * s.minimum)
        assert len(list(s.cells())) == 35
        with pytest.raises(ValueError):
            s.contains(1.05, 0.25)


class TestNoiseLength:
    def test_synthetic_decay(self):
        x = np.arange(1, 9)
        fit = extract_xi(x, np.exp(-x / 25.0), window=(1, 6), T=4.0)
        assert fit.xi == pytest.approx(25.0, rel=0.01)
        assert fit.xi_tilde == pytest.approx(4.0 * fit.xi)
        assert fit.n_points == 6 and fit.window == (1.0, 6.0)

    def test_no_decay(self):
        fit = extract_xi(np.arange(1, 6), np.ones(5))
        assert fit.no_decay and fit.xi == math.inf

    @given(lam=st.floats(0.1, 10), xi=st.floats(2, 200))
    def test_equivariance(self, lam, xi):
        x = np.arange(1, 8, dtype=float)
        r = 0.97 * np.exp(-x / xi)
        a = extract_xi(x, r)
        b = extract_xi(lam * x, r)
        assert b.xi == pytest.approx(lam * a.xi, rel=1e-9)

    def test_nonpositive_dropped(self):
        x = np.arange(1, 7)
        r = np.exp(-x / 10.0)
        r[4] = -0.01
        with warnings.catch_warnings(record=True) as w:
            warnings.simplefilter("always")
            fit = extract_xi(x, r)
        assert fit.dropped == [5.0] and any("nonpositive" in str(m.message) for m in w)
        assert fit.xi == pytest.approx(10.0)

    def test_too_few_points(self):
        with pytest.raises(ValueError):
            extract_xi([1, 2, 3], [0.9, 0.8, 0.7], window=(1, 2))

    def test_weighted_and_no_intercept(self):
        x = np.arange(1, 7, dtype=float)
        r = np.exp(-x / 15.0)
        fit = extract_xi(x, r, stderr=0.01 * np.ones(6), intercept=False)
        assert fit.xi == pytest.approx(15.0) and fit.intercept == 0.0

    def test_linear_fit(self):
        x = np.arange(10.0)
        s, c, ds = linear_fit(x, 3 * x - 2)
        assert s == pytest.approx(3) and c == pytest.approx(-2) and ds < 1e-10

    def test_power_law(self):
        p = np.array([1e-4, 2e-4, 5e-4, 1e-3])
        fit = fit_power_law(p, 0.3 / p)
        assert fit.exponent == pytest.approx(-1.0) and fit.prefactor == pytest.approx(0.3)
        with pytest.raises(ValueError):
            fit_power_law([1, -1], [1, 1])


class TestXiTilde:
    def test_synthetic_recovery(self):
        d = synthetic(smooth_profile, xi_tilde=50.0)
        res = fit_xi_tilde(d, TRUE, M=4, search=(1.0, 1e4))
        assert res.xi_tilde == pytest.approx(50.0, rel=0.1)
        assert not res.unidentifiable and not res.at_edge
        assert res.profile.shape == res.grid.shape

    def test_noiseless_flagged(self):
        d = synthetic(taylor_exp([1.0, -0.3, 0.05], 0.5))
        res = fit_xi_tilde(d, TRUE, M=2, search=(1.0, 1e6))
        assert res.unidentifiable or res.at_edge
        assert res.xi_tilde > 1e3

    def test_needs_two_drive_times(self):
        d = synthetic(smooth_profile, Ts=(2.0,))
        with pytest.raises(ValueError):
            fit_xi_tilde(d, TRUE)
