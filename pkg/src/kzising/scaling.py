"""Kibble-Zurek rescaling, scaling-function fits and noise-length analysis.

Correlations at the critical point obey ``C(T, x) = T^(-b) F(x T^(-a))`` with
``a = nu/(1 + z nu)`` and ``b = nu eta/(1 + z nu)``. ``F`` is modelled as a
Taylor polynomial times an exponential,

    F(X) = sum_{m=0}^{M} a_m X^m * exp(-atilde X),

and the collapse quality for a trial ``(nu, eta)`` is ``chi2 / N_dof`` of the
best such fit. For fixed ``atilde`` the model is linear in ``a_m``, so the fit
is a weighted linear least-squares problem nested inside a one-dimensional
search over ``atilde`` (log grid plus golden-section refinement).

Noise adds a factor ``exp(-x / xi)``; with ``xi_tilde = T xi`` it reads
``exp(-x T / xi_tilde)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "RescalingParams",
    "CollapseData",
    "ScalingFit",
    "RankDeficiencyError",
    "FitError",
    "rescale",
    "fit_scaling_function",
    "ScanResult",
    "exponent_scan",
    "NoiseLengthFit",
    "extract_xi",
    "PowerLawFit",
    "fit_power_law",
    "XiTildeFit",
    "fit_xi_tilde",
    "linear_fit",
]

DY_FLOOR = 1e-12
ATILDE_RANGE = (1e-3, 1e3)
ATILDE_SEEDS = 61
GOLDEN_RTOL = 1e-10
REGION_FACTOR = 1.2
MAX_REFINED = 8
COARSE_RTOL = 1e-4
_GOLD = (math.sqrt(5.0) - 1.0) / 2.0


class FitError(ArithmeticError):
    pass


class RankDeficiencyError(ValueError):
    def __init__(self, msg, x_range=None):
        super().__init__(msg)
        self.x_range = x_range


@dataclass(frozen=True)
class RescalingParams:
    nu: float
    eta: float
    z: float = 1.0

    def __post_init__(self):
        if not self.nu > 0:
            raise ValueError(f"nu must be positive (got {self.nu})")
        if not self.z > 0:
            raise ValueError(f"z must be positive (got {self.z})")
        if not math.isfinite(self.eta):
            raise ValueError(f"eta must be finite (got {self.eta})")

    @property
    def a(self) -> float:
        return self.nu / (1.0 + self.z * self.nu)

    @property
    def b(self) -> float:
        return self.nu * self.eta / (1.0 + self.z * self.nu)


@dataclass
class CollapseData:
    """Raw points ``(T, x, C, dC)``; ``dC`` defaults to 1 (equal weights)."""

    T: np.ndarray
    x: np.ndarray
    C: np.ndarray
    dC: np.ndarray | None = None

    def __post_init__(self):
        self.T = np.asarray(self.T, dtype=float)
        self.x = np.asarray(self.x, dtype=float)
        self.C = np.asarray(self.C, dtype=float)
        self.dC = np.ones_like(self.C) if self.dC is None else np.asarray(self.dC, dtype=float)
        n = self.C.shape
        if not (self.T.shape == self.x.shape == n == self.dC.shape) or len(n) != 1:
            raise ValueError("T, x, C and dC must be 1-d arrays of equal length")

    def __len__(self):
        return self.C.shape[0]

    def select(self, mask) -> "CollapseData":
        m = np.asarray(mask, dtype=bool)
        return CollapseData(self.T[m], self.x[m], self.C[m], self.dC[m])


def rescale(data: CollapseData, params: RescalingParams, xi_tilde: float | None = None):
    """Return ``(X, Y, dY)``.

    With ``xi_tilde`` the noise factor is divided out: ``Y`` and ``dY`` are
    both multiplied by ``exp(x T / xi_tilde)``. ``xi_tilde = inf`` is the same
    as no correction.
    """
    if np.any(data.T <= 0):
        raise ValueError("T must be positive")
    if np.any(data.x < 1):
        raise ValueError("x must be >= 1")
    X = data.x * data.T ** (-params.a)
    f = data.T ** params.b
    Y = data.C * f
    dY = data.dC * f
    if xi_tilde is not None and math.isfinite(xi_tilde):
        if not xi_tilde > 0:
            raise ValueError("xi_tilde must be positive")
        g = np.exp(data.x * data.T / xi_tilde)
        Y = Y * g
        dY = dY * g
    return X, Y, dY


# ---------------------------------------------------------------------------
# scaling-function fit


@dataclass
class ScalingFit:
    M: int
    coefficients: np.ndarray
    atilde: float
    chi2: float
    ndof: int
    atilde_free: bool

    @property
    def chi2_per_dof(self) -> float:
        return self.chi2 / self.ndof

    def __call__(self, X):
        X = np.asarray(X, dtype=float)
        return np.polyval(self.coefficients[::-1], X) * np.exp(-self.atilde * X)


def _design(X, M, atilde):
    V = np.vander(X, M + 1, increasing=True)
    return V * np.exp(-atilde * X)[:, None]


def _solve(X, Yw, w, M, atilde, grad=False):
    """Weighted least squares for fixed ``atilde``; returns ``(coef, chi2)``.

    With ``grad`` the derivative d chi2 / d atilde is appended. The
    coefficients are optimal, so only the explicit dependence of the design
    on ``atilde`` contributes.
    """
    A = _design(X, M, atilde) * w[:, None]
    norms = np.linalg.norm(A, axis=0)
    if np.any(norms == 0) or not np.all(np.isfinite(norms)):
        rank = int(np.count_nonzero(norms > 0))
    else:
        coef, _, rank, _ = np.linalg.lstsq(A / norms, Yw, rcond=None)
        coef = coef / norms
    if rank < M + 1:
        raise RankDeficiencyError(
            f"design matrix has rank {rank} < {M + 1} for X in [{X.min():.6g}, {X.max():.6g}]",
            (float(X.min()), float(X.max())),
        )
    r = A @ coef - Yw
    if not grad:
        return coef, float(r @ r)
    return coef, float(r @ r), float(-2.0 * r @ (X * (A @ coef)))


def _golden(f, lo, hi, rtol):
    """Minimise ``f`` on ``[lo, hi]``; returns (argmin, min)."""
    c = hi - _GOLD * (hi - lo)
    d = lo + _GOLD * (hi - lo)
    fc, fd = f(c), f(d)
    while hi - lo > rtol * max(1.0, abs(lo) + abs(hi)):
        if fc <= fd:
            hi, d, fd = d, c, fc
            c = hi - _GOLD * (hi - lo)
            fc = f(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + _GOLD * (hi - lo)
            fd = f(d)
    return (c, fc) if fc <= fd else (d, fd)


def _refine_minima(f, grid, vals, rtol, keep=MAX_REFINED, slopes=None):
    """Golden-section refinement of the best local minima of a sampled curve.

    chi2(atilde) is often multimodal, so every bracketed local minimum (up
    to ``keep`` of them, best first) is refined and the lowest one wins.
    Brackets come from the samples themselves and, when ``slopes`` (the
    derivative at each grid point) is given, from every interval where the
    derivative turns from negative to positive. The latter catches wells
    narrower than the grid spacing.
    """
    n = grid.shape[0]
    finite = np.where(np.isfinite(vals), vals, np.inf)
    if not np.isfinite(finite).any():
        raise RankDeficiencyError("no usable point on the search grid")
    left = np.r_[np.inf, finite[:-1]]
    right = np.r_[finite[1:], np.inf]
    brackets = [
        (finite[i], max(i - 1, 0), min(i + 1, n - 1))
        for i in np.flatnonzero((finite <= left) & (finite <= right) & np.isfinite(finite))
    ]
    if slopes is not None:
        turn = np.flatnonzero((slopes[:-1] < 0) & (slopes[1:] > 0))
        brackets += [(min(finite[i], finite[i + 1]), i, i + 1) for i in turn]
    brackets.sort(key=lambda b: b[0])
    i0 = int(np.argmin(finite))
    best_x, best = grid[i0], finite[i0]
    for _, lo, hi in brackets[:keep]:
        x, v = _golden(f, grid[lo], grid[hi], COARSE_RTOL)
        if v < best:
            best_x, best = x, v
    # polish the winner only
    h = 4 * COARSE_RTOL * max(1.0, 2 * abs(best_x))
    x, v = _golden(f, max(best_x - h, grid[0]), min(best_x + h, grid[-1]), rtol)
    if v < best:
        best_x, best = x, v
    return best_x, best


def _parse_mode(mode):
    if mode in ("free", None):
        return None
    if mode == "fixed":
        return 0.0
    val = float(mode)
    if val < 0:
        raise ValueError("a fixed atilde must be >= 0")
    return val


def fit_scaling_function(X, Y, dY=None, M: int = 4, atilde_mode="free") -> ScalingFit:
    """Least-squares fit of the Taylor-times-exponential scaling function.

    ``atilde_mode`` is ``"free"`` (searched on [1e-3, 1e3] and also tried at
    0), ``"fixed"`` (``atilde = 0``) or a number to hold ``atilde`` at.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    dY = np.ones_like(Y) if dY is None else np.asarray(dY, dtype=float)
    if M < 0:
        raise ValueError("Taylor order M must be >= 0")
    fixed = _parse_mode(atilde_mode)
    n_par = M + 1 if fixed is not None else M + 2
    N = Y.shape[0]
    if N <= n_par:
        raise ValueError(f"need more than {n_par} points for M={M} (got {N})")
    w = 1.0 / np.maximum(dY, DY_FLOOR)
    Yw = Y * w
    if fixed is not None:
        coef, chi2 = _solve(X, Yw, w, M, fixed)
        return ScalingFit(M, coef, fixed, chi2, N - n_par, False)

    # a degenerate design at atilde = 0 is a property of the data
    coef0, chi0 = _solve(X, Yw, w, M, 0.0)

    def chi2_at(log_a):
        try:
            return _solve(X, Yw, w, M, math.exp(log_a))[1]
        except RankDeficiencyError:
            # exp(-atilde X) underflowed; not a usable candidate
            return math.inf

    def probe(log_a):
        a = math.exp(log_a)
        try:
            _, c2, g = _solve(X, Yw, w, M, a, grad=True)
        except RankDeficiencyError:
            return math.inf, math.nan
        return c2, g * a

    grid = np.linspace(math.log(ATILDE_RANGE[0]), math.log(ATILDE_RANGE[1]), ATILDE_SEEDS)
    vals, slopes = np.array([probe(g) for g in grid]).T
    best_log, best = _refine_minima(chi2_at, grid, vals, GOLDEN_RTOL, slopes=slopes)
    atilde = math.exp(best_log)
    if chi0 <= best:
        return ScalingFit(M, coef0, 0.0, chi0, N - n_par, True)
    coef, chi2 = _solve(X, Yw, w, M, atilde)
    return ScalingFit(M, coef, atilde, chi2, N - n_par, True)


# ---------------------------------------------------------------------------
# exponent scan


@dataclass
class ScanResult:
    nu: np.ndarray
    eta: np.ndarray
    surface: np.ndarray  # (len(nu), len(eta)) chi2/N_dof, NaN for failed cells
    failed: np.ndarray
    threshold: float = REGION_FACTOR

    @property
    def minimum(self) -> float:
        return float(np.nanmin(self.surface))

    @property
    def argmin(self) -> tuple[float, float]:
        i, j = np.unravel_index(np.nanargmin(self.surface), self.surface.shape)
        return float(self.nu[i]), float(self.eta[j])

    @property
    def region(self) -> np.ndarray:
        s = np.where(np.isnan(self.surface), np.inf, self.surface)
        return s <= self.threshold * self.minimum

    def contains(self, nu: float, eta: float, tol: float = 1e-9) -> bool:
        """Is ``(nu, eta)`` a grid cell inside the region?"""
        i = np.flatnonzero(np.abs(self.nu - nu) <= tol)
        j = np.flatnonzero(np.abs(self.eta - eta) <= tol)
        if i.size == 0 or j.size == 0:
            raise ValueError(f"({nu}, {eta}) is not a grid point")
        return bool(self.region[i[0], j[0]])

    def cells(self):
        for i, nu in enumerate(self.nu):
            for j, eta in enumerate(self.eta):
                yield float(nu), float(eta), float(self.surface[i, j])


def exponent_scan(
    data: CollapseData,
    nu_grid=None,
    eta_grid=None,
    M: int = 4,
    atilde_mode="free",
    z: float = 1.0,
    xi_tilde: float | None = None,
    threshold: float = REGION_FACTOR,
) -> ScanResult:
    """chi2/N_dof of the collapse for every ``(nu, eta)`` cell.

    Defaults are 101 x 101 cells on nu in [0.5, 1.5], eta in [0, 0.5]. A
    cell whose fit fails is NaN and flagged in ``failed``.
    """
    nu_grid = np.linspace(0.5, 1.5, 101) if nu_grid is None else np.asarray(nu_grid, dtype=float)
    eta_grid = np.linspace(0.0, 0.5, 101) if eta_grid is None else np.asarray(eta_grid, dtype=float)
    if not (np.all(np.isfinite(nu_grid)) and np.all(np.isfinite(eta_grid))):
        raise ValueError("grids must be finite")
    surf = np.full((nu_grid.shape[0], eta_grid.shape[0]), np.nan)
    failed = np.zeros(surf.shape, dtype=bool)
    for i, nu in enumerate(nu_grid):
        for j, eta in enumerate(eta_grid):
            try:
                X, Y, dY = rescale(data, RescalingParams(nu, eta, z), xi_tilde)
                surf[i, j] = fit_scaling_function(X, Y, dY, M, atilde_mode).chi2_per_dof
            except (ValueError, np.linalg.LinAlgError, FloatingPointError):
                failed[i, j] = True
    if failed.all():
        raise FitError("every cell of the exponent scan failed")
    return ScanResult(nu_grid, eta_grid, surf, failed, threshold)


# ---------------------------------------------------------------------------
# noise length


def linear_fit(x, y, sigma=None, intercept: bool = True):
    """Weighted least squares line; returns (slope, intercept, slope_stderr).

    With ``sigma`` the errors are taken as known. Without it the slope error
    is scaled by the residual variance.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    cols = [x, np.ones_like(x)] if intercept else [x]
    A = np.stack(cols, axis=1)
    if sigma is not None:
        w = 1.0 / np.asarray(sigma, dtype=float)
        Aw, yw = A * w[:, None], y * w
    else:
        Aw, yw = A, y
    coef, *_ = np.linalg.lstsq(Aw, yw, rcond=None)
    cov = np.linalg.pinv(Aw.T @ Aw)
    if sigma is None:
        dof = x.shape[0] - A.shape[1]
        r = yw - Aw @ coef
        cov = cov * (float(r @ r) / dof if dof > 0 else np.nan)
    slope = float(coef[0])
    icpt = float(coef[1]) if intercept else 0.0
    return slope, icpt, float(math.sqrt(max(cov[0, 0], 0.0)))


@dataclass
class NoiseLengthFit:
    xi: float
    xi_tilde: float | None
    window: tuple
    slope: float
    slope_stderr: float
    intercept: float
    no_decay: bool = False
    dropped: list = field(default_factory=list)
    n_points: int = 0


def extract_xi(
    x,
    ratio,
    stderr=None,
    window: tuple | None = None,
    T: float | None = None,
    intercept: bool = True,
) -> NoiseLengthFit:
    """Fit ``ln(ratio) = c - x / xi`` over ``window = (x_min, x_max)``.

    Points with a nonpositive ratio are dropped with a warning. Weights are
    ``ratio / stderr`` when every stderr in the window is positive, uniform
    otherwise. A slope ``>= 0`` sets ``no_decay`` and ``xi = inf``.
    """
    x = np.asarray(x, dtype=float)
    ratio = np.asarray(ratio, dtype=float)
    err = None if stderr is None else np.asarray(stderr, dtype=float)
    lo, hi = window if window is not None else (x.min(), x.max())
    m = (x >= lo) & (x <= hi) & np.isfinite(ratio)
    bad = m & (ratio <= 0)
    dropped = x[bad].tolist()
    if dropped:
        warnings.warn(f"dropping nonpositive ratios at x = {dropped}", RuntimeWarning, stacklevel=2)
    m &= ratio > 0
    if m.sum() < 3:
        raise ValueError(f"need at least 3 usable points in window [{lo}, {hi}] (got {int(m.sum())})")
    xs, ys = x[m], np.log(ratio[m])
    sigma = None
    if err is not None:
        s = err[m] / ratio[m]
        if np.all(np.isfinite(s)) and np.all(s > 0):
            sigma = s
    slope, icpt, dslope = linear_fit(xs, ys, sigma, intercept)
    no_decay = not slope < 0
    xi = math.inf if no_decay else -1.0 / slope
    xt = None if T is None else T * xi
    return NoiseLengthFit(xi, xt, (float(lo), float(hi)), slope, dslope, icpt, no_decay, dropped, int(m.sum()))


@dataclass
class PowerLawFit:
    exponent: float
    prefactor: float
    exponent_stderr: float


def fit_power_law(u, v, v_stderr=None) -> PowerLawFit:
    """``v = A u^k`` fitted as a line in log-log coordinates."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if np.any(u <= 0) or np.any(v <= 0):
        raise ValueError("power-law fit needs positive data")
    sigma = None if v_stderr is None else np.asarray(v_stderr, dtype=float) / v
    k, c, dk = linear_fit(np.log(u), np.log(v), sigma)
    return PowerLawFit(k, math.exp(c), dk)


# ---------------------------------------------------------------------------
# xi_tilde


@dataclass
class XiTildeFit:
    xi_tilde: float
    grid: np.ndarray
    profile: np.ndarray  # chi2/N_dof along grid
    chi2_per_dof: float
    fit: ScalingFit | None
    unidentifiable: bool = False
    at_edge: bool = False


def fit_xi_tilde(
    data: CollapseData,
    params: RescalingParams,
    M: int = 4,
    atilde_mode="free",
    search: tuple = (1.0, 1e6),
    n_grid: int = 61,
    flat_tol: float = 0.01,
) -> XiTildeFit:
    """Profile chi2/N_dof over xi_tilde with the exponents held fixed.

    The factor ``exp(-x T / xi_tilde)`` multiplies the scaling function,
    which is the same as dividing it out of ``Y`` and ``dY``. ``xi_tilde``
    is not counted as a fitted parameter in ``N_dof``.
    """
    if np.unique(data.T).shape[0] < 2:
        raise ValueError("xi_tilde fit needs points at two or more drive times")

    def prof(log_xt):
        X, Y, dY = rescale(data, params, math.exp(log_xt))
        return fit_scaling_function(X, Y, dY, M, atilde_mode).chi2_per_dof

    grid = np.linspace(math.log(search[0]), math.log(search[1]), n_grid)
    vals = np.array([prof(g) for g in grid])
    i = int(np.argmin(vals))
    best_log, _ = _refine_minima(prof, grid, vals, 1e-6)
    vmin, vmax = float(vals.min()), float(vals.max())
    flat = (vmax - vmin) <= flat_tol * max(vmin, 1e-300)
    edge = i in (0, n_grid - 1)
    xt = math.exp(best_log)
    X, Y, dY = rescale(data, params, xt)
    fit = fit_scaling_function(X, Y, dY, M, atilde_mode)
    return XiTildeFit(xt, np.exp(grid), vals, fit.chi2_per_dof, fit, flat, edge)
