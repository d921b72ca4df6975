"""Kriging interpolation with a regression trend and MLE hyperparameters.

The predictor solves the augmented system ``[[R, F], [F^T, 0]]`` once against
``(Y, 0)``. Solving through a Cholesky factor ``L`` of ``R`` and a QR factor
of ``L^{-1} F`` gives the cached solution ``(gamma, beta)`` with
``gamma = R^{-1}(Y - F beta)`` and ``beta`` the generalised least-squares
trend coefficients, so a prediction is the dot product
``r(x) . gamma + f(x) . beta``.

The trend is any callable ``X -> (n, K)``; ordinary Kriging uses a
:class:`RegressionBasis`, hierarchical Kriging plugs in a low-fidelity model.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import linalg
from scipy.linalg import lapack

from .domain import Domain, SampleSet, as_points
from .errors import AllStartsFailed, RankDeficientRegression, SingularSystem

log = logging.getLogger(__name__)

FAMILIES = ("gaussian", "power", "cubic")
NUGGET_LADDER = tuple(10.0 ** e for e in range(-12, -5))
REGRESSION_RTOL = 1e-10
MAX_CONDITION = 1e12


# --- correlation models ---------------------------------------------------


@dataclass(frozen=True)
class CorrelationConfig:
    """Product correlation ``prod_k R_k(|h_k|, theta_k)`` plus a diagonal nugget.

    ``family`` is ``"gaussian"`` (``exp(-theta h^2)``), ``"power"``
    (``exp(-theta |h|^power)`` with ``power`` in [1, 2]) or ``"cubic"``
    (the compactly supported cubic spline in ``xi = theta |h|``).
    """

    theta: tuple
    family: str = "gaussian"
    power: float = 2.0
    nugget: float = 0.0

    def __post_init__(self):
        theta = tuple(float(t) for t in np.atleast_1d(self.theta))
        if not theta or not all(t > 0 and np.isfinite(t) for t in theta):
            raise ValueError(f"theta must be positive and finite, got {theta}")
        if self.family not in FAMILIES:
            raise ValueError(f"unknown correlation family {self.family!r}")
        if self.family == "power" and not 1.0 <= self.power <= 2.0:
            raise ValueError("power-exponential exponent must lie in [1, 2]")
        if self.nugget < 0:
            raise ValueError("nugget must be nonnegative")
        object.__setattr__(self, "theta", theta)

    @property
    def exponent(self) -> float:
        """Distance exponent used to scale default theta bounds."""
        return {"gaussian": 2.0, "power": self.power, "cubic": 1.0}[self.family]

    def to_dict(self) -> dict:
        return {"theta": list(self.theta), "family": self.family, "power": self.power, "nugget": self.nugget}

    @classmethod
    def from_dict(cls, data: dict) -> "CorrelationConfig":
        return cls(tuple(data["theta"]), data.get("family", "gaussian"), data.get("power", 2.0), data.get("nugget", 0.0))


def _cubic_spline(xi):
    xi = np.abs(xi)
    out = np.zeros_like(xi)
    near = xi <= 0.2
    mid = (xi > 0.2) & (xi < 1.0)
    out[near] = 1.0 - 15.0 * xi[near] ** 2 + 30.0 * xi[near] ** 3
    out[mid] = 1.25 * (1.0 - xi[mid]) ** 3
    return out


def _correlate_diffs(H: np.ndarray, corr: CorrelationConfig) -> np.ndarray:
    """Correlation of separation vectors ``H`` (last axis = dimension)."""
    theta = np.asarray(corr.theta)
    if corr.family == "gaussian":
        return np.exp(-np.sum(theta * H * H, axis=-1))
    if corr.family == "power":
        return np.exp(-np.sum(theta * np.abs(H) ** corr.power, axis=-1))
    return np.prod(_cubic_spline(theta * H), axis=-1)


def correlation_value(h, corr: CorrelationConfig) -> float:
    h = np.atleast_1d(np.asarray(h, dtype=float))
    if h.size != len(corr.theta):
        raise ValueError("separation and theta dimensions differ")
    return float(_correlate_diffs(h, corr))


def correlation_matrix(XA: np.ndarray, XB: np.ndarray, corr: CorrelationConfig) -> np.ndarray:
    """``R[i, j] = R(XA[i] - XB[j])`` without nugget."""
    return _correlate_diffs(XA[:, None, :] - XB[None, :, :], corr)


# --- regression bases -----------------------------------------------------


@dataclass(frozen=True)
class RegressionBasis:
    kind: str = "constant"

    def __post_init__(self):
        if self.kind not in ("constant", "linear"):
            raise ValueError(f"unknown regression basis {self.kind!r}")

    def size(self, d: int) -> int:
        return 1 if self.kind == "constant" else d + 1

    def __call__(self, X) -> np.ndarray:
        X = as_points(X)
        ones = np.ones((X.shape[0], 1))
        return ones if self.kind == "constant" else np.hstack([ones, X])


# --- the model ------------------------------------------------------------


def _strict_cholesky(R: np.ndarray, nugget: float, max_condition: float):
    """Cholesky of ``R + nugget*I`` or ``SingularSystem`` if the 1-norm
    condition estimate exceeds ``max_condition``."""
    A = R + nugget * np.eye(R.shape[0])
    L, info = lapack.dpotrf(A, lower=1, clean=1)
    if info != 0:
        raise SingularSystem("correlation matrix not positive definite")
    rcond, info = lapack.dpocon(L, float(np.abs(A).sum(axis=0).max()), uplo="L")
    if info != 0 or rcond * max_condition < 1.0:
        raise SingularSystem(f"correlation matrix condition estimate {1 / max(rcond, 1e-300):.2e} too large")
    return L, nugget


def _cholesky_with_nugget(R: np.ndarray, nugget: float):
    n = R.shape[0]
    scale = (np.trace(R) + n * nugget) / n
    ladder = [nugget] + [max(nugget, k * scale) for k in NUGGET_LADDER]
    for nu in ladder:
        try:
            L = linalg.cholesky(R + nu * np.eye(n), lower=True, check_finite=False)
        except linalg.LinAlgError:
            continue
        if np.all(np.isfinite(L)):
            return L, nu
    raise SingularSystem(f"correlation matrix not positive definite even with nugget {ladder[-1]:.1e}")


@dataclass(frozen=True)
class _Factors:
    L: np.ndarray  # Cholesky factor of R + nugget*I
    Ft: np.ndarray  # L^{-1} F
    Q: np.ndarray  # QR of Ft
    Rq: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray  # R^{-1}(Y - F beta)
    resid_t: np.ndarray  # L^{-1}(Y - F beta)
    sigma2: float
    nugget: float

    @property
    def logdet(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(self.L))))


def _factorize(X: np.ndarray, Y: np.ndarray, F: np.ndarray, corr: CorrelationConfig,
               max_condition: Optional[float] = None) -> _Factors:
    """Factor the augmented system.

    With ``max_condition`` set, the nugget is never escalated and badly
    conditioned correlation matrices are rejected instead.
    """
    n, K = F.shape
    if n < K:
        raise RankDeficientRegression(f"{n} samples cannot determine {K} trend coefficients")
    R = correlation_matrix(X, X, corr)
    if max_condition is None:
        L, nu = _cholesky_with_nugget(R, corr.nugget)
    else:
        L, nu = _strict_cholesky(R, corr.nugget, max_condition)
    Ft = linalg.solve_triangular(L, F, lower=True, check_finite=False)
    Yt = linalg.solve_triangular(L, Y, lower=True, check_finite=False)
    Q, Rq = linalg.qr(Ft, mode="economic", check_finite=False)
    diag = np.abs(np.diag(Rq))
    if diag.min() <= REGRESSION_RTOL * max(diag.max(), np.finfo(float).tiny):
        raise RankDeficientRegression("F^T R^{-1} F is numerically singular")
    beta = linalg.solve_triangular(Rq, Q.T @ Yt, lower=False, check_finite=False)
    resid_t = Yt - Ft @ beta
    gamma = linalg.solve_triangular(L, resid_t, lower=True, trans="T", check_finite=False)
    sigma2 = float(resid_t @ resid_t) / n
    return _Factors(L, Ft, Q, Rq, beta, gamma, resid_t, sigma2, nu)


class KrigingModel:
    """Built Kriging interpolator; immutable after construction.

    Parameters
    ----------
    samples : SampleSet
    corr : CorrelationConfig
    trend : callable
        ``X -> (n, K)`` regression functions evaluated at ``X``.
    trend_label : str
        Descriptive name of the trend, used in reports.
    """

    def __init__(self, samples: SampleSet, corr: CorrelationConfig, trend: Callable, trend_label: str = "custom"):
        self.samples = samples
        self.corr = corr
        self.trend = trend
        self.trend_label = trend_label
        self.F = np.asarray(trend(samples.points), dtype=float).reshape(samples.n, -1)
        self._f = _factorize(samples.points, samples.values, self.F, corr)

    # cached quantities
    @property
    def beta(self) -> np.ndarray:
        return self._f.beta

    @property
    def sigma2(self) -> float:
        return self._f.sigma2

    @property
    def nugget(self) -> float:
        return self._f.nugget

    @property
    def solution(self) -> np.ndarray:
        """Solution of the augmented system against ``(Y, 0)``: ``(gamma, beta)``."""
        return np.concatenate([self._f.gamma, self._f.beta])

    @property
    def n(self) -> int:
        return self.samples.n

    @property
    def d(self) -> int:
        return self.samples.d

    def _rhs(self, X: np.ndarray):
        r = correlation_matrix(X, self.samples.points, self.corr)
        f = np.asarray(self.trend(X), dtype=float).reshape(X.shape[0], -1)
        return r, f

    def predict(self, X) -> np.ndarray:
        X = as_points(X, self.d)
        r, f = self._rhs(X)
        return r @ self._f.gamma + f @ self._f.beta

    __call__ = predict

    def predict_mse(self, X) -> np.ndarray:
        """``sigma^2 (1 - u^T A^{-1} u)`` with ``u = (r(x), f(x))``, clamped at 0."""
        X = as_points(X, self.d)
        r, f = self._rhs(X)
        rt = linalg.solve_triangular(self._f.L, r.T, lower=True, check_finite=False)
        u = self._f.Ft.T @ rt - f.T
        w = linalg.solve_triangular(self._f.Rq, u, lower=False, trans="T", check_finite=False)
        quad = np.sum(rt * rt, axis=0) - np.sum(w * w, axis=0)
        return np.maximum(self._f.sigma2 * (1.0 - quad), 0.0)

    def log_likelihood(self) -> float:
        return _full_log_likelihood(self._f, self.n, self.samples.values, self.F)


def build_kriging(samples: SampleSet, basis: RegressionBasis = RegressionBasis(), corr: Optional[CorrelationConfig] = None) -> KrigingModel:
    if corr is None:
        corr = CorrelationConfig(tuple(np.ones(samples.d)))
    if len(corr.theta) != samples.d:
        raise ValueError("theta dimension does not match the samples")
    return KrigingModel(samples, corr, basis, trend_label=basis.kind)


def predict(model: KrigingModel, x) -> np.ndarray:
    return model.predict(x)


def predict_mse(model: KrigingModel, x) -> np.ndarray:
    return model.predict_mse(x)


# --- likelihood -----------------------------------------------------------


def _full_log_likelihood(fac: _Factors, n: int, Y: np.ndarray, F: np.ndarray) -> float:
    sigma2 = max(fac.sigma2, np.finfo(float).tiny)
    quad = float(fac.resid_t @ fac.resid_t)
    return (
        -0.5 * n * np.log(2.0 * np.pi)
        - 0.5 * n * np.log(sigma2)
        - 0.5 * fac.logdet
        - quad / (2.0 * sigma2)
    )


def log_likelihood(samples: SampleSet, trend: Callable, corr: CorrelationConfig) -> float:
    """Log of the Gaussian likelihood with ``beta`` and ``sigma^2`` at their optima."""
    F = np.asarray(trend(samples.points), dtype=float).reshape(samples.n, -1)
    fac = _factorize(samples.points, samples.values, F, corr)
    return _full_log_likelihood(fac, samples.n, samples.values, F)


def reduced_likelihood_objective(samples: SampleSet, trend: Callable, corr: CorrelationConfig) -> float:
    """``sigma^2(theta) * det(R)^{1/n}``, minimised by the MLE."""
    F = np.asarray(trend(samples.points), dtype=float).reshape(samples.n, -1)
    fac = _factorize(samples.points, samples.values, F, corr)
    return fac.sigma2 * np.exp(fac.logdet / samples.n)


def default_theta_bounds(domain: Domain, family: str = "gaussian", power: float = 2.0):
    p = {"gaussian": 2.0, "power": power, "cubic": 1.0}[family]
    L = domain.edges
    return 1e-2 / L**p, 1e2 / L**p


def _coordinate_search(fun, z0, lo, hi, step0, rtol=1e-6, min_step=1e-4, max_evals=2000):
    z = np.array(z0, dtype=float)
    fz = fun(z)
    evals = 1
    step = np.array(step0, dtype=float)
    while np.max(step) > min_step and evals < max_evals:
        f_start = fz
        for k in range(z.size):
            for sign in (1.0, -1.0):
                trial = z.copy()
                trial[k] = np.clip(z[k] + sign * step[k], lo[k], hi[k])
                if trial[k] == z[k]:
                    continue
                ft = fun(trial)
                evals += 1
                if ft < fz:
                    z, fz = trial, ft
                    break
        gain = f_start - fz
        if not gain > rtol * max(abs(fz), 1.0):
            step *= 0.5
    return z, fz


def fit_hyperparameters(
    samples: SampleSet,
    trend: Callable = RegressionBasis(),
    family: str = "gaussian",
    bounds: Optional[tuple] = None,
    domain: Optional[Domain] = None,
    power: float = 2.0,
    nugget: float = 0.0,
    n_starts: int = 5,
    seed: int = 0,
    workers: int = 1,
    max_condition: float = MAX_CONDITION,
) -> CorrelationConfig:
    """Maximum-likelihood correlation parameters.

    Minimises the negative log-likelihood over ``log(theta)`` inside the box
    ``bounds`` with a coordinate search started from ``n_starts`` points of a
    seeded Latin-hypercube grid in log space.

    A theta is feasible when its correlation matrix factors without nugget and
    has condition estimate at most ``max_condition``, which keeps the fitted
    model an interpolator to near machine precision. If no start reaches a
    feasible theta the search is repeated allowing nugget escalation.
    """
    d = samples.d
    if bounds is None:
        if domain is None:
            lo = samples.points.min(axis=0)
            hi = samples.points.max(axis=0)
            hi = np.where(hi > lo, hi, lo + 1.0)
            domain = Domain(tuple(lo), tuple(hi))
        bounds = default_theta_bounds(domain, family, power)
    lo = np.log(np.broadcast_to(np.asarray(bounds[0], dtype=float), (d,)))
    hi = np.log(np.broadcast_to(np.asarray(bounds[1], dtype=float), (d,)))
    if not np.all(lo <= hi):
        raise ValueError("theta bounds must satisfy lower <= upper")

    F = np.asarray(trend(samples.points), dtype=float).reshape(samples.n, -1)

    def make_nll(cap):
        def nll(z):
            corr = CorrelationConfig(tuple(np.exp(z)), family, power, nugget)
            try:
                fac = _factorize(samples.points, samples.values, F, corr, max_condition=cap)
            except (SingularSystem, RankDeficientRegression):
                return np.inf
            value = -_full_log_likelihood(fac, samples.n, samples.values, F)
            return value if np.isfinite(value) else np.inf
        return nll

    rng = np.random.default_rng(seed)
    strata = np.column_stack([rng.permutation(n_starts) for _ in range(d)])
    starts = lo + (strata + 0.5) / n_starts * (hi - lo)
    step0 = np.maximum(0.25 * (hi - lo), 1e-3)

    def search(cap):
        nll = make_nll(cap)

        def run(z0):
            return _coordinate_search(nll, z0, lo, hi, step0)

        if workers > 1:
            with ThreadPoolExecutor(workers) as pool:
                results = list(pool.map(run, starts))
        else:
            results = [run(z0) for z0 in starts]
        best = None
        for z, fz in results:
            if np.isfinite(fz) and (best is None or fz < best[1]):
                best = (z, fz)
        return best

    best = search(max_condition)
    if best is None:
        log.warning("no well-conditioned theta in bounds; allowing nugget escalation")
        best = search(None)
    if best is None:
        raise AllStartsFailed("every likelihood start hit a singular correlation matrix")
    theta = np.clip(np.exp(best[0]), np.exp(lo), np.exp(hi))
    return CorrelationConfig(tuple(theta), family, power, nugget)


def fit_kriging(samples: SampleSet, basis: RegressionBasis = RegressionBasis(), family: str = "gaussian",
                domain: Optional[Domain] = None, bounds=None, seed: int = 0) -> KrigingModel:
    """Convenience: MLE hyperparameters followed by :func:`build_kriging`."""
    corr = fit_hyperparameters(samples, basis, family, bounds=bounds, domain=domain, seed=seed)
    return build_kriging(samples, basis, corr)
