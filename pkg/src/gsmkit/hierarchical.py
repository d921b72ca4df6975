"""Hierarchical Kriging with a low-fidelity model as the regression trend.

The trend column is ``Phi_i = lofi(x_i)`` with a single coefficient ``beta``,
so the model is ordinary Kriging machinery with ``K = 1``:

    phi^(x) = (r(x), lofi(x))^T solution
            = beta lofi(x) + r(x)^T R^{-1} (phi - beta Phi)

The first form is what :class:`HierarchicalKrigingModel` evaluates; the second
is exposed as :func:`hk_predict_beta_form` for cross-checks.
"""

from __future__ import annotations

import logging
from typing import Callable, Optional

import numpy as np

from .domain import Domain, SampleSet, as_points
from .errors import ZeroTrend
from .kriging import CorrelationConfig, KrigingModel, correlation_matrix, fit_hyperparameters

log = logging.getLogger(__name__)

ZERO_TREND_RTOL = 1e-12


class _LofiTrend:
    def __init__(self, lofi: Callable, d: int):
        self.lofi = lofi
        self.d = d

    def __call__(self, X) -> np.ndarray:
        X = as_points(X, self.d)
        return np.asarray(self.lofi(X), dtype=float).reshape(-1, 1)


def _check_trend(samples: SampleSet, trend: _LofiTrend) -> None:
    Phi = trend(samples.points)[:, 0]
    scale = max(1.0, float(np.max(np.abs(samples.values))))
    if not np.max(np.abs(Phi)) > ZERO_TREND_RTOL * scale:
        raise ZeroTrend("low-fidelity trend vanishes at every sample; use ordinary Kriging instead")


class HierarchicalKrigingModel(KrigingModel):
    """Kriging model whose only regression function is ``lofi``."""

    def __init__(self, samples: SampleSet, lofi: Callable, corr: CorrelationConfig):
        trend = _LofiTrend(lofi, samples.d)
        _check_trend(samples, trend)
        super().__init__(samples, corr, trend, trend_label="hierarchical")
        self.lofi = lofi

    @property
    def beta_scalar(self) -> float:
        return float(self.beta[0])


def build_hk(samples: SampleSet, gsm: Callable, corr: CorrelationConfig) -> HierarchicalKrigingModel:
    """Build hierarchical Kriging on top of ``gsm``.

    Raises
    ------
    ZeroTrend
        If the trend column is zero within tolerance.
    SingularSystem
        If the correlation matrix cannot be factored.
    """
    if len(corr.theta) != samples.d:
        raise ValueError("theta dimension does not match the samples")
    return HierarchicalKrigingModel(samples, gsm, corr)


def hk_predict(model: HierarchicalKrigingModel, x) -> np.ndarray:
    return model.predict(x)


def hk_predict_mse(model: HierarchicalKrigingModel, x) -> np.ndarray:
    return model.predict_mse(x)


def hk_predict_beta_form(model: HierarchicalKrigingModel, x) -> np.ndarray:
    """``beta lofi(x) + r(x)^T R^{-1}(phi - beta Phi)`` by a dense solve."""
    X = as_points(x, model.d)
    pts = model.samples.points
    R = correlation_matrix(pts, pts, model.corr) + model.nugget * np.eye(model.n)
    Phi = model.F[:, 0]
    phi = model.samples.values
    Rinv_Phi = np.linalg.solve(R, Phi)
    Rinv_phi = np.linalg.solve(R, phi)
    beta = (Phi @ Rinv_phi) / (Phi @ Rinv_Phi)
    r = correlation_matrix(X, pts, model.corr)
    return beta * model.trend(X)[:, 0] + r @ np.linalg.solve(R, phi - beta * Phi)


def fit_hk(
    samples: SampleSet,
    gsm: Callable,
    family: str = "gaussian",
    domain: Optional[Domain] = None,
    theta: Optional[CorrelationConfig] = None,
    seed: int = 0,
) -> HierarchicalKrigingModel:
    """Fit ``theta`` by maximum likelihood on the hierarchical model itself,
    or reuse the correlation settings passed in ``theta``."""
    trend = _LofiTrend(gsm, samples.d)
    _check_trend(samples, trend)
    if theta is None:
        theta = fit_hyperparameters(samples, trend, family, domain=domain, seed=seed)
    return build_hk(samples, gsm, theta)
