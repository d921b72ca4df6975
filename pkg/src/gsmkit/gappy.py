"""Gappy POD fits and the generic surrogate model.

A POD basis is fitted to scattered samples ``(x_i, phi_i)`` of a new function.
The linear fit solves ``min |phi - Psi a|`` with a QR factorisation of the
design matrix ``Psi_ik = psi_k(x_i)``. The transformed fit adds parameters
``p`` of length ``2d + 1``, ``(scale_1, shift_1, ..., scale_d, shift_d,
value_shift)``, applied on top of the alignment transforms:

    phi~(x) = ybar(xbarbar(p)) V_l Sigma_l^{-1} a + p_value_shift

and minimises ``1/2 |phi - phi~|^2 + delta/2 |p|^2`` with Gauss-Newton.
There is no value scale in ``p`` since it would duplicate a rescaling of ``a``.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import linalg

from .domain import SampleSet, as_points
from .errors import RankDeficient
from .optim import GaussNewtonConfig, GaussNewtonResult, gauss_newton
from .pod import PodBasis

log = logging.getLogger(__name__)

RANK_RTOL = 1e-10


def n_gsm_params(d: int) -> int:
    return 2 * d + 1


def design_matrix(basis: PodBasis, X, p=None) -> np.ndarray:
    """``Psi`` with one batched evaluation of all database entries."""
    return basis(as_points(X, basis.db.d), p)


def _lstsq_qr(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    n, l = A.shape
    if n < l:
        raise RankDeficient(f"{n} samples cannot determine {l} coefficients")
    Q, R = linalg.qr(A, mode="economic")
    diag = np.abs(np.diag(R))
    if diag.min() <= RANK_RTOL * max(diag.max(), np.finfo(float).tiny):
        raise RankDeficient("design matrix is numerically rank deficient")
    return linalg.solve_triangular(R, Q.T @ b)


def gappy_fit_linear(basis: PodBasis, samples: SampleSet) -> np.ndarray:
    """Least-squares POD coefficients for the samples, via QR of ``Psi``.

    Raises
    ------
    RankDeficient
        If ``n < l`` or ``Psi`` is numerically rank deficient.
    """
    Psi = design_matrix(basis, samples.points)
    return _lstsq_qr(Psi, samples.values)


@dataclass(frozen=True)
class GenericSurrogateModel:
    """POD basis plus fitted coefficients and input/value transform ``p``.

    ``a_y`` are the weights on the aligned database entries; evaluation costs
    one pass over the entries.
    """

    basis: PodBasis
    a_psi: np.ndarray
    p: np.ndarray
    residual: float
    transformed: bool = False
    warning: Optional[str] = None
    info: Optional[GaussNewtonResult] = field(default=None, compare=False, repr=False)

    @property
    def d(self) -> int:
        return self.basis.db.d

    @property
    def a_y(self) -> np.ndarray:
        return self.basis.coefficients @ self.a_psi + self.basis.offset

    def __call__(self, X) -> np.ndarray:
        X = as_points(X, self.d)
        return self.basis.db.evaluate(X, self.p[:-1]) @ self.a_y + self.p[-1]

    def predict(self, X) -> np.ndarray:
        return self(X)

    def to_dict(self) -> dict:
        return {
            "a_psi": self.a_psi.tolist(),
            "a_y": self.a_y.tolist(),
            "p": self.p.tolist(),
            "residual": self.residual,
            "transformed": self.transformed,
            "warning": self.warning,
        }

    def content_hash(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


def gsm_eval(gsm: GenericSurrogateModel, x) -> np.ndarray:
    return gsm(x)


def linear_gsm(basis: PodBasis, samples: SampleSet, warning: Optional[str] = None) -> GenericSurrogateModel:
    """Linear gappy fit wrapped as a model with ``p = 0``."""
    a = gappy_fit_linear(basis, samples)
    r = design_matrix(basis, samples.points) @ a - samples.values
    return GenericSurrogateModel(basis, a, np.zeros(n_gsm_params(basis.db.d)), float(r @ r), False, warning)


class GappyProblem:
    """Penalised nonlinear least squares over ``z = (a, p)``.

    Besides the sample points, trial transforms must keep the preimages of
    the corners of the reference domain inside the validity region, so the
    fitted model is evaluable on the whole domain.
    """

    def __init__(self, basis: PodBasis, samples: SampleSet, delta: float):
        if basis.db is None:
            raise ValueError("basis is detached from its database")
        if delta < 0:
            raise ValueError("delta must be nonnegative")
        self.basis = basis
        self.samples = samples
        self.delta = float(delta)
        self.db = basis.db
        self.l = basis.rank
        self.d = self.db.d
        lo, hi = self.db.domain.lo, self.db.domain.hi
        grids = np.meshgrid(*[[a, b] for a, b in zip(lo, hi)], indexing="ij")
        self._corners = np.column_stack([g.ravel() for g in grids])

    def split(self, z):
        z = np.asarray(z, dtype=float)
        return z[: self.l], z[self.l:]

    def _weights(self, a):
        return self.basis.coefficients @ a + self.basis.offset

    def residuals(self, z) -> np.ndarray:
        """``phi~(x_i) - phi_i``."""
        a, p = self.split(z)
        self.db._check(self.db.preimages(self._corners, p[:-1]))
        V = self.db.evaluate(self.samples.points, p[:-1])
        return V @ self._weights(a) + p[-1] - self.samples.values

    def jacobian(self, z) -> np.ndarray:
        a, p = self.split(z)
        d = self.d
        X = self.samples.points
        V, Z, G = self.db.evaluate_with_gradient(X, p[:-1])
        q = self.db.transforms
        wy = self._weights(a) * (1.0 + q[:, -2])
        Xbar = self.db.preimages(X)
        # d phi~ / d(p shift_k) = sum_j wy_j dy_j/dx_k; scale multiplies by xbar_k
        dshift = np.einsum("nmd,m->nmd", G, wy)
        J = np.empty((X.shape[0], self.l + n_gsm_params(d)))
        J[:, : self.l] = V @ self.basis.coefficients
        J[:, self.l + 1:self.l + 2 * d:2] = dshift.sum(axis=1)
        J[:, self.l:self.l + 2 * d:2] = np.sum(dshift * Xbar, axis=1)
        J[:, -1] = 1.0
        return J

    def objective(self, z) -> float:
        _, p = self.split(z)
        r = self.residuals(z)
        return 0.5 * float(r @ r) + 0.5 * self.delta * float(p @ p)

    def linearize(self, z):
        z = np.asarray(z, dtype=float)
        r = self.residuals(z)
        J = self.jacobian(z)
        pen = np.zeros(z.size)
        pen[self.l:] = self.delta
        f = 0.5 * float(r @ r) + 0.5 * self.delta * float(z[self.l:] @ z[self.l:])
        g = J.T @ r + pen * z
        H = J.T @ J + np.diag(pen)
        return f, g, 0.5 * (H + H.T)


def default_gappy_delta(samples: SampleSet) -> float:
    """``1e-2 * var(phi) * n``."""
    return 1e-2 * float(np.var(samples.values)) * samples.n


def gappy_fit_transformed(
    basis: PodBasis,
    samples: SampleSet,
    delta: Optional[float] = None,
    gn: GaussNewtonConfig = GaussNewtonConfig(),
    guard: bool = True,
) -> GenericSurrogateModel:
    """Joint fit of coefficients and transform, started from the linear fit.

    With ``guard`` set and fewer than ``l + 2d + 1`` samples the linear fit
    is returned instead, flagged through ``warning``.
    """
    d = basis.db.d
    needed = basis.rank + n_gsm_params(d)
    if guard and samples.n < needed:
        msg = f"{samples.n} samples < {needed} unknowns; transformed fit skipped"
        log.info(msg)
        return linear_gsm(basis, samples, warning=msg)
    if delta is None:
        delta = default_gappy_delta(samples)
    problem = GappyProblem(basis, samples, delta)
    a0 = gappy_fit_linear(basis, samples)
    z0 = np.concatenate([a0, np.zeros(n_gsm_params(d))])
    result = gauss_newton(problem.objective, problem.linearize, z0, gn)
    a, p = problem.split(result.x)
    r = problem.residuals(result.x)
    return GenericSurrogateModel(basis, a, p, float(r @ r), True, None, result)

