"""Correspondence between database functions via per-axis affine maps.

Every entry ``j`` gets a transform ``q^j`` of length ``2d + 2`` laid out as
``(scale_1, shift_1, ..., scale_d, shift_d, value_scale, value_shift)``:

    xbar_k = x_k (1 + scale_k) + shift_k
    ybar_j(x) = y_j(xbar) (1 + value_scale) + value_shift

Entry 0 is the reference and keeps ``q = 0``. The remaining transforms
minimise the pairwise sum of squared differences over a quadrature rule on the
reference domain plus a ridge penalty ``delta/2 * sum |q^j|^2``.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass
from itertools import combinations
from typing import Optional, Sequence

import numpy as np

from .domain import Domain, as_points, fd_gradient
from .errors import DomainEscape
from .optim import GaussNewtonConfig, GaussNewtonResult, gauss_newton

log = logging.getLogger(__name__)

EXTENSION = 0.15
DEFAULT_GRID = 33


def n_params(d: int) -> int:
    return 2 * d + 2


# --- transforms -----------------------------------------------------------


def transform_point(x, q) -> np.ndarray:
    X = np.asarray(x, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    d = X.shape[1]
    q = np.asarray(q, dtype=float)
    out = X * (1.0 + q[0:2 * d:2]) + q[1:2 * d:2]
    return out[0] if single else out


def transform_value(y, q):
    q = np.asarray(q, dtype=float)
    return np.asarray(y) * (1.0 + q[-2]) + q[-1]


def inverse_transform(q) -> np.ndarray:
    """Parameters of the inverse affine map (input and value parts)."""
    q = np.asarray(q, dtype=float)
    d = (q.size - 2) // 2
    inv = np.empty_like(q)
    scale = 1.0 + q[0:2 * d:2]
    if np.any(scale == 0) or q[-2] == -1.0:
        raise ValueError("transform is not invertible")
    inv[0:2 * d:2] = 1.0 / scale - 1.0
    inv[1:2 * d:2] = -q[1:2 * d:2] / scale
    inv[-2] = 1.0 / (1.0 + q[-2]) - 1.0
    inv[-1] = -q[-1] / (1.0 + q[-2])
    return inv


def check_invertible(q) -> None:
    q = np.asarray(q, dtype=float)
    d = (q.size - 2) // 2
    if np.any(1.0 + q[0:2 * d:2] == 0) or 1.0 + q[-2] == 0:
        raise ValueError(f"non-invertible transform {q}")


# --- quadrature -----------------------------------------------------------


@dataclass(frozen=True)
class QuadratureRule:
    nodes: np.ndarray
    weights: np.ndarray

    @property
    def size(self) -> int:
        return self.weights.size

    def integrate(self, values) -> float:
        return float(self.weights @ np.asarray(values))


def trapezoid_rule(domain: Domain, size=DEFAULT_GRID) -> QuadratureRule:
    """Tensor trapezoid rule with ``size`` nodes per axis."""
    sizes = np.broadcast_to(np.asarray(size, dtype=int), (domain.d,))
    axes_w = []
    for lo, hi, k in zip(domain.lower, domain.upper, sizes):
        if k < 2:
            raise ValueError("trapezoid rule needs at least two nodes per axis")
        w = np.full(k, (hi - lo) / (k - 1))
        w[[0, -1]] *= 0.5
        axes_w.append(w)
    W = axes_w[0]
    for w in axes_w[1:]:
        W = np.outer(W, w).ravel()
    return QuadratureRule(domain.grid(sizes), W)


# --- the aligned database -------------------------------------------------


class AlignedDatabase:
    """Database entries together with their alignment transforms.

    ``evaluate`` returns the aligned values ``ybar_j(x)`` of all entries at
    once, optionally after a further transform ``p`` of the (already
    transformed) inputs, the construction used by the generic surrogate model.
    """

    def __init__(self, entries: Sequence, domain: Domain, transforms=None,
                 extended_domain: Optional[Domain] = None, fd_step: Optional[float] = None):
        if len(entries) < 1:
            raise ValueError("empty database")
        self.entries = list(entries)
        self.domain = domain
        self.extended_domain = extended_domain or domain.inflate(EXTENSION)
        P = n_params(domain.d)
        q = np.zeros((len(entries), P)) if transforms is None else np.array(transforms, dtype=float)
        if q.shape != (len(entries), P):
            raise ValueError(f"transforms must have shape {(len(entries), P)}")
        if np.any(q[0] != 0):
            raise ValueError("the reference entry must keep the identity transform")
        for row in q:
            check_invertible(row)
        q.setflags(write=False)
        self.transforms = q
        self.fd_step = 1e-5 * self.extended_domain.edges if fd_step is None else fd_step
        self.info: Optional[GaussNewtonResult] = None

    @property
    def m(self) -> int:
        return len(self.entries)

    @property
    def d(self) -> int:
        return self.domain.d

    def with_transforms(self, transforms) -> "AlignedDatabase":
        return AlignedDatabase(self.entries, self.domain, transforms, self.extended_domain, self.fd_step)

    def preimages(self, X, p=None) -> np.ndarray:
        """Points ``(n, m, d)`` at which each raw entry is evaluated."""
        X = as_points(X, self.d)
        d = self.d
        q = self.transforms
        Z = X[:, None, :] * (1.0 + q[None, :, 0:2 * d:2]) + q[None, :, 1:2 * d:2]
        if p is not None:
            p = np.asarray(p, dtype=float)
            Z = Z * (1.0 + p[0:2 * d:2]) + p[1:2 * d:2]
        return Z

    def _check(self, Z: np.ndarray) -> None:
        inside = self.extended_domain.contains(Z.reshape(-1, self.d))
        if not np.all(inside):
            bad = Z.reshape(-1, self.d)[~inside][0]
            raise DomainEscape(f"preimage {bad} leaves the validity region {self.extended_domain}")

    def raw_values(self, Z: np.ndarray) -> np.ndarray:
        n = Z.shape[0]
        return np.column_stack([np.asarray(y(Z[:, j, :]), dtype=float).reshape(n) for j, y in enumerate(self.entries)])

    def raw_gradients(self, Z: np.ndarray) -> np.ndarray:
        G = np.empty_like(Z)
        for j, y in enumerate(self.entries):
            grad = getattr(y, "gradient", None)
            has = getattr(y, "has_gradient", None)
            if grad is not None and (has is None or has()):
                G[:, j, :] = grad(Z[:, j, :])
            else:
                G[:, j, :] = fd_gradient(y, Z[:, j, :], self.fd_step)
        return G

    def evaluate(self, X, p=None) -> np.ndarray:
        """Aligned values, shape ``(n, m)``."""
        Z = self.preimages(X, p)
        self._check(Z)
        q = self.transforms
        return self.raw_values(Z) * (1.0 + q[:, -2]) + q[:, -1]

    def evaluate_with_gradient(self, X, p=None):
        """Aligned values ``(n, m)``, raw preimages ``(n, m, d)`` and the
        gradient of each raw entry at its preimage ``(n, m, d)``."""
        Z = self.preimages(X, p)
        self._check(Z)
        q = self.transforms
        V = self.raw_values(Z) * (1.0 + q[:, -2]) + q[:, -1]
        return V, Z, self.raw_gradients(Z)

    def manifest(self) -> dict:
        return {
            "m": self.m,
            "domain": self.domain.to_dict(),
            "extended_domain": self.extended_domain.to_dict(),
            "transforms": self.transforms.tolist(),
            "entries": [e.to_dict() if hasattr(e, "to_dict") else {"kind": "opaque"} for e in self.entries],
        }

    def content_hash(self) -> str:
        blob = json.dumps(self.manifest(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


# --- the alignment problem ------------------------------------------------


class AlignmentProblem:
    """Discretised alignment objective over the unknowns ``q^2, ..., q^m``.

    Residuals ``e_{i,j,k} = sqrt(w_i) (ybar_j - ybar_k)`` are ordered by pair
    ``(j, k)``, ``j < k``, then by node. The Jacobian has ``P * m`` columns,
    one block per entry; the reference block is identically zero in the
    unknowns but kept so the layout matches the full parameter vector.
    """

    def __init__(self, db: AlignedDatabase, quad: QuadratureRule, delta: float):
        if db.m < 2:
            raise ValueError("alignment needs at least two entries")
        if delta < 0:
            raise ValueError("delta must be nonnegative")
        self.db = db
        self.quad = quad
        self.delta = float(delta)
        self.m = db.m
        self.P = n_params(db.d)
        self.pairs = list(combinations(range(self.m), 2))
        self.scale = 1.0 / (self.m * (self.m - 1))
        self._sqw = np.sqrt(quad.weights)

    def full(self, z) -> np.ndarray:
        q = np.zeros((self.m, self.P))
        q[1:] = np.asarray(z, dtype=float).reshape(self.m - 1, self.P)
        return q

    def _db(self, z) -> AlignedDatabase:
        return self.db.with_transforms(self.full(z))

    def entry_blocks(self, z):
        """Aligned node values ``(N, m)`` and per-entry derivatives
        ``d ybar_j / d q^j`` with shape ``(N, m, P)``."""
        db = self._db(z)
        d = db.d
        q = db.transforms
        X = self.quad.nodes
        V, Z, G = db.evaluate_with_gradient(X)
        raw = (V - q[:, -1]) / (1.0 + q[:, -2])
        D = np.empty((X.shape[0], self.m, self.P))
        vs = 1.0 + q[:, -2]
        D[:, :, 0:2 * d:2] = vs[None, :, None] * G * X[:, None, :]
        D[:, :, 1:2 * d:2] = vs[None, :, None] * G
        D[:, :, -2] = raw
        D[:, :, -1] = 1.0
        return V, D

    def residuals(self, z) -> np.ndarray:
        V = self._db(z).evaluate(self.quad.nodes)
        return np.concatenate([self._sqw * (V[:, j] - V[:, k]) for j, k in self.pairs])

    def jacobian(self, z) -> np.ndarray:
        """Materialised ``J = de/dq``, shape ``(N m(m-1)/2, P m)``."""
        _, D = self.entry_blocks(z)
        N = self.quad.size
        J = np.zeros((N * len(self.pairs), self.P * self.m))
        for row, (j, k) in enumerate(self.pairs):
            rows = slice(row * N, (row + 1) * N)
            J[rows, j * self.P:(j + 1) * self.P] = self._sqw[:, None] * D[:, j, :]
            J[rows, k * self.P:(k + 1) * self.P] = -self._sqw[:, None] * D[:, k, :]
        return J

    def ssd(self, z) -> float:
        e = self.residuals(z)
        return self.scale * float(e @ e)

    def objective(self, z) -> float:
        z = np.asarray(z, dtype=float)
        return self.ssd(z) + 0.5 * self.delta * float(z @ z)

    def normal_equations(self, z, accumulate: bool = True):
        """Objective, gradient and Gauss-Newton Hessian in the unknowns.

        ``accumulate=True`` sums ``J^T J`` and ``J^T e`` pair by pair in fixed
        order without forming ``J``; ``False`` builds ``J`` explicitly.
        """
        z = np.asarray(z, dtype=float)
        P, m = self.P, self.m
        if accumulate:
            V, D = self.entry_blocks(z)
            W = self.quad.weights
            JtJ = np.zeros((P * m, P * m))
            Jte = np.zeros(P * m)
            sse = 0.0
            for j, k in self.pairs:
                diff = V[:, j] - V[:, k]
                sse += float(W @ (diff * diff))
                Dj = D[:, j, :]
                Dk = D[:, k, :]
                WDj = W[:, None] * Dj
                WDk = W[:, None] * Dk
                bj = slice(j * P, (j + 1) * P)
                bk = slice(k * P, (k + 1) * P)
                JtJ[bj, bj] += Dj.T @ WDj
                JtJ[bk, bk] += Dk.T @ WDk
                cross = Dj.T @ WDk
                JtJ[bj, bk] -= cross
                JtJ[bk, bj] -= cross.T
                Jte[bj] += WDj.T @ diff
                Jte[bk] -= WDk.T @ diff
        else:
            J = self.jacobian(z)
            e = self.residuals(z)
            JtJ = J.T @ J
            Jte = J.T @ e
            sse = float(e @ e)
        JtJ = JtJ[P:, P:]
        Jte = Jte[P:]
        f = self.scale * sse + 0.5 * self.delta * float(z @ z)
        g = 2.0 * self.scale * Jte + self.delta * z
        H = 2.0 * self.scale * JtJ + self.delta * np.eye(z.size)
        return f, g, 0.5 * (H + H.T)


def ssd_objective(db: AlignedDatabase, quad: QuadratureRule, delta: float) -> float:
    """Penalised alignment objective at the transforms stored in ``db``."""
    problem = AlignmentProblem(db, quad, delta)
    return problem.objective(db.transforms[1:].ravel())


def default_delta(db: AlignedDatabase, quad: QuadratureRule) -> float:
    """``1e-3`` times the mean squared value range of the entries."""
    V = db.evaluate(quad.nodes)
    ranges = V.max(axis=0) - V.min(axis=0)
    return 1e-3 * float(np.mean(ranges**2))


def align_database(
    entries: Sequence,
    domain: Domain,
    quad: Optional[QuadratureRule] = None,
    delta: Optional[float] = None,
    gn: GaussNewtonConfig = GaussNewtonConfig(),
    extended_domain: Optional[Domain] = None,
    initial=None,
    accumulate: bool = True,
) -> AlignedDatabase:
    """Solve for the transforms of entries ``1..m-1`` with Gauss-Newton.

    The returned database carries the solver record in ``info``.
    """
    db = AlignedDatabase(entries, domain, extended_domain=extended_domain)
    if db.m < 2:
        raise ValueError("alignment needs at least two entries")
    quad = quad or trapezoid_rule(domain)
    if delta is None:
        delta = default_delta(db, quad)
    problem = AlignmentProblem(db, quad, delta)
    z0 = np.zeros((db.m - 1) * problem.P) if initial is None else np.asarray(initial, dtype=float)[1:].ravel()
    result = gauss_newton(problem.objective, lambda z: problem.normal_equations(z, accumulate), z0, gn)
    aligned = db.with_transforms(problem.full(result.x))
    aligned.info = result
    log.info("alignment: objective %.6g -> %.6g (%s, %d iterations)",
             result.initial_objective, result.objective, result.status, result.iterations)
    return aligned
