"""Proper orthogonal decomposition of an aligned database.

The basis is obtained from the ``m x m`` covariance matrix of the entries
under a quadrature rule. With eigenpairs ``C v^k = lambda_k v^k`` the basis
functions are ``psi(x) = ybar(x) V_l Sigma_l^{-1}``, evaluated lazily through
the database so each call costs one evaluation of every entry.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .alignment import AlignedDatabase, QuadratureRule
from .errors import DegenerateSpectrum

NEGLIGIBLE = 1e-12


def covariance_matrix(db: AlignedDatabase, quad: QuadratureRule, mean_centered: bool = False) -> np.ndarray:
    """``C_ij = sum_k w_k ybar_i(x_k) ybar_j(x_k)``; symmetric by construction."""
    V = db.evaluate(quad.nodes)
    if mean_centered:
        V = V - V.mean(axis=1, keepdims=True)
    C = V.T @ (quad.weights[:, None] * V)
    upper = np.triu(C)
    return upper + np.triu(C, 1).T


def select_rank(eigenvalues, threshold: float) -> int:
    """Smallest ``l`` whose leading eigenvalues hold ``threshold`` of the total.

    Eigenvalues below ``1e-12 * lambda_1`` cannot be selected.
    """
    lam = np.asarray(eigenvalues, dtype=float)
    if not 0.0 < threshold <= 1.0:
        raise ValueError("threshold must lie in (0, 1]")
    if lam.size == 0 or lam[0] <= 0:
        raise DegenerateSpectrum("no positive eigenvalue", numerical_rank=0)
    usable = int(np.sum(lam > NEGLIGIBLE * lam[0]))
    total = float(np.sum(np.clip(lam, 0.0, None)))
    ratios = np.cumsum(lam[:usable]) / total
    hits = np.flatnonzero(ratios >= threshold - 1e-12)
    if hits.size == 0:
        raise DegenerateSpectrum(
            f"threshold {threshold} needs eigenvalues below the numerical rank {usable}",
            numerical_rank=usable,
        )
    return int(hits[0]) + 1


@dataclass(frozen=True)
class PodBasis:
    """POD basis of rank ``rank`` tied to an aligned database.

    ``vectors`` holds all ``m`` eigenvectors as columns; ``V_l`` and
    ``Sigma_l`` are the leading blocks.
    """

    eigenvalues: np.ndarray
    vectors: np.ndarray
    rank: int
    threshold: float
    db: Optional[AlignedDatabase] = field(default=None, compare=False, repr=False)
    mean_centered: bool = False

    @property
    def m(self) -> int:
        return self.eigenvalues.size

    @property
    def V_l(self) -> np.ndarray:
        return self.vectors[:, : self.rank]

    @property
    def sigma_l(self) -> np.ndarray:
        return np.sqrt(self.eigenvalues[: self.rank])

    @property
    def coefficients(self) -> np.ndarray:
        """``V_l Sigma_l^{-1}``, mapping entry values to basis values."""
        C = self.V_l / self.sigma_l
        if self.mean_centered:
            C = C - C.mean(axis=0, keepdims=True)
        return C

    @property
    def offset(self) -> np.ndarray:
        """Weights of the database mean added back to every reconstruction."""
        return np.full(self.m, 1.0 / self.m) if self.mean_centered else np.zeros(self.m)

    def basis_from_values(self, Y: np.ndarray) -> np.ndarray:
        return Y @ self.coefficients

    def __call__(self, X, p=None) -> np.ndarray:
        if self.db is None:
            raise ValueError("basis is detached from its database")
        return self.basis_from_values(self.db.evaluate(X, p))

    def with_rank(self, rank: int) -> "PodBasis":
        if not 1 <= rank <= self.m:
            raise ValueError("rank out of range")
        return PodBasis(self.eigenvalues, self.vectors, rank, self.threshold, self.db, self.mean_centered)

    def to_dict(self) -> dict:
        return {
            "eigenvalues": self.eigenvalues.tolist(),
            "V_l": self.V_l.tolist(),
            "vectors": self.vectors.tolist(),
            "threshold": self.threshold,
            "rank": self.rank,
            "mean_centered": self.mean_centered,
        }

    def content_hash(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def compute_pod(C: np.ndarray, threshold: float = 0.999, db: Optional[AlignedDatabase] = None,
                mean_centered: bool = False) -> PodBasis:
    C = np.asarray(C, dtype=float)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise ValueError("covariance matrix must be square")
    lam, V = np.linalg.eigh(0.5 * (C + C.T))
    order = np.argsort(lam)[::-1]
    lam = lam[order]
    V = _fix_signs(V[:, order])
    if lam[0] <= 0:
        raise DegenerateSpectrum("all eigenvalues are nonpositive", numerical_rank=0)
    rank = select_rank(lam, threshold)
    return PodBasis(lam, V, rank, threshold, db, mean_centered)


def pod_from_database(db: AlignedDatabase, quad: QuadratureRule, threshold: float = 0.999,
                      mean_centered: bool = False) -> PodBasis:
    return compute_pod(covariance_matrix(db, quad, mean_centered), threshold, db, mean_centered)


def basis_eval(basis: PodBasis, x) -> np.ndarray:
    return basis(x)


def pod_from_dict(data: dict, db: Optional[AlignedDatabase] = None) -> PodBasis:
    """Inverse of :meth:`PodBasis.to_dict`."""
    lam = np.asarray(data["eigenvalues"], dtype=float)
    V = np.asarray(data["vectors"], dtype=float)
    return PodBasis(lam, V, int(data["rank"]), float(data["threshold"]), db, bool(data["mean_centered"]))
