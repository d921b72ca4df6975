"""Box domains, sample sets and the evaluable-surface contract.

A *response surface* is anything with ``__call__(X) -> values`` taking an
``(n, d)`` array and returning ``(n,)`` values. Surfaces may additionally
provide ``gradient(X) -> (n, d)``; when they do not, :func:`surface_gradient`
falls back to central finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Protocol, runtime_checkable

import numpy as np

DUPLICATE_RTOL = 1e-12


@runtime_checkable
class ResponseSurface(Protocol):
    def __call__(self, X: np.ndarray) -> np.ndarray: ...


def as_points(X, d: Optional[int] = None) -> np.ndarray:
    """Coerce ``X`` to a 2-D float array of shape ``(n, d)``.

    A 1-D input is read as a single point when ``d`` equals its length and as
    ``n`` one-dimensional points when ``d == 1``.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 0:
        X = X.reshape(1, 1)
    elif X.ndim == 1:
        X = X.reshape(-1, 1) if d == 1 else X.reshape(1, -1)
    if d is not None and X.shape[1] != d:
        raise ValueError(f"expected points of dimension {d}, got {X.shape[1]}")
    return X


@dataclass(frozen=True)
class Domain:
    """Axis-aligned box ``[lower, upper]`` in ``d`` dimensions."""

    lower: tuple
    upper: tuple

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1 or lo.size < 1:
            raise ValueError("lower and upper must be 1-D of equal length >= 1")
        if not np.all(lo < hi):
            raise ValueError(f"degenerate domain: lower={lo}, upper={hi}")
        object.__setattr__(self, "lower", tuple(float(v) for v in lo))
        object.__setattr__(self, "upper", tuple(float(v) for v in hi))

    @property
    def d(self) -> int:
        return len(self.lower)

    @property
    def lo(self) -> np.ndarray:
        return np.array(self.lower)

    @property
    def hi(self) -> np.ndarray:
        return np.array(self.upper)

    @property
    def edges(self) -> np.ndarray:
        return self.hi - self.lo

    @property
    def volume(self) -> float:
        return float(np.prod(self.edges))

    def contains(self, X, rtol: float = 1e-12) -> np.ndarray:
        X = as_points(X, self.d)
        slack = rtol * self.edges
        return np.all((X >= self.lo - slack) & (X <= self.hi + slack), axis=1)

    def inflate(self, fraction: float) -> "Domain":
        """Grow every side by ``fraction`` of the edge length."""
        pad = fraction * self.edges
        return Domain(tuple(self.lo - pad), tuple(self.hi + pad))

    def to_unit(self, X) -> np.ndarray:
        return (as_points(X, self.d) - self.lo) / self.edges

    def from_unit(self, U) -> np.ndarray:
        return self.lo + as_points(U, self.d) * self.edges

    def grid(self, size) -> np.ndarray:
        """Tensor grid with ``size`` points per axis (int or per-axis sequence)."""
        sizes = np.broadcast_to(np.asarray(size, dtype=int), (self.d,))
        axes = [np.linspace(lo, hi, int(k)) for lo, hi, k in zip(self.lower, self.upper, sizes)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.column_stack([g.ravel() for g in mesh])

    def to_dict(self) -> dict:
        return {"lower": list(self.lower), "upper": list(self.upper)}

    @classmethod
    def from_dict(cls, data: dict) -> "Domain":
        return cls(tuple(data["lower"]), tuple(data["upper"]))


def find_duplicates(points: np.ndarray, scale: np.ndarray, rtol: float = DUPLICATE_RTOL):
    """Return index pairs ``(i, j)``, ``i < j``, of coinciding points."""
    points = np.asarray(points, dtype=float)
    tol = rtol * np.maximum(scale, 1.0)
    pairs = []
    for i in range(len(points) - 1):
        close = np.all(np.abs(points[i + 1:] - points[i]) <= tol, axis=1)
        pairs.extend((i, i + 1 + j) for j in np.flatnonzero(close))
    return pairs


@dataclass(frozen=True)
class SampleSet:
    """Scattered evaluations ``values[i] = y(points[i])``."""

    points: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        values = np.atleast_1d(np.asarray(self.values, dtype=float)).ravel()
        points = np.asarray(self.points, dtype=float)
        if points.ndim == 1:
            points = points.reshape(len(values), -1)
        if points.shape[0] != values.shape[0]:
            raise ValueError("points and values disagree in length")
        if points.shape[0] < 1:
            raise ValueError("a sample set needs at least one point")
        if not (np.all(np.isfinite(points)) and np.all(np.isfinite(values))):
            raise ValueError("sample set contains non-finite entries")
        scale = np.max(np.abs(points), axis=0)
        dup = find_duplicates(points, scale)
        if dup:
            raise ValueError(f"duplicate sample points at indices {dup[0]}")
        points.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def check_inside(self, domain: Domain) -> None:
        if not np.all(domain.contains(self.points)):
            raise ValueError("sample points outside the domain")

    def append(self, x, value) -> "SampleSet":
        x = as_points(x, self.d)
        return SampleSet(np.vstack([self.points, x]), np.append(self.values, value))


class FunctionSurface:
    """Wrap a vectorised callable (and optional gradient) as a response surface."""

    def __init__(self, fn: Callable, gradient: Optional[Callable] = None, d: Optional[int] = None):
        self.fn = fn
        self._gradient = gradient
        self.d = d

    def __call__(self, X):
        X = as_points(X, self.d)
        return np.asarray(self.fn(X), dtype=float).reshape(X.shape[0])

    def has_gradient(self) -> bool:
        return self._gradient is not None

    def gradient(self, X):
        X = as_points(X, self.d)
        if self._gradient is None:
            return fd_gradient(self, X)
        return np.asarray(self._gradient(X), dtype=float).reshape(X.shape)


def fd_gradient(surface, X: np.ndarray, step=None) -> np.ndarray:
    """Central finite-difference gradient, step per axis (default 1e-5)."""
    X = np.asarray(X, dtype=float)
    n, d = X.shape
    h = np.broadcast_to(np.asarray(1e-5 if step is None else step, dtype=float), (d,))
    G = np.empty((n, d))
    for k in range(d):
        E = np.zeros(d)
        E[k] = h[k]
        G[:, k] = (surface(X + E) - surface(X - E)) / (2.0 * h[k])
    return G


def surface_gradient(surface, X: np.ndarray, step=None) -> np.ndarray:
    """Analytic gradient when the surface offers one, finite differences otherwise."""
    grad = getattr(surface, "gradient", None)
    has = getattr(surface, "has_gradient", None)
    if grad is not None and (has is None or has()):
        return np.asarray(grad(X), dtype=float).reshape(np.shape(X))
    return fd_gradient(surface, X, step)
