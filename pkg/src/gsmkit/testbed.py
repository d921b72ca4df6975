"""Synthetic lift-like response family, validation grids and error metrics.

Members live on ``[0.2, 0.9] x [-4, 12]`` (Mach number, angle of attack) and
combine three features: a linear trend, a smooth tanh step that saturates the
response towards high angle of attack, and a Gaussian bump near the upper
right corner. Parameter perturbations give a family whose plain POD spectrum
decays quickly; optional affine distortions, drawn from the same class the
alignment searches over, give databases that need aligning.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .domain import Domain, as_points
from .errors import DegenerateValidation

REFERENCE_DOMAIN = Domain((0.2, -4.0), (0.9, 12.0))


@dataclass(frozen=True)
class FamilyParams:
    """Parameters of one family member.

    The linear part ``slope . x + intercept`` is in raw coordinates; ridge and
    bump are placed in unit coordinates of ``domain``. ``input_shift`` moves
    the whole member: ``f(x) = core(x - input_shift)``.
    """

    slope: tuple = (0.3, 0.1)
    intercept: float = 0.2
    ridge_amp: float = -0.6
    ridge_loc: float = 1.0
    ridge_width: float = 0.2
    ridge_tilt: float = 0.5
    bump_height: float = 0.3
    bump_center: tuple = (0.85, 0.85)
    bump_radius: float = 0.2
    input_shift: tuple = (0.0, 0.0)
    domain: Domain = REFERENCE_DOMAIN

    def to_dict(self) -> dict:
        out = asdict(self)
        out["domain"] = self.domain.to_dict()
        for key in ("slope", "bump_center", "input_shift"):
            out[key] = list(out[key])
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "FamilyParams":
        data = dict(data)
        data["domain"] = Domain.from_dict(data["domain"])
        for key in ("slope", "bump_center", "input_shift"):
            data[key] = tuple(data[key])
        return cls(**data)


class FamilyMember:
    """Closed-form member with analytic gradient."""

    def __init__(self, params: FamilyParams):
        self.params = params
        self.d = 2
        self._lo = params.domain.lo
        self._edge = params.domain.edges

    def _parts(self, X):
        P = self.params
        Z = as_points(X, 2) - np.asarray(P.input_shift)
        U = (Z - self._lo) / self._edge
        s = (P.ridge_tilt * U[:, 0] + U[:, 1] - P.ridge_loc) / P.ridge_width
        diff = U - np.asarray(P.bump_center)
        g = np.exp(-np.sum(diff**2, axis=1) / P.bump_radius**2)
        return Z, U, s, diff, g

    def __call__(self, X) -> np.ndarray:
        P = self.params
        Z, U, s, diff, g = self._parts(X)
        return Z @ np.asarray(P.slope) + P.intercept + P.ridge_amp * np.tanh(s) + P.bump_height * g

    def has_gradient(self) -> bool:
        return True

    def gradient(self, X) -> np.ndarray:
        P = self.params
        Z, U, s, diff, g = self._parts(X)
        sech2 = 1.0 - np.tanh(s) ** 2
        dU = np.empty_like(U)
        dU[:, 0] = P.ridge_amp * sech2 * P.ridge_tilt / P.ridge_width
        dU[:, 1] = P.ridge_amp * sech2 / P.ridge_width
        dU += P.bump_height * g[:, None] * (-2.0 * diff / P.bump_radius**2)
        return np.asarray(P.slope) + dU / self._edge

    def to_dict(self) -> dict:
        return {"kind": "family", "params": self.params.to_dict()}


class DistortedSurface:
    """``y(z) = (g((z - t) / (1 + s)) - q_vt) / (1 + q_vs)``.

    Applying the alignment transform with parameters ``q`` to this surface
    recovers ``g`` exactly.
    """

    def __init__(self, base, q):
        self.base = base
        self.q = np.asarray(q, dtype=float)
        self.d = base.d
        d = self.d
        self._scale = 1.0 + self.q[0:2 * d:2]
        self._shift = self.q[1:2 * d:2]
        self._vs = 1.0 + self.q[2 * d]
        self._vt = self.q[2 * d + 1]

    def __call__(self, X):
        Z = (as_points(X, self.d) - self._shift) / self._scale
        return (self.base(Z) - self._vt) / self._vs

    def has_gradient(self) -> bool:
        return True

    def gradient(self, X):
        Z = (as_points(X, self.d) - self._shift) / self._scale
        return self.base.gradient(Z) / self._scale / self._vs

    def to_dict(self) -> dict:
        return {"kind": "distorted", "q": self.q.tolist(), "base": self.base.to_dict()}


def make_family_member(params: FamilyParams) -> FamilyMember:
    return FamilyMember(params)


def surface_from_dict(data: dict):
    if data["kind"] == "family":
        return FamilyMember(FamilyParams.from_dict(data["params"]))
    if data["kind"] == "distorted":
        return DistortedSurface(surface_from_dict(data["base"]), data["q"])
    raise ValueError(f"unknown surface kind {data['kind']!r}")


@dataclass(frozen=True)
class FamilySpread:
    """Relative size of the seeded parameter perturbations."""

    slope: float = 0.045
    intercept: float = 0.015
    ridge_amp: float = 0.045
    ridge_loc: float = 0.018
    ridge_width: float = 0.045
    bump_height: float = 0.06
    bump_center: float = 0.015
    bump_radius: float = 0.03


@dataclass(frozen=True)
class DistortionSpread:
    """Half-widths of the uniform draws for ground-truth transforms.

    Input scales are relative, input shifts are fractions of the edge
    length, value shift is absolute.
    """

    scale: float = 0.03
    shift: float = 0.1
    value_scale: float = 0.1
    value_shift: float = 0.1


def perturb(base: FamilyParams, rng: np.random.Generator, spread: FamilySpread = FamilySpread()) -> FamilyParams:
    def rel(v, w):
        return v * (1.0 + w * rng.uniform(-1, 1))

    return replace(
        base,
        slope=tuple(rel(s, spread.slope) for s in base.slope),
        intercept=base.intercept + spread.intercept * rng.uniform(-1, 1),
        ridge_amp=rel(base.ridge_amp, spread.ridge_amp),
        ridge_loc=base.ridge_loc + spread.ridge_loc * rng.uniform(-1, 1),
        ridge_width=rel(base.ridge_width, spread.ridge_width),
        bump_height=rel(base.bump_height, spread.bump_height),
        bump_center=tuple(c + spread.bump_center * rng.uniform(-1, 1) for c in base.bump_center),
        bump_radius=rel(base.bump_radius, spread.bump_radius),
    )


def draw_distortion(rng: np.random.Generator, domain: Domain, spread: DistortionSpread = DistortionSpread()) -> np.ndarray:
    q = []
    for edge in domain.edges:
        q += [spread.scale * rng.uniform(-1, 1), spread.shift * edge * rng.uniform(-1, 1)]
    q += [spread.value_scale * rng.uniform(-1, 1), spread.value_shift * rng.uniform(-1, 1)]
    return np.array(q)


@dataclass
class SyntheticDatabase:
    entries: list
    params: list
    true_q: np.ndarray
    seed: int
    distortions: bool
    domain: Domain = REFERENCE_DOMAIN

    def manifest(self) -> dict:
        return {
            "seed": self.seed,
            "distortions": self.distortions,
            "domain": self.domain.to_dict(),
            "params": [p.to_dict() for p in self.params],
            "true_q": self.true_q.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.manifest(), sort_keys=True, indent=2)


def build_synthetic_database(
    m: int,
    seed: int = 0,
    distortions: bool = False,
    base: FamilyParams = FamilyParams(),
    spread: FamilySpread = FamilySpread(),
    distortion_spread: DistortionSpread = DistortionSpread(),
) -> SyntheticDatabase:
    """``m`` seeded members; entry 0 is never distorted (alignment reference)."""
    if m < 2:
        raise ValueError("a database needs at least two members")
    rng = np.random.default_rng(seed)
    params = [perturb(base, rng, spread) for _ in range(m)]
    true_q = np.zeros((m, 2 * base.domain.d + 2))
    entries = []
    for j, p in enumerate(params):
        member = FamilyMember(p)
        if distortions and j > 0:
            true_q[j] = draw_distortion(rng, base.domain, distortion_spread)
            entries.append(DistortedSurface(member, true_q[j]))
        else:
            entries.append(member)
    return SyntheticDatabase(entries, params, true_q, seed, distortions, base.domain)


def holdout_member(seed: int, base: FamilyParams = FamilyParams(), spread: FamilySpread = FamilySpread(),
                   distortion=None) -> object:
    """A fresh member not contained in any database built from other seeds."""
    rng = np.random.default_rng([seed, 7919])
    member = FamilyMember(perturb(base, rng, spread))
    if distortion is not None:
        return DistortedSurface(member, distortion)
    return member


# --- validation -----------------------------------------------------------


@dataclass(frozen=True)
class ValidationGrid:
    points: np.ndarray
    values: np.ndarray
    sigma: float = field(init=False)

    def __post_init__(self):
        sigma = float(np.std(self.values))
        object.__setattr__(self, "sigma", sigma)

    @property
    def size(self) -> int:
        return len(self.values)

    def to_csv(self) -> str:
        d = self.points.shape[1]
        lines = [",".join([f"x{k + 1}" for k in range(d)] + ["value"])]
        for x, v in zip(self.points, self.values):
            lines.append(",".join(repr(float(c)) for c in (*x, v)))
        return "\n".join(lines) + "\n"


def validation_grid(oracle, domain: Domain = REFERENCE_DOMAIN, size: int = 40) -> ValidationGrid:
    X = domain.grid(size)
    return ValidationGrid(X, np.asarray(oracle(X), dtype=float))


def error_metrics(model, grid: ValidationGrid):
    """``(eta_1, eta_inf)``: mean and max absolute error over the grid, both
    divided by the standard deviation of the oracle values."""
    if not grid.sigma > 0:
        raise DegenerateValidation("oracle values on the validation grid are constant")
    pred = model(grid.points) if callable(model) else np.asarray(model)
    err = np.abs(np.asarray(pred, dtype=float) - grid.values)
    return float(err.sum() / (grid.sigma * grid.size)), float(err.max() / grid.sigma)
