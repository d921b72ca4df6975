"""Latin hypercube designs and the two adaptive infill strategies.

``mse``: the next sample is the candidate with the largest predicted mean
squared error of the assessed model. ``discrepancy``: the candidate where the
hierarchical and the ordinary Kriging predictions differ most. Both take the
argmax over a finite candidate grid, lowest index on ties, with already
sampled candidates masked out.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .domain import Domain, SampleSet, as_points
from .pod import PodBasis
from .pipeline import FittedModels, SurrogateConfig, fit_models
from .testbed import ValidationGrid, error_metrics, validation_grid

log = logging.getLogger(__name__)

STRATEGIES = ("mse", "discrepancy")
DUPLICATE_RTOL = 1e-9


def latin_hypercube(n: int, domain: Domain, seed: int = 0) -> np.ndarray:
    """``n`` points with exactly one point per stratum on every axis.

    Each point is placed uniformly at random inside its stratum; the strata
    are matched by an independent random permutation per axis.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = np.random.default_rng(seed)
    strata = np.column_stack([rng.permutation(n) for _ in range(domain.d)])
    U = (strata + rng.uniform(size=(n, domain.d))) / n
    return domain.from_unit(U)


@dataclass(frozen=True)
class CandidateGrid:
    """Finite candidate set for the argmax searches."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        if pts.shape[0] < 1:
            raise ValueError("candidate grid is empty")
        object.__setattr__(self, "points", pts)

    @classmethod
    def from_domain(cls, domain: Domain, size: int = 40) -> "CandidateGrid":
        return cls(domain.grid(size))

    @property
    def size(self) -> int:
        return self.points.shape[0]

    def sampled_mask(self, samples: Optional[SampleSet]) -> np.ndarray:
        """True where a candidate coincides with a sample (relative 1e-9)."""
        mask = np.zeros(self.size, dtype=bool)
        if samples is None:
            return mask
        scale = np.maximum(np.max(np.abs(self.points), axis=0), 1.0)
        tol = DUPLICATE_RTOL * scale
        for x in samples.points:
            mask |= np.all(np.abs(self.points - x) <= tol, axis=1)
        return mask


def _masked_argmax(scores: np.ndarray, mask: np.ndarray) -> int:
    if np.all(mask):
        raise ValueError("every candidate has already been sampled")
    s = np.where(mask, -np.inf, scores)
    return int(np.argmax(s))


def adaptive_mse_step(model, grid: CandidateGrid, samples: Optional[SampleSet] = None) -> np.ndarray:
    """Candidate with the largest predicted MSE of ``model``."""
    samples = getattr(model, "samples", None) if samples is None else samples
    scores = model.predict_mse(grid.points)
    return grid.points[_masked_argmax(scores, grid.sampled_mask(samples))].copy()


def adaptive_discrepancy_step(hk, kri, grid: CandidateGrid, samples: Optional[SampleSet] = None) -> np.ndarray:
    """Candidate where ``|hk - kri|`` is largest.

    Differences below ``1e-12`` of the prediction scale count as zero, so two
    models that agree up to rounding tie everywhere.
    """
    samples = getattr(hk, "samples", None) if samples is None else samples
    base = kri.predict(grid.points)
    scores = np.abs(hk.predict(grid.points) - base)
    scores[scores <= 1e-12 * (1.0 + np.max(np.abs(base)))] = 0.0
    return grid.points[_masked_argmax(scores, grid.sampled_mask(samples))].copy()


@dataclass
class AdaptivePlan:
    strategy: str
    initial: SampleSet
    budget: int
    history: list = field(default_factory=list)

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}")
        if self.budget < self.initial.n:
            raise ValueError("budget must be at least the initial sample count")


@dataclass(frozen=True)
class TraceRow:
    step: int
    n: int
    strategy: str
    eta1: float
    eta_inf: float
    x_star: tuple
    event: str = ""


@dataclass
class AdaptiveResult:
    models: FittedModels
    samples: SampleSet
    trace: list
    plan: AdaptivePlan

    def to_csv(self) -> str:
        return trace_csv(self.trace, self.samples.d)


def trace_csv(trace, d: int) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["step", "n", "strategy", "eta1", "eta_inf"] + [f"x_star_{k + 1}" for k in range(d)] + ["event"])
    for row in trace:
        xs = [repr(float(v)) for v in row.x_star] if row.x_star else [""] * d
        w.writerow([row.step, row.n, row.strategy, repr(row.eta1), repr(row.eta_inf)] + xs + [row.event])
    return buf.getvalue()


def run_adaptive(
    oracle,
    plan: AdaptivePlan,
    domain: Domain,
    basis: Optional[PodBasis] = None,
    cfg: SurrogateConfig = SurrogateConfig(),
    grid: Optional[CandidateGrid] = None,
    validation: Optional[ValidationGrid] = None,
) -> AdaptiveResult:
    """Sequential infill until ``plan.budget`` samples are reached.

    At every stage the models are rebuilt from scratch (GSM refit, theta
    refit) and assessed on the validation grid. The discrepancy strategy
    needs a basis; without one, or when the hierarchical build fails, the
    step falls back to the MSE of ordinary Kriging and records the event.
    """
    grid = grid or CandidateGrid.from_domain(domain)
    validation = validation or validation_grid(oracle, domain)
    samples = plan.initial
    trace = []
    need_kri = plan.strategy == "discrepancy"
    step = 0
    x_prev: tuple = ()
    while True:
        models = fit_models(samples, domain, basis, cfg, need_kriging=need_kri)
        eta1, eta_inf = error_metrics(models.primary, validation)
        trace.append(TraceRow(step, samples.n, plan.strategy, eta1, eta_inf, x_prev, models.event))
        if samples.n >= plan.budget:
            break
        if plan.strategy == "discrepancy" and models.hk is not None:
            x_star = adaptive_discrepancy_step(models.hk, models.kriging, grid, samples)
        else:
            x_star = adaptive_mse_step(models.primary, grid, samples)
        plan.history.append(x_star)
        samples = samples.append(x_star, float(np.asarray(oracle(as_points(x_star, samples.d)))[0]))
        step += 1
        x_prev = tuple(float(v) for v in x_star)
    return AdaptiveResult(models, samples, trace, plan)
