"""Damped Gauss-Newton for penalised nonlinear least squares.

The solver never sees the residual Jacobian itself. Callers provide a
``linearize(x) -> (f, g, H)`` returning the objective, its gradient ``J^T r``
and the Gauss-Newton Hessian ``J^T J`` (penalty terms included), plus a cheap
``objective(x) -> f`` for trial points. This lets callers accumulate the
normal equations block by block without ever storing ``J``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DomainEscape, NoDescent

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GaussNewtonConfig:
    damping0: float = 1e-3
    damping_up: float = 10.0
    damping_down: float = 10.0
    max_damping: float = 1e12
    rtol: float = 1e-8
    max_iter: int = 100
    gtol: float = 1e-10


@dataclass
class GaussNewtonResult:
    x: np.ndarray
    objective: float
    initial_objective: float
    iterations: int
    status: str
    history: list = field(default_factory=list)


def _damped_step(g, H, lam):
    diag = np.diag(H).copy()
    floor = 1e-12 * max(float(diag.max(initial=0.0)), 1e-300)
    A = H + lam * np.diag(np.maximum(diag, floor))
    try:
        return np.linalg.solve(A, -g)
    except np.linalg.LinAlgError:
        return np.linalg.lstsq(A, -g, rcond=None)[0]


def gauss_newton(
    objective: Callable[[np.ndarray], float],
    linearize: Callable[[np.ndarray], tuple],
    x0,
    config: GaussNewtonConfig = GaussNewtonConfig(),
) -> GaussNewtonResult:
    """Minimise with Levenberg-Marquardt damping.

    Trial points whose objective raises :class:`DomainEscape` or is not
    finite are treated as rejected steps. The accepted objective sequence is
    strictly decreasing and returned in ``history``.

    Raises
    ------
    NoDescent
        When the damping is exhausted before any step was accepted and the
        gradient at ``x0`` is not negligible.
    """
    x = np.array(x0, dtype=float)
    f, g, H = linearize(x)
    f0 = f
    history = [f]
    lam = config.damping0
    accepted = 0
    status = "max_iter"
    it = 0
    for it in range(1, config.max_iter + 1):
        if not np.all(np.isfinite(g)):
            raise NoDescent("non-finite gradient")
        if np.max(np.abs(g), initial=0.0) <= config.gtol:
            status = "gradient"
            break
        while True:
            step = _damped_step(g, H, lam)
            trial = x + step
            try:
                f_trial = objective(trial)
            except DomainEscape:
                f_trial = np.inf
            if np.isfinite(f_trial) and f_trial < f:
                break
            lam *= config.damping_up
            if lam > config.max_damping:
                break
        if lam > config.max_damping:
            if accepted == 0:
                raise NoDescent(
                    f"no decrease from f={f:.6g} (|g|={np.max(np.abs(g)):.3g}) before damping exhausted"
                )
            status = "stalled"
            break
        decrease = f - f_trial
        x = trial
        f, g, H = linearize(x)
        history.append(f)
        accepted += 1
        lam = max(lam / config.damping_down, 1e-15)
        if decrease <= config.rtol * max(abs(f_trial), 1e-300) or f == 0.0:
            status = "converged"
            break
    log.debug("gauss_newton: %s after %d iterations, f %.6g -> %.6g", status, it, f0, f)
    return GaussNewtonResult(x=x, objective=f, initial_objective=f0, iterations=it, status=status, history=history)
