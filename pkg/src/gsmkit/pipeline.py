"""Model-building steps shared by the experiment sweep and adaptive runs."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from typing import Optional

from .domain import Domain, SampleSet
from .errors import GsmError
from .gappy import GenericSurrogateModel, gappy_fit_transformed, linear_gsm
from .hierarchical import HierarchicalKrigingModel, fit_hk
from .kriging import KrigingModel, RegressionBasis, fit_kriging
from .pod import PodBasis

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SurrogateConfig:
    """How to build the surrogates from a sample set.

    ``transformed`` selects the nonlinear gappy fit (with ``p``); otherwise
    the linear fit with ``p = 0`` is used. ``inherit_theta`` reuses the
    ordinary-Kriging correlation parameters for the hierarchical layer
    instead of fitting them on the hierarchical model.
    """

    family: str = "gaussian"
    regression: str = "constant"
    transformed: bool = True
    gappy_delta: Optional[float] = None
    guard: bool = True
    inherit_theta: bool = False
    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def fit_gsm(basis: PodBasis, samples: SampleSet, cfg: SurrogateConfig = SurrogateConfig()) -> GenericSurrogateModel:
    if cfg.transformed:
        return gappy_fit_transformed(basis, samples, cfg.gappy_delta, guard=cfg.guard)
    return linear_gsm(basis, samples)


def fit_ordinary(samples: SampleSet, domain: Domain, cfg: SurrogateConfig = SurrogateConfig()) -> KrigingModel:
    return fit_kriging(samples, RegressionBasis(cfg.regression), cfg.family, domain=domain, seed=cfg.seed)


@dataclass
class FittedModels:
    """Models built on one sample set. ``primary`` is the model assessed:
    hierarchical Kriging when it could be built, ordinary Kriging otherwise."""

    primary: KrigingModel
    kriging: Optional[KrigingModel]
    hk: Optional[HierarchicalKrigingModel]
    gsm: Optional[GenericSurrogateModel]
    event: str = ""


def fit_models(samples: SampleSet, domain: Domain, basis: Optional[PodBasis],
               cfg: SurrogateConfig = SurrogateConfig(), need_kriging: bool = True) -> FittedModels:
    """Ordinary Kriging and, given a basis, hierarchical Kriging on the GSM.

    A failed GSM or hierarchical build falls back to ordinary Kriging and is
    recorded in ``event``; it is never silent.
    """
    kri = fit_ordinary(samples, domain, cfg) if (need_kriging or basis is None or cfg.inherit_theta) else None
    if basis is None:
        return FittedModels(kri, kri, None, None)
    try:
        gsm = fit_gsm(basis, samples, cfg)
        theta = kri.corr if cfg.inherit_theta else None
        hk = fit_hk(samples, gsm, cfg.family, domain=domain, theta=theta, seed=cfg.seed)
    except GsmError as exc:
        log.warning("hierarchical build failed (%s); falling back to ordinary Kriging", exc.code)
        if kri is None:
            kri = fit_ordinary(samples, domain, cfg)
        return FittedModels(kri, kri, None, None, event=f"fallback:{exc.code}")
    event = "guarded" if gsm.warning else ""
    return FittedModels(hk, kri, hk, gsm, event)
