"""Sweep of surrogate methods over Latin hypercube sample sizes and seeds.

Methods:

``kriging``
    ordinary Kriging with constant regression.
``hk-gsm``
    hierarchical Kriging on the transformed gappy fit of the aligned basis.
``hk-gsm-noalign``
    hierarchical Kriging on the linear gappy fit of the basis of the
    unaligned database.

Every cell ``(method, size, seed)`` uses the same design for all methods and
is reproducible on its own. Cells run concurrently on a thread pool sized by
``GSMKIT_THREADS``; rows are sorted by key afterwards so the CSV does not
depend on scheduling. Wall times go to the JSON report only.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Dict, Optional, Sequence

import numpy as np

from .alignment import AlignedDatabase, QuadratureRule, trapezoid_rule
from .config import METHODS
from .domain import Domain, SampleSet
from .errors import GsmError
from .pipeline import SurrogateConfig, fit_models
from .pod import PodBasis, pod_from_database
from .sampling import latin_hypercube
from .testbed import ValidationGrid, draw_distortion, error_metrics, holdout_member

log = logging.getLogger(__name__)

THREADS_ENV = "GSMKIT_THREADS"
CSV_FIELDS = ("method", "size", "seed", "eta1", "eta_inf", "status", "event", "model_hash")


def thread_count(default: int = 1) -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, default)))
    except ValueError:
        return default


def holdout_oracle(seed: int, domain: Domain):
    """Distorted family member that belongs to no database."""
    q = draw_distortion(np.random.default_rng([seed, 104729]), domain)
    return holdout_member(seed, distortion=q)


def design_seed(base: int, size: int, repeat: int) -> list:
    return [base, size, repeat]


@dataclass(frozen=True)
class ExperimentRow:
    method: str
    size: int
    seed: int
    eta1: float
    eta_inf: float
    status: str
    event: str
    model_hash: str
    wall_time: float = 0.0

    @property
    def key(self):
        return (METHODS.index(self.method), self.size, self.seed)


def unaligned_basis(db: AlignedDatabase, quad: QuadratureRule, threshold: float) -> PodBasis:
    return pod_from_database(db.with_transforms(np.zeros_like(db.transforms)), quad, threshold)


def _model_hash(models) -> str:
    if models.gsm is not None:
        return models.gsm.content_hash()
    theta = np.asarray(models.primary.corr.theta)
    return "theta:" + ",".join(f"{t:.6e}" for t in theta)


def run_cell(method: str, size: int, seed: int, oracle, domain: Domain, bases: Dict[str, PodBasis],
             validation: ValidationGrid, surrogate: SurrogateConfig, base_seed: int = 0) -> ExperimentRow:
    t0 = time.perf_counter()
    try:
        X = latin_hypercube(size, domain, design_seed(base_seed, size, seed))
        samples = SampleSet(X, oracle(X))
        if method == "kriging":
            basis, cfg = None, surrogate
        elif method == "hk-gsm":
            basis, cfg = bases["aligned"], surrogate
        else:
            basis = bases["unaligned"]
            cfg = SurrogateConfig(**{**surrogate.to_dict(), "transformed": False})
        models = fit_models(samples, domain, basis, cfg, need_kriging=False)
        eta1, eta_inf = error_metrics(models.primary, validation)
        status, event, h = "ok", models.event, _model_hash(models)
    except GsmError as exc:
        eta1 = eta_inf = float("nan")
        status, event, h = f"error:{exc.code}", str(exc)[:120], ""
    return ExperimentRow(method, size, seed, eta1, eta_inf, status, event, h, time.perf_counter() - t0)


def run_sweep(oracle, domain: Domain, bases: Dict[str, PodBasis], validation: ValidationGrid,
              methods: Sequence[str] = METHODS, sizes: Sequence[int] = (5, 7, 10, 15, 20, 30, 40, 50),
              repeats: int = 10, surrogate: SurrogateConfig = SurrogateConfig(), base_seed: int = 0,
              threads: Optional[int] = None) -> list:
    cells = [(m, s, r) for m in methods for s in sizes for r in range(repeats)]
    threads = thread_count() if threads is None else threads

    def work(cell):
        m, s, r = cell
        return run_cell(m, s, r, oracle, domain, bases, validation, surrogate, base_seed)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            rows = list(pool.map(work, cells))
    else:
        rows = [work(c) for c in cells]
    return sorted(rows, key=lambda r: r.key)


def aggregate(rows) -> list:
    """Arithmetic means of eta1 and eta_inf per (method, size) over rows with status ok."""
    groups: dict = {}
    for r in rows:
        groups.setdefault((r.method, r.size), []).append(r)
    out = []
    for (method, size), rs in sorted(groups.items(), key=lambda kv: (METHODS.index(kv[0][0]), kv[0][1])):
        ok = [r for r in rs if r.status == "ok"]
        e1 = float(np.mean([r.eta1 for r in ok])) if ok else float("nan")
        ei = float(np.mean([r.eta_inf for r in ok])) if ok else float("nan")
        out.append({"method": method, "size": size, "n_ok": len(ok), "n_rows": len(rs), "mean_eta1": e1, "mean_eta_inf": ei})
    return out


def rows_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for r in rows:
        w.writerow([r.method, r.size, r.seed, repr(r.eta1), repr(r.eta_inf), r.status, r.event, r.model_hash])
    return buf.getvalue()


def report_json(rows, config_hash: str = "", extra: Optional[dict] = None) -> str:
    data = {
        "config_hash": config_hash,
        "rows": [asdict(r) for r in rows],
        "means": aggregate(rows),
        "total_wall_time": float(sum(r.wall_time for r in rows)),
    }
    if extra:
        data.update(extra)
    return json.dumps(data, sort_keys=True, indent=2, allow_nan=True) + "\n"


def bases_for(db: AlignedDatabase, threshold: float = 0.999, quad: Optional[QuadratureRule] = None,
              aligned: Optional[PodBasis] = None) -> Dict[str, PodBasis]:
    quad = quad or trapezoid_rule(db.domain)
    return {
        "aligned": aligned if aligned is not None else pod_from_database(db, quad, threshold),
        "unaligned": unaligned_basis(db, quad, threshold),
    }
