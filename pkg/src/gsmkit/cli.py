"""Command-line front end.

Subcommands follow the offline/online workflow::

    gsmkit gen-db      write a synthetic database directory
    gsmkit align       align the database, fill the transforms in the manifest
    gsmkit pod         compute pod.json from the (aligned) manifest
    gsmkit fit-gsm     fit a generic surrogate model to a samples CSV
    gsmkit predict     evaluate gsm / hk / kriging at points from a CSV
    gsmkit experiment  method x size x seed sweep on a held-out member
    gsmkit adaptive    adaptive sampling run with an error trace

Settings come from ``--config FILE`` (TOML) and are overridden by flags;
``--set section.key=value`` reaches any setting. Failures exit nonzero with
an error JSON object on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from typing import Optional

import numpy as np

from .alignment import align_database, default_delta, ssd_objective, trapezoid_rule
from .config import Config, auto, load_config
from .domain import SampleSet
from .errors import ConfigError, GsmError
from .experiment import bases_for, holdout_oracle, report_json, rows_csv, run_sweep, thread_count
from .io import (
    content_hash, load_database, load_gsm, load_pod, read_points_csv, save_aligned, save_database, save_gsm, save_pod,
    write_rows_csv,
)
from .pipeline import SurrogateConfig, fit_gsm, fit_models, fit_ordinary
from .pod import pod_from_database
from .sampling import AdaptivePlan, CandidateGrid, latin_hypercube, run_adaptive
from .testbed import build_synthetic_database, validation_grid

log = logging.getLogger("gsmkit")

# flag name -> (section, key)
FLAG_MAP = {
    "db": ("paths", "database"),
    "out": ("paths", "output"),
    "m": ("database", "m"),
    "seed": ("database", "seed"),
    "distortions": ("database", "distortions"),
    "delta": ("alignment", "delta"),
    "threshold": ("pod", "threshold"),
    "family": ("surrogate", "family"),
    "methods": ("experiment", "methods"),
    "sizes": ("experiment", "sizes"),
    "repeats": ("experiment", "repeats"),
    "strategy": ("adaptive", "strategy"),
    "budget": ("adaptive", "budget"),
}


def _overrides(args) -> dict:
    out: dict = {}
    for flag, (sec, key) in FLAG_MAP.items():
        value = getattr(args, flag, None)
        if value is not None:
            out.setdefault(sec, {})[key] = value
    for item in getattr(args, "set", None) or []:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"--set expects section.key=value, got {item!r}")
        lhs, value = item.split("=", 1)
        sec, key = lhs.split(".", 1)
        out.setdefault(sec, {})[key] = value
    return out


def _surrogate(cfg: Config, transformed: bool = True) -> SurrogateConfig:
    s = cfg.surrogate
    return SurrogateConfig(family=s.family, transformed=transformed, gappy_delta=auto(s.gappy_delta),
                           guard=s.guard, inherit_theta=s.inherit_theta)


def _emit(obj: dict) -> None:
    print(json.dumps(obj, sort_keys=True))


# --- commands -------------------------------------------------------------


def cmd_gen_db(cfg: Config, args) -> dict:
    c = cfg.database
    sdb = build_synthetic_database(c.m, seed=c.seed, distortions=c.distortions)
    manifest = save_database(cfg.paths.database, sdb, cfg)
    return {"database": cfg.paths.database, "m": manifest["m"], "manifest_hash": content_hash(manifest)}


def cmd_align(cfg: Config, args) -> dict:
    db, manifest = load_database(cfg.paths.database, cfg)
    quad = trapezoid_rule(db.domain, cfg.alignment.grid)
    base = db.with_transforms(np.zeros_like(db.transforms))
    delta = auto(cfg.alignment.delta)
    delta = default_delta(base, quad) if delta is None else delta
    aligned = align_database(db.entries, db.domain, quad, delta, extended_domain=db.extended_domain)
    pre = ssd_objective(base, quad, 0.0)
    post = ssd_objective(aligned, quad, 0.0)
    stats = {
        "delta": delta,
        "pre_ssd": pre,
        "post_ssd": post,
        "objective": aligned.info.objective,
        "status": aligned.info.status,
        "iterations": aligned.info.iterations,
    }
    save_aligned(cfg.paths.database, aligned, manifest, stats, cfg)
    return dict(stats, ratio=post / pre if pre > 0 else 0.0)


def cmd_pod(cfg: Config, args) -> dict:
    db, manifest = load_database(cfg.paths.database, cfg)
    quad = trapezoid_rule(db.domain, cfg.alignment.grid)
    basis = pod_from_database(db, quad, cfg.pod.threshold, cfg.pod.mean_centered)
    save_pod(cfg.paths.database, basis, manifest, cfg)
    lam = basis.eigenvalues
    return {"rank": basis.rank, "eigenvalues": lam.tolist(), "captured": float(lam[: basis.rank].sum() / lam.sum())}


def _load_basis(cfg: Config):
    db, manifest = load_database(cfg.paths.database, cfg)
    return db, manifest, load_pod(cfg.paths.database, db, manifest, cfg)


def cmd_fit_gsm(cfg: Config, args) -> dict:
    db, manifest, basis = _load_basis(cfg)
    samples = read_points_csv(args.samples)
    gsm = fit_gsm(basis, samples, _surrogate(cfg, not args.linear))
    path = args.output or os.path.join(cfg.paths.database, "gsm.json")
    save_gsm(path, gsm, manifest, cfg)
    return {"gsm": path, "residual": gsm.residual, "p": gsm.p.tolist(), "warning": gsm.warning}


def cmd_predict(cfg: Config, args) -> dict:
    X = read_points_csv(args.points, with_values=False)
    if args.model == "gsm":
        db, manifest, basis = _load_basis(cfg)
        model = load_gsm(args.gsm or os.path.join(cfg.paths.database, "gsm.json"), basis, manifest, cfg)
        values, mse = model(X), None
    else:
        if not args.samples:
            raise ConfigError(f"--samples is required for model {args.model}")
        samples = read_points_csv(args.samples)
        db, manifest = load_database(cfg.paths.database)
        if args.model == "kriging":
            model = fit_ordinary(samples, db.domain, _surrogate(cfg))
        else:
            _, _, basis = _load_basis(cfg)
            fm = fit_models(samples, db.domain, basis, _surrogate(cfg), need_kriging=False)
            if fm.hk is None:
                raise GsmError(f"hierarchical build failed ({fm.event})")
            model = fm.hk
        values, mse = model.predict(X), model.predict_mse(X)
    header = [f"x{k + 1}" for k in range(X.shape[1])] + ["value"] + (["mse"] if mse is not None else [])
    rows = [[repr(float(v)) for v in (*x, y)] + ([repr(float(e))] if mse is not None else [])
            for x, y, e in zip(X, values, mse if mse is not None else values)]
    if args.output:
        write_rows_csv(args.output, header, rows)
    else:
        print(",".join(header))
        for r in rows:
            print(",".join(r))
    return {"n": int(X.shape[0]), "model": args.model, "output": args.output}


def cmd_experiment(cfg: Config, args) -> dict:
    e = cfg.experiment
    need_pod = any(m.startswith("hk-gsm") for m in e.methods)
    if need_pod:
        db, manifest, aligned = _load_basis(cfg)
    else:
        db, manifest = load_database(cfg.paths.database)
        aligned = None
    quad = trapezoid_rule(db.domain, cfg.alignment.grid)
    bases = bases_for(db, cfg.pod.threshold, quad, aligned) if need_pod else {}
    oracle = holdout_oracle(e.holdout_seed, db.domain)
    val = validation_grid(oracle, db.domain, e.validation_size)
    t0 = time.perf_counter()
    rows = run_sweep(oracle, db.domain, bases, val, e.methods, e.sizes, e.repeats, _surrogate(cfg), e.seed)
    out = cfg.paths.output
    os.makedirs(out, exist_ok=True)
    h = cfg.stage_hash("experiment")
    with open(os.path.join(out, "experiment.csv"), "w") as fh:
        fh.write(rows_csv(rows))
    extra = {"stage": "experiment", "wall_time": time.perf_counter() - t0, "threads": thread_count()}
    with open(os.path.join(out, "experiment.json"), "w") as fh:
        fh.write(report_json(rows, h, extra))
    with open(os.path.join(out, "validation.csv"), "w") as fh:
        fh.write(val.to_csv())
    failed = sum(r.status != "ok" for r in rows)
    return {"rows": len(rows), "failed": failed, "csv": os.path.join(out, "experiment.csv"), "config_hash": h}


def cmd_adaptive(cfg: Config, args) -> dict:
    a = cfg.adaptive
    db, manifest = load_database(cfg.paths.database)
    basis = None
    if a.method == "hk-gsm":
        _, _, basis = _load_basis(cfg)
    elif a.method == "hk-gsm-noalign":
        basis = bases_for(db, cfg.pod.threshold, trapezoid_rule(db.domain, cfg.alignment.grid))["unaligned"]
    oracle = holdout_oracle(cfg.experiment.holdout_seed, db.domain)
    val = validation_grid(oracle, db.domain, cfg.experiment.validation_size)
    X = latin_hypercube(a.initial, db.domain, a.seed)
    plan = AdaptivePlan(a.strategy, SampleSet(X, oracle(X)), a.budget)
    res = run_adaptive(oracle, plan, db.domain, basis, _surrogate(cfg, a.method != "hk-gsm-noalign"),
                       CandidateGrid.from_domain(db.domain, cfg.experiment.validation_size), val)
    os.makedirs(cfg.paths.output, exist_ok=True)
    path = os.path.join(cfg.paths.output, f"adaptive_{a.strategy}.csv")
    with open(path, "w") as fh:
        fh.write(res.to_csv())
    first, last = res.trace[0], res.trace[-1]
    return {"csv": path, "steps": len(res.trace) - 1, "eta1_initial": first.eta1, "eta1_final": last.eta1,
            "config_hash": cfg.stage_hash("adaptive")}


COMMANDS = {
    "gen-db": cmd_gen_db,
    "align": cmd_align,
    "pod": cmd_pod,
    "fit-gsm": cmd_fit_gsm,
    "predict": cmd_predict,
    "experiment": cmd_experiment,
    "adaptive": cmd_adaptive,
}


def _boolean(text: str) -> bool:
    return text.lower() in ("1", "true", "yes", "on")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML config file")
    common.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="override any setting")
    common.add_argument("--db", help="database directory")
    common.add_argument("--out", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")
    common.add_argument("--m", type=int, help="database size")
    common.add_argument("--seed", type=int, help="database seed")
    common.add_argument("--distortions", type=_boolean, metavar="BOOL")
    common.add_argument("--delta", type=float, help="alignment penalty")
    common.add_argument("--threshold", type=float, help="POD energy threshold")
    common.add_argument("--family", choices=("gaussian", "power", "cubic"))
    common.add_argument("--methods", type=lambda s: s.split(","))
    common.add_argument("--sizes", type=lambda s: [int(v) for v in s.split(",")])
    common.add_argument("--repeats", type=int)
    common.add_argument("--strategy", choices=("mse", "discrepancy"))
    common.add_argument("--budget", type=int)

    parser = argparse.ArgumentParser(prog="gsmkit", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("gen-db", parents=[common], help="write a synthetic database")
    sub.add_parser("align", parents=[common], help="align the database")
    sub.add_parser("pod", parents=[common], help="compute the POD basis")

    p = sub.add_parser("fit-gsm", parents=[common], help="fit a generic surrogate model")
    p.add_argument("--samples", required=True, help="CSV x1..xd,value")
    p.add_argument("--linear", action="store_true", help="linear gappy fit with p = 0")
    p.add_argument("--output", help="gsm.json path (default: inside the database)")

    p = sub.add_parser("predict", parents=[common], help="evaluate a surrogate at points")
    p.add_argument("--points", required=True, help="CSV x1..xd")
    p.add_argument("--model", choices=("gsm", "hk", "kriging"), default="gsm")
    p.add_argument("--gsm", help="gsm.json path")
    p.add_argument("--samples", help="CSV x1..xd,value (hk, kriging)")
    p.add_argument("--output", help="CSV output path (default: stdout)")

    sub.add_parser("experiment", parents=[common], help="run the LHS sweep")
    sub.add_parser("adaptive", parents=[common], help="adaptive sampling run")
    return parser


def main(argv: Optional[list] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, _overrides(args))
        result = COMMANDS[args.command](cfg, args)
    except GsmError as exc:
        print(json.dumps(exc.to_dict(), sort_keys=True), file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}, sort_keys=True), file=sys.stderr)
        return 1
    if args.command != "predict" or args.output:
        _emit(result)
    return 0


if __name__ == "__main__":
    sys.exit(main())
