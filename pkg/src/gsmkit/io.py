"""On-disk artifacts: database directory, POD and GSM files.

Layout of a database directory::

    manifest.json      domain, m, entry files, transforms, stage, config hash
    entry_000.json     one analytic surface descriptor per entry
    family.json        generating parameters, seed and ground-truth transforms
    pod.json           POD basis plus the hash of the manifest it came from
    gsm.json           fitted GSM plus manifest and POD hashes

Every artifact records the pipeline ``stage`` that wrote it and the config
hash of that stage. Loading checks both the config hash and the upstream
content hashes and raises :class:`StaleArtifact` on mismatch.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
from typing import Optional

import numpy as np

from .alignment import AlignedDatabase
from .config import Config
from .domain import Domain, SampleSet
from .errors import ConfigError, StaleArtifact
from .gappy import GenericSurrogateModel
from .pod import PodBasis, pod_from_dict
from .testbed import SyntheticDatabase, surface_from_dict

FORMAT = 1


def write_json(path: str, data: dict) -> None:
    with open(path, "w") as fh:
        json.dump(data, fh, sort_keys=True, indent=2)
        fh.write("\n")


def read_json(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"missing artifact {path}") from None


def content_hash(data: dict) -> str:
    return hashlib.sha256(json.dumps(data, sort_keys=True).encode()).hexdigest()[:16]


def check_stage(artifact: dict, cfg: Config, name: str) -> None:
    stage = artifact.get("stage")
    expected = cfg.stage_hash(stage) if stage else None
    if artifact.get("config_hash") != expected:
        raise StaleArtifact(
            f"{name} was written by a different configuration (stage {stage!r}); rerun that stage"
        )


# --- database -------------------------------------------------------------


def save_database(path: str, sdb: SyntheticDatabase, cfg: Config) -> dict:
    os.makedirs(path, exist_ok=True)
    names = []
    for j, entry in enumerate(sdb.entries):
        name = f"entry_{j:03d}.json"
        write_json(os.path.join(path, name), entry.to_dict())
        names.append(name)
    db = AlignedDatabase(sdb.entries, sdb.domain)
    manifest = {
        "format": FORMAT,
        "stage": "database",
        "config_hash": cfg.stage_hash("database"),
        "m": db.m,
        "domain": db.domain.to_dict(),
        "extended_domain": db.extended_domain.to_dict(),
        "entries": names,
        "transforms": db.transforms.tolist(),
        "aligned": False,
    }
    write_json(os.path.join(path, "manifest.json"), manifest)
    family = dict(sdb.manifest(), stage="database", config_hash=cfg.stage_hash("database"))
    write_json(os.path.join(path, "family.json"), family)
    return manifest


def load_database(path: str, cfg: Optional[Config] = None):
    """``(AlignedDatabase, manifest)`` from a database directory."""
    manifest = read_json(os.path.join(path, "manifest.json"))
    if cfg is not None:
        check_stage(manifest, cfg, "manifest.json")
    entries = [surface_from_dict(read_json(os.path.join(path, name))) for name in manifest["entries"]]
    db = AlignedDatabase(
        entries,
        Domain.from_dict(manifest["domain"]),
        manifest["transforms"],
        Domain.from_dict(manifest["extended_domain"]),
    )
    return db, manifest


def save_aligned(path: str, db: AlignedDatabase, manifest: dict, stats: dict, cfg: Config) -> dict:
    manifest = dict(manifest)
    manifest.update(
        stage="alignment",
        config_hash=cfg.stage_hash("alignment"),
        transforms=db.transforms.tolist(),
        aligned=True,
        alignment=stats,
    )
    write_json(os.path.join(path, "manifest.json"), manifest)
    return manifest


# --- POD and GSM ----------------------------------------------------------


def save_pod(path: str, basis: PodBasis, manifest: dict, cfg: Config) -> dict:
    data = dict(basis.to_dict(), stage="pod", config_hash=cfg.stage_hash("pod"), manifest_hash=content_hash(manifest))
    write_json(os.path.join(path, "pod.json"), data)
    return data


def load_pod(path: str, db: AlignedDatabase, manifest: dict, cfg: Optional[Config] = None) -> PodBasis:
    data = read_json(os.path.join(path, "pod.json"))
    if cfg is not None:
        check_stage(data, cfg, "pod.json")
    if data.get("manifest_hash") != content_hash(manifest):
        raise StaleArtifact("pod.json does not belong to the current manifest; rerun the pod stage")
    return pod_from_dict(data, db)


def save_gsm(path: str, gsm: GenericSurrogateModel, manifest: dict, cfg: Config) -> dict:
    data = dict(
        gsm.to_dict(),
        stage="gsm",
        config_hash=cfg.stage_hash("gsm"),
        manifest_hash=content_hash(manifest),
        pod_hash=gsm.basis.content_hash(),
    )
    write_json(path, data)
    return data


def load_gsm(path: str, basis: PodBasis, manifest: dict, cfg: Optional[Config] = None) -> GenericSurrogateModel:
    data = read_json(path)
    if cfg is not None:
        check_stage(data, cfg, os.path.basename(path))
    if data.get("manifest_hash") != content_hash(manifest) or data.get("pod_hash") != basis.content_hash():
        raise StaleArtifact(f"{path} was fitted on a different database or POD basis")
    return GenericSurrogateModel(
        basis, np.asarray(data["a_psi"], dtype=float), np.asarray(data["p"], dtype=float),
        float(data["residual"]), bool(data["transformed"]), data.get("warning"),
    )


# --- CSV ------------------------------------------------------------------


def read_points_csv(path: str, with_values: bool = True):
    """Rows of ``x1..xd[,value]`` with a header line."""
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except FileNotFoundError:
        raise ConfigError(f"missing file {path}") from None
    if len(rows) < 2:
        raise ConfigError(f"{path} has no data rows")
    data = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float)
    if with_values:
        return SampleSet(data[:, :-1], data[:, -1])
    return data


def write_rows_csv(path: str, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
