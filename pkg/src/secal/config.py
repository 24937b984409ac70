"""Run configuration, seed derivation, and output manifests.

Configs are flat key-value YAML files; every run is fully determined by its
config plus the seed list, and each output file gets a JSON manifest
recording the config hash, seeds, and package version.  Floats in CSV
output use ``repr`` (shortest round-trip decimal), so identical configs
reproduce byte-identical files.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import pathlib
from dataclasses import dataclass, field

import yaml


def derive_seed(base: int, *tags) -> int:
    """Deterministic per-task seed: hash of the base seed and task tags."""
    text = ":".join([str(base), *map(str, tags)])
    return int.from_bytes(hashlib.blake2b(text.encode(), digest_size=8).digest(), "big") % 2**31


@dataclass(frozen=True)
class RunConfig:
    """Everything the harness needs for one experiment run."""

    experiment: str
    out: str = "out"
    h: tuple[float, ...] = (1 / 16,)
    n: tuple[int, ...] = (500, 1000, 2000, 5000, 10000, 20000)
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    methods: tuple[str, ...] = ()
    n_qmc: int = 2**16
    world_seed: int = 0
    dataset: str | None = None
    surrogate: bool = True
    n_cal: int = 20000
    n_eval: int = 8000
    fmt: str = "csv"
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["h"] = list(self.h)
        d["n"] = list(self.n)
        d["seeds"] = list(self.seeds)
        d["methods"] = list(self.methods)
        return d

    @property
    def hash(self) -> str:
        return config_hash(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        for key in ("h", "n", "seeds", "methods"):
            if key in d:
                d[key] = tuple(d[key])
        known = {f.name for f in dataclasses.fields(cls)}
        extra = {k: d.pop(k) for k in list(d) if k not in known}
        if extra:
            d.setdefault("params", {}).update(extra)
        return cls(**d)


def load_config(path: str) -> RunConfig:
    obj = yaml.safe_load(pathlib.Path(path).read_text())
    if not isinstance(obj, dict) or "experiment" not in obj:
        raise ValueError(f"{path}: config must be a mapping with an 'experiment' key")
    return RunConfig.from_dict(obj)


def config_hash(obj: dict) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()[:16]


def write_manifest(out_dir: str, name: str, cfg: RunConfig, outputs: list[str],
                   extra: dict | None = None) -> str:
    """JSON manifest next to the outputs; returns its path."""
    from . import __version__

    path = pathlib.Path(out_dir) / f"{name}.manifest.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    body = {
        "config": cfg.to_dict(),
        "config_hash": cfg.hash,
        "seeds": list(cfg.seeds),
        "version": __version__,
        "outputs": outputs,
    }
    if extra:
        body.update(extra)
    path.write_text(json.dumps(body, indent=2, sort_keys=True))
    return str(path)


def write_csv(path: str, header: str, rows: list[str]) -> str:
    p = pathlib.Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text("\n".join([header, *rows]) + "\n")
    return str(p)
