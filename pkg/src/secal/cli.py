"""Command-line entry points.

Subcommands cover the four experiments, the property suites, oracle-surface
builds, and small building-block operations (perturb / fit / estimate /
recalibrate) that stream CSV batches, plus figure rendering from emitted
CSVs.
"""
from __future__ import annotations

import argparse
import json
import pathlib
import sys

import numpy as np

from .ce_estimation import Recalibrator, ce2_plugin
from .config import RunConfig, load_config
from .core_types import SnapshotBatch
from .dgp import Exp1World, PredictorConfig
from .experiments import default_config, run_exp1, run_exp2, run_exp3, run_exp4
from .ground_truth import build_surface
from .poly_fit import PolyFit, select_model
from .properties import run_properties
from .sech_kernel import default_kernels, perturb_arrays


def _common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML config file")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--seed", type=int, default=None, help="single seed override")
    p.add_argument("--h", type=float, default=None, help="bandwidth override")
    p.add_argument("--n", type=int, default=None, help="sample-size override")
    p.add_argument("--dataset", default=None, help="input data path")
    p.add_argument("--surrogate", action="store_true",
                   help="use the synthetic surrogate instead of a dataset")
    p.add_argument("--format", dest="fmt", choices=("csv", "json"), default="csv")


def _build_config(args, experiment: str) -> RunConfig:
    if args.config:
        cfg = load_config(args.config)
    else:
        cfg = default_config(experiment, out=args.out)
    over = {"out": args.out}
    if args.seed is not None:
        over["seeds"] = (args.seed,)
    if args.h is not None:
        over["h"] = (args.h,)
    if args.n is not None:
        over["n"] = (args.n,)
    if args.dataset is not None:
        over["dataset"] = args.dataset
    if args.surrogate:
        over["surrogate"] = True
    if args.fmt:
        over["fmt"] = args.fmt
    d = cfg.to_dict()
    d.update(over)
    d["experiment"] = experiment
    return RunConfig.from_dict(d)


def _read_batch(path: str) -> tuple[SnapshotBatch, dict]:
    """Batch CSV with columns m,v[,y1,y2]; header names are mandatory."""
    import csv as _csv

    with open(path, newline="") as fh:
        rows = list(_csv.DictReader(fh))
    if not rows:
        raise SystemExit(f"{path}: empty batch")
    cols = {k: np.array([float(r[k]) for r in rows]) for k in rows[0]}
    need = [c for c in ("m", "v") if c not in cols]
    if need:
        raise SystemExit(f"{path}: missing columns {need}")
    y1 = cols.get("y1", np.zeros(len(rows))).astype(np.int64)
    y2 = cols.get("y2", np.zeros(len(rows))).astype(np.int64)
    return SnapshotBatch(cols["m"], cols["v"], y1, y2), cols


def cmd_oracle_build(args) -> int:
    quality = "undertrained" if args.surrogate else "good"
    world = Exp1World(args.seed or 0, predictor=PredictorConfig(quality))
    h = args.h or 1 / 16
    surf = build_surface(world.raw_sampler(), args.n or 2**16, h, seed=args.seed or 0)
    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    prefix = str(out / f"oracle_h{h!r}")
    surf.save(prefix)
    print(f"built surface: ce2_pert={surf.ce2_pert()!r} -> {prefix}.npz")
    return 0


def cmd_perturb(args) -> int:
    if not args.dataset:
        raise SystemExit("perturb needs --dataset CSV with columns m_raw,v_raw")
    import csv as _csv

    with open(args.dataset, newline="") as fh:
        rows = list(_csv.DictReader(fh))
    if not rows or "m_raw" not in rows[0] or "v_raw" not in rows[0]:
        raise SystemExit(f"{args.dataset}: need columns m_raw,v_raw")
    m = np.array([float(r["m_raw"]) for r in rows])
    v = np.array([float(r["v_raw"]) for r in rows])
    km, kv = default_kernels(args.h or 1 / 16)
    rng = np.random.default_rng(args.seed or 0)
    u1 = rng.random(len(m)).clip(1e-12, 1 - 1e-12)
    u2 = rng.random(len(m)).clip(1e-12, 1 - 1e-12)
    mt, vt = perturb_arrays(km, kv, m, v, u1, u2)
    out = pathlib.Path(args.out) / "perturbed.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    lines = ["m_raw,v_raw,m,v"]
    lines += [f"{float(a)!r},{float(b)!r},{float(c)!r},{float(d)!r}"
              for a, b, c, d in zip(m, v, mt, vt)]
    out.write_text("\n".join(lines) + "\n")
    print(str(out))
    return 0


def cmd_fit(args) -> int:
    if not args.dataset:
        raise SystemExit("fit needs --dataset CSV with columns m,v,y1,y2")
    batch, _ = _read_batch(args.dataset)
    n = len(batch)
    hyper = batch.prefix(n // 4)
    train = SnapshotBatch(batch.m[n // 4:], batch.v[n // 4:],
                          batch.y1[n // 4:], batch.y2[n // 4:])
    f1, f2 = select_model(train, hyper, args.h or 1 / 16)
    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "fit_eta1.json").write_text(f1.to_json())
    (out / "fit_eta2.json").write_text(f2.to_json())
    print(str(out / "fit_eta1.json"), str(out / "fit_eta2.json"))
    return 0


def _load_fits(out_dir: str) -> tuple[PolyFit, PolyFit]:
    out = pathlib.Path(out_dir)
    try:
        f1 = PolyFit.from_json((out / "fit_eta1.json").read_text())
        f2 = PolyFit.from_json((out / "fit_eta2.json").read_text())
    except FileNotFoundError as exc:
        raise SystemExit(f"missing fitted model in {out_dir}: {exc}")
    return f1, f2


def cmd_estimate(args) -> int:
    if not args.dataset:
        raise SystemExit("estimate needs --dataset CSV with columns m,v")
    batch, _ = _read_batch(args.dataset)
    f1, f2 = _load_fits(args.out)
    rep = ce2_plugin(f1, f2, batch, args.h or float("nan"))
    if args.fmt == "json":
        print(json.dumps({"ce2": rep.ce2, "term_first": rep.term_first,
                          "term_second": rep.term_second, "n": rep.n}))
    else:
        print(rep.CSV_HEADER)
        print(rep.csv_row(args.seed or 0))
    return 0


def cmd_recalibrate(args) -> int:
    if not args.dataset:
        raise SystemExit("recalibrate needs --dataset CSV with columns m,v")
    batch, _ = _read_batch(args.dataset)
    f1, f2 = _load_fits(args.out)
    mp, vp = Recalibrator(f1, f2).remap(batch.m, batch.v)
    out = pathlib.Path(args.out) / "recalibrated.csv"
    lines = ["m,v,m_recal,v_recal"]
    lines += [f"{float(a)!r},{float(b)!r},{float(c)!r},{float(d)!r}"
              for a, b, c, d in zip(batch.m, batch.v, mp, vp)]
    out.write_text("\n".join(lines) + "\n")
    print(str(out))
    return 0


def cmd_render(args) -> int:
    from .figures import FigureJob, render

    job = FigureJob(figure=args.figure, inputs=tuple(args.inputs),
                    output=args.output)
    render(job)
    print(args.output)
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="secal",
        description="Second-order calibration: estimation, diagnostics, recalibration.")
    sub = parser.add_subparsers(dest="command", required=True)

    for exp in ("exp1", "exp2", "exp3", "exp4"):
        p = sub.add_parser(exp, help=f"run {exp}")
        _common_flags(p)
        p.add_argument("--no-figures", action="store_true",
                       help="skip figure rendering, emit CSVs only")
    for name, helptext in (
        ("properties", "run all property suites"),
        ("oracle-build", "build and save a ground-truth surface"),
        ("perturb", "sech-perturb a CSV of raw scores"),
        ("fit", "fit the calibration-function pair from a batch CSV"),
        ("estimate", "plug-in CE2 from saved fits on a batch CSV"),
        ("recalibrate", "remap scores through saved fits"),
    ):
        p = sub.add_parser(name, help=helptext)
        _common_flags(p)
    p = sub.add_parser("render", help="render a figure from harness CSVs")
    p.add_argument("--figure", required=True, choices=("exp1", "exp2", "exp3", "exp4"))
    p.add_argument("--in", dest="inputs", nargs="+", required=True)
    p.add_argument("--out", dest="output", required=True)

    args = parser.parse_args(argv)
    if args.command in ("exp1", "exp2", "exp3", "exp4"):
        cfg = _build_config(args, args.command)
        runner = {"exp1": run_exp1, "exp2": run_exp2,
                  "exp3": run_exp3, "exp4": run_exp4}[args.command]
        res = runner(cfg)
        files = list(res["files"])
        if not args.no_figures:
            from .figures import render_all

            files += render_all(cfg.out, cfg.out)
        for f in files:
            print(f)
        return 0
    if args.command == "properties":
        cfg = RunConfig(experiment="properties", out=args.out)
        report = run_properties(cfg)
        for name, r in report["suites"].items():
            print(f"{'PASS' if r['passed'] else 'FAIL'} {name}: {r['detail']}")
        return 0 if report["passed"] else 1
    handler = {
        "oracle-build": cmd_oracle_build,
        "perturb": cmd_perturb,
        "fit": cmd_fit,
        "estimate": cmd_estimate,
        "recalibrate": cmd_recalibrate,
        "render": cmd_render,
    }[args.command]
    return handler(args)


if __name__ == "__main__":
    sys.exit(main())
