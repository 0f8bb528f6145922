"""Command-line entry point: ``gibbszz <subcommand> [options]``.

Configuration is layered: a plain ``key = value`` file (``--config``), then
the ``GZZ_SEED`` environment variable, then command-line flags. Every
:class:`~gibbszz.experiments.ExperimentSpec` field has a matching flag
(``batch_size`` -> ``--batch-size``).

Exit codes: 0 success, 2 invalid configuration, 3 envelope violation.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from .diagnostics import discretize, efficiency_summary, trajectory_moment
from .experiments import (
    ConfigError,
    ExperimentSpec,
    build_dataset,
    build_model,
    replica_seed,
    run_batch_sweep,
    run_comparison,
    run_eta_sweep,
    run_replicas,
)
from .pdmp import Skeleton
from .samplers import EnvelopeViolation, GzzConfig, ZigZagConfig, hyper_update_counterfactual_check, run_gzz, run_zigzag

log = logging.getLogger("gibbszz")

EXIT_OK, EXIT_CONFIG, EXIT_ENVELOPE = 0, 2, 3


def read_config(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw.strip()!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            out[key.replace("-", "_")] = value
    return out


def resolve_spec(args) -> ExperimentSpec:
    values = read_config(args.config) if args.config else {}
    if os.environ.get("GZZ_SEED"):
        values["seed"] = os.environ["GZZ_SEED"]
    for f in fields(ExperimentSpec):
        v = getattr(args, f.name, None)
        if v is not None:
            values[f.name] = v
    return ExperimentSpec.from_mapping(values).resolve()


def _floats(text):
    try:
        return [float(v) for v in text.replace(";", ",").split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"expected a comma-separated list of numbers, got {text!r}") from None


def _ints(text):
    return [int(v) for v in _floats(text)]


def write_rows(path, rows):
    cols = []
    for row in rows:
        cols.extend(k for k in row if k not in cols)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols)
        w.writeheader()
        w.writerows(rows)


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, default=_jsonable)
        fh.write("\n")


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, np.generic):
        return x.item()
    raise TypeError(type(x))


def _outdir(spec) -> Path:
    out = Path(spec.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


# -- subcommands --------------------------------------------------------------

def cmd_generate_data(args):
    spec = resolve_spec(args)
    data = build_dataset(spec)
    path = Path(args.out) if args.out else _outdir(spec) / "data.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    data.to_csv(path)
    truth = {k: np.atleast_1d(v).tolist() for k, v in data.truth.items()}
    print(json.dumps({"path": str(path), "n": data.n, "p": data.p, "truth": truth}))


def cmd_run(args):
    spec = resolve_spec(args)
    out = _outdir(spec)
    rows = run_replicas([spec], args.workers)
    write_rows(out / "results.csv", rows)
    keys = ("iact_time", "ess_per_epoch", "epochs")
    summary = {"spec": spec.to_dict(), "spec_hash": spec.spec_hash(),
               "median": {k: float(np.median([r[k] for r in rows])) for k in keys}}
    write_json(out / "summary.json", summary)
    if args.dump_skeleton:
        if spec.sampler == "hmc-gibbs":
            raise ConfigError("--dump-skeleton needs a piecewise deterministic sampler (zz or gzz)")
        model = build_model(spec)
        seed = replica_seed(spec.seed, 0)
        zz = ZigZagConfig(spec.horizon, seed=seed, refresh_gamma=spec.refresh_gamma,
                          batch_size=spec.batch_size)
        start = (np.zeros(model.dim), np.ones(model.dim), model.initial_alpha())
        if spec.sampler == "gzz":
            sk = run_gzz(model, None, start, GzzConfig(zz, spec.eta))
        else:
            sk = run_zigzag(model, start[2], start[:2], zz)
        sk.to_csv(out / "skeleton.csv")
    print(json.dumps(summary["median"]))


def cmd_sweep_eta(args):
    spec = resolve_spec(args)
    rows, fit = run_eta_sweep(spec, _floats(args.etas), args.workers)
    out = _outdir(spec)
    write_rows(out / "results.csv", rows)
    write_json(out / "summary.json", {"spec": spec.to_dict(), "fit": fit})
    print(json.dumps(fit))


def cmd_sweep_batch(args):
    spec = resolve_spec(args)
    rows, summary = run_batch_sweep(spec, _ints(args.batch_sizes), _floats(args.etas), args.workers)
    out = _outdir(spec)
    write_rows(out / "results.csv", rows)
    write_json(out / "summary.json", {"spec": spec.to_dict(), "batch": {str(k): v for k, v in summary.items()}})
    print(json.dumps({str(k): v["iact_ratio_small_to_full"] for k, v in summary.items()}))


def cmd_compare(args):
    spec = resolve_spec(args)
    rows, summary = run_comparison(spec, args.axis, _ints(args.values), args.workers, args.eps_times_n)
    out = _outdir(spec)
    write_rows(out / "results.csv", rows)
    write_json(out / "summary.json", {"spec": spec.to_dict(), "comparison": summary})
    print(json.dumps({"median_ratio": summary["median_ratio"], "spearman": summary["spearman"]}))


def cmd_diagnose(args):
    sk = Skeleton.from_csv(args.skeleton)
    chain = discretize(sk, args.dt, args.n_steps)
    summary = efficiency_summary(chain, args.epochs)
    report = summary.to_dict()
    report["mean"] = [trajectory_moment(sk, i, 1) for i in range(sk.p)]
    report["second_moment"] = [trajectory_moment(sk, i, 2) for i in range(sk.p)]
    report["events"] = hyper_update_counterfactual_check(sk, args.eta)
    if args.out:
        write_json(args.out, report)
    print(json.dumps(report, default=_jsonable))


# -- parser -------------------------------------------------------------------

def _add_spec_flags(p):
    p.add_argument("--config", help="key = value configuration file")
    for f in fields(ExperimentSpec):
        p.add_argument("--" + f.name.replace("_", "-"), dest=f.name, default=None, metavar="V")
    p.add_argument("--workers", type=int, default=1, help="parallel processes for replicas")


def build_parser():
    parser = argparse.ArgumentParser(prog="gibbszz", description="Gibbs zig-zag sampling experiments")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate-data", help="write a synthetic dataset as CSV")
    _add_spec_flags(p)
    p.add_argument("--out", help="dataset path (default OUTPUT_DIR/data.csv)")
    p.set_defaults(func=cmd_generate_data)

    p = sub.add_parser("run", help="run one sampler configuration over its replicas")
    _add_spec_flags(p)
    p.add_argument("--dump-skeleton", action="store_true", help="also write skeleton.csv for replica 0")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep-eta", help="IACT of the slowest component against eta")
    _add_spec_flags(p)
    p.add_argument("--etas", default="0.01,0.1,1,10")
    p.set_defaults(func=cmd_sweep_eta)

    p = sub.add_parser("sweep-batch", help="IACT against mini-batch size at a low and a high eta")
    _add_spec_flags(p)
    p.add_argument("--batch-sizes", default="1,2,5,10,20")
    p.add_argument("--etas", default="0.001,6.47")
    p.set_defaults(func=cmd_sweep_batch)

    p = sub.add_parser("compare", help="GZZ against tuned HMC-within-Gibbs along K or n")
    _add_spec_flags(p)
    p.add_argument("--axis", choices=("K", "n"), default="K")
    p.add_argument("--values", default="2,4,8")
    p.add_argument("--eps-times-n", type=float, default=50.0)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("diagnose", help="summarise a skeleton CSV")
    p.add_argument("skeleton")
    p.add_argument("--dt", type=float)
    p.add_argument("--n-steps", type=int, default=10_000)
    p.add_argument("--epochs", type=float, default=1.0, help="data epochs spent producing the skeleton")
    p.add_argument("--eta", type=float, help="hyperparameter rate for the event-count check")
    p.add_argument("--out", help="write the report as JSON")
    p.set_defaults(func=cmd_diagnose)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except ConfigError as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except EnvelopeViolation as err:
        print(f"envelope violation: {err}", file=sys.stderr)
        return EXIT_ENVELOPE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
