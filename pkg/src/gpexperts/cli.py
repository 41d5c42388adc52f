"""Command-line entry point: ``gpexperts {fit,predict,bench,sweep,synth}``.

Exit codes: 0 success, 1 config/parse/IO error, 2 numerical failure
(every cell failed, or the fit itself could not be evaluated).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .aggregate import Method, aggregate
from .bench.data import read_matrix, synth_1d_arrays
from .bench.experiment import (
    CellSpec,
    ExperimentConfig,
    SweepAxis,
    prepare_split,
    run_experiment,
    sweep,
    train_for,
)
from .bench.report import ReportFormat, emit_report
from .ensemble import ExpertPool, predict_experts, predict_grbcm, with_grbcm
from .errors import InvalidArgumentError, NumericalFailureError, ParseError
from .gp import Dataset, lift_to_y, train_gp
from .numerics import Hyperparameters
from .partition import Partition, Strategy

log = logging.getLogger("gpexperts")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2
MODEL_FORMAT = "gpexperts-model"


def _common(p: argparse.ArgumentParser):
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--threads", type=int, help="worker threads for per-expert work")
    p.add_argument("--out", help="output file (default: stdout)")


def _experiment_args(p: argparse.ArgumentParser):
    p.add_argument("--config", help="experiment config (JSON)")
    p.add_argument("--data", help="CSV dataset; overrides the config dataset")
    p.add_argument("--target", help="target column name (default: last column)")
    p.add_argument("--synthetic", type=int, metavar="N", help="use the synthetic 1-D dataset with N points")
    p.add_argument("--partition", choices=[s.value for s in Strategy])
    p.add_argument("--points-per-expert", type=int)
    p.add_argument("--test-fraction", type=float)
    p.add_argument("--temperature", type=float, help="temperature for every softmax cell")
    p.add_argument("--cells", help="comma-separated cell presets, e.g. gPoE_var,BAR_var")
    p.add_argument("--no-baselines", action="store_true")


def _report_args(p: argparse.ArgumentParser):
    p.add_argument("--format", choices=[f.value for f in ReportFormat], default="csv")
    p.add_argument("--timings", action="store_true", help="fill the seconds column (makes output run-dependent)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gpexperts", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("fit", help="train an expert pool and save it as JSON")
    _experiment_args(p)
    _common(p)

    p = sub.add_parser("predict", help="predict with a saved pool")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True, help="CSV of feature columns with a header row")
    p.add_argument("--cell", default="gPoE_var", help="cell preset (default gPoE_var)")
    p.add_argument("--temperature", type=float, default=100.0)
    _common(p)

    p = sub.add_parser("bench", help="evaluate every configured cell on one pool")
    _experiment_args(p)
    _report_args(p)
    _common(p)

    p = sub.add_parser("sweep", help="sweep temperature or points per expert")
    _experiment_args(p)
    _report_args(p)
    p.add_argument("--axis", required=True, choices=[a.value for a in SweepAxis])
    p.add_argument("--values", required=True, help="comma-separated values")
    _common(p)

    p = sub.add_parser("synth", help="write the synthetic 1-D dataset as CSV")
    p.add_argument("--n", type=int, default=300)
    p.add_argument("--noise-std", type=float, default=0.1)
    _common(p)
    return parser


def _load_config(args) -> ExperimentConfig:
    raw = {}
    base = None
    if args.config:
        path = Path(args.config)
        try:
            raw = json.loads(path.read_text())
        except OSError as err:
            raise ParseError(f"cannot read config {path}: {err}") from err
        except json.JSONDecodeError as err:
            raise ParseError(f"{path}: invalid JSON: {err}") from err
        base = path.parent
    if args.data:
        raw["dataset"] = {"path": str(Path(args.data).resolve()), "target": args.target}
    elif args.synthetic:
        raw["dataset"] = {"synthetic": {"n": args.synthetic}}
    elif args.target and "dataset" in raw:
        raw["dataset"]["target"] = args.target
    overrides = {
        "seed": args.seed,
        "workers": args.threads,
        "partition": args.partition,
        "points_per_expert": args.points_per_expert,
        "test_fraction": args.test_fraction,
        "temperature": args.temperature,
    }
    raw.update({k: v for k, v in overrides.items() if v is not None})
    if args.cells:
        raw["cells"] = [c.strip() for c in args.cells.split(",") if c.strip()]
    if args.no_baselines:
        raw["baselines"] = False
    if "dataset" not in raw:
        raise ParseError("no dataset: pass --config, --data or --synthetic")
    return ExperimentConfig.from_dict(raw, base_dir=base)


def _write(text: str, out):
    if out:
        Path(out).write_text(text, encoding="utf-8", newline="")
    else:
        sys.stdout.write(text)


def _report_exit(rows, args, provenance) -> int:
    text = emit_report(rows, args.format, args.out, provenance, args.timings)
    if not args.out:
        sys.stdout.write(text)
    cells = [r for r in rows if r.method not in ("full_gp", "linear")]
    if cells and all(r.failed for r in cells):
        log.error("every aggregation cell failed")
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_bench(args) -> int:
    config = _load_config(args)
    rows = run_experiment(config)
    return _report_exit(rows, args, config.provenance())


def cmd_sweep(args) -> int:
    config = _load_config(args)
    try:
        values = [float(v) for v in args.values.split(",") if v.strip()]
    except ValueError as err:
        raise ParseError(f"--values must be numbers: {err}") from err
    rows = sweep(config, SweepAxis(args.axis), values)
    return _report_exit(rows, args, config.provenance(axis=args.axis, values=values))


def cmd_synth(args) -> int:
    x, y = synth_1d_arrays(args.n, 0 if args.seed is None else args.seed, args.noise_std)
    lines = ["x,y"] + [f"{a!r},{b!r}" for a, b in zip(x.tolist(), y.tolist())]
    _write("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def cmd_fit(args) -> int:
    config = _load_config(args)
    split = prepare_split(config)
    pool = train_for(config, split)
    data = split.train
    model = {
        "format": MODEL_FORMAT,
        "version": __version__,
        "config": config.to_dict(),
        "hyperparameters": pool.shared_hyp.to_dict(),
        "lml": pool.fit.lml,
        "converged": pool.fit.converged,
        "standardization": data.standardization(),
        "partition": {"strategy": pool.partition.strategy.value, "seed": pool.partition.seed,
                      "n_experts": pool.n_experts, "assignments": pool.partition.assignments.tolist()},
        "X": data.X.tolist(),
        "y": data.y.tolist(),
    }
    _write(json.dumps(model, indent=1) + "\n", args.out)
    log.info("fitted %d experts, LML %.4f", pool.n_experts, pool.fit.lml)
    return EXIT_OK


def _load_model(path):
    try:
        m = json.loads(Path(path).read_text())
    except OSError as err:
        raise ParseError(f"cannot read model {path}: {err}") from err
    except json.JSONDecodeError as err:
        raise ParseError(f"{path}: invalid JSON: {err}") from err
    if not isinstance(m, dict) or m.get("format") != MODEL_FORMAT:
        raise ParseError(f"{path}: not a saved gpexperts model")
    try:
        s = m["standardization"]
        data = Dataset(np.asarray(m["X"], dtype=float), np.asarray(m["y"], dtype=float),
                       s["feature_means"], s["feature_stds"], s["target_mean"], s["target_std"])
        hyp = Hyperparameters.from_dict(m["hyperparameters"])
        p = m["partition"]
        part = Partition(np.asarray(p["assignments"]), int(p["n_experts"]), Strategy(p["strategy"]), int(p["seed"]))
        cfg = m.get("config", {})
    except (KeyError, TypeError, ValueError) as err:
        raise ParseError(f"{path}: malformed model: {err}") from err
    experts = tuple(train_gp(data.subset(r), hyp, name=f"expert {j} covariance")
                    for j, r in enumerate(part.subsets()))
    pool = ExpertPool(experts, hyp, part)
    return pool, data, cfg


def cmd_predict(args) -> int:
    workers = args.threads or 1
    pool, data, cfg = _load_model(args.model)
    cell = CellSpec.from_dict(args.cell, args.temperature)
    X = data.standardize_X(_read_features(args.input, data.dim))
    c = cell.config
    if c.method is Method.GRBCM:
        seed = cfg.get("seed", 0) if args.seed is None else args.seed
        pool = with_grbcm(pool, data, cfg.get("grbcm_master_fraction"), seed, workers)
        sl = predict_grbcm(pool, X, c.space, workers)
    else:
        sl = predict_experts(pool, X, c.space, workers)
    res = aggregate(c, sl, on_failure="nan")
    pred = lift_to_y(res.prediction, pool.shared_hyp.noise_var)
    mean = data.raw_y(pred.mean)
    var = pred.variance * data.target_std ** 2
    lines = ["mean,variance"] + [f"{a!r},{b!r}" for a, b in zip(mean.tolist(), var.tolist())]
    _write("\n".join(lines) + "\n", args.out)
    if np.any(res.failed):
        log.warning("%d test point(s) had non-positive aggregate precision", int(np.count_nonzero(res.failed)))
        if np.all(res.failed):
            return EXIT_NUMERICAL
    return EXIT_OK


def _read_features(path, dim):
    # dim columns are all features; dim + 1 means the last one is a target and is ignored
    header, table = read_matrix(path)
    if len(header) == dim:
        return table
    if len(header) == dim + 1:
        return table[:, :-1]
    raise ParseError(f"{path}: expected {dim} feature columns (optionally plus a target), found {len(header)}")


COMMANDS = {"fit": cmd_fit, "predict": cmd_predict, "bench": cmd_bench, "sweep": cmd_sweep, "synth": cmd_synth}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return COMMANDS[args.verb](args)
    except (ParseError, InvalidArgumentError, OSError) as err:
        log.error("%s", err)
        return EXIT_CONFIG
    except NumericalFailureError as err:
        log.error("numerical failure: %s", err)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
