"""Command-line entry point: simulate, train, evaluate, baseline, plan, study.

Every command writes its outputs plus a ``manifest.json`` into ``--out``.
Outputs are staged as temporary files and only renamed into place once the
whole command has succeeded.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import baseline_kmeans as bk
from . import planner
from .dataset import (build_features, read_records_file, split_train_test,
                      records_to_string, TRAFFIC_CLASSES)
from .errors import LoraSenseError
from .metrics import MEASURES, evaluate
from .radio_model import ScenarioConfig, load_config, lot_positions, simulate_scenario
from .svm import KernelSpec, cross_validate, fit_dataset, model_from_json, model_to_json

log = logging.getLogger("lorasense")

DEFAULT_SEED = 42


class RunOutputs:
    """Stages output files and writes the run manifest on success."""

    def __init__(self, out_dir, command, args):
        self.dir = Path(out_dir)
        self.command = command
        self.args = args
        self.staged = {}
        self.inputs = []
        self.started = _now()

    def __enter__(self):
        self.dir.mkdir(parents=True, exist_ok=True)
        return self

    def write(self, name, text):
        tmp = self.dir / f".{name}.partial"
        with open(tmp, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        self.staged[name] = tmp
        return self.dir / name

    def add_input(self, path):
        if path:
            self.inputs.append(str(path))

    def __exit__(self, exc_type, exc, tb):
        if exc_type is not None:
            for tmp in self.staged.values():
                tmp.unlink(missing_ok=True)
            return False
        outputs = {}
        for name, tmp in self.staged.items():
            os.replace(tmp, self.dir / name)
            outputs[name] = _sha256(self.dir / name)
        manifest = {
            "command": self.command,
            "config_path": getattr(self.args, "config", None),
            "seed": self.args.seed,
            "inputs": self.inputs,
            "outputs": outputs,
            "parameters": {k: v for k, v in sorted(vars(self.args).items())
                           if k not in ("func",) and _jsonable(v)},
            "tool_version": __version__,
            "started": self.started,
            "finished": _now(),
        }
        with open(self.dir / "manifest.json", "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return False


def _now():
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _jsonable(v):
    return isinstance(v, (str, int, float, bool, type(None)))


def _scenario(args) -> ScenarioConfig:
    cfg = load_config(args.config) if args.config else ScenarioConfig()
    return cfg.replace(seed=args.seed)


def _kernel(args) -> KernelSpec:
    return KernelSpec(args.kernel, args.gamma if args.kernel == "rbf" else None)


def _features(args, records, gateway_order=None):
    order = gateway_order or sorted({r.gateway_id for r in records})
    return build_features(records, order, args.join_tolerance, args.min_gateways)


def _table_row(report):
    return {r.cls: r.accuracy for r in report.per_class}


# -- commands -----------------------------------------------------------------

def cmd_simulate(args):
    cfg = _scenario(args)
    changes = {}
    if args.duration is not None:
        changes["duration_s"] = args.duration
    if args.interval is not None:
        changes["tx_interval_s"] = args.interval
    cfg = cfg.replace(**changes)
    name = f"records.{args.format}"
    with RunOutputs(args.out, "simulate", args) as run:
        run.add_input(args.config)
        records = list(simulate_scenario(cfg))
        run.write(name, records_to_string(records, args.format))
    log.info("wrote %d records (%d uplinks) to %s", len(records), cfg.n_uplinks, run.dir / name)


def cmd_train(args):
    records = read_records_file(args.records)
    ds = _features(args, records)
    if not ds.is_labeled:
        raise LoraSenseError("training records must carry occupancy labels")
    kernel = _kernel(args)
    with RunOutputs(args.out, "train", args) as run:
        run.add_input(args.records)
        fit_kw = dict(kernel=kernel, C=args.C, tol=args.tol, max_passes=args.max_passes,
                      seed=args.seed)
        cv = cross_validate(ds, args.folds, kernel, args.C, args.tol, args.seed, args.max_passes)
        lines = ["fold," + ",".join(MEASURES)]
        for i, rep in enumerate(cv.folds):
            lines.append(f"{i}," + ",".join(_num(rep.macro[m]) for m in MEASURES))
        lines.append("mean," + ",".join(_num(cv.mean[m]) for m in MEASURES))
        run.write("cv_folds.csv", "\n".join(lines) + "\n")
        train = ds
        if args.split is not None:
            train, test = split_train_test(ds, args.split, args.seed, stratified=True)
        model = fit_dataset(train, **fit_kw)
        if args.split is not None:
            report = evaluate(test.labels, model.predict_many(test.X), TRAFFIC_CLASSES)
            run.write("fig4_metrics.csv", report.to_csv())
            run.write("holdout_report.json", report.to_json())
            log.info("holdout macro accuracy %.4f", report.macro["accuracy"])
        run.write(args.model_name, model_to_json(model))
    log.info("cross-validation mean macro accuracy %s", _num(cv.mean["accuracy"]))


def cmd_evaluate(args):
    model = model_from_json(Path(args.model).read_text(encoding="utf-8"))
    records = read_records_file(args.records)
    ds = _features(args, records, model.gateway_order or None)
    if not ds.is_labeled:
        raise LoraSenseError("evaluation records must carry occupancy labels")
    with RunOutputs(args.out, "evaluate", args) as run:
        run.add_input(args.model)
        run.add_input(args.records)
        report = evaluate(ds.labels, model.predict_many(ds.X), TRAFFIC_CLASSES)
        run.write("fig4_metrics.csv", report.to_csv())
        run.write("report.json", report.to_json())
    log.info("macro accuracy %s over %d vectors", _num(report.macro["accuracy"]), report.n_samples)


def cmd_baseline(args):
    records = read_records_file(args.records)
    ds = _features(args, records)
    if not ds.is_labeled:
        raise LoraSenseError("baseline records must carry occupancy labels")
    train, test = ds, ds
    if args.split is not None:
        train, test = split_train_test(ds, args.split, args.seed, stratified=True)
    with RunOutputs(args.out, "baseline", args) as run:
        run.add_input(args.records)
        model = bk.fit(train, args.k, args.seed, args.max_iter, args.restarts)
        model = bk.assign_classes(model, train)
        report = evaluate(test.labels, model.predict_many(test.X), TRAFFIC_CLASSES)
        acc = _table_row(report)
        header = "metric," + ",".join(f"class_{c}" for c in TRAFFIC_CLASSES)
        row = "accuracy," + ",".join(_num(acc[c]) for c in TRAFFIC_CLASSES)
        run.write("table1_kmeans.csv", header + "\n" + row + "\n")
        run.write("kmeans_metrics.csv", report.to_csv())
        run.write("kmeans_model.json", bk.to_json(model))
    log.info("k-means macro accuracy %s", _num(report.macro["accuracy"]))


def cmd_plan(args):
    with RunOutputs(args.out, "plan", args) as run:
        if args.map:
            run.add_input(args.map)
            rmap = planner.read_radio_map(Path(args.map).read_text(encoding="utf-8"))
        else:
            cfg = _scenario(args)
            run.add_input(args.config)
            positions = planner.survey_grid(cfg, args.grid_x, args.grid_y)
            groups = planner.simulate_survey(cfg, positions, args.samples)
            rmap = planner.build_radio_map(groups, positions)
            run.write("radio_map.csv", planner.write_radio_map(rmap))
        chosen = planner.select_points(rmap, args.m, args.score)
        by_id = {p.point_id: p for p in rmap.points}
        lines = ["rank,point_id,x_m,y_m,score"]
        for rank, pid in enumerate(chosen, 1):
            p = by_id[pid]
            lines.append(f"{rank},{pid},{p.position[0]!r},{p.position[1]!r},"
                         f"{planner.point_score(p, args.score)!r}")
        run.write("selected_points.csv", "\n".join(lines) + "\n")
    log.info("selected %d of %d points", len(chosen), len(rmap.points))


def cmd_study(args):
    cfg = _scenario(args)
    if args.duration is not None:
        cfg = cfg.replace(duration_s=args.duration)
    candidates = planner.parse_positions(args.positions) if args.positions else lot_positions(cfg)
    params = planner.PipelineParams(args.split, args.join_tolerance, args.min_gateways,
                                    args.kernel, args.gamma, args.C, args.tol, args.max_passes)
    with RunOutputs(args.out, "study", args) as run:
        run.add_input(args.config)
        rows = planner.position_study(cfg, candidates, params)
        run.write("fig5_position.csv", planner.write_study(rows))
    for r in rows:
        log.info("%s: macro accuracy %.4f", r.position_id, r.accuracy_macro)


def _num(v):
    return "undefined" if v is None or not isinstance(v, (float, int, np.floating)) else repr(float(v))


# -- argument parsing ---------------------------------------------------------

def _global_flags(p, suppress):
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--config", default=d(None), metavar="PATH",
                   help="scenario configuration file (flat key = value lines)")
    p.add_argument("--seed", type=int, default=d(DEFAULT_SEED), metavar="U64",
                   help="RNG seed (default 42)")
    p.add_argument("--out", default=d("."), metavar="DIR", help="output directory (default .)")


def _feature_flags(p):
    p.add_argument("--join-tolerance", type=float, default=5.0, metavar="S",
                   help="uplink join window in seconds (default 5)")
    p.add_argument("--min-gateways", type=int, default=2, metavar="N",
                   help="drop uplinks heard by fewer gateways (count, default 2)")


def _svm_flags(p):
    p.add_argument("--kernel", choices=("rbf", "linear"), default="rbf", help="SVM kernel")
    p.add_argument("--gamma", type=float, default=None, metavar="G",
                   help="RBF width in 1/(standardized unit)^2; default 1/(features * mean variance)")
    p.add_argument("--C", type=float, default=1.0, help="soft-margin penalty (dimensionless, default 1)")
    p.add_argument("--tol", type=float, default=1e-3, help="KKT tolerance (dimensionless, default 1e-3)")
    p.add_argument("--max-passes", type=int, default=50, metavar="N",
                   help="SMO passes without progress before stopping (count, default 50)")


def build_parser():
    parser = argparse.ArgumentParser(prog="lorasense", description=__doc__.splitlines()[0])
    _global_flags(parser, suppress=False)
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a labeled synthetic RSSI corpus")
    _global_flags(p, suppress=True)
    p.add_argument("--duration", type=float, default=None, metavar="S",
                   help="simulated span in seconds (default 420000 = 7000 uplinks)")
    p.add_argument("--interval", type=float, default=None, metavar="S",
                   help="uplink period in seconds (default 60)")
    p.add_argument("--format", choices=("csv", "jsonl"), default="csv", help="record file format")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="train the one-vs-one SVM with cross-validation")
    _global_flags(p, suppress=True)
    p.add_argument("--records", required=True, metavar="PATH", help="labeled records (csv/jsonl)")
    p.add_argument("--folds", type=int, default=5, metavar="K", help="cross-validation folds (count, default 5)")
    p.add_argument("--split", type=float, default=None, metavar="FRACTION",
                   help="also fit on this train share and report on the rest (ratio, e.g. 0.7)")
    p.add_argument("--model-name", default="model.json", metavar="FILE", help="model file name inside --out")
    _feature_flags(p)
    _svm_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a trained model on labeled records")
    _global_flags(p, suppress=True)
    p.add_argument("--model", required=True, metavar="PATH", help="model file from train")
    p.add_argument("--records", required=True, metavar="PATH", help="labeled records (csv/jsonl)")
    _feature_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("baseline", help="K-means clustering baseline with majority mapping")
    _global_flags(p, suppress=True)
    p.add_argument("--records", required=True, metavar="PATH", help="labeled records (csv/jsonl)")
    p.add_argument("--k", type=int, default=5, help="cluster count (default 5)")
    p.add_argument("--restarts", type=int, default=10, metavar="N", help="seeded restarts (count, default 10)")
    p.add_argument("--max-iter", type=int, default=300, metavar="N", help="Lloyd iterations per restart (count)")
    p.add_argument("--split", type=float, default=0.7, metavar="FRACTION",
                   help="fit on this train share, report on the rest (ratio, default 0.7)")
    _feature_flags(p)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("plan", help="select end-node deployment points from a radio map")
    _global_flags(p, suppress=True)
    p.add_argument("--map", default=None, metavar="PATH",
                   help="radio map CSV; when omitted a 28-point survey is simulated from --config")
    p.add_argument("--m", type=int, default=16, help="points to select (count, default 16)")
    p.add_argument("--score", choices=tuple(planner.SCORES), default="sum",
                   help="aggregate of per-gateway RSSI variance (dB^2)")
    p.add_argument("--samples", type=int, default=60, metavar="N",
                   help="uplinks per surveyed point (count, default 60)")
    p.add_argument("--grid-x", type=int, default=7, metavar="N", help="survey columns (count)")
    p.add_argument("--grid-y", type=int, default=4, metavar="N", help="survey rows (count)")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("study", help="pipeline accuracy per candidate node position")
    _global_flags(p, suppress=True)
    p.add_argument("--positions", default=None, metavar="SPEC",
                   help="id:x,y[,z];... in metres (default lot-center and lot-entrance)")
    p.add_argument("--duration", type=float, default=None, metavar="S", help="simulated span in seconds")
    p.add_argument("--split", type=float, default=0.7, metavar="FRACTION", help="train share (ratio)")
    _feature_flags(p)
    _svm_flags(p)
    p.set_defaults(func=cmd_study)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except LoraSenseError as exc:
        print(f"lorasense {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"lorasense {args.command}: error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
