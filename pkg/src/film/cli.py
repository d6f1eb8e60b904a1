"""``film`` command line.

Exit codes: 0 success, 1 run or training failure, 2 invalid input.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .dataset import Column, class_stats, load_csv, load_features
from .errors import FilmError, ValidationError
from .experiment import load_config, load_records, run_experiment
from .ipip import IpipConfig, IpipModel, train_ipip
from .learners import LearnerSpec, dumps
from .metrics import UIC_METRICS
from .uic import GaussianParams, bias_profile, compare_with_uic, pooled_abs_correlations, uic_score

log = logging.getLogger("film")

BUNDLE_FORMAT = "film-ipip-bundle"


def _read_json(path) -> dict:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read {path}: {exc}") from None
    if not isinstance(obj, dict):
        raise ValidationError(f"{path} is not a JSON object")
    return obj


def _emit(text: str, out) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text, encoding="utf-8")


def _seed(args, cfg_seed: int = 0) -> int:
    """Flag beats FILM_SEED beats the config file."""
    if args.seed is not None:
        return args.seed
    if os.environ.get("FILM_SEED"):
        try:
            return int(os.environ["FILM_SEED"])
        except ValueError:
            raise ValidationError(f"FILM_SEED={os.environ['FILM_SEED']!r} is not an integer") from None
    return cfg_seed


# ---------------------------------------------------------------- commands

def cmd_ingest(args) -> int:
    d = load_csv(args.csv, args.target, args.positive, args.delimiter)
    _emit(dumps(d.summary()), args.out)
    return 0


def cmd_experiment(args) -> int:
    flags = {"seed": args.seed, "out": args.out}
    if args.dataset is not None:
        flags["dataset"] = args.dataset
    if args.target is not None:
        flags["target_column"] = args.target
    cfg = load_config(args.config, **flags)
    result = run_experiment(cfg, out_dir=cfg.out, jobs=args.jobs)
    summary = {"out": str(result.out_dir), "records": len(result.records), "failed_cells": len(result.errors)}
    if result.report is not None:
        summary["winner"] = result.report.winner
    sys.stdout.write(dumps(summary))
    return result.exit_code


def _ipip_settings(args) -> tuple[LearnerSpec, IpipConfig, int]:
    cfg = _read_json(args.config) if args.config else {}
    unknown = set(cfg) - {"learner", "ipip", "seed"}
    if unknown:
        raise ValidationError(f"unknown config key(s): {sorted(unknown)}")
    learner = cfg.get("learner", {"kind": args.learner})
    if isinstance(learner, str):
        learner = {"kind": learner}
    ipip = dict(cfg.get("ipip", {}))
    if args.b_s is not None:
        ipip["b_s_override"] = args.b_s
    if args.b_e is not None:
        ipip["b_e_override"] = args.b_e
    try:
        ipip_cfg = IpipConfig(**ipip)
    except TypeError as exc:
        raise ValidationError(f"bad ipip config: {exc}") from None
    seed = _seed(args, int(cfg.get("seed", 0)))
    return LearnerSpec.from_json({**learner, "seed": seed}), ipip_cfg, seed


def cmd_ipip_train(args) -> int:
    d = load_csv(args.csv, args.target, args.positive, args.delimiter)
    learner, ipip_cfg, seed = _ipip_settings(args)
    model = train_ipip(d, learner, ipip_cfg, seed)
    bundle = {
        "format": BUNDLE_FORMAT,
        "schema": {
            "target_column": args.target,
            "positive_label": d.positive_label,
            "negative_label": d.negative_label,
            "columns": [{"name": c.name, "levels": None if c.levels is None else list(c.levels)}
                        for c in d.columns],
        },
        "model": model.to_json(),
    }
    out = args.out or "ipip_model.json"
    _emit(dumps(bundle), out)
    sys.stdout.write(dumps({"model": out, "b_s": model.b_s, "b_e": model.b_e, "n_models": model.n_models,
                            "forced_ensembles": sum(model.forced)}))
    return 0


def cmd_ipip_predict(args) -> int:
    bundle = _read_json(args.model)
    if bundle.get("format") != BUNDLE_FORMAT:
        raise ValidationError(f"{args.model} is not a {BUNDLE_FORMAT} file")
    schema = bundle["schema"]
    columns = [Column(c["name"], None if c["levels"] is None else tuple(c["levels"])) for c in schema["columns"]]
    model = IpipModel.from_json(bundle["model"])
    X = load_features(args.csv, columns, schema["target_column"], args.delimiter)
    tally = model.vote(X)
    names = {1: schema["positive_label"], 0: schema["negative_label"]}
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["row_index", "label", "ensemble_votes", "model_votes_per_ensemble"])
    votes = np.array(tally.model_votes)  # ensembles x rows
    for i in range(X.shape[0]):
        per_ens = ";".join(f"{int(votes[e, i])}/{size}" for e, size in enumerate(tally.ensemble_sizes))
        w.writerow([i, names[int(tally.labels[i])], f"{int(tally.ensemble_votes[i])}/{len(tally.ensemble_sizes)}",
                    per_ens])
    _emit(buf.getvalue(), args.out)
    return 0


def _run_gaussian(run_dir: Path) -> GaussianParams:
    manifest = run_dir / "manifest.json"
    if manifest.exists():
        return GaussianParams(**_read_json(manifest)["config"]["gaussian"])
    return GaussianParams()


def cmd_report(args) -> int:
    from . import plotting

    out = Path(args.out or "film-report")
    out.mkdir(parents=True, exist_ok=True)
    reports = []
    for k, run in enumerate(args.runs):
        run = Path(run)
        profile = bias_profile(load_records(run))
        report = uic_score(profile, params=_run_gaussian(run))
        reports.append((profile, report))
        plotting.bias_heatmap(profile, out / f"bias_heatmap_{k}.png", title=run.name)
    pooled = pooled_abs_correlations(reports)

    # pooling over every (run, technique) pair, and over techniques after averaging across runs
    by_technique = {}
    for m in pooled:
        acc = {}
        for (profile, report), chunk in zip(reports, _split(pooled[m], reports)):
            for t, v in zip(profile.techniques, chunk):
                acc.setdefault(t, []).append(v)
        by_technique[m] = [float(np.mean(acc[t])) for t in sorted(acc)]
    poolings = {"run_technique": pooled, "technique": by_technique}

    result = {}
    lines = ["pooling,metric,median_abs_r,uic_median_abs_r,uic_lower,p_value,p_adjusted"]
    for name, data in poolings.items():
        comps = compare_with_uic(data, UIC_METRICS)
        result[name] = {"n": len(data["uic"]), "comparisons": [c.__dict__ for c in comps]}
        for c in comps:
            lines.append(",".join([name, c.metric, repr(c.median_abs_r), repr(c.uic_median_abs_r),
                                   str(c.uic_lower).lower(), "" if c.p_value is None else repr(c.p_value),
                                   "" if c.p_adjusted is None else repr(c.p_adjusted)]))
        plotting.pooled_boxplot(data, comps, out / f"pooled_abs_r_{name}.png", title=f"pooled by {name}")
    plotting.gaussian_curves(out / "gaussian_weights.png")
    (out / "comparison.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    (out / "comparison.json").write_text(dumps({"runs": [str(r) for r in args.runs], "poolings": result}),
                                         encoding="utf-8")
    sys.stdout.write(dumps({"out": str(out), "runs": len(args.runs)}))
    return 0


def _split(values, reports):
    """Cut a pooled list back into per-run chunks (one value per technique)."""
    start = 0
    for profile, _ in reports:
        n = len(profile.techniques)
        yield values[start:start + n]
        start += n


# ---------------------------------------------------------------- parser

def _common(p, out_help: str) -> None:
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--seed", type=int, help="master seed (overrides FILM_SEED and the config)")
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1, help="worker processes")
    p.add_argument("--out", help=out_help)


def _csv_args(p) -> None:
    p.add_argument("csv", help="input CSV file")
    p.add_argument("--target", default="class", help="target column name (default: class)")
    p.add_argument("--positive", help="positive label (default: the minority label)")
    p.add_argument("--delimiter", default=",")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="film", description="Imbalanced-classification evaluation toolkit.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="load a CSV and print its class summary")
    _csv_args(p)
    _common(p, "write the summary JSON here instead of stdout")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("experiment", help="run the full proportion-grid experiment")
    p.add_argument("--dataset", help="CSV path (overrides the config)")
    p.add_argument("--target", help="target column (overrides the config)")
    _common(p, "run directory")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("ipip", help="train or apply an IPIP ensemble")
    ipip_sub = p.add_subparsers(dest="ipip_command", required=True)
    t = ipip_sub.add_parser("train")
    _csv_args(t)
    t.add_argument("--learner", default="logistic", choices=("logistic", "random_forest"))
    t.add_argument("--b-s", type=int, dest="b_s", help="override the number of balanced subsets")
    t.add_argument("--b-e", type=int, dest="b_e", help="override the per-ensemble model cap")
    _common(t, "model file (default: ipip_model.json)")
    t.set_defaults(func=cmd_ipip_train)
    q = ipip_sub.add_parser("predict")
    q.add_argument("model", help="model file written by 'film ipip train'")
    q.add_argument("csv", help="rows to label")
    q.add_argument("--delimiter", default=",")
    _common(q, "predictions CSV (default: stdout)")
    q.set_defaults(func=cmd_ipip_predict)

    p = sub.add_parser("report", help="pool bias correlations over runs and render figures")
    p.add_argument("runs", nargs="+", help="run directories written by 'film experiment'")
    _common(p, "report directory (default: film-report)")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.jobs < 1:
        print("film: --jobs must be >= 1", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"film: error: {exc}", file=sys.stderr)
        return 2
    except FilmError as exc:
        print(f"film: failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
