"""The full evaluation pipeline behind ``film experiment``.

A run re-proportions one dataset along a grid of minority proportions, trains
every (technique, learner) pair on every stratified fold of every variant,
and writes the per-cell metrics, the bias profile, the UIC report and the
concordance outputs to a run directory.

Each cell's seed is derived from the master seed and the cell's identity, so
cells can run in any order and in any number of worker processes. Finished
cells leave a marker under ``cells/`` that a rerun with the same config reuses.
"""

from __future__ import annotations

import hashlib
import json
import logging
import multiprocessing
import os
import traceback
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .concordance import agreement_matrix, discordance_ratio, render_concordance_svg, win_ratios
from .dataset import Dataset, class_stats, load_csv, proportion_grid, resample_to_proportion, stratified_kfold
from .errors import FilmError, ValidationError
from .ipip import IpipConfig
from .learners import LearnerSpec, default_grid, dumps, grid_points, grid_search
from .metrics import UIC_METRICS, evaluate
from .records import RunRecord
from .synthetic import two_gaussians
from .techniques import TECHNIQUES, fit_technique
from .uic import GaussianParams, bias_profile, uic_score
from .seeding import derive_seed

log = logging.getLogger(__name__)

SEED_ENV = "FILM_SEED"


@dataclass(frozen=True)
class LearnerEntry:
    kind: str
    params: dict = field(default_factory=dict)
    grid: dict | None = None  # searched only when the config sets tune=true
    label: str = ""

    @property
    def name(self) -> str:
        return self.label or self.kind


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: str | None = None
    target_column: str = "class"
    positive_label: str | None = None
    delimiter: str = ","
    synthetic: dict | None = None  # keyword arguments for two_gaussians, used when dataset is None
    techniques: tuple = TECHNIQUES
    technique_params: dict = field(default_factory=dict)
    learners: tuple = (LearnerEntry("logistic"), LearnerEntry("random_forest"))
    n: int = 6
    folds: int = 5
    tune: bool = False
    gaussian: dict = field(default_factory=lambda: {"a": 1.0, "b": 0.0, "c": 0.25})
    ipip: dict = field(default_factory=dict)
    seed: int = 0
    out: str = "film-run"

    @classmethod
    def from_json(cls, obj: dict) -> "ExperimentConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(obj) - known
        if unknown:
            raise ValidationError(f"unknown config key(s): {sorted(unknown)}")
        obj = dict(obj)
        if "learners" in obj:
            learners = []
            for entry in obj["learners"]:
                if isinstance(entry, str):
                    entry = {"kind": entry}
                try:
                    learners.append(LearnerEntry(**entry))
                except TypeError as exc:
                    raise ValidationError(f"bad learner entry {entry!r}: {exc}") from None
            obj["learners"] = tuple(learners)
        if "techniques" in obj:
            obj["techniques"] = tuple(obj["techniques"])
        return cls(**obj)

    def to_json(self) -> dict:
        out = asdict(self)
        out["techniques"] = list(self.techniques)
        out["learners"] = [asdict(e) for e in self.learners]
        return out

    def with_overrides(self, **kw) -> "ExperimentConfig":
        obj = self.to_json()
        obj.update({k: v for k, v in kw.items() if v is not None})
        return ExperimentConfig.from_json(obj)

    def config_hash(self) -> str:
        """Hash of everything that affects results (the output directory does not)."""
        obj = self.to_json()
        obj.pop("out")
        return hashlib.sha256(dumps(obj).encode("utf-8")).hexdigest()

    def learner_specs(self) -> list[tuple[str, LearnerSpec]]:
        return [(e.name, LearnerSpec(e.kind, e.params, self.seed)) for e in self.learners]

    def ipip_config(self) -> IpipConfig:
        try:
            return IpipConfig(**self.ipip)
        except TypeError as exc:
            raise ValidationError(f"bad ipip config: {exc}") from None

    def gaussian_params(self) -> GaussianParams:
        try:
            return GaussianParams(**self.gaussian)
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"bad gaussian params: {exc}") from None

    def validate(self) -> None:
        """Check every precondition that does not need the data."""
        if self.dataset is None and self.synthetic is None:
            raise ValidationError("config needs a dataset path or a synthetic spec")
        if not self.techniques:
            raise ValidationError("no techniques configured")
        bad = [t for t in self.techniques if t not in TECHNIQUES]
        if bad:
            raise ValidationError(f"unknown technique(s) {bad}; expected a subset of {TECHNIQUES}")
        if len(set(self.techniques)) != len(self.techniques):
            raise ValidationError("techniques must be distinct")
        if not self.learners:
            raise ValidationError("no learners configured")
        names = [e.name for e in self.learners]
        if len(set(names)) != len(names):
            raise ValidationError(f"learner names must be distinct, got {names}; set a label")
        if any("/" in n for n in names):
            raise ValidationError("learner names may not contain '/'")
        for name, spec in self.learner_specs():
            grid = next(e.grid for e in self.learners if e.name == name)
            if grid is not None:
                for point in grid_points(grid):
                    spec.with_params(**point)
        if self.n < 6 or self.n % 2:
            raise ValidationError(f"n must be even and >= 6, got {self.n}")
        if self.folds < 2:
            raise ValidationError(f"folds must be >= 2, got {self.folds}")
        self.ipip_config()
        self.gaussian_params()
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ValidationError(f"seed must be a non-negative integer, got {self.seed!r}")


def load_config(path=None, env=None, **flags) -> ExperimentConfig:
    """Merge a JSON config file, ``FILM_SEED`` and command-line flags, later ones winning."""
    obj = {}
    if path is not None:
        try:
            obj = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"cannot read config {path}: {exc}") from None
        if not isinstance(obj, dict):
            raise ValidationError(f"config {path} is not a JSON object")
    env = os.environ if env is None else env
    if env.get(SEED_ENV):
        try:
            obj["seed"] = int(env[SEED_ENV])
        except ValueError:
            raise ValidationError(f"{SEED_ENV}={env[SEED_ENV]!r} is not an integer") from None
    obj.update({k: v for k, v in flags.items() if v is not None})
    return ExperimentConfig.from_json(obj)


def load_dataset(cfg: ExperimentConfig) -> Dataset:
    if cfg.dataset is not None:
        return load_csv(cfg.dataset, cfg.target_column, cfg.positive_label, cfg.delimiter)
    try:
        return two_gaussians(**cfg.synthetic)
    except TypeError as exc:
        raise ValidationError(f"bad synthetic spec: {exc}") from None


# ---------------------------------------------------------------- planning

@dataclass(frozen=True)
class Cell:
    variant: int
    technique: str
    learner: str
    fold: int

    @property
    def key(self) -> str:
        return f"v{self.variant:02d}__{self.technique}__{self.learner}__f{self.fold:02d}"

    @property
    def technique_id(self) -> str:
        return f"{self.technique}/{self.learner}"

    def seed(self, master: int) -> int:
        return derive_seed(master, self.variant, self.technique, self.learner, self.fold)


@dataclass
class Plan:
    cfg: ExperimentConfig
    variants: list[Dataset]
    targets: list[float]
    folds: list[list]  # per variant, the SplitPairs
    learners: dict[str, LearnerSpec]
    tuning: dict[str, list]
    cells: list[Cell]

    @property
    def p_min(self) -> list[float]:
        return [class_stats(v).p_min for v in self.variants]


def plan_experiment(cfg: ExperimentConfig, dataset: Dataset | None = None) -> Plan:
    """Build every variant and fold up front so data problems surface before any training."""
    cfg.validate()
    d = dataset if dataset is not None else load_dataset(cfg)
    grid = proportion_grid(class_stats(d).p_min, cfg.n)
    variants = [d] + [resample_to_proportion(d, p, derive_seed(cfg.seed, "variant", i))
                      for i, p in enumerate(grid.targets, start=1)]
    folds = [stratified_kfold(v, cfg.folds, derive_seed(cfg.seed, "folds", i)) for i, v in enumerate(variants)]
    if "ipip" in cfg.techniques or "smote" in cfg.techniques:
        smallest = min(class_stats(s.train).n_min for fs in folds for s in fs)
        if smallest < 4:
            raise ValidationError(f"a training fold has only {smallest} minority rows; SMOTE and IPIP need more")

    learners, tuning = {}, {}
    for entry, (name, spec) in zip(cfg.learners, cfg.learner_specs()):
        if cfg.tune:
            grid_spec = entry.grid or default_grid(entry.kind, d.n_features)
            best, table = grid_search(entry.kind, grid_spec, d, cfg.folds, derive_seed(cfg.seed, "tune", name), spec)
            spec = best.with_seed(cfg.seed)
            tuning[name] = [{"params": p, "kappa": k} for p, k in table]
        learners[name] = spec
    cells = [Cell(v, t, name, f)
             for v in range(len(variants)) for t in cfg.techniques for name in learners
             for f in range(cfg.folds)]
    cells.sort(key=lambda c: c.key)
    return Plan(cfg, variants, list(grid.with_original()), folds, learners, tuning, cells)


# ---------------------------------------------------------------- execution

_PLAN: Plan | None = None  # read-only in forked workers


def run_cell(plan: Plan, cell: Cell) -> RunRecord:
    split = plan.folds[cell.variant][cell.fold]
    cfg = plan.cfg
    model = fit_technique(cell.technique, plan.learners[cell.learner], split.train, cell.seed(cfg.seed),
                          cfg.technique_params.get(cell.technique), cfg.ipip_config())
    scores = model.predict_proba(split.test.X)
    metrics = evaluate(split.test.y, model.predict(split.test.X), scores)
    return RunRecord(cell.variant, class_stats(plan.variants[cell.variant]).p_min, cell.technique_id,
                     cell.fold, metrics)


def _worker(cell: Cell) -> tuple[str, dict | None, str | None]:
    try:
        return cell.key, run_cell(_PLAN, cell).to_json(), None
    except FilmError as exc:
        return cell.key, None, f"{type(exc).__name__}: {exc}"
    except Exception:  # recorded per cell; the run carries on
        return cell.key, None, traceback.format_exc(limit=3)


def _read_marker(path: Path, config_hash: str) -> dict | None:
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError):
        return None
    if obj.get("config_hash") != config_hash or obj.get("record") is None:
        return None
    return obj["record"]


def execute(plan: Plan, out_dir: Path, jobs: int = 1) -> tuple[list[RunRecord], dict[str, str]]:
    """Run every cell not already marked complete; returns records and per-cell errors."""
    global _PLAN
    config_hash = plan.cfg.config_hash()
    cell_dir = out_dir / "cells"
    cell_dir.mkdir(parents=True, exist_ok=True)
    done, todo = {}, []
    for cell in plan.cells:
        rec = _read_marker(cell_dir / f"{cell.key}.json", config_hash)
        if rec is None:
            todo.append(cell)
        else:
            done[cell.key] = rec
    if len(done):
        log.info("resuming: %d of %d cells already complete", len(done), len(plan.cells))

    errors = {}

    def collect(key, rec, err):
        if err is not None:
            errors[key] = err
            log.error("cell %s failed: %s", key, err.splitlines()[-1] if err else "")
            return
        done[key] = rec
        (cell_dir / f"{key}.json").write_text(dumps({"config_hash": config_hash, "record": rec}),
                                              encoding="utf-8")

    _PLAN = plan
    try:
        if jobs > 1 and len(todo) > 1 and "fork" in multiprocessing.get_all_start_methods():
            with multiprocessing.get_context("fork").Pool(jobs) as pool:
                for result in pool.imap_unordered(_worker, todo, chunksize=1):
                    collect(*result)
        else:
            for cell in todo:
                collect(*_worker(cell))
    finally:
        _PLAN = None
    records = [RunRecord.from_json(done[c.key]) for c in plan.cells if c.key in done]
    return records, dict(sorted(errors.items()))


# ---------------------------------------------------------------- outputs

@dataclass
class RunResult:
    out_dir: Path
    records: list[RunRecord]
    errors: dict[str, str]
    report: object | None = None

    @property
    def exit_code(self) -> int:
        return 1 if self.errors else 0


def _analyse(plan: Plan, records: list[RunRecord], out_dir: Path, errors: dict) -> object | None:
    cfg = plan.cfg
    report = None
    try:
        profile = bias_profile(records, plan.p_min)
        report = uic_score(profile, params=cfg.gaussian_params())
        (out_dir / "bias_profile.csv").write_text(profile.to_csv(), encoding="utf-8")
        (out_dir / "uic_report.json").write_text(dumps(report.to_json()), encoding="utf-8")
    except FilmError as exc:
        errors["analysis:uic"] = f"{type(exc).__name__}: {exc}"

    panels, conc, ratio_lines = [], [], []
    for name in plan.learners:
        suffix = "/" + name
        recs = [RunRecord(r.variant, r.p_min, r.technique[: -len(suffix)], r.fold, r.metrics)
                for r in records if r.technique.endswith(suffix)]
        try:
            matrix = agreement_matrix(recs, UIC_METRICS)
        except FilmError as exc:
            errors[f"analysis:concordance:{name}"] = f"{type(exc).__name__}: {exc}"
            continue
        ratio, (lo, hi) = discordance_ratio(matrix)
        panels.append((name, matrix))
        conc.append({"learner": name, "matrix": matrix.to_json(),
                     "discordance": {"ratio": ratio, "ci99": [lo, hi]}})
        for m in UIC_METRICS:
            wr = win_ratios(recs, m)
            for t in matrix.techniques:
                ratio_lines.append(f"{name},{m},{t},{wr[t]!r}")
    if panels:
        (out_dir / "concordance.json").write_text(dumps({"panels": conc}), encoding="utf-8")
        render_concordance_svg(panels, out_dir / "concordance.svg")
        (out_dir / "win_ratios.csv").write_text("learner,metric,technique,win_ratio\n" + "\n".join(ratio_lines) + "\n",
                                                encoding="utf-8")
    return report


def write_manifest(plan: Plan, out_dir: Path, errors: dict, n_records: int) -> None:
    cfg = plan.cfg
    manifest = {
        "film_version": __version__,
        "config": cfg.to_json(),
        "config_hash": cfg.config_hash(),
        "seed": cfg.seed,
        "variants": [
            {"index": i, "target_p_min": plan.targets[i], "p_min": class_stats(v).p_min,
             "n": v.n, "n_min": class_stats(v).n_min, "seed": None if i == 0 else derive_seed(cfg.seed, "variant", i),
             "fold_seed": derive_seed(cfg.seed, "folds", i)}
            for i, v in enumerate(plan.variants)
        ],
        "learners": {name: spec.to_json() for name, spec in plan.learners.items()},
        "tuning": plan.tuning,
        "cells": {"planned": len(plan.cells), "completed": n_records, "failed": len(errors)},
        "errors": errors,
    }
    (out_dir / "manifest.json").write_text(dumps(manifest), encoding="utf-8")


def run_experiment(cfg: ExperimentConfig, dataset: Dataset | None = None, out_dir=None,
                   jobs: int = 1) -> RunResult:
    """Plan, run and analyse one experiment; validation errors raise before any training."""
    plan = plan_experiment(cfg, dataset)
    out_dir = Path(out_dir if out_dir is not None else cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    records, errors = execute(plan, out_dir, jobs)
    (out_dir / "records.json").write_text(dumps([r.to_json() for r in records]), encoding="utf-8")
    report = None
    if not errors:
        report = _analyse(plan, records, out_dir, errors)
    write_manifest(plan, out_dir, errors, len(records))
    return RunResult(out_dir, records, errors, report)


def load_records(run_dir) -> list[RunRecord]:
    path = Path(run_dir) / "records.json"
    try:
        return [RunRecord.from_json(o) for o in json.loads(path.read_text(encoding="utf-8"))]
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        raise ValidationError(f"cannot read {path}: {exc}") from None

