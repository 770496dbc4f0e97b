"""End-to-end workflow and run-directory artifacts.

A run is a directory. Each stage reads what earlier stages wrote and records
what it wrote, with checksums, in ``manifest.json`` (the only file that carries
timestamps).
"""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
import platform
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__, errors
from .cascade import (BASELINES, OUT_OF_FOLD, CascadePolicy, Predictions, ThresholdChoice, baseline_order_score,
                      baseline_policy, make_triage_labels, mix_predictions, risk_coverage_curve, route_records,
                      select_threshold, TriageLabels)
from .data import (CohortSplit, CohortTable, FeatureSchema, SynthConfig, default_schema, fit_preprocessor,
                   generate_cohort, load_cohort, load_schema, save_schema, write_cohort)
from .evaluation import (DEFAULT_B, DEFAULT_UNIT_COST, auprc, auroc, balance_report, bootstrap_ci, cost_curve,
                         paired_delta_auroc, pr_points, roc_points, thresholded_metrics, accuracy_at)
from .explain import DEFAULT_BACKGROUND_SIZE, explain_decision, make_background
from .learners import (DEFAULT_LOGREG_GRID, DEFAULT_SVM_GRID, FittedClassifier, GridSearchResult, cross_val_predict,
                       fit_learner, grid_search, make_cv_plan)

log = logging.getLogger(__name__)


@dataclass
class RunConfig:
    schema: str | None = None
    cohort: str | None = None
    synth: dict = field(default_factory=dict)
    test_n: int = 100
    split_seed: int = 7
    cv_folds: int = 5
    cv_seed: int = 0
    stratified: bool = True
    basic_grid: list = field(default_factory=lambda: [dict(p) for p in DEFAULT_LOGREG_GRID])
    advanced_grid: list = field(default_factory=lambda: [dict(p) for p in DEFAULT_LOGREG_GRID])
    triage_grid: list = field(default_factory=lambda: [dict(p) for p in DEFAULT_SVM_GRID])
    delta: float = 0.2
    threshold_strategy: str = "risk_cap:0.08"
    unit_cost: float = DEFAULT_UNIT_COST
    bootstrap_B: int = DEFAULT_B
    bootstrap_seed: int = 0
    baseline_seed: int = 0
    background_size: int = DEFAULT_BACKGROUND_SIZE
    explain_seed: int = 0

    def validate(self) -> None:
        if not self.delta > 0:
            raise errors.NonPositiveDelta(f"delta must be > 0, got {self.delta}")
        if self.bootstrap_B < 100:
            raise errors.InvalidConfig("bootstrap_B must be >= 100")
        if self.cv_folds < 2:
            raise errors.BadK("cv_folds must be >= 2")
        for p in (self.schema, self.cohort):
            if p is not None and not Path(p).exists():
                raise errors.InvalidConfig(f"path does not exist: {p}")

    def set_seed(self, seed: int) -> None:
        for name in ("split_seed", "cv_seed", "bootstrap_seed", "baseline_seed", "explain_seed"):
            setattr(self, name, seed)
        self.synth = {**self.synth, "seed": seed}

    def synth_config(self) -> SynthConfig:
        known = {f.name for f in dataclasses.fields(SynthConfig)}
        unknown = set(self.synth) - known
        if unknown:
            raise errors.InvalidConfig(f"unknown synth keys {sorted(unknown)}")
        return SynthConfig(**self.synth)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise errors.InvalidConfig(f"unknown config keys {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                return cls.from_dict(json.load(fh))
        except json.JSONDecodeError as exc:
            raise errors.InvalidConfig(f"{path}: {exc}") from None


# ---------------------------------------------------------------------------
# training


@dataclass
class TrainResult:
    basic: FittedClassifier
    advanced: FittedClassifier
    triage: FittedClassifier
    split: CohortSplit
    oof_ids: tuple[str, ...]
    p_basic_oof: Predictions
    p_advanced_oof: Predictions
    labels: np.ndarray
    triage_labels: TriageLabels
    g_oof: np.ndarray
    grids: dict[str, GridSearchResult]

    @property
    def triage_cv_auroc(self) -> float:
        return self.grids["triage"].best_score


def _select_and_fit(role: str, kind: str, grid, X, y, cfg: RunConfig, prep) -> tuple[FittedClassifier, GridSearchResult, object]:
    plan = make_cv_plan(len(y), cfg.cv_folds, y, seed=cfg.cv_seed, stratified=cfg.stratified)
    result = grid_search(kind, grid, X, y, plan)
    if not np.isfinite(result.best_score):
        raise errors.SingleClass(f"{role} model: every grid point failed ({'; '.join(result.warnings)})")
    best = dict(result.best_point)
    model = fit_learner(kind, best, X, y)
    cv = {"folds": cfg.cv_folds, "seed": cfg.cv_seed, "stratified": cfg.stratified,
          "metric": result.metric, "best_score": result.best_score}
    log.info("%s model: %s %s, CV %s %.4f", role, kind, best, result.metric, result.best_score)
    return FittedClassifier(role, kind, best, prep, model, cv), result, plan


def train_models(cohort: CohortTable, split: CohortSplit, cfg: RunConfig) -> TrainResult:
    """Fit basic, advanced and triage models; triage labels use out-of-fold predictions only."""
    schema = cohort.schema
    basic_rows = cohort.select(split.basic_train)
    adv_rows = cohort.select(split.advanced_train)
    if not adv_rows:
        raise errors.EmptyCurve("advanced-train set is empty")

    prep_b = fit_preprocessor(basic_rows, schema)
    Xb, yb = prep_b.transform(basic_rows), cohort.labels(split.basic_train)
    basic, gs_b, plan_b = _select_and_fit("basic", "logreg", cfg.basic_grid, Xb, yb, cfg, prep_b)
    pb_all = cross_val_predict("logreg", basic.params, Xb, yb, plan_b)
    pos = {rid: i for i, rid in enumerate(split.basic_train)}
    pb_oof = pb_all[[pos[r] for r in split.advanced_train]]

    prep_a = fit_preprocessor(adv_rows, schema, use_advanced=True)
    Xa, ya = prep_a.transform(adv_rows), cohort.labels(split.advanced_train)
    advanced, gs_a, plan_a = _select_and_fit("advanced", "logreg", cfg.advanced_grid, Xa, ya, cfg, prep_a)
    pa_oof = cross_val_predict("logreg", advanced.params, Xa, ya, plan_a)

    ids = tuple(split.advanced_train)
    p_b = Predictions(pb_oof, OUT_OF_FOLD, ids)
    p_a = Predictions(pa_oof, OUT_OF_FOLD, ids)
    tl = make_triage_labels(p_b, p_a, cfg.delta)
    if tl.z.min() == tl.z.max():
        raise errors.SingleClass(
            f"all triage labels are {int(tl.z[0])} at delta={cfg.delta}; choose a delta that yields both classes")
    log.info("triage labels: %d rows, %.1f%% positive", len(tl.z), 100 * tl.positive_rate)

    prep_t = fit_preprocessor(adv_rows, schema)
    Xt = prep_t.transform(adv_rows)
    triage, gs_t, plan_t = _select_and_fit("triage", "svm", cfg.triage_grid, Xt, tl.z, cfg, prep_t)
    g_oof = cross_val_predict("svm", triage.params, Xt, tl.z, plan_t)
    return TrainResult(basic, advanced, triage, split, ids, p_b, p_a, ya, tl, g_oof,
                       {"basic": gs_b, "advanced": gs_a, "triage": gs_t})


def choose_threshold(train: TrainResult, strategy: str):
    curve = risk_coverage_curve(train.g_oof, train.p_basic_oof.values, train.labels)
    return curve, select_threshold(curve, strategy)


# ---------------------------------------------------------------------------
# evaluation


METRIC_FNS = {
    "auroc": auroc,
    "auprc": auprc,
    "accuracy": lambda s, y: accuracy_at(s, y, 0.5),
    "recall": lambda s, y: thresholded_metrics(s, y).recall,
    "precision": lambda s, y: thresholded_metrics(s, y).precision,
}


@dataclass
class TestScores:
    ids: tuple[str, ...]
    labels: np.ndarray
    p_basic: np.ndarray
    p_advanced: np.ndarray
    g: np.ndarray
    escalate: np.ndarray
    tau: float

    @property
    def rate(self) -> float:
        return float(self.escalate.mean())

    def policies(self, seed: int = 0) -> dict[str, np.ndarray]:
        """Final probability vector for each compared policy; baselines use the cascade's rate."""
        out = {
            "basic": self.p_basic,
            "advanced": self.p_advanced,
            "cascade": mix_predictions(self.escalate, self.p_basic, self.p_advanced),
        }
        for kind in BASELINES:
            mask = baseline_policy(kind, self.rate, self.p_basic, seed=seed)
            out[kind] = mix_predictions(mask, self.p_basic, self.p_advanced)
        return out


def score_test_set(policy: CascadePolicy, cohort: CohortTable, ids: Sequence[str]) -> TestScores:
    rows = cohort.select(ids)
    g = policy.escalation_scores(rows)
    return TestScores(tuple(ids), cohort.labels(ids), policy.basic.predict_proba(rows),
                      policy.advanced.predict_proba(rows), g, policy.escalates(g), policy.tau)


def evaluate_policy(policy: CascadePolicy, cohort: CohortTable, split: CohortSplit, cfg: RunConfig,
                    bootstrap: bool = True) -> dict:
    """Held-out comparison of basic, advanced, cascade and the three baselines."""
    ts = score_test_set(policy, cohort, split.test)
    y = ts.labels
    pols = ts.policies(cfg.baseline_seed)
    report: dict = {"n_test": int(len(y)), "tau": policy.tau, "escalation_rate": ts.rate,
                    "n_escalated": int(ts.escalate.sum()), "models": {}, "paired_tests": [], "curves": {}}
    for name, p in pols.items():
        entry = {"metrics": thresholded_metrics(p, y).to_dict()}
        if bootstrap:
            entry["ci"] = {m: bootstrap_ci(fn, p, y, cfg.bootstrap_B, cfg.bootstrap_seed).to_dict()
                           for m, fn in METRIC_FNS.items()}
        report["models"][name] = entry
    if bootstrap:
        for name, p in pols.items():
            if name == "cascade":
                continue
            t = paired_delta_auroc(pols["cascade"], p, y, cfg.bootstrap_B, cfg.bootstrap_seed, "cascade", name)
            report["paired_tests"].append(t.to_dict())

    report["curves"]["roc"] = {name: roc_points(p, y) for name, p in pols.items()}
    report["curves"]["pr"] = {name: pr_points(p, y) for name, p in pols.items()}
    rates = sorted(set(np.round(np.linspace(0, 1, 21), 10).tolist()) | {round(ts.rate, 10)})
    orders = {"cascade": ts.g, **{k: baseline_order_score(k, ts.p_basic, cfg.baseline_seed) for k in BASELINES}}
    report["curves"]["cost"] = {name: [c.to_dict() for c in cost_curve(o, ts.p_basic, ts.p_advanced, y,
                                                                         cfg.unit_cost, rates)]
                                for name, o in orders.items()}

    chars = list(cohort.schema.demographic_columns)
    test_rows = cohort.select(split.test)
    balance = {}
    try:
        balance["escalated_vs_not"] = balance_report(test_rows, ts.escalate, chars).to_dict()
    except errors.EmptyGroup as exc:
        balance["escalated_vs_not"] = {"skipped": str(exc)}
    train_rows = cohort.select(split.advanced_train)
    balance["train_vs_test"] = balance_report(train_rows + test_rows,
                                              np.r_[np.ones(len(train_rows), bool), np.zeros(len(test_rows), bool)],
                                              chars, "train", "test").to_dict()
    report["balance"] = balance
    return report


# ---------------------------------------------------------------------------
# run directory I/O


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_json(path: Path, obj) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=1, sort_keys=True, allow_nan=False, default=_json_default) + "\n",
                    encoding="utf-8")
    return path


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def write_csv(path: Path, header: Sequence[str], rows) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    return path


class Run:
    """A run directory plus its manifest."""

    def __init__(self, out: str | Path):
        self.dir = Path(out)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.manifest_path = self.dir / "manifest.json"

    def path(self, *parts: str) -> Path:
        return self.dir.joinpath(*parts)

    def record(self, command: str, cfg: RunConfig, artifacts: Sequence[Path], started: float,
               extra: dict | None = None) -> None:
        manifest = {}
        if self.manifest_path.exists():
            manifest = json.loads(self.manifest_path.read_text(encoding="utf-8"))
        manifest.setdefault("commands", {})[command] = {
            "config": cfg.to_dict(),
            "artifacts": {str(p.relative_to(self.dir)): _sha256(p) for p in artifacts},
            "versions": {"triage_cascade": __version__, "python": platform.python_version(),
                         "numpy": np.__version__},
            "started": time.strftime("%Y-%m-%dT%H:%M:%S", time.localtime(started)),
            "seconds": round(time.time() - started, 3),
            **(extra or {}),
        }
        manifest["artifacts"] = {k: v for c in manifest["commands"].values() for k, v in c["artifacts"].items()}
        self.manifest_path.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n", encoding="utf-8")

    # -- inputs --------------------------------------------------------------

    def schema(self, cfg: RunConfig) -> FeatureSchema:
        if cfg.schema:
            return load_schema(cfg.schema)
        local = self.path("schema.json")
        return load_schema(local) if local.exists() else default_schema()

    def cohort(self, cfg: RunConfig) -> CohortTable:
        path = Path(cfg.cohort) if cfg.cohort else self.path("cohort.csv")
        if not path.exists():
            raise errors.InvalidConfig(f"no cohort at {path}; run `synth` or pass --cohort")
        return load_cohort(path, self.schema(cfg))

    def split(self) -> CohortSplit:
        return CohortSplit.from_dict(self._read_json("split.json"))

    def _read_json(self, name: str) -> dict:
        path = self.path(name)
        if not path.exists():
            raise errors.InvalidConfig(f"missing {path}; run the earlier pipeline stage first")
        return json.loads(path.read_text(encoding="utf-8"))

    def model(self, role: str) -> FittedClassifier:
        path = self.path("models", f"{role}.json")
        if not path.exists():
            raise errors.InvalidConfig(f"missing {path}; run `train` first")
        return FittedClassifier.from_json(path.read_text(encoding="utf-8"))

    def policy(self) -> CascadePolicy:
        d = self._read_json("policy.json")
        models = {}
        for role, ref in d["models"].items():
            path = self.path(ref["path"])
            if _sha256(path) != ref["sha256"]:
                raise errors.ConfigError(f"{path} does not match the fingerprint recorded in policy.json")
            models[role] = FittedClassifier.from_json(path.read_text(encoding="utf-8"))
        return CascadePolicy(models["basic"], models["advanced"], models["triage"], float(d["tau"]), float(d["delta"]))


def run_synth(run: Run, cfg: RunConfig) -> list[Path]:
    started = time.time()
    cohort = generate_cohort(cfg.synth_config())
    csv_path = run.path("cohort.csv")
    write_cohort(cohort, csv_path)
    schema_path = run.path("schema.json")
    save_schema(cohort.schema, schema_path)
    arts = [csv_path, schema_path]
    run.record("synth", cfg, arts, started, {"n_rows": len(cohort), "n_advanced": len(cohort.advanced_ids())})
    return arts


def run_train(run: Run, cfg: RunConfig) -> TrainResult:
    from .data import split_cohort

    started = time.time()
    cfg.validate()
    cohort = run.cohort(cfg)
    split = split_cohort(cohort, cfg.test_n, cfg.split_seed)
    result = train_models(cohort, split, cfg)
    arts = [write_json(run.path("split.json"), split.to_dict())]
    for role in ("basic", "advanced", "triage"):
        path = run.path("models", f"{role}.json")
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(getattr(result, role).to_json(), encoding="utf-8")
        arts.append(path)
    tl = result.triage_labels
    arts.append(write_csv(run.path("oof_predictions.csv"),
                          ["id", "label", "p_basic_oof", "p_advanced_oof", "z", "g_oof"],
                          zip(result.oof_ids, result.labels.tolist(), tl.p_basic, tl.p_advanced,
                              tl.z.tolist(), result.g_oof)))
    arts.append(write_json(run.path("triage_labels.json"), {
        "delta": tl.delta, "n": int(len(tl.z)), "positive_rate": tl.positive_rate, "provenance": tl.source,
        "z": tl.z.tolist(), "ids": list(result.oof_ids)}))
    arts.append(write_json(run.path("train_summary.json"), {
        "triage_cv_auroc": result.triage_cv_auroc,
        "grids": {k: v.to_dict() for k, v in result.grids.items()},
        "sizes": {"basic_train": len(split.basic_train), "advanced_train": len(split.advanced_train),
                  "test": len(split.test)},
    }))
    run.record("train", cfg, arts, started, {"model_fingerprints": {
        r: getattr(result, r).fingerprint() for r in ("basic", "advanced", "triage")}})
    return result


def read_oof(run: Run) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    path = run.path("oof_predictions.csv")
    if not path.exists():
        raise errors.InvalidConfig(f"missing {path}; run `train` first")
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    g = np.array([float(r["g_oof"]) for r in rows])
    pb = np.array([float(r["p_basic_oof"]) for r in rows])
    y = np.array([int(r["label"]) for r in rows], dtype=int)
    return g, pb, y


def run_threshold(run: Run, cfg: RunConfig) -> ThresholdChoice:
    started = time.time()
    g, pb, y = read_oof(run)
    curve = risk_coverage_curve(g, pb, y)
    choice = select_threshold(curve, cfg.threshold_strategy)
    arts = [write_csv(run.path("risk_coverage.csv"), ["tau_candidate", "coverage", "risk", "n_kept"],
                      [(p.tau_candidate, p.coverage, p.risk, p.n_kept) for p in curve])]
    models = {}
    for role in ("basic", "advanced", "triage"):
        path = run.path("models", f"{role}.json")
        if not path.exists():
            raise errors.InvalidConfig(f"missing {path}; run `train` first")
        models[role] = {"path": f"models/{role}.json", "sha256": _sha256(path)}
    arts.append(write_json(run.path("policy.json"), {
        "format": "triage-cascade/policy", "version": 1, "tau": choice.tau, "delta": cfg.delta,
        "threshold": choice.to_dict(), "models": models}))
    run.record("threshold", cfg, arts, started)
    return choice


def _curve_rows(points: dict[str, list]) -> list:
    return [(name, *pt) for name, pts in points.items() for pt in pts]


def run_evaluate(run: Run, cfg: RunConfig, bootstrap: bool = True) -> dict:
    started = time.time()
    cfg.validate()
    policy = run.policy()
    cohort = run.cohort(cfg)
    split = run.split()
    report = evaluate_policy(policy, cohort, split, cfg, bootstrap=bootstrap)
    curves = report.pop("curves")
    balance = report.pop("balance")
    arts = [write_json(run.path("report.json"), report)]
    arts.append(write_csv(run.path("curves", "roc.csv"), ["model", "threshold", "fpr", "tpr"],
                          [(m, "inf" if t == float("inf") else t, f, tp) for m, t, f, tp in _curve_rows(curves["roc"])]))
    arts.append(write_csv(run.path("curves", "pr.csv"), ["model", "threshold", "recall", "precision"],
                          _curve_rows(curves["pr"])))
    arts.append(write_csv(run.path("curves", "cost.csv"),
                          ["ordering", "escalation_rate", "expected_cost_per_100", "auroc", "n_escalated"],
                          [(name, c["escalation_rate"], c["expected_cost_per_100"], c["auroc"], c["n_escalated"])
                           for name, pts in curves["cost"].items() for c in pts]))
    g, pb, y = read_oof(run)
    arts.append(write_csv(run.path("curves", "risk_coverage_train.csv"), ["tau_candidate", "coverage", "risk", "n_kept"],
                          [(p.tau_candidate, p.coverage, p.risk, p.n_kept) for p in risk_coverage_curve(g, pb, y)]))
    arts.append(write_json(run.path("balance.json"), balance))
    run.record("evaluate", cfg, arts, started, {"bootstrap": bootstrap})
    return report


def load_patients(path: str | Path, schema: FeatureSchema):
    """Parse a patient CSV row by row; returns (records, per-row error dicts)."""
    from .data import parse_row

    records, problems = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = set(reader.fieldnames or [])
        missing = [c for c in schema.basic_columns if c not in header]
        if missing:
            raise errors.MissingColumn(f"patient file lacks basic columns {missing}", name=missing[0])
        for i, raw in enumerate(reader, start=1):
            try:
                records.append(parse_row(raw, schema, i, require_label=False))
            except errors.DataError as exc:
                problems.append({"row": i, "id": raw.get(schema.id_column, ""), "error": exc.code, "message": str(exc)})
    return records, problems


def run_predict(run: Run, cfg: RunConfig, input_path: str | Path) -> tuple[list, list]:
    started = time.time()
    policy = run.policy()
    schema = run.schema(cfg)
    records, problems = load_patients(input_path, schema)
    decisions = route_records(policy, records)
    out = run.path("decisions.jsonl")
    with open(out, "w", encoding="utf-8") as fh:
        for d in decisions:
            fh.write(json.dumps(d.to_dict(), sort_keys=True) + "\n")
        for p in problems:
            fh.write(json.dumps(p, sort_keys=True) + "\n")
    run.record("predict", cfg, [out], started, {"n_rows": len(records), "n_errors": len(problems)})
    return decisions, problems


def run_explain(run: Run, cfg: RunConfig, input_path: str | Path, ids: Sequence[str] | None = None,
                method: str = "exact", top_k: int | None = None, n_samples: int = 50_000) -> list:
    started = time.time()
    policy = run.policy()
    schema = run.schema(cfg)
    records, problems = load_patients(input_path, schema)
    if problems:
        first = problems[0]
        raise errors.DataError(f"row {first['row']}: {first['error']}: {first['message']}")
    if ids:
        wanted = set(ids)
        records = [r for r in records if r.id in wanted]
    cohort = run.cohort(cfg)
    bg_rows = cohort.select(run.split().advanced_train)
    background = make_background(policy.triage.preprocessor.transform(bg_rows), cfg.background_size, cfg.explain_seed)
    arts, out = [], []
    for r in records:
        rec = explain_decision(policy, r, background, method=method, n_samples=n_samples,
                               seed=cfg.explain_seed, top_k=top_k)
        out.append(rec)
        arts.append(write_json(run.path("explanations", f"{r.id}.json"), rec.to_dict()))
        csv_path = run.path("explanations", f"{r.id}.csv")
        csv_path.write_text(rec.to_csv(), encoding="utf-8")
        arts.append(csv_path)
    run.record("explain", cfg, arts, started, {"n_patients": len(out), "method": method})
    return out
