"""Cohort schema, CSV loading, partitioning, preprocessing and a synthetic generator."""
from __future__ import annotations

import csv
import hashlib
import json
import math
import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq
from scipy.special import expit
from scipy.stats import norm

from . import errors



@dataclass(frozen=True)
class FeatureSchema:
    basic_numeric: tuple[str, ...]
    basic_categorical: dict[str, tuple[str, ...]]
    advanced_numeric: tuple[str, ...]
    label_column: str
    demographic_columns: tuple[tuple[str, str], ...]
    advanced_available_column: str
    id_column: str = "RID"
    missing_markers: tuple[str, ...] = ("",)

    def __post_init__(self):
        if self.d_b < 1 or self.d_a < 1:
            raise errors.InvalidConfig("schema needs at least one basic and one advanced column")
        groups = [
            list(self.basic_numeric),
            list(self.basic_categorical),
            list(self.advanced_numeric),
            [self.label_column],
            [self.advanced_available_column],
            [self.id_column],
        ]
        seen: set[str] = set()
        for group in groups:
            for name in group:
                if name in seen:
                    raise errors.InvalidConfig(f"column {name!r} appears in two groups")
                seen.add(name)
        # demographics are reporting references; they may point at basic columns
        for name, kind in self.demographic_columns:
            if kind not in ("numeric", "categorical"):
                raise errors.InvalidConfig(f"demographic {name!r} has unknown kind {kind!r}")
            if name in (self.label_column, self.advanced_available_column) or name in self.advanced_numeric:
                raise errors.InvalidConfig(f"demographic {name!r} collides with a model column")

    @property
    def basic_columns(self) -> tuple[str, ...]:
        return tuple(self.basic_numeric) + tuple(self.basic_categorical)

    @property
    def d_b(self) -> int:
        return len(self.basic_numeric) + len(self.basic_categorical)

    @property
    def d_a(self) -> int:
        return len(self.advanced_numeric)

    def demographic_kind(self, name: str) -> str:
        return dict(self.demographic_columns)[name]

    def extra_demographics(self) -> list[str]:
        """Demographic columns that are not basic features."""
        basic = set(self.basic_columns)
        return [n for n, _ in self.demographic_columns if n not in basic]

    def to_dict(self) -> dict:
        return {
            "version": 1,
            "id_column": self.id_column,
            "label_column": self.label_column,
            "advanced_available_column": self.advanced_available_column,
            "missing_markers": list(self.missing_markers),
            "basic_numeric": list(self.basic_numeric),
            "basic_categorical": {k: list(v) for k, v in self.basic_categorical.items()},
            "advanced_numeric": list(self.advanced_numeric),
            "demographic_columns": [list(p) for p in self.demographic_columns],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureSchema":
        try:
            return cls(
                basic_numeric=tuple(d["basic_numeric"]),
                basic_categorical={k: tuple(str(t) for t in v) for k, v in d["basic_categorical"].items()},
                advanced_numeric=tuple(d["advanced_numeric"]),
                label_column=d["label_column"],
                demographic_columns=tuple((n, k) for n, k in d.get("demographic_columns", [])),
                advanced_available_column=d["advanced_available_column"],
                id_column=d.get("id_column", "RID"),
                missing_markers=tuple(d.get("missing_markers", [""])),
            )
        except KeyError as exc:
            raise errors.InvalidConfig(f"schema missing key {exc.args[0]!r}") from None

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def load_schema(path: str | Path) -> FeatureSchema:
    with open(path, encoding="utf-8") as fh:
        return FeatureSchema.from_dict(json.load(fh))


def default_schema() -> FeatureSchema:
    """The shipped ADNI-shaped schema: 9 basic columns, 329 advanced slots."""
    text = resources.files(__package__).joinpath("adni_schema.json").read_text(encoding="utf-8")
    return FeatureSchema.from_dict(json.loads(text))


def save_schema(schema: FeatureSchema, path: str | Path) -> None:
    Path(path).write_text(json.dumps(schema.to_dict(), indent=1) + "\n", encoding="utf-8")


@dataclass
class PatientRecord:
    id: str
    basic: dict[str, float | str]
    advanced: np.ndarray | None  # float vector, NaN marks a missing cell
    label: int | None
    demographics: dict[str, float | str] = field(default_factory=dict)

    @property
    def has_advanced(self) -> bool:
        return self.advanced is not None


@dataclass
class CohortTable:
    schema: FeatureSchema
    rows: list[PatientRecord]

    def __post_init__(self):
        self._index = {r.id: i for i, r in enumerate(self.rows)}
        if len(self._index) != len(self.rows):
            raise errors.DuplicateId("cohort ids are not unique")

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def ids(self) -> list[str]:
        return [r.id for r in self.rows]

    def advanced_ids(self) -> list[str]:
        return [r.id for r in self.rows if r.has_advanced]

    def select(self, ids: Iterable[str]) -> list[PatientRecord]:
        return [self.rows[self._index[i]] for i in ids]

    def labels(self, ids: Iterable[str] | None = None) -> np.ndarray:
        rows = self.rows if ids is None else self.select(ids)
        return np.array([r.label for r in rows], dtype=int)


def _parse_float(token: str, row: int, col: str) -> float:
    try:
        return float(token)
    except ValueError:
        raise errors.DataError(f"row {row}: column {col!r} is not numeric: {token!r}", row=row, col=col) from None


def _parse_label(token: str, row: int) -> int:
    try:
        value = float(token)
    except ValueError:
        value = math.nan
    if value not in (0.0, 1.0):
        raise errors.NonBinaryLabel(f"row {row}: label {token!r} is not 0/1", row=row)
    return int(value)


def parse_row(raw: dict[str, str], schema: FeatureSchema, row: int, require_label: bool = True) -> PatientRecord:
    """Validate one CSV row (1-based data row number ``row``)."""
    missing = set(schema.missing_markers)

    basic: dict[str, float | str] = {}
    for col in schema.basic_numeric:
        token = (raw.get(col) or "").strip()
        if token in missing:
            raise errors.MissingBasicValue(f"row {row}: basic column {col!r} is empty", row=row, col=col)
        basic[col] = _parse_float(token, row, col)
    for col, allowed in schema.basic_categorical.items():
        token = (raw.get(col) or "").strip()
        if token in missing:
            raise errors.MissingBasicValue(f"row {row}: basic column {col!r} is empty", row=row, col=col)
        if token not in allowed:
            raise errors.UnknownCategory(f"row {row}: {col}={token!r} not in {list(allowed)}", row=row, col=col, token=token)
        basic[col] = token

    flag = (raw.get(schema.advanced_available_column) or "").strip()
    if flag in missing:
        has_adv = any((raw.get(c) or "").strip() not in missing for c in schema.advanced_numeric)
    elif flag in ("0", "1", "0.0", "1.0"):
        has_adv = float(flag) == 1.0
    else:
        raise errors.DataError(f"row {row}: advanced indicator {flag!r} is not 0/1", row=row)
    advanced = None
    if has_adv:
        advanced = np.empty(schema.d_a)
        for j, col in enumerate(schema.advanced_numeric):
            token = (raw.get(col) or "").strip()
            advanced[j] = math.nan if token in missing else _parse_float(token, row, col)

    label = None
    token = (raw.get(schema.label_column) or "").strip()
    if token not in missing:
        label = _parse_label(token, row)
    elif require_label:
        raise errors.NonBinaryLabel(f"row {row}: label is empty", row=row)

    demographics: dict[str, float | str] = {}
    for name, kind in schema.demographic_columns:
        if name in basic:
            demographics[name] = basic[name]
            continue
        token = (raw.get(name) or "").strip()
        if token in missing:
            demographics[name] = math.nan if kind == "numeric" else ""
        else:
            demographics[name] = _parse_float(token, row, name) if kind == "numeric" else token

    rid = (raw.get(schema.id_column) or "").strip() or f"row{row}"
    return PatientRecord(rid, basic, advanced, label, demographics)


def required_columns(schema: FeatureSchema, require_label: bool = True) -> list[str]:
    cols = [schema.id_column, schema.advanced_available_column, *schema.basic_columns, *schema.advanced_numeric]
    cols += schema.extra_demographics()
    if require_label:
        cols.append(schema.label_column)
    return cols


def load_cohort(path: str | Path, schema: FeatureSchema) -> CohortTable:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = set(reader.fieldnames or [])
        for col in required_columns(schema):
            if col not in header:
                raise errors.MissingColumn(f"column {col!r} missing from {path}", name=col)
        rows = [parse_row(raw, schema, i) for i, raw in enumerate(reader, start=1)]
    return CohortTable(schema, rows)


def _fmt(value) -> str:
    if isinstance(value, str):
        return value
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return ""
    return repr(float(value))


def write_cohort(cohort: CohortTable, path: str | Path) -> None:
    schema = cohort.schema
    header = [schema.id_column, *schema.basic_columns, *schema.extra_demographics(),
              schema.label_column, schema.advanced_available_column, *schema.advanced_numeric]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in cohort.rows:
            adv = [""] * schema.d_a if r.advanced is None else [_fmt(v) for v in r.advanced]
            w.writerow([
                r.id,
                *(_fmt(r.basic[c]) for c in schema.basic_columns),
                *(_fmt(r.demographics.get(c)) for c in schema.extra_demographics()),
                "" if r.label is None else str(r.label),
                "1" if r.has_advanced else "0",
                *adv,
            ])


# ---------------------------------------------------------------------------
# partitioning


@dataclass(frozen=True)
class CohortSplit:
    basic_train: tuple[str, ...]
    advanced_train: tuple[str, ...]
    test: tuple[str, ...]
    seed: int

    def to_dict(self) -> dict:
        return {"seed": self.seed, "basic_train": list(self.basic_train),
                "advanced_train": list(self.advanced_train), "test": list(self.test)}

    @classmethod
    def from_dict(cls, d: dict) -> "CohortSplit":
        return cls(tuple(d["basic_train"]), tuple(d["advanced_train"]), tuple(d["test"]), int(d["seed"]))


def split_cohort(cohort: CohortTable, test_n: int, seed: int) -> CohortSplit:
    """Draw the held-out test set uniformly from advanced-available rows (no stratification)."""
    adv = cohort.advanced_ids()
    if test_n > len(adv) or test_n < 0:
        raise errors.TestTooLarge(f"test_n={test_n} but only {len(adv)} rows have advanced features")
    rng = np.random.default_rng(seed)
    picked = set(rng.choice(len(adv), size=test_n, replace=False).tolist())
    test_set = {adv[i] for i in picked}
    # keep cohort order everywhere so manifests are stable
    test = tuple(i for i in cohort.ids if i in test_set)
    basic_train = tuple(i for i in cohort.ids if i not in test_set)
    advanced_train = tuple(i for i in adv if i not in test_set)
    return CohortSplit(basic_train, advanced_train, test, seed)


# ---------------------------------------------------------------------------
# preprocessing


@dataclass(frozen=True)
class Preprocessor:
    """Imputation, standardization (population std) and one-hot state.

    Output layout: basic numeric, basic one-hot blocks, then advanced numeric.
    A category never seen at fit time maps to an all-zero block.
    """

    numeric_columns: tuple[str, ...]
    means: np.ndarray
    stds: np.ndarray
    medians: np.ndarray
    categorical: dict[str, tuple[str, ...]]
    modes: dict[str, str]
    n_advanced: int
    schema_fingerprint: str

    def __post_init__(self):
        for a in (self.means, self.stds, self.medians):
            a.setflags(write=False)

    @property
    def n_basic_numeric(self) -> int:
        return len(self.numeric_columns) - self.n_advanced

    @property
    def width(self) -> int:
        return len(self.numeric_columns) + sum(len(c) for c in self.categorical.values())

    def groups(self) -> dict[str, list[int]]:
        """Map each clinical feature to its column indices in transformed space."""
        nb = self.n_basic_numeric
        out = {col: [j] for j, col in enumerate(self.numeric_columns[:nb])}
        pos = nb
        for col, cats in self.categorical.items():
            out[col] = list(range(pos, pos + len(cats)))
            pos += len(cats)
        for k, col in enumerate(self.numeric_columns[nb:]):
            out[col] = [pos + k]
        return out

    def feature_names(self) -> list[str]:
        nb = self.n_basic_numeric
        names = list(self.numeric_columns[:nb])
        for col, cats in self.categorical.items():
            names += [f"{col}={c}" for c in cats]
        return names + list(self.numeric_columns[nb:])

    def transform(self, rows: Sequence[PatientRecord]) -> np.ndarray:
        if not rows:
            return np.zeros((0, self.width))
        nb = self.n_basic_numeric
        basic_cols = self.numeric_columns[:nb]
        num = np.empty((len(rows), len(self.numeric_columns)))
        for i, r in enumerate(rows):
            try:
                num[i, :nb] = [r.basic[c] for c in basic_cols]
            except KeyError as exc:
                raise errors.SchemaMismatch(f"record {r.id} lacks basic column {exc.args[0]!r}") from None
            if self.n_advanced:
                if r.advanced is None or len(r.advanced) != self.n_advanced:
                    raise errors.SchemaMismatch(f"record {r.id} has no advanced features")
                num[i, nb:] = r.advanced
        miss = np.isnan(num)
        if miss.any():
            num[miss] = np.broadcast_to(self.medians, num.shape)[miss]
        safe = np.where(self.stds > 0, self.stds, 1.0)
        num = np.where(self.stds > 0, (num - self.means) / safe, 0.0)

        blocks = []
        for col, cats in self.categorical.items():
            lookup = {c: k for k, c in enumerate(cats)}
            block = np.zeros((len(rows), len(cats)))
            for i, r in enumerate(rows):
                token = r.basic.get(col)
                if token is None or token == "":
                    token = self.modes[col]
                k = lookup.get(str(token))
                if k is not None:
                    block[i, k] = 1.0
            blocks.append(block)
        return np.hstack([num[:, :nb], *blocks, num[:, nb:]])

    def standardized(self, record: PatientRecord) -> dict[str, float]:
        """Standardized value of each basic numeric column for one record."""
        out = {}
        for j, col in enumerate(self.numeric_columns[:self.n_basic_numeric]):
            sd = self.stds[j]
            out[col] = 0.0 if sd == 0 else (float(record.basic[col]) - self.means[j]) / sd
        return out

    def to_dict(self) -> dict:
        return {
            "numeric_columns": list(self.numeric_columns),
            "means": [float(v).hex() for v in self.means],
            "stds": [float(v).hex() for v in self.stds],
            "medians": [float(v).hex() for v in self.medians],
            "categorical": {k: list(v) for k, v in self.categorical.items()},
            "modes": dict(self.modes),
            "n_advanced": self.n_advanced,
            "schema_fingerprint": self.schema_fingerprint,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Preprocessor":
        def arr(xs):
            return np.array([float.fromhex(x) for x in xs])
        return cls(
            tuple(d["numeric_columns"]), arr(d["means"]), arr(d["stds"]), arr(d["medians"]),
            {k: tuple(v) for k, v in d["categorical"].items()}, dict(d["modes"]),
            int(d["n_advanced"]), d["schema_fingerprint"],
        )


def fit_preprocessor(rows: Sequence[PatientRecord], schema: FeatureSchema, use_advanced: bool = False) -> Preprocessor:
    """Fit imputation/standardization/one-hot state on ``rows``.

    ``use_advanced`` selects the basic+advanced column group; otherwise basic only.
    Standard deviations use the population (1/n) form.
    """
    if len(rows) < 2:
        raise errors.EmptyFit(f"need at least 2 rows to fit a preprocessor, got {len(rows)}")
    num = np.array([[r.basic[c] for c in schema.basic_numeric] for r in rows], dtype=float).reshape(len(rows), -1)
    cols = list(schema.basic_numeric)
    if use_advanced:
        if any(r.advanced is None for r in rows):
            raise errors.SchemaMismatch("advanced preprocessor fitted on rows without advanced features")
        num = np.hstack([num, np.vstack([r.advanced for r in rows])])
        cols += list(schema.advanced_numeric)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)  # all-NaN columns
        means = np.nan_to_num(np.nanmean(num, axis=0))
        stds = np.nan_to_num(np.nanstd(num, axis=0))
        medians = np.nan_to_num(np.nanmedian(num, axis=0))

    categorical: dict[str, tuple[str, ...]] = {}
    modes: dict[str, str] = {}
    for col, allowed in schema.basic_categorical.items():
        tokens = [str(r.basic[col]) for r in rows]
        order = list(allowed) + sorted(set(tokens) - set(allowed))
        counts = {c: tokens.count(c) for c in order}
        cats = tuple(c for c in order if counts[c] > 0)
        categorical[col] = cats
        modes[col] = max(cats, key=lambda c: (counts[c], -cats.index(c)))
    return Preprocessor(tuple(cols), means, stds, medians, categorical, modes,
                        schema.d_a if use_advanced else 0, schema.fingerprint())


def transform(prep: Preprocessor, rows: Sequence[PatientRecord]) -> np.ndarray:
    return prep.transform(rows)


# ---------------------------------------------------------------------------
# synthetic cohorts

_BASIC_VIEWS = [
    # name, center, scale (sign encodes direction of risk)
    ("MMSE", 27.0, -1.5),
    ("ADAS11", 10.0, 4.0),
    ("CDRSB", 1.5, 1.0),
    ("FAQ", 3.0, 3.0),
    ("ADAS13", 16.0, 6.0),
    ("RAVLT_IMM", 35.0, -8.0),
    ("MOCA", 23.0, -2.5),
]
_CDR_LEVELS = ("0", "0.5", "1", "2")
_RACES = ("White", "Black", "Asian", "Other")


@dataclass(frozen=True)
class SynthConfig:
    n_total: int = 1142
    advanced_fraction: float = 551 / 1142
    basic_noise: float = 1.5
    advanced_noise: float = 0.3
    conversion_base_rate: float = 0.3
    seed: int = 0
    d_b: int = 9
    d_a: int = 329
    # logit slope of conversion on latent risk; math.inf gives a hard threshold
    label_slope: float = 2.5
    # weight of latent risk in each basic view and categorical copy (advanced views use U(0.5, 1.5))
    basic_signal: float = 0.5

    def validate(self) -> None:
        if self.n_total < 2:
            raise errors.InvalidConfig("n_total must be >= 2")
        if not 0 < self.advanced_fraction <= 1:
            raise errors.InvalidConfig("advanced_fraction must be in (0, 1]")
        if self.basic_noise < 0 or self.advanced_noise < 0:
            raise errors.InvalidConfig("noise levels must be >= 0")
        if not 0 < self.conversion_base_rate < 1:
            raise errors.InvalidConfig("conversion_base_rate must be in (0, 1)")
        if self.d_b < 3 or self.d_a < 1:
            raise errors.InvalidConfig("need d_b >= 3 (two categorical + one numeric) and d_a >= 1")
        if not self.label_slope > 0:
            raise errors.InvalidConfig("label_slope must be positive")
        if not self.basic_signal > 0:
            raise errors.InvalidConfig("basic_signal must be positive")

    @property
    def n_advanced(self) -> int:
        return min(self.n_total, math.ceil(self.advanced_fraction * self.n_total - 1e-9))


def synth_schema(d_b: int = 9, d_a: int = 329) -> FeatureSchema:
    n_num = d_b - 2
    names = [v[0] for v in _BASIC_VIEWS[:n_num]] + [f"BASIC_{j:02d}" for j in range(len(_BASIC_VIEWS), n_num)]
    return FeatureSchema(
        basic_numeric=tuple(names),
        basic_categorical={"APOE4": ("0", "1"), "CDRGLOB": _CDR_LEVELS},
        advanced_numeric=tuple(f"ADV_{j:03d}" for j in range(1, d_a + 1)),
        label_column="CONVERTED_2Y",
        demographic_columns=(("AGE", "numeric"), ("PTEDUCAT", "numeric"), ("PTGENDER", "categorical"),
                             ("PTRACCAT", "categorical"), ("APOE4", "categorical")),
        advanced_available_column="HAS_ADVANCED",
    )


def label_intercept(slope: float, rate: float) -> float:
    """Intercept b with E[sigmoid(slope*r + b)] = rate for r ~ N(0, 1)."""
    if math.isinf(slope):
        return -float(norm.ppf(1 - rate))

    def mean_rate(b: float) -> float:
        centre = -b / slope  # the sigmoid's step; give the integrator a breakpoint there
        f = lambda r: norm.pdf(r) * expit(slope * r + b)  # noqa: E731
        lo, hi = min(centre, 0.0) - 12.0, max(centre, 0.0) + 12.0
        return quad(f, lo, hi, points=[centre], epsabs=1e-14, epsrel=1e-12, limit=200)[0]

    return brentq(lambda b: mean_rate(b) - rate, -60.0, 60.0, xtol=1e-14)


def generate_cohort(cfg: SynthConfig) -> CohortTable:
    """Draw a cohort whose features are noisy linear views of one latent risk.

    Demographic columns are independent of risk; APOE4 carrier status and the
    CDR level are thresholded noisy copies of it.
    """
    cfg.validate()
    schema = synth_schema(cfg.d_b, cfg.d_a)
    n = cfg.n_total
    rng = np.random.default_rng(cfg.seed)

    risk = rng.standard_normal(n)
    b = label_intercept(cfg.label_slope, cfg.conversion_base_rate)
    if math.isinf(cfg.label_slope):
        labels = (risk + b > 0).astype(int)
    else:
        labels = (rng.random(n) < expit(cfg.label_slope * risk + b)).astype(int)

    n_num = cfg.d_b - 2
    views = list(_BASIC_VIEWS[:n_num]) + [(name, 0.0, 1.0) for name in schema.basic_numeric[len(_BASIC_VIEWS):]]
    basic_num = np.empty((n, n_num))
    for j, (_, center, scale) in enumerate(views):
        basic_num[:, j] = center + scale * (cfg.basic_signal * risk + cfg.basic_noise * rng.standard_normal(n))
    basic_num = np.round(basic_num, 6)

    spread = math.hypot(cfg.basic_signal, cfg.basic_noise)
    apoe_copy = (cfg.basic_signal * risk + cfg.basic_noise * rng.standard_normal(n)) / spread
    apoe4 = np.where(apoe_copy > norm.ppf(0.6), "1", "0")
    cdr_copy = (cfg.basic_signal * risk + cfg.basic_noise * rng.standard_normal(n)) / spread
    cdr = np.array(_CDR_LEVELS)[np.searchsorted(norm.ppf([0.25, 0.75, 0.95]), cdr_copy)]

    loadings = rng.uniform(0.5, 1.5, cfg.d_a) * rng.choice([-1.0, 1.0], cfg.d_a)
    advanced = np.round(risk[:, None] * loadings + cfg.advanced_noise * rng.standard_normal((n, cfg.d_a)), 6)

    age = np.round(rng.normal(72.0, 7.5, n), 1)
    educ = np.clip(np.round(rng.normal(16.0, 2.7, n)), 6, 20)
    gender = np.where(rng.random(n) < 0.55, "Male", "Female")
    race = np.array(_RACES)[rng.choice(4, size=n, p=[0.93, 0.03, 0.02, 0.02])]

    has_adv = np.zeros(n, dtype=bool)
    has_adv[rng.choice(n, size=cfg.n_advanced, replace=False)] = True

    width = len(str(n))
    rows = []
    for i in range(n):
        basic: dict[str, float | str] = {c: float(basic_num[i, j]) for j, c in enumerate(schema.basic_numeric)}
        basic["APOE4"] = str(apoe4[i])
        basic["CDRGLOB"] = str(cdr[i])
        demo = {"AGE": float(age[i]), "PTEDUCAT": float(educ[i]), "PTGENDER": str(gender[i]),
                "PTRACCAT": str(race[i]), "APOE4": basic["APOE4"]}
        rows.append(PatientRecord(
            id=f"S{i + 1:0{width}d}",
            basic=basic,
            advanced=advanced[i].copy() if has_adv[i] else None,
            label=int(labels[i]),
            demographics=demo,
        ))
    return CohortTable(schema, rows)
