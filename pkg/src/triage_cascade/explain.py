"""Group Shapley attributions for the escalation score."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from . import errors
from .data import PatientRecord

MAX_EXACT_GROUPS = 16
DEFAULT_BACKGROUND_SIZE = 100

ScoreFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class BackgroundSet:
    rows: np.ndarray

    def __post_init__(self):
        if self.rows.ndim != 2 or len(self.rows) == 0:
            raise errors.EmptyBackground("background set must be a non-empty matrix")

    @property
    def size(self) -> int:
        return len(self.rows)


def make_background(X: np.ndarray, cap: int = DEFAULT_BACKGROUND_SIZE, seed: int = 0) -> BackgroundSet:
    """Seeded subsample of at most ``cap`` rows, kept in original row order."""
    X = np.asarray(X, dtype=float)
    if len(X) > cap:
        keep = np.sort(np.random.default_rng(seed).choice(len(X), size=cap, replace=False))
        X = X[keep]
    return BackgroundSet(X)


@dataclass
class Attribution:
    base_value: float
    phis: np.ndarray
    score: float
    features: list[str]
    std_errors: np.ndarray | None = None
    method: str = "exact"

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.features, map(float, self.phis)))


def _group_index(groups: Mapping[str, Sequence[int]] | None, width: int) -> tuple[list[str], np.ndarray]:
    """Feature names and, per column, the index of its group."""
    if groups is None:
        groups = {f"x{j}": [j] for j in range(width)}
    col_group = np.full(width, -1)
    for gi, cols in enumerate(groups.values()):
        for c in cols:
            if col_group[c] != -1:
                raise errors.InvalidConfig(f"column {c} belongs to two groups")
            col_group[c] = gi
    if np.any(col_group < 0):
        raise errors.InvalidConfig("groups must cover every input column")
    return list(groups), col_group


def _prepare(background: BackgroundSet, x) -> np.ndarray:
    x = np.asarray(x, dtype=float).ravel()
    if len(x) != background.rows.shape[1]:
        raise errors.WidthMismatch(f"patient width {len(x)} != background width {background.rows.shape[1]}")
    return x


def exact_shapley(score_fn: ScoreFn, background: BackgroundSet, x, groups=None) -> Attribution:
    """Shapley values by full coalition enumeration (m <= 16 groups).

    The value of a coalition S is the background mean of ``score_fn`` with the
    columns of every group in S set to the patient's values.
    """
    x = _prepare(background, x)
    names, col_group = _group_index(groups, len(x))
    m = len(names)
    if m > MAX_EXACT_GROUPS:
        raise errors.TooManyGroups(f"{m} groups; exact enumeration supports at most {MAX_EXACT_GROUPS}")
    masks = np.arange(2**m)
    bg = background.rows
    n_bg = len(bg)
    value = np.empty(2**m)
    block = max(1, 200_000 // n_bg)
    for lo in range(0, 2**m, block):
        sub = masks[lo:lo + block]
        take = ((sub[:, None] >> col_group[None, :]) & 1).astype(bool)  # (coalitions, width)
        comp = np.where(take[:, None, :], x[None, None, :], bg[None, :, :])
        scores = np.asarray(score_fn(comp.reshape(-1, len(x))), dtype=float)
        value[lo:lo + block] = scores.reshape(len(sub), n_bg).mean(axis=1)

    size = np.array([bin(s).count("1") for s in masks])
    weight = np.array([math.factorial(k) * math.factorial(m - k - 1) / math.factorial(m) if k < m else 0.0
                       for k in range(m + 1)])
    phis = np.empty(m)
    for j in range(m):
        without = masks[(masks >> j) & 1 == 0]
        phis[j] = float(np.sum(weight[size[without]] * (value[without | (1 << j)] - value[without])))
    return Attribution(float(value[0]), phis, float(value[-1]), names, method="exact")


def sampled_shapley(score_fn: ScoreFn, background: BackgroundSet, x, groups=None,
                    n_samples: int = 2000, seed: int = 0, chunk: int = 4000) -> Attribution:
    """Antithetic permutation sampling of group Shapley values.

    Each sample is a (permutation, background row) chain; samples come in
    pairs that share the background row and walk the permutation forwards and
    backwards. Standard errors are taken over pair means.
    """
    x = _prepare(background, x)
    names, col_group = _group_index(groups, len(x))
    m = len(names)
    if n_samples < 2 * m:
        raise errors.TooFewSamples(f"n_samples={n_samples} < 2 * groups ({2 * m})")
    n_pairs = n_samples // 2
    rng = np.random.default_rng(seed)
    perms = rng.permuted(np.tile(np.arange(m), (n_pairs, 1)), axis=1)
    bg_idx = rng.integers(0, background.size, n_pairs)
    bg = background.rows

    pair_est = np.empty((n_pairs, m))
    steps = np.arange(m + 1)
    for lo in range(0, n_pairs, chunk):
        p = perms[lo:lo + chunk]
        b = bg_idx[lo:lo + chunk]
        est = np.zeros((len(p), m))
        for direction in (p, p[:, ::-1]):
            rank = np.argsort(direction, axis=1)  # position of each group in the walk
            incl = rank[:, None, :] < steps[None, :, None]  # (chains, m+1, m)
            take = incl[:, :, col_group]
            comp = np.where(take, x[None, None, :], bg[b][:, None, :])
            f = np.asarray(score_fn(comp.reshape(-1, len(x))), dtype=float).reshape(len(p), m + 1)
            gain = np.diff(f, axis=1)  # gain[c, t] belongs to group direction[c, t]
            np.add.at(est, (np.repeat(np.arange(len(p)), m), direction.ravel()), gain.ravel())
        pair_est[lo:lo + chunk] = est / 2.0

    phis = pair_est.mean(axis=0)
    se = pair_est.std(axis=0, ddof=1) / math.sqrt(n_pairs) if n_pairs > 1 else np.full(m, np.nan)
    base = float(np.mean(score_fn(bg)))
    score = float(np.asarray(score_fn(x[None, :]))[0])
    return Attribution(base, phis, score, names, std_errors=se, method="sampled")


@dataclass
class ExplanationEntry:
    feature: str
    raw_value: float | str
    standardized_value: float | None
    phi: float

    @property
    def direction(self) -> str:
        return "pushes toward escalation" if self.phi > 0 else "pushes against escalation"

    def to_dict(self) -> dict:
        return {"feature": self.feature, "raw_value": self.raw_value,
                "standardized_value": self.standardized_value, "phi": self.phi, "direction": self.direction}


@dataclass
class ExplanationRecord:
    patient_id: str
    score: float
    tau: float
    escalate: bool
    base_value: float
    entries: list[ExplanationEntry]
    method: str = "exact"
    std_errors: dict[str, float] = field(default_factory=dict)

    def top(self, k: int) -> list[ExplanationEntry]:
        return self.entries[:k]

    def to_dict(self) -> dict:
        return {"patient_id": self.patient_id, "score": self.score, "tau": self.tau, "escalate": self.escalate,
                "base_value": self.base_value, "method": self.method,
                "entries": [e.to_dict() for e in self.entries], "std_errors": self.std_errors}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["feature", "phi"])
        for e in self.entries:
            w.writerow([e.feature, repr(e.phi)])
        return buf.getvalue()


def explain_decision(policy, record: PatientRecord, background: BackgroundSet, method: str = "exact",
                     n_samples: int = 50_000, seed: int = 0, top_k: int | None = None) -> ExplanationRecord:
    """Attribute one patient's escalation score to their clinical basic features.

    Attributions are on the calibrated triage probability. Entries are sorted
    by |phi| and carry the raw value next to the standardized one.
    """
    triage = policy.triage
    prep = triage.preprocessor
    x = prep.transform([record])[0]
    groups = {k: v for k, v in prep.groups().items()}
    score_fn = triage.model.predict_proba
    if method == "exact":
        att = exact_shapley(score_fn, background, x, groups)
    elif method == "sampled":
        att = sampled_shapley(score_fn, background, x, groups, n_samples=n_samples, seed=seed)
    else:
        raise errors.InvalidConfig(f"unknown attribution method {method!r}")
    std = prep.standardized(record)
    entries = [ExplanationEntry(f, record.basic[f], std.get(f), float(phi)) for f, phi in zip(att.features, att.phis)]
    entries.sort(key=lambda e: -abs(e.phi))
    if top_k is not None:
        entries = entries[:top_k]
    se = {} if att.std_errors is None else dict(zip(att.features, map(float, att.std_errors)))
    return ExplanationRecord(record.id, att.score, float(policy.tau), bool(att.score > policy.tau),
                             att.base_value, entries, att.method, se)
