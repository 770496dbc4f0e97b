"""Metrics, bootstrap intervals, paired AUROC tests, cost curves and balance tables."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import errors
from .special import chi2_sf, student_t_sf2

DEFAULT_B = 1000
DEFAULT_UNIT_COST = 4000.0


def _as_arrays(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels).astype(int)
    if s.shape != y.shape:
        raise errors.LengthMismatch(f"scores {s.shape} and labels {y.shape} differ")
    return s, y


def _average_ranks(s: np.ndarray) -> np.ndarray:
    order = np.argsort(s, kind="mergesort")
    sorted_s = s[order]
    # tie blocks get the mean of their 1-based positions
    starts = np.r_[0, np.flatnonzero(np.diff(sorted_s)) + 1]
    ends = np.r_[starts[1:], len(s)]
    block_rank = 0.5 * (starts + 1 + ends)
    ranks = np.empty(len(s))
    ranks[order] = np.repeat(block_rank, ends - starts)
    return ranks


def auroc(scores, labels) -> float:
    """Mann-Whitney AUROC via average ranks; ties count one half."""
    s, y = _as_arrays(scores, labels)
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise errors.SingleClass("AUROC needs both classes")
    r = _average_ranks(s)
    return float((r[y == 1].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def _desc_counts(s: np.ndarray, y: np.ndarray):
    """Cumulative TP/FP at each distinct score, scanning cutoffs from high to low."""
    order = np.argsort(-s, kind="mergesort")
    s_sorted, y_sorted = s[order], y[order]
    last = np.r_[np.flatnonzero(np.diff(s_sorted)), len(s) - 1]
    tp = np.cumsum(y_sorted)[last]
    fp = (last + 1) - tp
    return s_sorted[last], tp, fp


def auprc(scores, labels) -> float:
    """Step-wise average precision: sum over cutoffs of (R_k - R_{k-1}) * P_k."""
    s, y = _as_arrays(scores, labels)
    n_pos = int(y.sum())
    if n_pos == 0:
        raise errors.NoPositives("AUPRC needs at least one positive")
    _, tp, fp = _desc_counts(s, y)
    recall = tp / n_pos
    precision = tp / (tp + fp)
    return float(np.sum(np.diff(np.r_[0.0, recall]) * precision))


def roc_points(scores, labels) -> list[tuple[float, float, float]]:
    """(threshold, fpr, tpr) from the strictest cutoff down; starts at (inf, 0, 0)."""
    s, y = _as_arrays(scores, labels)
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise errors.SingleClass("ROC needs both classes")
    thr, tp, fp = _desc_counts(s, y)
    pts = [(math.inf, 0.0, 0.0)]
    pts += [(float(t), float(f / n_neg), float(p / n_pos)) for t, p, f in zip(thr, tp, fp)]
    return pts


def pr_points(scores, labels) -> list[tuple[float, float, float]]:
    """(threshold, recall, precision) at each distinct cutoff, high to low."""
    s, y = _as_arrays(scores, labels)
    n_pos = int(y.sum())
    if n_pos == 0:
        raise errors.NoPositives("PR curve needs at least one positive")
    thr, tp, fp = _desc_counts(s, y)
    return [(float(t), float(p / n_pos), float(p / (p + f))) for t, p, f in zip(thr, tp, fp)]


@dataclass
class MetricSet:
    auroc: float | None
    auprc: float | None
    accuracy: float
    recall: float
    precision: float
    n: int
    cutoff: float = 0.5
    flags: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def accuracy_at(scores, labels, cutoff: float = 0.5) -> float:
    s, y = _as_arrays(scores, labels)
    return float(np.mean((s > cutoff).astype(int) == y)) if len(y) else 0.0


def thresholded_metrics(scores, labels, cutoff: float = 0.5) -> MetricSet:
    """Confusion-matrix metrics with predicted positive iff score > cutoff.

    Undefined precision/recall are reported as 0 and flagged. AUROC/AUPRC are
    filled in when the labels allow them.
    """
    s, y = _as_arrays(scores, labels)
    pred = s > cutoff
    tp = int(np.sum(pred & (y == 1)))
    fp = int(np.sum(pred & (y == 0)))
    fn = int(np.sum(~pred & (y == 1)))
    flags = []
    if tp + fp == 0:
        precision = 0.0
        flags.append("precision_undefined_no_predicted_positives")
    else:
        precision = tp / (tp + fp)
    if tp + fn == 0:
        recall = 0.0
        flags.append("recall_undefined_no_positives")
    else:
        recall = tp / (tp + fn)
    both = 0 < y.sum() < len(y)
    return MetricSet(
        auroc=auroc(s, y) if both else None,
        auprc=auprc(s, y) if y.sum() > 0 else None,
        accuracy=float(np.mean(pred.astype(int) == y)) if len(y) else 0.0,
        recall=float(recall),
        precision=float(precision),
        n=len(y),
        cutoff=cutoff,
        flags=flags,
    )


# ---------------------------------------------------------------------------
# bootstrap


@dataclass
class BootstrapCI:
    point: float
    lower: float
    upper: float
    B: int
    seed: int
    percentiles: tuple[float, float] = (2.5, 97.5)
    n_skipped: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def _replicate_indices(labels: np.ndarray, seed: int, b: int, tries: int = 10):
    """Resample rows for replicate ``b``; redraw single-class draws (at most ``tries`` times)."""
    rng = np.random.default_rng([seed, b])
    n = len(labels)
    for _ in range(tries):
        idx = rng.integers(0, n, n)
        y = labels[idx]
        if 0 < y.sum() < n:
            return idx
    return None


def bootstrap_ci(metric_fn: Callable[[np.ndarray, np.ndarray], float], scores, labels,
                 B: int = DEFAULT_B, seed: int = 0) -> BootstrapCI:
    """Percentile 95% interval from B row resamples; replicate b uses RNG stream (seed, b)."""
    if B < 100:
        raise errors.InvalidConfig("bootstrap needs B >= 100")
    s, y = _as_arrays(scores, labels)
    point = float(metric_fn(s, y))
    reps = []
    for b in range(B):
        idx = _replicate_indices(y, seed, b)
        if idx is None:
            continue
        try:
            reps.append(float(metric_fn(s[idx], y[idx])))
        except errors.NumericError:
            continue
    skipped = B - len(reps)
    if skipped > B / 2:
        raise errors.TooFewReplicates(f"{skipped} of {B} bootstrap replicates were unusable")
    lo, hi = np.percentile(reps, [2.5, 97.5])
    return BootstrapCI(point, float(lo), float(hi), B, seed, n_skipped=skipped)


@dataclass
class PairedDeltaTest:
    delta: float
    p_value: float
    B: int
    seed: int
    label_a: str = "a"
    label_b: str = "b"

    @property
    def significant(self) -> bool:
        return self.p_value < 0.05

    def to_dict(self) -> dict:
        d = asdict(self)
        d["significant"] = self.significant
        return d


def paired_delta_auroc(scores_a, scores_b, labels, B: int = DEFAULT_B, seed: int = 0,
                       label_a: str = "a", label_b: str = "b") -> PairedDeltaTest:
    """Paired bootstrap on AUROC(a) - AUROC(b) with a two-sided sign p-value.

    p = 2 * min(frac(delta* <= 0), frac(delta* >= 0)), clipped to [1/B, 1].
    """
    if B < 100:
        raise errors.InvalidConfig("bootstrap needs B >= 100")
    a, y = _as_arrays(scores_a, labels)
    b_, _ = _as_arrays(scores_b, labels)
    if a.shape != b_.shape:
        raise errors.LengthMismatch("paired score vectors differ in length")
    delta = auroc(a, y) - auroc(b_, y)
    deltas = []
    for b in range(B):
        idx = _replicate_indices(y, seed, b)
        if idx is None:
            continue
        deltas.append(auroc(a[idx], y[idx]) - auroc(b_[idx], y[idx]))
    if len(deltas) < B / 2:
        raise errors.TooFewReplicates("too many single-class bootstrap replicates")
    d = np.asarray(deltas)
    p = 2.0 * min(float(np.mean(d <= 0)), float(np.mean(d >= 0)))
    p = min(1.0, max(1.0 / B, p))
    return PairedDeltaTest(float(delta), p, B, seed, label_a, label_b)


# ---------------------------------------------------------------------------
# cost analysis


@dataclass
class CostPoint:
    escalation_rate: float
    expected_cost_per_100: float
    auroc: float
    n_escalated: int

    def to_dict(self) -> dict:
        return asdict(self)


def n_to_escalate(rate: float, n: int) -> int:
    """round(rate * n), halves rounded up."""
    if not 0.0 <= rate <= 1.0:
        raise errors.BadRate(f"rate {rate} outside [0, 1]")
    return min(n, int(math.floor(rate * n + 0.5)))


def top_k_mask(order_score, k: int) -> np.ndarray:
    """Mask of the k largest scores; ties go to the lower row index."""
    s = np.asarray(order_score, dtype=float)
    order = np.lexsort((np.arange(len(s)), -s))
    mask = np.zeros(len(s), dtype=bool)
    mask[order[:k]] = True
    return mask


def expected_cost_per_100(rate: float, unit_cost: float = DEFAULT_UNIT_COST) -> float:
    return rate * 100 * unit_cost


def cost_curve(order_score, p_basic, p_advanced, labels, unit_cost: float = DEFAULT_UNIT_COST,
               rates: Sequence[float] | None = None) -> list[CostPoint]:
    """AUROC of the mixed predictor when the top ``rate`` share by ``order_score`` is escalated."""
    g = np.asarray(order_score, dtype=float)
    pb, y = _as_arrays(p_basic, labels)
    pa, _ = _as_arrays(p_advanced, labels)
    if not (len(g) == len(pb) == len(pa)):
        raise errors.LengthMismatch("cost curve inputs differ in length")
    if rates is None:
        rates = np.round(np.linspace(0.0, 1.0, 21), 10)
    n = len(y)
    out = []
    for rate in rates:
        rate = float(rate)
        k = n_to_escalate(rate, n)
        mask = top_k_mask(g, k)
        mixed = np.where(mask, pa, pb)
        out.append(CostPoint(rate, expected_cost_per_100(rate, unit_cost), auroc(mixed, y), k))
    return out


# ---------------------------------------------------------------------------
# significance tests and balance tables


def welch_t(sample_a, sample_b) -> float:
    """Two-sided Welch t-test p-value (Welch-Satterthwaite df)."""
    a = np.asarray(sample_a, dtype=float)
    b = np.asarray(sample_b, dtype=float)
    if len(a) < 2 or len(b) < 2:
        raise errors.DegenerateSample("each sample needs at least 2 values")
    va = a.var(ddof=1) / len(a)
    vb = b.var(ddof=1) / len(b)
    se2 = va + vb
    if se2 == 0:
        raise errors.DegenerateSample("both samples have zero variance")
    t = (a.mean() - b.mean()) / math.sqrt(se2)
    df = se2**2 / (va**2 / (len(a) - 1) + vb**2 / (len(b) - 1))
    return float(min(1.0, student_t_sf2(float(t), float(df))))


def chi_square_stat(table) -> tuple[float, int]:
    obs = np.asarray(table, dtype=float)
    if obs.ndim != 2 or min(obs.shape) < 1:
        raise errors.DataError("contingency table must be 2-D")
    total = obs.sum()
    expected = obs.sum(1, keepdims=True) * obs.sum(0, keepdims=True) / (total if total else 1.0)
    if np.any(expected <= 0):
        raise errors.ZeroExpected("contingency table has a zero expected count")
    stat = float(((obs - expected) ** 2 / expected).sum())
    return stat, (obs.shape[0] - 1) * (obs.shape[1] - 1)


def chi_square(table) -> float:
    """Pearson chi-square test of independence (no continuity correction)."""
    stat, df = chi_square_stat(table)
    return 1.0 if df == 0 else float(chi2_sf(stat, df))


@dataclass
class BalanceRow:
    name: str
    test_kind: str  # welch_t | chi_square
    group_a: dict
    group_b: dict
    p_value: float


@dataclass
class BalanceTable:
    label_a: str
    label_b: str
    rows: list[BalanceRow]

    def to_dict(self) -> dict:
        return {"label_a": self.label_a, "label_b": self.label_b, "rows": [asdict(r) for r in self.rows]}

    def p_values(self) -> dict[str, float]:
        return {r.name: r.p_value for r in self.rows}


def _numeric_summary(v: np.ndarray) -> dict:
    return {"n": int(len(v)), "mean": float(v.mean()) if len(v) else math.nan,
            "sd": float(v.std(ddof=1)) if len(v) > 1 else math.nan}


def balance_report(records, group_mask, characteristics: Sequence[tuple[str, str]],
                   label_a: str = "escalated", label_b: str = "not_escalated") -> BalanceTable:
    """Compare characteristics between ``records[mask]`` and ``records[~mask]``.

    Numeric characteristics use Welch's t-test, categorical ones Pearson's
    chi-square on the category-by-group table (empty categories dropped).
    """
    mask = np.asarray(group_mask, dtype=bool)
    if len(mask) != len(records):
        raise errors.LengthMismatch("group mask does not match records")
    if mask.all() or not mask.any():
        raise errors.EmptyGroup("both comparison groups must be non-empty")
    rows = []
    for name, kind in characteristics:
        values = [r.demographics.get(name, r.basic.get(name)) for r in records]
        if kind == "numeric":
            v = np.array(values, dtype=float)
            a, b = v[mask], v[~mask]
            a, b = a[~np.isnan(a)], b[~np.isnan(b)]
            try:
                p = welch_t(a, b)
            except errors.DegenerateSample:
                p = 1.0
            rows.append(BalanceRow(name, "welch_t", _numeric_summary(a), _numeric_summary(b), p))
        else:
            tokens = [str(t) for t in values]
            cats = sorted(set(tokens))
            ta = np.array(tokens, dtype=object)
            counts = np.array([[np.sum(ta[mask] == c) for c in cats], [np.sum(ta[~mask] == c) for c in cats]])
            keep = counts.sum(0) > 0
            table = counts[:, keep]
            p = chi_square(table) if table.shape[1] > 1 else 1.0
            summ = lambda row: {c: int(x) for c, x in zip(cats, row)}  # noqa: E731
            rows.append(BalanceRow(name, "chi_square", summ(counts[0]), summ(counts[1]), p))
    return BalanceTable(label_a, label_b, rows)
