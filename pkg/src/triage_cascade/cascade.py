"""Certainty-gain triage labels, cascade routing and escalation-threshold selection."""
from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import errors
from .data import PatientRecord
from .evaluation import n_to_escalate, top_k_mask

DEFAULT_DELTA = 0.2
DEFAULT_RISK_CAP = 0.08

OUT_OF_FOLD = "out_of_fold"
IN_SAMPLE = "in_sample"


def certainty(p):
    """Distance of a probability from 0.5; works on scalars and arrays."""
    arr = np.asarray(p, dtype=float)
    if np.any(np.isnan(arr)) or np.any(arr < 0.0) or np.any(arr > 1.0):
        raise errors.OutOfRange("probabilities must lie in [0, 1]")
    c = np.abs(arr - 0.5)
    return float(c) if c.ndim == 0 else c


@dataclass(frozen=True)
class Predictions:
    """Probability vector tagged with how it was produced."""

    values: np.ndarray
    provenance: str
    ids: tuple[str, ...] = ()

    def __len__(self) -> int:
        return len(self.values)


@dataclass
class TriageLabels:
    z: np.ndarray
    delta: float
    p_basic: np.ndarray
    p_advanced: np.ndarray
    source: dict = field(default_factory=dict)

    @property
    def positive_rate(self) -> float:
        return float(self.z.mean()) if len(self.z) else 0.0


def _unwrap(p, name: str) -> tuple[np.ndarray, str | None]:
    if isinstance(p, Predictions):
        if p.provenance != OUT_OF_FOLD:
            raise errors.LeakageError(
                f"{name} predictions have provenance {p.provenance!r}; triage labels need out-of-fold predictions")
        return np.asarray(p.values, dtype=float), p.provenance
    return np.asarray(p, dtype=float), None


def make_triage_labels(p_b_oof, p_a_oof, delta: float = DEFAULT_DELTA) -> TriageLabels:
    """z = 1 iff certainty(p_a) - certainty(p_b) > delta.

    Accepts raw arrays or :class:`Predictions`; tagged inputs must be out-of-fold.
    """
    pb, src_b = _unwrap(p_b_oof, "basic")
    pa, src_a = _unwrap(p_a_oof, "advanced")
    if pb.shape != pa.shape:
        raise errors.LengthMismatch(f"basic ({len(pb)}) and advanced ({len(pa)}) predictions differ in length")
    if not delta > 0:
        raise errors.NonPositiveDelta(f"delta must be > 0, got {delta}")
    z = (certainty(pa) - certainty(pb) > delta).astype(int)
    return TriageLabels(z, float(delta), pb, pa, {"basic": src_b or "untagged", "advanced": src_a or "untagged"})


# ---------------------------------------------------------------------------
# routing


@dataclass
class EscalationDecision:
    patient_id: str
    escalate: bool
    score: float
    tau: float
    route: str  # basic | advanced | advanced-required
    final_probability: float | None
    basic_probability: float
    certainty_before: float
    certainty_after: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class CascadePolicy:
    basic: object
    advanced: object
    triage: object
    tau: float
    delta: float = DEFAULT_DELTA

    def escalation_scores(self, rows: Sequence[PatientRecord]) -> np.ndarray:
        return np.asarray(self.triage.predict_proba(rows), dtype=float)

    def escalates(self, scores) -> np.ndarray:
        # boundary rows (g == tau) stay with the basic model
        return np.asarray(scores, dtype=float) > self.tau


def cascade_predict(policy: CascadePolicy, record: PatientRecord) -> EscalationDecision:
    """Route one patient; raises AdvancedFeaturesRequired when escalation needs missing features."""
    decision = route_records(policy, [record])[0]
    if decision.route == "advanced-required":
        raise errors.AdvancedFeaturesRequired(
            f"patient {record.id}: escalation score {decision.score:.3f} > tau {policy.tau}; order the advanced tests")
    return decision


def route_records(policy: CascadePolicy, records: Sequence[PatientRecord]) -> list[EscalationDecision]:
    """Batch routing; rows needing escalation without advanced features get route 'advanced-required'."""
    if not records:
        return []
    g = policy.escalation_scores(records)
    pb = np.asarray(policy.basic.predict_proba(records), dtype=float)
    esc = policy.escalates(g)
    ready = [i for i, r in enumerate(records) if esc[i] and r.has_advanced]
    pa = np.full(len(records), np.nan)
    if ready:
        pa[ready] = policy.advanced.predict_proba([records[i] for i in ready])
    out = []
    for i, r in enumerate(records):
        cb = abs(pb[i] - 0.5)
        if not esc[i]:
            out.append(EscalationDecision(r.id, False, float(g[i]), policy.tau, "basic", float(pb[i]), float(pb[i]), cb))
        elif r.has_advanced:
            out.append(EscalationDecision(r.id, True, float(g[i]), policy.tau, "advanced", float(pa[i]),
                                          float(pb[i]), cb, abs(pa[i] - 0.5)))
        else:
            out.append(EscalationDecision(r.id, True, float(g[i]), policy.tau, "advanced-required", None,
                                          float(pb[i]), cb))
    return out


def mix_predictions(escalate, p_basic, p_advanced) -> np.ndarray:
    return np.where(np.asarray(escalate, dtype=bool), p_advanced, p_basic)


# ---------------------------------------------------------------------------
# risk-coverage analysis


@dataclass(frozen=True)
class RiskCoveragePoint:
    tau_candidate: float
    coverage: float
    risk: float
    n_kept: int

    def to_dict(self) -> dict:
        return asdict(self)


def _lower_sentinel(lo: float) -> float:
    return 0.5 * lo if lo > 0 else lo - 1.0


def _upper_sentinel(hi: float) -> float:
    return 0.5 * (hi + 1.0) if hi < 1 else hi + 1.0


def risk_coverage_curve(g_scores, p_basic, labels) -> list[RiskCoveragePoint]:
    """Selective risk of the basic model over every distinct escalation threshold.

    A row is kept (not escalated) iff g <= tau and counts as an error iff
    (p_basic > 0.5) != label. Candidates are midpoints between consecutive
    distinct scores plus one sentinel below the minimum and one above the
    maximum. An empty kept set has risk 0 by convention.
    """
    g = np.asarray(g_scores, dtype=float)
    pb = np.asarray(p_basic, dtype=float)
    y = np.asarray(labels).astype(int)
    if not (len(g) == len(pb) == len(y)):
        raise errors.LengthMismatch("risk-coverage inputs differ in length")
    n = len(g)
    if n == 0:
        return []
    err = ((pb > 0.5).astype(int) != y).astype(int)
    order = np.argsort(g, kind="mergesort")
    gs = g[order]
    last = np.r_[np.flatnonzero(np.diff(gs)), n - 1]  # end of each tie block
    uniq = gs[last]
    kept = last + 1
    kept_err = np.cumsum(err[order])[last]

    points = [RiskCoveragePoint(_lower_sentinel(float(uniq[0])), 0.0, 0.0, 0)]
    for k in range(len(uniq)):
        if k + 1 < len(uniq):
            lo, hi = float(uniq[k]), float(uniq[k + 1])
            tau = 0.5 * (lo + hi)
            if not lo <= tau < hi:
                tau = lo
        else:
            tau = _upper_sentinel(float(uniq[k]))
        points.append(RiskCoveragePoint(tau, float(kept[k] / n), float(kept_err[k] / kept[k]), int(kept[k])))
    return points


@dataclass
class ThresholdChoice:
    tau: float
    strategy: str
    point: RiskCoveragePoint | None
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"tau": self.tau, "strategy": self.strategy,
                "point": None if self.point is None else self.point.to_dict(), "warnings": self.warnings}


def parse_strategy(strategy: str) -> tuple[str, float | None]:
    """'risk_cap:0.08' | 'knee' | 'fixed:0.05' -> (name, parameter)."""
    name, _, arg = strategy.partition(":")
    name = name.strip().replace("-", "_")
    aliases = {"max_coverage_under_risk": "risk_cap"}
    name = aliases.get(name, name)
    if name == "knee":
        return name, None
    if name in ("risk_cap", "fixed"):
        try:
            return name, float(arg) if arg else (DEFAULT_RISK_CAP if name == "risk_cap" else math.nan)
        except ValueError:
            pass
    raise errors.InvalidConfig(f"unknown threshold strategy {strategy!r}")


def select_threshold(curve: Sequence[RiskCoveragePoint], strategy: str = f"risk_cap:{DEFAULT_RISK_CAP}") -> ThresholdChoice:
    """Pick tau from a risk-coverage curve.

    risk_cap:r  largest coverage whose risk <= r
    knee        point farthest from the chord joining the curve's endpoints
    fixed:t     tau = t, reported with the curve point it reproduces
    """
    if not curve:
        raise errors.EmptyCurve("risk-coverage curve is empty")
    name, arg = parse_strategy(strategy)
    pts = sorted(curve, key=lambda p: (p.coverage, p.tau_candidate))
    notes: list[str] = []

    if name == "fixed":
        if math.isnan(arg):
            raise errors.InvalidConfig("fixed strategy needs a value, e.g. fixed:0.05")
        below = [p for p in pts if p.tau_candidate <= arg]
        return ThresholdChoice(float(arg), strategy, below[-1] if below else pts[0], notes)

    if name == "risk_cap":
        feasible = [p for p in pts if p.risk <= arg]
        if not feasible or feasible[-1].coverage == 0.0:
            msg = f"no coverage > 0 keeps risk <= {arg}; escalating everyone"
            warnings.warn(msg)
            notes.append("NoFeasiblePoint: " + msg)
            choice = feasible[-1] if feasible else pts[0]
        else:
            choice = max(feasible, key=lambda p: p.coverage)
        return ThresholdChoice(choice.tau_candidate, strategy, choice, notes)

    # knee
    first, last = pts[0], pts[-1]
    dx, dy = last.coverage - first.coverage, last.risk - first.risk
    norm = math.hypot(dx, dy)
    if norm == 0:
        return ThresholdChoice(first.tau_candidate, strategy, first, notes)
    dist = [abs(dx * (first.risk - p.risk) - dy * (first.coverage - p.coverage)) / norm for p in pts]
    choice = pts[int(np.argmax(dist))]
    return ThresholdChoice(choice.tau_candidate, strategy, choice, notes)


# ---------------------------------------------------------------------------
# baselines


BASELINES = ("random", "top_prob", "most_uncertain")


def baseline_policy(kind: str, rate: float, p_basic, seed: int = 0) -> np.ndarray:
    """Escalation mask escalating exactly round(rate * n) rows.

    random          uniform draw (seeded)
    top_prob        highest basic-model probabilities
    most_uncertain  smallest basic-model certainty
    Ties go to the lower row index.
    """
    pb = np.asarray(p_basic, dtype=float)
    k = n_to_escalate(rate, len(pb))
    if kind == "random":
        mask = np.zeros(len(pb), dtype=bool)
        mask[np.random.default_rng(seed).choice(len(pb), size=k, replace=False)] = True
        return mask
    if kind == "top_prob":
        return top_k_mask(pb, k)
    if kind == "most_uncertain":
        return top_k_mask(-certainty(pb), k)
    raise errors.InvalidConfig(f"unknown baseline {kind!r}")


def baseline_order_score(kind: str, p_basic, seed: int = 0) -> np.ndarray:
    """Ranking score for a baseline's cost curve; escalating its top k gives the baseline at rate k/n.

    For ``random`` this is a seeded uniform score, so masks differ from
    ``baseline_policy(..., "random")`` draws while following the same law.
    """
    pb = np.asarray(p_basic, dtype=float)
    if kind == "random":
        return np.random.default_rng(seed).random(len(pb))
    if kind == "top_prob":
        return pb
    if kind == "most_uncertain":
        return -certainty(pb)
    raise errors.InvalidConfig(f"unknown baseline {kind!r}")
