"""Classifiers and model selection: L2 logistic regression, RBF SVM + Platt, k-fold CV."""
from __future__ import annotations

import json
import hashlib
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.special import expit

from . import errors
from .data import PatientRecord, Preprocessor
from .evaluation import accuracy_at, auroc

FORMAT_VERSION = 1

LOGREG_TOL = 1e-8
LOGREG_MAX_ITER = 1000
SVM_TOL = 1e-3
SVM_MAX_ITER = 100_000
PLATT_FOLDS = 3

DEFAULT_LOGREG_GRID = [{"C": c} for c in (0.01, 0.1, 1.0, 10.0)]
DEFAULT_SVM_GRID = [{"C": c, "gamma": "auto"} for c in (0.1, 1.0, 10.0, 100.0)]


def _check_binary(y: np.ndarray) -> np.ndarray:
    y = np.asarray(y).astype(int)
    if y.size == 0 or y.min() == y.max():
        raise errors.SingleClass("training labels contain a single class")
    return y


# ---------------------------------------------------------------------------
# logistic regression


@dataclass
class LogRegModel:
    weights: np.ndarray
    intercept: float
    C: float
    converged: bool
    final_gradient_norm: float
    n_iter: int = 0

    @property
    def width(self) -> int:
        return len(self.weights)

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.width:
            raise errors.WidthMismatch(f"expected width {self.width}, got {X.shape}")
        return X @ self.weights + self.intercept

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return expit(self.decision_function(X))


def logreg_objective(w: np.ndarray, b: float, X: np.ndarray, y: np.ndarray, C: float) -> float:
    """0.5*|w|^2 + C * sum log(1 + exp(-s_i (w.x_i + b))), s in {-1, +1}."""
    s = 2.0 * y - 1.0
    return 0.5 * float(w @ w) + C * float(np.logaddexp(0.0, -s * (X @ w + b)).sum())


def logreg_gradient(w: np.ndarray, b: float, X: np.ndarray, y: np.ndarray, C: float) -> tuple[np.ndarray, float]:
    s = 2.0 * y - 1.0
    r = -C * s * expit(-s * (X @ w + b))
    return w + X.T @ r, float(r.sum())


def fit_logreg(X: np.ndarray, y: np.ndarray, C: float, tol: float = LOGREG_TOL,
               max_iter: int = LOGREG_MAX_ITER) -> LogRegModel:
    """Newton's method with Armijo backtracking from the zero vector.

    The intercept is not penalized. A model that hits ``max_iter`` is returned
    with ``converged=False`` rather than raising.
    """
    X = np.asarray(X, dtype=float)
    y = _check_binary(y)
    if not C > 0:
        raise errors.InvalidConfig("C must be positive")
    n, d = X.shape
    Xa = np.hstack([X, np.ones((n, 1))])
    s = 2.0 * y - 1.0
    theta = np.zeros(d + 1)
    reg = np.ones(d + 1)
    reg[-1] = 0.0

    def objective(t):
        return 0.5 * float(t[:-1] @ t[:-1]) + C * float(np.logaddexp(0.0, -s * (Xa @ t)).sum())

    f = objective(theta)
    it = 0
    gnorm = math.inf
    for it in range(1, max_iter + 1):
        m = Xa @ theta
        grad = reg * theta + Xa.T @ (-C * s * expit(-s * m))
        gnorm = float(np.linalg.norm(grad))
        if gnorm <= tol:
            break
        p = expit(m)
        H = (Xa.T * (C * p * (1.0 - p))) @ Xa
        H[np.diag_indices_from(H)] += reg
        try:
            step = -np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            step = -grad
        slope = float(grad @ step)
        t = 1.0
        while True:
            cand = theta + t * step
            fc = objective(cand)
            if fc <= f + 1e-4 * t * slope:
                break
            t *= 0.5
            if t < 1e-12:
                cand = None
                break
        if cand is None:
            # no representable decrease left; accept the current point
            break
        theta, f = cand, fc
    else:
        it = max_iter
    m = Xa @ theta
    grad = reg * theta + Xa.T @ (-C * s * expit(-s * m))
    gnorm = float(np.linalg.norm(grad))
    return LogRegModel(theta[:-1].copy(), float(theta[-1]), float(C), gnorm <= tol, gnorm, it)


# ---------------------------------------------------------------------------
# RBF support vector machine


def rbf_kernel(A: np.ndarray, B: np.ndarray, gamma: float) -> np.ndarray:
    sq = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * (A @ B.T)
    return np.exp(-gamma * np.maximum(sq, 0.0))


@dataclass
class SvmModel:
    support_vectors: np.ndarray
    dual_coeffs: np.ndarray  # alpha_i * y_i, y in {-1, +1}
    bias: float
    gamma: float
    C: float
    platt_a: float = 0.0
    platt_b: float = 0.0
    support_index: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    converged: bool = True
    n_iter: int = 0

    @property
    def width(self) -> int:
        return self.support_vectors.shape[1]

    def decision_function(self, X: np.ndarray, chunk: int = 20_000) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.width:
            raise errors.WidthMismatch(f"expected width {self.width}, got {X.shape}")
        out = np.empty(len(X))
        for lo in range(0, len(X), chunk):
            K = rbf_kernel(X[lo:lo + chunk], self.support_vectors, self.gamma)
            out[lo:lo + chunk] = K @ self.dual_coeffs + self.bias
        return out

    def calibrate(self, decision: np.ndarray) -> np.ndarray:
        return expit(-(self.platt_a * decision + self.platt_b))

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return self.calibrate(self.decision_function(X))


def resolve_gamma(gamma, width: int) -> float:
    if gamma == "auto":
        return 1.0 / width
    gamma = float(gamma)
    if not gamma > 0:
        raise errors.InvalidConfig("gamma must be positive")
    return gamma


def smo_solve(K: np.ndarray, y: np.ndarray, C: float, tol: float = SVM_TOL,
              max_iter: int = SVM_MAX_ITER) -> tuple[np.ndarray, float, bool, int]:
    """Soft-margin dual by SMO with second-order working-set selection.

    ``y`` is in {-1, +1}. Returns (alpha, bias, converged, iterations); stops
    when the maximal KKT violation m(alpha) - M(alpha) is at most ``tol``.
    """
    n = len(y)
    Q = K * np.outer(y, y)
    diag = np.diag(K).copy()
    alpha = np.zeros(n)
    G = -np.ones(n)
    pos = y > 0
    tau = 1e-12
    converged = False
    it = 0
    while it < max_iter:
        up = np.where(pos, alpha < C, alpha > 0)
        low = np.where(pos, alpha > 0, alpha < C)
        score = -y * G
        s_up = np.where(up, score, -np.inf)
        i = int(np.argmax(s_up))
        m = s_up[i]
        big_m = np.where(low, score, np.inf).min()
        if m - big_m <= tol:
            converged = True
            break
        cand = low & (score < m)
        b = m - score
        a = diag[i] + diag - 2.0 * K[i]
        a = np.where(a > 0, a, tau)
        obj = np.where(cand, -(b * b) / a, np.inf)
        j = int(np.argmin(obj))

        ai, aj = alpha[i], alpha[j]
        if y[i] != y[j]:
            quad = diag[i] + diag[j] + 2.0 * Q[i, j]
            quad = quad if quad > 0 else tau
            delta = (-G[i] - G[j]) / quad
            diff = ai - aj
            ni, nj = ai + delta, aj + delta
            if diff > 0:
                if nj < 0:
                    nj, ni = 0.0, diff
            elif ni < 0:
                ni, nj = 0.0, -diff
            if diff > 0:
                if ni > C:
                    ni, nj = C, C - diff
            elif nj > C:
                nj, ni = C, C + diff
        else:
            quad = diag[i] + diag[j] - 2.0 * Q[i, j]
            quad = quad if quad > 0 else tau
            delta = (G[i] - G[j]) / quad
            total = ai + aj
            ni, nj = ai - delta, aj + delta
            if total > C:
                if ni > C:
                    ni, nj = C, total - C
            elif nj < 0:
                nj, ni = 0.0, total
            if total > C:
                if nj > C:
                    nj, ni = C, total - C
            elif ni < 0:
                ni, nj = 0.0, total
        G += Q[:, i] * (ni - ai) + Q[:, j] * (nj - aj)
        alpha[i], alpha[j] = ni, nj
        it += 1

    score = -y * G
    free = (alpha > 0) & (alpha < C)
    if free.any():
        bias = float(score[free].mean())
    else:
        up = np.where(pos, alpha < C, alpha > 0)
        low = np.where(pos, alpha > 0, alpha < C)
        bias = 0.5 * float(np.where(up, score, -np.inf).max() + np.where(low, score, np.inf).min())
    return alpha, bias, converged, it


def dual_objective(alpha: np.ndarray, K: np.ndarray, y: np.ndarray) -> float:
    """Dual value sum(alpha) - 0.5 * alpha' Q alpha (to be maximized)."""
    v = alpha * y
    return float(alpha.sum() - 0.5 * v @ K @ v)


def fit_platt(decision: np.ndarray, y: np.ndarray, max_iter: int = 100) -> tuple[float, float]:
    """Platt's sigmoid fit with smoothed targets, Newton + backtracking.

    Returns (A, B) such that P(y=1 | f) = 1 / (1 + exp(A f + B)).
    """
    f = np.asarray(decision, dtype=float)
    y = np.asarray(y).astype(int)
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    t = np.where(y == 1, (n_pos + 1.0) / (n_pos + 2.0), 1.0 / (n_neg + 2.0))

    def nll(a, b):
        z = f * a + b
        return float(np.where(z >= 0, t * z + np.log1p(np.exp(-np.abs(z))),
                              (t - 1.0) * z + np.log1p(np.exp(-np.abs(z)))).sum())

    a, b = 0.0, math.log((n_neg + 1.0) / (n_pos + 1.0))
    fval = nll(a, b)
    for _ in range(max_iter):
        p = expit(-(f * a + b))
        d2 = p * (1.0 - p)
        h11 = float((f * f * d2).sum()) + 1e-12
        h22 = float(d2.sum()) + 1e-12
        h21 = float((f * d2).sum())
        d1 = t - p
        g1 = float((f * d1).sum())
        g2 = float(d1.sum())
        if abs(g1) < 1e-5 and abs(g2) < 1e-5:
            break
        det = h11 * h22 - h21 * h21
        da = -(h22 * g1 - h21 * g2) / det
        db = -(-h21 * g1 + h11 * g2) / det
        gd = g1 * da + g2 * db
        step = 1.0
        while step >= 1e-10:
            na, nb = a + step * da, b + step * db
            nf = nll(na, nb)
            if nf < fval + 1e-4 * step * gd:
                a, b, fval = na, nb, nf
                break
            step /= 2.0
        else:
            break
    return a, b


def fit_svm_rbf(X: np.ndarray, y: np.ndarray, C: float, gamma="auto", tol: float = SVM_TOL,
                max_iter: int = SVM_MAX_ITER, calibrate: bool = True) -> SvmModel:
    """Fit the RBF SVM, then Platt-calibrate on 3-fold out-of-fold decision values.

    Tiny or very unbalanced sets that cannot support the inner folds fall back
    to in-sample decision values for the calibration fit.
    """
    X = np.asarray(X, dtype=float)
    y01 = _check_binary(y)
    if not C > 0:
        raise errors.InvalidConfig("C must be positive")
    g = resolve_gamma(gamma, X.shape[1])
    ys = 2.0 * y01 - 1.0
    K = rbf_kernel(X, X, g)
    alpha, bias, converged, it = smo_solve(K, ys, C, tol, max_iter)
    sv = np.flatnonzero(alpha > 0)
    model = SvmModel(X[sv].copy(), alpha[sv] * ys[sv], bias, g, float(C),
                     support_index=sv, converged=converged, n_iter=it)
    if calibrate:
        model.platt_a, model.platt_b = fit_platt(_platt_decisions(X, y01, K, C, g, tol, max_iter, model), y01)
    return model


def _platt_decisions(X, y01, K, C, gamma, tol, max_iter, full: SvmModel) -> np.ndarray:
    if min(y01.sum(), len(y01) - y01.sum()) < PLATT_FOLDS:
        return full.decision_function(X)
    plan = make_cv_plan(len(y01), PLATT_FOLDS, y01, seed=0, stratified=True)
    out = np.empty(len(y01))
    for train, test in plan.folds():
        ytr = y01[train]
        if ytr.min() == ytr.max():
            return full.decision_function(X)
        ys = 2.0 * ytr - 1.0
        alpha, bias, _, _ = smo_solve(K[np.ix_(train, train)], ys, C, tol, max_iter)
        out[test] = K[np.ix_(test, train)] @ (alpha * ys) + bias
    return out


def kkt_residuals(model: SvmModel, X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Per-training-point KKT violation of the fitted model on its own training set."""
    ys = 2.0 * np.asarray(y).astype(int) - 1.0
    alpha = np.zeros(len(ys))
    alpha[model.support_index] = model.dual_coeffs * ys[model.support_index]
    margin = ys * model.decision_function(X)
    eps = 1e-12 * max(1.0, model.C)
    at_zero = alpha <= eps
    at_c = alpha >= model.C - eps
    return np.where(at_zero, np.maximum(0.0, 1.0 - margin),
                    np.where(at_c, np.maximum(0.0, margin - 1.0), np.abs(margin - 1.0)))


# ---------------------------------------------------------------------------
# generic learner interface


LEARNERS: dict[str, Callable] = {
    "logreg": lambda X, y, p: fit_logreg(X, y, C=float(p["C"])),
    "svm": lambda X, y, p: fit_svm_rbf(X, y, C=float(p["C"]), gamma=p.get("gamma", "auto")),
}


def fit_learner(kind: str, params: Mapping, X: np.ndarray, y: np.ndarray):
    try:
        fit = LEARNERS[kind]
    except KeyError:
        raise errors.InvalidConfig(f"unknown learner kind {kind!r}") from None
    return fit(X, y, params)


def predict_proba(model, X: np.ndarray) -> np.ndarray:
    return model.predict_proba(X)


@dataclass(frozen=True)
class CvPlan:
    k: int
    fold_assignment: np.ndarray
    seed: int
    stratified: bool

    def folds(self):
        for f in range(self.k):
            yield np.flatnonzero(self.fold_assignment != f), np.flatnonzero(self.fold_assignment == f)


def make_cv_plan(n: int, k: int, y: Sequence[int] | None = None, seed: int = 0,
                 stratified: bool = True) -> CvPlan:
    """Assign rows to k folds; stratified plans deal positives then negatives round-robin."""
    if k < 2 or k > n:
        raise errors.BadK(f"need 2 <= k <= n, got k={k}, n={n}")
    rng = np.random.default_rng(seed)
    assign = np.empty(n, dtype=int)
    if stratified:
        if y is None:
            raise errors.InvalidConfig("stratified plan needs labels")
        y = np.asarray(y).astype(int)
        if len(y) != n:
            raise errors.LengthMismatch("labels do not match n")
        pos = rng.permutation(np.flatnonzero(y == 1))
        neg = rng.permutation(np.flatnonzero(y != 1))
        order = np.concatenate([pos, neg])
    else:
        order = rng.permutation(n)
    assign[order] = np.arange(n) % k
    return CvPlan(k, assign, seed, stratified)


METRICS: dict[str, Callable[[np.ndarray, np.ndarray], float]] = {
    "auroc": auroc,
    "accuracy": lambda p, y: accuracy_at(p, y, 0.5),
}


@dataclass
class GridSearchResult:
    grid: list[dict]
    mean_scores: list[float]
    fold_scores: list[list[float]]
    best_index: int
    metric: str
    warnings: list[str] = field(default_factory=list)

    @property
    def best_point(self) -> dict:
        return self.grid[self.best_index]

    @property
    def best_score(self) -> float:
        return self.mean_scores[self.best_index]

    def to_dict(self) -> dict:
        return {"metric": self.metric, "grid": self.grid, "mean_scores": self.mean_scores,
                "fold_scores": self.fold_scores, "best_index": self.best_index,
                "best_point": self.best_point, "best_score": self.best_score, "warnings": self.warnings}


def grid_search(kind: str, grid: Sequence[Mapping], X: np.ndarray, y: np.ndarray, plan: CvPlan,
                metric: str = "auroc") -> GridSearchResult:
    """Mean held-out-fold score per grid point; ties go to the earliest point."""
    if not grid:
        raise errors.InvalidConfig("empty hyperparameter grid")
    score_fn = METRICS[metric]
    y = np.asarray(y).astype(int)
    means, per_fold, notes = [], [], []
    for gi, params in enumerate(grid):
        scores = []
        try:
            for train, test in plan.folds():
                model = fit_learner(kind, params, X[train], y[train])
                scores.append(float(score_fn(model.predict_proba(X[test]), y[test])))
        except errors.TriageError as exc:
            notes.append(f"grid point {gi} {dict(params)}: {exc.code}: {exc}")
            scores = [-math.inf]
        per_fold.append(scores)
        means.append(float(np.mean(scores)))
    best = int(np.argmax(means))  # first maximum
    return GridSearchResult([dict(p) for p in grid], means, per_fold, best, metric, notes)


def cross_val_predict(kind: str, params: Mapping, X: np.ndarray, y: np.ndarray, plan: CvPlan) -> np.ndarray:
    """Out-of-fold probabilities: each row scored by the model that never saw it."""
    y = np.asarray(y).astype(int)
    if len(plan.fold_assignment) != len(y) or len(X) != len(y):
        raise errors.LengthMismatch("plan, X and y must cover the same rows")
    out = np.full(len(y), np.nan)
    for train, test in plan.folds():
        out[test] = fit_learner(kind, params, X[train], y[train]).predict_proba(X[test])
    return out


# ---------------------------------------------------------------------------
# fitted classifier = preprocessing + model, with lossless JSON


def _hex(a) -> list[str]:
    return [float(v).hex() for v in np.ravel(a)]


def _unhex(xs, shape=None) -> np.ndarray:
    a = np.array([float.fromhex(x) for x in xs], dtype=float)
    return a.reshape(shape) if shape is not None else a


def model_to_dict(model) -> dict:
    if isinstance(model, LogRegModel):
        return {"type": "logreg", "weights": _hex(model.weights), "intercept": float(model.intercept).hex(),
                "C": float(model.C).hex(), "converged": model.converged,
                "final_gradient_norm": float(model.final_gradient_norm).hex(), "n_iter": model.n_iter}
    if isinstance(model, SvmModel):
        return {"type": "svm", "shape": list(model.support_vectors.shape),
                "support_vectors": _hex(model.support_vectors), "dual_coeffs": _hex(model.dual_coeffs),
                "bias": float(model.bias).hex(), "gamma": float(model.gamma).hex(), "C": float(model.C).hex(),
                "platt_a": float(model.platt_a).hex(), "platt_b": float(model.platt_b).hex(),
                "support_index": [int(i) for i in model.support_index],
                "converged": model.converged, "n_iter": model.n_iter}
    raise TypeError(f"cannot serialize {type(model).__name__}")


def model_from_dict(d: dict):
    h = float.fromhex
    if d["type"] == "logreg":
        return LogRegModel(_unhex(d["weights"]), h(d["intercept"]), h(d["C"]), d["converged"],
                           h(d["final_gradient_norm"]), d["n_iter"])
    if d["type"] == "svm":
        return SvmModel(_unhex(d["support_vectors"], tuple(d["shape"])), _unhex(d["dual_coeffs"]),
                        h(d["bias"]), h(d["gamma"]), h(d["C"]), h(d["platt_a"]), h(d["platt_b"]),
                        np.array(d["support_index"], dtype=int), d["converged"], d["n_iter"])
    raise errors.ConfigError(f"unknown model type {d['type']!r}")


@dataclass
class FittedClassifier:
    """A preprocessor plus a fitted model, scoring raw patient records."""

    role: str
    kind: str
    params: dict
    preprocessor: Preprocessor
    model: LogRegModel | SvmModel
    cv: dict = field(default_factory=dict)

    @property
    def uses_advanced(self) -> bool:
        return self.preprocessor.n_advanced > 0

    def predict_proba(self, rows: Sequence[PatientRecord]) -> np.ndarray:
        if not rows:
            return np.zeros(0)
        return self.model.predict_proba(self.preprocessor.transform(rows))

    def to_dict(self) -> dict:
        return {"format": "triage-cascade/model", "version": FORMAT_VERSION, "role": self.role,
                "kind": self.kind, "params": self.params, "schema_fingerprint": self.preprocessor.schema_fingerprint,
                "preprocessor": self.preprocessor.to_dict(), "model": model_to_dict(self.model), "cv": self.cv}

    @classmethod
    def from_dict(cls, d: dict) -> "FittedClassifier":
        if d.get("format") != "triage-cascade/model" or d.get("version") != FORMAT_VERSION:
            raise errors.ConfigError("not a supported model file")
        return cls(d["role"], d["kind"], d["params"], Preprocessor.from_dict(d["preprocessor"]),
                   model_from_dict(d["model"]), d.get("cv", {}))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "FittedClassifier":
        return cls.from_dict(json.loads(text))

    def fingerprint(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:16]
