"""Stratified cross-validation splits, the four evaluation metrics, ROC
curves, and paired significance testing with Bonferroni correction.

The Student-t CDF is computed from the regularized incomplete beta
function (continued-fraction expansion), so no stats library is needed.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .data import LabelVector
from .errors import ConfigError, DegenerateLabels, LengthMismatch, TooFewSamples

log = logging.getLogger(__name__)

METRIC_NAMES = ("accuracy", "balanced_accuracy", "weighted_f1", "roc_auc")


@dataclass(frozen=True)
class FoldSplit:
    folds: tuple[tuple[int, ...], ...]  # validation indices per fold

    @property
    def k(self) -> int:
        return len(self.folds)

    def train_indices(self, fold: int) -> np.ndarray:
        others = [idx for f, fold_idx in enumerate(self.folds) if f != fold for idx in fold_idx]
        return np.array(sorted(others), dtype=np.int64)


@dataclass(frozen=True)
class MetricsRecord:
    accuracy: float
    balanced_accuracy: float
    weighted_f1: float
    roc_auc: float

    def as_dict(self) -> dict[str, float]:
        return {
            "accuracy": self.accuracy,
            "balanced_accuracy": self.balanced_accuracy,
            "weighted_f1": self.weighted_f1,
            "roc_auc": self.roc_auc,
        }

    def get(self, metric: str) -> float:
        return self.as_dict()[metric]


@dataclass(frozen=True)
class TTestResult:
    t_statistic: float
    p_value: float
    df: int


def stratified_kfold(y, k: int, seed: int) -> FoldSplit:
    """Shuffle each class (seeded) and deal its indices round-robin to folds.

    Classes smaller than k are spread best-effort over distinct folds with
    a logged warning. Folds partition [0, n); per-class fold counts differ
    by at most one.
    """
    values = y.values if isinstance(y, LabelVector) else np.asarray(y, dtype=np.int64)
    n = len(values)
    if k < 2:
        raise ConfigError(f"k must be >= 2, got {k}")
    if n < k:
        raise TooFewSamples(f"{n} samples cannot fill {k} folds")

    rng = np.random.default_rng(seed)
    folds: list[list[int]] = [[] for _ in range(k)]
    for cls in np.unique(values):
        idx = np.nonzero(values == cls)[0]
        if len(idx) < k:
            log.warning("class %s has %d members, fewer than %d folds", cls, len(idx), k)
        shuffled = idx[rng.permutation(len(idx))]
        for pos, i in enumerate(shuffled):
            folds[pos % k].append(int(i))
    return FoldSplit(folds=tuple(tuple(sorted(f)) for f in folds))


def _confusion_counts(y_true, y_pred, n_classes):
    tp = np.zeros(n_classes)
    fp = np.zeros(n_classes)
    fn = np.zeros(n_classes)
    support = np.zeros(n_classes)
    for t, p in zip(y_true, y_pred):
        support[t] += 1
        if t == p:
            tp[t] += 1
        else:
            fp[p] += 1
            fn[t] += 1
    return tp, fp, fn, support


def roc_curve(y_true, scores) -> list[tuple[float, float, float]]:
    """ROC points (fpr, tpr, threshold) at every distinct score, descending.

    Starts at (0, 0) with threshold +inf and ends at (1, 1). Tied scores
    collapse into one point, which makes the trapezoidal area equal to the
    Mann-Whitney statistic with ties counted one half.
    """
    y_true = np.asarray(y_true)
    scores = np.asarray(scores, dtype=np.float64)
    if len(y_true) != len(scores):
        raise LengthMismatch(f"{len(y_true)} labels vs {len(scores)} scores")
    pos = float((y_true == 1).sum())
    neg = float(len(y_true) - pos)
    if pos == 0 or neg == 0:
        raise DegenerateLabels("ROC needs both classes present")

    order = np.argsort(-scores, kind="stable")
    points = [(0.0, 0.0, math.inf)]
    tp = fp = 0.0
    i = 0
    while i < len(order):
        threshold = scores[order[i]]
        while i < len(order) and scores[order[i]] == threshold:
            if y_true[order[i]] == 1:
                tp += 1.0
            else:
                fp += 1.0
            i += 1
        points.append((fp / neg, tp / pos, float(threshold)))
    return points


def auc_from_curve(points) -> float:
    area = 0.0
    for (fpr0, tpr0, _), (fpr1, tpr1, _) in zip(points, points[1:]):
        area += (fpr1 - fpr0) * (tpr1 + tpr0) / 2.0
    return area


def _binary_auc(y_true, scores) -> float:
    return auc_from_curve(roc_curve(y_true, scores))


def compute_metrics(y_true, y_pred, y_scores) -> MetricsRecord:
    """Accuracy, balanced accuracy, weighted F1, and ROC-AUC.

    Balanced accuracy averages recall over classes present in y_true.
    Per-class precision/recall/F1 fall back to 0 on empty denominators
    (logged). Multiclass ROC-AUC is the unweighted mean of one-vs-rest
    AUCs over classes with both positives and negatives present.
    """
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    y_scores = np.asarray(y_scores, dtype=np.float64)
    if not (len(y_true) == len(y_pred) == len(y_scores)):
        raise LengthMismatch(
            f"lengths differ: {len(y_true)} true, {len(y_pred)} pred, {len(y_scores)} scores"
        )
    n = len(y_true)
    n_classes = y_scores.shape[1]

    accuracy = float((y_true == y_pred).sum() / n)

    tp, fp, fn, support = _confusion_counts(y_true, y_pred, n_classes)
    recalls = []
    weighted_f1 = 0.0
    for c in range(n_classes):
        if support[c] == 0:
            log.debug("class %d absent from y_true; skipped in balanced accuracy", c)
            continue
        recall = tp[c] / (tp[c] + fn[c])
        recalls.append(recall)
        predicted = tp[c] + fp[c]
        if predicted == 0:
            log.debug("class %d never predicted; precision/F1 set to 0", c)
            f1 = 0.0
        else:
            precision = tp[c] / predicted
            f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
        weighted_f1 += (support[c] / n) * f1
    balanced_accuracy = float(np.mean(recalls))

    if n_classes == 2:
        try:
            aucs = [_binary_auc((y_true == 1).astype(np.int64), y_scores[:, 1])]
        except DegenerateLabels:
            log.debug("single-class y_true; ROC-AUC reported as 0.5")
            aucs = []
    else:
        aucs = []
        for c in range(n_classes):
            marks = (y_true == c).astype(np.int64)
            if marks.sum() in (0, n):
                log.debug("class %d one-sided in y_true; skipped in macro AUC", c)
                continue
            aucs.append(_binary_auc(marks, y_scores[:, c]))
    roc_auc = float(np.mean(aucs)) if aucs else 0.5

    return MetricsRecord(
        accuracy=accuracy,
        balanced_accuracy=balanced_accuracy,
        weighted_f1=float(weighted_f1),
        roc_auc=roc_auc,
    )


# --- Student-t machinery --------------------------------------------------

def _beta_continued_fraction(a: float, b: float, x: float) -> float:
    max_iter = 300
    eps = 3e-16
    fpmin = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < fpmin:
        d = fpmin
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < fpmin:
            d = fpmin
        c = 1.0 + aa / c
        if abs(c) < fpmin:
            c = fpmin
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < fpmin:
            d = fpmin
        c = 1.0 + aa / c
        if abs(c) < fpmin:
            c = fpmin
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            break
    return h


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b) via the continued fraction, accurate to ~1e-15."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_continued_fraction(a, b, x) / a
    return 1.0 - front * _beta_continued_fraction(b, a, 1.0 - x) / b


def student_t_cdf(t: float, df: int) -> float:
    """P(T <= t) for Student's t with df degrees of freedom."""
    if df < 1:
        raise ConfigError(f"df must be >= 1, got {df}")
    if t == 0.0:
        return 0.5
    x = df / (df + t * t)
    tail = 0.5 * regularized_incomplete_beta(df / 2.0, 0.5, x)
    return 1.0 - tail if t > 0 else tail


def student_t_two_sided_p(t: float, df: int) -> float:
    """P(|T| >= |t|) = I_{df/(df+t^2)}(df/2, 1/2)."""
    if t == 0.0:
        return 1.0
    if math.isinf(t):
        return 0.0
    return regularized_incomplete_beta(df / 2.0, 0.5, df / (df + t * t))


def paired_t_test(a, b) -> TTestResult:
    """Two-sided paired t-test on per-fold metric values.

    Uses the sample (k-1) standard deviation. All-zero differences give
    t = 0, p = 1; zero spread around a nonzero mean gives an infinite
    statistic with p = 0.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if len(a) != len(b):
        raise LengthMismatch(f"{len(a)} vs {len(b)} paired values")
    k = len(a)
    if k < 2:
        raise LengthMismatch(f"need at least 2 pairs, got {k}")
    d = a - b
    mean = float(d.mean())
    sd = float(d.std(ddof=1))
    df = k - 1
    if sd == 0.0:
        if mean == 0.0:
            return TTestResult(t_statistic=0.0, p_value=1.0, df=df)
        return TTestResult(t_statistic=math.copysign(math.inf, mean), p_value=0.0, df=df)
    t = mean / (sd / math.sqrt(k))
    return TTestResult(t_statistic=t, p_value=student_t_two_sided_p(t, df), df=df)


def bonferroni_decisions(p_values, alpha: float) -> list[bool]:
    """decision_i = (p_i < alpha / M), M = number of comparisons."""
    if not (0.0 < alpha < 1.0):
        raise ConfigError(f"alpha must lie in (0, 1), got {alpha}")
    m = len(p_values)
    if m == 0:
        return []
    threshold = alpha / m
    return [p < threshold for p in p_values]
