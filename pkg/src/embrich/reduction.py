"""PCA noise reduction, importance-based dimension selection, and exact t-SNE.

PCA is computed from the singular value decomposition of the centered
matrix with a fixed sign convention, so components are reproducible.
t-SNE is the exact O(n^2) algorithm; it is meant for desk-scale n.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .classifiers import ClassifierConfig, rf_fit
from .data import LabelVector
from .errors import InvalidD, PerplexityTooLarge, TooFewPoints, WidthMismatch

DEFAULT_PCA_D = 50
DEFAULT_TOP_M = 10
DEFAULT_PERPLEXITY = 30.0
DEFAULT_TSNE_ITERATIONS = 1000

_EARLY_PHASE = 250  # iterations with x12 exaggeration and 0.5 momentum
_EXAGGERATION = 12.0
_LEARNING_RATE = 200.0


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray  # D
    components: np.ndarray  # d x D, orthonormal rows, descending variance
    explained_variance: np.ndarray  # d, non-increasing

    @property
    def d(self) -> int:
        return self.components.shape[0]

    @property
    def input_dim(self) -> int:
        return self.components.shape[1]


@dataclass(frozen=True)
class ImportanceRanking:
    scores: np.ndarray  # per-feature, nonnegative, sums to 1 when any split exists
    selected_indices: tuple[int, ...]  # top-m, descending score, ties to lower index


def pca_fit(X: np.ndarray, d: int, seed: int = 0) -> PcaModel:
    """Fit the top-d principal axes of X.

    Components are the top right singular vectors of the centered matrix;
    each one is flipped so its largest-magnitude entry is positive. The seed
    is accepted for interface uniformity but unused: SVD is deterministic.
    """
    del seed
    X = np.asarray(X, dtype=np.float64)
    n, width = X.shape
    if n < 2:
        raise InvalidD(f"need at least 2 rows, got {n}")
    if not (1 <= d <= min(n - 1, width)):
        raise InvalidD(f"d={d} outside [1, min(n-1={n-1}, D={width})]")
    mean = X.mean(axis=0)
    centered = X - mean
    _, singular, vt = np.linalg.svd(centered, full_matrices=False)
    components = vt[:d].copy()
    for row in components:
        peak = int(np.argmax(np.abs(row)))
        if row[peak] < 0:
            row *= -1.0
    explained = (singular[:d] ** 2) / (n - 1)
    return PcaModel(mean=mean, components=components, explained_variance=explained)


def pca_transform(model: PcaModel, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.shape[1] != model.input_dim:
        raise WidthMismatch(f"X has width {X.shape[1]}, model expects {model.input_dim}")
    return (X - model.mean) @ model.components.T


def pca_inverse_transform(model: PcaModel, Z: np.ndarray) -> np.ndarray:
    Z = np.asarray(Z, dtype=np.float64)
    if Z.shape[1] != model.d:
        raise WidthMismatch(f"Z has width {Z.shape[1]}, model has d={model.d}")
    return Z @ model.components + model.mean


def pca_model_to_json(model: PcaModel) -> dict:
    return {
        "mean": model.mean.tolist(),
        "components": model.components.tolist(),
        "explained_variance": model.explained_variance.tolist(),
        "d": model.d,
    }


def pca_model_from_json(doc: dict) -> PcaModel:
    return PcaModel(
        mean=np.asarray(doc["mean"], dtype=np.float64),
        components=np.asarray(doc["components"], dtype=np.float64),
        explained_variance=np.asarray(doc["explained_variance"], dtype=np.float64),
    )


def select_top_features(X: np.ndarray, y: LabelVector, m: int, seed: int) -> ImportanceRanking:
    """Rank features by Random Forest impurity importance and keep the top m.

    The forest uses the toolkit's fixed selection settings: 100 trees,
    balanced class weights, the given seed. Ties break to the lower index.
    """
    if m < 1:
        raise InvalidD(f"m must be >= 1, got {m}")
    config = ClassifierConfig(kind="random_forest", class_weight="balanced", seed=seed)
    model = rf_fit(np.asarray(X, dtype=np.float64), y, config)
    scores = model.importance
    width = X.shape[1]
    order = sorted(range(width), key=lambda j: (-scores[j], j))
    selected = tuple(order[: min(m, width)])
    return ImportanceRanking(scores=scores, selected_indices=selected)


def _conditional_probabilities(sq_dists: np.ndarray, perplexity: float) -> np.ndarray:
    """Per-point Gaussian affinities with bandwidths matched to perplexity.

    Bisection runs on the precision beta = 1/(2 sigma^2) until the realized
    perplexity 2^H is within 1e-5 of the target, at most 50 steps.
    """
    n = sq_dists.shape[0]
    P = np.zeros((n, n), dtype=np.float64)
    log2 = np.log(2.0)
    for i in range(n):
        dist = np.delete(sq_dists[i], i)
        beta, beta_min, beta_max = 1.0, 0.0, np.inf
        for _ in range(50):
            weights = np.exp(-dist * beta)
            total = weights.sum()
            if total <= 0.0:
                perp = 1.0
                probs = np.zeros_like(weights)
            else:
                probs = weights / total
                nz = probs[probs > 0.0]
                entropy_bits = -np.sum(nz * np.log(nz)) / log2
                perp = 2.0 ** entropy_bits
            if abs(perp - perplexity) <= 1e-5:
                break
            if perp > perplexity:  # kernel too wide
                beta_min = beta
                beta = beta * 2.0 if beta_max == np.inf else (beta + beta_max) / 2.0
            else:
                beta_max = beta
                beta = (beta + beta_min) / 2.0
        row = np.insert(probs, i, 0.0)
        P[i] = row
    return P


def tsne_embed(
    X: np.ndarray,
    perplexity: float = DEFAULT_PERPLEXITY,
    iterations: int = DEFAULT_TSNE_ITERATIONS,
    seed: int = 0,
    return_kl: bool = False,
):
    """Exact t-SNE projection to 2-D.

    Gradient descent with momentum 0.5 (0.8 after iteration 250), learning
    rate 200, and x12 early exaggeration for the first 250 iterations.
    Initialization is a seeded Gaussian with sigma 1e-4, so identical calls
    produce identical layouts. With return_kl, also returns the KL
    divergence history (one value per iteration, unexaggerated P).
    """
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if n < 8:
        raise TooFewPoints(f"t-SNE needs n >= 8, got {n}")
    if not (1.0 <= perplexity <= (n - 1) / 3.0):
        raise PerplexityTooLarge(f"perplexity {perplexity} outside [1, (n-1)/3 = {(n - 1) / 3:.2f}]")

    norms = (X ** 2).sum(axis=1)
    sq_dists = np.maximum(norms[:, None] + norms[None, :] - 2.0 * X @ X.T, 0.0)
    cond = _conditional_probabilities(sq_dists, perplexity)
    P = (cond + cond.T) / (2.0 * n)
    P = np.maximum(P, 1e-12)

    rng = np.random.default_rng(seed)
    Y = rng.normal(scale=1e-4, size=(n, 2))
    velocity = np.zeros_like(Y)
    gains = np.ones_like(Y)  # per-coordinate adaptive rates, as in the reference scheme
    kl_history: list[float] = []

    for it in range(iterations):
        p_eff = P * _EXAGGERATION if it < _EARLY_PHASE else P
        momentum = 0.5 if it < _EARLY_PHASE else 0.8

        y_norms = (Y ** 2).sum(axis=1)
        num = 1.0 / (1.0 + y_norms[:, None] + y_norms[None, :] - 2.0 * Y @ Y.T)
        np.fill_diagonal(num, 0.0)
        Q = np.maximum(num / num.sum(), 1e-12)

        pq = (p_eff - Q) * num
        grad = 4.0 * ((np.diag(pq.sum(axis=1)) - pq) @ Y)

        gains = np.where((grad > 0.0) != (velocity > 0.0), gains + 0.2, gains * 0.8)
        gains = np.maximum(gains, 0.01)
        velocity = momentum * velocity - _LEARNING_RATE * gains * grad
        Y = Y + velocity
        Y = Y - Y.mean(axis=0)

        if return_kl:
            kl_history.append(float(np.sum(P * np.log(P / Q))))

    if return_kl:
        return Y, kl_history
    return Y
