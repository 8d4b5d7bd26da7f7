"""Native ensemble classifiers: Random Forest, Newton-boosted trees, and
an ordered-target-statistics categorical encoding.

Split search is exact greedy over midpoints of consecutive distinct sorted
values, vectorized with prefix sums so desk-scale datasets train quickly.
Determinism: per-tree generators are seeded with config.seed + tree index,
so parallel and sequential builds produce identical ensembles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import LabelVector
from .errors import ConfigError, SingleClassTraining, WidthMismatch

RANDOM_FOREST = "random_forest"
GBT = "gbt"
GBT_ORDERED_TS = "gbt_ordered_ts"

_GBT_DEFAULT_DEPTH = 6


@dataclass(frozen=True)
class ClassifierConfig:
    kind: str
    trees: int = 100  # forest size / boosting rounds
    max_depth: int | None = None  # None: unlimited for RF, 6 for gbt
    learning_rate: float = 0.1
    class_weight: str = "none"  # "none" | "balanced"
    subsample_features: str | None = None  # None: "sqrt" for RF, "all" for gbt
    min_child_weight: float = 1.0
    lambda_l2: float = 1.0
    seed: int = 0
    name: str = ""

    def __post_init__(self):
        if self.kind not in (RANDOM_FOREST, GBT, GBT_ORDERED_TS):
            raise ConfigError(f"unknown classifier kind {self.kind!r}")
        if self.trees < 1:
            raise ConfigError(f"trees must be >= 1, got {self.trees}")
        if self.kind != RANDOM_FOREST and self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.class_weight not in ("none", "balanced"):
            raise ConfigError(f"unknown class_weight {self.class_weight!r}")
        if self.subsample_features not in (None, "sqrt", "all"):
            raise ConfigError(f"unknown subsample_features {self.subsample_features!r}")

    @property
    def label(self) -> str:
        if self.name:
            return self.name
        if self.kind == GBT_ORDERED_TS:
            return "gbt_ordered_ts (CatBoost-flavored)"
        return self.kind

    def effective_max_depth(self) -> int | None:
        if self.max_depth is not None:
            return self.max_depth
        return None if self.kind == RANDOM_FOREST else _GBT_DEFAULT_DEPTH

    def effective_subsample(self) -> str:
        if self.subsample_features is not None:
            return self.subsample_features
        return "sqrt" if self.kind == RANDOM_FOREST else "all"


@dataclass
class TreeNode:
    feature_index: int = -1
    threshold: float = 0.0
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    value: np.ndarray | float | None = None  # leaf payload

    @property
    def is_leaf(self) -> bool:
        return self.left is None


@dataclass(frozen=True)
class OrderedTsEncoder:
    """Full-training category statistics used to encode rows at inference."""

    column: str
    prior_weight: float
    prior: float
    stats: dict[str, tuple[float, int]]  # category -> (target sum, count)

    def encode_value(self, category) -> float:
        total, count = self.stats.get(str(category), (0.0, 0))
        return (total + self.prior_weight * self.prior) / (count + self.prior_weight)


@dataclass(frozen=True)
class ClassifierModel:
    config: ClassifierConfig
    trees: tuple  # RF / binary gbt: TreeNode per entry; multiclass gbt: per-round tuples of TreeNode
    base_score: np.ndarray  # per-class log-odds (binary gbt: length 1)
    feature_names: tuple[str, ...]
    importance: np.ndarray  # per-feature, sums to 1 when any split exists
    n_classes: int
    n_features: int
    train_loss: tuple[float, ...] = ()  # gbt: per-round training log-loss
    ts_encoders: tuple[OrderedTsEncoder, ...] = ()


def _as_label_array(y) -> np.ndarray:
    if isinstance(y, LabelVector):
        return y.values
    return np.asarray(y, dtype=np.int64)


def _resolve_n_classes(y, y_arr: np.ndarray, n_classes: int | None) -> int:
    """Global class count: explicit > LabelVector metadata > observed max."""
    if n_classes is not None:
        return n_classes
    if isinstance(y, LabelVector):
        return y.n_classes
    return int(y_arr.max()) + 1


def balanced_sample_weights(y: np.ndarray, n_classes: int) -> np.ndarray:
    """w_i = n / (C * count of sample i's class); per-class totals are equal."""
    counts = np.bincount(y, minlength=n_classes).astype(np.float64)
    return len(y) / (n_classes * counts[y])


def _max_features(q: int, mode: str) -> int:
    if mode == "all":
        return q
    return max(1, int(math.sqrt(q)))


def _gini_best_split(X_node, y_node, w_node, n_classes, feature_ids):
    """Best (feature, threshold, decrease) by weighted Gini over all midpoints.

    Returns (decrease, feature, threshold, left_mask) or None when no
    feature admits a split. Decrease is in node-local terms: weighted child
    impurity subtracted from node impurity, scaled by node weight later.
    """
    total_w = w_node.sum()
    class_tot = np.zeros(n_classes)
    np.add.at(class_tot, y_node, w_node)
    gini_node = 1.0 - ((class_tot / total_w) ** 2).sum()
    if gini_node <= 0.0:
        return None

    best = None
    wc = np.zeros((len(y_node), n_classes))
    wc[np.arange(len(y_node)), y_node] = w_node
    for f in feature_ids:
        x = X_node[:, f]
        order = np.argsort(x, kind="stable")
        xs = x[order]
        cuts = np.nonzero(xs[1:] > xs[:-1])[0]
        if cuts.size == 0:
            continue
        cum_c = np.cumsum(wc[order], axis=0)
        left_c = cum_c[cuts]
        left_w = left_c.sum(axis=1)
        right_c = class_tot - left_c
        right_w = total_w - left_w
        gini_l = 1.0 - ((left_c / left_w[:, None]) ** 2).sum(axis=1)
        gini_r = 1.0 - ((right_c / right_w[:, None]) ** 2).sum(axis=1)
        decrease = gini_node - (left_w * gini_l + right_w * gini_r) / total_w
        k = int(np.argmax(decrease))
        if decrease[k] > 1e-15 and (best is None or decrease[k] > best[0]):
            lo, hi = xs[cuts[k]], xs[cuts[k] + 1]
            thr = lo + (hi - lo) / 2.0
            if thr >= hi:  # adjacent floats can round the midpoint up
                thr = lo
            best = (float(decrease[k]), f, float(thr))
    if best is None:
        return None
    decrease, f, thr = best
    return decrease, f, thr, X_node[:, f] <= thr


def _leaf_distribution(y_node, w_node, n_classes) -> np.ndarray:
    dist = np.zeros(n_classes)
    np.add.at(dist, y_node, w_node)
    return dist / dist.sum()


def _build_cart(X, y, w, n_classes, rng, max_depth, max_features, importance, total_w):
    """Grow one CART classification tree (iterative, depth-first)."""
    q = X.shape[1]
    root = TreeNode()
    stack = [(root, np.arange(len(y)), 0)]
    while stack:
        node, idx, depth = stack.pop()
        y_node, w_node = y[idx], w[idx]
        split = None
        if (max_depth is None or depth < max_depth) and len(idx) >= 2:
            if max_features >= q:
                feature_ids = np.arange(q)
            else:
                feature_ids = rng.choice(q, size=max_features, replace=False)
            split = _gini_best_split(X[idx], y_node, w_node, n_classes, feature_ids)
        if split is None:
            node.value = _leaf_distribution(y_node, w_node, n_classes)
            continue
        decrease, f, thr, left_mask = split
        importance[f] += (w_node.sum() / total_w) * decrease
        node.feature_index = int(f)
        node.threshold = thr
        node.left = TreeNode()
        node.right = TreeNode()
        stack.append((node.left, idx[left_mask], depth + 1))
        stack.append((node.right, idx[~left_mask], depth + 1))
    return root


def rf_fit(X, y, config: ClassifierConfig, n_classes: int | None = None) -> ClassifierModel:
    """Random Forest: bagged CART trees on Gini impurity.

    Bootstrap draws n samples with replacement per tree; balanced class
    weights give every class the same total weight. Importance is the
    weight-fraction-scaled Gini decrease, averaged over trees, normalized.
    """
    if config.kind != RANDOM_FOREST:
        raise ConfigError(f"rf_fit requires kind=random_forest, got {config.kind!r}")
    X = np.asarray(X, dtype=np.float64)
    y_in = y
    y = _as_label_array(y)
    n, q = X.shape
    if n < 2:
        raise ConfigError(f"need at least 2 samples, got {n}")
    n_classes = _resolve_n_classes(y_in, y, n_classes)
    if len(np.unique(y)) < 2:
        raise SingleClassTraining("training labels contain a single class")

    if config.class_weight == "balanced":
        weights = balanced_sample_weights(y, n_classes)
    else:
        weights = np.ones(n)
    max_features = _max_features(q, config.effective_subsample())
    max_depth = config.effective_max_depth()

    trees = []
    importance_sum = np.zeros(q)
    for t in range(config.trees):
        rng = np.random.default_rng(config.seed + t)
        boot = rng.integers(0, n, size=n)
        tree_importance = np.zeros(q)
        total_w = weights[boot].sum()
        tree = _build_cart(
            X[boot], y[boot], weights[boot], n_classes, rng,
            max_depth, max_features, tree_importance, total_w,
        )
        trees.append(tree)
        importance_sum += tree_importance
    importance = importance_sum / config.trees
    total = importance.sum()
    if total > 0:
        importance = importance / total

    return ClassifierModel(
        config=config,
        trees=tuple(trees),
        base_score=np.zeros(n_classes),
        feature_names=tuple(f"f{j}" for j in range(q)),
        importance=importance,
        n_classes=n_classes,
        n_features=q,
    )


def _newton_best_split(X_node, g_node, h_node, lam, min_child_weight, feature_ids):
    """Best split by second-order gain with L2-regularized leaf values."""
    G, H = g_node.sum(), h_node.sum()
    parent_term = G * G / (H + lam)
    best = None
    for f in feature_ids:
        x = X_node[:, f]
        order = np.argsort(x, kind="stable")
        xs = x[order]
        cuts = np.nonzero(xs[1:] > xs[:-1])[0]
        if cuts.size == 0:
            continue
        cum_g = np.cumsum(g_node[order])
        cum_h = np.cumsum(h_node[order])
        GL, HL = cum_g[cuts], cum_h[cuts]
        GR, HR = G - GL, H - HL
        gain = 0.5 * (GL * GL / (HL + lam) + GR * GR / (HR + lam) - parent_term)
        gain[(HL < min_child_weight) | (HR < min_child_weight)] = -np.inf
        k = int(np.argmax(gain))
        if gain[k] > 0.0 and (best is None or gain[k] > best[0]):
            lo, hi = xs[cuts[k]], xs[cuts[k] + 1]
            thr = lo + (hi - lo) / 2.0
            if thr >= hi:
                thr = lo
            best = (float(gain[k]), f, float(thr))
    if best is None:
        return None
    gain, f, thr = best
    return gain, f, thr, X_node[:, f] <= thr


def _build_newton_tree(X, g, h, lam, min_child_weight, max_depth, importance):
    """Grow one regression tree on gradients/Hessians (leaf = -G/(H + lam))."""
    q = X.shape[1]
    root = TreeNode()
    stack = [(root, np.arange(len(g)), 0)]
    feature_ids = np.arange(q)
    while stack:
        node, idx, depth = stack.pop()
        split = None
        if (max_depth is None or depth < max_depth) and len(idx) >= 2:
            split = _newton_best_split(
                X[idx], g[idx], h[idx], lam, min_child_weight, feature_ids
            )
        if split is None:
            node.value = float(-g[idx].sum() / (h[idx].sum() + lam))
            continue
        gain, f, thr, left_mask = split
        importance[f] += gain
        node.feature_index = int(f)
        node.threshold = thr
        node.left = TreeNode()
        node.right = TreeNode()
        stack.append((node.left, idx[left_mask], depth + 1))
        stack.append((node.right, idx[~left_mask], depth + 1))
    return root


def _tree_apply(tree: TreeNode, X: np.ndarray) -> np.ndarray:
    """Evaluate a regression tree (scalar leaves) on every row."""
    out = np.empty(len(X))
    stack = [(tree, np.arange(len(X)))]
    while stack:
        node, idx = stack.pop()
        if node.is_leaf:
            out[idx] = node.value
            continue
        mask = X[idx, node.feature_index] <= node.threshold
        stack.append((node.left, idx[mask]))
        stack.append((node.right, idx[~mask]))
    return out


def _tree_class_proba(tree: TreeNode, X: np.ndarray, n_classes: int) -> np.ndarray:
    out = np.empty((len(X), n_classes))
    stack = [(tree, np.arange(len(X)))]
    while stack:
        node, idx = stack.pop()
        if node.is_leaf:
            out[idx] = node.value
            continue
        mask = X[idx, node.feature_index] <= node.threshold
        stack.append((node.left, idx[mask]))
        stack.append((node.right, idx[~mask]))
    return out


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _log_loss_binary(y: np.ndarray, p: np.ndarray) -> float:
    p = np.clip(p, 1e-15, 1.0 - 1e-15)
    return float(-np.mean(y * np.log(p) + (1 - y) * np.log(1 - p)))


def _log_loss_multi(y: np.ndarray, P: np.ndarray) -> float:
    p = np.clip(P[np.arange(len(y)), y], 1e-15, 1.0)
    return float(-np.mean(np.log(p)))


def gbt_fit(X, y, config: ClassifierConfig, n_classes: int | None = None) -> ClassifierModel:
    """Gradient-boosted trees with second-order (Newton) leaf updates.

    Binary: base score log(pos/neg), per-round tree on g = p - y,
    h = p(1 - p). Multiclass: one tree per class per round on softmax
    gradients, base score log of the class prior. Tree outputs are shrunk
    by the learning rate; importance is total split gain, normalized.
    """
    if config.kind not in (GBT, GBT_ORDERED_TS):
        raise ConfigError(f"gbt_fit requires a gbt kind, got {config.kind!r}")
    X = np.asarray(X, dtype=np.float64)
    y_in = y
    y = _as_label_array(y)
    n, q = X.shape
    n_classes = _resolve_n_classes(y_in, y, n_classes)
    if len(np.unique(y)) < 2:
        raise SingleClassTraining("training labels contain a single class")

    lam = config.lambda_l2
    mcw = config.min_child_weight
    depth = config.effective_max_depth()
    lr = config.learning_rate
    importance = np.zeros(q)
    losses: list[float] = []

    if n_classes == 2:
        pos = int((y == 1).sum())
        neg = n - pos
        base = math.log(pos / neg)
        score = np.full(n, base)
        trees = []
        for _ in range(config.trees):
            p = _sigmoid(score)
            g = p - y
            h = p * (1.0 - p)
            tree = _build_newton_tree(X, g, h, lam, mcw, depth, importance)
            trees.append(tree)
            score = score + lr * _tree_apply(tree, X)
            losses.append(_log_loss_binary(y, _sigmoid(score)))
        base_score = np.array([base])
        model_trees = tuple(trees)
    else:
        counts = np.bincount(y, minlength=n_classes).astype(np.float64)
        # a class absent from this training subset gets a floored prior
        base_score = np.log(np.maximum(counts, 0.5) / n)
        scores = np.tile(base_score, (n, 1))
        onehot = np.zeros((n, n_classes))
        onehot[np.arange(n), y] = 1.0
        rounds = []
        for _ in range(config.trees):
            P = _softmax(scores)
            round_trees = []
            for c in range(n_classes):
                g = P[:, c] - onehot[:, c]
                h = P[:, c] * (1.0 - P[:, c])
                tree = _build_newton_tree(X, g, h, lam, mcw, depth, importance)
                round_trees.append(tree)
                scores[:, c] += lr * _tree_apply(tree, X)
            rounds.append(tuple(round_trees))
            losses.append(_log_loss_multi(y, _softmax(scores)))
        model_trees = tuple(rounds)

    total = importance.sum()
    if total > 0:
        importance = importance / total
    return ClassifierModel(
        config=config,
        trees=model_trees,
        base_score=base_score,
        feature_names=tuple(f"f{j}" for j in range(q)),
        importance=importance,
        n_classes=n_classes,
        n_features=q,
        train_loss=tuple(losses),
    )


def ordered_target_encode(
    column,
    y,
    prior_weight: float = 1.0,
    seed: int = 0,
    permutation: np.ndarray | None = None,
    prior: float | None = None,
) -> np.ndarray:
    """Leakage-resistant categorical encoding via ordered target statistics.

    Row i is encoded from the targets of same-category rows that precede it
    in a seeded random permutation, smoothed toward the prior:
    (sum of earlier same-category y + a * prior) / (earlier count + a).
    With prior=None the global target mean is used.
    """
    values = [str(v) for v in column]
    y = np.asarray(y, dtype=np.float64)
    if len(values) != len(y):
        raise ConfigError("column and target lengths differ")
    if permutation is None:
        permutation = np.random.default_rng(seed).permutation(len(y))
    else:
        permutation = np.asarray(permutation)
    if prior is None:
        prior = float(y.mean())

    encoded = np.empty(len(y))
    running: dict[str, tuple[float, int]] = {}
    order = np.argsort(permutation)  # visit rows by ascending pi
    for i in order:
        cat = values[i]
        total, count = running.get(cat, (0.0, 0))
        encoded[i] = (total + prior_weight * prior) / (count + prior_weight)
        running[cat] = (total + y[i], count + 1)
    return encoded


def _fit_ts_encoder(column, y01, prior_weight: float, name: str) -> OrderedTsEncoder:
    stats: dict[str, tuple[float, int]] = {}
    for v, t in zip(column, y01):
        key = str(v)
        total, count = stats.get(key, (0.0, 0))
        stats[key] = (total + float(t), count + 1)
    return OrderedTsEncoder(
        column=name, prior_weight=prior_weight, prior=float(np.mean(y01)), stats=stats
    )


def fit_classifier(
    X, y, config: ClassifierConfig, feature_names=None, categorical=None, n_classes=None
) -> ClassifierModel:
    """Dispatch to the configured ensemble.

    categorical: optional list of (name, values) raw columns. Under
    gbt_ordered_ts they are ordered-TS encoded (one column per class for
    multiclass, one-vs-rest) and appended to X before boosting; the model
    keeps full-training statistics so predict_proba can encode new rows.
    """
    X = np.asarray(X, dtype=np.float64)
    y_arr = _as_label_array(y)
    n_classes = _resolve_n_classes(y, y_arr, n_classes)
    names = list(feature_names) if feature_names is not None else [f"f{j}" for j in range(X.shape[1])]
    if len(names) != X.shape[1]:
        raise ConfigError(f"{len(names)} feature names for width {X.shape[1]}")

    encoders: list[OrderedTsEncoder] = []
    if config.kind == GBT_ORDERED_TS and categorical:
        extra = []
        for col_idx, (col_name, values) in enumerate(categorical):
            if n_classes == 2:
                targets = [("", y_arr.astype(np.float64))]
            else:
                targets = [(f"_cls{c}", (y_arr == c).astype(np.float64)) for c in range(n_classes)]
            for suffix, y01 in targets:
                extra.append(
                    ordered_target_encode(values, y01, seed=config.seed + col_idx)
                )
                names.append(f"{col_name}{suffix}_ts")
                encoders.append(_fit_ts_encoder(values, y01, 1.0, f"{col_name}{suffix}"))
        X = np.hstack([X] + [e.reshape(-1, 1) for e in extra])

    if config.kind == RANDOM_FOREST:
        model = rf_fit(X, y_arr, config, n_classes=n_classes)
    else:
        model = gbt_fit(X, y_arr, config, n_classes=n_classes)
    return ClassifierModel(
        config=model.config,
        trees=model.trees,
        base_score=model.base_score,
        feature_names=tuple(names),
        importance=model.importance,
        n_classes=model.n_classes,
        n_features=model.n_features,
        train_loss=model.train_loss,
        ts_encoders=tuple(encoders),
    )


def predict_proba(model: ClassifierModel, X, categorical=None) -> np.ndarray:
    """Class probabilities, one row per sample, rows summing to 1."""
    X = np.asarray(X, dtype=np.float64)
    if model.ts_encoders:
        if categorical is None:
            raise WidthMismatch("model was trained with categorical columns; pass them")
        extra = []
        for encoder, (_, values) in zip(model.ts_encoders, categorical_expanded(model, categorical)):
            extra.append(np.array([encoder.encode_value(v) for v in values]))
        X = np.hstack([X] + [e.reshape(-1, 1) for e in extra])
    if X.shape[1] != model.n_features:
        raise WidthMismatch(f"X has width {X.shape[1]}, model expects {model.n_features}")

    if model.config.kind == RANDOM_FOREST:
        acc = np.zeros((len(X), model.n_classes))
        for tree in model.trees:
            acc += _tree_class_proba(tree, X, model.n_classes)
        return acc / len(model.trees)

    lr = model.config.learning_rate
    if model.n_classes == 2:
        score = np.full(len(X), model.base_score[0])
        for tree in model.trees:
            score += lr * _tree_apply(tree, X)
        p = _sigmoid(score)
        return np.column_stack([1.0 - p, p])
    scores = np.tile(model.base_score, (len(X), 1))
    for round_trees in model.trees:
        for c, tree in enumerate(round_trees):
            scores[:, c] += lr * _tree_apply(tree, X)
    return _softmax(scores)


def categorical_expanded(model: ClassifierModel, categorical):
    """Repeat each raw categorical column once per its OvR encoder."""
    per_column = max(1, len(model.ts_encoders) // max(1, len(categorical)))
    expanded = []
    for name, values in categorical:
        for _ in range(per_column):
            expanded.append((name, values))
    return expanded


def predict_label(model: ClassifierModel, X, categorical=None) -> np.ndarray:
    return predict_proba(model, X, categorical).argmax(axis=1)


def feature_importance(model: ClassifierModel) -> np.ndarray:
    """Per-feature scores (impurity decrease for RF, total gain for gbt)."""
    return model.importance


def _tree_to_json(node: TreeNode) -> dict:
    if node.is_leaf:
        value = node.value.tolist() if isinstance(node.value, np.ndarray) else node.value
        return {"leaf": value}
    return {
        "feature": node.feature_index,
        "threshold": node.threshold,
        "left": _tree_to_json(node.left),
        "right": _tree_to_json(node.right),
    }


def model_to_json(model: ClassifierModel) -> dict:
    if model.config.kind == RANDOM_FOREST or model.n_classes == 2:
        trees = [_tree_to_json(t) for t in model.trees]
    else:
        trees = [[_tree_to_json(t) for t in round_trees] for round_trees in model.trees]
    return {
        "config": {
            "kind": model.config.kind,
            "trees": model.config.trees,
            "max_depth": model.config.max_depth,
            "learning_rate": model.config.learning_rate,
            "class_weight": model.config.class_weight,
            "seed": model.config.seed,
        },
        "base_score": model.base_score.tolist(),
        "trees": trees,
        "importance": model.importance.tolist(),
        "feature_names": list(model.feature_names),
    }
