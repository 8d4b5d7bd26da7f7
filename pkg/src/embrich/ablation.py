"""Orchestration of the full ablation: seven feature subsets per dataset and
classifier, stratified cross-validation, paired significance tests, win
counts, and top-feature reports.

The default mode constructs embeddings, PCA, and dimension selection once
on the full dataset before the CV loop. fold_safe additionally evaluates a
leak-free variant that refits PCA and selection inside every training fold;
both result sets are then emitted, tagged by mode.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .classifiers import ClassifierConfig, fit_classifier, predict_proba
from .data import (
    DatasetConfig,
    FeatureMatrix,
    LabelVector,
    TabularDataset,
    dataset_config_from_json,
    dataset_config_to_json,
    encode_and_scale,
    encode_target,
    impute_missing,
    load_dataset,
    stratified_sample,
)
from .embeddings import (
    EmbeddingBackendDescriptor,
    EmbeddingCache,
    embed_corpus,
    make_backend,
)
from .errors import ConfigError, IncompleteReport, RowCountMismatch
from .evaluation import (
    METRIC_NAMES,
    MetricsRecord,
    bonferroni_decisions,
    compute_metrics,
    paired_t_test,
    stratified_kfold,
)
from .reduction import pca_fit, pca_transform, select_top_features
from .textualize import build_corpus

log = logging.getLogger(__name__)

SUBSET_IDS = (
    "Baseline",
    "GPT2_Selected",
    "RoBERTa_Selected",
    "Baseline_GPT2_Selected",
    "Baseline_RoBERTa_Selected",
    "GPT2_RoBERTa_Selected",
    "Baseline_GPT2_RoBERTa_Selected",
)

# subset -> (include baseline, include backend block 0, include backend block 1)
_COMPOSITION = {
    "Baseline": (True, False, False),
    "GPT2_Selected": (False, True, False),
    "RoBERTa_Selected": (False, False, True),
    "Baseline_GPT2_Selected": (True, True, False),
    "Baseline_RoBERTa_Selected": (True, False, True),
    "GPT2_RoBERTa_Selected": (False, True, True),
    "Baseline_GPT2_RoBERTa_Selected": (True, True, True),
}

FULL_DATA = "full_data"
FOLD_SAFE = "fold_safe"


@dataclass(frozen=True)
class SubsetMatrix:
    id: str
    names: tuple[str, ...]
    values: np.ndarray


@dataclass(frozen=True)
class AblationConfig:
    datasets: tuple[DatasetConfig, ...]
    backends: tuple[EmbeddingBackendDescriptor, ...]
    classifiers: tuple[ClassifierConfig, ...]
    pca_d: int = 50
    top_m: int = 10
    folds: int = 5
    alpha: float = 0.05
    seed: int = 0
    fold_safe: bool = False

    def __post_init__(self):
        if len(self.backends) != 2:
            raise ConfigError(
                f"the seven canonical subsets need exactly 2 backends, got {len(self.backends)}"
            )
        if self.folds < 2:
            raise ConfigError(f"folds must be >= 2, got {self.folds}")
        if not self.datasets:
            raise ConfigError("at least one dataset is required")
        if not self.classifiers:
            raise ConfigError("at least one classifier is required")


@dataclass(frozen=True)
class CellResult:
    dataset: str
    classifier: str
    subset: str
    mode: str
    width: int
    fold_metrics: tuple[MetricsRecord, ...]
    mean_metrics: MetricsRecord
    feature_names: tuple[str, ...] = ()
    importance: tuple[float, ...] = ()  # full-data fit; default mode only
    fold_importances: tuple[tuple[float, ...], ...] = ()


@dataclass(frozen=True)
class TTestRow:
    dataset: str
    classifier: str
    metric: str
    subset_a: str
    subset_b: str
    t: float
    df: int
    p: float
    significant: bool
    mode: str


@dataclass(frozen=True)
class SignificanceMatrix:
    dataset: str
    classifier: str
    metric: str
    mode: str
    values: tuple[tuple[bool, ...], ...]  # 7x7, symmetric, false diagonal


@dataclass(frozen=True)
class WinCounts:
    counts: dict[str, dict[str, int]]  # classifier -> subset -> tally
    ties: tuple[str, ...]


@dataclass(frozen=True)
class AblationReport:
    config: AblationConfig
    cells: tuple[CellResult, ...]
    ttests: tuple[TTestRow, ...]
    failures: tuple[dict, ...]
    ties: tuple[str, ...]
    config_hash: str

    def cell(self, dataset: str, classifier: str, subset: str, mode: str = FULL_DATA) -> CellResult:
        for c in self.cells:
            if (c.dataset, c.classifier, c.subset, c.mode) == (dataset, classifier, subset, mode):
                return c
        raise IncompleteReport(f"no cell ({dataset}, {classifier}, {subset}, {mode})")


def ablation_config_to_json(config: AblationConfig) -> dict:
    return {
        "datasets": [dataset_config_to_json(d) for d in config.datasets],
        "backends": [
            {
                "kind": b.kind,
                "model_id": b.model_id,
                "dim": b.dim,
                "endpoint": b.endpoint,
                "batch_size": b.batch_size,
                "seed": b.seed,
            }
            for b in config.backends
        ],
        "classifiers": [
            {
                "kind": c.kind,
                "trees": c.trees,
                "max_depth": c.max_depth,
                "learning_rate": c.learning_rate,
                "class_weight": c.class_weight,
                "subsample_features": c.subsample_features,
                "min_child_weight": c.min_child_weight,
                "lambda_l2": c.lambda_l2,
                "seed": c.seed,
                "name": c.name,
            }
            for c in config.classifiers
        ],
        "pca_d": config.pca_d,
        "top_m": config.top_m,
        "folds": config.folds,
        "alpha": config.alpha,
        "seed": config.seed,
        "fold_safe": config.fold_safe,
    }


def ablation_config_from_json(doc: dict) -> AblationConfig:
    for key in ("datasets", "backends", "classifiers"):
        if key not in doc:
            raise ConfigError(f"run config missing key: {key}")
    datasets = tuple(dataset_config_from_json(d) for d in doc["datasets"])
    backends = tuple(
        EmbeddingBackendDescriptor(
            kind=b.get("kind", "deterministic_hash"),
            model_id=b["model_id"],
            dim=int(b["dim"]),
            endpoint=b.get("endpoint"),
            batch_size=int(b.get("batch_size", 256)),
            seed=int(b.get("seed", 0)),
        )
        for b in doc["backends"]
    )
    classifiers = tuple(
        ClassifierConfig(
            kind=c["kind"],
            trees=int(c.get("trees", 100)),
            max_depth=c.get("max_depth"),
            learning_rate=float(c.get("learning_rate", 0.1)),
            class_weight=c.get("class_weight", "none"),
            subsample_features=c.get("subsample_features"),
            min_child_weight=float(c.get("min_child_weight", 1.0)),
            lambda_l2=float(c.get("lambda_l2", 1.0)),
            seed=int(c.get("seed", 0)),
            name=c.get("name", ""),
        )
        for c in doc["classifiers"]
    )
    return AblationConfig(
        datasets=datasets,
        backends=backends,
        classifiers=classifiers,
        pca_d=int(doc.get("pca_d", 50)),
        top_m=int(doc.get("top_m", 10)),
        folds=int(doc.get("folds", 5)),
        alpha=float(doc.get("alpha", 0.05)),
        seed=int(doc.get("seed", 0)),
        fold_safe=bool(doc.get("fold_safe", False)),
    )


def config_hash(config: AblationConfig) -> str:
    canon = json.dumps(ablation_config_to_json(config), sort_keys=True)
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def assemble_subset(baseline: FeatureMatrix, selected, subset_id: str) -> SubsetMatrix:
    """Concatenate the blocks that define one subset.

    selected: per-backend (names, n x m matrix) pairs, in backend list
    order; index 0 plays the GPT-2 slot, index 1 the RoBERTa slot. Column
    order is baseline block first, then backend blocks in list order.
    """
    if subset_id not in _COMPOSITION:
        raise ConfigError(f"unknown subset id {subset_id!r}")
    include_baseline, *include_backends = _COMPOSITION[subset_id]
    blocks: list[np.ndarray] = []
    names: list[str] = []
    n_rows = baseline.values.shape[0]
    if include_baseline:
        blocks.append(baseline.values)
        names.extend(baseline.names)
    for include, (block_names, block) in zip(include_backends, selected):
        if block.shape[0] != n_rows:
            raise RowCountMismatch(f"block has {block.shape[0]} rows, baseline has {n_rows}")
        if include:
            blocks.append(block)
            names.extend(block_names)
    return SubsetMatrix(id=subset_id, names=tuple(names), values=np.hstack(blocks))


def _prepare_dataset(ds_config: DatasetConfig, prebuilt: TabularDataset | None) -> TabularDataset:
    ds = prebuilt if prebuilt is not None else load_dataset(ds_config)
    if ds.config.sample_fraction < 1.0:
        ds = stratified_sample(ds, ds.config.sample_fraction, ds.config.seed)
    return impute_missing(ds)


def _selected_block(Z: np.ndarray, y: LabelVector, model_id: str, m: int, seed: int):
    ranking = select_top_features(Z, y, m, seed)
    names = tuple(f"{model_id}_pc{j}" for j in ranking.selected_indices)
    return names, Z[:, ranking.selected_indices]


def _evaluate_cell_full_data(subset: SubsetMatrix, y: LabelVector, folds, clf: ClassifierConfig):
    fold_metrics = []
    fold_importances = []
    for fold_idx in range(folds.k):
        val_idx = np.asarray(folds.folds[fold_idx], dtype=np.int64)
        train_idx = folds.train_indices(fold_idx)
        model = fit_classifier(
            subset.values[train_idx],
            y.values[train_idx],
            clf,
            feature_names=subset.names,
            n_classes=y.n_classes,
        )
        proba = predict_proba(model, subset.values[val_idx])
        y_pred = proba.argmax(axis=1)
        fold_metrics.append(compute_metrics(y.values[val_idx], y_pred, proba))
        fold_importances.append(tuple(float(v) for v in model.importance))
    full_model = fit_classifier(
        subset.values, y.values, clf, feature_names=subset.names, n_classes=y.n_classes
    )
    return fold_metrics, fold_importances, full_model


def _mean_metrics(fold_metrics) -> MetricsRecord:
    return MetricsRecord(
        accuracy=float(np.mean([m.accuracy for m in fold_metrics])),
        balanced_accuracy=float(np.mean([m.balanced_accuracy for m in fold_metrics])),
        weighted_f1=float(np.mean([m.weighted_f1 for m in fold_metrics])),
        roc_auc=float(np.mean([m.roc_auc for m in fold_metrics])),
    )


def _evaluate_cell_fold_safe(
    subset_id: str,
    baseline: FeatureMatrix,
    embeddings,  # per-backend raw n x D matrices
    y: LabelVector,
    folds,
    clf: ClassifierConfig,
    config: AblationConfig,
):
    """Leak-free variant: PCA and selection are refit inside each training fold."""
    fold_metrics = []
    for fold_idx in range(folds.k):
        val_idx = np.asarray(folds.folds[fold_idx], dtype=np.int64)
        train_idx = folds.train_indices(fold_idx)
        y_train = LabelVector(values=y.values[train_idx], class_names=y.class_names)
        selected = []
        for backend_idx, (descriptor, E) in enumerate(embeddings):
            pca = pca_fit(E[train_idx], config.pca_d, seed=config.seed)
            Z_train = pca_transform(pca, E[train_idx])
            Z_val = pca_transform(pca, E[val_idx])
            ranking = select_top_features(Z_train, y_train, config.top_m, config.seed)
            names = tuple(f"{descriptor.model_id}_pc{j}" for j in ranking.selected_indices)
            selected.append(
                (names, Z_train[:, ranking.selected_indices], Z_val[:, ranking.selected_indices])
            )
        train_baseline = FeatureMatrix(
            names=baseline.names, values=baseline.values[train_idx], scaler=baseline.scaler
        )
        val_baseline = FeatureMatrix(
            names=baseline.names, values=baseline.values[val_idx], scaler=baseline.scaler
        )
        train_subset = assemble_subset(
            train_baseline, [(n, t) for n, t, _ in selected], subset_id
        )
        val_subset = assemble_subset(val_baseline, [(n, v) for n, _, v in selected], subset_id)
        model = fit_classifier(
            train_subset.values,
            y.values[train_idx],
            clf,
            feature_names=train_subset.names,
            n_classes=y.n_classes,
        )
        proba = predict_proba(model, val_subset.values)
        fold_metrics.append(compute_metrics(y.values[val_idx], proba.argmax(axis=1), proba))
    return fold_metrics


def _dataset_name(ds_config: DatasetConfig, index: int) -> str:
    return ds_config.name or f"ds{index}"


def run_ablation(
    config: AblationConfig,
    cache: EmbeddingCache | None = None,
    datasets: list[TabularDataset] | None = None,
) -> AblationReport:
    """Execute the whole study and return the assembled report.

    datasets, when given, must align with config.datasets and bypasses CSV
    loading (synthetic fixtures). A failed cell is recorded and skipped;
    the rest of the run continues.
    """
    if datasets is not None and len(datasets) != len(config.datasets):
        raise ConfigError("datasets list must align with config.datasets")
    if cache is None:
        cache = EmbeddingCache(path=None)

    cells: list[CellResult] = []
    ttests: list[TTestRow] = []
    failures: list[dict] = []
    modes = [FULL_DATA] + ([FOLD_SAFE] if config.fold_safe else [])

    for ds_index, ds_config in enumerate(config.datasets):
        name = _dataset_name(ds_config, ds_index)
        try:
            ds = _prepare_dataset(ds_config, datasets[ds_index] if datasets else None)
            baseline = encode_and_scale(ds)
            y = encode_target(ds)
            corpus = build_corpus(ds)
            embeddings = []
            for descriptor in config.backends:
                backend = make_backend(descriptor)
                matrix = embed_corpus(backend, corpus, cache)
                embeddings.append((descriptor, matrix.values))
            selected_blocks = []
            for descriptor, E in embeddings:
                pca = pca_fit(E, config.pca_d, seed=config.seed)
                Z = pca_transform(pca, E)
                selected_blocks.append(
                    _selected_block(Z, y, descriptor.model_id, config.top_m, config.seed)
                )
            folds = stratified_kfold(y, config.folds, seed=config.seed + ds_index)
        except Exception as exc:  # dataset-level failure: no cells possible
            log.error("dataset %s failed: %s", name, exc)
            failures.append({"dataset": name, "stage": "pipeline", "error": str(exc)})
            continue

        for clf in config.classifiers:
            for subset_id in SUBSET_IDS:
                try:
                    subset = assemble_subset(baseline, selected_blocks, subset_id)
                    fold_metrics, fold_importances, full_model = _evaluate_cell_full_data(
                        subset, y, folds, clf
                    )
                    cells.append(
                        CellResult(
                            dataset=name,
                            classifier=clf.label,
                            subset=subset_id,
                            mode=FULL_DATA,
                            width=subset.values.shape[1],
                            fold_metrics=tuple(fold_metrics),
                            mean_metrics=_mean_metrics(fold_metrics),
                            feature_names=subset.names,
                            importance=tuple(float(v) for v in full_model.importance),
                            fold_importances=tuple(fold_importances),
                        )
                    )
                    if config.fold_safe:
                        fs_metrics = _evaluate_cell_fold_safe(
                            subset_id, baseline, embeddings, y, folds, clf, config
                        )
                        cells.append(
                            CellResult(
                                dataset=name,
                                classifier=clf.label,
                                subset=subset_id,
                                mode=FOLD_SAFE,
                                width=subset.values.shape[1],
                                fold_metrics=tuple(fs_metrics),
                                mean_metrics=_mean_metrics(fs_metrics),
                                feature_names=subset.names,
                            )
                        )
                except Exception as exc:
                    log.error("cell (%s, %s, %s) failed: %s", name, clf.label, subset_id, exc)
                    failures.append(
                        {
                            "dataset": name,
                            "classifier": clf.label,
                            "subset": subset_id,
                            "error": str(exc),
                        }
                    )

        for mode in modes:
            ttests.extend(_dataset_ttests(cells, name, config, mode))

    report = AblationReport(
        config=config,
        cells=tuple(cells),
        ttests=tuple(ttests),
        failures=tuple(failures),
        ties=win_counts_raw(cells, config)[1],
        config_hash=config_hash(config),
    )
    return report


def _dataset_ttests(cells, dataset: str, config: AblationConfig, mode: str) -> list[TTestRow]:
    """All pairwise subset comparisons for one dataset, Bonferroni-corrected
    per (dataset, classifier, metric) family."""
    rows: list[TTestRow] = []
    for clf in config.classifiers:
        available = {
            c.subset: c
            for c in cells
            if c.dataset == dataset and c.classifier == clf.label and c.mode == mode
        }
        subset_ids = [s for s in SUBSET_IDS if s in available]
        for metric in METRIC_NAMES:
            pairs = list(itertools.combinations(subset_ids, 2))
            if not pairs:
                continue
            results = []
            for a, b in pairs:
                va = [m.get(metric) for m in available[a].fold_metrics]
                vb = [m.get(metric) for m in available[b].fold_metrics]
                results.append(paired_t_test(va, vb))
            decisions = bonferroni_decisions([r.p_value for r in results], config.alpha)
            for (a, b), res, sig in zip(pairs, results, decisions):
                rows.append(
                    TTestRow(
                        dataset=dataset,
                        classifier=clf.label,
                        metric=metric,
                        subset_a=a,
                        subset_b=b,
                        t=res.t_statistic,
                        df=res.df,
                        p=res.p_value,
                        significant=sig,
                        mode=mode,
                    )
                )
    return rows


def significance_matrices(report: AblationReport, alpha: float | None = None) -> list[SignificanceMatrix]:
    """7x7 symmetric boolean matrices from the report's stored t-tests.

    With alpha=None, the stored Bonferroni decisions are used; otherwise
    decisions are recomputed at the given family-wise level.
    """
    groups: dict[tuple[str, str, str, str], list[TTestRow]] = {}
    for row in report.ttests:
        groups.setdefault((row.dataset, row.classifier, row.metric, row.mode), []).append(row)

    matrices = []
    for (dataset, classifier, metric, mode), rows in groups.items():
        if len(rows) != len(SUBSET_IDS) * (len(SUBSET_IDS) - 1) // 2:
            raise IncompleteReport(
                f"({dataset}, {classifier}, {metric}, {mode}) has {len(rows)} pairs, expected 21"
            )
        if alpha is None:
            decisions = [r.significant for r in rows]
        else:
            decisions = bonferroni_decisions([r.p for r in rows], alpha)
        index = {s: i for i, s in enumerate(SUBSET_IDS)}
        grid = [[False] * len(SUBSET_IDS) for _ in range(len(SUBSET_IDS))]
        for row, decision in zip(rows, decisions):
            i, j = index[row.subset_a], index[row.subset_b]
            grid[i][j] = grid[j][i] = decision
        matrices.append(
            SignificanceMatrix(
                dataset=dataset,
                classifier=classifier,
                metric=metric,
                mode=mode,
                values=tuple(tuple(r) for r in grid),
            )
        )
    return matrices


def win_counts_raw(cells, config: AblationConfig):
    """Tally, per classifier, which subset has the best mean per (dataset, metric)."""
    counts: dict[str, dict[str, int]] = {}
    ties: list[str] = []
    for clf in config.classifiers:
        counts[clf.label] = {s: 0 for s in SUBSET_IDS}
    datasets = sorted({c.dataset for c in cells})
    for dataset in datasets:
        for clf in config.classifiers:
            per_subset = {
                c.subset: c.mean_metrics
                for c in cells
                if c.dataset == dataset and c.classifier == clf.label and c.mode == FULL_DATA
            }
            if len(per_subset) < len(SUBSET_IDS):
                continue
            for metric in METRIC_NAMES:
                best_value = max(per_subset[s].get(metric) for s in SUBSET_IDS)
                winners = [s for s in SUBSET_IDS if per_subset[s].get(metric) == best_value]
                if len(winners) > 1:
                    ties.append(
                        f"{dataset}/{clf.label}/{metric}: tie between {winners}, "
                        f"canonical order keeps {winners[0]}"
                    )
                counts[clf.label][winners[0]] += 1
    return counts, tuple(ties)


def win_counts(report: AblationReport) -> WinCounts:
    counts, ties = win_counts_raw(report.cells, report.config)
    for tie in ties:
        log.info("win-count tie: %s", tie)
    return WinCounts(counts=counts, ties=ties)


def top_features_report(model, k: int = 10) -> list[tuple[str, float]]:
    """Top-k features by importance, descending, index tie-break."""
    scores = model.importance
    order = sorted(range(len(scores)), key=lambda j: (-scores[j], j))
    return [(model.feature_names[j], float(scores[j])) for j in order[:k]]
