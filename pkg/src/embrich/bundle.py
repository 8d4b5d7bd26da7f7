"""Report bundle emission: deterministic CSV/JSON artifacts plus a manifest
with content hashes. Figures are rendered from these files, never from
in-memory state, so any figure can be reproduced from a bundle alone.
"""

from __future__ import annotations

import csv
import hashlib
import json
import re
import time
from pathlib import Path

from .ablation import (
    FOLD_SAFE,
    FULL_DATA,
    AblationReport,
    SUBSET_IDS,
    significance_matrices,
    win_counts,
)
from .errors import IncompleteReport
from .evaluation import METRIC_NAMES

METRICS_CSV = "metrics.csv"
MEANS_CSV = "means.csv"
TTESTS_CSV = "ttests.csv"
WINS_CSV = "wins.csv"
MANIFEST = "manifest.json"


def _slug(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]+", "_", text).strip("_")


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _metric_rows(report: AblationReport, mode: str):
    for cell in report.cells:
        if cell.mode != mode:
            continue
        for fold, record in enumerate(cell.fold_metrics):
            yield (
                cell.dataset,
                cell.classifier,
                cell.subset,
                fold,
                record.accuracy,
                record.balanced_accuracy,
                record.weighted_f1,
                record.roc_auc,
            )


def _mean_rows(report: AblationReport, mode: str):
    for cell in report.cells:
        if cell.mode != mode:
            continue
        m = cell.mean_metrics
        yield (
            cell.dataset,
            cell.classifier,
            cell.subset,
            cell.width,
            m.accuracy,
            m.balanced_accuracy,
            m.weighted_f1,
            m.roc_auc,
        )


def _ttest_rows(report: AblationReport, mode: str):
    for row in report.ttests:
        if row.mode != mode:
            continue
        yield (
            row.dataset,
            row.classifier,
            row.metric,
            row.subset_a,
            row.subset_b,
            row.t,
            row.df,
            row.p,
            row.significant,
        )


def emit_bundle(report: AblationReport, out_dir: str | Path) -> dict:
    """Write the bundle directory and return its manifest.

    Layout: metrics.csv, means.csv, ttests.csv, wins.csv,
    significance/<dataset>_<classifier>_<metric>.csv,
    importance/<dataset>_<classifier>_<subset>.csv, manifest.json.
    fold_safe results, when present, land in *_fold_safe.csv twins.
    """
    if not report.cells:
        raise IncompleteReport("report has no cells to emit")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "significance").mkdir(exist_ok=True)
    (out / "importance").mkdir(exist_ok=True)

    fold_header = [
        "dataset", "classifier", "subset", "fold",
        "accuracy", "balanced_accuracy", "weighted_f1", "roc_auc",
    ]
    mean_header = [
        "dataset", "classifier", "subset", "width",
        "accuracy", "balanced_accuracy", "weighted_f1", "roc_auc",
    ]
    ttest_header = [
        "dataset", "classifier", "metric", "subset_a", "subset_b", "t", "df", "p", "significant",
    ]

    artifacts: list[Path] = []

    def emit_csv(name: str, header, rows):
        path = out / name
        _write_csv(path, header, rows)
        artifacts.append(path)

    emit_csv(METRICS_CSV, fold_header, _metric_rows(report, FULL_DATA))
    emit_csv(MEANS_CSV, mean_header, _mean_rows(report, FULL_DATA))
    emit_csv(TTESTS_CSV, ttest_header, _ttest_rows(report, FULL_DATA))
    if report.config.fold_safe:
        emit_csv("metrics_fold_safe.csv", fold_header, _metric_rows(report, FOLD_SAFE))
        emit_csv("means_fold_safe.csv", mean_header, _mean_rows(report, FOLD_SAFE))
        emit_csv("ttests_fold_safe.csv", ttest_header, _ttest_rows(report, FOLD_SAFE))

    wins = win_counts(report)
    win_rows = []
    for classifier in sorted(wins.counts):
        for subset in SUBSET_IDS:
            win_rows.append((classifier, subset, wins.counts[classifier][subset]))
    emit_csv(WINS_CSV, ["classifier", "subset", "wins"], win_rows)

    matrices = significance_matrices(report)
    for matrix in sorted(matrices, key=lambda m: (m.dataset, m.classifier, m.metric, m.mode)):
        suffix = "" if matrix.mode == FULL_DATA else "_fold_safe"
        name = f"{_slug(matrix.dataset)}_{_slug(matrix.classifier)}_{matrix.metric}{suffix}.csv"
        rows = [
            (subset, *[1 if v else 0 for v in matrix.values[i]])
            for i, subset in enumerate(SUBSET_IDS)
        ]
        path = out / "significance" / name
        _write_csv(path, ["subset", *SUBSET_IDS], rows)
        artifacts.append(path)

    folds = report.config.folds
    for cell in report.cells:
        if cell.mode != FULL_DATA or not cell.importance:
            continue
        name = f"{_slug(cell.dataset)}_{_slug(cell.classifier)}_{_slug(cell.subset)}.csv"
        header = ["feature", "importance", *[f"fold_{i}" for i in range(folds)]]
        rows = []
        for j, feature in enumerate(cell.feature_names):
            per_fold = [cell.fold_importances[f][j] for f in range(folds)]
            rows.append((feature, cell.importance[j], *per_fold))
        path = out / "importance" / name
        _write_csv(path, header, rows)
        artifacts.append(path)

    manifest = {
        "config_hash": report.config_hash,
        "seed": report.config.seed,
        "fold_safe": report.config.fold_safe,
        "subsets": list(SUBSET_IDS),
        "metrics": list(METRIC_NAMES),
        "failures": list(report.failures),
        "ties": list(report.ties),
        "created_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "artifacts": {
            str(p.relative_to(out)): hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(artifacts)
        },
    }
    with open(out / MANIFEST, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest
