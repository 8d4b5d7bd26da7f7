"""Dataset loading, sampling, imputation, encoding and scaling.

Turns a configured CSV file into a model-ready numeric matrix plus an
integer label vector. All transformations are pure: each operation returns
a new object and never mutates its input.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    AllMissingColumn,
    ConfigError,
    InvalidSpec,
    MoreThanTwoClasses,
    ParseError,
    SchemaMismatch,
    UnknownPositiveLabel,
)

Cell = float | str | None

NUMERIC = "numeric"
CATEGORICAL = "categorical"


@dataclass(frozen=True)
class ColumnSchema:
    name: str
    kind: str  # "numeric" | "categorical"
    missing_markers: tuple[str, ...] = ("",)

    def __post_init__(self):
        if self.kind not in (NUMERIC, CATEGORICAL):
            raise ConfigError(f"column {self.name!r}: unknown kind {self.kind!r}")


@dataclass(frozen=True)
class DatasetConfig:
    path: str
    target_column: str
    schema: tuple[ColumnSchema, ...]
    task: str  # "binary" | "multiclass"
    positive_label: str | None = None
    text_only_columns: tuple[str, ...] = ()
    sample_fraction: float = 1.0
    seed: int = 0
    name: str = ""

    def __post_init__(self):
        names = [c.name for c in self.schema]
        if len(set(names)) != len(names):
            raise ConfigError("duplicate column names in schema")
        if self.target_column in names:
            raise ConfigError(f"target column {self.target_column!r} also listed as a feature")
        if not (0.0 < self.sample_fraction <= 1.0):
            raise ConfigError(f"sample_fraction must lie in (0, 1], got {self.sample_fraction}")
        if self.task not in ("binary", "multiclass"):
            raise ConfigError(f"unknown task {self.task!r}")
        unknown = set(self.text_only_columns) - set(names)
        if unknown:
            raise ConfigError(f"text_only_columns not in schema: {sorted(unknown)}")


@dataclass(frozen=True)
class TabularDataset:
    config: DatasetConfig
    rows: tuple[tuple[Cell, ...], ...]  # cells in schema order
    targets: tuple[str, ...]
    metadata: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.rows)

    @property
    def p(self) -> int:
        return len(self.config.schema)


@dataclass(frozen=True)
class FeatureMatrix:
    names: tuple[str, ...]
    values: np.ndarray  # n x q, float64
    scaler: dict[str, tuple[float, float]]  # numeric column -> (mean, std)


@dataclass(frozen=True)
class LabelVector:
    values: np.ndarray  # n ints in [0, C)
    class_names: tuple[str, ...]

    @property
    def n_classes(self) -> int:
        return len(self.class_names)


def dataset_config_from_json(doc: dict) -> DatasetConfig:
    """Build a DatasetConfig from its JSON document form."""
    required = {"path", "target_column", "task", "columns"}
    missing = required - set(doc)
    if missing:
        raise ConfigError(f"dataset config missing keys: {sorted(missing)}")
    schema = tuple(
        ColumnSchema(
            name=c["name"],
            kind=c["kind"],
            missing_markers=tuple(c.get("missing_markers", [""])),
        )
        for c in doc["columns"]
    )
    return DatasetConfig(
        path=doc["path"],
        target_column=doc["target_column"],
        schema=schema,
        task=doc["task"],
        positive_label=doc.get("positive_label"),
        text_only_columns=tuple(doc.get("text_only_columns", [])),
        sample_fraction=float(doc.get("sample_fraction", 1.0)),
        seed=int(doc.get("seed", 0)),
        name=doc.get("name", ""),
    )


def dataset_config_to_json(config: DatasetConfig) -> dict:
    return {
        "name": config.name,
        "path": config.path,
        "target_column": config.target_column,
        "task": config.task,
        "positive_label": config.positive_label,
        "columns": [
            {"name": c.name, "kind": c.kind, "missing_markers": list(c.missing_markers)}
            for c in config.schema
        ],
        "text_only_columns": list(config.text_only_columns),
        "sample_fraction": config.sample_fraction,
        "seed": config.seed,
    }


def load_dataset(config: DatasetConfig) -> TabularDataset:
    """Parse the configured CSV into a TabularDataset.

    Rows whose target cell is empty are dropped. Feature cells matching
    their column's missing markers become None. Sampling is NOT applied
    here; see stratified_sample.
    """
    with open(config.path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaMismatch(f"{config.path}: empty file, header required") from None
        expected = {c.name for c in config.schema} | {config.target_column}
        got = set(header)
        if got != expected:
            extra = sorted(got - expected)
            absent = sorted(expected - got)
            raise SchemaMismatch(
                f"{config.path}: header mismatch (missing {absent}, unexpected {extra})"
            )
        col_pos = {name: header.index(name) for name in header}
        target_pos = col_pos[config.target_column]

        rows: list[tuple[Cell, ...]] = []
        targets: list[str] = []
        for line_no, record in enumerate(reader, start=1):
            if len(record) != len(header):
                raise SchemaMismatch(
                    f"{config.path}: row {line_no} has {len(record)} cells, expected {len(header)}"
                )
            raw_target = record[target_pos]
            if raw_target == "":
                continue
            cells: list[Cell] = []
            for col in config.schema:
                raw = record[col_pos[col.name]]
                if raw in col.missing_markers:
                    cells.append(None)
                elif col.kind == NUMERIC:
                    try:
                        cells.append(float(raw))
                    except ValueError:
                        raise ParseError(line_no, col.name, raw) from None
                else:
                    cells.append(raw)
            rows.append(tuple(cells))
            targets.append(raw_target)
    return TabularDataset(config=config, rows=tuple(rows), targets=tuple(targets))


def write_csv(ds: TabularDataset, path: str) -> None:
    """Write the dataset back out as an RFC-4180 CSV with header."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([c.name for c in ds.config.schema] + [ds.config.target_column])
        for row, target in zip(ds.rows, ds.targets):
            rendered = ["" if c is None else c for c in row]
            writer.writerow(list(rendered) + [target])


def stratified_sample(ds: TabularDataset, fraction: float, seed: int) -> TabularDataset:
    """Keep round(fraction * class count) rows per class, at least one each.

    Retained rows are chosen uniformly per class with a seeded generator and
    re-assembled in original row order, so downstream corpus alignment is a
    plain index mapping.
    """
    if not (0.0 < fraction <= 1.0):
        raise ConfigError(f"fraction must lie in (0, 1], got {fraction}")
    by_class: dict[str, list[int]] = {}
    for i, label in enumerate(ds.targets):
        by_class.setdefault(label, []).append(i)

    rng = np.random.default_rng(seed)
    keep: list[int] = []
    for label in sorted(by_class):
        idx = by_class[label]
        count = max(1, int(math.floor(fraction * len(idx) + 0.5)))
        chosen = rng.choice(len(idx), size=count, replace=False)
        keep.extend(idx[j] for j in chosen)
    keep.sort()
    return replace(
        ds,
        rows=tuple(ds.rows[i] for i in keep),
        targets=tuple(ds.targets[i] for i in keep),
    )


def _column(ds: TabularDataset, j: int) -> list[Cell]:
    return [row[j] for row in ds.rows]


def impute_missing(ds: TabularDataset) -> TabularDataset:
    """Replace missing cells: categorical -> column mode, numeric -> column mean.

    Mode ties break to the lexicographically smallest value.
    """
    fills: list[Cell] = []
    for j, col in enumerate(ds.config.schema):
        observed = [c for c in _column(ds, j) if c is not None]
        if any(c is None for c in _column(ds, j)) and not observed:
            raise AllMissingColumn(f"column {col.name!r} has no observed values")
        if not observed:
            fills.append(None)  # nothing missing; fill never used
            continue
        if col.kind == NUMERIC:
            fills.append(float(np.mean([float(c) for c in observed])))
        else:
            counts: dict[str, int] = {}
            for c in observed:
                counts[c] = counts.get(c, 0) + 1
            best = max(counts.values())
            fills.append(min(v for v, k in counts.items() if k == best))

    new_rows = tuple(
        tuple(fills[j] if cell is None else cell for j, cell in enumerate(row))
        for row in ds.rows
    )
    return replace(ds, rows=new_rows)


def encode_and_scale(ds: TabularDataset) -> FeatureMatrix:
    """One-hot categoricals (all levels kept) and standardize numerics.

    Numeric columns use the population standard deviation; constant columns
    become all-zero with std recorded as 1. Columns listed in
    text_only_columns are excluded entirely. One-hot columns are not scaled.
    """
    text_only = set(ds.config.text_only_columns)
    names: list[str] = []
    blocks: list[np.ndarray] = []
    scaler: dict[str, tuple[float, float]] = {}
    n = ds.n
    for j, col in enumerate(ds.config.schema):
        if col.name in text_only:
            continue
        cells = _column(ds, j)
        if any(c is None for c in cells):
            raise ConfigError(f"column {col.name!r} still has missing cells; impute first")
        if col.kind == NUMERIC:
            x = np.asarray(cells, dtype=np.float64)
            mean = float(x.mean())
            std = float(x.std())  # population std
            if std == 0.0:
                std = 1.0
            scaler[col.name] = (mean, std)
            names.append(col.name)
            blocks.append(((x - mean) / std).reshape(n, 1))
        else:
            categories = sorted({str(c) for c in cells})
            block = np.zeros((n, len(categories)), dtype=np.float64)
            pos = {cat: k for k, cat in enumerate(categories)}
            for i, c in enumerate(cells):
                block[i, pos[str(c)]] = 1.0
            names.extend(f"{col.name}={cat}" for cat in categories)
            blocks.append(block)
    values = np.hstack(blocks) if blocks else np.zeros((n, 0), dtype=np.float64)
    return FeatureMatrix(names=tuple(names), values=values, scaler=scaler)


def encode_target(ds: TabularDataset) -> LabelVector:
    """Map raw labels to integer classes.

    Binary: positive_label -> 1, the other label -> 0. Multiclass: indices
    follow the lexicographic order of the class names.
    """
    distinct = sorted(set(ds.targets))
    if ds.config.task == "binary":
        if ds.config.positive_label is None:
            raise ConfigError("binary task requires positive_label")
        if len(distinct) > 2:
            raise MoreThanTwoClasses(f"{len(distinct)} distinct labels under binary task")
        if ds.config.positive_label not in distinct:
            raise UnknownPositiveLabel(
                f"positive_label {ds.config.positive_label!r} not among labels {distinct}"
            )
        if len(distinct) < 2:
            raise ConfigError("binary task requires two observed classes")
        negative = next(v for v in distinct if v != ds.config.positive_label)
        class_names = (negative, ds.config.positive_label)
        values = np.array(
            [1 if t == ds.config.positive_label else 0 for t in ds.targets], dtype=np.int64
        )
    else:
        class_names = tuple(distinct)
        index = {name: i for i, name in enumerate(class_names)}
        values = np.array([index[t] for t in ds.targets], dtype=np.int64)
    return LabelVector(values=values, class_names=class_names)


@dataclass(frozen=True)
class SyntheticSpec:
    n: int
    numeric_count: int
    categorical_count: int
    signal_column: str
    noise_seed: int
    label_noise: float = 0.0
    signal_text_only: bool = False


def generate_synthetic(spec: SyntheticSpec) -> TabularDataset:
    """Deterministic fixture dataset: target = f(signal column) + label noise.

    The signal column is binary-valued ("on"/"off") and fully determines the
    target before noise: on -> "pos", off -> "neg". Numeric and categorical
    filler columns are independent of the target. With signal_text_only the
    signal column is excluded from the baseline matrix but still serialized,
    so it reaches models only through the text route.
    """
    if spec.n < 20:
        raise InvalidSpec(f"n must be >= 20, got {spec.n}")
    if spec.numeric_count < 0 or spec.categorical_count < 0:
        raise InvalidSpec("feature counts must be nonnegative")
    if not (0.0 <= spec.label_noise < 1.0):
        raise InvalidSpec(f"label_noise must lie in [0, 1), got {spec.label_noise}")
    if not spec.signal_column:
        raise InvalidSpec("signal_column must be named")

    rng = np.random.default_rng(spec.noise_seed)
    cols = [ColumnSchema(name=f"num{j}", kind=NUMERIC) for j in range(spec.numeric_count)]
    cols += [ColumnSchema(name=f"cat{j}", kind=CATEGORICAL) for j in range(spec.categorical_count)]
    cols.append(ColumnSchema(name=spec.signal_column, kind=CATEGORICAL))

    alphabet = ("a", "b", "c")
    signal = rng.integers(0, 2, size=spec.n)
    rows = []
    targets = []
    for i in range(spec.n):
        cells: list[Cell] = [round(float(v), 6) for v in rng.normal(size=spec.numeric_count)]
        cells += [alphabet[k] for k in rng.integers(0, len(alphabet), size=spec.categorical_count)]
        cells.append("on" if signal[i] else "off")
        rows.append(tuple(cells))
        targets.append("pos" if signal[i] else "neg")
    if spec.label_noise > 0.0:
        flip = rng.random(spec.n) < spec.label_noise
        targets = [
            ("neg" if t == "pos" else "pos") if f else t for t, f in zip(targets, flip)
        ]
    # both classes must occur; n >= 20 makes an all-one-class draw astronomically rare,
    # but guard so the invariant cannot silently break
    if len(set(targets)) < 2:
        raise InvalidSpec("degenerate draw produced a single class; change noise_seed")

    config = DatasetConfig(
        path="<synthetic>",
        target_column="label",
        schema=tuple(cols),
        task="binary",
        positive_label="pos",
        text_only_columns=(spec.signal_column,) if spec.signal_text_only else (),
        sample_fraction=1.0,
        seed=spec.noise_seed,
        name="synthetic",
    )
    meta = {
        "generator": "generate_synthetic",
        "formula": (
            f"target = 'pos' if {spec.signal_column} == 'on' else 'neg'; "
            f"labels flipped independently with probability {spec.label_noise}; "
            f"num*/cat* columns drawn independently of the target"
        ),
        "spec": {
            "n": spec.n,
            "numeric_count": spec.numeric_count,
            "categorical_count": spec.categorical_count,
            "signal_column": spec.signal_column,
            "noise_seed": spec.noise_seed,
            "label_noise": spec.label_noise,
            "signal_text_only": spec.signal_text_only,
        },
    }
    return TabularDataset(config=config, rows=tuple(rows), targets=tuple(targets), metadata=meta)
