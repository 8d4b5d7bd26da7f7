"""Row-to-text serialization feeding the embedding backends.

Each row becomes "name1: v1, name2: v2, ..." in schema order, using the
original (pre-scaling, post-imputation) cell values. Numbers render in
minimal decimal form so "2.50" and 2.5 serialize identically.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .data import ColumnSchema, TabularDataset, Cell

TEMPLATE_VERSION = "kv-1"


@dataclass(frozen=True)
class TextCorpus:
    texts: tuple[str, ...]
    source_dataset_id: str
    template_version: str = TEMPLATE_VERSION


def _render_value(cell: Cell) -> str:
    if isinstance(cell, bool):  # bool is an int subclass; keep it out of the numeric path
        return str(cell)
    if isinstance(cell, (int, float)):
        value = float(cell)
        if value.is_integer():
            return str(int(value))
        return repr(value)  # shortest round-trip decimal
    return str(cell)


def serialize_row(schema: tuple[ColumnSchema, ...], row: tuple[Cell, ...]) -> str:
    if len(row) != len(schema):
        raise ValueError(f"row has {len(row)} cells, schema has {len(schema)}")
    return ", ".join(f"{col.name}: {_render_value(cell)}" for col, cell in zip(schema, row))


def build_corpus(ds: TabularDataset) -> TextCorpus:
    """Serialize every row; texts[i] stays aligned with rows[i]."""
    schema = ds.config.schema
    texts = tuple(serialize_row(schema, row) for row in ds.rows)
    return TextCorpus(texts=texts, source_dataset_id=ds.config.name or ds.config.path)


def export_corpus_jsonl(corpus: TextCorpus, path: str) -> None:
    """Write one {"i": index, "text": string} object per line."""
    with open(path, "w", encoding="utf-8") as fh:
        for i, text in enumerate(corpus.texts):
            fh.write(json.dumps({"i": i, "text": text}, ensure_ascii=False) + "\n")
