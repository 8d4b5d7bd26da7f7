"""Static SVG figure rendering from bundle CSV files.

Figures are plain hand-assembled SVG strings with fixed coordinate
formatting, so identical inputs always produce byte-identical documents
(golden-file friendly). No external assets, no raster output.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError, MissingData

PALETTE = ("#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860", "#da8bc3")

CHART_KINDS = ("grouped_bar", "boolean_matrix", "roc", "scatter2d", "importance_bar")


@dataclass(frozen=True)
class ChartSpec:
    kind: str
    title: str
    data: str  # path relative to the bundle directory
    series: tuple[str, ...] = ()
    filter: dict = field(default_factory=dict)  # column -> required value
    top_k: int = 10

    def __post_init__(self):
        if self.kind not in CHART_KINDS:
            raise ConfigError(f"unknown chart kind {self.kind!r}")


def _load_rows(bundle_path: str | Path, spec: ChartSpec) -> list[dict]:
    path = Path(bundle_path) / spec.data
    if not path.exists():
        raise MissingData(f"chart data {spec.data!r} not found in bundle {bundle_path}")
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    for column, wanted in spec.filter.items():
        rows = [r for r in rows if r.get(column) == wanted]
    if not rows:
        raise MissingData(f"chart data {spec.data!r} has no rows after filtering {spec.filter}")
    return rows


def _svg_open(width: int, height: int, title: str) -> list[str]:
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="18" text-anchor="middle" '
        f'font-family="sans-serif" font-size="13" font-weight="bold">{_esc(title)}</text>',
    ]


def _esc(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def _grouped_bar(spec: ChartSpec, rows: list[dict]) -> str:
    series = spec.series or tuple(
        k for k in rows[0] if k not in ("dataset", "classifier", "subset", "width")
    )
    label_col = next(
        k for k in rows[0] if k not in series and k not in spec.filter and k != "width"
    )
    labels = [r[label_col] for r in rows]
    scale = max(1.0, max(float(r[name]) for r in rows for name in series))
    width, height = 720, 380
    left, right, top, bottom = 50, 15, 35, 85
    plot_w, plot_h = width - left - right, height - top - bottom
    parts = _svg_open(width, height, spec.title)

    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        y = top + plot_h * (1 - frac)
        parts.append(
            f'<line x1="{left}" y1="{y:.1f}" x2="{left + plot_w}" y2="{y:.1f}" '
            f'stroke="#ddd" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{left - 6}" y="{y + 4:.1f}" text-anchor="end" '
            f'font-family="sans-serif" font-size="10">{frac * scale:.2f}</text>'
        )

    group_w = plot_w / len(rows)
    bar_w = group_w * 0.8 / len(series)
    for g, row in enumerate(rows):
        for s, name in enumerate(series):
            value = float(row[name])
            x = left + g * group_w + group_w * 0.1 + s * bar_w
            h = plot_h * max(0.0, min(1.0, value / scale))
            y = top + plot_h - h
            parts.append(
                f'<rect x="{x:.2f}" y="{y:.2f}" width="{bar_w:.2f}" height="{h:.2f}" '
                f'fill="{PALETTE[s % len(PALETTE)]}"><title>{_esc(name)}={value!r}</title></rect>'
            )
        cx = left + g * group_w + group_w / 2
        parts.append(
            f'<text x="{cx:.1f}" y="{top + plot_h + 12}" text-anchor="end" '
            f'font-family="sans-serif" font-size="9" '
            f'transform="rotate(-30 {cx:.1f} {top + plot_h + 12})">{_esc(labels[g])}</text>'
        )
    for s, name in enumerate(series):
        x = left + s * 150
        y = height - 12
        parts.append(
            f'<rect x="{x}" y="{y - 9}" width="10" height="10" fill="{PALETTE[s % len(PALETTE)]}"/>'
        )
        parts.append(
            f'<text x="{x + 14}" y="{y}" font-family="sans-serif" font-size="10">{_esc(name)}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts)


def _boolean_matrix(spec: ChartSpec, rows: list[dict]) -> str:
    header = [k for k in rows[0] if k != "subset"]
    n = len(rows)
    cell = 46
    left, top = 150, 150
    width, height = left + cell * n + 20, top + cell * n + 20
    parts = _svg_open(width, height, spec.title)
    for i, row in enumerate(rows):
        for j, col in enumerate(header):
            value = row[col] in ("1", "true", "True")
            fill = "#30303a" if value else "#ececec"
            x, y = left + j * cell, top + i * cell
            parts.append(
                f'<rect x="{x}" y="{y}" width="{cell - 2}" height="{cell - 2}" fill="{fill}"/>'
            )
            if value:
                parts.append(
                    f'<text x="{x + cell / 2 - 1:.1f}" y="{y + cell / 2 + 4:.1f}" text-anchor="middle" '
                    f'font-family="sans-serif" font-size="11" fill="white">1</text>'
                )
        parts.append(
            f'<text x="{left - 6}" y="{top + i * cell + cell / 2 + 3:.1f}" text-anchor="end" '
            f'font-family="sans-serif" font-size="9">{_esc(row["subset"])}</text>'
        )
    for j, col in enumerate(header):
        x = left + j * cell + cell / 2
        parts.append(
            f'<text x="{x:.1f}" y="{top - 8}" text-anchor="start" font-family="sans-serif" '
            f'font-size="9" transform="rotate(-45 {x:.1f} {top - 8})">{_esc(col)}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts)


def _importance_bar(spec: ChartSpec, rows: list[dict]) -> str:
    scored = sorted(rows, key=lambda r: -float(r["importance"]))[: spec.top_k]
    width, height = 640, 60 + 26 * len(scored)
    left = 240
    plot_w = width - left - 30
    top_score = max(float(r["importance"]) for r in scored) or 1.0
    parts = _svg_open(width, height, spec.title)
    for i, row in enumerate(scored):
        value = float(row["importance"])
        y = 40 + i * 26
        w = plot_w * value / top_score
        parts.append(
            f'<rect x="{left}" y="{y}" width="{w:.2f}" height="18" fill="{PALETTE[0]}"/>'
        )
        parts.append(
            f'<text x="{left - 6}" y="{y + 13}" text-anchor="end" font-family="sans-serif" '
            f'font-size="10">{_esc(row["feature"])}</text>'
        )
        parts.append(
            f'<text x="{left + w + 4:.2f}" y="{y + 13}" font-family="sans-serif" '
            f'font-size="9">{value:.4f}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts)


def _poly_chart(spec: ChartSpec, rows: list[dict], kind: str) -> str:
    width, height = 460, 460
    left, top, size = 50, 35, 380
    parts = _svg_open(width, height, spec.title)
    parts.append(
        f'<rect x="{left}" y="{top}" width="{size}" height="{size}" fill="none" stroke="#999"/>'
    )
    if kind == "roc":
        parts.append(
            f'<line x1="{left}" y1="{top + size}" x2="{left + size}" y2="{top}" '
            f'stroke="#bbb" stroke-dasharray="4 3"/>'
        )
        points = [(float(r["fpr"]), float(r["tpr"])) for r in rows]
        path = " ".join(
            f"{left + x * size:.2f},{top + (1 - y) * size:.2f}" for x, y in points
        )
        parts.append(
            f'<polyline points="{path}" fill="none" stroke="{PALETTE[0]}" stroke-width="2"/>'
        )
    else:  # scatter2d: columns x, y, class_index
        xs = [float(r["x"]) for r in rows]
        ys = [float(r["y"]) for r in rows]
        x_lo, x_hi = min(xs), max(xs)
        y_lo, y_hi = min(ys), max(ys)
        x_span = (x_hi - x_lo) or 1.0
        y_span = (y_hi - y_lo) or 1.0
        for r in rows:
            px = left + (float(r["x"]) - x_lo) / x_span * size
            py = top + (1 - (float(r["y"]) - y_lo) / y_span) * size
            color = PALETTE[int(float(r.get("class_index", 0))) % len(PALETTE)]
            parts.append(f'<circle cx="{px:.2f}" cy="{py:.2f}" r="3" fill="{color}" fill-opacity="0.7"/>')
    parts.append("</svg>")
    return "\n".join(parts)


def render_svg(spec: ChartSpec, bundle_path: str | Path) -> str:
    """Render one chart to a self-contained SVG string."""
    rows = _load_rows(bundle_path, spec)
    if spec.kind == "grouped_bar":
        return _grouped_bar(spec, rows)
    if spec.kind == "boolean_matrix":
        return _boolean_matrix(spec, rows)
    if spec.kind == "importance_bar":
        return _importance_bar(spec, rows)
    return _poly_chart(spec, rows, spec.kind)


def render_bundle_figures(bundle_path: str | Path) -> list[Path]:
    """Render the default figure set for a bundle into <bundle>/figures."""
    bundle = Path(bundle_path)
    figures = bundle / "figures"
    figures.mkdir(exist_ok=True)
    written: list[Path] = []

    means = bundle / "means.csv"
    if not means.exists():
        raise MissingData(f"{means} not found; is this a bundle directory?")
    with open(means, newline="", encoding="utf-8") as fh:
        mean_rows = list(csv.DictReader(fh))
    pairs = sorted({(r["dataset"], r["classifier"]) for r in mean_rows})
    for dataset, classifier in pairs:
        spec = ChartSpec(
            kind="grouped_bar",
            title=f"{dataset} / {classifier}: mean metrics per feature subset",
            data="means.csv",
            series=("accuracy", "balanced_accuracy", "weighted_f1", "roc_auc"),
            filter={"dataset": dataset, "classifier": classifier},
        )
        out = figures / f"means_{_safe(dataset)}_{_safe(classifier)}.svg"
        out.write_text(render_svg(spec, bundle), encoding="utf-8")
        written.append(out)

    for matrix_csv in sorted((bundle / "significance").glob("*.csv")):
        spec = ChartSpec(
            kind="boolean_matrix",
            title=f"significant pairwise differences: {matrix_csv.stem}",
            data=f"significance/{matrix_csv.name}",
        )
        out = figures / f"significance_{matrix_csv.stem}.svg"
        out.write_text(render_svg(spec, bundle), encoding="utf-8")
        written.append(out)

    for importance_csv in sorted((bundle / "importance").glob("*.csv")):
        spec = ChartSpec(
            kind="importance_bar",
            title=f"top features: {importance_csv.stem}",
            data=f"importance/{importance_csv.name}",
        )
        out = figures / f"importance_{importance_csv.stem}.svg"
        out.write_text(render_svg(spec, bundle), encoding="utf-8")
        written.append(out)

    wins = bundle / "wins.csv"
    if wins.exists():
        with open(wins, newline="", encoding="utf-8") as fh:
            win_rows = list(csv.DictReader(fh))
        for classifier in sorted({r["classifier"] for r in win_rows}):
            spec = ChartSpec(
                kind="grouped_bar",
                title=f"total wins per feature subset ({classifier}; one win per dataset+metric)",
                data="wins.csv",
                series=("wins",),
                filter={"classifier": classifier},
            )
            out = figures / f"wins_{_safe(classifier)}.svg"
            out.write_text(render_svg(spec, bundle), encoding="utf-8")
            written.append(out)
    return written


def _safe(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]+", "_", text).strip("_")
