"""Goal-effectiveness vs total-DL-power figures from sweep CSVs.

Input contract (the only coupling to the producer): a CSV with at least the
columns model, strategy, total_power_w, goal_effectiveness, feasible, where
feasible is "true"/"false" and infeasible rows carry no usable coordinates.
One curve is drawn per (csv tag, model, strategy); the computation-aware
strategy is solid, the benchmark dash-dot. Output is deterministic: fixed
style, salted SVG ids, no date metadata.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

REQUIRED_COLUMNS = ("model", "strategy", "total_power_w",
                    "goal_effectiveness", "feasible")

STRATEGY_STYLE = {"aware": "-", "unaware": "-."}
FALLBACK_STYLE = ":"


class SchemaError(ValueError):
    """The input CSV does not conform to the sweep schema."""


@dataclass(frozen=True)
class TradeoffRow:
    model: str
    strategy: str
    total_power_w: float
    goal_effectiveness: float
    feasible: bool


@dataclass(frozen=True)
class PlotSpec:
    csv_paths: tuple[Path, ...]
    out_path: Path
    tags: tuple[str, ...] = ()              # optional label suffix per CSV
    gflops: dict[str, float] = field(default_factory=dict)
    pareto_only: bool = False
    title: str = ""
    xlim: tuple[float, float] | None = None
    ylim: tuple[float, float] | None = None
    dpi: int = 150

    def __post_init__(self):
        if not self.csv_paths:
            raise SchemaError("no input CSV given")
        if len(self.tags) > len(self.csv_paths):
            raise SchemaError("more tags than input CSVs")


def load_tradeoff(path: str | Path) -> list[TradeoffRow]:
    """Parse one sweep CSV, failing loudly on schema drift."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise SchemaError(f"{path}: empty file (no header row)")
        missing = [c for c in REQUIRED_COLUMNS if c not in reader.fieldnames]
        if missing:
            raise SchemaError(f"{path}: missing column(s): {', '.join(missing)}")
        try:
            rows = [TradeoffRow(
                model=r["model"],
                strategy=r["strategy"],
                total_power_w=float(r["total_power_w"]),
                goal_effectiveness=float(r["goal_effectiveness"]),
                feasible=r["feasible"].strip().lower() == "true",
            ) for r in reader]
        except (TypeError, ValueError, KeyError) as e:
            raise SchemaError(f"{path}: malformed row: {e}") from e
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    return rows


def pareto_front(points: list[tuple[float, float]]) -> list[tuple[float, float]]:
    """Keep only (power, effectiveness) points on the lower-left frontier:
    per power level the best effectiveness, then strictly improving."""
    best_at: dict[float, float] = {}
    for power, eff in points:
        if power not in best_at or eff > best_at[power]:
            best_at[power] = eff
    out: list[tuple[float, float]] = []
    best = -math.inf
    for power in sorted(best_at):
        if best_at[power] > best:
            out.append((power, best_at[power]))
            best = best_at[power]
    return out


def _tag_for(spec: PlotSpec, index: int) -> str:
    if index < len(spec.tags):
        return spec.tags[index]
    if len(spec.csv_paths) > 1:
        return Path(spec.csv_paths[index]).stem
    return ""


def _label(spec: PlotSpec, tag: str, model: str, strategy: str) -> str:
    label = model
    if model in spec.gflops:
        label += f" ({spec.gflops[model]:g} GFLOPs)"
    if tag:
        label += f", {tag}"
    return f"{label} [{strategy}]"


def build_figure(spec: PlotSpec):
    """Assemble the matplotlib Figure (separated from I/O for inspection)."""
    groups: dict[tuple[str, str, str], list[tuple[float, float]]] = {}
    for i, path in enumerate(spec.csv_paths):
        tag = _tag_for(spec, i)
        for row in load_tradeoff(path):
            if not row.feasible:
                continue
            if not (math.isfinite(row.total_power_w)
                    and math.isfinite(row.goal_effectiveness)):
                continue
            groups.setdefault((tag, row.model, row.strategy), []).append(
                (row.total_power_w, row.goal_effectiveness))
    if not groups:
        raise SchemaError("no feasible rows to plot")

    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    colors = plt.rcParams["axes.prop_cycle"].by_key()["color"]
    color_keys = sorted({(tag, model) for tag, model, _ in groups})
    for (tag, model, strategy), pts in sorted(groups.items()):
        pts = sorted(set(pts))
        if spec.pareto_only:
            pts = pareto_front(pts)
        xs = [p for p, _ in pts]
        ys = [e for _, e in pts]
        ax.plot(xs, ys,
                linestyle=STRATEGY_STYLE.get(strategy, FALLBACK_STYLE),
                marker="o", markersize=3.5,
                color=colors[color_keys.index((tag, model)) % len(colors)],
                label=_label(spec, tag, model, strategy))
    ax.set_xlabel("total DL transmit power [W]")
    ax.set_ylabel("goal effectiveness")
    if spec.title:
        ax.set_title(spec.title)
    if spec.xlim is not None:
        ax.set_xlim(spec.xlim)
    if spec.ylim is not None:
        ax.set_ylim(spec.ylim)
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    return fig


def render_tradeoff(spec: PlotSpec) -> Path:
    """Render the figure to spec.out_path (format from the suffix; SVG
    default) and return the path."""
    fig = build_figure(spec)
    out = Path(spec.out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    fmt = out.suffix.lstrip(".").lower() or "svg"
    try:
        with plt.rc_context({"svg.hashsalt": "coexplot"}):
            if fmt == "svg":
                # Date None drops the timestamp so bytes are reproducible
                fig.savefig(out, format=fmt, metadata={"Date": None},
                            bbox_inches="tight")
            else:
                fig.savefig(out, format=fmt, dpi=spec.dpi, bbox_inches="tight")
    finally:
        plt.close(fig)
    return out
