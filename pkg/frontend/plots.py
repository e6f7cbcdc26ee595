#!/usr/bin/env python3
"""Render anisorf CSV sweep outputs in the paper's figure styles.

Two kinds:
  curve    log-log error profile; theory as a line, Monte Carlo means as
           points with error bars whenever the *_se columns are present
  heatmap  (N/D, P/D) phase space on log axes with a logarithmic color
           scale and the N=P / N=D guide lines

Usage:
    plots.py --spec spec.json
    plots.py results.csv --kind curve --y eps_g_theory --output curve.png

The input CSV is never modified; repeated runs on the same input produce
identical image bytes (no timestamps are embedded).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "anisorf"   # deterministic SVG element ids
import matplotlib.pyplot as plt
import numpy as np
from matplotlib.colors import LogNorm


class SchemaError(ValueError):
    pass


class EmptyTableError(ValueError):
    pass


@dataclass(frozen=True)
class PlotSpec:
    input_csv: str
    kind: str = "curve"                  # "curve" or "heatmap"
    x_column: str = "p_over_d"
    y_column: str = "eps_g_theory"
    log_x: bool = True
    log_y: bool = True
    output: str = "plot.png"
    guide_n_eq_p: bool = True
    guide_n_eq_d: bool = True

    @classmethod
    def from_json(cls, path) -> "PlotSpec":
        return cls(**json.loads(Path(path).read_text()))


def read_table(path) -> dict[str, np.ndarray]:
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyTableError(f"{path} has no header")
        rows = [row for row in reader if row]
    if not rows:
        raise EmptyTableError(f"{path} has a header but no rows")
    columns = {}
    for j, name in enumerate(header):
        values = []
        for row in rows:
            try:
                values.append(float(row[j]))
            except ValueError:
                values.append(np.nan)
        columns[name] = np.asarray(values)
    return columns


def require(table: dict[str, np.ndarray], *names: str) -> None:
    missing = [n for n in names if n not in table]
    if missing:
        raise SchemaError(f"missing columns {missing}; have {sorted(table)}")


def render_curve(spec: PlotSpec, table: dict[str, np.ndarray], ax) -> bool:
    require(table, spec.x_column, spec.y_column)
    x = table[spec.x_column]
    order = np.argsort(x)
    ax.plot(x[order], table[spec.y_column][order], "-", color="tab:blue",
            label=spec.y_column)
    drew_bars = False
    stem = spec.y_column.replace("_theory", "")
    mc_col, se_col = f"{stem}_mc_mean", f"{stem}_mc_se"
    if mc_col in table:
        se = table[se_col][order] if se_col in table else None
        if se is not None and np.all(np.isfinite(se)):
            ax.errorbar(x[order], table[mc_col][order], yerr=se, fmt="o",
                        color="tab:orange", capsize=3, label=f"{mc_col} ± se")
            drew_bars = True
        else:
            ax.plot(x[order], table[mc_col][order], "o", color="tab:orange",
                    label=mc_col)
    if spec.log_x:
        ax.set_xscale("log")
    if spec.log_y:
        ax.set_yscale("log")
    ax.set_xlabel(spec.x_column)
    ax.set_ylabel(spec.y_column)
    ax.legend(frameon=False)
    return drew_bars


def render_heatmap(spec: PlotSpec, table: dict[str, np.ndarray], ax) -> None:
    require(table, "n_over_d", "p_over_d", spec.y_column)
    n_axis = np.unique(table["n_over_d"])
    p_axis = np.unique(table["p_over_d"])
    grid = np.full((n_axis.size, p_axis.size), np.nan)
    converged = table.get("converged", np.ones_like(table[spec.y_column]))
    for n, p, v, ok in zip(table["n_over_d"], table["p_over_d"],
                           table[spec.y_column], converged):
        if ok:
            grid[np.searchsorted(n_axis, n), np.searchsorted(p_axis, p)] = v
    masked = np.ma.masked_invalid(grid)
    positive = masked.compressed()
    norm = LogNorm(vmin=max(positive.min(), 1e-12), vmax=positive.max()) \
        if positive.size and positive.min() > 0 else None
    mesh = ax.pcolormesh(p_axis, n_axis, masked, norm=norm, shading="nearest",
                         cmap="viridis")
    plt.colorbar(mesh, ax=ax, label=spec.y_column)
    ax.set_xscale("log")
    ax.set_yscale("log")
    lo, hi = min(p_axis.min(), n_axis.min()), max(p_axis.max(), n_axis.max())
    if spec.guide_n_eq_p:
        ax.plot([lo, hi], [lo, hi], "--", color="w", linewidth=1)
    if spec.guide_n_eq_d:
        ax.axhline(1.0, linestyle="-", color="w", linewidth=1)
    ax.set_xlabel("P/D")
    ax.set_ylabel("N/D")


def render(spec: PlotSpec) -> bool:
    """Write the image; returns whether error bars were drawn."""
    table = read_table(spec.input_csv)
    fig, ax = plt.subplots(figsize=(5.5, 4.2))
    drew_bars = False
    if spec.kind == "curve":
        drew_bars = render_curve(spec, table, ax)
    elif spec.kind == "heatmap":
        render_heatmap(spec, table, ax)
    else:
        raise SchemaError(f"unknown plot kind {spec.kind!r}")
    fig.tight_layout()
    fig.savefig(spec.output, dpi=150, metadata=_no_timestamp(spec.output))
    plt.close(fig)
    return drew_bars


def _no_timestamp(output) -> dict:
    if str(output).endswith(".svg"):
        return {"Date": None}
    return {}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="plots.py")
    parser.add_argument("csv", nargs="?", default=None)
    parser.add_argument("--spec", default=None)
    parser.add_argument("--kind", choices=["curve", "heatmap"], default="curve")
    parser.add_argument("--x", default="p_over_d")
    parser.add_argument("--y", default="eps_g_theory")
    parser.add_argument("--output", default="plot.png")
    parser.add_argument("--linear-x", action="store_true")
    parser.add_argument("--linear-y", action="store_true")
    parser.add_argument("--no-guides", action="store_true")
    args = parser.parse_args(argv)
    try:
        if args.spec:
            spec = PlotSpec.from_json(args.spec)
        elif args.csv:
            spec = PlotSpec(input_csv=args.csv, kind=args.kind, x_column=args.x,
                            y_column=args.y, log_x=not args.linear_x,
                            log_y=not args.linear_y, output=args.output,
                            guide_n_eq_p=not args.no_guides,
                            guide_n_eq_d=not args.no_guides)
        else:
            parser.error("provide a CSV path or --spec")
        render(spec)
    except SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return 2
    except (EmptyTableError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 4
    print(f"wrote {spec.output}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
