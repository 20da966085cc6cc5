#!/usr/bin/env python3
"""Render exported run CSVs into figures.

Consumes only the CSV artifacts written by the training/analysis CLI
(`kde_*.csv` with header `x,density`; `history.csv` with header
`epoch,train_loss,align_loss,dev_auc`), so it stays fully decoupled
from the library that produced them.

Usage:
    render.py kde --in kde_a.csv kde_b.csv --labels a b --out out.png
    render.py training --in history.csv --out out.png
"""
from __future__ import annotations

import argparse
import csv
import os
import sys
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


class RenderError(ValueError):
    pass


@dataclass
class PlotSpec:
    inputs: list[str]
    out_image: str
    labels: list[str] = field(default_factory=list)
    axis_mode: str = "single"  # single | dual-axis


def read_columns(path: str, required: list[str]) -> dict[str, list[float]]:
    """Parse a numeric CSV; errors name the offending column or row."""
    if not os.path.exists(path):
        raise RenderError(f"{path}: no such file")
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise RenderError(f"{path}: empty file") from None
        for col in required:
            if col not in header:
                raise RenderError(f"{path}: missing column {col!r}")
        idx = {col: header.index(col) for col in required}
        data: dict[str, list[float]] = {col: [] for col in required}
        for rowno, row in enumerate(reader, start=2):
            if not row or row == [""]:
                continue
            for col in required:
                try:
                    data[col].append(float(row[idx[col]]))
                except (ValueError, IndexError):
                    raise RenderError(
                        f"{path}: row {rowno}: non-numeric value in {col!r}") from None
    if not data[required[0]]:
        raise RenderError(f"{path}: no data")
    return data


def plot_kde(csv_paths: list[str], labels: list[str], out_image: str) -> str:
    """Overlay density curves from `x,density` CSVs into one image."""
    if not csv_paths:
        raise RenderError("no input CSVs")
    if len(labels) != len(csv_paths):
        labels = [os.path.splitext(os.path.basename(p))[0] for p in csv_paths]
    fig, ax = plt.subplots(figsize=(6.4, 4.0), dpi=120)
    for path, label in zip(csv_paths, labels):
        cols = read_columns(path, ["x", "density"])
        ax.plot(cols["x"], cols["density"], label=label, linewidth=1.6)
        ax.fill_between(cols["x"], cols["density"], alpha=0.25)
    ax.set_xlabel("normalized value")
    ax.set_ylabel("density")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(out_image)
    plt.close(fig)
    return out_image


def plot_training(history_csv: str, out_image: str) -> str:
    """Dual-axis curve: alignment loss (left) vs dev AUC (right) by epoch."""
    cols = read_columns(history_csv, ["epoch", "align_loss", "dev_auc"])
    fig, ax_loss = plt.subplots(figsize=(6.4, 4.0), dpi=120)
    ax_auc = ax_loss.twinx()
    ax_loss.plot(cols["epoch"], cols["align_loss"], color="tab:red",
                 label="alignment loss", linewidth=1.6)
    ax_auc.plot(cols["epoch"], cols["dev_auc"], color="tab:purple",
                label="dev AUC", linewidth=1.6)
    ax_loss.set_xlabel("epoch")
    ax_loss.set_ylabel("alignment loss", color="tab:red")
    ax_auc.set_ylabel("dev AUC", color="tab:purple")
    lines = ax_loss.get_lines() + ax_auc.get_lines()
    ax_loss.legend(lines, [ln.get_label() for ln in lines], frameon=False,
                   loc="center right")
    fig.tight_layout()
    fig.savefig(out_image)
    plt.close(fig)
    return out_image


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="render.py", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("kde", help="overlay density curves")
    p.add_argument("--in", dest="inputs", nargs="+", required=True)
    p.add_argument("--labels", nargs="*", default=[])
    p.add_argument("--out", required=True)
    p = sub.add_parser("training", help="alignment loss vs dev AUC")
    p.add_argument("--in", dest="inputs", nargs=1, required=True)
    p.add_argument("--out", required=True)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "kde":
            out = plot_kde(args.inputs, args.labels, args.out)
        else:
            out = plot_training(args.inputs[0], args.out)
    except RenderError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
