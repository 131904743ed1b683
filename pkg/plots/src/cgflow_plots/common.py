"""Shared CSV ingestion and the figure-spec type."""

from __future__ import annotations

import argparse
import csv
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")


class PlotError(Exception):
    pass


class MissingColumn(PlotError):
    def __init__(self, path, column):
        super().__init__(f"{path}: required column {column!r} is not present")
        self.column = column


class EmptyInput(PlotError):
    def __init__(self, path):
        super().__init__(f"{path}: no data rows")


@dataclass(frozen=True)
class PlotSpec:
    """What to render: inputs, figure kind, output path, axis options."""

    inputs: tuple
    kind: str
    output: str
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "inputs", tuple(str(p) for p in self.inputs))


def read_csv_columns(path, required):
    """Load a CSV as {column: list[str]}, failing on missing columns or an
    empty body."""
    path = Path(path)
    if not path.exists():
        raise PlotError(f"{path}: input does not exist")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in required:
            if col not in header:
                raise MissingColumn(path, col)
        rows = list(reader)
    if not rows:
        raise EmptyInput(path)
    return {col: [row[col] for row in rows] for col in header}


def floats(values):
    return [float(v) for v in values]


def standard_parser(description, n_inputs=1):
    p = argparse.ArgumentParser(description=description)
    p.add_argument("inputs", nargs=n_inputs, help="input CSV (schema per cgflow)")
    p.add_argument("-o", "--output", required=True, help="output image (png/svg)")
    return p


def run_main(render_fn, spec: PlotSpec) -> int:
    try:
        render_fn(spec)
    except PlotError as e:
        import sys

        print(f"plot error: {e}", file=sys.stderr)
        return 1
    return 0
