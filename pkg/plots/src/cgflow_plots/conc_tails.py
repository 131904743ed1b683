"""Figure: empirical tail frequencies against the concentration bounds."""

from __future__ import annotations

import sys

import matplotlib.pyplot as plt
import numpy as np

from .common import PlotSpec, floats, read_csv_columns, run_main, standard_parser

REQUIRED = ("t", "empirical_tail", "bound", "margin")


def render(spec: PlotSpec):
    cols = read_csv_columns(spec.inputs[0], REQUIRED)
    t = np.asarray(floats(cols["t"]))
    emp = np.asarray(floats(cols["empirical_tail"]))
    bound = np.asarray(floats(cols["bound"]))
    fig, ax = plt.subplots(figsize=(5.2, 3.8))
    ax.semilogy(t, np.maximum(emp, 1e-12), "o-", label="empirical tail")
    ax.semilogy(t, bound, "k--", label="concentration bound")
    ax.fill_between(t, np.maximum(emp, 1e-12), bound, alpha=0.15)
    ax.set_xlabel("threshold $t$")
    ax.set_ylabel("tail probability")
    ax.legend()
    fig.tight_layout()
    fig.savefig(spec.output, dpi=150)
    plt.close(fig)


def main(argv=None):
    args = standard_parser(__doc__).parse_args(argv)
    spec = PlotSpec(inputs=args.inputs, kind="conc-tails", output=args.output)
    return run_main(render, spec)


if __name__ == "__main__":
    sys.exit(main())
