"""Figure: homogenization error ratios against scale (semilog)."""

from __future__ import annotations

import sys

import matplotlib.pyplot as plt
import numpy as np

from .common import PlotSpec, floats, read_csv_columns, run_main, standard_parser

REQUIRED = ("level", "error_ratio", "profile_E1", "profile_Es")


def render(spec: PlotSpec):
    cols = read_csv_columns(spec.inputs[0], REQUIRED)
    scales = 3.0 ** np.asarray(floats(cols["level"]))
    fig, ax = plt.subplots(figsize=(5.2, 3.8))
    ax.plot(scales, floats(cols["error_ratio"]), "o-", label="harmonic approximation error")
    ax.plot(scales, floats(cols["profile_E1"]), "s--", label=r"$\mathcal{E}_1$")
    ax.plot(scales, floats(cols["profile_Es"]), "d:", label=r"$\mathcal{E}_s$")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("scale $3^n$")
    ax.set_ylabel("error")
    ax.legend()
    fig.tight_layout()
    fig.savefig(spec.output, dpi=150)
    plt.close(fig)


def main(argv=None):
    args = standard_parser(__doc__).parse_args(argv)
    spec = PlotSpec(inputs=args.inputs, kind="homog-error", output=args.output)
    return run_main(render, spec)


if __name__ == "__main__":
    sys.exit(main())
