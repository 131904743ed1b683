"""Figure: measured bump-pair covariances scattered against the closed form.

Uses the `bump_cov` rows of the fgf-validate CSV: measured covariance and the
kernel target per separation, plus the identity line for reference.
"""

from __future__ import annotations

import sys

import matplotlib.pyplot as plt
import numpy as np

from .common import EmptyInput, PlotSpec, read_csv_columns, run_main, standard_parser

REQUIRED = ("kind", "x", "value", "target")


def render(spec: PlotSpec):
    cols = read_csv_columns(spec.inputs[0], REQUIRED)
    rows = [
        (float(x), float(v), float(t))
        for k, x, v, t in zip(cols["kind"], cols["x"], cols["value"], cols["target"])
        if k == "bump_cov"
    ]
    if not rows:
        raise EmptyInput(f"{spec.inputs[0]} (no bump_cov rows)")
    seps = np.array([r[0] for r in rows])
    meas = np.array([r[1] for r in rows])
    targ = np.array([r[2] for r in rows])
    fig, ax = plt.subplots(figsize=(4.6, 4.2))
    sc = ax.scatter(targ, meas, c=seps, cmap="viridis", zorder=3)
    lims = [0.0, max(targ.max(), meas.max()) * 1.1]
    ax.plot(lims, lims, "k--", lw=1, label="closed-form kernel")
    ax.set_xlim(lims)
    ax.set_ylim(lims)
    ax.set_xlabel("covariance, closed form")
    ax.set_ylabel("covariance, measured")
    fig.colorbar(sc, ax=ax, label="separation")
    ax.legend()
    fig.tight_layout()
    fig.savefig(spec.output, dpi=150)
    plt.close(fig)


def main(argv=None):
    args = standard_parser(__doc__).parse_args(argv)
    spec = PlotSpec(inputs=args.inputs, kind="fgf-cov", output=args.output)
    return run_main(render, spec)


if __name__ == "__main__":
    sys.exit(main())
