"""Figure: renormalized ellipticity ratio minus one against scale, log-log.

Reads the flow CSV (columns level, theta_n, theta_n_stderr, theta_hat) and,
when the sibling flow JSON carries a fitted decay rate, annotates the line
with it; the fit itself is produced by the experiment driver, never here.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import matplotlib.pyplot as plt
import numpy as np

from .common import PlotSpec, floats, read_csv_columns, run_main, standard_parser

REQUIRED = ("level", "theta_n", "theta_n_stderr", "theta_hat")


def render(spec: PlotSpec):
    cols = read_csv_columns(spec.inputs[0], REQUIRED)
    levels = floats(cols["level"])
    theta = np.asarray(floats(cols["theta_n"]))
    err = np.asarray(floats(cols["theta_n_stderr"]))
    hat = np.asarray(floats(cols["theta_hat"]))
    scales = 3.0 ** np.asarray(levels)

    fig, ax = plt.subplots(figsize=(5.2, 3.8))
    ax.errorbar(scales, np.maximum(theta - 1.0, 1e-16), yerr=3 * err, fmt="o-",
                capsize=3, label=r"$\Theta_n - 1$")
    ax.plot(scales, np.maximum(hat - 1.0, 1e-16), "s--", alpha=0.7,
            label=r"$\hat\Theta_n - 1$")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("scale $3^n$")
    ax.set_ylabel("ellipticity ratio $-\\,1$")

    fit = _sibling_fit(spec)
    if fit:
        kappa = fit["kappa_hat"]
        pref = fit["prefactor"]
        ax.plot(scales, pref * scales ** (-kappa), "k:",
                label=rf"fit $\hat\kappa = {kappa:.3f}$")
    ax.legend()
    fig.tight_layout()
    fig.savefig(spec.output, dpi=150)
    plt.close(fig)


def _sibling_fit(spec: PlotSpec):
    explicit = spec.options.get("fit_json")
    candidates = [explicit] if explicit else [
        str(Path(spec.inputs[0]).with_suffix(".json"))
    ]
    for cand in candidates:
        p = Path(cand)
        if p.exists():
            with open(p) as fh:
                payload = json.load(fh)
            fit = payload.get("theta_fit")
            if fit:
                return fit
    return None


def main(argv=None):
    args = standard_parser(__doc__).parse_args(argv)
    spec = PlotSpec(inputs=args.inputs, kind="flow-theta", output=args.output)
    return run_main(render, spec)


if __name__ == "__main__":
    sys.exit(main())
