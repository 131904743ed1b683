import subprocess
import sys
from pathlib import Path

import pytest

from cgflow_plots.common import EmptyInput, MissingColumn, PlotError, PlotSpec
from cgflow_plots import conc_tails, fgf_cov, flow_theta, homog_error

SAMPLES = Path(__file__).resolve().parent.parent / "samples"

KINDS = [
    (flow_theta, "flow.csv"),
    (homog_error, "homog_error.csv"),
    (conc_tails, "concentration.csv"),
    (fgf_cov, "fgf_validate.csv"),
]


@pytest.mark.parametrize("mod,sample", KINDS)
def test_render_all_figure_kinds(tmp_path, mod, sample):
    out = tmp_path / (sample.replace(".csv", "") + ".png")
    spec = PlotSpec(inputs=(SAMPLES / sample,), kind="t", output=str(out))
    mod.render(spec)
    assert out.exists()
    assert out.stat().st_size > 2000


@pytest.mark.parametrize("mod,sample", KINDS)
def test_column_dropped_named_error(tmp_path, mod, sample):
    src = (SAMPLES / sample).read_text().splitlines()
    header = src[0].split(",")
    victim = mod.REQUIRED[1]
    idx = header.index(victim)
    broken = "\n".join(
        ",".join(v for i, v in enumerate(line.split(",")) if i != idx)
        for line in src
    )
    bad = tmp_path / f"broken_{sample}"
    bad.write_text(broken + "\n")
    out = tmp_path / "out.png"
    spec = PlotSpec(inputs=(bad,), kind="t", output=str(out))
    with pytest.raises(MissingColumn) as ei:
        mod.render(spec)
    assert victim in str(ei.value)
    assert not out.exists()


@pytest.mark.parametrize("mod,sample", KINDS)
def test_empty_csv_is_error_and_no_file(tmp_path, mod, sample):
    header = (SAMPLES / sample).read_text().splitlines()[0]
    empty = tmp_path / f"empty_{sample}"
    empty.write_text(header + "\n")
    out = tmp_path / "out.png"
    spec = PlotSpec(inputs=(empty,), kind="t", output=str(out))
    with pytest.raises(PlotError):
        mod.render(spec)
    assert not out.exists()


def test_flow_fit_annotation_from_json(tmp_path):
    # the fitted slope comes from the driver's JSON, never recomputed here
    out = tmp_path / "flow.png"
    spec = PlotSpec(inputs=(SAMPLES / "flow.csv",), kind="t", output=str(out))
    fit = flow_theta._sibling_fit(spec)
    assert fit is not None and "kappa_hat" in fit
    flow_theta.render(spec)
    assert out.exists()


def test_cli_exit_codes(tmp_path):
    out = tmp_path / "x.png"
    rc = flow_theta.main([str(SAMPLES / "flow.csv"), "-o", str(out)])
    assert rc == 0 and out.exists()
    missing = tmp_path / "missing.csv"
    rc2 = flow_theta.main([str(missing), "-o", str(tmp_path / "y.png")])
    assert rc2 == 1
    assert not (tmp_path / "y.png").exists()


def test_console_scripts_run():
    out = Path("/tmp/cgflow_plot_smoke.png")
    if out.exists():
        out.unlink()
    proc = subprocess.run(
        [sys.executable, "-m", "cgflow_plots.conc_tails",
         str(SAMPLES / "concentration.csv"), "-o", str(out)],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert out.exists()
    out.unlink()
