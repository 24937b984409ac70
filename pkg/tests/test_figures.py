import pathlib

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
import pytest

from secal.figures import FigureJob, render, render_all

SAMPLES = pathlib.Path(__file__).parent.parent / "sample_outputs"

INPUTS = {
    "exp1": (SAMPLES / "exp1" / "exp1_summary.csv",
             SAMPLES / "exp1" / "exp1_slopes.csv"),
    "exp2": (SAMPLES / "exp2" / "exp2_scatter.csv",),
    "exp3": (SAMPLES / "exp3" / "exp3.csv",),
    "exp4": (SAMPLES / "exp4" / "exp4.csv",),
}


@pytest.mark.parametrize("figure", sorted(INPUTS))
def test_figures_render_from_committed_samples(figure, tmp_path):
    out = tmp_path / f"{figure}.png"
    job = FigureJob(figure, tuple(str(p) for p in INPUTS[figure]), str(out))
    assert render(job) == str(out)
    assert out.exists() and out.stat().st_size > 5000  # non-trivial PNG


def _render_axes(figure):
    from secal import figures as F

    fig, ax = plt.subplots()
    job = FigureJob(figure, tuple(str(p) for p in INPUTS[figure]), "unused.png")
    getattr(F, f"_fig_{figure}")(job, ax)
    return fig, ax


def test_rate_figure_legend_contains_per_method_slopes():
    fig, ax = _render_axes("exp1")
    labels = [t.get_text() for t in ax.get_legend().get_texts()]
    plt.close(fig)
    for meth in ("poly_heldout", "poly_cv", "buckets", "nw"):
        match = [l for l in labels if l.startswith(meth)]
        assert match, f"no legend entry for {meth}"
        assert "slope" in match[0]


def test_scatter_figure_has_identity_reference():
    fig, ax = _render_axes("exp2")
    lines = ax.get_lines()
    idents = [l for l in lines if l.get_label() == "y = x"]
    plt.close(fig)
    assert idents, "no y = x reference line"
    x, y = idents[0].get_xdata(), idents[0].get_ydata()
    np.testing.assert_allclose(x, y)
    assert idents[0].get_linestyle() == "--"


def test_referral_figure_covers_all_methods():
    fig, ax = _render_axes("exp3")
    labels = [t.get_text() for t in ax.get_legend().get_texts()]
    plt.close(fig)
    assert set(labels) >= {"raw_m", "raw_mv", "first_1d", "first_2d",
                           "second_1d", "second_2d", "oracle"}


def test_missing_columns_fail_loudly(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("method,tau\nsecond_2d,0.0\n")
    with pytest.raises(ValueError, match=r"missing columns.*mean_gain"):
        render(FigureJob("exp3", (str(bad),), str(tmp_path / "x.png")))
    empty = tmp_path / "empty.csv"
    empty.write_text("method,budget,yield\n")
    with pytest.raises(ValueError, match="no data rows"):
        render(FigureJob("exp4", (str(empty),), str(tmp_path / "y.png")))


def test_render_rejects_bad_jobs(tmp_path):
    with pytest.raises(ValueError, match="unknown figure"):
        render(FigureJob("exp5", ("a.csv",), str(tmp_path / "z.png")))
    with pytest.raises(ValueError, match="input"):
        render(FigureJob("exp1", (), str(tmp_path / "z.png")))


def test_render_all_from_sample_tree(tmp_path):
    # flatten the four sample CSV directories into one, as a run dir would be
    flat = tmp_path / "csv"
    flat.mkdir()
    for paths in INPUTS.values():
        for p in paths:
            (flat / p.name).write_bytes(p.read_bytes())
    written = render_all(str(flat), str(tmp_path / "figs"))
    assert sorted(pathlib.Path(w).stem for w in written) == [
        "exp1", "exp2", "exp3", "exp4"]
    for w in written:
        assert pathlib.Path(w).exists()


def test_cli_render_subcommand(tmp_path):
    from secal import cli

    out = tmp_path / "exp3.png"
    rc = cli.main(["render", "--figure", "exp3",
                   "--in", str(INPUTS["exp3"][0]), "--out", str(out)])
    assert rc == 0 and out.exists()
