"""The experiment harness: sweeps, tables, series, and the argv entry point."""

import csv
import json

import numpy as np
import pytest

from svtkit import cli, data
from svtkit.cli import ExperimentConfig, SWEEP_COLUMNS


def small_sweep(**overrides) -> ExperimentConfig:
    base = dict(dataset="zipf", variants=("exp-opt", "lap"), eps_values=(0.5,),
                c=10, repetitions=2, seed=7, n_items=300)
    base.update(overrides)
    return ExperimentConfig(**base)


def strip_timing(rows):
    return [{k: v for k, v in r.items() if k != "wall_time_ms"} for r in rows]


# --- config validation -------------------------------------------------

@pytest.mark.parametrize("bad", [
    dict(variants=()),
    dict(variants=("lap", "bogus")),
    dict(eps_values=()),
    dict(eps_values=(0.5, -1.0)),
    dict(repetitions=0),
    dict(seed=-1),
    dict(traverses=(1, 0)),
])
def test_config_rejects(bad):
    with pytest.raises(ValueError):
        small_sweep(**bad)


def test_cell_rng_deterministic_and_distinct():
    a = cli.cell_rng(7, 0.5, "lap", 1, 0).random(4)
    b = cli.cell_rng(7, 0.5, "lap", 1, 0).random(4)
    assert np.array_equal(a, b)
    for other in [cli.cell_rng(8, 0.5, "lap", 1, 0),
                  cli.cell_rng(7, 0.25, "lap", 1, 0),
                  cli.cell_rng(7, 0.5, "gau", 1, 0),
                  cli.cell_rng(7, 0.5, "lap", 2, 0),
                  cli.cell_rng(7, 0.5, "lap", 1, 1)]:
        assert not np.array_equal(a, other.random(4))


# --- sweeps ------------------------------------------------------------

def test_sweep_rows_and_default_k_est():
    cfg = small_sweep(c=30, variants=("lap",), repetitions=1, n_items=200)
    rows = cli.run_sweep(cfg)
    assert len(rows) == 1
    row = rows[0]
    assert set(row) == set(SWEEP_COLUMNS)
    assert row["k_est"] == 200 // 30
    assert row["dataset"] == "zipf"
    assert 0.0 <= row["ncr"] <= 1.0
    assert 0.0 <= row["f1"] <= 1.0
    assert row["eps1"] + row["eps2"] == pytest.approx(0.5)


def test_sweep_deterministic_for_fixed_seed():
    cfg = small_sweep()
    first = strip_timing(cli.run_sweep(cfg))
    second = strip_timing(cli.run_sweep(cfg))
    assert first == second


def test_sweep_repetitions_differ():
    rows = cli.run_sweep(small_sweep(variants=("lap",), repetitions=4))
    ncrs = {r["ncr"] for r in rows}
    assert len(ncrs) > 1


def test_sweep_csv_file_output(tmp_path):
    out = tmp_path / "rows.csv"
    cfg = small_sweep(output=str(out))
    rows = cli.run_sweep(cfg)
    with open(out, newline="") as fh:
        parsed = list(csv.reader(fh))
    assert parsed[0] == list(SWEEP_COLUMNS)
    assert len(parsed) == 1 + len(rows) == 1 + 2 * 2


def test_upper_bound_beats_interactive_variants():
    """The non-interactive ranking gets the whole query budget per item, so
    its recall should dominate any sequential variant at equal epsilon."""
    cfg = small_sweep(dataset="zipf", n_items=1000, c=20,
                      variants=("upper", "exp-opt", "lap"), repetitions=3)
    rows = cli.run_sweep(cfg)

    def mean_ncr(token):
        vals = [r["ncr"] for r in rows if r["variant"] == token]
        return sum(vals) / len(vals)

    assert mean_ncr("upper") >= mean_ncr("exp-opt")
    assert mean_ncr("upper") >= mean_ncr("lap")


def test_upper_bound_row_shape():
    rows = cli.run_sweep(small_sweep(variants=("upper",), repetitions=1))
    row = rows[0]
    assert row["halt_reason"] == ""
    assert row["r_op"] == ""
    assert row["n_c"] == 10
    assert row["n_a"] == 300


# --- correction table --------------------------------------------------

def test_correction_table_columns_and_mean_rule():
    rows = cli.emit_correction_table((1.0,), c=50, alpha=0.0, k_est=200,
                                     m=4001)
    row = rows[0]
    assert row["mean_correction"] == pytest.approx(100.0 / row["eps2"],
                                                   rel=1e-12)
    assert row["optimal_correction"] > row["mean_correction"]
    assert 0.0 < row["success_probability"] < 1.0


def test_correction_table_scales_with_epsilon():
    """Doubling epsilon doubles both split parts, so every corrective scale
    in the table halves; the optimal term tracks that exactly because the
    search grid is built from those scales."""
    rows = cli.emit_correction_table((1.0, 2.0), c=50, alpha=0.0, k_est=200,
                                     m=4001)
    lo, hi = rows
    assert hi["mean_correction"] == pytest.approx(lo["mean_correction"] / 2,
                                                  rel=1e-12)
    assert hi["optimal_correction"] == pytest.approx(
        lo["optimal_correction"] / 2, rel=1e-9)


# --- plot series -------------------------------------------------------

def test_series_variance_orders_families():
    rows = cli.emit_plot_series("variance", c=50, points=9)
    assert len(rows) == 9 * 4
    by_eps: dict = {}
    for r in rows:
        by_eps.setdefault(r["eps"], {})[r["variant"]] = r["variance"]
    for variances in by_eps.values():
        assert variances["exp"] <= min(variances.values()) * (1 + 1e-12)


def test_series_correction_sweep_interior_peak():
    rows = cli.emit_plot_series("correction-sweep", points=61)
    assert len(rows) == 61
    ps = [r["p"] for r in rows]
    assert all(0.0 <= p <= 1.0 for p in ps)
    peak = max(range(61), key=ps.__getitem__)
    assert 0 < peak < 60


def test_series_accuracy_shape():
    rows = cli.emit_plot_series("accuracy", k=20, trials=40,
                                alphas=(10.0,), variants=("lap", "exp-opt"))
    assert len(rows) == 2
    for r in rows:
        assert 0.0 <= r["beta_hat"] <= 1.0
        assert r["trials"] == 40


def test_series_traverses_shape():
    rows = cli.emit_plot_series("traverses", dataset="zipf", n_items=300,
                                c=10, variants=("exp-opt",),
                                traverses=(1, 2), repetitions=2)
    assert [r["traverses"] for r in rows] == [1, 2]
    for r in rows:
        assert 0.0 <= r["mean_ncr"] <= 1.0
        assert r["stderr_ncr"] >= 0.0


def test_unknown_series_kind_rejected():
    with pytest.raises(ValueError, match="unknown plot kind"):
        cli.emit_plot_series("histogram")


# --- argv entry point --------------------------------------------------

def test_main_gen_roundtrip(tmp_path):
    out = tmp_path / "zipf.scores"
    assert cli.main(["gen", "--dataset", "zipf", "--n-items", "100",
                     "--out", str(out)]) == 0
    ds = data.read_scores(out)
    assert ds.n_items == 100
    assert ds.threshold == 200.0


def test_main_gen_binary_positive_count(tmp_path):
    out = tmp_path / "binary.scores"
    assert cli.main(["gen", "--dataset", "binary", "--n-items", "80",
                     "--n-positive", "5", "--out", str(out)]) == 0
    ds = data.read_scores(out)
    assert sum(1 for _, s in ds.items if s > ds.threshold) == 5


def test_main_ingest(tmp_path):
    raw = tmp_path / "basket.dat"
    raw.write_text("1 2\n2 3\n2\n")
    out = tmp_path / "basket.scores"
    assert cli.main(["ingest", "--path", str(raw), "--threshold", "2",
                     "--out", str(out)]) == 0
    assert dict(data.read_scores(out).items) == {1: 1.0, 2: 3.0, 3: 1.0}


def test_main_sweep_stdout(capsys):
    rc = cli.main(["sweep", "--dataset", "zipf", "--n-items", "150",
                   "--variants", "lap", "--eps", "0.5", "--c", "5"])
    assert rc == 0
    header = capsys.readouterr().out.splitlines()[0]
    assert header == ",".join(SWEEP_COLUMNS)


def test_main_sweep_config_file_with_flag_override(tmp_path):
    cfg_path = tmp_path / "sweep.json"
    cfg_path.write_text(json.dumps({
        "dataset": "zipf", "variants": ["lap"], "eps_values": [0.5],
        "c": 5, "n_items": 200, "repetitions": 1, "seed": 3}))
    out = tmp_path / "rows.csv"
    rc = cli.main(["sweep", "--config", str(cfg_path), "--reps", "2",
                   "--out", str(out)])
    assert rc == 0
    with open(out, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 2  # the flag overrode the config file
    assert {r["repetition"] for r in rows} == {"0", "1"}


def test_main_correction_table_csv(tmp_path):
    out = tmp_path / "table.csv"
    rc = cli.main(["correction-table", "--eps", "0.5,1", "--c", "10",
                   "--k-est", "50", "--out", str(out)])
    assert rc == 0
    with open(out, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 2
    assert float(rows[0]["optimal_correction"]) > 0.0


def test_main_plot_series_params(tmp_path):
    out = tmp_path / "series.csv"
    rc = cli.main(["plot-series", "--kind", "variance",
                   "--params", json.dumps({"points": 5}), "--out", str(out)])
    assert rc == 0
    with open(out, newline="") as fh:
        assert len(list(csv.DictReader(fh))) == 5 * 4


def test_main_reports_errors(capsys):
    assert cli.main(["sweep", "--eps", "0.5"]) == 1
    assert "error:" in capsys.readouterr().err
    assert cli.main(["sweep", "--dataset", "zipf", "--eps", "0.5",
                     "--variants", "warp"]) == 1
    assert "warp" in capsys.readouterr().err


def test_token_parsers():
    assert cli._floats("0.1, 0.5,") == (0.1, 0.5)
    assert cli._ints("1,2, 10") == (1, 2, 10)
    assert cli._tokens(" lap , gau ") == ("lap", "gau")
