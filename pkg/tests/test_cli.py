import json

import pytest

from speclab.cli import PRESETS, main
from speclab.experiments import SweepConfig


def generate(tmp_path, *extra, prefix="s"):
    argv = ["generate", "--r", "4", "--gap", "0.1", "--n", "64", "--seed", "7", "--out-dir", str(tmp_path), "--prefix", prefix]
    return main(argv + list(extra))


def test_generate_bit_identical(tmp_path):
    assert generate(tmp_path / "a", "--sigma", "0.1", "--p", "0") == 0
    assert generate(tmp_path / "b", "--sigma", "0.1", "--p", "0") == 0
    for name in ("measure", "clean", "noisy"):
        a = (tmp_path / "a" / f"s_{name}.json").read_bytes()
        assert a == (tmp_path / "b" / f"s_{name}.json").read_bytes()


def test_generate_infeasible(tmp_path, capsys):
    code = main(["generate", "--r", "63", "--gap", "0.1", "--n", "64", "--out-dir", str(tmp_path)])
    assert code == 2
    assert "2*pi" in capsys.readouterr().err
    assert not list(tmp_path.iterdir())


def test_generate_zero_sigma(tmp_path):
    generate(tmp_path, "--sigma", "0")
    clean = json.loads((tmp_path / "s_clean.json").read_text())
    noisy = json.loads((tmp_path / "s_noisy.json").read_text())
    assert noisy["samples"] == clean["samples"]


def test_estimate_noiseless_with_truth(tmp_path):
    generate(tmp_path, "--sigma", "0")
    out = tmp_path / "est.json"
    code = main(["estimate", str(tmp_path / "s_clean.json"), "--rank", "4", "--truth", str(tmp_path / "s_measure.json"), "--out", str(out)])
    assert code == 0
    metrics = json.loads((tmp_path / "est_metrics.json").read_text())
    assert metrics["loc_err_max"] <= 1e-8 and metrics["wt_err_max"] <= 1e-8
    assert json.loads(out.read_text())["estimator"] == "esprit"


def test_estimate_rank_too_large(tmp_path, capsys):
    generate(tmp_path, "--sigma", "0")
    code = main(["estimate", str(tmp_path / "s_clean.json"), "--rank", "70", "--out", str(tmp_path / "e.json")])
    assert code == 3
    assert "SizeError" in capsys.readouterr().err


def test_estimate_refine_lowers_objective(tmp_path):
    generate(tmp_path, "--sigma", "0.3", "--p", "0.25")
    noisy = str(tmp_path / "s_noisy.json")
    main(["estimate", noisy, "--rank", "4", "--out", str(tmp_path / "plain.json")])
    main(["estimate", noisy, "--rank", "4", "--refine", "--out", str(tmp_path / "ref.json")])
    plain = json.loads((tmp_path / "plain.json").read_text())["objective"]
    ref = json.loads((tmp_path / "ref.json").read_text())["objective"]
    assert ref <= plain


def test_estimate_missing_input(tmp_path):
    assert main(["estimate", str(tmp_path / "nope.json"), "--rank", "2"]) == 2


SWEEP = ["sweep", "--r", "3", "--gap", "0.3", "--sigma", "0.05", "--n-grid", "16,32,64", "--trials", "3", "--seed", "2"]


def test_sweep_byte_identical(tmp_path, capsys):
    assert main(SWEEP + ["--out-dir", str(tmp_path / "a")]) == 0
    assert main(SWEEP + ["--out-dir", str(tmp_path / "b"), "--workers", "2"]) == 0
    for name in ("sweep_report.json", "sweep_trials.csv", "sweep_esprit_refine_location.dat"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    out = capsys.readouterr().out
    assert "expected slopes: location -1.500  weight -0.500" in out


def test_sweep_level_failure_exit(tmp_path):
    code = main(["sweep", "--r", "3", "--gap", "0.3", "--n-grid", "2,16", "--trials", "2", "--estimator", "esprit", "--out-dir", str(tmp_path)])
    assert code == 4
    assert (tmp_path / "sweep_report.json").exists()


def test_sweep_config_precedence(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"sigma": 0.2, "trials": 2, "n_grid": [16, 32]}))
    main(["sweep", "--preset", "example2", "--config", str(cfg), "--trials", "1", "--estimator", "esprit", "--out-dir", str(tmp_path)])
    rep = json.loads((tmp_path / "sweep_report.json").read_text())["config"]
    assert (rep["p"], rep["sigma"], rep["trials"], rep["n_grid"]) == (0.25, 0.2, 1, [16, 32])


def test_sweep_max_n_and_bad_config(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"bogus": 1}))
    assert main(["sweep", "--config", str(cfg), "--out-dir", str(tmp_path)]) == 2
    assert main(["sweep", "--n-grid", "32,16", "--out-dir", str(tmp_path)]) == 2
    main(["sweep", "--preset", "example1", "--max-n", "32", "--trials", "1", "--estimator", "esprit", "--out-dir", str(tmp_path)])
    assert json.loads((tmp_path / "sweep_report.json").read_text())["config"]["n_grid"] == [16, 32]


def test_slopes_subcommand(tmp_path, capsys):
    assert main(["slopes", "--p", "0.75"]) == 0
    assert "location -0.750  weight +0.250" in capsys.readouterr().out
    main(SWEEP + ["--out-dir", str(tmp_path)])
    capsys.readouterr()
    assert main(["slopes", "--p", "0", "--csv", str(tmp_path / "sweep_trials.csv"), "--estimator", "esprit"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 2 and lines[1].strip().startswith("esprit:")


@pytest.mark.parametrize("name,p", [("example1", 0.0), ("example2", 0.25), ("example3", 0.75)])
def test_presets(name, p):
    assert PRESETS[name] == {"r": 4, "min_gap": 0.1, "sigma": 0.1, "p": p}
    SweepConfig.from_dict(PRESETS[name])


def test_log_file_is_sidecar(tmp_path):
    log = tmp_path / "run.log"
    main(["--log-file", str(log), "slopes", "--p", "0"])
    assert "command slopes" in log.read_text()
