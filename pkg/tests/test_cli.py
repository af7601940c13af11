import numpy as np
import pytest

from nesc import config
from nesc.cli import EXIT_CONFIG, EXIT_DIVERGED, EXIT_INVARIANT, EXIT_OK, main
from nesc.sim import read_csv


def write(tmp_path, text, name="run.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_validate_clean(capsys):
    assert main(["validate"]) == EXIT_OK
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "check\tstatus\tvalue\tdetail"
    assert all("\tPASS\t" in line for line in out[1:])


@pytest.mark.parametrize("fault,check", [("flip-dither-sign", "dither_average"), ("non-monotone", "monotone_injected")])
def test_validate_negative_controls(fault, check, capsys):
    assert main(["validate", "--inject", fault]) == EXIT_INVARIANT
    failed = [l for l in capsys.readouterr().out.splitlines() if "\tFAIL\t" in l]
    assert failed and all(l.startswith(check) for l in failed)


def test_unknown_flag_is_an_error():
    with pytest.raises(SystemExit) as exc:
        main(["bilinear", "--frobnicate"])
    assert exc.value.code == EXIT_CONFIG


def test_bad_config_key(tmp_path, capsys):
    assert main(["run", "--config", write(tmp_path, "solver.stepp = 0.1\n")]) == EXIT_CONFIG
    assert "solver.stepp" in capsys.readouterr().err


def test_bad_dimension(tmp_path):
    assert main(["run", "--config", write(tmp_path, "init.u = 1, 2, 3\n"), "--out", str(tmp_path)]) == EXIT_CONFIG


def test_divergence_exit(tmp_path):
    cfg = write(tmp_path, "controller.name = baseline-unfiltered\nsolver.horizon = 50\n")
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_DIVERGED


def test_run_gr_flow(tmp_path):
    cfg = write(tmp_path, "controller.name = gr-flow\nsolver.horizon = 500\ninit.u = 5, 5\ninit.z = 0, 0\n")
    out = tmp_path / "o"
    assert main(["run", "--config", cfg, "--out", str(out)]) == EXIT_OK
    traj = read_csv(out / "bilinear_gr-flow.csv")
    assert np.abs(traj.states[-1, 2:4] - [2.0, -3.0]).max() <= 1e-3


def test_manifest_is_a_config(tmp_path):
    out = tmp_path / "o"
    cfg = write(tmp_path, "solver.horizon = 5\nsolver.record_every = 50\n")
    assert main(["bilinear", "--config", cfg, "--out", str(out), "--seed", "3"]) == EXIT_OK
    manifest = config.parse((out / "manifest.txt").read_text())
    assert manifest["solver.seed"] == 3 and len(manifest["esc.kappa"]) == 2
    assert manifest["esc.gamma"] == 0.1 and manifest["game.u2_star"] == -3.0
    assert sorted(p.name for p in out.glob("*.csv")) == [
        "bilinear_baseline-filtered.csv", "bilinear_baseline-unfiltered.csv", "bilinear_nesc.csv"]


def test_reproducible_bytes(tmp_path):
    cfg = write(tmp_path, "solver.horizon = 20\n")
    for d in ("a", "b"):
        assert main(["fixed-demand", "--config", cfg, "--out", str(tmp_path / d), "--sigma", "50"]) == EXIT_OK
    for name in ("fixed_demand.csv", "manifest.txt"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_seed_changes_noise(tmp_path):
    cfg = write(tmp_path, "solver.horizon = 5\n")
    for d, seed in (("a", "1"), ("b", "2")):
        main(["fixed-demand", "--config", cfg, "--out", str(tmp_path / d), "--sigma", "50", "--seed", seed])
    assert (tmp_path / "a" / "fixed_demand.csv").read_bytes() != (tmp_path / "b" / "fixed_demand.csv").read_bytes()


def test_fixed_demand_starts_at_zero_price(tmp_path):
    assert main(["fixed-demand", "--config", write(tmp_path, "solver.horizon = 1\n"), "--out", str(tmp_path)]) == 0
    traj = read_csv(tmp_path / "fixed_demand.csv")
    header = (tmp_path / "fixed_demand.csv").read_text().splitlines()[0].split(",")
    assert traj.states[0, header.index("price") - 1] == 0.0
    assert {"price", "mismatch", "ne_residual", "lyapunov"} <= set(header)


def test_fixed_demand_single_sigma(tmp_path):
    assert main(["fixed-demand", "--sigma", "1", "--sigma", "2", "--out", str(tmp_path)]) == EXIT_CONFIG


def test_noise_study_small(tmp_path, capsys):
    cfg = write(tmp_path, "solver.horizon = 270\n")
    out = tmp_path / "o"
    assert main(["noise-study", "--config", cfg, "--out", str(out), "--runs", "3", "--sigma", "0",
                 "--sigma", "100"]) == EXIT_OK
    lines = (out / "price_histogram_sigma_100.csv").read_text().splitlines()
    assert lines[0] == "bin_left,bin_right,count"
    assert sum(int(l.rsplit(",", 1)[1]) for l in lines[1:]) == 3 * 251
    assert "runs_per_sigma: 3" in (out / "manifest.txt").read_text()


def test_noise_study_tail_must_fit(tmp_path):
    cfg = write(tmp_path, "solver.horizon = 255\n")
    assert main(["noise-study", "--config", cfg, "--out", str(tmp_path), "--runs", "2"]) == EXIT_CONFIG


def test_counterexample(tmp_path, capsys):
    assert main(["counterexample", "--out", str(tmp_path)]) == EXIT_OK
    text = (tmp_path / "counterexample.txt").read_text()
    assert "dV/dt projected = 0.2" in text and "proj_Omega(z - F(u)) = (-0.6, 1.2)" in text


def test_module_entry_point():
    import subprocess
    import sys

    res = subprocess.run([sys.executable, "-m", "nesc", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "noise-study" in res.stdout
