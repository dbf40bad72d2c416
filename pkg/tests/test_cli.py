import csv
import json
import shutil
import subprocess
import sys

import numpy as np
import pytest

from opjac import cli


def run(*argv):
    try:
        return cli.main([str(a) for a in argv])
    except SystemExit as exc:  # argparse errors
        return exc.code


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float)


def test_solve_thinfilm_writes_outputs(tmp_path):
    out = tmp_path / "tf"
    assert run("solve", "thinfilm", "--n", 40, "--j", 0.7, "--out", out) == cli.EXIT_OK
    header, data = read_csv(out / "solution.csv")
    assert header == ["x", "E", "c", "rho"]
    assert data.shape == (40, 4)
    header, coef = read_csv(out / "coefficients.csv")
    assert header == ["n", "abs_coef"]
    np.testing.assert_array_equal(coef[:, 0], np.arange(40))
    manifest = json.loads((out / "manifest_solve.json").read_text())
    assert manifest["exit_code"] == 0
    assert manifest["convergence"][-1]["parameter"] == 0.7
    assert all(c["converged"] for c in manifest["convergence"])
    log = [json.loads(s) for s in (out / "newton.jsonl").read_text().splitlines()]
    assert log and {"parameter", "iteration", "residual_inf", "step_inf"} <= set(log[0])


def test_solve_mapped_adds_computational_columns(tmp_path):
    assert run("solve", "thinfilm-mapped", "--n", 40, "--j", 0.5, "--out", tmp_path) == 0
    header, data = read_csv(tmp_path / "solution.csv")
    assert header == ["x", "E", "c", "rho", "y", "E_computational"]
    assert data[0, 0] == 1.0 and data[-1, 0] == -1.0


def test_solve_colloid_small(tmp_path):
    args = ("solve", "colloid", "--nr", 10, "--nt", 8, "--efield", 2, "--out", tmp_path)
    assert run(*args) == 0
    header, data = read_csv(tmp_path / "solution.csv")
    assert header == ["r", "theta", "x", "z", "c", "psi"]
    assert data.shape == (80, 6)
    header, surf = read_csv(tmp_path / "surface.csv")
    assert header == ["theta", "c_s", "psi_s", "zeta", "q", "w"]
    np.testing.assert_array_equal(data[data[:, 0] == 1.0][:, 4], surf[:, 1])


def test_solve_pnp(tmp_path):
    assert run("solve", "pnp1d", "--n", 16, "--steps", 3, "--out", tmp_path) == 0
    header, data = read_csv(tmp_path / "solution.csv")
    assert header == ["x", "c_plus", "c_minus", "phi"]
    manifest = json.loads((tmp_path / "manifest_solve.json").read_text())
    assert len(manifest["convergence"]) == 3


def test_replay_is_bit_identical(tmp_path):
    out = tmp_path / "run"
    assert run("solve", "thinfilm", "--n", 30, "--j", 0.6, "--out", out) == 0
    first = (out / "solution.csv").read_bytes()
    coef = (out / "coefficients.csv").read_bytes()
    shutil.copy(out / "manifest_solve.json", tmp_path / "m.json")
    (out / "solution.csv").unlink()
    assert run("replay", tmp_path / "m.json") == 0
    assert (out / "solution.csv").read_bytes() == first
    assert (out / "coefficients.csv").read_bytes() == coef


def test_non_convergence_exit_code(tmp_path):
    code = run("solve", "thinfilm", "--n", 40, "--j", 3.0, "--cont-step", 1.0, "--out", tmp_path)
    assert code == cli.EXIT_NONCONVERGED
    manifest = json.loads((tmp_path / "manifest_solve.json").read_text())
    assert manifest["exit_code"] == 1
    assert not manifest["convergence"][-1]["converged"]


@pytest.mark.parametrize(
    "argv",
    [
        ("solve", "nosuch"),
        ("solve", "thinfilm", "--n", "2"),
        ("solve", "thinfilm", "--epsilon", "-1"),
        ("solve", "thinfilm", "--n", "abc"),
        ("bench", "thinfilm", "--sizes", "10,x"),
        ("verify", "colloid", "--inject-bug", "F9/psi"),
        ("frobnicate",),
    ],
)
def test_invalid_arguments_exit_code(tmp_path, argv):
    assert run(*argv, *(("--out", tmp_path) if len(argv) > 1 else ())) == cli.EXIT_BAD_ARGS


def test_replay_missing_manifest(tmp_path):
    assert run("replay", tmp_path / "missing.json") == cli.EXIT_BAD_ARGS


@pytest.mark.parametrize("problem", ["thinfilm", "thinfilm-mapped", "colloid", "pnp1d"])
def test_verify_passes(tmp_path, problem, capsys):
    assert run("verify", problem, "--out", tmp_path) == cli.EXIT_OK
    manifest = json.loads((tmp_path / "manifest_verify.json").read_text())
    assert manifest["passed"] and len(manifest["results"]) >= 3
    assert "verification passed" in capsys.readouterr().out


def test_injected_bug_is_caught(tmp_path, capsys):
    assert run("verify", "colloid", "--inject-bug", "--out", tmp_path) == cli.EXIT_VERIFY_FAILED
    text = capsys.readouterr().out
    assert "FAIL" in text and "injected sign flip" in text
    manifest = json.loads((tmp_path / "manifest_verify.json").read_text())
    bad = manifest["injected_block"]
    assert all(r["blocks"][bad] > 1e-6 for r in manifest["results"])


def test_injected_bug_in_named_block(tmp_path):
    assert run("verify", "pnp1d", "--inject-bug", "c-/c+", "--out", tmp_path) == 2
    manifest = json.loads((tmp_path / "manifest_verify.json").read_text())
    assert manifest["injected_block"] == "c-/c+"
    assert manifest["results"][0]["blocks"]["c+/c+"] <= 1e-6


def test_bench_writes_csv(tmp_path):
    assert run("bench", "thinfilm", "--sizes", "20,40", "--repeats", 1, "--out", tmp_path) == 0
    header, data = read_csv(tmp_path / "bench.csv")
    assert header == ["size", "t_direct", "t_fd", "ratio"]
    np.testing.assert_array_equal(data[:, 0], [20, 40])
    assert np.all(data[:, 1:] > 0)
    manifest = json.loads((tmp_path / "manifest_bench.json").read_text())
    assert set(manifest["slopes"]) == {"direct", "fd"}


def test_loglog_slope():
    assert cli.loglog_slope([10, 100], [1.0, 100.0]) == pytest.approx(2.0)
    assert np.isnan(cli.loglog_slope([10], [1.0]))


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "opjac.cli", "verify", "pnp1d", "--n", "12", "--out", str(tmp_path)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert "verification passed" in proc.stdout
