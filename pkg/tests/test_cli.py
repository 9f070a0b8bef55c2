import json
import time

import numpy as np
import pytest

from stochrb.artifact import load_artifact, save_artifact
from stochrb.cli import EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK, EXIT_VALIDATION, main
from stochrb.validate import run_validation


def test_help_exits_cleanly(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--help"])
    assert exc.value.code == 0
    assert "offline" in capsys.readouterr().out


def test_offline_writes_artifact(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"discretization": {"n_cells": 4, "N_xi": 8, "N_train": 3, "N_test": 2}}))
    out = tmp_path / "a.npz"
    assert main(["offline", "--config", str(cfg), "--artifact", str(out), "--seed-override", "7"]) == EXIT_OK
    art = load_artifact(out)
    assert art.config.discretization.sample_seed == 7
    assert json.loads(capsys.readouterr().out)["M_FE"] == 9


@pytest.mark.parametrize("body", ['{"model": {"K": 0}}', '{"bogus": 1}', "{"])
def test_bad_config_exit_2(tmp_path, body):
    cfg = tmp_path / "c.json"
    cfg.write_text(body)
    assert main(["offline", "--config", str(cfg), "--artifact", str(tmp_path / "a.npz")]) == EXIT_CONFIG


def test_missing_artifact_exit_2(tmp_path):
    assert main(["evaluate", "--artifact", str(tmp_path / "x.npz"), "--mu", "0", "0", "--R", "1"]) == EXIT_CONFIG


def test_loss_of_coercivity_exit_3(tmp_path):
    cfg = tmp_path / "c.json"
    # a strongly negative-definite reaction destroys coercivity
    cfg.write_text(json.dumps({"model": {"kappa0": 1e6, "sigma": 0.0},
                               "discretization": {"n_cells": 4, "N_xi": 4, "N_train": 2, "N_test": 2}}))
    assert main(["offline", "--config", str(cfg), "--artifact", str(tmp_path / "a.npz")]) == EXIT_NUMERICAL


def test_evaluate_json(quick_artifact_path, tmp_path, capsys):
    code = main(["evaluate", "--artifact", str(quick_artifact_path), "--mu", "10", "-20", "--R", "4",
                 "--out", str(tmp_path)])
    assert code == EXIT_OK
    rec = json.loads((tmp_path / "evaluate.json").read_text())
    assert rec["mu"] == [10.0, -20.0] and rec["R"] == 4
    for method in ("mcrb", "sgrb"):
        for q in ("expectation", "variance"):
            assert rec[method][q]["bound"] >= 0
        # variance bounds are sums of their listed terms
        var = rec[method]["variance"]
        assert var["bound"] == pytest.approx(sum(var["components"].values()))
    capsys.readouterr()


def test_evaluate_R_out_of_range_exit_2(quick_artifact_path):
    assert main(["evaluate", "--artifact", str(quick_artifact_path), "--mu", "0", "0", "--R", "999"]) == EXIT_CONFIG


def test_evaluate_outside_P_warns(quick_artifact_path, capsys):
    with pytest.warns(UserWarning, match="outside"):
        assert main(["evaluate", "--artifact", str(quick_artifact_path), "--mu", "500", "0", "--R", "1"]) == EXIT_OK
    capsys.readouterr()


@pytest.mark.parametrize("mode", ["pointwise", "l2"])
def test_convergence_tables_deterministic(quick_artifact_path, tmp_path, mode, capsys):
    runs = []
    for tag in ("a", "b"):
        out = tmp_path / tag
        assert main(["convergence", "--artifact", str(quick_artifact_path), "--mode", mode, "--out", str(out)]) == EXIT_OK
        runs.append(out)
    files = sorted(p.name for p in runs[0].iterdir())
    assert len(files) == 4
    for name in files:
        text = (runs[0] / name).read_bytes()
        assert text == (runs[1] / name).read_bytes()
        rows = text.decode().strip().splitlines()
        assert rows[0] == "R,Error,Bound"
        assert [int(r.split(",")[0]) for r in rows[1:]] == [1, 2, 4, 8]
        data = np.array([[float(x) for x in r.split(",")] for r in rows[1:]])
        assert np.all(data[:, 1] <= data[:, 2] + 1e-12)
    capsys.readouterr()


def test_convergence_bad_mode_rejected_by_parser(quick_artifact_path, tmp_path):
    with pytest.raises(SystemExit):
        main(["convergence", "--artifact", str(quick_artifact_path), "--mode", "max", "--out", str(tmp_path)])


def test_validate_passes_quickly(quick_artifact_path, tmp_path, capsys):
    t0 = time.perf_counter()
    assert main(["validate", "--artifact", str(quick_artifact_path), "--out", str(tmp_path)]) == EXIT_OK
    assert time.perf_counter() - t0 < 60
    text = (tmp_path / "validation.txt").read_text()
    assert "FAIL]" not in text and "PASSED" in text
    capsys.readouterr()


def test_validate_detects_corrupted_reduced_operator(quick_artifact_path, tmp_path, capsys):
    art = load_artifact(quick_artifact_path)
    art.sgrb.red_A = art.sgrb.red_A.copy()
    art.sgrb.red_A[0, 1] *= 1.01
    bad = save_artifact(art, tmp_path / "bad.npz")  # checksums are valid, content is not
    assert main(["validate", "--artifact", str(bad)]) == EXIT_VALIDATION
    failed = [(r.module, r.name) for r in run_validation(load_artifact(bad)) if not r.passed]
    assert ("sgrb", "reduced operator affinity") in failed
    assert all(module == "sgrb" for module, _ in failed)
    capsys.readouterr()
