import hashlib
import json

import pytest

from pmlgamm.cli import main


def run_cli(*argv):
    return main([str(a) for a in argv])


@pytest.fixture
def dataset_csv(tmp_path):
    path = tmp_path / "data.csv"
    code = run_cli("simulate", "--m", 12, "--n", 5, "--sigma", 1.0,
                   "--family", "poisson", "--seed", 7, "--out", path)
    assert code == 0
    return path


def test_simulate_row_count_and_determinism(tmp_path):
    out1 = tmp_path / "a.csv"
    out2 = tmp_path / "b.csv"
    assert run_cli("simulate", "--m", 5, "--n", 3, "--seed", 1,
                   "--out", out1) == 0
    assert run_cli("simulate", "--m", 5, "--n", 3, "--seed", 1,
                   "--out", out2) == 0
    assert len(out1.read_text().splitlines()) == 16  # header + 15 rows
    assert out1.read_bytes() == out2.read_bytes()


def test_simulate_seed_env_fallback(tmp_path, monkeypatch):
    monkeypatch.setenv("PMLGAMM_SEED", "99")
    out1 = tmp_path / "a.csv"
    out2 = tmp_path / "b.csv"
    assert run_cli("simulate", "--m", 4, "--n", 3, "--out", out1) == 0
    assert run_cli("simulate", "--m", 4, "--n", 3, "--seed", 99,
                   "--out", out2) == 0
    assert out1.read_bytes() == out2.read_bytes()


def test_fit_gam_json(dataset_csv, tmp_path):
    out = tmp_path / "gam.json"
    code = run_cli("fit", "--data", dataset_csv, "--model", "gam",
                   "--family", "poisson", "--out", out,
                   "--out-dir", tmp_path)
    assert code == 0
    payload = json.loads(out.read_text())
    assert "lambda_hat" in payload
    assert "sigma_hat" not in payload


def test_fit_pml_json_keys_and_determinism(dataset_csv, tmp_path):
    out1 = tmp_path / "fit1.json"
    out2 = tmp_path / "fit2.json"
    for out in (out1, out2):
        code = run_cli("fit", "--data", dataset_csv, "--model", "pml",
                       "--quad-points", 9, "--family", "poisson",
                       "--out", out, "--out-dir", tmp_path)
        assert code == 0
    payload = json.loads(out1.read_text())
    assert payload["k"] == 9
    for key in ("sigma_hat", "beta_hat", "lambda_used", "objective",
                "converged"):
        assert key in payload
    assert out1.read_bytes() == out2.read_bytes()


def test_fit_pml_with_stage1_file(dataset_csv, tmp_path):
    gam_json = tmp_path / "gam.json"
    assert run_cli("fit", "--data", dataset_csv, "--model", "gam",
                   "--family", "poisson", "--out", gam_json,
                   "--out-dir", tmp_path) == 0
    out = tmp_path / "pml.json"
    assert run_cli("fit", "--data", dataset_csv, "--model", "pml",
                   "--family", "poisson", "--stage1", gam_json,
                   "--out", out, "--out-dir", tmp_path) == 0
    direct = tmp_path / "pml_direct.json"
    assert run_cli("fit", "--data", dataset_csv, "--model", "pml",
                   "--family", "poisson", "--out", direct,
                   "--out-dir", tmp_path) == 0
    a = json.loads(out.read_text())
    b = json.loads(direct.read_text())
    assert a["sigma_hat"] == pytest.approx(b["sigma_hat"], rel=1e-9)


def test_fit_gamm_laplace_json(dataset_csv, tmp_path):
    out = tmp_path / "gamm.json"
    code = run_cli("fit", "--data", dataset_csv, "--model", "gamm-laplace",
                   "--family", "poisson", "--out", out, "--out-dir", tmp_path)
    assert code == 0
    payload = json.loads(out.read_text())
    assert "sigma_hat" in payload and "lambda_hat" in payload


def test_fit_band_csv(dataset_csv, tmp_path):
    band = tmp_path / "band.csv"
    code = run_cli("fit", "--data", dataset_csv, "--model", "pml",
                   "--family", "poisson", "--out", tmp_path / "f.json",
                   "--out-dir", tmp_path, "--band", band,
                   "--band-points", 40)
    assert code == 0
    lines = band.read_text().splitlines()
    assert lines[0] == "grid,estimate,lower,upper"
    assert len(lines) == 41


def test_fit_dump_basis(dataset_csv, tmp_path):
    code = run_cli("fit", "--data", dataset_csv, "--model", "gam",
                   "--family", "poisson", "--out-dir", tmp_path,
                   "--dump-basis")
    assert code == 0
    assert (tmp_path / "basis0_knots.csv").exists()
    assert (tmp_path / "basis0_penalty.csv").exists()


def test_fit_does_not_mutate_input(dataset_csv, tmp_path):
    before = hashlib.sha256(dataset_csv.read_bytes()).hexdigest()
    run_cli("fit", "--data", dataset_csv, "--model", "gam",
            "--family", "poisson", "--out-dir", tmp_path)
    assert hashlib.sha256(dataset_csv.read_bytes()).hexdigest() == before


def test_malformed_csv_exits_one(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("group,y,x1\n1,2.0,0.5\n1,not-a-number,0.2\n")
    assert run_cli("fit", "--data", bad, "--model", "gam") == 1


def test_truncated_csv_exits_one(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("group,y,x1\n1,2.0\n")
    assert run_cli("fit", "--data", bad, "--model", "gam") == 1


def test_missing_file_exits_one(tmp_path):
    assert run_cli("fit", "--data", tmp_path / "nope.csv",
                   "--model", "gam") == 1


def test_bad_flag_exits_one():
    assert run_cli("fit", "--model", "what") == 1


def test_iteration_cap_flags_fit(dataset_csv, tmp_path):
    code = run_cli("fit", "--data", dataset_csv, "--model", "pml",
                   "--family", "poisson", "--max-outer", 1,
                   "--out-dir", tmp_path)
    assert code == 2


def test_study_end_to_end(tmp_path, capsys):
    cfg = tmp_path / "study.cfg"
    cfg.write_text(
        "m_grid = 5\n"
        "n_grid = 3\n"
        "replicates = 2\n"
        "num_basis = 6\n"
        "seed = 5\n")
    out_dir = tmp_path / "out"
    assert run_cli("study", "--config", cfg, "--out-dir", out_dir) == 0
    records = out_dir / "study_records.csv"
    summary = out_dir / "study_summary.csv"
    assert records.exists() and summary.exists()
    assert len(records.read_text().splitlines()) == 1 + 6
    err = capsys.readouterr().err
    assert "completed cell m=5 n=3" in err
    # rerun reproduces the records byte for byte
    first = records.read_bytes()
    assert run_cli("study", "--config", cfg, "--out-dir", out_dir,
                   "--threads", 2) == 0
    assert records.read_bytes() == first


def test_study_bad_config_exits_one(tmp_path):
    cfg = tmp_path / "study.cfg"
    cfg.write_text("replicates = many\n")
    assert run_cli("study", "--config", cfg, "--out-dir", tmp_path) == 1


def test_study_does_not_mutate_config(tmp_path):
    cfg = tmp_path / "study.cfg"
    cfg.write_text("m_grid = 5\nn_grid = 3\nreplicates = 1\nnum_basis = 6\n")
    before = cfg.read_bytes()
    assert run_cli("study", "--config", cfg, "--out-dir", tmp_path / "o") == 0
    assert cfg.read_bytes() == before
