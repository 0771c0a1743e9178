import pytest

import app
from errors import InfeasibleError


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    for name in ("D2OC_SEED", "D2OC_OUT_DIR"):
        monkeypatch.delenv(name, raising=False)


@pytest.fixture
def captured(monkeypatch):
    """Replace run_scenario with a stub that records its config and fails."""
    seen = []

    def fake(cfg):
        seen.append(cfg)
        raise InfeasibleError("stub")

    monkeypatch.setattr(app, "run_scenario", fake)
    return seen


def test_validate(tiny_file, capsys):
    assert app.main(["validate", str(tiny_file)]) == app.EXIT_OK
    out = capsys.readouterr().out
    assert "OK" in out
    assert "n_agents = 2" in out
    assert "peak weed density at" in out


def test_bad_config_exits_with_config_code(tmp_path, capsys):
    path = tmp_path / "bad.env"
    path.write_text("seed = many\n", encoding="utf-8")
    assert app.main(["validate", str(path)]) == app.EXIT_CONFIG
    assert "seed" in capsys.readouterr().err


def test_missing_file_exits_with_io_code(tmp_path):
    assert app.main(["run", str(tmp_path / "absent.env")]) == app.EXIT_IO


def test_runtime_error_exits_with_runtime_code(tiny_file, captured):
    assert app.main(["run", str(tiny_file)]) == app.EXIT_RUNTIME
    assert len(captured) == 1


def test_seed_from_environment_and_flag(tiny_file, captured, monkeypatch):
    monkeypatch.setenv("D2OC_SEED", "7")
    app.main(["run", str(tiny_file)])
    app.main(["run", str(tiny_file), "--seed", "3"])
    assert [cfg.seed for cfg in captured] == [7, 3]


def test_bad_seed_variable_is_a_config_error(tiny_file, monkeypatch):
    monkeypatch.setenv("D2OC_SEED", "abc")
    assert app.main(["validate", str(tiny_file)]) == app.EXIT_CONFIG


def test_method_flag_overrides_the_file(tiny_file, captured):
    app.main(["run", str(tiny_file), "--method", "smc"])
    assert captured[0].method == "smc"


def test_run_writes_outputs(tiny_file, tmp_path, capsys):
    out = tmp_path / "result"
    assert app.main(["run", str(tiny_file), "--out", str(out)]) == app.EXIT_OK
    for name in ("trajectories.csv", "grid.csv", "summary.csv", "density.svg", "survival.svg"):
        assert (out / name).is_file()
    assert "reduction_rate_pct" in capsys.readouterr().out


def test_output_directory_from_environment(tiny_file, tmp_path, monkeypatch):
    monkeypatch.setenv("D2OC_OUT_DIR", str(tmp_path / "env_out"))
    assert app.main(["run", str(tiny_file)]) == app.EXIT_OK
    assert (tmp_path / "env_out" / "summary.csv").is_file()


def test_compare_prints_every_method(tiny_file, capsys):
    assert app.main(["compare", str(tiny_file)]) == app.EXIT_OK
    out = capsys.readouterr().out
    for label in ("LM", "SMC", "D2OC centralized", "D2OC d_comm=10 m"):
        assert label in out
