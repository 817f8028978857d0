import json

import pytest

from hapstream import cli
from hapstream.experiment import ExperimentConfig
from hapstream.errors import ConfigError

QUICK = ["--dataset", "german", "--n-runs", "2", "--max-steps", "40", "--jobs", "1"]


def run(tmp_path, *argv):
    return cli.main([*argv, "--out", str(tmp_path)])


def test_run_writes_results_manifest_and_table(tmp_path, capsys):
    assert run(tmp_path, "run", *QUICK, "--model", "hedge", "--p", "1.0") == cli.EXIT_OK
    out = capsys.readouterr().out
    assert (tmp_path / "run.csv").exists() and (tmp_path / "run.manifest.json").exists()
    lines = (tmp_path / "run.csv").read_text().splitlines()
    assert len(lines) == 3 and lines[0].startswith("dataset,mode,model,p,seed,error")
    summary = (tmp_path / "run.summary.csv").read_text().splitlines()[1].split(",")
    # every summary cell also appears in the printed table
    assert all(cell in out for cell in summary)


def test_unknown_flag_exits_1(capsys):
    with pytest.raises(SystemExit) as info:
        cli.main(["run", "--dataset", "german", "--bogus"])
    assert info.value.code == cli.EXIT_CONFIG
    assert "usage" in capsys.readouterr().err


def test_invalid_config_names_the_field(tmp_path, capsys):
    assert run(tmp_path, "run", *QUICK, "--p", "1.5") == cli.EXIT_CONFIG
    assert "p:" in capsys.readouterr().err


def test_unknown_model_override(tmp_path, capsys):
    assert run(tmp_path, "run", *QUICK, "--model", "hedge", "--blocks", "3") == cli.EXIT_CONFIG
    assert "blocks" in capsys.readouterr().err


def test_missing_dataset_exits_2(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("HAPSTREAM_DATA_DIR", str(tmp_path))
    assert run(tmp_path / "out", "run", "--dataset", "svmguide3", "--jobs", "1") == cli.EXIT_DATA
    assert "svmguide3" in capsys.readouterr().err
    assert not (tmp_path / "out").exists()


def test_failed_run_exits_3(tmp_path, monkeypatch):
    from hapstream import prequential

    def broken(config, seed):
        raise prequential.RunAborted(3, RuntimeError("x"), prequential.RunResult(
            config.dataset, config.mode, config.model, config.p, seed, failure="x", failed_t=3))

    monkeypatch.setattr(cli, "runner", lambda cfg: lambda seed: broken(cfg, seed))
    assert run(tmp_path, "run", *QUICK, "--model", "hedge") == cli.EXIT_RUNTIME


def test_config_precedence(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"dataset": "german", "p": 0.6, "n_runs": 3,
                                "model_config": {"dropout": 0.3, "lr": 0.001}}))
    args = cli.build_parser().parse_args(["run", "--config", str(path), "--p", "0.9",
                                          "--dropout", "0.5"])
    cfg = cli.config_from_args(args)
    assert (cfg.p, cfg.n_runs) == (0.9, 3)
    assert cfg.model_config == {"dropout": 0.5, "lr": 0.001}
    assert cfg.model == "hapnet"  # default survives


def test_config_file_unknown_key(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"dataset": "german", "colour": "red"}))
    args = cli.build_parser().parse_args(["run", "--config", str(path)])
    with pytest.raises(ConfigError):
        cli.config_from_args(args)


def test_sweep_dedupes_with_warning(tmp_path, capsys):
    code = run(tmp_path, "sweep", *QUICK, "--model", "hedge", "--p", "0.5", "0.9", "0.5")
    assert code == cli.EXIT_OK
    captured = capsys.readouterr()
    assert "duplicate p 0.5" in captured.err
    assert "error vs p:" in captured.out
    assert len((tmp_path / "sweep.summary.csv").read_text().splitlines()) == 3


def test_single_point_sweep_matches_run(tmp_path):
    run(tmp_path / "a", "sweep", *QUICK, "--model", "hedge", "--p", "0.7")
    run(tmp_path / "b", "run", *QUICK, "--model", "hedge", "--p", "0.7")
    assert (tmp_path / "a" / "sweep.csv").read_text() == (tmp_path / "b" / "run.csv").read_text()


def test_ablate_names_csv_by_axis(tmp_path):
    code = run(tmp_path, "ablate", *QUICK, "--model", "hedge", "--axis", "lr",
               "--values", "0.001", "0.01")
    assert code == cli.EXIT_OK
    rows = (tmp_path / "ablate_lr.summary.csv").read_text().splitlines()
    assert rows[0].split(",")[4] == "lr" and len(rows) == 3


def test_ablate_empty_values(tmp_path):
    assert run(tmp_path, "ablate", *QUICK, "--axis", "dropout", "--values") == cli.EXIT_CONFIG


def test_ablate_unsupported_axis(tmp_path):
    assert run(tmp_path, "ablate", *QUICK, "--axis", "heads", "--values", "2") == cli.EXIT_CONFIG


def test_monotonicity_summary():
    cfgs = [ExperimentConfig("german", p=p) for p in (0.5, 0.7, 0.9)]

    class Agg:
        def __init__(self, e):
            self.mean = {"error": e}

    assert cli.monotonicity_summary(cfgs, [Agg(30), Agg(20), Agg(10)]).endswith("decreasing")
    assert "0.7->0.9" in cli.monotonicity_summary(cfgs, [Agg(30), Agg(20), Agg(25)])


@pytest.mark.parametrize("jobs", ["1", "2"])
def test_replay_reproduces_bytes(tmp_path, jobs):
    assert run(tmp_path / "orig", "run", *QUICK, "--model", "hapnet", "--p", "0.73",
               "--blocks", "1", "--batch-size", "8") == 0
    code = cli.main(["replay", str(tmp_path / "orig" / "run.manifest.json"),
                     "--out", str(tmp_path / "again"), "--jobs", jobs])
    assert code == 0
    for name in ("run.csv", "run.summary.csv", "run.manifest.json"):
        assert (tmp_path / "orig" / name).read_bytes() == (tmp_path / "again" / name).read_bytes()


def test_replay_bad_manifest(tmp_path):
    (tmp_path / "m.json").write_text("{}")
    assert cli.main(["replay", str(tmp_path / "m.json"), "--out", str(tmp_path)]) == 1
