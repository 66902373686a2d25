import csv
import json

import pytest

from hears.cli import build_config, main, make_parser


def test_flags_override_config_file(tmp_path):
    cfg_file = tmp_path / "c.json"
    cfg_file.write_text(json.dumps({"episodes": 11, "max_steps": 77}))
    args = make_parser().parse_args(["run", "--preset", "gridnav", "--config", str(cfg_file), "--episodes", "4",
                                     "--seed", "1,2"])
    cfg = build_config(args)
    assert cfg.episodes == 4 and cfg.max_steps == 77 and cfg.seeds == (1, 2)
    assert cfg.coefficients == (0.02, 0.0, 0.0)


def test_bad_seed_list():
    with pytest.raises(SystemExit):
        make_parser().parse_args(["run", "--seed", "a,b"])


def test_run_and_plotdata(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["run", "--preset", "gridnav", "--seed", "1,2", "--episodes", "5", "--out", str(out)]) == 0
    assert (out / "summary.json").exists()
    assert main(["plotdata", "--run", str(out)]) == 0
    rows = list(csv.DictReader(open(out / "curves.csv")))
    assert len(rows) == 5 and {r["n_seeds"] for r in rows} == {"2"}
    assert "config" in capsys.readouterr().out


def test_run_failure_exit_status(tmp_path):
    cfg_file = tmp_path / "c.json"
    cfg_file.write_text(json.dumps({"learner_params": {"bogus": 1}}))
    argv = ["run", "--preset", "gridnav", "--config", str(cfg_file), "--seed", "1", "--episodes", "2",
            "--out", str(tmp_path / "r")]
    assert main(argv) == 1
    assert json.loads((tmp_path / "r" / "summary.json").read_text())["failed"]


def test_ablate_dry_run(tmp_path, capsys):
    assert main(["ablate", "--preset", "ant", "--dry-run", "--out", str(tmp_path)]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 8
    assert "Without Task: alpha_task=0 alpha_energy=0.03 lambda=0.01" in lines
    index = json.loads((tmp_path / "ablation.json").read_text())
    assert len(index["variants"]) == 8


def test_verify_quick(capsys):
    assert main(["verify"]) == 0
    assert "checks passed" in capsys.readouterr().out
