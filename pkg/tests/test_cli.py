import json
from pathlib import Path

import pytest

from distrl.cli import main
from distrl.config import ExperimentConfig, parse_config
from distrl.errors import ConfigSyntaxError, ConfigValidationError
from distrl.risk import RiskReport

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

MINIMAL_LSE = {
    "env": {"constructor": "hard_bandit", "A": 2, "C": 3, "n": 100, "lambda_min": 0.1, "r_max": 1.0,
            "delta": 0.01, "v_seed": 0},
    "algorithm": {"name": "LSE"},
    "comm": {"P": 0.01},
    "run": {"m": 10},
}


def write(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc) if not isinstance(doc, str) else doc)
    return str(p)


class TestParse:
    def test_minimal_defaults(self):
        cfg = parse_config(json.dumps(MINIMAL_LSE))
        assert cfg.trials == 1000
        assert cfg.v_min == -3.0 and cfg.v_max == 3.0
        assert len(cfg.env["v"]) == 6

    def test_both_p_and_b(self):
        doc = json.loads(json.dumps(MINIMAL_LSE))
        doc["comm"]["B"] = 4
        with pytest.raises(ConfigValidationError) as info:
            parse_config(json.dumps(doc))
        assert ("comm", "exactly one of P, B must be given") in info.value.errors

    def test_hard_instance_precondition(self):
        doc = json.loads(json.dumps(MINIMAL_LSE))
        doc["env"]["delta"] = 1.0
        with pytest.raises(ConfigValidationError) as info:
            parse_config(json.dumps(doc))
        path, msg = info.value.errors[0]
        assert path == "env" and "DeltaTooLarge" in msg and "r_max / 4" in msg

    def test_reports_all_errors(self):
        doc = json.loads(json.dumps(MINIMAL_LSE))
        doc["run"] = {"m": 0, "trials": 5}
        doc["comm"] = {"P": -1.0}
        with pytest.raises(ConfigValidationError) as info:
            parse_config(json.dumps(doc))
        paths = {p for p, _ in info.value.errors}
        assert {"run.m", "run.trials", "comm.P"} <= paths

    def test_syntax_error_position(self):
        with pytest.raises(ConfigSyntaxError) as info:
            parse_config('{\n  "env": {,\n}')
        assert info.value.line == 2 and info.value.column == 11

    @pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.json")), ids=lambda p: p.stem)
    def test_round_trip(self, path):
        cfg = parse_config(path.read_text())
        again = parse_config(cfg.to_json())
        assert again == cfg
        assert isinstance(again, ExperimentConfig)

    def test_three_examples_one_per_algorithm(self):
        algos = {parse_config(p.read_text()).algorithm for p in CONFIGS.glob("*.json")}
        assert algos == {"LSE", "MC_LSE", "TD"}


class TestCommands:
    def test_bounds_example(self, tmp_path, capsys):
        doc = json.loads(json.dumps(MINIMAL_LSE))
        del doc["comm"]
        assert main(["bounds", "--config", write(tmp_path, doc)]) == 0
        out = capsys.readouterr().out
        assert "risk_bound: 0.06" in out

    def test_bounds_td_variance_branch(self, tmp_path, capsys):
        doc = {
            "env": {"constructor": "hard_nonepisodic", "S": 2, "C": 2, "gamma": 0.9, "p": 0.5,
                    "lambda_min": 0.5, "r_max": 1.0, "delta": 0.0, "v": [1, 1]},
            "algorithm": {"name": "TD"},
            "run": {"m": 4, "n": 100},
        }
        assert main(["bounds", "--config", write(tmp_path, doc)]) == 0
        out = capsys.readouterr().out
        expected = 1.0 / (2 * 0.5 * 0.5 * 4) / (1 + 0.01 * 100)
        assert f"risk_bound: {expected:.6g}" in out

    def test_bounds_bad_lambda(self, tmp_path, capsys):
        doc = json.loads(json.dumps(MINIMAL_LSE))
        doc["env"]["lambda_min"] = 0.0
        assert main(["bounds", "--config", write(tmp_path, doc)]) == 2
        assert "lambda_min" in capsys.readouterr().err

    def test_validate_prints_resolved(self, tmp_path, capsys):
        assert main(["validate", "--config", write(tmp_path, MINIMAL_LSE)]) == 0
        resolved = capsys.readouterr().out
        assert parse_config(resolved) == parse_config(json.dumps(MINIMAL_LSE))

    def test_dry_run(self, tmp_path, capsys):
        assert main(["run", "--dry-run", "--config", str(CONFIGS / "lse_m_sweep.json")]) == 0
        out = capsys.readouterr().out
        assert "total_simulations: 14000" in out
        assert "bits_per_machine" in out

    def test_sweep_writes_csv(self, tmp_path, capsys):
        doc = json.loads((CONFIGS / "lse_m_sweep.json").read_text())
        doc["run"]["trials"] = 40
        doc["run"]["sweep"]["values"] = [1, 2, 4]
        doc["output"] = {"csv": str(tmp_path / "out.csv"), "report": str(tmp_path / "out.json")}
        assert main(["run", "--config", write(tmp_path, doc)]) == 0
        report = RiskReport.from_csv((tmp_path / "out.csv").read_text())
        assert [p.value for p in report.points] == [1.0, 2.0, 4.0]
        assert "slope=" in capsys.readouterr().out
        saved = json.loads((tmp_path / "out.json").read_text())
        assert RiskReport.from_dict(saved["report"]) == report

    def test_rank_deficient_exit(self, tmp_path, capsys):
        doc = {
            "env": {"constructor": "generic_bandit", "contexts": [[0.5, 0.0], [0.0, 0.0]],
                    "theta": [[0.1, 0.1]], "r_max": 1.0},
            "algorithm": {"name": "LSE"},
            "run": {"m": 2, "trials": 30},
        }
        assert main(["run", "--config", write(tmp_path, doc)]) == 3
        err = capsys.readouterr().err
        assert "machine 0" in err and "arm 0" in err

    def test_config_error_exit(self, tmp_path):
        assert main(["run", "--config", write(tmp_path, "{ not json")]) == 2

    def test_missing_file_exit(self, tmp_path):
        assert main(["run", "--config", str(tmp_path / "missing.json")]) == 4

    def test_unwritable_output_exit(self, tmp_path):
        doc = json.loads(json.dumps(MINIMAL_LSE))
        doc["run"]["trials"] = 30
        doc["output"] = {"csv": str(tmp_path / "no" / "such" / "dir.csv")}
        assert main(["run", "--config", write(tmp_path, doc)]) == 4

    def test_seed_override_changes_output(self, tmp_path):
        doc = json.loads(json.dumps(MINIMAL_LSE))
        doc["run"]["trials"] = 30
        outs = []
        for seed in ("1", "1", "2"):
            doc["output"] = {"csv": str(tmp_path / f"s{len(outs)}.csv")}
            assert main(["run", "--seed", seed, "--config", write(tmp_path, doc)]) == 0
            outs.append((tmp_path / f"s{len(outs)}.csv").read_bytes())
        assert outs[0] == outs[1] != outs[2]
