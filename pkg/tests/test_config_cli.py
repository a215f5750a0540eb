import json
import math
from pathlib import Path

import numpy as np
import pytest

from teleteach.cli import main, skill_dumps, skill_from_dict, skill_to_dict
from teleteach.config import (
    ConfigError,
    apply_overrides,
    build_world,
    load_config,
    parse_config,
)
from teleteach.dmp import PdmpConfig, make_state
from teleteach.geometry import Pose, quat_from_axis_angle


class TestParseConfig:
    def test_empty_document_gives_defaults(self):
        cfg = parse_config({})
        assert cfg.dmp.n_basis == 30
        assert cfg.dmp.h == 31.0
        assert cfg.dmp.lambda_fg == 0.9995
        assert cfg.autonomy.lambda_f == 8.0
        assert cfg.channel.delay_ticks == 0

    def test_paper_selection_values(self):
        cfg = parse_config({"dmp": {"h": 31, "lambda_fg": 0.9995}})
        assert cfg.dmp.h == 31.0 and cfg.dmp.lambda_fg == 0.9995

    def test_unknown_keys_rejected_with_paths(self):
        with pytest.raises(ConfigError) as exc:
            parse_config({"dmp": {"kernel": 3}, "typo_section": {}, "afo": {"bad": 1}})
        paths = exc.value.paths
        assert "dmp.kernel" in paths
        assert "typo_section" in paths
        assert "afo.bad" in paths

    def test_invalid_value_names_section(self):
        with pytest.raises(ConfigError) as exc:
            parse_config({"autonomy": {"rho": -1}})
        assert any(p.startswith("autonomy") for p in exc.value.paths)

    def test_script_keys_validated(self):
        with pytest.raises(ConfigError) as exc:
            parse_config({"scenario": {"scripts": [{"name": "R1", "wiggle": 2}]}})
        assert "scenario.scripts[0].wiggle" in exc.value.paths

    def test_gain_vectors_accepted(self):
        cfg = parse_config({"robots": {"k_th": [400, 400, 400, 15, 15, 15]}})
        assert np.allclose(cfg.robots.gains_tr.k, [400, 400, 400, 15, 15, 15])

    def test_build_world_runs(self):
        world = build_world(parse_config({"channel": {"delay_ticks": 2}}))
        for _ in range(10):
            world.sim_tick()
        assert world.t == pytest.approx(0.01)


class TestLoadConfig:
    def test_env_var_fallback(self, tmp_path, monkeypatch):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"dmp": {"h": 8}}))
        monkeypatch.setenv("TELETEACH_CONFIG", str(path))
        assert load_config().dmp.h == 8.0

    def test_defaults_without_file(self, monkeypatch):
        monkeypatch.delenv("TELETEACH_CONFIG", raising=False)
        assert load_config().dmp.h == 31.0


class TestOverrides:
    def test_dotted_overrides(self):
        doc = apply_overrides({}, ["dmp.h=8", "autonomy.rho=2.5", "scenario.seed=7"])
        assert doc == {"dmp": {"h": 8}, "autonomy": {"rho": 2.5}, "scenario": {"seed": 7}}

    def test_malformed_override_rejected(self):
        with pytest.raises(ConfigError):
            apply_overrides({}, ["dmp.h"])


class TestSkillFile:
    def _skill(self):
        cfg = PdmpConfig(n_basis=6, h=31.0)
        state = make_state(
            cfg, Pose(np.array([0.4, 0.0, 0.3]), quat_from_axis_angle([0, 0, 1], 0.2)), 3.77
        )
        state.W = np.arange(36, dtype=float).reshape(6, 6) / 7.0
        return state, cfg

    def test_round_trip_bit_identical(self):
        state, cfg = self._skill()
        doc = skill_to_dict(state, cfg, "cafe1234")
        text = skill_dumps(doc)
        state2, cfg2 = skill_from_dict(json.loads(text))
        text2 = skill_dumps(skill_to_dict(state2, cfg2, "cafe1234"))
        assert text == text2

    def test_rejects_wrong_schema(self):
        with pytest.raises(ValueError):
            skill_from_dict({"schema": "skill.v2"})

    def test_rejects_bad_weight_shape(self):
        state, cfg = self._skill()
        doc = skill_to_dict(state, cfg, "x")
        doc["weights"] = [[1.0, 2.0]]
        with pytest.raises(ValueError):
            skill_from_dict(doc)


class TestCli:
    def test_missing_config_exits_1(self, tmp_path, capsys):
        code = main(["scenario", "--config", str(tmp_path / "missing.json")])
        assert code == 1
        assert "missing.json" in capsys.readouterr().err

    def test_unknown_flag_exits_1(self):
        assert main(["sensitivity", "--bogus"]) == 1

    def test_bad_override_exits_1(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text("{}")
        code = main(
            ["sensitivity", "--param", "h", "--values", "31", "--config", str(cfg),
             "--set", "autonomy.rho=-1", "--out", str(tmp_path)]
        )
        assert code == 1

    def test_sensitivity_writes_csv(self, tmp_path, capsys):
        code = main(
            ["sensitivity", "--param", "h", "--values", "31",
             "--set", "dmp.n_basis=10", "--out", str(tmp_path)]
        )
        assert code == 0
        text = (tmp_path / "sensitivity_h.csv").read_text()
        lines = text.strip().splitlines()
        assert lines[0] == "param,weight_std,rms_error_mm"
        assert len(lines) == 2
        assert lines[1].startswith("31.0,")

    def test_scenario_and_skill_round_trip(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(
            json.dumps(
                {
                    "scenario": {
                        "duration_s": 1.0,
                        "scripts": [{"name": "R1", "t_start": 0.2, "t_stop": 0.9}],
                        "telemetry_decimation": 50,
                    }
                }
            )
        )
        out = tmp_path / "out"
        assert main(["scenario", "--config", str(cfg), "--out", str(out)]) == 0
        assert (out / "telemetry.ndjson").exists()
        assert (out / "summary.json").exists()
        skill_path = out / "skill.json"
        assert skill_path.exists()

        exported = tmp_path / "exported.json"
        assert main(["skill", "export", str(exported), "--from", str(out)]) == 0
        assert exported.read_bytes() == skill_path.read_bytes()
        assert main(["skill", "import", str(exported)]) == 0

    def test_scenario_deterministic_outputs(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(
            json.dumps(
                {
                    "channel": {"drop_prob": 0.2},
                    "scenario": {
                        "seed": 11,
                        "duration_s": 0.5,
                        "scripts": [{"name": "R2", "t_start": 0.1, "t_stop": 0.4}],
                    },
                }
            )
        )
        outputs = []
        for sub in ("a", "b"):
            out = tmp_path / sub
            assert main(["scenario", "--config", str(cfg), "--out", str(out)]) == 0
            outputs.append(
                (out / "telemetry.ndjson").read_bytes()
                + (out / "skill.json").read_bytes()
            )
        assert outputs[0] == outputs[1]

    def test_empty_scripts_rejected(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text("{}")
        assert main(["scenario", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
