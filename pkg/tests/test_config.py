"""Config file parsing, flag precedence, validation."""

import pytest

from firecast.config import ConfigError, parse_config_file, resolve_config


def test_key_value_file(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("""
# comment line
seed = 42
scale = desk
w_l1 = 20.0
ensemble = 7   # inline comment
""")
    cfg = resolve_config(p)
    assert cfg.seed == 42
    assert cfg.ensemble == 7
    assert cfg.w_l1 == 20.0


def test_json_file(tmp_path):
    p = tmp_path / "run.json"
    p.write_text('{"seed": 9, "scale": "paper", "threshold": 0.1}')
    cfg = resolve_config(p)
    assert cfg.scale == "paper"
    assert cfg.grid == 128
    assert cfg.threshold == 0.1


def test_flags_win_over_file(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("seed = 1\nensemble = 3\n")
    cfg = resolve_config(p, {"ensemble": 9})
    assert cfg.ensemble == 9
    assert cfg.seed == 1


def test_seed_is_mandatory():
    with pytest.raises(ConfigError):
        resolve_config(None, {"scale": "desk"})


def test_unknown_key_rejected(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("seed = 1\nwarp_speed = 9\n")
    with pytest.raises(ConfigError):
        resolve_config(p)


def test_bad_value_rejected(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("seed = not_a_number\n")
    with pytest.raises(ConfigError):
        resolve_config(p)


def test_scale_presets():
    desk = resolve_config(None, {"seed": 0})
    assert (desk.grid, desk.cell_size_m) == (32, 62.5)
    paper = resolve_config(None, {"seed": 0, "scale": "paper"})
    assert paper.grid == 128


def test_defaults_match_study_values():
    cfg = resolve_config(None, {"seed": 0})
    assert cfg.batch_size == 16
    assert (cfg.w_adv, cfg.w_l1, cfg.w_dice, cfg.w_gp) == (1.0, 20.0, 0.3, 10.0)
    assert cfg.ensemble == 5
    assert cfg.threshold == pytest.approx(15.0 / 255.0)


def test_malformed_line_rejected(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("seed 1\n")
    with pytest.raises(ConfigError):
        parse_config_file(p)
