from pathlib import Path

import pytest

from models import ConfigError, ScheduleKind, Scenario, SimConfig
from services.config_service import config_service
from services.treatment_service import treatment_service


def test_empty_file_gives_defaults():
    assert config_service.parse_config("") == SimConfig()
    assert config_service.parse_config("# só comentários\n\n") == SimConfig()


def test_oxygen_threshold_ordering_violation():
    with pytest.raises(ConfigError) as info:
        config_service.parse_config("o_hyp=0.02\n")
    assert any("linha 1" in e and "o_hyp" in e for e in info.value.errors)


def test_strategy3_parses_to_pulsed_schedule():
    config = config_service.parse_config("treatment = strategy3  # pulsada\n")
    schedule = treatment_service.from_config(config)
    assert schedule.kind == ScheduleKind.PULSED
    assert (schedule.t_on, schedule.t_off) == (30.0, 20.0)
    assert schedule.d_p == pytest.approx(10.0 / 3.0)


def test_unknown_key_reports_line_number():
    with pytest.raises(ConfigError) as info:
        config_service.parse_config("seed=3\nfoo=1\n")
    assert info.value.errors == ["linha 2: chave desconhecida 'foo'"]


def test_all_errors_reported_together():
    text = "# comentário\ndt=abc\nfoo=1\no_hyp=0.02\nseed\n"
    with pytest.raises(ConfigError) as info:
        config_service.parse_config(text)
    errors = info.value.errors
    assert any(e.startswith("linha 2: dt") for e in errors)
    assert any(e.startswith("linha 3:") and "foo" in e for e in errors)
    assert any(e.startswith("linha 4:") and "o_hyp" in e for e in errors)
    assert any(e.startswith("linha 5:") for e in errors)


def test_duplicate_key_is_an_error():
    with pytest.raises(ConfigError) as info:
        config_service.parse_config("seed=1\nseed=2\n")
    assert "repetida" in info.value.errors[0]


def test_preset_with_custom_parameters_is_rejected():
    with pytest.raises(ConfigError) as info:
        config_service.parse_config("treatment=strategy1\nd_p=3\n")
    assert any("treatment" in e for e in info.value.errors)


def test_pulsed_requires_all_parameters():
    with pytest.raises(ConfigError) as info:
        config_service.parse_config("treatment=pulsed\nd_p=3\n")
    joined = " ".join(info.value.errors)
    assert "t_on" in joined and "t_off" in joined


def test_emit_then_parse_preserves_config():
    config = SimConfig(seed=7, scenario=Scenario.SPONTANEOUS, mu=0.01, treatment="pulsed",
                       d_p=4.0, t_on=5.0, t_off=5.0, snapshot_times=[1.0, 2.5], exposure_adaptation=True)
    text = config_service.emit_config(config)
    assert "scenario=spontaneous" in text
    assert "exposure_adaptation=true" in text
    assert config_service.parse_config(text) == config


def test_load_config_from_file(tmp_path):
    path = tmp_path / "run.txt"
    path.write_text("scenario=angio_only\nt_end=5\n", encoding="utf-8")
    config = config_service.load_config(str(path))
    assert config.scenario == Scenario.ANGIO_ONLY
    assert config.stops_on_vascularization and not config.has_tumour


def test_describe_presets_lists_strategies():
    text = config_service.describe_presets()
    for k in range(1, 8):
        assert f"strategy{k}" in text
    assert "angio_only" in text


def test_shipped_configs_are_valid():
    configs = sorted((Path(__file__).resolve().parents[1] / "configs").glob("*.txt"))
    assert configs
    for path in configs:
        config_service.load_config(str(path))
