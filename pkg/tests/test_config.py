import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from selfsense.config import ConfigError, dump_config, load_config, parse_override
from selfsense.motor import coil_inductance
from selfsense.sim import Config, EstimatorConfig


def test_default_config_loads_cleanly():
    assert load_config() == Config()


def test_dump_round_trips():
    cfg = load_config(overrides=["motor.turns_N=137", "controller.kp=123.25"])
    assert load_config(text=dump_config(cfg)) == cfg


@given(
    st.floats(1e-6, 1e-2),
    st.floats(-1e3, 1e3),
    st.floats(-1.0, 1.0),
    st.floats(-1.0, 1.0),
)
def test_estimator_fragment_round_trips_exactly(gx, gy, ox, oy):
    cfg = Config(estimator=EstimatorConfig(4, gx, gy or 1.0, ox, oy))
    assert load_config(text=dump_config(cfg, ["estimator"])).estimator == cfg.estimator


def test_zero_gap_names_the_field():
    with pytest.raises(ConfigError) as info:
        load_config(overrides=["motor.nominal_gap_g0=0"])
    assert any("nominal_gap_g0" in p for p in info.value.problems)


def test_all_problems_reported_together():
    text = "[motor]\nturns_N = 0\ncoil_resistance_R = -1\ntypo = 3\n[nonsense]\na = 1\n"
    with pytest.raises(ConfigError) as info:
        load_config(text=text, overrides=["controller.kp=abc"])
    msg = "\n".join(info.value.problems)
    for needle in ("turns_N", "coil_resistance_R", "motor.typo", "[nonsense]", "controller.kp"):
        assert needle in msg


def test_unknown_override_key_rejected():
    with pytest.raises(ConfigError, match="scenario.durration"):
        load_config(overrides=["scenario.durration=1"])


@pytest.mark.parametrize("item", ["motor", "motor.turns_N", "=3", ".x=1"])
def test_malformed_override(item):
    with pytest.raises(ConfigError):
        parse_override(item)


def test_parse_error_has_line_info(tmp_path):
    path = tmp_path / "bad.ini"
    path.write_text("[motor]\nturns_N = 100\nturns_N = 200\n")
    with pytest.raises(ConfigError, match=r"line\s+3"):
        load_config([path])


def test_missing_file():
    with pytest.raises(ConfigError, match="no-such.ini"):
        load_config(["/nonexistent/no-such.ini"])


def test_files_layer_in_order(tmp_path):
    a, b = tmp_path / "a.ini", tmp_path / "b.ini"
    a.write_text("[controller]\nkp = 1\nki = 2\n")
    b.write_text("[controller]\nki = 3\n")
    cfg = load_config([a, b], ["controller.kd=4"])
    c = cfg.controller
    assert (c.kp, c.ki, c.kd) == (1.0, 3.0, 4.0)


def test_control_period_drives_controller_dt():
    cfg = load_config(overrides=["scenario.control_period=2e-4"])
    assert cfg.controller.dt == 2e-4


def test_turns_override_scales_inductance_by_four():
    base = load_config()
    more = load_config(overrides=["motor.turns_N=200"])
    g0 = base.motor.nominal_gap_g0
    assert coil_inductance(g0, more.motor) == pytest.approx(4 * coil_inductance(g0, base.motor))


def test_tuple_and_auto_values():
    cfg = load_config(
        overrides=[
            "injection.injected_coils=2, 5",
            "injection.polarity=1, -1",
            "estimator.calibration_gain_x=1e-3",
            "estimator.calibration_gain_y=2e-3",
        ]
    )
    assert cfg.injection.injected_coils == (2, 5)
    assert cfg.injection.polarity == (1.0, -1.0)
    assert cfg.estimator.calibrated
    again = load_config(text=dump_config(cfg))
    assert again == cfg
    assert math.isclose(again.estimator.calibration_gain_y, 2e-3)


def test_half_auto_calibration_rejected():
    with pytest.raises(ConfigError, match="both"):
        load_config(overrides=["estimator.calibration_gain_x=1e-3"])
