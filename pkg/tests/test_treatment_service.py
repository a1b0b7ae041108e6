import pytest

from models import ScheduleKind, SimConfig, TreatmentSchedule
from services.treatment_service import treatment_service


def test_no_supply_before_treatment_starts():
    schedule = treatment_service.preset("strategy5", t_init=14.0)
    assert treatment_service.supply_rate(schedule, 13.9) == 0.0
    assert treatment_service.supply_rate(None, 20.0) == 0.0


def test_pulsed_windows_strategy1():
    schedule = treatment_service.preset("strategy1", t_init=14.0)
    assert treatment_service.supply_rate(schedule, 14.0) == 10.0
    assert treatment_service.supply_rate(schedule, 19.0) == 10.0
    assert treatment_service.supply_rate(schedule, 24.0) == 0.0
    assert treatment_service.supply_rate(schedule, 44.0) == 0.0
    assert treatment_service.supply_rate(schedule, 64.0) == 10.0


def test_continuous_strategy5():
    schedule = treatment_service.preset("strategy5", t_init=14.0)
    for t in (14.0, 20.0, 63.9, 200.0):
        assert treatment_service.supply_rate(schedule, t) == 2.0


@pytest.mark.parametrize("name, dose", [
    ("strategy1", 100.0),
    ("strategy2", 100.0),
    ("strategy3", 100.0),
    ("strategy4", 100.0),
    ("strategy5", 100.0),
    ("strategy6", 250.0),
    ("strategy7", 500.0),
])
def test_dose_per_period(name, dose):
    assert treatment_service.period_dose(treatment_service.preset(name)) == pytest.approx(dose)


def test_zero_rate_schedule_gives_zero_dose():
    schedule = TreatmentSchedule(kind=ScheduleKind.CONTINUOUS, d_c=0.0)
    assert treatment_service.total_dose(schedule, (0.0, 100.0)) == 0.0
    assert treatment_service.total_dose(None, (0.0, 100.0)) == 0.0


def test_partial_window_dose():
    schedule = treatment_service.preset("strategy1", t_init=14.0)
    assert treatment_service.total_dose(schedule, (0.0, 19.0)) == pytest.approx(50.0)
    assert treatment_service.total_dose(schedule, (14.0, 114.0)) == pytest.approx(200.0)


def test_supply_is_constant_between_breakpoints():
    schedule = treatment_service.preset("strategy2", t_init=14.0)
    points = treatment_service.breakpoints(schedule, (0.0, 120.0))
    assert points[:4] == pytest.approx([14.0, 34.0, 64.0, 84.0])
    for lo, hi in zip(points[:-1], points[1:]):
        rates = {treatment_service.supply_rate(schedule, lo + f * (hi - lo)) for f in (0.0, 0.3, 0.7, 0.999)}
        assert len(rates) == 1


def test_rejects_unknown_preset_and_inverted_window():
    with pytest.raises(ValueError):
        treatment_service.preset("strategy9")
    with pytest.raises(ValueError):
        treatment_service.total_dose(treatment_service.preset("strategy1"), (10.0, 5.0))


def test_custom_schedules_from_config():
    pulsed = treatment_service.from_config(SimConfig(treatment="pulsed", d_p=4.0, t_on=5.0, t_off=15.0))
    assert pulsed.kind == ScheduleKind.PULSED and pulsed.period_length == 20.0
    assert treatment_service.period_dose(pulsed) == pytest.approx(20.0)
    continuous = treatment_service.from_config(SimConfig(treatment="continuous", d_c_rate=3.0))
    assert treatment_service.supply_rate(continuous, 20.0) == 3.0
    assert treatment_service.from_config(SimConfig(treatment="none")) is None
