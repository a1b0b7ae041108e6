"""
Serviço de esquemas de tratamento S_d(t)
"""
import logging
import math
from typing import Dict, Optional, Tuple

from models import ScheduleKind, SimConfig, TreatmentSchedule

logger = logging.getLogger(__name__)

PERIOD_LENGTH = 50.0

# Estratégias 1-7: (t_on, t_off, d_p) pulsadas e d_c contínuas
PRESETS: Dict[str, Dict] = {
    "strategy1": {"kind": ScheduleKind.PULSED, "t_on": 10.0, "t_off": 40.0, "d_p": 10.0},
    "strategy2": {"kind": ScheduleKind.PULSED, "t_on": 20.0, "t_off": 30.0, "d_p": 5.0},
    "strategy3": {"kind": ScheduleKind.PULSED, "t_on": 30.0, "t_off": 20.0, "d_p": 10.0 / 3.0},
    "strategy4": {"kind": ScheduleKind.PULSED, "t_on": 40.0, "t_off": 10.0, "d_p": 5.0 / 2.0},
    "strategy5": {"kind": ScheduleKind.CONTINUOUS, "d_c": 2.0},
    "strategy6": {"kind": ScheduleKind.CONTINUOUS, "d_c": 5.0},
    "strategy7": {"kind": ScheduleKind.CONTINUOUS, "d_c": 10.0},
}


class TreatmentService:
    """Serviço para suprimento de droga"""

    def preset(self, name: str, t_init: float = 14.0) -> TreatmentSchedule:
        if name not in PRESETS:
            raise ValueError(f"Estratégia desconhecida: {name}")
        values = dict(PRESETS[name])
        if values["kind"] == ScheduleKind.CONTINUOUS:
            values.update(t_on=PERIOD_LENGTH, t_off=0.0)
        return TreatmentSchedule(t_init=t_init, period_length=PERIOD_LENGTH, name=name, **values)

    def from_config(self, config: SimConfig) -> Optional[TreatmentSchedule]:
        """Esquema descrito pela configuração; None sem tratamento"""
        if config.treatment == "none":
            return None
        if config.treatment == "continuous":
            return TreatmentSchedule(kind=ScheduleKind.CONTINUOUS, t_init=config.t_init, d_c=config.d_c_rate,
                                     t_on=PERIOD_LENGTH, t_off=0.0, name="continuous")
        if config.treatment == "pulsed":
            return TreatmentSchedule(kind=ScheduleKind.PULSED, t_init=config.t_init, d_p=config.d_p,
                                     t_on=config.t_on, t_off=config.t_off,
                                     period_length=config.t_on + config.t_off, name="pulsed")
        return self.preset(config.treatment, config.t_init)

    def supply_rate(self, schedule: Optional[TreatmentSchedule], t: float) -> float:
        """S_d(t); janelas ligadas fechadas no início e abertas no fim"""
        if schedule is None or t < schedule.t_init:
            return 0.0
        if schedule.kind == ScheduleKind.CONTINUOUS:
            return schedule.d_c
        period = schedule.t_on + schedule.t_off
        phase = (t - schedule.t_init) % period
        return schedule.d_p if phase < schedule.t_on else 0.0

    def breakpoints(self, schedule: TreatmentSchedule, window: Tuple[float, float]):
        """Instantes em que S_d(t) pode mudar, dentro da janela"""
        a, b = window
        points = {schedule.t_init} if a <= schedule.t_init <= b else set()
        if schedule.kind == ScheduleKind.PULSED:
            period = schedule.t_on + schedule.t_off
            k = max(0, int(math.floor((a - schedule.t_init) / period)))
            while schedule.t_init + k * period <= b:
                start = schedule.t_init + k * period
                for p in (start, start + schedule.t_on):
                    if a <= p <= b:
                        points.add(p)
                k += 1
        return sorted(points)

    def total_dose(self, schedule: Optional[TreatmentSchedule], window: Tuple[float, float]) -> float:
        """Integral exata de S_d sobre a janela (função constante por partes)"""
        a, b = window
        if b < a:
            raise ValueError(f"Janela invertida: {window}")
        if schedule is None:
            return 0.0
        knots = [a] + [p for p in self.breakpoints(schedule, window) if a < p < b] + [b]
        total = 0.0
        for lo, hi in zip(knots[:-1], knots[1:]):
            total += self.supply_rate(schedule, 0.5 * (lo + hi)) * (hi - lo)
        return total

    def period_dose(self, schedule: TreatmentSchedule) -> float:
        """Dose de um período de tratamento a partir de t_init"""
        return self.total_dose(schedule, (schedule.t_init, schedule.t_init + schedule.period_length))


# Instância global do serviço de tratamento
treatment_service = TreatmentService()
