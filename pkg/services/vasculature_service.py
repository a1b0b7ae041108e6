"""
Serviço da rede angiogênica: pontas, brotos, ramificação e anastomose
"""
import logging
import math
from dataclasses import dataclass
from enum import IntEnum
from typing import Dict, List, Optional, Tuple

import numpy as np

from models import (
    AngiogenicNetwork,
    CellId,
    GridGeometry,
    MoveCoefficients,
    NetworkEvent,
    NetworkEventRecord,
    ScalarField,
    SimConfig,
    StepSizeError,
    TipCell,
)
from services.field_service import field_service

logger = logging.getLogger(__name__)

Square = Tuple[int, int]


class Move(IntEnum):
    """Movimentos da ponta, na ordem de P_0..P_4"""
    STAY = 0
    LEFT = 1
    RIGHT = 2
    DOWN = 3
    UP = 4


OFFSETS = {
    Move.STAY: (0, 0),
    Move.LEFT: (-1, 0),
    Move.RIGHT: (1, 0),
    Move.DOWN: (0, -1),
    Move.UP: (0, 1),
}

ORTHOGONAL = ((-1, 0), (1, 0), (0, -1), (0, 1))


@dataclass(frozen=True)
class TopBand:
    """Região alvo y >= y_min"""
    y_min: float

    def contains(self, points: np.ndarray) -> np.ndarray:
        return points[:, 1] >= self.y_min


@dataclass(frozen=True)
class Disc:
    """Região alvo: disco que envolve o tumor"""
    cx: float
    cy: float
    radius: float

    def contains(self, points: np.ndarray) -> np.ndarray:
        return (points[:, 0] - self.cx) ** 2 + (points[:, 1] - self.cy) ** 2 <= self.radius ** 2


class VasculatureService:
    """Serviço para as células de ponta e a rede de vasos"""

    def initial_network(self, geometry: GridGeometry, n_tips: int = 6, y0: float = 0.05,
                        t: float = 0.0) -> AngiogenicNetwork:
        """Pontas iniciais em x = (2i−1)/(2·n_tips), y = y0"""
        network = AngiogenicNetwork(geometry=geometry)
        for i in range(1, n_tips + 1):
            square = geometry.square_of((2 * i - 1) / (2.0 * n_tips), y0)
            tip = TipCell(square=square, id=CellId(i), born_at=t)
            self._register_tip(network, tip, t)
            network.owners.setdefault(square, tip.id)
        return network

    @staticmethod
    def _register_tip(network: AngiogenicNetwork, tip: TipCell, t: float):
        network.tips.append(tip)
        network.trajectories[tip.id] = [tip.square]
        network.windows[tip.id] = (t, None)

    @staticmethod
    def _close(network: AngiogenicNetwork, tip: TipCell, t: float):
        start, _ = network.windows.get(tip.id, (tip.born_at, None))
        network.windows[tip.id] = (start, t)

    def _log(self, network: AngiogenicNetwork, t: float, event: NetworkEvent, tip: TipCell):
        network.events.append(NetworkEventRecord(t, event, tip.id, tip.square))
        logger.debug(f"t={t:.3f} {event.value} ponta {tip.id} em {tip.square}")

    # ==================== MOVIMENTO ====================

    def tip_move(self, tip: TipCell, network: AngiogenicNetwork, c_field: ScalarField, dt: float,
                 rng: np.random.Generator, params: SimConfig, t: float = 0.0, forced: bool = False,
                 coefficients: Optional[MoveCoefficients] = None) -> Optional[Square]:
        """Sorteia um movimento com p̃_0..p̃_4; retorna o quadrado em que entrou"""
        if not tip.active:
            return None
        if coefficients is None:
            coefficients = field_service.move_coefficients(c_field, tip.square[0], tip.square[1], dt, params)
        probs = coefficients.as_array()
        geometry = network.geometry
        i, j = tip.square
        for move, (di, dj) in OFFSETS.items():
            if not geometry.contains((i + di, j + dj)):
                probs[move] = 0.0
        if forced:
            probs[Move.STAY] = 0.0
        total = probs.sum()
        if total <= 0.0:
            return None

        cumulative = np.cumsum(probs)
        move = Move(min(int(np.searchsorted(cumulative, rng.random() * total, side="right")), 4))
        if move == Move.STAY:
            return None

        trail = network.trajectories.setdefault(tip.id, [tip.square])
        # trail[-1] é o quadrado atual; trail[-2], o que a ponta acabou de deixar
        departed = trail[-2] if len(trail) >= 2 else None
        di, dj = OFFSETS[move]
        entered = (i + di, j + dj)
        tip.square = entered
        trail.append(entered)
        self.check_anastomosis(tip, entered, network, rng, t=t, previous=departed)
        return entered

    def check_anastomosis(self, tip: TipCell, entered_square: Square, network: AngiogenicNetwork,
                          rng: np.random.Generator, t: float = 0.0,
                          previous: Optional[Square] = None) -> TipCell:
        """Fusão ao entrar em quadrado já vascularizado

        `previous` é o quadrado de onde a ponta saiu no movimento anterior;
        voltar a ele não conta como fusão.
        """
        owner = network.owners.get(entered_square)
        if owner is None:
            network.owners[entered_square] = tip.id
            return tip
        if entered_square == previous:
            return tip

        if owner == tip.id:
            tip.active = False
            network.self_loops += 1
            self._close(network, tip, t)
            self._log(network, t, NetworkEvent.SELF_LOOP, tip)
            return tip

        other = next((b for b in network.tips if b.active and b.id == owner), None)
        loser = tip
        if other is not None and rng.random() < 0.5:
            loser = other
        loser.active = False
        network.anastomoses += 1
        self._close(network, loser, t)
        self._log(network, t, NetworkEvent.ANASTOMOSIS, loser)
        return tip

    def move_tips(self, network: AngiogenicNetwork, c_field: ScalarField, params: SimConfig,
                  t: float, rng: np.random.Generator) -> float:
        """Subpassos de movimento das pontas num macro-passo; retorna o subpasso final usado

        Se algum nó de ponta der P_0 < 0, o subpasso é dividido por dois para o
        restante do macro-passo, até max_tip_halvings vezes.
        """
        total = params.tip_dt * params.tip_substeps
        dt_sub = params.tip_dt
        elapsed = 0.0
        halvings = 0
        while elapsed < total - 1e-12:
            dt_sub = min(dt_sub, total - elapsed)
            tips = sorted((b for b in network.tips if b.active), key=lambda b: b.id)
            try:
                coefficients = [field_service.move_coefficients(c_field, b.square[0], b.square[1], dt_sub, params)
                                for b in tips]
            except StepSizeError as e:
                halvings += 1
                if halvings > params.max_tip_halvings:
                    logger.error(f"Erro ao mover pontas: subpasso {dt_sub:.3g} ainda inválido ({e})")
                    raise
                dt_sub /= 2.0
                logger.warning(f"P_0 < 0 no nó {e.node}; subpasso das pontas reduzido para {dt_sub:.4g}")
                continue
            for tip, coeff in zip(tips, coefficients):
                self.tip_move(tip, network, c_field, dt_sub, rng, params, t=t, coefficients=coeff)
            elapsed += dt_sub
        return dt_sub

    # ==================== RAMIFICAÇÃO ====================

    def free_orthogonal(self, square: Square, network: AngiogenicNetwork) -> List[Square]:
        i, j = square
        return [(i + di, j + dj) for di, dj in ORTHOGONAL
                if network.geometry.contains((i + di, j + dj)) and (i + di, j + dj) not in network.owners]

    def branch_probability(self, tip: TipCell, c_field: ScalarField, c_br: float, dt: float) -> float:
        """1 − exp(−λ_br·dt), λ_br = c_br·c(ponta)/max c"""
        c_max = float(c_field.values.max())
        if c_max <= 0.0:
            return 0.0
        rate = c_br * float(c_field.values[tip.square]) / c_max
        return -math.expm1(-max(rate, 0.0) * dt)

    def try_branch(self, tip: TipCell, network: AngiogenicNetwork, c_field: ScalarField, psi: float,
                   c_br: float, dt: float, rng: np.random.Generator,
                   t: float = 0.0) -> Optional[Tuple[TipCell, TipCell]]:
        """Ramifica se idade > ψ e há quadrado ortogonal livre"""
        if not tip.active or tip.age <= psi:
            return None
        free = self.free_orthogonal(tip.square, network)
        if not free:
            return None
        if rng.random() >= self.branch_probability(tip, c_field, c_br, dt):
            return None

        target = free[int(rng.integers(len(free)))]
        self._log(network, t, NetworkEvent.BRANCH, tip)
        tip.active = False
        self._close(network, tip, t)
        network.tips.remove(tip)

        tip1 = TipCell(square=tip.square, id=tip.id.daughter(1), born_at=t)
        tip2 = TipCell(square=target, id=tip.id.daughter(2), born_at=t)
        self._register_tip(network, tip1, t)
        self._register_tip(network, tip2, t)
        network.owners[target] = tip2.id
        network.branches += 1
        return tip1, tip2

    def branch_all(self, network: AngiogenicNetwork, c_field: ScalarField, params: SimConfig,
                   t: float, rng: np.random.Generator) -> int:
        fired = 0
        for tip in sorted((b for b in network.tips if b.active), key=lambda b: b.id):
            if self.try_branch(tip, network, c_field, params.psi, params.c_br, params.dt, rng, t):
                fired += 1
        return fired

    def age_tips(self, network: AngiogenicNetwork, dt: float):
        for tip in network.tips:
            if tip.active:
                tip.age += dt

    # ==================== PROLIFERAÇÃO ENDOTELIAL ====================

    @staticmethod
    def intervals_crossed(t_prev: float, t: float, interval: float) -> int:
        """Número de múltiplos de `interval` em (t_prev, t]"""
        eps = 1e-9
        return max(0, int(math.floor(t / interval + eps)) - int(math.floor(t_prev / interval + eps)))

    def endothelial_proliferation(self, network: AngiogenicNetwork, t_prev: float, t: float,
                                  c_field: ScalarField, params: SimConfig,
                                  rng: np.random.Generator) -> int:
        """Cada intervalo completo força um avanço de cada ponta ativa"""
        crossings = self.intervals_crossed(t_prev, t, params.proliferation_interval)
        extensions = 0
        for _ in range(crossings):
            for tip in sorted((b for b in network.tips if b.active), key=lambda b: b.id):
                if not tip.active:
                    continue
                dt_try = params.tip_dt
                for halvings in range(params.max_tip_halvings + 1):
                    try:
                        coefficients = field_service.move_coefficients(c_field, tip.square[0], tip.square[1],
                                                                       dt_try, params)
                        break
                    except StepSizeError as e:
                        if halvings == params.max_tip_halvings:
                            logger.error(f"Erro na proliferação endotelial: ponta {tip.id} sem subpasso "
                                         f"válido após {halvings} reduções ({e})")
                            raise
                        dt_try /= 2.0
                if self.tip_move(tip, network, c_field, dt_try, rng, params, t=t, forced=True,
                                 coefficients=coefficients) is not None:
                    extensions += 1
        network.forced_extensions += extensions
        return extensions

    # ==================== CONSULTAS ====================

    def vascularization_complete(self, network: AngiogenicNetwork, target_region) -> bool:
        if not network.owners:
            return False
        return bool(np.any(target_region.contains(network.vessel_centers())))

    def vessel_profile(self, network: AngiogenicNetwork) -> Dict[float, int]:
        """Número de quadrados de vaso por fatia horizontal y"""
        counts = np.zeros(network.geometry.n_y, dtype=np.int64)
        for _, j in network.owners:
            counts[j] += 1
        _, ys = network.geometry.coords()
        return {float(y): int(n) for y, n in zip(ys, counts)}


# Instância global do serviço de vasculatura
vasculature_service = VasculatureService()
