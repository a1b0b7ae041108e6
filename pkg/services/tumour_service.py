"""
Serviço de agentes tumorais: percepção, classificação, divisão, morte e mecânica
"""
import logging
import math
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Set, Tuple

import numpy as np
from scipy.spatial import cKDTree

from models import (
    CellId,
    GridGeometry,
    OxygenClass,
    OxygenState,
    PhenotypeTraits,
    ScalarField,
    SimConfig,
    TumourCell,
)
from services.field_service import field_service

logger = logging.getLogger(__name__)

Square = Tuple[int, int]

NEIGHBOUR_OFFSETS = ((-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1))


class OccupancyIndex:
    """Mapa quadrado -> células residentes, com os quadrados de vaso"""

    def __init__(self, geometry: GridGeometry, vessel_squares: Optional[Dict[Square, object]] = None):
        self.geometry = geometry
        self.residents: Dict[Square, Set[CellId]] = {}
        self.location: Dict[CellId, Square] = {}
        # Referência viva ao conjunto de vasos da rede
        self.vessel_squares = vessel_squares if vessel_squares is not None else {}

    def add(self, cell: TumourCell):
        square = self.geometry.square_of(cell.x, cell.y)
        self.residents.setdefault(square, set()).add(cell.id)
        self.location[cell.id] = square

    def remove(self, cell: TumourCell):
        square = self.location.pop(cell.id, None)
        if square is None:
            return
        ids = self.residents.get(square)
        if ids is not None:
            ids.discard(cell.id)
            if not ids:
                del self.residents[square]

    def rebuild(self, cells: Iterable[TumourCell]):
        self.residents.clear()
        self.location.clear()
        for cell in cells:
            self.add(cell)

    def is_free(self, square: Square) -> bool:
        return (self.geometry.contains(square) and square not in self.residents
                and square not in self.vessel_squares)

    def free_neighbours(self, square: Square) -> List[Square]:
        i, j = square
        return [(i + di, j + dj) for di, dj in NEIGHBOUR_OFFSETS if self.is_free((i + di, j + dj))]

    def consistent_with(self, cells: Sequence[TumourCell]) -> bool:
        if len(self.location) != len(cells):
            return False
        return all(self.location.get(c.id) == self.geometry.square_of(c.x, c.y) for c in cells)


class DensityIndex:
    """Retrato (cKDTree) de células e vasos para contagem de vizinhança F

    Mudanças feitas durante a fase (divisões, apoptose) entram como pontos
    com peso +1/-1, agrupados em baldes de lado igual ao raio.
    """

    def __init__(self, cell_points: np.ndarray, vessel_points: np.ndarray, radius: float):
        self.radius = radius
        self._cells = cKDTree(cell_points) if len(cell_points) else None
        self._vessels = cKDTree(vessel_points) if len(vessel_points) else None
        self._changes: Dict[Tuple[int, int], List[Tuple[float, float, int]]] = {}

    def _bucket(self, x: float, y: float) -> Tuple[int, int]:
        return int(math.floor(x / self.radius)), int(math.floor(y / self.radius))

    def _record(self, point: Tuple[float, float], weight: int):
        x, y = point
        self._changes.setdefault(self._bucket(x, y), []).append((x, y, weight))

    def add(self, point: Tuple[float, float]):
        self._record(point, 1)

    def discard(self, point: Tuple[float, float]):
        self._record(point, -1)

    def count(self, point: Tuple[float, float]) -> int:
        total = 0
        for tree in (self._cells, self._vessels):
            if tree is not None:
                total += int(tree.query_ball_point(point, self.radius, return_length=True))
        if self._changes:
            px, py = point
            bx, by = self._bucket(px, py)
            r2 = self.radius * self.radius
            for dx in (-1, 0, 1):
                for dy in (-1, 0, 1):
                    for x, y, w in self._changes.get((bx + dx, by + dy), ()):
                        if (x - px) ** 2 + (y - py) ** 2 <= r2:
                            total += w
        return total


@dataclass
class RelaxReport:
    converged: bool
    iterations: int
    worst_distance: float


class TumourService:
    """Serviço para o ciclo de vida das células tumorais"""

    # ==================== POPULAÇÃO INICIAL ====================

    def initial_population(self, config: SimConfig, rng: np.random.Generator) -> List[TumourCell]:
        """N_0 células em centros de quadrados distintos dentro do disco inicial"""
        geometry = config.geometry()
        radius = config.initial_radius_factor * config.r_c
        cx, cy = config.tumour_center_x, config.tumour_center_y
        x, y = geometry.mesh()
        inside = np.argwhere((x - cx) ** 2 + (y - cy) ** 2 <= radius ** 2)
        if len(inside) < config.initial_cells:
            raise ValueError(
                f"Disco inicial comporta {len(inside)} células; pedidas {config.initial_cells}"
            )
        chosen = rng.choice(len(inside), size=config.initial_cells, replace=False)
        squares = sorted(tuple(int(v) for v in inside[k]) for k in chosen)
        maturation = rng.uniform(9.0 / 16.0, 11.0 / 16.0, size=len(squares))
        ages = rng.uniform(0.0, maturation)

        cells = []
        for root, (square, a_mat, age) in enumerate(zip(squares, maturation, ages), start=1):
            traits = PhenotypeTraits(
                oxygen_uptake=config.rho_o,
                proliferation_rate=math.log(2.0) / float(a_mat),
                death_threshold=config.th_death,
            )
            px, py = geometry.center(square)
            cells.append(TumourCell(
                x=px, y=py, id=CellId(root), traits=traits, base=traits.copy(),
                maturation=float(a_mat), age=float(age),
            ))
        logger.info(f"População inicial: {len(cells)} células em ({cx}, {cy}), raio {radius}")
        return cells

    # ==================== PERCEPÇÃO E ESTADO ====================

    def sense(self, cell: TumourCell, oxygen_field: ScalarField, drug_field: ScalarField,
              dt: float, d_floor: float = 1e-3) -> TumourCell:
        """Lê o e d na posição da célula; acumula droga e tempo de exposição"""
        cell.oxygen = float(field_service.sample(oxygen_field, cell.x, cell.y))
        local = float(field_service.sample(drug_field, cell.x, cell.y))
        cell.local_drug = local
        cell.drug += local * dt
        if local > d_floor:
            cell.exposure_time += dt
        return cell

    def sense_all(self, cells: Sequence[TumourCell], oxygen_field: ScalarField, drug_field: ScalarField,
                  dt: float, d_floor: float = 1e-3):
        """sense vetorizado sobre a população"""
        if not cells:
            return
        xs = np.fromiter((c.x for c in cells), dtype=np.float64, count=len(cells))
        ys = np.fromiter((c.y for c in cells), dtype=np.float64, count=len(cells))
        oxygen = field_service.sample(oxygen_field, xs, ys)
        drug = field_service.sample(drug_field, xs, ys)
        for cell, o, d in zip(cells, oxygen.tolist(), drug.tolist()):
            cell.oxygen = o
            cell.local_drug = d
            cell.drug += d * dt
            if d > d_floor:
                cell.exposure_time += dt

    def classify(self, cell: TumourCell, o_apop: float = 0.05, o_hyp: float = 0.25) -> OxygenClass:
        if not (0 < o_apop < o_hyp < 1):
            raise ValueError(f"Limiares inválidos: o_apop={o_apop}, o_hyp={o_hyp}")
        if cell.oxygen <= o_apop:
            return OxygenClass.APOPTOSIS
        if cell.oxygen <= o_hyp:
            cell.state = OxygenState.HYPOXIC
            return OxygenClass.HYPOXIC
        cell.state = OxygenState.NORMOXIC
        return OxygenClass.NORMOXIC

    def uptake_rate(self, cell: TumourCell, q_h: float) -> float:
        """Consumo de oxigênio da célula; hipóxicas consomem q_h·ρ_o^a"""
        rate = cell.traits.oxygen_uptake
        return rate * q_h if cell.state == OxygenState.HYPOXIC else rate

    def update_damage(self, cell: TumourCell, local_drug: float, p_r: float, dt: float) -> TumourCell:
        """a^dam ← a^dam + d·dt − p_r·a^dam·dt, com piso em 0"""
        if not (0.0 <= p_r <= 1.0):
            raise ValueError(f"p_r fora de [0, 1]: {p_r}")
        if dt <= 0:
            raise ValueError(f"dt deve ser > 0 (obtido {dt})")
        cell.damage = max(0.0, cell.damage + local_drug * dt - p_r * cell.damage * dt)
        return cell

    def check_death(self, cell: TumourCell) -> bool:
        """True se o dano excede o limiar de morte"""
        return cell.damage > cell.traits.death_threshold

    def advance_age(self, cell: TumourCell, dt: float) -> TumourCell:
        if cell.state == OxygenState.NORMOXIC:
            cell.age += dt
        return cell

    # ==================== PROLIFERAÇÃO ====================

    def local_density(self, point: Tuple[float, float], cells: Sequence[TumourCell],
                      vessels: Sequence[Tuple[float, float]], sensing_radius: float) -> int:
        """Número de células e vasos com centro a até sensing_radius do ponto"""
        if sensing_radius <= 0:
            raise ValueError(f"Raio de percepção deve ser > 0 (obtido {sensing_radius})")
        px, py = point
        r2 = sensing_radius * sensing_radius
        total = 0
        if len(cells):
            xs = np.array([c.x for c in cells])
            ys = np.array([c.y for c in cells])
            total += int(np.count_nonzero((xs - px) ** 2 + (ys - py) ** 2 <= r2))
        if len(vessels):
            v = np.asarray(vessels, dtype=np.float64).reshape(-1, 2)
            total += int(np.count_nonzero((v[:, 0] - px) ** 2 + (v[:, 1] - py) ** 2 <= r2))
        return total

    def density_index(self, cells: Sequence[TumourCell], vessel_points: np.ndarray,
                      sensing_radius: float) -> DensityIndex:
        points = np.array([[c.x, c.y] for c in cells]) if cells else np.empty((0, 2))
        return DensityIndex(points, np.asarray(vessel_points).reshape(-1, 2), sensing_radius)

    def try_divide(self, cell: TumourCell, occupancy: OccupancyIndex, density: int,
                   rng: np.random.Generator, f_max: int = 10,
                   oxygen_field: Optional[ScalarField] = None,
                   mutate: Optional[Callable[[TumourCell], None]] = None
                   ) -> Optional[Tuple[TumourCell, TumourCell]]:
        """Divisão simétrica se madura, com espaço livre e F < F_max"""
        if cell.state != OxygenState.NORMOXIC or cell.age < cell.maturation or density >= f_max:
            return None
        square = occupancy.location.get(cell.id) or occupancy.geometry.square_of(cell.x, cell.y)
        free = occupancy.free_neighbours(square)
        if not free:
            return None

        target = free[int(rng.integers(len(free)))]
        tx, ty = occupancy.geometry.center(target)
        daughters = []
        for digit, (x, y) in ((1, (cell.x, cell.y)), (2, (tx, ty))):
            oxygen = cell.oxygen
            if oxygen_field is not None:
                oxygen = float(field_service.sample(oxygen_field, x, y))
            daughter = TumourCell(
                x=x, y=y, id=cell.id.daughter(digit),
                traits=cell.traits.copy(), base=cell.base.copy(), maturation=cell.maturation,
                oxygen=oxygen, drug=cell.drug / 2.0, damage=cell.damage / 2.0, age=0.0,
                state=cell.state, exposure_time=cell.exposure_time, local_drug=cell.local_drug,
            )
            if mutate is not None:
                mutate(daughter)
            daughters.append(daughter)

        occupancy.remove(cell)
        for daughter in daughters:
            occupancy.add(daughter)
        logger.debug(f"Divisão de {cell.id} -> {daughters[0].id}, {daughters[1].id}")
        return daughters[0], daughters[1]

    # ==================== MECÂNICA ====================

    @staticmethod
    def _reflect(values: np.ndarray) -> np.ndarray:
        """Paredes refletoras em [0, 1]"""
        return 1.0 - np.abs(1.0 - np.abs(values))

    def brownian_step(self, cell: TumourCell, epsilon1: float, dt: float,
                      rng: np.random.Generator) -> TumourCell:
        """Passo de Euler-Maruyama: x += sqrt(dt)·ε_1·Z"""
        if dt <= 0:
            raise ValueError(f"dt deve ser > 0 (obtido {dt})")
        z = rng.standard_normal(2)
        pos = self._reflect(np.array([cell.x, cell.y]) + math.sqrt(dt) * epsilon1 * z)
        cell.x, cell.y = float(pos[0]), float(pos[1])
        return cell

    def brownian_all(self, cells: Sequence[TumourCell], epsilon1: float, dt: float,
                     rng: np.random.Generator):
        """brownian_step vetorizado; sorteios na ordem da lista"""
        if not cells:
            return
        z = rng.standard_normal((len(cells), 2))
        pos = np.array([[c.x, c.y] for c in cells]) + math.sqrt(dt) * epsilon1 * z
        pos = self._reflect(pos)
        for cell, (x, y) in zip(cells, pos.tolist()):
            cell.x, cell.y = x, y

    def relax_overlaps(self, cells: Sequence[TumourCell], vessels: Sequence[Tuple[float, float]],
                       r_c: float, max_iters: int = 20, tol: float = 0.05,
                       rng: Optional[np.random.Generator] = None) -> RelaxReport:
        """Afasta pares a menos de R_c·(2 − tol) até 2·R_c; vasos ficam fixos"""
        rng = rng if rng is not None else np.random.default_rng(0)
        contact = 2.0 * r_c
        cutoff = r_c * (2.0 - tol)
        if not cells:
            return RelaxReport(True, 0, math.inf)

        pos = np.array([[c.x, c.y] for c in cells])
        vessel_pts = np.asarray(vessels, dtype=np.float64).reshape(-1, 2)
        vessel_tree = cKDTree(vessel_pts) if len(vessel_pts) else None

        converged = False
        iterations = 0
        worst = math.inf
        for iterations in range(1, max_iters + 1):
            shift = np.zeros_like(pos)
            worst = math.inf

            pairs = cKDTree(pos).query_pairs(cutoff, output_type="ndarray")
            if len(pairs):
                pairs = pairs[np.lexsort((pairs[:, 1], pairs[:, 0]))]
                delta = pos[pairs[:, 0]] - pos[pairs[:, 1]]
                dist = np.hypot(delta[:, 0], delta[:, 1])
                keep = dist < cutoff
                pairs, delta, dist = pairs[keep], delta[keep], dist[keep]
                if len(pairs):
                    worst = min(worst, float(dist.min()))
                    direction = self._directions(delta, dist, rng)
                    half = (0.5 * (contact - dist))[:, None] * direction
                    np.add.at(shift, pairs[:, 0], half)
                    np.add.at(shift, pairs[:, 1], -half)

            if vessel_tree is not None:
                hits = vessel_tree.query_ball_point(pos, cutoff)
                for a, near in enumerate(hits):
                    for v in sorted(near):
                        delta = pos[a] - vessel_pts[v]
                        dist = math.hypot(delta[0], delta[1])
                        if dist >= cutoff:
                            continue
                        worst = min(worst, dist)
                        direction = self._directions(delta[None, :], np.array([dist]), rng)[0]
                        shift[a] += (contact - dist) * direction

            if not shift.any():
                converged = True
                iterations -= 1
                break
            pos = self._reflect(pos + shift)
        else:
            pairs = cKDTree(pos).query_pairs(cutoff, output_type="ndarray")
            close_vessel = False
            if vessel_tree is not None:
                close_vessel = any(vessel_tree.query_ball_point(pos, cutoff, return_length=True) > 0)
            converged = len(pairs) == 0 and not close_vessel

        for cell, (x, y) in zip(cells, pos.tolist()):
            cell.x, cell.y = x, y
        if not converged:
            logger.warning(f"Relaxação de sobreposições não convergiu em {max_iters} iterações")
        return RelaxReport(converged, iterations, worst)

    @staticmethod
    def _directions(delta: np.ndarray, dist: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Unitários ao longo da linha dos centros; pares coincidentes sorteiam um ângulo"""
        out = np.empty_like(delta)
        coincident = dist < 1e-12
        safe = ~coincident
        out[safe] = delta[safe] / dist[safe, None]
        n = int(coincident.sum())
        if n:
            theta = rng.uniform(0.0, 2.0 * math.pi, size=n)
            out[coincident] = np.column_stack([np.cos(theta), np.sin(theta)])
        return out


# Instância global do serviço de células tumorais
tumour_service = TumourService()
