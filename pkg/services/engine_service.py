"""
Motor da simulação: macro-passo, marcos e execução completa
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np

from config import settings
from models import (
    AngiogenicNetwork,
    FieldKind,
    GridGeometry,
    InvariantError,
    MilestoneSummary,
    MutationMode,
    Outcome,
    OxygenClass,
    OxygenState,
    PopulationStats,
    RunSummary,
    ScalarField,
    Scenario,
    SimConfig,
    SimulationError,
    StatsRow,
    TreatmentSchedule,
    TumourCell,
)
from services.evolution_service import evolution_service, mutation_rng
from services.field_service import field_service
from services.output_service import RunWriter, output_service
from services.treatment_service import treatment_service
from services.tumour_service import OccupancyIndex, tumour_service
from services.vasculature_service import Disc, TopBand, vasculature_service

logger = logging.getLogger(__name__)

# Ordem do fluxograma; passos 4 e 5 juntos porque a anastomose é checada a cada movimento
DEFAULT_PHASES = [
    "tumour_mechanics",
    "record_trajectories",
    "taf",
    "tip_movement",
    "tip_ageing",
    "branching",
    "endothelial_proliferation",
    "sense",
    "drug_oxygen",
    "cell_lifecycle",
    "statistics",
]

BULK_DEATH_DROP = 0.5


@dataclass
class SimState:
    """Estado completo entre macro-passos"""
    config: SimConfig
    geometry: GridGeometry
    taf: ScalarField
    drug: ScalarField
    oxygen: ScalarField
    cells: List[TumourCell]
    occupancy: OccupancyIndex
    network: AngiogenicNetwork
    schedule: Optional[TreatmentSchedule]
    rng: np.random.Generator
    stats: PopulationStats
    t: float = 0.0
    step: int = 0
    warnings: List[Tuple[float, str, str]] = field(default_factory=list)
    front: List[Tuple[float, float]] = field(default_factory=list)
    vascularization_time: Optional[float] = None
    mutations: int = 0

    @property
    def t_next(self) -> float:
        return (self.step + 1) * self.config.dt


def _sort_key(cell: TumourCell):
    return cell.id


class EngineService:
    """Serviço que orquestra o macro-passo e a execução"""

    def __init__(self, phases: Optional[List[str]] = None):
        self.phases = list(phases or DEFAULT_PHASES)

    # ==================== ESTADO INICIAL ====================

    def initial_state(self, config: SimConfig, n_tips: int = 6) -> SimState:
        """Estado em t=0; n_tips=0 começa sem rede de vasos"""
        geometry = config.geometry()
        rng = np.random.default_rng(config.seed)
        taf = field_service.init_linear_taf(config.taf_k, geometry)
        drug = ScalarField.zeros(geometry, FieldKind.DRUG)
        oxygen = ScalarField.full(geometry, 1.0, FieldKind.OXYGEN)
        network = vasculature_service.initial_network(geometry, n_tips=n_tips)

        cells: List[TumourCell] = []
        if config.has_tumour:
            cells = tumour_service.initial_population(config, rng)
            resistance = config.resistance_config()
            evolution_service.init_preexisting(cells, resistance.preexisting_fraction, config.th_multi,
                                               rng, config.th_death)
        occupancy = OccupancyIndex(geometry, network.owners)
        occupancy.rebuild(cells)

        schedule = treatment_service.from_config(config) if config.has_tumour else None
        state = SimState(
            config=config, geometry=geometry, taf=taf, drug=drug, oxygen=oxygen, cells=cells,
            occupancy=occupancy, network=network, schedule=schedule, rng=rng,
            stats=PopulationStats(th_death=config.th_death, t_init=config.t_init),
        )
        state.front.append((0.0, network.max_vessel_y()))
        self._append_stats(state, 0.0)
        return state

    # ==================== FASES ====================

    def _phase_tumour_mechanics(self, state: SimState):
        cfg = state.config
        if not state.cells:
            return
        state.cells.sort(key=_sort_key)
        tumour_service.brownian_all(state.cells, cfg.epsilon1, cfg.dt, state.rng)
        report = tumour_service.relax_overlaps(state.cells, state.network.vessel_centers(), cfg.r_c,
                                               cfg.relax_max_iters, cfg.relax_tol, state.rng)
        if not report.converged:
            state.warnings.append((state.t, "relaxation", f"sem convergência em {cfg.relax_max_iters} iterações"))
        state.occupancy.rebuild(state.cells)

    def _phase_record_trajectories(self, state: SimState):
        network = state.network
        for tip in network.tips:
            if tip.active and tip.square not in network.owners:
                self._abort(state, f"ponta {tip.id} fora do conjunto de vasos em {tip.square}")
        state.front.append((state.t, network.max_vessel_y()))

    def _phase_taf(self, state: SimState):
        cfg = state.config
        if cfg.scenario == Scenario.ANGIO_ONLY:
            return
        hypoxic = [c.position for c in state.cells if c.state == OxygenState.HYPOXIC]
        state.taf = field_service.step_taf(state.taf, hypoxic, state.network.vessel_centers(), cfg, cfg.dt, state.t)

    def _phase_tip_movement(self, state: SimState):
        dt_used = vasculature_service.move_tips(state.network, state.taf, state.config, state.t, state.rng)
        if dt_used < state.config.tip_dt:
            state.warnings.append((state.t, "tip_substep", f"subpasso reduzido para {dt_used:.6g}"))

    def _phase_tip_ageing(self, state: SimState):
        vasculature_service.age_tips(state.network, state.config.dt)

    def _phase_branching(self, state: SimState):
        vasculature_service.branch_all(state.network, state.taf, state.config, state.t, state.rng)

    def _phase_endothelial_proliferation(self, state: SimState):
        vasculature_service.endothelial_proliferation(state.network, state.t, state.t_next, state.taf,
                                                      state.config, state.rng)

    def _phase_sense(self, state: SimState):
        cfg = state.config
        state.cells.sort(key=_sort_key)
        tumour_service.sense_all(state.cells, state.oxygen, state.drug, cfg.dt, cfg.d_floor)

    def _phase_drug_oxygen(self, state: SimState):
        cfg = state.config
        vessels = state.network.vessel_centers()
        positions = [c.position for c in state.cells]
        supply = treatment_service.supply_rate(state.schedule, state.t)
        state.drug = field_service.step_drug(state.drug, positions, vessels, supply, cfg, cfg.dt, state.t)
        sites = [(c.position, tumour_service.uptake_rate(c, cfg.q_h)) for c in state.cells]
        state.oxygen = field_service.step_oxygen(state.oxygen, sites, vessels, cfg, cfg.dt, state.t)

    def _phase_cell_lifecycle(self, state: SimState):
        """Classificação, apoptose, idade, divisão, dano, exposição e morte por dano"""
        cfg = state.config
        if not state.cells:
            return
        mutation = cfg.mutation_config()
        resistance = cfg.resistance_config()
        density = tumour_service.density_index(state.cells, state.network.vessel_centers(), cfg.sensing_radius)

        def mutate(daughter: TumourCell):
            if evolution_service.maybe_mutate(daughter, mutation, daughter.local_drug, state.t,
                                              mutation_rng(cfg.seed, daughter.id)):
                state.mutations += 1

        survivors: List[TumourCell] = []
        doomed: List[TumourCell] = []
        for cell in sorted(state.cells, key=_sort_key):
            verdict = tumour_service.classify(cell, cfg.o_apop, cfg.o_hyp)
            if verdict == OxygenClass.APOPTOSIS:
                state.occupancy.remove(cell)
                density.discard(cell.position)
                continue
            tumour_service.advance_age(cell, cfg.dt)

            group = [cell]
            if verdict == OxygenClass.NORMOXIC:
                daughters = tumour_service.try_divide(
                    cell, state.occupancy, density.count(cell.position), state.rng, cfg.f_max,
                    state.oxygen, mutate if mutation.mode != MutationMode.NONE else None,
                )
                if daughters:
                    group = list(daughters)
                    density.discard(cell.position)
                    for daughter in daughters:
                        density.add(daughter.position)

            for member in group:
                tumour_service.update_damage(member, member.local_drug, cfg.p_r, cfg.dt)
                if resistance.exposure_enabled:
                    evolution_service.exposure_resistance_update(member, resistance)
                (doomed if tumour_service.check_death(member) else survivors).append(member)

        for cell in doomed:
            state.occupancy.remove(cell)
        survivors.sort(key=_sort_key)
        state.cells = survivors

    def _phase_statistics(self, state: SimState):
        state.step += 1
        state.t = state.step * state.config.dt
        self._check_invariants(state)
        self._append_stats(state, state.t)

    # ==================== MACRO-PASSO ====================

    def phase(self, name: str) -> Callable[[SimState], None]:
        return getattr(self, f"_phase_{name}")

    def macro_step(self, state: SimState) -> SimState:
        for name in self.phases:
            self.phase(name)(state)
        return state

    def target_region(self, state: SimState):
        cfg = state.config
        if not cfg.has_tumour:
            return TopBand(1.0 - 2.0 * cfg.r_c)
        cx, cy = cfg.tumour_center_x, cfg.tumour_center_y
        radius = cfg.initial_radius_factor * cfg.r_c
        if state.cells:
            radius = max(math.hypot(c.x - cx, c.y - cy) for c in state.cells) + cfg.r_c
        return Disc(cx, cy, radius)

    def _append_stats(self, state: SimState, t: float):
        cells = state.cells
        n_hyp = sum(1 for c in cells if c.state == OxygenState.HYPOXIC)
        n_norm = sum(1 for c in cells if c.state == OxygenState.NORMOXIC)
        damage = np.array([c.damage for c in cells]) if cells else np.zeros(0)
        resistance = evolution_service.resistance_summary(cells, state.config.th_death)
        network = state.network

        vascularized = vasculature_service.vascularization_complete(network, self.target_region(state))
        if vascularized and state.vascularization_time is None:
            state.vascularization_time = t
            logger.info(f"Vascularização completa em t={t:.4g} ({t * 16.0:.4g} h)")

        state.stats.append(StatsRow(
            t=t, n=len(cells), n_normoxic=n_norm, n_hypoxic=n_hyp,
            mean_damage=float(damage.mean()) if len(damage) else 0.0,
            std_damage=float(damage.std()) if len(damage) else 0.0,
            vessels=network.vessel_count, tips=len(network.active_tips()),
            branches=network.branches, anastomoses=network.anastomoses, self_loops=network.self_loops,
            vascularized=vascularized, **resistance,
        ))

    def _check_invariants(self, state: SimState):
        rows = state.stats.rows
        n = len(state.cells)
        n_norm = sum(1 for c in state.cells if c.state == OxygenState.NORMOXIC)
        n_hyp = sum(1 for c in state.cells if c.state == OxygenState.HYPOXIC)
        if n != n_norm + n_hyp:
            self._abort(state, f"partição quebrada: N={n}, Nn={n_norm}, Nh={n_hyp}")
        if rows and state.network.vessel_count < rows[-1].vessels:
            self._abort(state, "conjunto de vasos diminuiu")
        if not state.occupancy.consistent_with(state.cells):
            self._abort(state, "índice de ocupação inconsistente com as células")
        for cell in state.cells:
            if cell.damage < 0 or cell.drug < 0 or cell.age < 0:
                self._abort(state, f"célula {cell.id} com dano/droga/idade negativos")

    def _abort(self, state: SimState, reason: str):
        logger.error(f"Erro de invariante em t={state.t:.4g}: {reason}")
        raise InvariantError(reason)

    def diagnostic_text(self, state: SimState, reason: str) -> str:
        lines = [f"motivo={reason}", f"t={state.t!r}", f"passo={state.step}", f"N={len(state.cells)}",
                 f"vasos={state.network.vessel_count}", f"pontas_ativas={len(state.network.active_tips())}",
                 f"taf_min={state.taf.values.min()!r}", f"taf_max={state.taf.values.max()!r}",
                 f"droga_max={state.drug.values.max()!r}", f"oxigenio_min={state.oxygen.values.min()!r}"]
        for cell in sorted(state.cells, key=_sort_key)[:50]:
            lines.append(f"celula {cell.id} x={cell.x!r} y={cell.y!r} dano={cell.damage!r} idade={cell.age!r}")
        return "\n".join(lines) + "\n"

    # ==================== MARCOS ====================

    def detect_milestones(self, stats: PopulationStats, vascularization_time: Optional[float] = None,
                          treated: bool = True) -> MilestoneSummary:
        """Ponto de declínio, ponto de virada, extinção, quedas em massa e nadir"""
        summary = MilestoneSummary(vascularization_time=vascularization_time)
        rows = stats.rows
        if len(rows) < 2:
            return summary

        seen_cells = False
        for prev, row in zip(rows[:-1], rows[1:]):
            seen_cells = seen_cells or prev.n > 0
            after_onset = row.t >= stats.t_init - 1e-12
            if summary.declining_point is None and after_onset and row.n < prev.n:
                summary.declining_point = row.t
            if after_onset and prev.n > 0 and row.n <= BULK_DEATH_DROP * prev.n:
                summary.bulk_deaths.append(row.t)
            if summary.extinction_time is None and seen_cells and row.n == 0:
                summary.extinction_time = row.t
        for row in rows:
            if (summary.shifting_point is None and row.n > 0 and row.min_threshold > stats.th_death
                    and row.std_threshold <= 1e-12):
                summary.shifting_point = row.t

        treated_rows = [r for r in rows if r.t >= stats.t_init - 1e-12]
        if treated_rows:
            summary.nadir_time = min(treated_rows, key=lambda r: r.n).t

        if summary.extinction_time is not None:
            summary.outcome = Outcome.ELIMINATED
        elif rows[-1].n > 0 and treated and rows[-1].t > stats.t_init:
            summary.outcome = Outcome.PERSISTENT
        return summary

    # ==================== EXECUÇÃO ====================

    def _snapshot_due(self, config: SimConfig, t_prev: float, t: float) -> bool:
        if any(t_prev < s <= t + 1e-9 for s in config.snapshot_times):
            return True
        interval = config.snapshot_interval
        if interval > 0:
            return vasculature_service.intervals_crossed(t_prev, t, interval) > 0
        return False

    def write_snapshot(self, state: SimState, writer: RunWriter):
        cfg = state.config
        writer.write_field("taf", state.taf, state.t)
        writer.write_field("drug", state.drug, state.t)
        writer.write_field("oxygen", state.oxygen, state.t)
        writer.write_cells(sorted(state.cells, key=_sort_key), state.t, cfg.q_h)
        writer.write_network(state.network, state.t)
        writer.write_profile(vasculature_service.vessel_profile(state.network), state.t)
        writer.write_histograms(evolution_service.trait_histograms(state.cells, cfg), state.t)

    def run(self, config: SimConfig, out_dir: Optional[str] = None) -> RunSummary:
        """Avança de t=0 até t_end gravando os artefatos"""
        writer = output_service.open_run(out_dir) if out_dir else None
        logger.info(f"Iniciando simulação: cenário={config.scenario.value}, semente={config.seed}, "
                    f"t_end={config.t_end}")
        if writer:
            output_service.write_config(writer, config)
        state = self.initial_state(config)
        if writer:
            self.write_snapshot(state, writer)

        n_steps = int(round(config.t_end / config.dt))
        try:
            while state.step < n_steps:
                t_prev = state.t
                self.macro_step(state)
                if writer and self._snapshot_due(config, t_prev, state.t):
                    self.write_snapshot(state, writer)
                if settings.progress_every and state.step % settings.progress_every == 0:
                    logger.info(f"t={state.t:.2f} N={len(state.cells)} vasos={state.network.vessel_count} "
                                f"pontas={len(state.network.active_tips())}")
                if config.stops_on_vascularization and state.vascularization_time is not None:
                    logger.info("Parando: vascularização completa")
                    break
        except SimulationError as e:
            logger.error(f"Erro na simulação em t={state.t:.4g}: {e}")
            if writer:
                output_service.diagnostic_dump(writer, self.diagnostic_text(state, str(e)))
                self._write_results(state, writer)
            raise

        summary = self.summarize(state, out_dir)
        if writer:
            self._write_results(state, writer)
        logger.info(f"Simulação concluída: desfecho={summary.outcome.value}, N={summary.final_population}")
        return summary

    def summarize(self, state: SimState, out_dir: Optional[str] = None) -> RunSummary:
        milestones = self.detect_milestones(state.stats, state.vascularization_time,
                                            treated=state.schedule is not None)
        return RunSummary(seed=state.config.seed, outcome=milestones.outcome, milestones=milestones,
                          steps=state.step, final_t=state.t, final_population=len(state.cells),
                          out_dir=out_dir)

    def _write_results(self, state: SimState, writer: RunWriter):
        milestones = self.detect_milestones(state.stats, state.vascularization_time,
                                            treated=state.schedule is not None)
        writer.write_stats(state.stats)
        writer.write_events(state.network)
        writer.write_warnings(state.warnings)
        writer.write_milestones(milestones)
        writer.write_manifest()


# Instância global do serviço do motor
engine_service = EngineService()
