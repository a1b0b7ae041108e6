"""
Serviço de evolução da resistência: subpopulação pré-existente, mutação e exposição
"""
import logging
import math
from typing import Dict, List, Sequence, Tuple

import numpy as np

from models import CellId, MutationConfig, MutationMode, ResistanceConfig, SimConfig, TumourCell

logger = logging.getLogger(__name__)

# Rótulo do sub-fluxo aleatório de mutação
MUTATION_STREAM = 7

HISTOGRAM_BINS = 40


def mutation_rng(seed: int, cell_id: CellId) -> np.random.Generator:
    """Gerador próprio da célula, derivado de (semente, linhagem)"""
    seq = np.random.SeedSequence(seed, spawn_key=(MUTATION_STREAM,) + cell_id.seed_key())
    return np.random.default_rng(seq)


class EvolutionService:
    """Serviço para os mecanismos de resistência"""

    def init_preexisting(self, cells: List[TumourCell], fraction: float, th_multi: int,
                         rng: np.random.Generator, th_death: float = 0.5) -> List[TumourCell]:
        """round(fraction·N_0) células escolhidas recebem limiar th_multi·Th_death"""
        if not (0.0 <= fraction <= 1.0):
            raise ValueError(f"Fração fora de [0, 1]: {fraction}")
        count = int(math.floor(fraction * len(cells) + 0.5))
        for cell in cells:
            cell.traits.death_threshold = th_death
            cell.base.death_threshold = th_death
        if count:
            chosen = rng.choice(len(cells), size=count, replace=False)
            for k in sorted(int(v) for v in chosen):
                cells[k].traits.death_threshold = th_multi * th_death
                cells[k].base.death_threshold = th_multi * th_death
        logger.info(f"Resistência pré-existente: {count} de {len(cells)} células")
        return cells

    def mutation_probability(self, cfg: MutationConfig, local_drug: float) -> float:
        """1 − exp(−μ_eff)"""
        if cfg.mode == MutationMode.NONE:
            return 0.0
        mu_eff = cfg.mu
        if cfg.mode == MutationMode.DRUG_INDUCED:
            mu_eff = cfg.mu * max(local_drug, 0.0) / cfg.d_ref
        return -math.expm1(-mu_eff)

    def maybe_mutate(self, daughter: TumourCell, cfg: MutationConfig, local_drug: float, t: float,
                     rng: np.random.Generator) -> bool:
        """Mutação aleatória consecutiva; retorna True se disparou"""
        if cfg.mode == MutationMode.NONE or t < cfg.enabled_from:
            return False
        p = self.mutation_probability(cfg, local_drug)
        if rng.random() >= p:
            return False

        lo, hi = cfg.factor_range
        c_lo, c_hi = cfg.clamp_range
        f_threshold, f_uptake, f_prolif = rng.uniform(lo, hi, size=3)
        traits, base = daughter.traits, daughter.base
        traits.death_threshold = min(max(traits.death_threshold * f_threshold, c_lo * base.death_threshold),
                                     c_hi * base.death_threshold)
        traits.oxygen_uptake = min(max(traits.oxygen_uptake * f_uptake, c_lo * base.oxygen_uptake),
                                   c_hi * base.oxygen_uptake)
        traits.proliferation_rate = min(max(traits.proliferation_rate * f_prolif,
                                            c_lo * base.proliferation_rate),
                                        c_hi * base.proliferation_rate)
        daughter.sync_maturation()
        logger.debug(f"Mutação em {daughter.id}: limiar={traits.death_threshold:.4g}")
        return True

    def exposure_resistance_update(self, cell: TumourCell, cfg: ResistanceConfig) -> bool:
        """Exposição prolongada aumenta o limiar até o teto th_multi·Th_death"""
        if cell.exposure_time <= cfg.exposure_threshold:
            return False
        cap = cfg.threshold_cap
        if cell.traits.death_threshold < cap:
            cell.traits.death_threshold = min(cell.traits.death_threshold * cfg.threshold_increment_factor, cap)
        cell.exposure_time = 0.0
        return True

    # ==================== ESTATÍSTICAS ====================

    def resistance_summary(self, cells: Sequence[TumourCell], th_death: float) -> Dict[str, float]:
        """Fração resistente e momentos do limiar de morte"""
        if not cells:
            return {"resistant_fraction": 0.0, "min_threshold": 0.0,
                    "std_threshold": 0.0, "mean_threshold": 0.0}
        th = np.array([c.traits.death_threshold for c in cells])
        return {
            "resistant_fraction": float(np.count_nonzero(th > th_death)) / len(th),
            "min_threshold": float(th.min()),
            "std_threshold": float(th.std()),
            "mean_threshold": float(th.mean()),
        }

    def histogram_ranges(self, config: SimConfig) -> Dict[str, Tuple[float, float]]:
        """Faixas dos histogramas cobrindo o intervalo de grampo de cada traço"""
        c_lo, c_hi = config.clamp_lo, config.clamp_hi
        prolif_lo = math.log(2.0) / (11.0 / 16.0)
        prolif_hi = math.log(2.0) / (9.0 / 16.0)
        return {
            "oxygen_uptake": (c_lo * config.rho_o, c_hi * config.rho_o),
            "proliferation_rate": (c_lo * prolif_lo, c_hi * prolif_hi),
            "death_threshold": (c_lo * config.th_death, c_hi * config.th_multi * config.th_death),
        }

    def trait_histograms(self, cells: Sequence[TumourCell], config: SimConfig,
                         bins: int = HISTOGRAM_BINS) -> Dict[str, Tuple[np.ndarray, np.ndarray]]:
        """Histogramas (bordas, contagens) dos três traços; valores fora da faixa vão às pontas"""
        out = {}
        for trait, (lo, hi) in self.histogram_ranges(config).items():
            edges = np.linspace(lo, hi, bins + 1)
            values = np.array([getattr(c.traits, trait) for c in cells], dtype=np.float64)
            counts, _ = np.histogram(np.clip(values, lo, hi), bins=edges)
            out[trait] = (edges, counts)
        return out


# Instância global do serviço de evolução
evolution_service = EvolutionService()
