"""
Serviço de lotes: várias sementes e agregação dos resultados
"""
import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed

from models import BatchSummary, Outcome, RunSummary, SimConfig
from services.engine_service import engine_service
from services.output_service import output_service

logger = logging.getLogger(__name__)

MILESTONES = ("declining_point", "shifting_point", "extinction_time", "vascularization_time", "nadir_time")


def _run_seed(args: Tuple[SimConfig, int, Optional[str]]) -> Tuple[int, Optional[RunSummary], Optional[str]]:
    """Executa uma semente; falhas voltam como mensagem"""
    config, seed, out_dir = args
    try:
        summary = engine_service.run(config.model_copy(update={"seed": seed}), out_dir)
        return seed, summary, None
    except Exception as e:
        logger.error(f"Erro na semente {seed}: {e}")
        return seed, None, f"{type(e).__name__}: {e}"


class BatchService:
    """Serviço para execuções em lote"""

    def seeds_for(self, config: SimConfig, count: int) -> List[int]:
        if count < 1:
            raise ValueError(f"Número de sementes deve ser >= 1 (obtido {count})")
        return [config.seed + k for k in range(count)]

    def aggregate(self, seeds: Sequence[int], runs: List[RunSummary], failures: Dict[int, str]) -> BatchSummary:
        """Médias, quantis e frequências de desfecho"""
        frequencies = {}
        if runs:
            for outcome in Outcome:
                frequencies[outcome.value] = sum(1 for r in runs if r.outcome == outcome) / len(runs)

        stats = {}
        for name in MILESTONES:
            values = np.array([getattr(r.milestones, name) for r in runs
                               if getattr(r.milestones, name) is not None], dtype=np.float64)
            if len(values) == 0:
                continue
            stats[name] = {
                "count": int(len(values)),
                "mean": float(values.mean()),
                "q25": float(np.quantile(values, 0.25)),
                "median": float(np.quantile(values, 0.5)),
                "q75": float(np.quantile(values, 0.75)),
            }
            if name == "vascularization_time":
                stats[name]["mean_hours"] = stats[name]["mean"] * 16.0
                stats[name]["mean_days"] = stats[name]["mean"] * 16.0 / 24.0
        return BatchSummary(seeds=list(seeds), runs=runs, failures=failures,
                            outcome_frequencies=frequencies, milestone_stats=stats)

    def window_fraction(self, runs: Sequence[RunSummary], name: str, low: float, high: float) -> float:
        """Fração das execuções com o marco `name` dentro de [low, high]"""
        if not runs:
            return 0.0
        values = [getattr(r.milestones, name) for r in runs]
        return sum(1 for v in values if v is not None and low <= v <= high) / len(runs)

    def run_batch(self, config: SimConfig, seeds: Sequence[int], out_dir: Optional[str] = None,
                  workers: int = 1) -> BatchSummary:
        """Execuções independentes, uma pasta por semente"""
        if not seeds:
            raise ValueError("Lote precisa de ao menos uma semente")
        jobs = [(config, seed, str(Path(out_dir) / f"seed_{seed}") if out_dir else None) for seed in seeds]
        logger.info(f"Lote de {len(jobs)} sementes com {workers} processo(s)")

        # n_jobs=1 roda no próprio processo
        results = Parallel(n_jobs=workers)(delayed(_run_seed)(job) for job in jobs)

        runs = [summary for _, summary, _ in results if summary is not None]
        failures = {seed: message for seed, _, message in results if message is not None}
        summary = self.aggregate(seeds, runs, failures)

        if out_dir:
            writer = output_service.open_run(out_dir)
            for seed in seeds:
                seed_manifest = Path(out_dir) / f"seed_{seed}" / "manifest.txt"
                if seed_manifest.exists():
                    for line in seed_manifest.read_text(encoding="utf-8").splitlines():
                        writer.written.append(f"seed_{seed}/{line}")
            output_service.write_aggregate(writer, summary)
            writer.write_manifest()
        if failures:
            logger.warning(f"{len(failures)} semente(s) falharam: {sorted(failures)}")
        return summary


# Instância global do serviço de lotes
batch_service = BatchService()
