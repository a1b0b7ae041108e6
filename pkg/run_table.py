"""
Script para montar a matriz de desfechos (estratégias x mecanismos de resistência)
Execute: python run_table.py --seeds 10
"""
import argparse
import io
import sys

from models import TREATMENT_PRESETS, BatchSummary, Scenario, SimConfig
from services.batch_service import batch_service

# Configurar encoding para Windows
if sys.platform == 'win32':
    sys.stdout = io.TextIOWrapper(sys.stdout.buffer, encoding='utf-8')

NADIR_BAND = (18.5, 19.5)

COLUMNS = [
    ("pré-existente", {"scenario": Scenario.PRE_EXISTING}),
    ("μ=0.1", {"scenario": Scenario.SPONTANEOUS, "mu": 0.1}),
    ("μ=0.01", {"scenario": Scenario.SPONTANEOUS, "mu": 0.01}),
    ("μ=0.001", {"scenario": Scenario.SPONTANEOUS, "mu": 0.001}),
    ("μ=0.0001", {"scenario": Scenario.SPONTANEOUS, "mu": 0.0001}),
]


def print_header(title):
    """Imprime cabeçalho formatado"""
    print(f"\n{'='*60}")
    print(f"  {title}")
    print(f"{'='*60}")


def run_cell(base: SimConfig, strategy: str, overrides: dict, n_seeds: int, workers: int) -> BatchSummary:
    """Lote de sementes para uma célula da matriz"""
    config = base.model_copy(update={"treatment": strategy, **overrides})
    config = SimConfig.model_validate(config.model_dump())
    seeds = batch_service.seeds_for(config, n_seeds)
    summary = batch_service.run_batch(config, seeds, workers=workers)
    if summary.failures:
        print(f"  ⚠️ {strategy} {overrides}: {len(summary.failures)} semente(s) falharam")
    return summary


def main():
    parser = argparse.ArgumentParser(description="Matriz de desfechos por estratégia")
    parser.add_argument("--seeds", type=int, default=10)
    parser.add_argument("--seed", type=int, default=1, help="Primeira semente")
    parser.add_argument("--t-end", type=float, default=50.0)
    parser.add_argument("--workers", type=int, default=1)
    args = parser.parse_args()

    base = SimConfig(seed=args.seed, t_end=args.t_end)
    print_header(f"Frequência de eliminação ({args.seeds} sementes, t_end={args.t_end:g})")
    print("estratégia  " + "  ".join(f"{name:>13}" for name, _ in COLUMNS))
    nadir_runs = None
    for strategy in TREATMENT_PRESETS:
        cells = []
        for name, overrides in COLUMNS:
            summary = run_cell(base, strategy, overrides, args.seeds, args.workers)
            if strategy == "strategy5" and name == "μ=0.01":
                nadir_runs = summary
            freq = summary.outcome_frequencies.get("eliminated", 0.0)
            mark = "✅" if freq >= 0.5 else "❌"
            cells.append(f"{mark} {freq:>10.2f}")
        print(f"{strategy:<11} " + "  ".join(f"{c:>13}" for c in cells))

    low, high = NADIR_BAND
    print_header(f"Nadir da população (strategy5, μ=0.01, t_init={base.t_init:g})")
    nadirs = [r.milestones.nadir_time for r in nadir_runs.runs]
    print("nadir por semente: " + ", ".join("none" if t is None else f"{t:.1f}" for t in nadirs))
    fraction = batch_service.window_fraction(nadir_runs.runs, "nadir_time", low, high)
    mark = "✅" if fraction >= 0.7 else "❌"
    print(f"{mark} fração com nadir em [{low}, {high}]: {fraction:.2f}")


if __name__ == "__main__":
    main()
