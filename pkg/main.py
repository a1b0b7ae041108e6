"""
Simulador híbrido de crescimento tumoral, angiogênese e resistência a drogas
Linha de comando: run, batch, validate e presets
"""
import argparse
import logging
import sys
from typing import List, Optional

from config import settings
from models import ConfigError, NumericalFailureError, SimulationError
from services.batch_service import batch_service
from services.config_service import config_service
from services.engine_service import engine_service

# Configurar logging
logging.basicConfig(
    level=getattr(logging, settings.log_level.upper(), logging.INFO),
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_IO = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="angiosim", description=__doc__.strip().splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Executa uma simulação")
    run.add_argument("--config", required=True, help="Arquivo chave=valor")
    run.add_argument("--seed", type=int, default=None, help="Sobrescreve a semente do arquivo")
    run.add_argument("--out", required=True, help="Pasta de saída")

    batch = sub.add_parser("batch", help="Executa N sementes (seed, seed+1, ...)")
    batch.add_argument("--config", required=True)
    batch.add_argument("--seeds", type=int, required=True, help="Número de sementes")
    batch.add_argument("--out", required=True)
    batch.add_argument("--workers", type=int, default=1, help="Processos em paralelo")

    validate = sub.add_parser("validate", help="Valida um arquivo de configuração")
    validate.add_argument("--config", required=True)

    sub.add_parser("presets", help="Lista cenários, estratégias e parâmetros padrão")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "presets":
            print(config_service.describe_presets(), end="")
            return EXIT_OK

        config = config_service.load_config(args.config)

        if args.command == "validate":
            print("✅ Configuração válida")
            return EXIT_OK

        if args.command == "run":
            if args.seed is not None:
                config = config.model_copy(update={"seed": args.seed})
            summary = engine_service.run(config, args.out)
            print(f"desfecho={summary.outcome.value} N={summary.final_population} t={summary.final_t:g}")
            return EXIT_OK

        if args.command == "batch":
            seeds = batch_service.seeds_for(config, args.seeds)
            summary = batch_service.run_batch(config, seeds, args.out, workers=args.workers)
            for outcome, freq in sorted(summary.outcome_frequencies.items()):
                print(f"{outcome}={freq:g}")
            return EXIT_OK

    except ConfigError as e:
        for problem in e.errors:
            print(f"❌ {problem}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalFailureError as e:
        logger.error(f"Falha numérica: {e}")
        return EXIT_NUMERICAL
    except (OSError, SimulationError) as e:
        logger.error(f"Erro ao executar '{args.command}': {e}")
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
