"""
Serviço de saída: CSVs, snapshots, marcos e manifesto
"""
import csv
import logging
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from models import (
    AngiogenicNetwork,
    BatchSummary,
    MilestoneSummary,
    PopulationStats,
    ScalarField,
    SimConfig,
    TumourCell,
)
from services.config_service import config_service
from services.tumour_service import tumour_service

logger = logging.getLogger(__name__)

STATS_HEADER = ["t", "N", "Nn", "Nh", "mean_dam", "std_dam", "vessels", "tips",
                "branches", "anastomoses", "self_loops"]
RESISTANCE_HEADER = ["t", "resistant_fraction", "min_threshold", "std_threshold", "mean_threshold"]
CELLS_HEADER = ["id", "x", "y", "oxygen", "drug", "damage", "threshold", "age", "state",
                "uptake_rate", "prolif_rate"]

# Horas por unidade adimensional de tempo (τ = L²/D)
HOURS_PER_UNIT = 16.0


def fmt(value) -> str:
    """Números com 9 algarismos significativos"""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return f"{value:.9g}"
    return str(value)


def time_label(t: float) -> str:
    return f"{t:.3f}"


class RunWriter:
    """Escritor dos artefatos de uma execução; registra tudo no manifesto"""

    def __init__(self, out_dir: str):
        self.root = Path(out_dir)
        self.root.mkdir(parents=True, exist_ok=True)
        self.written: List[str] = []

    def _path(self, relative: str) -> Path:
        path = self.root / relative
        path.parent.mkdir(parents=True, exist_ok=True)
        if relative not in self.written:
            self.written.append(relative)
        return path

    def write_rows(self, relative: str, header: Sequence[str], rows: Iterable[Sequence]):
        with self._path(relative).open("w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([fmt(v) for v in row])

    def write_text(self, relative: str, text: str):
        self._path(relative).write_text(text, encoding="utf-8")

    # ==================== SÉRIES ====================

    def write_stats(self, stats: PopulationStats):
        self.write_rows("stats.csv", STATS_HEADER, (
            (r.t, r.n, r.n_normoxic, r.n_hypoxic, r.mean_damage, r.std_damage, r.vessels, r.tips,
             r.branches, r.anastomoses, r.self_loops) for r in stats.rows
        ))
        self.write_rows("resistance.csv", RESISTANCE_HEADER, (
            (r.t, r.resistant_fraction, r.min_threshold, r.std_threshold, r.mean_threshold)
            for r in stats.rows
        ))

    def write_events(self, network: AngiogenicNetwork):
        self.write_rows("events.csv", ["t", "event", "tip_id"],
                        ((e.t, e.event.value, str(e.tip_id)) for e in network.events))

    def write_warnings(self, warnings: Sequence[Tuple[float, str, str]]):
        self.write_rows("warnings.csv", ["t", "kind", "message"], warnings)

    def write_milestones(self, summary: MilestoneSummary):
        lines = []
        for key in ("declining_point", "shifting_point", "extinction_time", "vascularization_time"):
            value = getattr(summary, key)
            lines.append(f"{key}={fmt(value) if value is not None else 'none'}")
        lines.append(f"outcome={summary.outcome.value}")
        vt = summary.vascularization_time
        if vt is not None:
            lines.append(f"vascularization_time_hours={fmt(vt * HOURS_PER_UNIT)}")
            lines.append(f"vascularization_time_days={fmt(vt * HOURS_PER_UNIT / 24.0)}")
        lines.append(f"nadir_time={fmt(summary.nadir_time) if summary.nadir_time is not None else 'none'}")
        lines.append("bulk_deaths=" + ",".join(fmt(t) for t in summary.bulk_deaths))
        self.write_text("milestones.txt", "\n".join(lines) + "\n")

    # ==================== SNAPSHOTS ====================

    def write_field(self, name: str, field: ScalarField, t: float):
        x, y = field.geometry.coords()
        values = field.values
        rows = ((x[i], y[j], float(values[i, j])) for i in range(len(x)) for j in range(len(y)))
        self.write_rows(f"snapshots/{name}_t{time_label(t)}.csv", ["x", "y", "value"], rows)

    def write_cells(self, cells: Sequence[TumourCell], t: float, q_h: float):
        rows = ((str(c.id), c.x, c.y, c.oxygen, c.drug, c.damage, c.traits.death_threshold, c.age,
                 c.state.value, tumour_service.uptake_rate(c, q_h), c.traits.proliferation_rate)
                for c in cells)
        self.write_rows(f"snapshots/cells_t{time_label(t)}.csv", CELLS_HEADER, rows)

    def write_network(self, network: AngiogenicNetwork, t: float):
        label = time_label(t)
        self.write_rows(f"snapshots/network_t{label}.csv", ["square_i", "square_j", "owner_tip_id"],
                        ((i, j, str(owner)) for (i, j), owner in sorted(network.owners.items())))
        geometry = network.geometry
        self.write_rows(f"snapshots/tips_t{label}.csv", ["id", "x", "y", "age", "active"],
                        ((str(b.id), *geometry.center(b.square), b.age, b.active)
                         for b in sorted(network.tips, key=lambda b: b.id)))

    def write_profile(self, profile: Dict[float, int], t: float):
        self.write_rows(f"snapshots/profile_t{time_label(t)}.csv", ["y", "count"], sorted(profile.items()))

    def write_histograms(self, histograms: Dict, t: float):
        for trait, (edges, counts) in histograms.items():
            self.write_rows(f"snapshots/hist_{trait}_t{time_label(t)}.csv", ["bin_lo", "bin_hi", "count"],
                            ((float(edges[k]), float(edges[k + 1]), int(counts[k])) for k in range(len(counts))))

    def write_manifest(self):
        """Lista de artefatos; o próprio manifesto entra por último"""
        if "manifest.txt" not in self.written:
            self.written.append("manifest.txt")
        (self.root / "manifest.txt").write_text("\n".join(self.written) + "\n", encoding="utf-8")


class OutputService:
    """Serviço para gravação de resultados em disco"""

    def open_run(self, out_dir: str) -> RunWriter:
        logger.info(f"Artefatos em {out_dir}")
        return RunWriter(out_dir)

    def write_config(self, writer: RunWriter, config: SimConfig):
        writer.write_text("config.txt", config_service.emit_config(config))

    def write_aggregate(self, writer: RunWriter, summary: BatchSummary):
        lines = [f"seeds={','.join(str(s) for s in summary.seeds)}",
                 f"completed={len(summary.runs)}",
                 f"failed={len(summary.failures)}"]
        for outcome, freq in sorted(summary.outcome_frequencies.items()):
            lines.append(f"outcome_{outcome}={fmt(freq)}")
        for milestone, stats in summary.milestone_stats.items():
            for name, value in stats.items():
                lines.append(f"{milestone}_{name}={fmt(value)}")
        for seed, message in sorted(summary.failures.items()):
            lines.append(f"failure_seed_{seed}={message}")
        writer.write_text("aggregate.txt", "\n".join(lines) + "\n")

    def diagnostic_dump(self, writer: Optional[RunWriter], text: str) -> Optional[str]:
        if writer is None:
            return None
        writer.write_text("diagnostic.txt", text)
        return str(writer.root / "diagnostic.txt")


# Instância global do serviço de saída
output_service = OutputService()
