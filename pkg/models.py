"""
Modelos de domínio e modelos Pydantic para validação de dados
"""
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator


# ==================== ENUMS ====================

class Scenario(str, Enum):
    """Cenários de simulação"""
    ANGIO_ONLY = "angio_only"
    NO_RESISTANCE = "no_resistance"
    PRE_EXISTING = "pre_existing"
    SPONTANEOUS = "spontaneous"
    DRUG_INDUCED = "drug_induced"


class FieldKind(str, Enum):
    """Tipos de campo escalar"""
    TAF = "taf"
    DRUG = "drug"
    OXYGEN = "oxygen"
    INDICATOR = "indicator"


class OxygenState(str, Enum):
    """Estado de oxigenação de uma célula viva"""
    NORMOXIC = "normoxic"
    HYPOXIC = "hypoxic"


class OxygenClass(str, Enum):
    """Resultado da classificação por oxigênio"""
    APOPTOSIS = "apoptosis"
    HYPOXIC = "hypoxic"
    NORMOXIC = "normoxic"


class MutationMode(str, Enum):
    """Modos de mutação na divisão"""
    NONE = "none"
    SPONTANEOUS = "spontaneous"
    DRUG_INDUCED = "drug_induced"


class ScheduleKind(str, Enum):
    """Tipos de infusão"""
    CONTINUOUS = "continuous"
    PULSED = "pulsed"


class Outcome(str, Enum):
    """Desfecho de uma execução"""
    ELIMINATED = "eliminated"
    PERSISTENT = "persistent"
    RUNNING = "running"


class NetworkEvent(str, Enum):
    """Eventos da rede angiogênica"""
    BRANCH = "branch"
    ANASTOMOSIS = "anastomosis"
    SELF_LOOP = "self_loop"


# ==================== EXCEÇÕES ====================

class SimulationError(Exception):
    """Erro base do simulador"""


class ConfigError(SimulationError):
    """Configuração inválida; acumula todas as violações encontradas"""

    def __init__(self, errors: List[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class NumericalFailureError(SimulationError):
    """Valor não finito (ou passo inválido) em um campo"""

    def __init__(self, message: str, node: Optional[Tuple[int, int]] = None,
                 kind: Optional[FieldKind] = None):
        self.node = node
        self.kind = kind
        super().__init__(f"{message} (nó={node}, campo={kind.value if kind else '-'})")


class StepSizeError(NumericalFailureError):
    """P_0 negativo: o subpasso das pontas precisa ser reduzido"""


class InvariantError(SimulationError):
    """Quebra de invariante detectada pelo motor"""


# ==================== GEOMETRIA E CAMPOS ====================

@dataclass(frozen=True)
class GridGeometry:
    """Malha quadrada que cobre o quadrado unitário; nós nos centros dos quadrados"""
    n_x: int
    n_y: int

    def __post_init__(self):
        if self.n_x < 3 or self.n_y < 3:
            raise ValueError(f"Malha precisa de ao menos 3 nós por eixo: {self.n_x}x{self.n_y}")
        if self.n_x != self.n_y:
            raise ValueError("Quadrados da malha devem ser quadrados (n_x == n_y)")

    @classmethod
    def from_cell_radius(cls, r_c: float) -> "GridGeometry":
        """Malha com lado 2·R_c"""
        n = int(round(1.0 / (2.0 * r_c)))
        return cls(n, n)

    @property
    def dx(self) -> float:
        return 1.0 / self.n_x

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.n_x, self.n_y)

    def coords(self) -> Tuple[np.ndarray, np.ndarray]:
        """Coordenadas 1D dos nós em x e y"""
        x = (np.arange(self.n_x) + 0.5) * self.dx
        y = (np.arange(self.n_y) + 0.5) * self.dx
        return x, y

    def mesh(self) -> Tuple[np.ndarray, np.ndarray]:
        """Coordenadas 2D dos nós, indexadas [i, j]"""
        x, y = self.coords()
        return np.meshgrid(x, y, indexing="ij")

    def center(self, square: Tuple[int, int]) -> Tuple[float, float]:
        i, j = square
        return ((i + 0.5) * self.dx, (j + 0.5) * self.dx)

    def square_of(self, x: float, y: float) -> Tuple[int, int]:
        """Quadrado que contém o ponto (pontos na borda vão para o último quadrado)"""
        i = min(max(int(math.floor(x / self.dx)), 0), self.n_x - 1)
        j = min(max(int(math.floor(y / self.dx)), 0), self.n_y - 1)
        return (i, j)

    def contains(self, square: Tuple[int, int]) -> bool:
        i, j = square
        return 0 <= i < self.n_x and 0 <= j < self.n_y


@dataclass
class ScalarField:
    """Campo escalar 2D; values[i, j] com i no eixo x e j no eixo y"""
    geometry: GridGeometry
    values: np.ndarray
    kind: FieldKind

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != self.geometry.shape:
            raise ValueError(f"Forma {self.values.shape} incompatível com a malha {self.geometry.shape}")

    @classmethod
    def zeros(cls, geometry: GridGeometry, kind: FieldKind) -> "ScalarField":
        return cls(geometry, np.zeros(geometry.shape), kind)

    @classmethod
    def full(cls, geometry: GridGeometry, value: float, kind: FieldKind) -> "ScalarField":
        return cls(geometry, np.full(geometry.shape, float(value)), kind)

    def copy(self) -> "ScalarField":
        return ScalarField(self.geometry, self.values.copy(), self.kind)

    def total(self) -> float:
        return float(self.values.sum())


@dataclass(frozen=True)
class MoveCoefficients:
    """Coeficientes de movimento da ponta (ficar, esquerda, direita, baixo, cima)"""
    stay: float
    left: float
    right: float
    down: float
    up: float
    normalized: bool = False

    def as_array(self) -> np.ndarray:
        return np.array([self.stay, self.left, self.right, self.down, self.up])


# ==================== AGENTES ====================

@dataclass(frozen=True, order=True)
class CellId:
    """Índice de linhagem (k, i_1, ..., i_n)"""
    root: int
    path: Tuple[int, ...] = ()

    def daughter(self, digit: int) -> "CellId":
        if digit not in (1, 2):
            raise ValueError(f"Dígito de filha inválido: {digit}")
        return CellId(self.root, self.path + (digit,))

    @property
    def generation(self) -> int:
        return len(self.path)

    def is_ancestor_of(self, other: "CellId") -> bool:
        return (self.root == other.root and len(self.path) < len(other.path)
                and other.path[:len(self.path)] == self.path)

    def seed_key(self) -> Tuple[int, ...]:
        return (self.root,) + self.path

    def __str__(self) -> str:
        return ".".join(str(p) for p in self.seed_key())


@dataclass
class PhenotypeTraits:
    """Traços mutáveis do fenótipo"""
    oxygen_uptake: float
    proliferation_rate: float
    death_threshold: float

    def copy(self) -> "PhenotypeTraits":
        return PhenotypeTraits(self.oxygen_uptake, self.proliferation_rate, self.death_threshold)


@dataclass(eq=False)
class TumourCell:
    """Agente célula tumoral"""
    x: float
    y: float
    id: CellId
    traits: PhenotypeTraits
    base: PhenotypeTraits
    maturation: float
    oxygen: float = 1.0
    drug: float = 0.0
    damage: float = 0.0
    age: float = 0.0
    state: OxygenState = OxygenState.NORMOXIC
    exposure_time: float = 0.0
    local_drug: float = 0.0

    @property
    def position(self) -> Tuple[float, float]:
        return (self.x, self.y)

    def sync_maturation(self):
        """a^mat = log 2 / taxa de proliferação"""
        self.maturation = math.log(2.0) / self.traits.proliferation_rate


@dataclass(eq=False)
class TipCell:
    """Célula endotelial na ponta do broto"""
    square: Tuple[int, int]
    id: CellId
    age: float = 0.0
    active: bool = True
    born_at: float = 0.0


@dataclass(frozen=True)
class VesselAgent:
    """Quadrado ocupado pela rede"""
    square: Tuple[int, int]
    center: Tuple[float, float]


@dataclass
class NetworkEventRecord:
    t: float
    event: NetworkEvent
    tip_id: CellId
    square: Tuple[int, int]


@dataclass
class AngiogenicNetwork:
    """Rede angiogênica: quadrados varridos, trajetórias e posse dos brotos"""
    geometry: GridGeometry
    tips: List[TipCell] = field(default_factory=list)
    owners: Dict[Tuple[int, int], CellId] = field(default_factory=dict)
    trajectories: Dict[CellId, List[Tuple[int, int]]] = field(default_factory=dict)
    windows: Dict[CellId, Tuple[float, Optional[float]]] = field(default_factory=dict)
    events: List[NetworkEventRecord] = field(default_factory=list)
    branches: int = 0
    anastomoses: int = 0
    self_loops: int = 0
    forced_extensions: int = 0

    @property
    def vessel_count(self) -> int:
        return len(self.owners)

    def active_tips(self) -> List[TipCell]:
        return [tip for tip in self.tips if tip.active]

    def vessel_agents(self) -> List[VesselAgent]:
        return [VesselAgent(sq, self.geometry.center(sq)) for sq in sorted(self.owners)]

    def vessel_centers(self) -> np.ndarray:
        if not self.owners:
            return np.empty((0, 2))
        return np.array([self.geometry.center(sq) for sq in sorted(self.owners)])

    def max_vessel_y(self) -> float:
        if not self.owners:
            return 0.0
        return self.geometry.center((0, max(j for _, j in self.owners)))[1]


# ==================== CONFIGURAÇÃO ====================

TREATMENT_PRESETS = ("strategy1", "strategy2", "strategy3", "strategy4",
                     "strategy5", "strategy6", "strategy7")
TREATMENT_CHOICES = ("none", "continuous", "pulsed") + TREATMENT_PRESETS


class SimConfig(BaseModel):
    """Parâmetros adimensionais da simulação (valores padrão da Tabela 2)"""
    model_config = ConfigDict(extra="forbid", validate_assignment=False)

    # Angiogênese
    d_n: float = Field(default=4.608e-4, ge=0)
    chi_0: float = Field(default=0.38, ge=0)
    alpha: float = Field(default=0.6, ge=0)
    psi: float = Field(default=0.5, ge=0)
    c_br: float = Field(default=1.0, ge=0)

    # TAF
    d_c: float = Field(default=0.12, ge=0)
    xi_c: float = Field(default=0.002, ge=0)
    eta: float = Field(default=1e3, ge=0)
    lam: float = Field(default=0.1, ge=0)
    taf_k: float = Field(default=5.0, ge=0)

    # Droga
    d_d: float = Field(default=0.5, ge=0)
    xi_d: float = Field(default=0.01, ge=0)
    rho_d: float = Field(default=0.5, ge=0)
    p_r: float = Field(default=0.2, ge=0, le=1)

    # Oxigênio
    d_o: float = Field(default=0.35, ge=0)
    xi_o: float = Field(default=0.025, ge=0)
    rho_o: float = Field(default=0.57, ge=0)
    s_o: float = Field(default=3.5, ge=0)
    o_hyp: float = 0.25
    o_apop: float = 0.05

    # Células tumorais
    th_death: float = Field(default=0.5, gt=0)
    th_multi: int = Field(default=3, ge=1)
    f_max: int = Field(default=10, ge=1)
    r_c: float = Field(default=0.005, gt=0)

    # Cenário e tratamento
    scenario: Scenario = Scenario.NO_RESISTANCE
    mu: float = Field(default=0.1, ge=0)
    treatment: str = "strategy5"
    t_init: float = Field(default=14.0, ge=0)
    d_c_rate: Optional[float] = Field(default=None, ge=0)
    d_p: Optional[float] = Field(default=None, ge=0)
    t_on: Optional[float] = Field(default=None, gt=0)
    t_off: Optional[float] = Field(default=None, ge=0)

    # Execução
    seed: int = Field(default=1, ge=0)
    t_end: float = Field(default=50.0, ge=0)
    dt: float = Field(default=0.1, gt=0)
    tip_dt: float = Field(default=0.05, gt=0)
    tip_substeps: int = Field(default=2, ge=1)
    snapshot_interval: float = Field(default=1.0, ge=0)
    snapshot_times: List[float] = Field(default_factory=list)

    # Decisões de projeto
    sensing_radius_factor: float = Field(default=4.0, gt=0)
    epsilon1: float = Field(default=0.001, ge=0)
    q_h: float = Field(default=0.5, ge=0)
    initial_cells: int = Field(default=50, ge=0)
    initial_radius_factor: float = Field(default=10.0, gt=0)
    tumour_center_x: float = Field(default=0.5, ge=0, le=1)
    tumour_center_y: float = Field(default=0.75, ge=0, le=1)
    d_floor: float = Field(default=1e-3, ge=0)
    exposure_threshold: float = Field(default=5.0, ge=0)
    threshold_increment: float = Field(default=1.1, ge=1)
    exposure_adaptation: Optional[bool] = None
    preexisting_fraction: float = Field(default=0.01, ge=0, le=1)
    d_ref: float = Field(default=2.0, gt=0)
    factor_lo: float = Field(default=0.7, gt=0)
    factor_hi: float = Field(default=1.7, gt=0)
    clamp_lo: float = Field(default=0.5, gt=0)
    clamp_hi: float = Field(default=4.0, gt=0)
    relax_max_iters: int = Field(default=20, ge=0)
    relax_tol: float = Field(default=0.05, ge=0, lt=1)
    proliferation_interval: float = Field(default=1.125, gt=0)
    max_tip_halvings: int = Field(default=8, ge=0)
    stop_on_vascularization: Optional[bool] = None

    @model_validator(mode="after")
    def check_invariants(self) -> "SimConfig":
        """Invariantes entre campos; todas as violações de uma vez"""
        problems = []
        if not (0 < self.o_apop < self.o_hyp < 1):
            problems.append(f"o_apop/o_hyp: exige 0 < o_apop < o_hyp < 1 (o_apop={self.o_apop}, o_hyp={self.o_hyp})")
        n = 1.0 / (2.0 * self.r_c)
        if abs(n - round(n)) > 1e-9 or round(n) < 3:
            problems.append(f"r_c: 1/(2·r_c) deve ser inteiro >= 3 (obtido {n})")
        if self.factor_lo > self.factor_hi:
            problems.append("factor_lo/factor_hi: intervalo invertido")
        if self.clamp_lo > self.clamp_hi:
            problems.append("clamp_lo/clamp_hi: intervalo invertido")
        if self.treatment not in TREATMENT_CHOICES:
            problems.append(f"treatment: valor desconhecido '{self.treatment}'")
        custom = {"d_c_rate": self.d_c_rate, "d_p": self.d_p, "t_on": self.t_on, "t_off": self.t_off}
        given = [k for k, v in custom.items() if v is not None]
        if self.treatment in TREATMENT_PRESETS + ("none",) and given:
            problems.append(f"treatment: '{self.treatment}' fixa os parâmetros; remova {', '.join(given)}")
        if self.treatment == "continuous" and self.d_c_rate is None:
            problems.append("d_c_rate: obrigatório para treatment=continuous")
        if self.treatment == "pulsed":
            for key in ("d_p", "t_on", "t_off"):
                if custom[key] is None:
                    problems.append(f"{key}: obrigatório para treatment=pulsed")
        if any(t < 0 for t in self.snapshot_times):
            problems.append("snapshot_times: tempos devem ser >= 0")
        if problems:
            raise ValueError(" | ".join(problems))
        return self

    def geometry(self) -> GridGeometry:
        return GridGeometry.from_cell_radius(self.r_c)

    @property
    def exposure_enabled(self) -> bool:
        if self.exposure_adaptation is not None:
            return self.exposure_adaptation
        return self.scenario == Scenario.DRUG_INDUCED

    @property
    def stops_on_vascularization(self) -> bool:
        if self.stop_on_vascularization is not None:
            return self.stop_on_vascularization
        return self.scenario == Scenario.ANGIO_ONLY

    @property
    def sensing_radius(self) -> float:
        return self.sensing_radius_factor * self.r_c

    @property
    def has_tumour(self) -> bool:
        return self.scenario != Scenario.ANGIO_ONLY

    def mutation_config(self) -> "MutationConfig":
        modes = {
            Scenario.SPONTANEOUS: MutationMode.SPONTANEOUS,
            Scenario.DRUG_INDUCED: MutationMode.DRUG_INDUCED,
        }
        return MutationConfig(
            mode=modes.get(self.scenario, MutationMode.NONE),
            mu=self.mu,
            factor_range=(self.factor_lo, self.factor_hi),
            clamp_range=(self.clamp_lo, self.clamp_hi),
            enabled_from=self.t_init,
            d_ref=self.d_ref,
        )

    def resistance_config(self) -> "ResistanceConfig":
        fraction = self.preexisting_fraction if self.scenario == Scenario.PRE_EXISTING else 0.0
        return ResistanceConfig(
            preexisting_fraction=fraction,
            th_multi=self.th_multi,
            th_death=self.th_death,
            exposure_threshold=self.exposure_threshold,
            threshold_increment_factor=self.threshold_increment,
            exposure_enabled=self.exposure_enabled,
        )


class MutationConfig(BaseModel):
    """Configuração da mutação aleatória consecutiva"""
    mode: MutationMode = MutationMode.NONE
    mu: float = Field(default=0.0, ge=0)
    factor_range: Tuple[float, float] = (0.7, 1.7)
    clamp_range: Tuple[float, float] = (0.5, 4.0)
    enabled_from: float = 0.0
    d_ref: float = Field(default=2.0, gt=0)


class ResistanceConfig(BaseModel):
    """Resistência pré-existente e adaptação por exposição"""
    preexisting_fraction: float = Field(default=0.01, ge=0, le=1)
    th_multi: int = Field(default=3, ge=1)
    th_death: float = Field(default=0.5, gt=0)
    exposure_threshold: float = Field(default=5.0, ge=0)
    threshold_increment_factor: float = Field(default=1.1, ge=1)
    exposure_enabled: bool = False

    @property
    def threshold_cap(self) -> float:
        return self.th_multi * self.th_death


class TreatmentSchedule(BaseModel):
    """Esquema de suprimento de droga S_d(t)"""
    kind: ScheduleKind
    t_init: float = Field(default=14.0, ge=0)
    d_c: float = Field(default=0.0, ge=0)
    d_p: float = Field(default=0.0, ge=0)
    t_on: float = Field(default=50.0, gt=0)
    t_off: float = Field(default=0.0, ge=0)
    period_length: float = Field(default=50.0, gt=0)
    name: Optional[str] = None


# ==================== RESULTADOS ====================

class StatsRow(BaseModel):
    """Registro por macro-passo"""
    t: float
    n: int
    n_normoxic: int
    n_hypoxic: int
    mean_damage: float
    std_damage: float
    vessels: int
    tips: int
    branches: int
    anastomoses: int
    self_loops: int
    resistant_fraction: float = 0.0
    min_threshold: float = 0.0
    std_threshold: float = 0.0
    mean_threshold: float = 0.0
    vascularized: bool = False


class PopulationStats(BaseModel):
    """Série temporal de estatísticas da população"""
    th_death: float = 0.5
    t_init: float = 14.0
    rows: List[StatsRow] = Field(default_factory=list)

    def append(self, row: StatsRow):
        self.rows.append(row)


class MilestoneSummary(BaseModel):
    """Marcos detectados; ausentes ficam como None"""
    declining_point: Optional[float] = None
    shifting_point: Optional[float] = None
    extinction_time: Optional[float] = None
    vascularization_time: Optional[float] = None
    nadir_time: Optional[float] = None
    bulk_deaths: List[float] = Field(default_factory=list)
    outcome: Outcome = Outcome.RUNNING


class RunSummary(BaseModel):
    """Resumo de uma execução"""
    seed: int
    outcome: Outcome
    milestones: MilestoneSummary
    steps: int
    final_t: float
    final_population: int
    out_dir: Optional[str] = None
    error: Optional[str] = None


class BatchSummary(BaseModel):
    """Agregado de várias sementes"""
    seeds: List[int]
    runs: List[RunSummary]
    failures: Dict[int, str] = Field(default_factory=dict)
    outcome_frequencies: Dict[str, float] = Field(default_factory=dict)
    milestone_stats: Dict[str, Dict[str, float]] = Field(default_factory=dict)
