"""
Serviço de campos contínuos: TAF, droga e oxigênio
"""
import logging
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import solve_banded

from models import (
    FieldKind,
    GridGeometry,
    MoveCoefficients,
    NumericalFailureError,
    ScalarField,
    SimConfig,
    StepSizeError,
)

logger = logging.getLogger(__name__)

# f(u, x, y, t) avaliado na malha inteira
Reaction = Callable[[np.ndarray, np.ndarray, np.ndarray, float], np.ndarray]


def _first_bad_node(values: np.ndarray) -> Tuple[int, int]:
    bad = np.argwhere(~np.isfinite(values))
    return tuple(int(v) for v in bad[0])


def correct_negative_pair(p_minus: float, p_plus: float) -> Tuple[float, float]:
    """Correção de um par oposto de coeficientes negativos

    Um negativo: o parceiro recebe o módulo e ele vai a zero.
    Os dois negativos: troca com sinal invertido.
    """
    if p_minus < 0 and p_plus < 0:
        return -p_plus, -p_minus
    if p_minus < 0:
        return 0.0, p_plus - p_minus
    if p_plus < 0:
        return p_minus - p_plus, 0.0
    return p_minus, p_plus


class FieldService:
    """Serviço para malha, passos ADI e coeficientes de movimento"""

    # ==================== CONSTRUÇÃO DE CAMPOS ====================

    def init_linear_taf(self, k: float, geometry: GridGeometry) -> ScalarField:
        """Solução fechada c = k·y do problema de Laplace com c(x,0)=0 e c(x,1)=k"""
        if k < 0:
            raise ValueError(f"k deve ser >= 0 (obtido {k})")
        _, y = geometry.mesh()
        return ScalarField(geometry, k * y, FieldKind.TAF)

    def _stamp(self, positions: np.ndarray, geometry: GridGeometry, radius: float,
               nearest_fallback: bool) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Pares (sítio, nó) com o nó a até `radius` do sítio"""
        if positions.size == 0:
            empty = np.empty(0, dtype=np.int64)
            return empty, empty, empty
        if np.any(positions < 0.0) or np.any(positions > 1.0) or not np.all(np.isfinite(positions)):
            bad = int(np.argwhere(~((positions >= 0.0) & (positions <= 1.0)).all(axis=1))[0][0])
            raise ValueError(f"Posição fora do domínio: {tuple(positions[bad])}")

        dx = geometry.dx
        span = int(np.ceil(radius / dx)) + 1
        base_i = np.clip(np.floor(positions[:, 0] / dx).astype(np.int64), 0, geometry.n_x - 1)
        base_j = np.clip(np.floor(positions[:, 1] / dx).astype(np.int64), 0, geometry.n_y - 1)
        offsets = np.arange(-span, span + 1)
        oi, oj = np.meshgrid(offsets, offsets, indexing="ij")
        oi, oj = oi.ravel(), oj.ravel()

        cand_i = base_i[:, None] + oi[None, :]
        cand_j = base_j[:, None] + oj[None, :]
        inside = (cand_i >= 0) & (cand_i < geometry.n_x) & (cand_j >= 0) & (cand_j < geometry.n_y)
        node_x = (cand_i + 0.5) * dx
        node_y = (cand_j + 0.5) * dx
        dist2 = (node_x - positions[:, [0]]) ** 2 + (node_y - positions[:, [1]]) ** 2
        hit = inside & (dist2 <= radius * radius * (1.0 + 1e-12))

        if nearest_fallback:
            # Sítios sem nenhum nó no disco marcam o nó do próprio quadrado
            missing = ~hit.any(axis=1)
            if missing.any():
                center = int(np.argwhere((oi == 0) & (oj == 0))[0][0])
                hit[missing, center] = True

        site, slot = np.nonzero(hit)
        return site, cand_i[site, slot], cand_j[site, slot]

    def deposit_indicator(self, positions, geometry: GridGeometry, radius: Optional[float] = None,
                          nearest_fallback: bool = False) -> ScalarField:
        """Indicador 0/1 dos nós a até R_c (= dx/2) de alguma posição"""
        pts = np.asarray(positions, dtype=np.float64).reshape(-1, 2)
        radius = geometry.dx / 2.0 if radius is None else radius
        _, ii, jj = self._stamp(pts, geometry, radius, nearest_fallback)
        values = np.zeros(geometry.shape)
        values[ii, jj] = 1.0
        return ScalarField(geometry, values, FieldKind.INDICATOR)

    def deposit_rates(self, positions, rates, geometry: GridGeometry, radius: Optional[float] = None,
                      nearest_fallback: bool = True) -> np.ndarray:
        """Soma, em cada nó, das taxas dos sítios cujo disco cobre o nó"""
        pts = np.asarray(positions, dtype=np.float64).reshape(-1, 2)
        rates = np.asarray(rates, dtype=np.float64).reshape(-1)
        if rates.shape[0] != pts.shape[0]:
            raise ValueError("Número de taxas difere do número de posições")
        radius = geometry.dx / 2.0 if radius is None else radius
        site, ii, jj = self._stamp(pts, geometry, radius, nearest_fallback)
        values = np.zeros(geometry.shape)
        np.add.at(values, (ii, jj), rates[site])
        return values

    # ==================== AMOSTRAGEM ====================

    def sample(self, field: ScalarField, x, y) -> np.ndarray:
        """Interpolação bilinear nos pontos (x, y); fora da faixa de nós usa a borda"""
        geometry = field.geometry
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        fx = np.clip(x / geometry.dx - 0.5, 0.0, geometry.n_x - 1.0)
        fy = np.clip(y / geometry.dx - 0.5, 0.0, geometry.n_y - 1.0)
        i0 = np.minimum(np.floor(fx).astype(np.int64), geometry.n_x - 2)
        j0 = np.minimum(np.floor(fy).astype(np.int64), geometry.n_y - 2)
        wx = fx - i0
        wy = fy - j0
        v = field.values
        return ((1 - wx) * (1 - wy) * v[i0, j0] + wx * (1 - wy) * v[i0 + 1, j0]
                + (1 - wx) * wy * v[i0, j0 + 1] + wx * wy * v[i0 + 1, j0 + 1])

    # ==================== ADI ====================

    @staticmethod
    def _implicit_band(n: int, r: float) -> np.ndarray:
        """Banda de (I − r/2·δ²) com fantasma espelhado; colunas somam 1"""
        ab = np.zeros((3, n))
        ab[0, 1:] = -0.5 * r
        ab[1, :] = 1.0 + r
        ab[1, 0] = ab[1, -1] = 1.0 + 0.5 * r
        ab[2, :-1] = -0.5 * r
        return ab

    @staticmethod
    def _second_difference(u: np.ndarray, axis: int) -> np.ndarray:
        """δ² não dividido, com fluxo nulo nas paredes"""
        pad = [(0, 0), (0, 0)]
        pad[axis] = (1, 1)
        g = np.pad(u, pad, mode="edge")
        if axis == 0:
            return g[2:, :] - 2.0 * u + g[:-2, :]
        return g[:, 2:] - 2.0 * u + g[:, :-2]

    def adi_step(self, field: ScalarField, diff_coeff: float, reaction: Optional[Reaction],
                 dt: float, t: float = 0.0) -> ScalarField:
        """Um passo ADI completo (implícito em x, depois em y) com reação em U^k"""
        if dt <= 0:
            raise ValueError(f"dt deve ser > 0 (obtido {dt})")
        if diff_coeff < 0:
            raise ValueError(f"Coeficiente de difusão negativo: {diff_coeff}")
        u = field.values
        if not np.all(np.isfinite(u)):
            raise NumericalFailureError("Entrada não finita no passo ADI", _first_bad_node(u), field.kind)

        geometry = field.geometry
        r = diff_coeff * dt / geometry.dx ** 2
        if reaction is None:
            forcing = 0.0
        else:
            x, y = geometry.mesh()
            forcing = 0.5 * dt * np.asarray(reaction(u, x, y, t), dtype=np.float64)

        # Meio passo implícito em x
        rhs = u + 0.5 * r * self._second_difference(u, axis=1) + forcing
        half = solve_banded((1, 1), self._implicit_band(geometry.n_x, r), rhs, check_finite=False)

        # Meio passo implícito em y
        rhs = half + 0.5 * r * self._second_difference(half, axis=0) + forcing
        new = solve_banded((1, 1), self._implicit_band(geometry.n_y, r), rhs.T, check_finite=False).T

        if not np.all(np.isfinite(new)):
            node = _first_bad_node(new)
            logger.error(f"Erro no passo ADI do campo {field.kind.value}: valor não finito no nó {node}")
            raise NumericalFailureError("Saída não finita no passo ADI", node, field.kind)
        return ScalarField(geometry, np.ascontiguousarray(new), field.kind)

    # ==================== CAMPOS DO MODELO ====================

    def step_taf(self, c: ScalarField, hypoxic_positions, vessel_positions, params: SimConfig,
                 dt: float, t: float = 0.0) -> ScalarField:
        """∂c/∂t = D_c Δc − ξ_c c + η χ_hip − λ c χ_vaso"""
        geometry = c.geometry
        chi_h = self.deposit_indicator(hypoxic_positions, geometry, nearest_fallback=True).values
        chi_v = self.deposit_indicator(vessel_positions, geometry).values

        def reaction(u, x, y, tt):
            return -params.xi_c * u + params.eta * chi_h - params.lam * u * chi_v

        new = self.adi_step(c, params.d_c, reaction, dt, t)
        np.maximum(new.values, 0.0, out=new.values)
        return new

    def step_drug(self, d: ScalarField, tumour_positions, vessel_positions, supply_rate: float,
                  params: SimConfig, dt: float, t: float = 0.0) -> ScalarField:
        """∂d/∂t = D_d Δd − ξ_d d − ρ_d d χ_tumor + S_d(t) χ_vaso"""
        if supply_rate < 0:
            raise ValueError(f"Taxa de suprimento negativa: {supply_rate}")
        geometry = d.geometry
        chi_a = self.deposit_indicator(tumour_positions, geometry, nearest_fallback=True).values
        chi_v = self.deposit_indicator(vessel_positions, geometry).values

        def reaction(u, x, y, tt):
            return -params.xi_d * u - params.rho_d * u * chi_a + supply_rate * chi_v

        new = self.adi_step(d, params.d_d, reaction, dt, t)
        np.maximum(new.values, 0.0, out=new.values)
        return new

    def step_oxygen(self, o: ScalarField, tumour_uptake_sites: Sequence[Tuple[Tuple[float, float], float]],
                    vessel_positions, params: SimConfig, dt: float, t: float = 0.0) -> ScalarField:
        """∂o/∂t = D_o Δo − ξ_o o − Σ ρ_o^a χ_a + S_o (1 − o) χ_vaso"""
        geometry = o.geometry
        if len(tumour_uptake_sites):
            positions = [site[0] for site in tumour_uptake_sites]
            rates = [site[1] for site in tumour_uptake_sites]
            uptake = self.deposit_rates(positions, rates, geometry)
        else:
            uptake = np.zeros(geometry.shape)
        chi_v = self.deposit_indicator(vessel_positions, geometry).values

        def reaction(u, x, y, tt):
            return -params.xi_o * u - uptake + params.s_o * (1.0 - u) * chi_v

        new = self.adi_step(o, params.d_o, reaction, dt, t)
        np.clip(new.values, 0.0, 1.0, out=new.values)
        return new

    # ==================== COEFICIENTES DE MOVIMENTO ====================

    def _raw_coefficient_field(self, c: ScalarField, dt: float, params: SimConfig) -> np.ndarray:
        """P_0..P_4 brutos em todos os nós, forma (5, n_x, n_y)"""
        g = np.pad(c.values, 1, mode="edge")
        center = g[1:-1, 1:-1]
        east, west = g[2:, 1:-1], g[:-2, 1:-1]
        north, south = g[1:-1, 2:], g[1:-1, :-2]
        h2 = c.geometry.dx ** 2
        chi = params.chi_0 / (1.0 + params.alpha * center)
        diffusive = params.d_n * dt / h2
        drift_x = chi * dt / (4.0 * h2) * (east - west)
        drift_y = chi * dt / (4.0 * h2) * (north - south)
        p0 = 1.0 - 4.0 * diffusive - chi * dt / h2 * (east + west + north + south - 4.0 * center)
        return np.stack([p0, diffusive - drift_x, diffusive + drift_x,
                         diffusive - drift_y, diffusive + drift_y])

    def move_coefficients(self, c: ScalarField, i: int, j: int, dt: float,
                          params: SimConfig) -> MoveCoefficients:
        """Coeficientes corrigidos e normalizados no nó (i, j)"""
        if not c.geometry.contains((i, j)):
            raise ValueError(f"Nó fora da malha: {(i, j)}")
        n_x, n_y = c.geometry.shape
        v = c.values
        center = v[i, j]
        east, west = v[min(i + 1, n_x - 1), j], v[max(i - 1, 0), j]
        north, south = v[i, min(j + 1, n_y - 1)], v[i, max(j - 1, 0)]
        h2 = c.geometry.dx ** 2
        chi = params.chi_0 / (1.0 + params.alpha * center)
        diffusive = params.d_n * dt / h2
        drift_x = chi * dt / (4.0 * h2) * (east - west)
        drift_y = chi * dt / (4.0 * h2) * (north - south)
        p0 = 1.0 - 4.0 * diffusive - chi * dt / h2 * (east + west + north + south - 4.0 * center)
        if p0 < 0:
            raise StepSizeError(f"P_0 = {p0:.6g} < 0 com dt={dt}", (i, j), c.kind)

        left, right = correct_negative_pair(diffusive - drift_x, diffusive + drift_x)
        down, up = correct_negative_pair(diffusive - drift_y, diffusive + drift_y)
        total = p0 + left + right + down + up
        if not np.isfinite(total) or total <= 0:
            raise NumericalFailureError(f"Soma de coeficientes inválida: {total}", (i, j), c.kind)
        return MoveCoefficients(p0 / total, left / total, right / total, down / total, up / total,
                                normalized=True)

    def move_coefficient_field(self, c: ScalarField, dt: float, params: SimConfig) -> np.ndarray:
        """Versão vetorizada de move_coefficients para a malha inteira, forma (5, n_x, n_y)"""
        p = self._raw_coefficient_field(c, dt, params)
        if np.any(p[0] < 0):
            node = tuple(int(v) for v in np.argwhere(p[0] < 0)[0])
            raise StepSizeError(f"P_0 < 0 com dt={dt}", node, c.kind)
        for a, b in ((1, 2), (3, 4)):
            lo, hi = p[a].copy(), p[b].copy()
            both = (lo < 0) & (hi < 0)
            only_lo = (lo < 0) & ~both
            only_hi = (hi < 0) & ~both
            p[a] = np.where(both, -hi, np.where(only_lo, 0.0, np.where(only_hi, lo - hi, lo)))
            p[b] = np.where(both, -lo, np.where(only_lo, hi - lo, np.where(only_hi, 0.0, hi)))
        return p / p.sum(axis=0, keepdims=True)


# Instância global do serviço de campos
field_service = FieldService()
