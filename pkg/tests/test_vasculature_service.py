import logging
import math
from collections import Counter

import numpy as np
import pytest

from models import (
    AngiogenicNetwork,
    CellId,
    FieldKind,
    MoveCoefficients,
    NetworkEvent,
    ScalarField,
    StepSizeError,
    TipCell,
)
from services.field_service import field_service
from services.vasculature_service import Disc, TopBand, vasculature_service

UNIFORM = MoveCoefficients(0.0784, 0.2304, 0.2304, 0.2304, 0.2304, normalized=True)


def _network_with(geometry, *tips):
    network = AngiogenicNetwork(geometry=geometry)
    for tip in tips:
        network.tips.append(tip)
        network.owners[tip.square] = tip.id
        network.trajectories[tip.id] = [tip.square]
    return network


# ==================== Rede inicial ====================

def test_initial_network_has_six_evenly_spaced_tips(geometry):
    network = vasculature_service.initial_network(geometry)
    assert [t.square for t in network.tips] == [(8, 5), (25, 5), (41, 5), (58, 5), (75, 5), (91, 5)]
    assert [str(t.id) for t in network.tips] == ["1", "2", "3", "4", "5", "6"]
    assert network.vessel_count == 6


# ==================== Movimento ====================

def test_uniform_coefficients_give_symmetric_moves(geometry, params, rng):
    tip = TipCell(square=(50, 50), id=CellId(1))
    network = _network_with(geometry, tip)
    counts = Counter()
    draws = 100_000
    for _ in range(draws):
        tip.square, tip.active = (50, 50), True
        network.owners = {(50, 50): tip.id}
        counts[vasculature_service.tip_move(tip, network, None, 0.05, rng, params, coefficients=UNIFORM)] += 1
    freqs = [counts[sq] / draws for sq in ((49, 50), (51, 50), (50, 49), (50, 51))]
    assert max(freqs) - min(freqs) < 0.01
    assert counts[None] / draws == pytest.approx(0.0784, abs=0.005)


def test_degenerate_coefficients_keep_tip(geometry, params, rng):
    tip = TipCell(square=(50, 50), id=CellId(1))
    network = _network_with(geometry, tip)
    stay = MoveCoefficients(1.0, 0.0, 0.0, 0.0, 0.0, normalized=True)
    for _ in range(100):
        assert vasculature_service.tip_move(tip, network, None, 0.05, rng, params, coefficients=stay) is None
    assert tip.square == (50, 50)


def test_moves_never_leave_domain(geometry, params, rng):
    tip = TipCell(square=(0, 0), id=CellId(1))
    network = _network_with(geometry, tip)
    for _ in range(2000):
        tip.square, tip.active = (0, 0), True
        network.owners = {(0, 0): tip.id}
        entered = vasculature_service.tip_move(tip, network, None, 0.05, rng, params, coefficients=UNIFORM)
        assert entered in (None, (1, 0), (0, 1))


def test_gradient_drives_tip_upwards(geometry, params, rng):
    cfg = params.model_copy(update={"d_n": 0.0})
    c = field_service.init_linear_taf(5.0, geometry)
    tip = TipCell(square=(50, 10), id=CellId(1))
    network = _network_with(geometry, tip)
    for _ in range(80):
        vasculature_service.tip_move(tip, network, c, 0.05, rng, cfg)
    assert tip.active and tip.square == (50, tip.square[1])
    assert tip.square[1] > 55


def test_move_tips_halves_substep_on_negative_stay(geometry, params, rng):
    values = np.zeros(geometry.shape)
    values[49, 50] = values[51, 50] = values[50, 49] = values[50, 51] = 0.01
    c = ScalarField(geometry, values, FieldKind.TAF)
    network = _network_with(geometry, TipCell(square=(50, 50), id=CellId(1)))
    dt_sub = vasculature_service.move_tips(network, c, params, 0.0, rng)
    assert dt_sub == pytest.approx(0.05 / 16)


def test_move_tips_gives_up_after_max_halvings(geometry, params, rng):
    values = np.zeros(geometry.shape)
    values[49, 50] = values[51, 50] = values[50, 49] = values[50, 51] = 0.01
    c = ScalarField(geometry, values, FieldKind.TAF)
    network = _network_with(geometry, TipCell(square=(50, 50), id=CellId(1)))
    with pytest.raises(StepSizeError):
        vasculature_service.move_tips(network, c, params.model_copy(update={"max_tip_halvings": 2}), 0.0, rng)


# ==================== Ramificação ====================

def test_young_tip_never_branches(geometry, rng):
    c = field_service.init_linear_taf(5.0, geometry)
    tip = TipCell(square=(50, 99), id=CellId(1), age=0.4)
    network = _network_with(geometry, tip)
    for _ in range(1000):
        assert vasculature_service.try_branch(tip, network, c, 0.5, 1e6, 0.1, rng) is None


def test_branch_rate_at_global_maximum(geometry):
    c = field_service.init_linear_taf(5.0, geometry)
    tip = TipCell(square=(50, 99), id=CellId(1), age=1.0)
    assert vasculature_service.branch_probability(tip, c, 1.0, 0.1) == pytest.approx(1 - math.exp(-0.1))


def test_surrounded_tip_never_branches(geometry, rng):
    c = field_service.init_linear_taf(5.0, geometry)
    tip = TipCell(square=(50, 50), id=CellId(1), age=1.0)
    network = _network_with(geometry, tip)
    for square in ((49, 50), (51, 50), (50, 49), (50, 51)):
        network.owners[square] = CellId(9)
    for _ in range(1000):
        assert vasculature_service.try_branch(tip, network, c, 0.5, 1e6, 0.1, rng) is None


def test_branch_creates_two_daughter_tips(geometry, rng):
    c = field_service.init_linear_taf(5.0, geometry)
    tip = TipCell(square=(50, 50), id=CellId(3), age=1.0)
    network = _network_with(geometry, tip)
    tip1, tip2 = vasculature_service.try_branch(tip, network, c, 0.5, 1e6, 0.1, rng, t=2.0)
    assert tip not in network.tips and not tip.active
    assert tip1.square == (50, 50)
    assert tip2.square in ((49, 50), (51, 50), (50, 49), (50, 51))
    assert str(tip1.id) == "3.1" and str(tip2.id) == "3.2"
    assert network.owners[tip2.square] == tip2.id
    assert network.branches == 1
    assert network.events[-1].event == NetworkEvent.BRANCH
    assert tip1.age == tip2.age == 0.0


def test_age_tips_skips_inactive(geometry):
    active = TipCell(square=(10, 10), id=CellId(1))
    stopped = TipCell(square=(20, 10), id=CellId(2), active=False)
    network = _network_with(geometry, active, stopped)
    vasculature_service.age_tips(network, 0.1)
    assert active.age == pytest.approx(0.1) and stopped.age == 0.0


# ==================== Anastomose ====================

def test_fresh_square_claims_ownership(geometry, rng):
    tip = TipCell(square=(51, 50), id=CellId(1))
    network = _network_with(geometry, tip)
    vasculature_service.check_anastomosis(tip, (52, 50), network, rng, previous=(51, 50))
    assert network.owners[(52, 50)] == tip.id
    assert not network.events and tip.active


def test_self_loop_deactivates_tip(geometry, rng):
    tip = TipCell(square=(50, 50), id=CellId(1))
    network = _network_with(geometry, tip)
    network.owners[(50, 51)] = tip.id
    vasculature_service.check_anastomosis(tip, (50, 51), network, rng, t=1.0, previous=(51, 51))
    assert not tip.active
    assert network.self_loops == 1
    assert network.events[-1].event == NetworkEvent.SELF_LOOP
    assert network.windows[tip.id] == (0.0, 1.0)


def test_stepping_back_onto_departed_square_is_not_a_loop(geometry, params, rng):
    tip = TipCell(square=(50, 50), id=CellId(1))
    network = _network_with(geometry, tip)
    network.owners[(51, 50)] = tip.id
    network.trajectories[tip.id] = [(51, 50), (50, 50)]
    right = MoveCoefficients(0.0, 0.0, 1.0, 0.0, 0.0, normalized=True)
    assert vasculature_service.tip_move(tip, network, None, 0.05, rng, params, coefficients=right) == (51, 50)
    assert tip.active and network.self_loops == 0 and network.anastomoses == 0


def test_returning_to_older_trail_square_is_a_self_loop(geometry, params, rng):
    tip = TipCell(square=(50, 50), id=CellId(1))
    network = _network_with(geometry, tip)
    for square in ((51, 50), (51, 51), (50, 51)):
        network.owners[square] = tip.id
    network.trajectories[tip.id] = [(51, 50), (51, 51), (50, 51), (50, 50)]
    right = MoveCoefficients(0.0, 0.0, 1.0, 0.0, 0.0, normalized=True)
    vasculature_service.tip_move(tip, network, None, 0.05, rng, params, t=0.5, coefficients=right)
    assert not tip.active and network.self_loops == 1


def test_head_on_collision_is_a_fair_coin(geometry, rng):
    trials = 10_000
    mover_survived = 0
    for _ in range(trials):
        mover = TipCell(square=(51, 50), id=CellId(1))
        other = TipCell(square=(52, 50), id=CellId(2))
        network = _network_with(geometry, mover, other)
        mover.square = (52, 50)
        vasculature_service.check_anastomosis(mover, (52, 50), network, rng, previous=(51, 50))
        assert mover.active != other.active
        assert network.anastomoses == 1
        mover_survived += mover.active
    assert mover_survived / trials == pytest.approx(0.5, abs=0.02)


def test_entering_inactive_sprout_stops_tip(geometry, rng):
    mover = TipCell(square=(51, 50), id=CellId(1))
    dead = TipCell(square=(52, 50), id=CellId(2), active=False)
    network = _network_with(geometry, mover, dead)
    vasculature_service.check_anastomosis(mover, (52, 50), network, rng, previous=(51, 50))
    assert not mover.active and network.anastomoses == 1


# ==================== Proliferação endotelial ====================

def test_no_extension_between_boundaries(geometry, params, rng):
    c = field_service.init_linear_taf(5.0, geometry)
    network = _network_with(geometry, TipCell(square=(50, 10), id=CellId(1)))
    assert vasculature_service.endothelial_proliferation(network, 0.1, 0.2, c, params, rng) == 0


def test_ten_forced_extensions_over_eleven_and_a_quarter(geometry, params, rng):
    cfg = params.model_copy(update={"d_n": 0.0})
    c = field_service.init_linear_taf(5.0, geometry)
    tip = TipCell(square=(50, 10), id=CellId(1))
    network = _network_with(geometry, tip)
    assert vasculature_service.intervals_crossed(0.0, 11.25, 1.125) == 10
    assert vasculature_service.endothelial_proliferation(network, 0.0, 11.25, c, cfg, rng) == 10
    assert tip.square == (50, 20)
    assert network.forced_extensions == 10


def test_inactive_tips_never_extended(geometry, params, rng):
    c = field_service.init_linear_taf(5.0, geometry)
    tip = TipCell(square=(50, 10), id=CellId(1), active=False)
    network = _network_with(geometry, tip)
    assert vasculature_service.endothelial_proliferation(network, 0.0, 11.25, c, params, rng) == 0
    assert tip.square == (50, 10)


def test_forced_extension_halves_substep_on_negative_stay(geometry, params, rng):
    values = np.zeros(geometry.shape)
    values[49, 50] = values[51, 50] = values[50, 49] = values[50, 51] = 0.01
    c = ScalarField(geometry, values, FieldKind.TAF)
    network = _network_with(geometry, TipCell(square=(50, 50), id=CellId(1)))
    assert vasculature_service.endothelial_proliferation(network, 1.1, 1.2, c, params, rng) == 1


def test_forced_extension_logs_and_raises_after_max_halvings(geometry, params, rng, caplog):
    values = np.zeros(geometry.shape)
    values[49, 50] = values[51, 50] = values[50, 49] = values[50, 51] = 0.01
    c = ScalarField(geometry, values, FieldKind.TAF)
    tip = TipCell(square=(50, 50), id=CellId(1))
    network = _network_with(geometry, tip)
    cfg = params.model_copy(update={"max_tip_halvings": 2})
    with caplog.at_level(logging.ERROR, logger="services.vasculature_service"):
        with pytest.raises(StepSizeError):
            vasculature_service.endothelial_proliferation(network, 1.1, 1.2, c, cfg, rng)
    assert any("proliferação endotelial" in r.getMessage() for r in caplog.records)
    assert tip.square == (50, 50)


def test_intervals_crossed_counts_per_macro_step():
    steps = [vasculature_service.intervals_crossed(k * 0.1, (k + 1) * 0.1, 1.125) for k in range(113)]
    assert sum(steps) == 10
    assert max(steps) == 1


# ==================== Vascularização ====================

def test_empty_network_not_vascularized(geometry):
    assert not vasculature_service.vascularization_complete(AngiogenicNetwork(geometry=geometry), TopBand(0.99))


def test_vessel_at_top_completes_vascularization(geometry):
    network = _network_with(geometry, TipCell(square=(50, 99), id=CellId(1)))
    assert vasculature_service.vascularization_complete(network, TopBand(0.99))
    assert not vasculature_service.vascularization_complete(network, Disc(0.5, 0.5, 0.05))


def test_vessel_profile_counts_rows(geometry):
    network = _network_with(geometry, TipCell(square=(50, 10), id=CellId(1)), TipCell(square=(60, 10), id=CellId(2)))
    profile = vasculature_service.vessel_profile(network)
    row = float(geometry.coords()[1][10])
    assert profile[row] == 2
    assert sum(profile.values()) == 2
