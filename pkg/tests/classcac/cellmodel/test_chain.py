"""Unit tests for the birth-death chain."""

import math

import numpy as np
import pytest

from classcac.cellmodel import chain
from classcac.cellmodel.exceptions import (
    ConfigInvariantError,
    ContractViolation,
    DegenerateChain,
    NumericalFailure,
)
from classcac.cellmodel.model import SystemConfig
from tests.classcac.constants import ERLANG_B_5_3, TABLE1_THRESHOLDS_K, TABLE1_THRESHOLDS_N

SINGLE_WEB = SystemConfig.parse_obj(
    {
        "capacity_kbps": 6000,
        "classes": [{"name": "web", "requested_kbps": 120, "gamma": [0.6, 0.4], "elastic": True, "mix_fraction": 1}],
    }
)


def _loss_system(servers: int) -> SystemConfig:
    return SystemConfig.parse_obj(
        {
            "capacity_kbps": 100 * servers,
            "classes": [{"name": "unit", "requested_kbps": 100, "gamma": [0, 0], "elastic": False, "mix_fraction": 1}],
        }
    )


def _direct_solve(spec: chain.ChainSpec) -> np.ndarray:
    """Solve the tridiagonal generator of the chain with a dense linear solver."""
    size = spec.thresholds.top + 1
    q = np.zeros((size, size))
    for i in range(1, size):
        q[i - 1, i] = chain.arrival_rate_at(i, spec)
        q[i, i - 1] = i * spec.service[i]
    q -= np.diag(q.sum(axis=1))
    system = q.T.copy()
    system[-1, :] = 1.0
    rhs = np.zeros(size)
    rhs[-1] = 1.0
    return np.linalg.solve(system, rhs)


def test_mean_bandwidth(table1_system: SystemConfig):
    assert chain.mean_bandwidth(table1_system) == pytest.approx(832 / 9, rel=1e-9)
    assert chain.mean_bandwidth(table1_system, 0) == pytest.approx(568 / 15, rel=1e-9)
    assert chain.mean_bandwidth(SINGLE_WEB, 1) < chain.mean_bandwidth(SINGLE_WEB)


def test_derive_thresholds_single_class():
    thresholds = chain.derive_thresholds(SINGLE_WEB)

    assert thresholds.N == 50
    assert thresholds.K == (125, 83)


def test_derive_thresholds_table1(table1_system: SystemConfig):
    thresholds = chain.derive_thresholds(table1_system)

    assert thresholds.N == TABLE1_THRESHOLDS_N
    assert thresholds.K == TABLE1_THRESHOLDS_K


def test_derive_thresholds_without_degradation():
    thresholds = chain.derive_thresholds(_loss_system(5))

    assert thresholds.N == 5
    assert thresholds.K == (5, 5)


def test_threshold_override():
    override = chain.ThresholdSet(N=2, K=(4, 3))

    assert chain.derive_thresholds(SINGLE_WEB, override) is override
    with pytest.raises(ConfigInvariantError):
        chain.derive_thresholds(SINGLE_WEB, chain.ThresholdSet(N=2, K=(4, 3, 3)))


@pytest.mark.parametrize(("n", "k"), [(5, (4, 3)), (2, (3, 4)), (-1, (3, 3))])
def test_threshold_monotonicity(n: int, k: tuple[int, ...]):
    with pytest.raises(ConfigInvariantError):
        chain.ThresholdSet(N=n, K=k)


def test_effective_service_rate():
    # GIVEN
    thresholds = chain.derive_thresholds(SINGLE_WEB)
    mu = 1 / 120

    # THEN
    assert chain.effective_service_rate(10, SINGLE_WEB, thresholds, 0.0, mu) == mu
    assert chain.effective_service_rate(100, SINGLE_WEB, thresholds, 0.0, mu) == pytest.approx(0.5 * mu)
    assert chain.effective_service_rate(100, SINGLE_WEB, thresholds, 1.0, mu) == pytest.approx(mu)
    assert chain.effective_service_rate(51, SINGLE_WEB, thresholds, 0.0, mu, table=[0.001] * 75) == 0.001
    with pytest.raises(ContractViolation):
        chain.effective_service_rate(126, SINGLE_WEB, thresholds, 0.0, mu)


def test_arrival_rate_at():
    spec = chain.ChainSpec(
        lam=(1.0, 2.0, 4.0), mu=1.0, service=(1.0,) * 6, thresholds=chain.ThresholdSet(N=2, K=(5, 4, 3))
    )

    assert chain.arrival_rate_at(1, spec) == 7.0
    assert chain.arrival_rate_at(3, spec) == 7.0
    assert chain.arrival_rate_at(4, spec) == 3.0
    assert chain.arrival_rate_at(5, spec) == 1.0
    with pytest.raises(ContractViolation):
        chain.arrival_rate_at(0, spec)


def test_chain_spec_rejects_bad_shapes():
    thresholds = chain.ThresholdSet(N=1, K=(2, 2))
    with pytest.raises(ConfigInvariantError):
        chain.ChainSpec(lam=(1.0,), mu=1.0, service=(1.0, 1.0, 1.0), thresholds=thresholds)
    with pytest.raises(ConfigInvariantError):
        chain.ChainSpec(lam=(1.0, 1.0), mu=1.0, service=(1.0, 1.0), thresholds=thresholds)
    with pytest.raises(ConfigInvariantError):
        chain.ChainSpec(lam=(1.0, 1.0), mu=1.0, service=(1.0, 1.0, 2.0), thresholds=thresholds)


def test_two_priority_chain():
    # GIVEN N=2, K1=3, K0=4 with every rate 1
    spec = chain.ChainSpec(lam=(1.0, 1.0), mu=1.0, service=(1.0,) * 5, thresholds=chain.ThresholdSet(N=2, K=(4, 3)))

    # WHEN
    dist = chain.stationary_distribution(spec)

    # THEN
    assert dist.P == pytest.approx([0.15, 0.3, 0.3, 0.2, 0.05], abs=1e-12)
    assert dist.P == pytest.approx(_direct_solve(spec), abs=1e-10)
    assert chain.handover_dropping(dist, spec.thresholds) == pytest.approx(0.05)
    assert chain.new_call_blocking(dist, spec.thresholds, 1) == pytest.approx(0.25)


def test_erlang_b_recursion():
    assert chain.erlang_b(5, 3) == pytest.approx(ERLANG_B_5_3, abs=1e-6)
    assert chain.erlang_b(0, 3) == 1.0
    assert chain.erlang_b(2, 1) == pytest.approx(0.2)


@pytest.mark.parametrize(("servers", "load"), [(5, 3.0), (10, 7.0), (50, 40.0)])
def test_loss_system_matches_erlang_b(servers: int, load: float):
    # GIVEN a rigid single class: every threshold equals N
    spec = chain.build_chain(_loss_system(servers), (0.0, load), 1.0)

    # WHEN
    dist = chain.stationary_distribution(spec)

    # THEN
    expected = chain.erlang_b(servers, load)
    assert chain.new_call_blocking(dist, spec.thresholds, 1) == pytest.approx(expected, rel=1e-12)
    assert chain.handover_dropping(dist, spec.thresholds) == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("load", [0.1, 1.0, 5.0, 20.0])
@pytest.mark.parametrize("servers", range(1, 51))
def test_erlang_b_grid(servers: int, load: float):
    # GIVEN
    spec = chain.build_chain(_loss_system(servers), (0.0, load), 1.0)
    terms = [load**k / math.factorial(k) for k in range(servers + 1)]

    # WHEN
    dist = chain.stationary_distribution(spec)

    # THEN
    expected = chain.erlang_b(servers, load)
    assert expected == pytest.approx(terms[-1] / math.fsum(terms), rel=1e-11)
    assert chain.new_call_blocking(dist, spec.thresholds, 1) == pytest.approx(expected, rel=1e-12)


def test_zero_arrivals():
    spec = chain.build_chain(SINGLE_WEB, (0.0, 0.0), 1 / 120)

    dist = chain.stationary_distribution(spec)

    assert dist.P[0] == 1.0
    assert dist.P[1:].sum() == 0.0


def test_degenerate_chains():
    thresholds = chain.ThresholdSet(N=1, K=(2, 2))
    idle = chain.ChainSpec(lam=(0.0, 0.0), mu=0.0, service=(0.0,) * 3, thresholds=thresholds)
    stuck = chain.ChainSpec(lam=(1.0, 0.0), mu=0.0, service=(0.0,) * 3, thresholds=thresholds)

    with pytest.raises(DegenerateChain):
        chain.stationary_distribution(idle)
    with pytest.raises(DegenerateChain):
        chain.stationary_distribution(stuck)


@pytest.mark.parametrize("total_rate", [0.2, 1.0, 2.0, 5.0])
def test_table1_chain_balance(table1_system: SystemConfig, total_rate: float):
    # GIVEN
    lam = (total_rate / 3, *(2 * total_rate / 3 * c.mix_fraction for c in table1_system.classes))
    spec = chain.build_chain(table1_system, lam, 1 / 120, phi=0.7)

    # WHEN
    dist = chain.stationary_distribution(spec)

    # THEN
    assert dist.P.sum() == pytest.approx(1.0, abs=1e-12)
    assert chain.balance_residuals(spec, dist).max() <= 1e-12 * total_rate
    assert dist.P == pytest.approx(_direct_solve(spec), abs=1e-10)
    blocking = [chain.handover_dropping(dist, spec.thresholds)]
    blocking += [chain.new_call_blocking(dist, spec.thresholds, m) for m in range(1, 5)]
    assert blocking == sorted(blocking)


def test_large_load_stays_finite():
    # 400 states with a heavy load rescale many times
    system = _loss_system(400)
    spec = chain.build_chain(system, (0.0, 2000.0), 1.0)

    dist = chain.stationary_distribution(spec)

    assert np.isfinite(dist.P).all()
    assert dist.P.sum() == pytest.approx(1.0)
    assert chain.handover_dropping(dist, spec.thresholds) == pytest.approx(chain.erlang_b(400, 2000.0), rel=1e-9)


def test_default_phi_is_rigid_share(table1_system: SystemConfig):
    share = chain.rigid_share(table1_system)
    explicit = chain.build_chain(table1_system, (0.1, 0.1, 0.1, 0.1, 0.1), 1.0, phi=share)

    assert share == pytest.approx((32 / 3) / (832 / 9))
    assert chain.build_chain(table1_system, (0.1, 0.1, 0.1, 0.1, 0.1), 1.0).service == explicit.service


def test_forced_termination():
    assert chain.handover_propensity(240, 120) == pytest.approx(1 / 3)
    assert chain.forced_termination(0.0, 240, 120) == 0.0
    assert chain.forced_termination(1.0, 240, 120) == pytest.approx(1 / 3)
    assert chain.forced_termination(0.01, 240, 120) == pytest.approx(1 / 201)


def test_implied_handover_propensity():
    # GIVEN rates generated by a propensity of 1/3 without drops
    p_handover = chain.implied_handover_propensity(1.0, 0.5, 0.0)

    assert p_handover == pytest.approx(1 / 3)
    assert chain.implied_handover_propensity(0.0, 0.0, 0.0) is None


def test_handover_rate_fixed_point():
    # GIVEN a constant dropping probability the fixed point is closed form
    rate, p_drop = chain.handover_rate_fixed_point(1.0, 1 / 3, lambda new, ho: 0.1)

    assert p_drop == 0.1
    assert rate == pytest.approx((1 / 3) / (1 - (1 / 3) * 0.9))


def test_handover_rate_fixed_point_with_erlang_drop():
    def _drop(new_rate: float, handover_rate: float) -> float:
        return chain.erlang_b(5, new_rate + handover_rate)

    rate, p_drop = chain.handover_rate_fixed_point(2.0, 0.5, _drop)

    assert p_drop == pytest.approx(_drop(2.0, rate))
    assert rate == pytest.approx(2.0 * chain.handover_load_factor(0.5, p_drop), rel=1e-8)


def test_split_total_rate():
    new_rate, handover_rate, p_drop = chain.split_total_rate(1.5, 1 / 3, lambda new, ho: 0.0)

    assert new_rate == pytest.approx(1.0)
    assert handover_rate == pytest.approx(0.5)
    assert p_drop == 0.0


def test_fixed_point_divergence():
    flip = iter([1.0, 0.0] * 200)

    with pytest.raises(NumericalFailure):
        chain.split_total_rate(1.0, 0.5, lambda new, ho: next(flip))


def test_composition_state(table1_system: SystemConfig):
    empty = chain.composition_state(0, table1_system)
    light = chain.composition_state(TABLE1_THRESHOLDS_N, table1_system)
    deep = chain.composition_state(TABLE1_THRESHOLDS_K[0] + 5, table1_system)

    assert empty.level == 0
    assert light.level == 0
    assert light.alloc_kbps == (32, 120, 256, 60)
    assert deep.profile == 0
    assert deep.level == 1.0
    assert deep.alloc_kbps == pytest.approx((32, 48, 76.8, 12))
