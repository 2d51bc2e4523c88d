from __future__ import annotations

import math

import numpy as np
import pytest

from branchctl import noise
from branchctl.coefficients import CostSpec
from branchctl.configuration import Configuration
from branchctl.control import constant_policy, zero_policy
from branchctl.cost import (
    EstimateError,
    ResidualReport,
    estimate_J,
    growth_report,
    pathwise_cost,
    verification_residual,
)
from branchctl.presets import get_preset, logistic_mf
from branchctl.simulator import SimConfig, simulate
from conftest import one_atom


def _death_value(T):
    def w(tt, pop):
        return pop.group_mass() * np.exp(-(T - tt))

    return w


def _mass_value(tt, pop):
    return pop.group_mass().astype(float)


def test_pathwise_cost_deterministic_fixture():
    # yule at rate 0: one particle, running cost a^2/2 with a = 1, terminal cost = mass
    m, c = get_preset("yule", gamma=0.0)
    tr = simulate(one_atom(), constant_policy(1.0), m, SimConfig(T=1.0, dt=0.1, seed=0), record_steps=True)
    assert pathwise_cost(tr, c, constant_policy(1.0)) == pytest.approx(1.5, abs=1e-12)


def test_pathwise_cost_matches_batch_values():
    m, c = logistic_mf()
    lam = Configuration([((0,), np.array([-0.5])), ((1,), np.array([0.5]))], dim=1)
    pol = constant_policy(0.3)
    cfg = SimConfig(T=1.0, dt=1e-2, seed=41)
    est = estimate_J(lam, pol, m, c, cfg, 8, keep_values=True)
    for r in range(8):
        tr = simulate(lam, pol, m, SimConfig(T=1.0, dt=1e-2, seed=noise.replicate_seed(41, r)), record_steps=True)
        assert pathwise_cost(tr, c, pol) == pytest.approx(est.values[r], rel=1e-12, abs=1e-12)


def test_estimate_against_pure_death_closed_form():
    # E[ a^2/2 * min(tau, T) + 1{tau > T} ] with tau ~ Exp(1), a = 1
    m, c = get_preset("pure-death", gamma=1.0)
    T = 1.0
    est = estimate_J(one_atom(), constant_policy(1.0), m, c, SimConfig(T=T, dt=1e-3, seed=3), 20_000)
    exact = 0.5 * (1.0 - math.exp(-T)) + math.exp(-T)
    assert abs(est.mean - exact) <= 3 * est.std_error + 1e-3


def test_estimate_is_linear_in_cost():
    m, c1 = logistic_mf()
    c2 = CostSpec(running=lambda pop, a: pop.x[:, 0] ** 2, terminal=lambda pop: 2.0 * pop.group_mass(), name="c2")
    cfg = SimConfig(T=1.0, dt=1e-2, seed=17)
    lam = one_atom(0.2)
    pol = constant_policy(-0.4)
    j1 = estimate_J(lam, pol, m, c1, cfg, 500).mean
    j2 = estimate_J(lam, pol, m, c2, cfg, 500).mean
    j12 = estimate_J(lam, pol, m, c1 + c2, cfg, 500).mean
    assert abs(j12 - (j1 + j2)) <= 1e-12 * abs(j12)


def test_estimate_requires_two_replicates():
    m, c = get_preset("yule")
    with pytest.raises(ValueError):
        estimate_J(one_atom(), zero_policy(), m, c, SimConfig(), 1)


def test_estimate_fails_on_discards():
    m, c = get_preset("yule", gamma=5.0)
    with pytest.raises(EstimateError) as err:
        estimate_J(one_atom(), zero_policy(), m, c, SimConfig(T=3.0, dt=1e-2, seed=1, max_population=4), 50)
    assert err.value.discarded > 0


def test_residual_report_verdicts():
    rep = ResidualReport(np.array([0.0, 1.0, 2.0, 3.0]), np.array([0.0, 0.5, -0.5]), np.array([0.1, 0.1, 0.1]), 100)
    assert rep.verdicts() == ["martingale", "submartingale", "fail"]
    assert not rep.martingale and not rep.submartingale
    rows = rep.to_csv().strip().split("\n")
    assert rows[0] == "checkpoint,gap_mean,gap_se,verdict" and rows[-1].endswith("fail")


def test_residual_exact_value_is_a_martingale():
    # pure death, no running cost: w(t, lam) = |lam| e^{-(T - t)}
    m, c = get_preset("pure-death", gamma=1.0)
    lam = Configuration([((r,), np.array([0.0])) for r in range(3)], dim=1)
    cfg = SimConfig(T=1.0, dt=1e-3, seed=5)
    rep = verification_residual(_death_value(1.0), lam, zero_policy(), m, c, cfg, 10_000)
    assert rep.martingale and len(rep.gap_mean) == 7


def test_residual_wrong_value_is_flagged():
    # |V_s| alone decreases in expectation, so its increments are negative
    m, c = get_preset("pure-death", gamma=1.0)
    lam = Configuration([((r,), np.array([0.0])) for r in range(3)], dim=1)
    rep = verification_residual(_mass_value, lam, zero_policy(), m, c, SimConfig(T=1.0, dt=1e-3, seed=5), 10_000)
    assert not rep.submartingale
    assert "fail" in rep.verdicts()


def test_residual_rejects_bad_checkpoints():
    m, c = get_preset("pure-death")
    with pytest.raises(ValueError):
        verification_residual(_mass_value, one_atom(), zero_policy(), m, c, SimConfig(), 10, checkpoints=[0.5, 0.2])


def _samples(fn, n=40, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for k in range(n):
        scale = 0.5 * (k + 1)
        lam = Configuration([((r,), scale * rng.standard_normal(1)) for r in range(1 + k % 3)], dim=1)
        out.append((lam, fn(lam)))
    return out


def test_growth_report_quadratic_passes():
    rep = growth_report(_samples(lambda lam: float(np.sum(lam.positions**2)) + len(lam)))
    assert not rep.violation and rep.C <= 1.0 + 1e-12


def test_growth_report_flags_superquadratic():
    rep = growth_report(_samples(lambda lam: float(np.sum(np.abs(lam.positions) ** 4))))
    assert rep.violation


def test_growth_report_needs_samples():
    with pytest.raises(ValueError):
        growth_report(_samples(lambda lam: 0.0, n=5))
