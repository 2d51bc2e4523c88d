from __future__ import annotations

import math

import numpy as np
import pytest
from numpy.polynomial.hermite_e import hermegauss

from branchctl.configuration import Configuration
from branchctl.control import zero_policy
from branchctl.cost import estimate_J, verification_residual
from branchctl.kinetic import (
    KineticError,
    KineticSpec,
    hopf_cole_check,
    inner_mask,
    kinetic_cost,
    kinetic_feedback,
    kinetic_model,
    kinetic_value_handle,
    solve_h,
)
from branchctl.population import Population
from branchctl.simulator import SimConfig
from conftest import one_atom


def quadrature_h(tau, x, nodes=80):
    """-log E[exp(-(x + W_tau)^2)] by Gauss-Hermite quadrature (probabilists' weights)."""
    z, w = hermegauss(nodes)
    vals = np.exp(-(x[:, None] + math.sqrt(tau) * z[None, :]) ** 2) @ w / math.sqrt(2 * math.pi)
    return -np.log(vals)


def test_quadrature_oracle_matches_closed_form():
    x = np.linspace(-2, 2, 9)
    tau = 0.7
    exact = x**2 / (1 + 2 * tau) + 0.5 * math.log(1 + 2 * tau)
    assert np.max(np.abs(quadrature_h(tau, x) - exact)) <= 1e-12


def test_zero_terminal_gives_zero():
    sol = solve_h(KineticSpec.zero(n_x=101))
    assert np.all(sol.h == 0.0) and np.all(sol.Dh == 0.0)
    assert hopf_cole_check(KineticSpec.zero(n_x=101)) == 0.0
    pop = Population.from_configuration(one_atom(0.3), 0.2)
    assert np.all(kinetic_feedback(sol)(pop) == 0.0)


def test_quadratic_terminal_against_quadrature():
    spec = KineticSpec.quadratic()
    sol = solve_h(spec)
    m = inner_mask(spec.x)
    assert sol.h[-1].tolist() == spec.H_grid.tolist()
    worst = 0.0
    for k in range(0, sol.t.size, 250):
        tau = spec.T - sol.t[k]
        if tau == 0:
            continue
        worst = max(worst, float(np.max(np.abs(sol.h[k, m] - quadrature_h(tau, spec.x[m])))))
    assert worst <= 1e-3


def test_even_terminal_gives_even_h_and_odd_feedback():
    sol = solve_h(KineticSpec.quadratic(n_x=201))
    assert np.max(np.abs(sol.h - sol.h[:, ::-1])) <= 1e-12
    assert np.max(np.abs(sol.Dh + sol.Dh[:, ::-1])) <= 1e-12


def test_hopf_cole_fixture_and_refinement():
    errs = [hopf_cole_check(KineticSpec.quadratic(n_x=n)) for n in (101, 201, 401)]
    assert errs[-1] <= 1e-3
    assert errs[0] > errs[1] > errs[2]


def test_hopf_cole_refuses_branching_potential():
    with pytest.raises(KineticError):
        hopf_cole_check(KineticSpec.quadratic(n_x=51, gamma=1.0, p=(0.0, 0.0, 1.0)))


def test_monotone_in_terminal_data():
    lo = KineticSpec(H_fn=lambda x: x**2, n_x=201)
    hi = KineticSpec(H_fn=lambda x: x**2 + 0.5 * (1 + np.cos(3 * x)), n_x=201)
    assert np.all(solve_h(lo).h <= solve_h(hi).h)
    # with a branching potential too
    kw = dict(n_x=201, gamma=0.5, p=(0.2, 0.3, 0.5))
    assert np.all(solve_h(KineticSpec(H_fn=lambda x: x**2, **kw)).h
                  <= solve_h(KineticSpec(H_fn=lambda x: x**2 + 1.0, **kw)).h)


def test_stability_is_enforced():
    with pytest.raises(KineticError):
        solve_h(KineticSpec.quadratic(n_x=401), n_t=10)
    with pytest.raises(KineticError):
        KineticSpec.quadratic(n_x=2)
    with pytest.raises(KineticError):
        KineticSpec(H_fn=lambda x: np.where(np.abs(x) < 0.5, np.inf, 0.0), n_x=11)


def test_exports():
    sol = solve_h(KineticSpec.quadratic(n_x=11, x_lo=-1.0, x_hi=1.0))
    rows = sol.to_csv().strip().split("\n")
    assert len(rows) == sol.t.size + 1
    assert [float(v) for v in rows[-1].split(",")[1:]] == sol.h[-1].tolist()
    assert '"n_x": 11' in sol.metadata_json()


def test_feedback_beats_zero_policy():
    spec = KineticSpec.quadratic(steep=2.0, n_x=201)
    sol = solve_h(spec)
    m, c = kinetic_model(spec), kinetic_cost(spec)
    cfg = SimConfig(T=spec.T, dt=1e-2, seed=13)
    lam = one_atom(1.0)
    fb = estimate_J(lam, kinetic_feedback(sol), m, c, cfg, 4000)
    zero = estimate_J(lam, zero_policy(), m, c, cfg, 4000)
    assert fb.mean < zero.mean - 2 * math.hypot(fb.std_error, zero.std_error)


def test_residuals_with_kinetic_value():
    spec = KineticSpec.quadratic(n_x=201)
    sol = solve_h(spec)
    m, c = kinetic_model(spec), kinetic_cost(spec)
    lam = Configuration([((0,), np.array([0.5])), ((1,), np.array([-1.0]))], dim=1)
    w = kinetic_value_handle(sol)
    cfg = SimConfig(T=spec.T, dt=2e-3, seed=19)
    assert verification_residual(w, lam, kinetic_feedback(sol), m, c, cfg, 4000).martingale
    assert verification_residual(w, lam, zero_policy(), m, c, cfg, 4000).submartingale
