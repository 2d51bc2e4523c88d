from __future__ import annotations

import json
import math

import numpy as np
import pytest

from branchctl import noise
from branchctl.coefficients import MeanFieldCoefficients, ModelBounds, mf_lift
from branchctl.configuration import Configuration
from branchctl.control import constant_policy, zero_policy
from branchctl.genealogy import ROOT, GenealogyError, is_admissible
from branchctl.noise import Stream
from branchctl.presets import get_preset, logistic_mf
from branchctl.simulator import (
    CapExceeded,
    MomentObserver,
    SimConfig,
    next_candidate,
    population_stats,
    resolve_branching,
    simulate,
    simulate_batch,
    step_diffusion,
)
from conftest import one_atom


def model(b=0.0, s=0.0, g=0.0, p=(0.0, 1.0, 0.0), C_gamma=None):
    p = np.asarray(p, dtype=float)
    mf = MeanFieldCoefficients(
        drift=lambda x, mu, a: np.full((x.shape[0], 1), float(b)),
        diffusion=lambda x, mu, a: np.full((x.shape[0], 1, 1), float(s)),
        rate=lambda x, mu, a: np.full(x.shape[0], float(g)),
        offspring=lambda x, mu, a: np.broadcast_to(p, (x.shape[0], p.size)).copy(),
        bounds=ModelBounds(L=0.0, C_b=abs(b), C_sigma=abs(s), C_gamma=g if C_gamma is None else C_gamma,
                           C1_phi=2.0, C2_phi=2.0),
    )
    return mf_lift(mf)


def atoms(*xs):
    return Configuration([((r,), np.array([float(x)])) for r, x in enumerate(xs)], dim=1)


def test_step_diffusion_examples():
    lam = atoms(0.25, -1.0)
    assert step_diffusion(lam, zero_policy(), 0.0, 0.1, model(), seed=1) == lam
    moved = step_diffusion(lam, zero_policy(), 0.0, 0.5, model(b=1.0), seed=1)
    assert moved.positions[:, 0].tolist() == [0.75, -0.5]
    with pytest.raises(ValueError):
        step_diffusion(lam, zero_policy(), 0.0, 0.0, model(), seed=1)


def test_step_diffusion_gaussian_increments():
    h = 0.01
    lam = Configuration([((r,), np.array([0.0])) for r in range(2000)], dim=1)
    counters = {}
    inc = []
    for _ in range(5):
        nxt = step_diffusion(lam, zero_policy(), 0.0, h, model(s=1.0), seed=3, counters=counters)
        inc.append(nxt.positions[:, 0] - lam.positions[:, 0])
        lam = nxt
    inc = np.concatenate(inc)
    assert inc.size == 10_000
    se_mean = inc.std(ddof=1) / math.sqrt(inc.size)
    assert abs(inc.mean()) <= 3 * se_mean
    # SE of the sample variance for Gaussian data: h sqrt(2/(n-1))
    assert abs(inc.var(ddof=1) - h) <= 3 * h * math.sqrt(2 / (inc.size - 1))


def test_next_candidate_examples():
    assert next_candidate((0,), 0.3, 0.0, seed=1) == math.inf
    assert next_candidate((0,), 0.3, 2.0, seed=1, counter=4) == next_candidate((0,), 0.3, 2.0, seed=1, counter=4)
    n = 100_000
    gaps = noise.exponential(np.full(n, noise.seed_key(5), dtype=np.uint64),
                             np.full(n, noise.label_key((0,)), dtype=np.uint64),
                             Stream.CLOCK, np.arange(n, dtype=np.uint64), 2.0)
    assert gaps[7] == next_candidate((0,), 0.0, 2.0, seed=5, counter=7)
    assert abs(gaps.mean() - 0.5) <= 3 * gaps.std(ddof=1) / math.sqrt(n)


def test_resolve_branching_examples():
    lam = atoms(0.0, 1.0)
    assert all(resolve_branching(lam, (0,), zero_policy(), model(g=0.0, C_gamma=1.0), seed=1, counter=c) is None
               for c in range(200))
    assert all(resolve_branching(lam, (1,), zero_policy(), model(g=1.0, p=(1.0, 0.0, 0.0)), seed=1, counter=c) == 0
               for c in range(200))
    with pytest.raises(GenealogyError):
        resolve_branching(lam, (2,), zero_policy(), model(g=1.0), seed=1)


def test_thinning_acceptance_frequency():
    # the acceptance test is z = C_gamma * u < gamma, with u the mark-stream uniform
    n = 100_000
    lam = atoms(0.0)
    u = noise.uniform(np.full(n, noise.seed_key(2), dtype=np.uint64),
                      np.full(n, noise.label_key((0,)), dtype=np.uint64),
                      Stream.MARK, np.arange(n, dtype=np.uint64))
    m = model(g=1.0, p=(0.0, 0.0, 1.0), C_gamma=2.0)
    accepted = 2.0 * u < 1.0
    freq = accepted.mean()
    assert abs(freq - 0.5) <= 3 * math.sqrt(0.25 / n)
    for c in range(500):
        k = resolve_branching(lam, (0,), zero_policy(), m, seed=2, counter=c)
        assert (k is not None) == bool(accepted[c])
        assert k in (None, 2)


def test_simulate_trivial_dynamics():
    lam = atoms(0.5, -0.5)
    tr = simulate(lam, zero_policy(), model(), SimConfig(T=1.0, dt=0.1, seed=4))
    assert len(tr.events) == 1 and tr.events[0].kind == "horizon"
    assert tr.events[0].time == 1.0 and tr.final == lam
    assert all(conf == lam for _, conf in tr.frames)


def test_pure_death_extinction_time():
    m, _ = get_preset("pure-death", gamma=1.0)
    R = 10_000
    res = simulate_batch(one_atom(), zero_policy(), m, SimConfig(T=10.0, dt=1e-2, seed=8), R)
    t = res.end_time
    expect = 1.0 - math.exp(-10.0)  # mean of min(Exp(1), 10)
    assert abs(t.mean() - expect) <= 3 * t.std(ddof=1) / math.sqrt(R)


def test_yule_mean_mass_smaller_batch():
    m, _ = get_preset("yule", gamma=0.5)
    R = 4000
    obs = MomentObserver(R)
    simulate_batch(one_atom(), zero_policy(), m, SimConfig(T=1.0, dt=1e-2, seed=21), R, observers=[obs])
    st = population_stats(obs)
    assert abs(st.mean_final_mass - math.exp(0.5)) <= 3 * st.se_final_mass
    assert st.mean_sup_mass <= math.e + 3 * st.se_sup_mass


def test_constant_population_stats():
    lam = atoms(1.0, 2.0, 3.0)
    obs = MomentObserver(5)
    simulate_batch(lam, zero_policy(), model(), SimConfig(T=1.0, dt=0.1, seed=0), 5, observers=[obs])
    st = population_stats(obs)
    assert st.mean_sup_mass == 3.0 and st.max_sup_mass == 3.0 and st.se_sup_mass == 0.0


def test_batch_replicate_equals_single_run():
    m, _ = logistic_mf()
    lam = atoms(-0.5, 0.5)
    cfg = SimConfig(T=1.0, dt=1e-2, seed=77)
    res = simulate_batch(lam, constant_policy(0.1), m, cfg, 6, record=True)
    for r in (0, 3, 5):
        single = simulate(lam, constant_policy(0.1), m, SimConfig(T=1.0, dt=1e-2, seed=res.seeds[r]))
        batch = res.trajectories[r]
        assert single.final == batch.final
        assert [(e.time, e.kind, e.parent, e.k) for e in single.events] == \
               [(e.time, e.kind, e.parent, e.k) for e in batch.events]


def test_simulate_is_deterministic_and_admissible():
    m, _ = logistic_mf()
    lam = atoms(-0.5, 0.5)
    cfg = SimConfig(T=1.0, dt=1e-2, seed=123)
    a = simulate(lam, zero_policy(), m, cfg)
    b = simulate(lam, zero_policy(), m, cfg)
    assert a.to_jsonl() == b.to_jsonl() and a.frames_csv() == b.frames_csv()
    times = [e.time for e in a.events]
    assert all(s < t for s, t in zip(times, times[1:]))
    assert all(cfg.t0 <= t <= cfg.T for t in times)
    for e in a.events:
        assert is_admissible(e.config.labels)
    for _, conf in a.frames:
        assert is_admissible(conf.labels)


def test_offspring_sit_at_parent_position():
    m, _ = logistic_mf(gamma0=3.0)
    tr = simulate(atoms(0.0), zero_policy(), m, SimConfig(T=1.0, dt=1e-2, seed=9))
    branches = [e for e in tr.events if e.kind == "branch" and e.k >= 2]
    assert branches
    for e in branches:
        pos = dict(e.config.atoms())
        kids = [pos[e.parent + (d,)] for d in range(e.k)]
        assert all(np.array_equal(kids[0], x) for x in kids)


def test_caps():
    m, _ = get_preset("yule", gamma=5.0)
    with pytest.raises(CapExceeded) as err:
        simulate(one_atom(), zero_policy(), m, SimConfig(T=5.0, dt=1e-2, seed=1, max_population=3))
    assert err.value.kind == "population" and err.value.trajectory is not None
    with pytest.raises(CapExceeded) as err:
        simulate(one_atom(), zero_policy(), m, SimConfig(T=5.0, dt=1e-2, seed=1, max_events=1))
    assert err.value.kind == "event"
    res = simulate_batch(one_atom(), zero_policy(), m, SimConfig(T=5.0, dt=1e-2, seed=1, max_population=3), 10)
    assert res.discarded == 10


def test_dt_halving_smoke():
    m, _ = logistic_mf()
    lam = atoms(-0.5, 0.5)
    means = []
    for dt in (1e-2, 5e-3):
        R = 3000
        obs = MomentObserver(R)
        simulate_batch(lam, zero_policy(), m, SimConfig(T=1.0, dt=dt, seed=31), R, observers=[obs])
        st = population_stats(obs)
        means.append((st.mean_final_mass, st.se_final_mass))
    (a, sa), (b, sb) = means
    assert abs(a - b) <= 4 * math.hypot(sa, sb)


def test_exports():
    m, _ = get_preset("yule", gamma=2.0)
    tr = simulate(one_atom(0.5), zero_policy(), m, SimConfig(T=0.5, dt=0.1, seed=2))
    lines = tr.to_jsonl().strip().split("\n")
    rows = [json.loads(s) for s in lines]
    assert rows[-1]["kind"] == "horizon"
    assert all(r["kind"] == "branch" and r["k"] == 2 for r in rows[:-1])
    csv = tr.frames_csv().strip().split("\n")
    assert csv[0] == "time,label,x1"
    assert all(float(line.split(",")[2]) == 0.5 for line in csv[1:])


def test_sim_config_validation():
    with pytest.raises(ValueError):
        SimConfig(t0=1.0, T=1.0)
    with pytest.raises(ValueError):
        SimConfig(dt=0.0)
    with pytest.raises(ValueError):
        SimConfig(max_population=0)


def test_root_label_runs():
    m, _ = get_preset("yule", gamma=1.0)
    tr = simulate(Configuration([(ROOT, np.array([0.0]))], dim=1), zero_policy(), m,
                  SimConfig(T=1.0, dt=0.1, seed=6))
    assert all(is_admissible(e.config.labels) for e in tr.events)
