"""Pinned-seed check bundles: moments, lq, hjb, kinetic, symmetry.

Each suite returns a :class:`SuiteReport` with one verdict per check.
Wall-clock timings are kept apart from the numeric payload so that reruns
produce identical result files.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .configuration import Configuration, distance_d1, relabel
from .control import ControlPolicy, constant_policy, perturb
from .cost import estimate_J, verification_residual
from .genealogy import LabelPermutation, label_distance, label_norm
from .hjb import ActionGrid, Geometry, hjb_solve, permutation_invariance_check
from .kinetic import (
    KineticSpec,
    hopf_cole_check,
    kinetic_cost,
    kinetic_feedback,
    kinetic_model,
    solve_h,
)
from .population import Population
from .presets import logistic_mf, pure_death, yule
from .riccati import LQSpec, lq_cost, lq_feedback, lq_model, lq_value, lq_value_handle, solve_riccati
from .simulator import MomentObserver, SimConfig, population_stats, simulate, simulate_batch

SUITES = ("moments", "lq", "hjb", "kinetic", "symmetry")


@dataclass
class CheckResult:
    name: str
    passed: bool
    values: dict = field(default_factory=dict)
    seconds: float = 0.0
    criterion: int = 0  # acceptance criterion number; 0 marks a supplementary check

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}"


@dataclass
class SuiteReport:
    name: str
    checks: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def results_json(self) -> dict:
        return {"suite": self.name, "passed": self.passed,
                "checks": [{"name": c.name, "criterion": c.criterion, "passed": c.passed, "values": c.values}
                           for c in self.checks]}

    def timing_json(self) -> dict:
        return {c.name: c.seconds for c in self.checks}


def _one(x: float = 0.0) -> Configuration:
    return Configuration([((0,), np.array([float(x)]))], dim=1)


class _Timer:
    def __enter__(self):
        self.t = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self.t


# -- moments --------------------------------------------------------------

def _moment_run(m, lam, T, dt, seed, replicates):
    obs = MomentObserver(replicates)
    res = simulate_batch(lam, constant_policy(0.0), m, SimConfig(T=T, dt=dt, seed=seed), replicates,
                         observers=[obs])
    return population_stats(obs, res.ok), res


def suite_moments(seed: int = 20240601, replicates: int = 20000) -> SuiteReport:
    rep = SuiteReport("moments")
    m, _ = yule(0.5)
    B = m.bounds
    with _Timer() as tm:
        st, _ = _moment_run(m, _one(), 1.0, 1e-3, seed, replicates)
    target = math.exp(0.5)
    bound1 = math.exp(B.C_gamma * B.C1_phi)
    ok_mean = abs(st.mean_final_mass - target) <= 3 * st.se_final_mass
    ok_sup = st.mean_sup_mass <= bound1 + 3 * st.se_sup_mass
    rep.checks.append(CheckResult(
        "yule mean mass E|V_T| = e^0.5 within 3SE", bool(ok_mean),
        {"mean": st.mean_final_mass, "se": st.se_final_mass, "target": target}, tm.seconds, criterion=1))
    rep.checks.append(CheckResult(
        "yule E sup|V| <= e^(C_gamma C1) + 3SE", bool(ok_sup),
        {"mean_sup": st.mean_sup_mass, "se": st.se_sup_mass, "bound": bound1}, tm.seconds, criterion=1))
    rep.checks.append(CheckResult("yule runtime < 30 s", tm.seconds < 30.0, {}, tm.seconds, criterion=1))

    bound2 = math.exp(B.C_gamma * (B.C1_phi + B.C2_phi))
    ok2 = st.mean_sup_mass_sq <= bound2 + 3 * st.se_sup_mass_sq
    rep.checks.append(CheckResult(
        "yule E sup|V|^2 <= e^(C_gamma (C1 + C2)) + 3SE", bool(ok2),
        {"mean_sup_sq": st.mean_sup_mass_sq, "se": st.se_sup_mass_sq, "bound": bound2}, tm.seconds, criterion=2))

    ml, _ = logistic_mf()
    Bl = ml.bounds
    lam = Configuration([((0,), np.array([-0.5])), ((1,), np.array([0.5]))], dim=1)
    with _Timer() as tl:
        stl, _ = _moment_run(ml, lam, 1.0, 1e-2, seed + 1, replicates)
    bl = len(lam) ** 2 * math.exp(Bl.C_gamma * (Bl.C1_phi + Bl.C2_phi))
    okl = stl.mean_sup_mass_sq <= bl + 3 * stl.se_sup_mass_sq
    rep.checks.append(CheckResult(
        "logistic-mf E sup|V|^2 <= |V0|^2 e^(C_gamma (C1 + C2)) + 3SE", bool(okl),
        {"mean_sup_sq": stl.mean_sup_mass_sq, "se": stl.se_sup_mass_sq, "bound": bl}, tl.seconds, criterion=2))
    b1 = len(lam) * math.exp(Bl.C_gamma * Bl.C1_phi)
    rep.checks.append(CheckResult(
        "logistic-mf E sup|V| <= |V0| e^(C_gamma C1) + 3SE", stl.mean_sup_mass <= b1 + 3 * stl.se_sup_mass,
        {"mean_sup": stl.mean_sup_mass, "se": stl.se_sup_mass, "bound": b1}, tl.seconds))

    md, _ = pure_death()
    Bd = md.bounds
    with _Timer() as td:
        std, _ = _moment_run(md, lam, 1.0, 1e-3, seed + 2, replicates)
    bd1 = len(lam) * math.exp(Bd.C_gamma * Bd.C1_phi)
    bd2 = len(lam) ** 2 * math.exp(Bd.C_gamma * (Bd.C1_phi + Bd.C2_phi))
    rep.checks.append(CheckResult(
        "pure-death E sup|V| <= |V0| e^(C_gamma C1) + 3SE", std.mean_sup_mass <= bd1 + 3 * std.se_sup_mass,
        {"mean_sup": std.mean_sup_mass, "se": std.se_sup_mass, "bound": bd1}, td.seconds))
    rep.checks.append(CheckResult(
        "pure-death E sup|V|^2 <= |V0|^2 e^(C_gamma (C1 + C2)) + 3SE",
        std.mean_sup_mass_sq <= bd2 + 3 * std.se_sup_mass_sq,
        {"mean_sup_sq": std.mean_sup_mass_sq, "se": std.se_sup_mass_sq, "bound": bd2}, td.seconds))
    return rep


# -- lq -------------------------------------------------------------------

LQ_FIXTURES = [(0.0, 0.0), (1.0, 0.0), (0.0, 0.2), (1.0, 0.2)]


def suite_lq(seed: int = 7, replicates: int = 10000, dt: float = 1e-3, dt_residual: float = 5e-3,
             residual_seeds=(11, 12, 13), constants=(-1.0, 0.0, 1.0)) -> SuiteReport:
    rep = SuiteReport("lq")
    lam = _one(1.0)
    with _Timer() as tq:
        sol0 = solve_riccati(LQSpec.scalar_canonical(), 1000)
    err = float(np.max(np.abs(sol0.Q[:, 0, 0] - 1.0 / (1.0 + 2.0 * (1.0 - sol0.t)))))
    rep.checks.append(CheckResult("riccati Q closed form, max error <= 1e-8", err <= 1e-8,
                                  {"max_error": err}, tq.seconds, criterion=3))

    total = 0.0
    for sig, gam in LQ_FIXTURES:
        spec = LQSpec.scalar_canonical(sigma=sig, gamma=gam)
        with _Timer() as t1:
            sol = solve_riccati(spec, 1000)
            est = estimate_J(lam, lq_feedback(sol), lq_model(spec), lq_cost(spec),
                             SimConfig(T=1.0, dt=dt, seed=seed), replicates)
        total += t1.seconds
        v = lq_value(sol, 0.0, lam)
        tol = max(3 * est.std_error, 0.02 * abs(v))
        rep.checks.append(CheckResult(
            f"lq MC cost vs value (sigma={sig:g}, gamma={gam:g}) within max(3SE, 2%)",
            abs(est.mean - v) <= tol,
            {"mc_mean": est.mean, "se": est.std_error, "value": v}, t1.seconds, criterion=3))
    rep.checks.append(CheckResult("lq consistency runtime < 2 min", total < 120.0, {}, total, criterion=3))

    # optimality against perturbed feedback, paired on common random numbers
    spec = LQSpec.scalar_canonical(sigma=1.0, gamma=0.2)
    sol = solve_riccati(spec, 1000)
    mdl, cst = lq_model(spec), lq_cost(spec)
    cfg = SimConfig(T=1.0, dt=dt_residual, seed=seed)
    with _Timer() as t0:
        opt = estimate_J(lam, lq_feedback(sol), mdl, cst, cfg, replicates, keep_values=True)
    for delta in (-0.25, 0.25, -0.5, 0.5, 1.0):
        with _Timer() as t1:
            pert = estimate_J(lam, perturb(lq_feedback(sol), delta), mdl, cst, cfg, replicates, keep_values=True)
        diff = pert.values - opt.values
        dmean = float(np.mean(diff))
        dse = float(np.std(diff, ddof=1) / math.sqrt(diff.size))
        ok = dmean >= -2 * dse and (abs(delta) < 0.5 or dmean > 2 * dse)
        rep.checks.append(CheckResult(
            f"lq perturbed feedback delta={delta:+g} costs more", bool(ok),
            {"optimal": opt.mean, "perturbed": pert.mean, "diff": dmean, "paired_se": dse},
            t0.seconds + t1.seconds, criterion=4))

    # verification residuals
    w = lq_value_handle(sol)
    for s in residual_seeds:
        cfg = SimConfig(T=1.0, dt=dt_residual, seed=s)
        with _Timer() as t1:
            r = verification_residual(w, lam, lq_feedback(sol), mdl, cst, cfg, replicates)
        rep.checks.append(CheckResult(
            f"lq residual, optimal feedback, martingale (seed {s})", r.martingale,
            {"gap_mean": r.gap_mean.tolist(), "gap_se": r.gap_se.tolist()}, t1.seconds, criterion=5))
        for a0 in constants:
            with _Timer() as t2:
                r = verification_residual(w, lam, constant_policy(a0), mdl, cst, cfg, replicates)
            rep.checks.append(CheckResult(
                f"lq residual, constant control {a0:+g}, submartingale (seed {s})", r.submartingale,
                {"gap_mean": r.gap_mean.tolist(), "gap_se": r.gap_se.tolist()}, t2.seconds, criterion=5))
    return rep


# -- hjb ------------------------------------------------------------------

def lq_grid_fixture(n_x: int = 201, n_actions: int = 161):
    spec = LQSpec.scalar_canonical(sigma=1.0, gamma=0.0)
    geo = Geometry(-4.0, 4.0, n_x, 1, 0.0, spec.T)
    return spec, geo, ActionGrid.box(-8.0, 8.0, n_actions)


def _heat_fixture(shift: float = 0.0, n_x: int = 41):
    from .coefficients import CostSpec, ModelBounds, ModelCoefficients

    m = ModelCoefficients(
        drift=lambda pop, a: a,
        diffusion=lambda pop, a: np.ones((len(pop), 1, 1)),
        rate=lambda pop, a: np.zeros(len(pop)),
        offspring=lambda pop, a: np.tile([0.0, 1.0], (len(pop), 1)),
        bounds=ModelBounds(L=0.0, C_b=1.0, C_sigma=1.0, C_gamma=0.0, C1_phi=1.0, C2_phi=0.0),
        name="heat",
    )
    c = CostSpec(
        running=lambda pop, a: 0.5 * a[:, 0] ** 2,
        terminal=lambda pop: pop.group_sum(pop.x[:, 0] ** 2) + shift,
        name=f"square+{shift:g}",
    )
    return m, c, Geometry(-3.0, 3.0, n_x, 1, 0.0, 1.0)


def comparison_pairs():
    """Three (model, cost1, cost2, geometry, actions) fixtures with terminal data ordered."""
    from .coefficients import CostSpec

    pairs = []
    m, c1, geo = _heat_fixture(0.0)
    _, c2, _ = _heat_fixture(0.25)
    pairs.append(("heat, x^2 vs x^2 + 1/4", m, c1, c2, geo, ActionGrid.box(-2, 2, 9)))

    md, cd = pure_death()
    cd2 = CostSpec(cd.running, lambda pop: 2.0 * pop.group_mass().astype(float), name="2 mass")
    pairs.append(("pure death, mass vs 2 mass", md, cd, cd2, Geometry(-2.0, 2.0, 11, 2, 0.0, 1.0),
                  ActionGrid.single(0.0)))

    ml, cl = logistic_mf()
    cl2 = CostSpec(cl.running, lambda pop: cl.terminal(pop) + pop.group_sum(np.abs(pop.x[:, 0])),
                   name="mass + sum |x|")
    pairs.append(("logistic-mf, mass vs mass + sum |x|", ml, cl, cl2, Geometry(-2.0, 2.0, 9, 2, 0.0, 1.0),
                  ActionGrid.box(-1, 1, 5)))
    return pairs


def suite_hjb() -> SuiteReport:
    rep = SuiteReport("hjb")
    spec, geo, acts = lq_grid_fixture()
    with _Timer() as t1:
        sol = solve_riccati(spec, 1000)
        vg, _ = hjb_solve(lq_model(spec), lq_cost(spec), geo, acts)
    x = geo.x
    inner = np.abs(x) <= 0.25 * (geo.x_hi - geo.x_lo) + 1e-12
    exact = np.array([lq_value(sol, geo.t0, _one(v)) for v in x])
    rel = float(np.max(np.abs(vg.values[1][0] - exact)[inner] / np.abs(exact[inner])))
    rep.checks.append(CheckResult("hjb n=1 LQ vs riccati value, relative error <= 2%", rel <= 0.02,
                                  {"max_rel_error": rel, "n_t": vg.n_t}, t1.seconds, criterion=6))
    md, cd = pure_death()
    with _Timer() as t2:
        vd, _ = hjb_solve(md, cd, Geometry(-4.0, 4.0, 41, 1, 0.0, 1.0), ActionGrid.single(0.0))
    err = float(np.max(np.abs(vd.values[1] - np.exp(-(1.0 - vd.times))[:, None])))
    rep.checks.append(CheckResult("hjb pure death vs exp(-(T - t)), error <= 1e-2", err <= 1e-2,
                                  {"max_error": err}, t2.seconds, criterion=6))
    rep.checks.append(CheckResult("hjb runtime < 1 min", t1.seconds + t2.seconds < 60.0, {},
                                  t1.seconds + t2.seconds, criterion=6))

    for name, m, c1, c2, g, a in comparison_pairs():
        with _Timer() as t3:
            v1, _ = hjb_solve(m, c1, g, a, stride=1)
            v2, _ = hjb_solve(m, c2, g, a, stride=1)
        term_ok = all(np.all(v1.values[n][-1] <= v2.values[n][-1]) for n in range(g.N_max + 1))
        ok = term_ok and all(np.all(v1.values[n] <= v2.values[n]) for n in range(g.N_max + 1))
        worst = max(float(np.max(v1.values[n] - v2.values[n])) for n in range(g.N_max + 1))
        rep.checks.append(CheckResult(f"hjb comparison: {name}", bool(ok),
                                      {"max(w1 - w2)": worst, "slices": int(v1.times.size)}, t3.seconds, criterion=7))
    return rep


# -- kinetic --------------------------------------------------------------

def suite_kinetic(seed: int = 5, replicates: int = 10000) -> SuiteReport:
    rep = SuiteReport("kinetic")
    with _Timer() as t0:
        z = solve_h(KineticSpec.zero())
    rep.checks.append(CheckResult("kinetic zero terminal gives h = 0 exactly", bool(np.all(z.h == 0.0)),
                                  {"max_abs": float(np.max(np.abs(z.h)))}, t0.seconds, criterion=10))
    spec = KineticSpec.quadratic()
    with _Timer() as t1:
        hc = hopf_cole_check(spec)
    rep.checks.append(CheckResult("kinetic Hopf-Cole cross-check sup error <= 1e-3", hc <= 1e-3,
                                  {"sup_error": hc}, t1.seconds, criterion=10))
    with _Timer() as t2:
        sol = solve_h(spec)
        m, c = kinetic_model(spec), kinetic_cost(spec)
        cfg = SimConfig(T=spec.T, dt=1e-3, seed=seed)
        lam = _one(1.0)
        e1 = estimate_J(lam, kinetic_feedback(sol), m, c, cfg, replicates)
        e0 = estimate_J(lam, constant_policy(0.0), m, c, cfg, replicates)
    rep.checks.append(CheckResult("kinetic feedback cost <= zero-policy cost - 2SE",
                                  e1.mean <= e0.mean - 2 * e0.std_error,
                                  {"feedback": e1.mean, "feedback_se": e1.std_error, "zero": e0.mean,
                                   "zero_se": e0.std_error}, t2.seconds, criterion=10))
    total = t0.seconds + t1.seconds + t2.seconds
    rep.checks.append(CheckResult("kinetic runtime < 1 min", total < 60.0, {}, total, criterion=10))
    return rep


# -- symmetry -------------------------------------------------------------

def brute_force_d1(lam: Configuration, mu: Configuration) -> float:
    """Minimum over all pairings of the cemetery-padded atom lists."""
    A, B = list(lam.atoms()), list(mu.atoms())
    size = max(len(A), len(B))
    A = A + [None] * (size - len(A))
    B = B + [None] * (size - len(B))

    def cost(a, b):
        if a is None and b is None:
            return 0.0
        if a is None or b is None:
            lab, x = a if b is None else b
            return label_norm(lab) + float(np.sum(np.abs(x))) + 1.0
        return label_distance(a[0], b[0]) + float(np.sum(np.abs(a[1] - b[1])))

    best = math.inf
    for perm in itertools.permutations(range(size)):
        best = min(best, math.fsum(cost(A[r], B[perm[r]]) for r in range(size)))
    return 0.0 if size == 0 else best


def random_admissible(rng, max_atoms: int = 6, dim: int = 1, scale: float = 2.0) -> Configuration:
    n = int(rng.integers(0, max_atoms + 1))
    labels = []
    for r in range(n):
        depth = int(rng.integers(0, 3))
        labels.append((r,) + tuple(int(v) for v in rng.integers(0, 3, size=depth)))
    return Configuration(zip(labels, scale * rng.standard_normal((n, dim))), dim=dim)


def mean_reverting_policy(k: float = 0.5) -> ControlPolicy:
    """Symmetric feedback ``a = -k (x - mean)``."""

    def act(pop: Population):
        return -k * (pop.x - pop.blind().mean_position())

    return ControlPolicy(act, action_dim=1, kind="custom", declared_symmetric=True)


def relabel_equivariance(lam0: Configuration, s: LabelPermutation, m, policy, cfg: SimConfig):
    """Frame-by-frame bit equality of the relabelled run; returns (ok, frames compared)."""
    base = simulate(lam0, policy, m, cfg)
    moved = simulate(relabel(s, lam0), policy, m, cfg, key_labels=s.inverse())
    ext = s.extend
    if len(base.frames) != len(moved.frames):
        return False, 0
    for (t1, c1), (t2, c2) in zip(base.frames, moved.frames):
        if t1 != t2 or relabel(_Extended(ext), c1) != c2:
            return False, 0
    return True, len(base.frames)


class _Extended:
    """Adapter exposing ``LabelPermutation.extend`` as a permutation for ``relabel``."""

    def __init__(self, f):
        self.f = f

    def __call__(self, lab):
        return self.f(lab)


def suite_symmetry(seed: int = 3, pairs: int = 50, distance_instances: int = 200) -> SuiteReport:
    rep = SuiteReport("symmetry")
    rng = np.random.default_rng(seed)
    with _Timer() as t0:
        worst = 0.0
        exact = True
        for _ in range(distance_instances):
            lam, mu = random_admissible(rng), random_admissible(rng)
            a, b = distance_d1(lam, mu), brute_force_d1(lam, mu)
            exact &= a == b
            worst = max(worst, abs(a - b))
    rep.checks.append(CheckResult(f"distance d1 equals brute force on {distance_instances} instances",
                                  bool(exact), {"max_abs_diff": worst}, t0.seconds, criterion=8))

    m, _ = logistic_mf()
    pol = mean_reverting_policy()
    with _Timer() as t1:
        ok_all, frames = True, 0
        for k in range(pairs):
            lam0 = random_admissible(rng, max_atoms=4)
            if len(lam0) == 0:
                lam0 = _one(0.0)
            perm = list(lam0.labels)
            rng.shuffle(perm)
            s = LabelPermutation(dict(zip(lam0.labels, perm)))
            ok, nf = relabel_equivariance(lam0, s, m, pol, SimConfig(T=1.0, dt=1e-2, seed=1000 + k))
            ok_all &= ok
            frames += nf
    rep.checks.append(CheckResult(f"simulator relabel equivariance, bit-exact on {pairs} pairs", bool(ok_all),
                                  {"frames_compared": frames}, t1.seconds, criterion=9))

    with _Timer() as t2:
        ml, cl = logistic_mf()
        vg, gp = hjb_solve(ml, cl, Geometry(-2.0, 2.0, 13, 3, 0.0, 1.0), ActionGrid.box(-1, 1, 5))
        inv = permutation_invariance_check(vg, probes=200, seed=seed)
    rep.checks.append(CheckResult("hjb permutation invariance: zero value gap, equal duplicated actions",
                                  inv.passed, {"value_gap": inv.max_value_discrepancy,
                                               "action_gap": inv.max_action_discrepancy}, t2.seconds, criterion=9))
    return rep


def run_suite(name: str, **kw) -> SuiteReport:
    fn = {"moments": suite_moments, "lq": suite_lq, "hjb": suite_hjb, "kinetic": suite_kinetic,
          "symmetry": suite_symmetry}.get(name)
    if fn is None:
        raise KeyError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
    return fn(**kw)
