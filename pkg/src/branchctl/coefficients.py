"""Model coefficients, costs, their declared constants, and probing of the
Lipschitz / growth / moment assumptions.

All callables are row-batched.  Dynamics take ``(pop, a)`` where ``pop`` is
a :class:`~branchctl.population.Population` and ``a`` an ``(n, q)`` array of
actions, one row per particle:

* ``drift``      -> ``(n, d)``
* ``diffusion``  -> ``(n, d, d')``
* ``rate``       -> ``(n,)``, non-negative
* ``offspring``  -> ``(n, K+1)``, rows are probability vectors on 0..K

Costs: ``running(pop, a) -> (n,)`` and ``terminal(pop) -> (n_groups,)``.
Use :func:`pointwise_coefficients` to wrap per-particle functions
``f(label, x, configuration, action)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .configuration import Configuration, distance_d1
from .population import MeasureView, Population

Batched = Callable[[Population, np.ndarray], np.ndarray]


class AssumptionError(ValueError):
    pass


@dataclass(frozen=True)
class ModelBounds:
    L: float = 1.0
    C_b: float = 1.0
    C_sigma: float = 1.0
    C_gamma: float = 0.0
    C1_phi: float = 1.0
    C2_phi: float = 0.0


@dataclass(frozen=True)
class ModelCoefficients:
    drift: Batched
    diffusion: Batched
    rate: Batched
    offspring: Batched
    bounds: ModelBounds
    dim: int = 1
    noise_dim: int = 1
    action_dim: int = 1
    # declared b == 0 and sigma == 0; lets the simulator skip the Euler update
    motionless: bool = False
    # closed action set as a box (lo, hi); None means all of R^q
    action_box: tuple | None = None
    name: str = "custom"


@dataclass(frozen=True)
class CostSpec:
    running: Batched
    terminal: Callable[[Population], np.ndarray]
    C_Psi: float = 1.0
    c_psi: float = 0.5
    name: str = "custom"

    def __add__(self, other: "CostSpec") -> "CostSpec":
        f1, f2, g1, g2 = self.running, other.running, self.terminal, other.terminal
        return CostSpec(
            running=lambda pop, a: f1(pop, a) + f2(pop, a),
            terminal=lambda pop: g1(pop) + g2(pop),
            C_Psi=self.C_Psi + other.C_Psi,
            c_psi=self.c_psi + other.c_psi,
            name=f"{self.name}+{other.name}",
        )


@dataclass(frozen=True)
class MeanFieldCoefficients:
    """Coefficients of the form ``f(x, mu, a)``: position, label-free measure view, action."""

    drift: Callable
    diffusion: Callable
    rate: Callable
    offspring: Callable
    bounds: ModelBounds
    dim: int = 1
    noise_dim: int = 1
    action_dim: int = 1
    motionless: bool = False
    action_box: tuple | None = None
    name: str = "mean-field"


@dataclass(frozen=True)
class MeanFieldCost:
    running: Callable  # (x, mu, a) -> (n,)
    terminal: Callable  # (mu) -> (n_groups,)
    C_Psi: float = 1.0
    c_psi: float = 0.5
    name: str = "mean-field"


def mf_lift(m: MeanFieldCoefficients) -> ModelCoefficients:
    def lift(f):
        return lambda pop, a: f(pop.x, MeasureView(pop), a)

    return ModelCoefficients(
        drift=lift(m.drift),
        diffusion=lift(m.diffusion),
        rate=lift(m.rate),
        offspring=lift(m.offspring),
        bounds=m.bounds,
        dim=m.dim,
        noise_dim=m.noise_dim,
        action_dim=m.action_dim,
        motionless=m.motionless,
        action_box=m.action_box,
        name=m.name,
    )


def mf_lift_cost(c: MeanFieldCost) -> CostSpec:
    run, term = c.running, c.terminal
    return CostSpec(
        running=lambda pop, a: run(pop.x, MeasureView(pop), a),
        terminal=lambda pop: term(MeasureView(pop)),
        C_Psi=c.C_Psi,
        c_psi=c.c_psi,
        name=c.name,
    )


def _row_configs(pop: Population) -> list:
    return [pop.configuration(g) for g in range(pop.n_groups)]


def _pointwise(f, out_shape):
    def batched(pop, a):
        confs = _row_configs(pop)
        out = [f(pop.labels[r], pop.x[r], confs[pop.group[r]], a[r]) for r in range(len(pop))]
        return np.asarray(out, dtype=float).reshape((len(pop),) + out_shape(pop))

    return batched


def pointwise_coefficients(b, sigma, gamma, offspring, bounds: ModelBounds, dim=1, noise_dim=1,
                           action_dim=1, n_offspring=3, **kw) -> ModelCoefficients:
    """Build coefficients from per-particle functions ``f(label, x, configuration, a)``.

    Slow (one Python call per particle); intended for custom models and tests.
    """
    return ModelCoefficients(
        drift=_pointwise(b, lambda pop: (dim,)),
        diffusion=_pointwise(sigma, lambda pop: (dim, noise_dim)),
        rate=_pointwise(gamma, lambda pop: ()),
        offspring=_pointwise(offspring, lambda pop: (n_offspring,)),
        bounds=bounds,
        dim=dim,
        noise_dim=noise_dim,
        action_dim=action_dim,
        **kw,
    )


def pointwise_cost(psi, Psi, C_Psi=1.0, c_psi=0.5, name="custom") -> CostSpec:
    """Costs from ``psi(label, x, configuration, a)`` and ``Psi(configuration)``."""

    def terminal(pop):
        return np.array([Psi(conf) for conf in _row_configs(pop)], dtype=float)

    return CostSpec(_pointwise(psi, lambda pop: ()), terminal, C_Psi=C_Psi, c_psi=c_psi, name=name)


def offspring_intervals(gamma_val: float, p) -> list:
    """Half-open intervals partitioning ``[0, gamma_val)``, the k-th of length gamma*p_k."""
    p = np.asarray(p, dtype=float)
    if gamma_val < 0:
        raise AssumptionError("branching rate must be non-negative")
    if np.any(p < 0):
        raise AssumptionError(f"negative offspring probability in {p.tolist()}")
    edges = gamma_val * np.concatenate([[0.0], np.cumsum(p)])
    edges[-1] = gamma_val
    return [(float(edges[k]), float(edges[k + 1])) for k in range(p.size)]


@dataclass(frozen=True)
class OffspringMoments:
    mean: float
    net: float
    net2: float
    factorial2: float


def offspring_moments(p) -> OffspringMoments:
    p = np.asarray(p, dtype=float)
    k = np.arange(p.size, dtype=float)
    return OffspringMoments(
        mean=float(np.dot(k, p)),
        net=float(np.dot(k - 1.0, p)),
        net2=float(np.dot((k - 1.0) ** 2, p)),
        factorial2=float(np.dot(k * (k - 1.0), p)),
    )


@dataclass
class Violation:
    check: str
    observed: float
    declared: float
    witness: dict


@dataclass
class ValidationReport:
    probes: int
    worst: dict = field(default_factory=dict)
    violations: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations

    def summary(self) -> str:
        lines = [f"probes={self.probes} verdict={'pass' if self.passed else 'FAIL'}"]
        lines += [f"  worst {k} = {v:.6g}" for k, v in sorted(self.worst.items())]
        for v in self.violations[:10]:
            lines.append(f"  violation {v.check}: observed {v.observed:.6g} > declared {v.declared:.6g}")
        return "\n".join(lines)


def _random_configuration(rng, dim, scale, max_atoms=3) -> Configuration:
    n = int(rng.integers(1, max_atoms + 1))
    # a mix of depths keeps the label argument non-trivial
    labels = [(r,) if rng.random() < 0.5 else (r, int(rng.integers(0, 3))) for r in range(n)]
    return Configuration(zip(labels, scale * rng.standard_normal((n, dim))), dim=dim)


def _random_action(rng, m: ModelCoefficients, scale) -> np.ndarray:
    if m.action_box is not None:
        lo, hi = m.action_box
        return rng.uniform(lo, hi, size=m.action_dim)
    return scale * rng.standard_normal(m.action_dim)


def _evaluate(m: ModelCoefficients, lam: Configuration, a_row: np.ndarray):
    pop = Population.from_configuration(lam)
    a = np.tile(a_row, (len(lam), 1))
    return (
        np.asarray(m.drift(pop, a), dtype=float).reshape(len(lam), m.dim),
        np.asarray(m.diffusion(pop, a), dtype=float).reshape(len(lam), m.dim, m.noise_dim),
        np.asarray(m.rate(pop, a), dtype=float).reshape(len(lam)),
        np.asarray(m.offspring(pop, a), dtype=float).reshape(len(lam), -1),
    )


def validate_assumptions(m: ModelCoefficients, c: CostSpec | None = None, probes: int = 200,
                         seed: int = 0, scale: float = 3.0, fd_step: float = 1e-3,
                         tol: float = 1e-9) -> ValidationReport:
    """Probe the declared constants on random (label, x, configuration, action) tuples.

    Violations are collected with the offending probe rather than raised.
    """
    if probes < 1:
        raise AssumptionError("need at least one probe")
    rng = np.random.default_rng(seed)
    B = m.bounds
    rep = ValidationReport(probes=probes)
    worst = {"L": 0.0, "C_b": 0.0, "C_sigma": 0.0, "C_gamma": 0.0, "C1_phi": 0.0, "C2_phi": 0.0,
             "prob_sum_err": 0.0, "min_prob": 1.0, "min_rate": np.inf}
    if c is not None:
        worst.update({"psi_upper": 0.0, "psi_lower": 0.0, "Psi_upper": 0.0, "Psi_lower": 0.0})

    def flag(check, observed, declared, witness):
        if observed > declared + tol:
            rep.violations.append(Violation(check, float(observed), float(declared), witness))

    for probe in range(probes):
        lam = _random_configuration(rng, m.dim, scale)
        a = _random_action(rng, m, scale)
        r = int(rng.integers(0, len(lam)))
        label, x = lam.labels[r], lam.positions[r]
        wit = {"probe": probe, "label": list(label), "x": x.tolist(), "a": a.tolist(), "config": lam.to_json()}
        b, sig, gam, p = (arr[r] for arr in _evaluate(m, lam, a))

        nb = float(np.linalg.norm(b))
        ns = float(np.linalg.norm(sig))
        c_b = nb / (1.0 + np.linalg.norm(x) + np.linalg.norm(a))
        mom = offspring_moments(p)
        psum = abs(p.sum() - 1.0)
        worst["C_b"] = max(worst["C_b"], c_b)
        worst["C_sigma"] = max(worst["C_sigma"], ns)
        worst["C_gamma"] = max(worst["C_gamma"], float(gam))
        worst["C1_phi"] = max(worst["C1_phi"], mom.mean)
        worst["C2_phi"] = max(worst["C2_phi"], mom.factorial2)
        worst["prob_sum_err"] = max(worst["prob_sum_err"], psum)
        worst["min_prob"] = min(worst["min_prob"], float(p.min()))
        worst["min_rate"] = min(worst["min_rate"], float(gam))
        flag("C_b", c_b, B.C_b, wit)
        flag("C_sigma", ns, B.C_sigma, wit)
        flag("C_gamma", gam, B.C_gamma, wit)
        flag("C1_phi", mom.mean, B.C1_phi, wit)
        flag("C2_phi", mom.factorial2, B.C2_phi, wit)
        flag("prob_sum", psum, 1e-12, wit)
        flag("prob_nonneg", -float(p.min()), 0.0, wit)
        flag("rate_nonneg", -float(gam), 0.0, wit)

        # Lipschitz quotient: move this atom and one other atom
        pos2 = lam.positions.copy()
        pos2[r] += fd_step * rng.standard_normal(m.dim)
        other = int(rng.integers(0, len(lam)))
        pos2[other] += fd_step * rng.standard_normal(m.dim)
        lam2 = Configuration(zip(lam.labels, pos2), dim=m.dim)
        b2, sig2, _, _ = (arr[r] for arr in _evaluate(m, lam2, a))
        denom = float(np.linalg.norm(pos2[r] - x)) + distance_d1(lam, lam2)
        if denom > 0:
            q = (np.linalg.norm(b - b2) + np.linalg.norm(sig - sig2)) / denom
            worst["L"] = max(worst["L"], float(q))
            flag("L", q, B.L, wit)

        if c is not None:
            pop = Population.from_configuration(lam)
            aa = np.tile(a, (len(lam), 1))
            psi = float(np.asarray(c.running(pop, aa), dtype=float)[r])
            Psi = float(np.asarray(c.terminal(pop), dtype=float)[0])
            nx, na = float(np.linalg.norm(x)), float(np.linalg.norm(a))
            up = psi / (1.0 + nx**2 + na**2)
            low = (c.c_psi * na**2 - psi) / (1.0 + nx)
            mass = len(lam)
            s1 = float(np.linalg.norm(lam.positions, axis=1).sum())
            s2 = float((lam.positions**2).sum())
            Up = Psi / (1.0 + s2 + mass**2)
            Low = -Psi / (1.0 + s1 + mass)
            worst["psi_upper"] = max(worst["psi_upper"], up)
            worst["psi_lower"] = max(worst["psi_lower"], low)
            worst["Psi_upper"] = max(worst["Psi_upper"], Up)
            worst["Psi_lower"] = max(worst["Psi_lower"], Low)
            flag("psi_upper", up, c.C_Psi, wit)
            flag("psi_lower", low, c.C_Psi, wit)
            flag("Psi_upper", Up, c.C_Psi, wit)
            flag("Psi_lower", Low, c.C_Psi, wit)

    rep.worst = {k: float(v) for k, v in worst.items()}
    return rep


def with_bounds(m: ModelCoefficients, **changes) -> ModelCoefficients:
    return replace(m, bounds=replace(m.bounds, **changes))
