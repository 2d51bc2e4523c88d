"""Feedback control policies."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .configuration import Configuration, ConfigurationError
from .genealogy import format_label
from .population import Population


@dataclass(frozen=True)
class ControlPolicy:
    """Markov feedback ``act(pop) -> (n, q)``; the time of each row is ``pop.t``."""

    act: Callable[[Population], np.ndarray]
    action_dim: int = 1
    kind: str = "custom"
    declared_symmetric: bool = False
    action_box: tuple | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def __call__(self, pop: Population) -> np.ndarray:
        a = np.asarray(self.act(pop), dtype=float).reshape(len(pop), self.action_dim)
        if self.action_box is not None:
            a = np.clip(a, self.action_box[0], self.action_box[1])
        return a


def constant_policy(a0, action_dim: int | None = None) -> ControlPolicy:
    a0 = np.atleast_1d(np.asarray(a0, dtype=float))
    q = action_dim or a0.size
    a0 = np.broadcast_to(a0, (q,)).copy()
    return ControlPolicy(
        act=lambda pop: np.broadcast_to(a0, (len(pop), q)).copy(),
        action_dim=q,
        kind="constant",
        declared_symmetric=True,
        meta={"value": a0.tolist()},
    )


def zero_policy(action_dim: int = 1) -> ControlPolicy:
    return constant_policy(np.zeros(action_dim))


def evaluate(p: ControlPolicy, t: float, i, lam: Configuration) -> np.ndarray:
    i = tuple(i)
    if i not in lam.labels:
        raise ConfigurationError(f"label {format_label(i)!r} is not alive")
    pop = Population.from_configuration(lam, t)
    return p(pop)[lam.labels.index(i)]


def perturb(p: ControlPolicy, delta) -> ControlPolicy:
    delta = np.broadcast_to(np.atleast_1d(np.asarray(delta, dtype=float)), (p.action_dim,)).copy()
    base = p.act
    return replace(
        p,
        act=lambda pop: np.asarray(base(pop), dtype=float).reshape(len(pop), -1) + delta,
        kind="custom",
        meta={"base": p.kind, "delta": delta.tolist()},
    )


@dataclass
class SymmetryReport:
    probes: int
    max_discrepancy: float
    witness: dict | None

    @property
    def passed(self) -> bool:
        return self.max_discrepancy == 0.0


def _duplicated_configuration(rng, dim: int, scale: float, max_atoms: int = 4) -> Configuration:
    n = int(rng.integers(2, max_atoms + 1))
    base = scale * rng.standard_normal((n - 1, dim))
    pos = np.vstack([base, base[int(rng.integers(0, n - 1))]])
    rng.shuffle(pos)
    labels = [(r,) if rng.random() < 0.5 else (r, int(rng.integers(0, 4))) for r in range(n)]
    return Configuration(zip(labels, pos), dim=dim)


def check_symmetric(p: ControlPolicy, probes: int = 100, seed: int = 0, dim: int = 1,
                    scale: float = 2.0, t_range=(0.0, 1.0)) -> SymmetryReport:
    """Particles at equal positions must receive equal actions.

    Probes hold 2 to 4 atoms, fewer when ``p.meta["max_atoms"]`` caps the
    population the policy can act on; below 2 atoms the check is vacuous.
    """
    max_atoms = min(4, int(p.meta.get("max_atoms", 4)))
    if max_atoms < 2:
        return SymmetryReport(0, 0.0, None)
    rng = np.random.default_rng(seed)
    worst, witness = 0.0, None
    for _ in range(probes):
        lam = _duplicated_configuration(rng, dim, scale, max_atoms)
        t = float(rng.uniform(*t_range))
        a = p(Population.from_configuration(lam, t))
        for r in range(len(lam)):
            for s in range(r + 1, len(lam)):
                if np.array_equal(lam.positions[r], lam.positions[s]):
                    gap = float(np.max(np.abs(a[r] - a[s])))
                    if gap > worst:
                        worst = gap
                        witness = {
                            "t": t,
                            "labels": [format_label(lam.labels[r]), format_label(lam.labels[s])],
                            "position": lam.positions[r].tolist(),
                            "actions": [a[r].tolist(), a[s].tolist()],
                        }
    return SymmetryReport(probes, worst, witness)
