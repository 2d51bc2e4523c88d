"""Pathwise costs, Monte Carlo estimates of J, and verification residuals."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .coefficients import CostSpec, ModelCoefficients
from .configuration import Configuration
from .control import ControlPolicy
from .population import Population
from .simulator import (
    CapExceeded,
    Observer,
    SimConfig,
    Trajectory,
    simulate_batch,
)

# w(t, pop) -> (n_groups,), with t holding one time per group
ValueHandle = Callable[[np.ndarray, Population], np.ndarray]


class EstimateError(RuntimeError):
    def __init__(self, msg: str, discarded: int = 0, replicates: int = 0):
        super().__init__(msg)
        self.discarded = discarded
        self.replicates = replicates


class ValueEscape(RuntimeError):
    def __init__(self, msg: str, fraction: float = float("nan")):
        super().__init__(msg)
        self.fraction = fraction


def _mean_se(v: np.ndarray) -> tuple:
    v = np.asarray(v, dtype=float)
    n = v.size
    mean = float(np.sum(v) / n)
    if n < 2:
        return mean, float("nan")
    var = float(np.sum((v - mean) ** 2) / (n - 1))
    return mean, math.sqrt(var / n)


@dataclass
class CostEstimate:
    mean: float
    std_error: float
    replicates: int
    path_min: float
    path_max: float
    discarded: int = 0
    values: np.ndarray | None = field(default=None, repr=False)

    def to_json(self) -> dict:
        return {"mean": self.mean, "std_error": self.std_error, "replicates": self.replicates,
                "path_min": self.path_min, "path_max": self.path_max, "discarded": self.discarded}


class CostObserver(Observer):
    """Accumulates the left-endpoint running cost and adds the terminal cost at the end."""

    def __init__(self, c: CostSpec, R: int):
        self.c = c
        self.acc = np.zeros(R)
        self.total = np.full(R, np.nan)

    def on_step(self, pop, a, h):
        run = np.asarray(self.c.running(pop, a), dtype=float).reshape(len(pop))
        self.acc += h * pop.group_sum(run)

    def on_finish(self, groups, pop, t):
        term = np.asarray(self.c.terminal(pop), dtype=float).reshape(pop.n_groups)
        self.total[groups] = self.acc[groups] + term[groups]


def pathwise_cost(traj: Trajectory, c: CostSpec, control: ControlPolicy) -> float:
    """Cost of a recorded path (needs ``simulate(..., record_steps=True)``)."""
    if traj.status not in ("horizon", "extinct"):
        raise EstimateError(f"trajectory ended with status {traj.status!r}")
    if traj.final is None:
        raise EstimateError("trajectory has no final state")
    acc = np.zeros(1)
    for t, h, conf in traj.steps:
        if len(conf) == 0:
            continue
        pop = Population.from_configuration(conf, t)
        a = control(pop)
        run = np.asarray(c.running(pop, a), dtype=float).reshape(len(pop))
        acc += h * pop.group_sum(run)
    term = np.asarray(c.terminal(Population.from_configuration(traj.final, traj.T)), dtype=float).reshape(1)
    return float(acc[0] + term[0])


def _check_discards(res, replicates):
    if res.discarded > 0.01 * replicates:
        raise EstimateError(
            f"{res.discarded} of {replicates} paths hit a cap (limit 1%)", res.discarded, replicates
        )


def estimate_J(lam0: Configuration, control: ControlPolicy, m: ModelCoefficients, c: CostSpec,
               cfg: SimConfig, replicates: int, keep_values: bool = False) -> CostEstimate:
    """Monte Carlo mean and standard error of the total cost over independent replicates."""
    if replicates < 2:
        raise ValueError("need at least 2 replicates")
    obs = CostObserver(c, replicates)
    res = simulate_batch(lam0, control, m, cfg, replicates, observers=[obs])
    _check_discards(res, replicates)
    v = obs.total[res.ok]
    mean, se = _mean_se(v)
    return CostEstimate(mean, se, int(v.size), float(v.min()), float(v.max()), res.discarded,
                        v if keep_values else None)


def default_checkpoints(t0: float, T: float, n: int = 8) -> np.ndarray:
    return np.linspace(t0, T, n)


class _ResidualObserver(CostObserver):
    def __init__(self, c, R, w: ValueHandle, n_ck: int):
        super().__init__(c, R)
        self.w = w
        self.M = np.full((R, n_ck), np.nan)

    def on_checkpoint(self, k, groups, pop, t):
        tt = np.zeros(pop.n_groups)
        tt[groups] = t
        val = np.asarray(self.w(tt, pop), dtype=float).reshape(pop.n_groups)
        self.M[groups, k] = val[groups] + self.acc[groups]


@dataclass
class ResidualReport:
    checkpoints: np.ndarray
    gap_mean: np.ndarray
    gap_se: np.ndarray
    replicates: int
    discarded: int = 0
    # floor for the band: deterministic fixtures have zero standard error
    # but still carry time-discretisation error
    atol: float = 1e-6

    def _band(self):
        return 3.0 * self.gap_se + self.atol

    @property
    def martingale(self) -> bool:
        return bool(np.all(np.abs(self.gap_mean) <= self._band()))

    @property
    def submartingale(self) -> bool:
        return bool(np.all(self.gap_mean >= -self._band()))

    def verdicts(self) -> list:
        out = []
        for m_, band in zip(self.gap_mean, self._band()):
            if abs(m_) <= band:
                out.append("martingale")
            elif m_ > 0:
                out.append("submartingale")
            else:
                out.append("fail")
        return out

    def to_csv(self) -> str:
        rows = ["checkpoint,gap_mean,gap_se,verdict"]
        for k, (m_, s, v) in enumerate(zip(self.gap_mean, self.gap_se, self.verdicts())):
            rows.append(f"{self.checkpoints[k]!r},{m_!r},{s!r},{v}")
        return "\n".join(rows) + "\n"


def verification_residual(w: ValueHandle, lam0: Configuration, control: ControlPolicy,
                          m: ModelCoefficients, c: CostSpec, cfg: SimConfig, replicates: int,
                          checkpoints=None, atol: float = 1e-6) -> ResidualReport:
    """Increments of ``M_s = w(s, xi_s) + int_t^s sum psi`` between checkpoints.

    ``w`` may raise :class:`ValueEscape` (or return NaN) at states it cannot
    evaluate; NaNs are reported as an escape fraction.
    """
    ck = default_checkpoints(cfg.t0, cfg.T) if checkpoints is None else np.asarray(checkpoints, dtype=float)
    if ck.size < 2 or np.any(np.diff(ck) <= 0) or ck[0] < cfg.t0 or ck[-1] > cfg.T:
        raise ValueError("checkpoints must increase within [t0, T]")
    obs = _ResidualObserver(c, replicates, w, ck.size)
    res = simulate_batch(lam0, control, m, cfg, replicates, observers=[obs], checkpoints=ck)
    _check_discards(res, replicates)
    M = obs.M[res.ok]
    bad = np.isnan(M).any(axis=1)
    if bad.any():
        frac = float(bad.mean())
        raise ValueEscape(f"value undefined on {frac:.2%} of paths", frac)
    D = np.diff(M, axis=1)
    means, ses = zip(*(_mean_se(D[:, k]) for k in range(D.shape[1])))
    return ResidualReport(ck, np.array(means), np.array(ses), int(M.shape[0]), res.discarded, atol)


@dataclass
class GrowthReport:
    C: float
    C_upper: float
    C_lower: float
    samples: int
    violation: bool
    ratio_small: float
    ratio_large: float

    def to_json(self) -> dict:
        return dict(self.__dict__)


def growth_report(samples) -> GrowthReport:
    """Smallest ``C`` with ``-C(1+m+sum|x|) <= w <= C(1+m^2+sum|x|^2)`` over the samples.

    ``samples`` is a sequence of ``(configuration, value)``.  The violation
    flag is raised when the upper ratio on the largest-scale quarter of the
    samples exceeds twice the largest ratio on the smaller half, i.e. when
    ``w`` outgrows the quadratic envelope.
    """
    samples = list(samples)
    if len(samples) < 10:
        raise ValueError("need at least 10 samples")
    up, low, scale = [], [], []
    for lam, val in samples:
        mass = len(lam)
        norms = np.linalg.norm(lam.positions, axis=1) if mass else np.zeros(0)
        s_up = 1.0 + mass**2 + float(np.sum(norms**2))
        s_low = 1.0 + mass + float(np.sum(norms))
        up.append(max(float(val), 0.0) / s_up)
        low.append(max(-float(val), 0.0) / s_low)
        scale.append(s_up)
    up, low, scale = np.array(up), np.array(low), np.array(scale)
    order = np.argsort(scale, kind="stable")
    n = len(order)
    small = up[order[: n // 2]]
    large = up[order[n - max(1, n // 4):]]
    r_small, r_large = float(small.max()), float(large.max())
    violation = r_large > 2.0 * r_small and r_large > 0.0
    C_up, C_low = float(up.max()), float(low.max())
    return GrowthReport(max(C_up, C_low), C_up, C_low, n, bool(violation), r_small, r_large)
