"""Linear-quadratic branching control: Riccati system, feedback, value field.

Model: drift ``B x + Bbar a``, diffusion ``sigma I``, constant rate ``gamma``
and offspring law ``p``; running cost ``x'Cx + c<1,lam> + a'Cbar a`` per
particle and terminal cost ``sum x'Hx + h<1,lam>^2``.  The value is

    w_t(lam) = sum_i x_i'Q_t x_i + p_t <1,lam>^2 + pbar_t <1,lam>

with, for M1 = sum (k-1)p_k and M2 = sum (k-1)^2 p_k,

    Q'    = -(B'Q + QB + gamma M1 Q + C - Q Bbar Cbar^{-1} Bbar' Q)
    p'    = -(2 gamma M1 p + c)
    pbar' = -(sigma^2 tr Q + gamma M1 pbar + gamma M2 p)

and optimal feedback ``a = -Cbar^{-1} Bbar' Q x``.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .coefficients import CostSpec, ModelBounds, ModelCoefficients, offspring_moments
from .configuration import Configuration
from .control import ControlPolicy
from .genealogy import AdmissibleConfig, branch_update
from .population import Population


class LQSpecError(ValueError):
    pass


def _fn(v):
    if callable(v):
        return v
    arr = np.asarray(v, dtype=float)
    return lambda t: arr


def _mat(v, rows, cols):
    return np.asarray(v, dtype=float).reshape(rows, cols)


@dataclass
class LQSpec:
    """Coefficients may be constants or callables of time."""

    B: Any
    Bbar: Any
    sigma: Any
    gamma: Any
    p: Any
    C: Any
    c: Any
    Cbar: Any
    H: Any
    h: float = 0.0
    T: float = 1.0
    eps: float | None = None
    t0: float = 0.0

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float)
        if np.any(self.p < 0) or abs(self.p.sum() - 1.0) > 1e-12:
            raise LQSpecError("offspring law must be a probability vector")
        self.H = np.atleast_2d(np.asarray(self.H, dtype=float))
        Bbar0 = np.atleast_2d(np.asarray(_fn(self.Bbar)(self.t0), dtype=float))
        self.d = self.H.shape[0]
        self.q = Bbar0.reshape(self.d, -1).shape[1]
        self.constant = not any(callable(v) for v in (self.B, self.Bbar, self.sigma, self.gamma, self.C, self.c, self.Cbar))
        mom = offspring_moments(self.p)
        self.M1, self.M2 = mom.net, mom.net2

    @classmethod
    def scalar_canonical(cls, sigma: float = 0.0, gamma: float = 0.0, T: float = 1.0, H: float = 1.0,
                         Cbar: float = 0.5, C: float = 0.0, c: float = 0.0, h: float = 0.0,
                         B: float = 0.0, Bbar: float = 1.0, offspring=(0.0, 0.0, 1.0)) -> "LQSpec":
        return cls(B=[[B]], Bbar=[[Bbar]], sigma=sigma, gamma=gamma, p=offspring, C=[[C]], c=c,
                   Cbar=[[Cbar]], H=[[H]], h=h, T=T)

    def at(self, t: float) -> dict:
        d, q = self.d, self.q
        return {
            "B": _mat(_fn(self.B)(t), d, d),
            "Bbar": _mat(_fn(self.Bbar)(t), d, q),
            "sigma": float(_fn(self.sigma)(t)),
            "gamma": float(_fn(self.gamma)(t)),
            "C": _mat(_fn(self.C)(t), d, d),
            "c": float(_fn(self.c)(t)),
            "Cbar": _mat(_fn(self.Cbar)(t), q, q),
        }

    def check(self, samples: int = 11) -> None:
        """Symmetry and positivity conditions at sampled times."""
        _psd(self.H, "H")
        if self.h < 0:
            raise LQSpecError("h must be >= 0")
        for t in np.linspace(self.t0, self.T, samples):
            co = self.at(float(t))
            _psd(co["C"], f"C({t:g})")
            if co["c"] < 0:
                raise LQSpecError(f"c({t:g}) < 0")
            if co["gamma"] < 0:
                raise LQSpecError(f"gamma({t:g}) < 0")
            Cb = co["Cbar"]
            if not np.allclose(Cb, Cb.T, atol=1e-14):
                raise LQSpecError(f"Cbar({t:g}) not symmetric")
            lo = float(np.linalg.eigvalsh(Cb).min())
            eps = self.eps if self.eps is not None else 0.0
            if lo <= 0 or lo < eps:
                raise LQSpecError(f"Cbar({t:g}) not uniformly positive definite (min eig {lo:g})")

    def to_json(self) -> dict:
        if not self.constant:
            raise LQSpecError("only constant specs serialise")
        co = self.at(self.t0)
        return {"B": co["B"].tolist(), "Bbar": co["Bbar"].tolist(), "sigma": co["sigma"],
                "gamma": co["gamma"], "p": self.p.tolist(), "C": co["C"].tolist(), "c": co["c"],
                "Cbar": co["Cbar"].tolist(), "H": self.H.tolist(), "h": self.h, "T": self.T,
                "t0": self.t0}

    @classmethod
    def from_json(cls, obj: dict) -> "LQSpec":
        return cls(**obj)


def _psd(M, name, tol=1e-12):
    M = np.asarray(M, dtype=float)
    if not np.allclose(M, M.T, atol=1e-14):
        raise LQSpecError(f"{name} not symmetric")
    if float(np.linalg.eigvalsh(M).min()) < -tol:
        raise LQSpecError(f"{name} not positive semidefinite")


@dataclass
class RiccatiSolution:
    t: np.ndarray
    Q: np.ndarray
    p: np.ndarray
    pbar: np.ndarray
    spec: LQSpec = field(repr=False)
    psd_ok: bool = True
    first_non_psd: int | None = None
    escape_node: int | None = None

    def _locate(self, t):
        t = np.asarray(t, dtype=float)
        n = self.t.size - 1
        dt = (self.t[-1] - self.t[0]) / n
        s = np.clip((t - self.t[0]) / dt, 0.0, n)
        i = np.minimum(np.floor(s).astype(np.intp), n - 1)
        w = s - i
        # exact node values at the nodes themselves
        at_node = t == self.t[np.minimum(i + 1, n)]
        i = np.where(at_node, i + 1, i)
        w = np.where(at_node, 0.0, w)
        i = np.minimum(i, n)
        j = np.minimum(i + 1, n)
        return i, j, w

    def Q_at(self, t):
        i, j, w = self._locate(t)
        w = np.asarray(w)[..., None, None]
        return (1.0 - w) * self.Q[i] + w * self.Q[j]

    def p_at(self, t):
        i, j, w = self._locate(t)
        return (1.0 - w) * self.p[i] + w * self.p[j]

    def pbar_at(self, t):
        i, j, w = self._locate(t)
        return (1.0 - w) * self.pbar[i] + w * self.pbar[j]

    def to_csv(self) -> str:
        d = self.Q.shape[1]
        head = ["t"] + [f"Q{r + 1}{s + 1}" for r in range(d) for s in range(d)] + ["p", "pbar"]
        buf = io.StringIO()
        buf.write(",".join(head) + "\n")
        for k in range(self.t.size):
            vals = [self.t[k], *self.Q[k].reshape(-1), self.p[k], self.pbar[k]]
            buf.write(",".join(repr(float(v)) for v in vals) + "\n")
        return buf.getvalue()


def _rhs(spec: LQSpec, t: float, Q, p, pbar):
    co = spec.at(t)
    g = co["gamma"]
    Bb, Cb = co["Bbar"], co["Cbar"]
    K = Bb @ np.linalg.solve(Cb, Bb.T)
    dQ = -(co["B"].T @ Q + Q @ co["B"] + g * spec.M1 * Q + co["C"] - Q @ K @ Q)
    dp = -(2.0 * g * spec.M1 * p + co["c"])
    dpbar = -(co["sigma"] ** 2 * np.trace(Q) + g * spec.M1 * pbar + g * spec.M2 * p)
    return dQ, dp, dpbar


def solve_riccati(spec: LQSpec, n_steps: int = 1000, escape_bound: float = 1e12) -> RiccatiSolution:
    """Classical RK4 backward from ``T`` on a uniform grid of ``n_steps`` steps."""
    if n_steps < 2:
        raise ValueError("n_steps must be >= 2")
    spec.check()
    t = np.linspace(spec.t0, spec.T, n_steps + 1)
    t[-1] = spec.T
    d = spec.d
    Q = np.zeros((n_steps + 1, d, d))
    p = np.zeros(n_steps + 1)
    pbar = np.zeros(n_steps + 1)
    Q[-1], p[-1], pbar[-1] = spec.H, spec.h, 0.0
    escape = None
    for k in range(n_steps, 0, -1):
        hs = t[k - 1] - t[k]  # negative
        y = (Q[k], p[k], pbar[k])
        k1 = _rhs(spec, t[k], *y)
        k2 = _rhs(spec, t[k] + hs / 2, *(a + hs / 2 * b for a, b in zip(y, k1)))
        k3 = _rhs(spec, t[k] + hs / 2, *(a + hs / 2 * b for a, b in zip(y, k2)))
        k4 = _rhs(spec, t[k - 1], *(a + hs * b for a, b in zip(y, k3)))
        new = [a + hs / 6 * (b1 + 2 * b2 + 2 * b3 + b4) for a, b1, b2, b3, b4 in zip(y, k1, k2, k3, k4)]
        Qn = 0.5 * (new[0] + new[0].T)
        if not (np.all(np.isfinite(Qn)) and np.isfinite(new[1]) and np.isfinite(new[2])) or \
                np.abs(Qn).max() > escape_bound:
            escape = k - 1
            Q[: k], p[: k], pbar[: k] = np.nan, np.nan, np.nan
            break
        Q[k - 1], p[k - 1], pbar[k - 1] = Qn, new[1], new[2]
    sol = RiccatiSolution(t, Q, p, pbar, spec, escape_node=escape)
    for k in range(n_steps + 1):
        if not np.all(np.isfinite(Q[k])):
            continue
        lo = float(np.linalg.eigvalsh(Q[k]).min())
        if lo < -1e-10 * max(1.0, float(np.abs(Q[k]).max())):
            sol.psd_ok = False
            sol.first_non_psd = k if sol.first_non_psd is None else min(sol.first_non_psd, k)
    return sol


def _gain(spec: LQSpec, t: float) -> np.ndarray:
    co = spec.at(t)
    return np.linalg.solve(co["Cbar"], co["Bbar"].T)  # q x d


def lq_feedback(sol: RiccatiSolution) -> ControlPolicy:
    spec = sol.spec
    G0 = _gain(spec, spec.t0) if spec.constant else None

    def act(pop: Population):
        if len(pop) == 0:
            return np.zeros((0, spec.q))
        Qr = sol.Q_at(pop.t)
        Qx = np.einsum("nij,nj->ni", Qr, pop.x)
        if G0 is not None:
            return -(Qx @ G0.T)
        out = np.empty((len(pop), spec.q))
        for s in np.unique(pop.t):
            rows = pop.t == s
            out[rows] = -(Qx[rows] @ _gain(spec, float(s)).T)
        return out

    return ControlPolicy(act, action_dim=spec.q, kind="lq-feedback", declared_symmetric=True)


def lq_value(sol: RiccatiSolution, t: float, lam: Configuration) -> float:
    if not sol.t[0] <= t <= sol.t[-1]:
        raise ValueError(f"t={t} outside [{sol.t[0]}, {sol.t[-1]}]")
    n = len(lam)
    if n == 0:
        return 0.0
    Q = sol.Q_at(t)
    quad = math.fsum(float(x @ Q @ x) for x in lam.positions)
    return quad + float(sol.p_at(t)) * n * n + float(sol.pbar_at(t)) * n


def lq_value_handle(sol: RiccatiSolution):
    """Batched ``w(t_groups, pop)`` for residual checks."""

    def w(tt, pop: Population):
        mass = pop.group_mass().astype(float)
        quad = np.zeros(pop.n_groups)
        if len(pop):
            Qr = sol.Q_at(tt[pop.group])
            quad = pop.group_sum(np.einsum("ni,nij,nj->n", pop.x, Qr, pop.x))
        return quad + sol.p_at(tt) * mass**2 + sol.pbar_at(tt) * mass

    return w


def lq_model(spec: LQSpec) -> ModelCoefficients:
    d, q = spec.d, spec.q
    if not spec.constant:
        raise LQSpecError("the simulator model needs constant coefficients")
    co = spec.at(spec.t0)
    B, Bb, sig, gam = co["B"], co["Bbar"], co["sigma"], co["gamma"]
    p = spec.p
    mom = offspring_moments(p)
    bounds = ModelBounds(
        L=float(np.linalg.norm(B, 2)),
        C_b=max(float(np.linalg.norm(B, 2)), float(np.linalg.norm(Bb, 2)), 1e-300),
        C_sigma=abs(sig) * math.sqrt(d),
        C_gamma=gam,
        C1_phi=mom.mean,
        C2_phi=mom.factorial2,
    )
    return ModelCoefficients(
        drift=lambda pop, a: pop.x @ B.T + a @ Bb.T,
        diffusion=lambda pop, a: np.broadcast_to(sig * np.eye(d), (len(pop), d, d)),
        rate=lambda pop, a: np.full(len(pop), gam),
        offspring=lambda pop, a: np.broadcast_to(p, (len(pop), p.size)),
        bounds=bounds,
        dim=d,
        noise_dim=d,
        action_dim=q,
        motionless=False,
        name="lq",
    )


def lq_cost(spec: LQSpec, probe_mass: int = 3) -> CostSpec:
    co = spec.at(spec.t0)
    C, c, Cb, H, h = co["C"], co["c"], co["Cbar"], spec.H, spec.h

    def running(pop, a):
        return (np.einsum("ni,ij,nj->n", pop.x, C, pop.x) + c * pop.mass()
                + np.einsum("ni,ij,nj->n", a, Cb, a))

    def terminal(pop):
        mass = pop.group_mass().astype(float)
        if len(pop) == 0:
            return h * mass**2
        return pop.group_sum(np.einsum("ni,ij,nj->n", pop.x, H, pop.x)) + h * mass**2

    norm = lambda M: float(np.linalg.norm(M, 2))
    C_Psi = max(norm(C) + c * probe_mass, norm(Cb), norm(H), h, 1e-300)
    c_psi = float(np.linalg.eigvalsh(Cb).min())
    return CostSpec(running, terminal, C_Psi=C_Psi, c_psi=c_psi, name="lq")


@dataclass
class SelfCheckReport:
    probes: int
    max_residual_opt: float
    max_square_gap: float
    min_residual: float
    tol: float
    witness: dict | None = None

    @property
    def passed(self) -> bool:
        return (self.max_residual_opt <= self.tol and self.max_square_gap <= self.tol
                and self.min_residual >= -self.tol)


def _w_node(sol, k, positions):
    n = positions.shape[0]
    if n == 0:
        return 0.0
    quad = float(np.einsum("ni,ij,nj->", positions, sol.Q[k], positions))
    return quad + sol.p[k] * n * n + sol.pbar[k] * n


def generator_residual(sol: RiccatiSolution, k: int, lam: Configuration, a: np.ndarray,
                       dx: float = 0.25) -> float:
    """Drift of ``w(s, xi_s) + int sum psi`` at grid node ``k``, assembled directly.

    Time derivative by a five-point difference over the grid values, space
    derivatives by central differences, the branching part by applying every
    offspring outcome to the label set.
    """
    spec = sol.spec
    N = sol.t.size - 1
    if not 2 <= k <= N - 2:
        raise ValueError("node must have two neighbours on each side")
    u = float(sol.t[k])
    co = spec.at(u)
    X = lam.positions
    n, d = X.shape
    ht = sol.t[1] - sol.t[0]
    wt = [_w_node(sol, j, X) for j in range(k - 2, k + 3)]
    dw_dt = (wt[0] - 8 * wt[1] + 8 * wt[3] - wt[4]) / (12 * ht)
    w0 = wt[2]
    total = dw_dt
    labels = AdmissibleConfig(lam.labels)
    for i in range(n):
        grad = np.zeros(d)
        lap = 0.0
        for j in range(d):
            Xp, Xm = X.copy(), X.copy()
            Xp[i, j] += dx
            Xm[i, j] -= dx
            wp, wm = _w_node(sol, k, Xp), _w_node(sol, k, Xm)
            grad[j] = (wp - wm) / (2 * dx)
            lap += (wp - 2 * w0 + wm) / dx**2
        b = co["B"] @ X[i] + co["Bbar"] @ a[i]
        total += float(b @ grad) + 0.5 * co["sigma"] ** 2 * lap
        # branching exchange
        lab = lam.labels[i]
        br = 0.0
        for kk, pk in enumerate(spec.p):
            if pk == 0:
                continue
            new_labels = branch_update(labels, lab, kk).labels
            pos = dict(zip(lam.labels, X))
            # children sit at the parent's position
            Xn = np.array([pos.get(l, X[i]) for l in new_labels]).reshape(-1, d)
            br += pk * (_w_node(sol, k, Xn) - w0)
        total += co["gamma"] * br
        total += float(X[i] @ co["C"] @ X[i]) + co["c"] * n + float(a[i] @ co["Cbar"] @ a[i])
    return float(total)


def lq_selfcheck(sol: RiccatiSolution, probes: int = 50, seed: int = 0, tol: float = 1e-6,
                 scale: float = 2.0) -> SelfCheckReport:
    """Check D(a_hat) = 0 and D(a) = (a - a_hat)'Cbar(a - a_hat) on random probes."""
    if probes < 1:
        raise ValueError("probes must be >= 1")
    spec = sol.spec
    rng = np.random.default_rng(seed)
    N = sol.t.size - 1
    pol = lq_feedback(sol)
    worst_opt = worst_gap = 0.0
    min_res = np.inf
    witness = None
    for probe in range(probes):
        k = int(rng.integers(2, N - 1))
        n = int(rng.integers(1, 4))
        lam = Configuration([((r,), scale * rng.standard_normal(spec.d)) for r in range(n)], dim=spec.d)
        pop = Population.from_configuration(lam, float(sol.t[k]))
        ahat = pol(pop)
        a = ahat + scale * rng.standard_normal(ahat.shape)
        mag = 1.0 + float(np.sum(lam.positions**2)) + float(np.sum(a**2)) + n * n
        r_opt = abs(generator_residual(sol, k, lam, ahat)) / mag
        r = generator_residual(sol, k, lam, a)
        co = spec.at(float(sol.t[k]))
        sq = float(np.einsum("ni,ij,nj->", a - ahat, co["Cbar"], a - ahat))
        gap = abs(r - sq) / mag
        if r_opt > worst_opt or gap > worst_gap:
            witness = {"probe": probe, "node": k, "config": lam.to_json(), "residual_opt": r_opt,
                       "gap": gap}
        worst_opt = max(worst_opt, r_opt)
        worst_gap = max(worst_gap, gap)
        min_res = min(min_res, r / mag)
    return SelfCheckReport(probes, worst_opt, worst_gap, float(min_res), tol, witness)
