"""Kinetic-energy control of a branching diffusion in one dimension.

Each particle follows ``dY = (b(t, Y) + a) dt + dW`` and branches at rate
``gamma(x)`` with law ``p(x)``; the running cost is ``|a|^2 / 2`` and the
terminal cost ``sum_i H(Y_i)``.  The value is ``<h(t, .), lam>`` where

    h_t + b h_x - h_x^2 / 2 + h_xx / 2 + phi h = 0,   h(T, .) = H,

with ``phi = gamma (sum_k k p_k - 1)``, and the optimal feedback is
``a = -h_x``.  When ``phi = 0`` the substitution ``g = exp(-h)`` turns this
into the linear backward heat equation, which gives an independent check.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from .coefficients import CostSpec, ModelBounds, ModelCoefficients
from .control import ControlPolicy
from .population import Population


class KineticError(RuntimeError):
    pass


def _const_or(f, default=0.0):
    if f is None:
        f = default
    if callable(f):
        return f
    v = float(f)
    return lambda *args: np.full(np.shape(args[-1]), v)


@dataclass
class KineticSpec:
    """``b(t, x)``, ``gamma(x)``, ``p(x) -> (n, K+1)`` and ``H_fn(x)`` act on arrays."""

    H_fn: Callable
    x_lo: float = -4.0
    x_hi: float = 4.0
    n_x: int = 401
    T: float = 1.0
    t0: float = 0.0
    b: Any = 0.0
    gamma: Any = 0.0
    p: Any = (0.0, 1.0)
    name: str = "kinetic"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n_x < 3:
            raise KineticError("grid needs at least 3 nodes")
        if not self.x_lo < self.x_hi:
            raise KineticError("need x_lo < x_hi")
        if not self.t0 < self.T:
            raise KineticError("need t0 < T")
        self.x = np.linspace(self.x_lo, self.x_hi, self.n_x)
        self.dx = (self.x_hi - self.x_lo) / (self.n_x - 1)
        Hx = np.asarray(self.H_fn(self.x), dtype=float)
        if Hx.shape != self.x.shape or not np.all(np.isfinite(Hx)):
            raise KineticError("terminal data must be finite on the grid")
        self.H_grid = Hx
        self.phi = self.phi_at(self.x)

    def b_at(self, t, x) -> np.ndarray:
        return np.asarray(_const_or(self.b)(t, x), dtype=float) * np.ones_like(x)

    def gamma_at(self, x) -> np.ndarray:
        return np.asarray(_const_or(self.gamma)(x), dtype=float) * np.ones_like(x)

    def p_at(self, x) -> np.ndarray:
        if callable(self.p):
            return np.asarray(self.p(x), dtype=float).reshape(np.size(x), -1)
        p = np.asarray(self.p, dtype=float)
        return np.broadcast_to(p, (np.size(x), p.size))

    def phi_at(self, x) -> np.ndarray:
        P = self.p_at(x)
        mean = P @ np.arange(P.shape[1], dtype=float)
        return self.gamma_at(x) * (mean - 1.0)

    @classmethod
    def quadratic(cls, steep: float = 1.0, x_lo: float = -4.0, x_hi: float = 4.0, n_x: int = 401,
                  T: float = 1.0, gamma: float = 0.0, p=(0.0, 1.0)) -> "KineticSpec":
        """Terminal data ``steep * x^2``."""
        return cls(H_fn=lambda x: steep * np.asarray(x, dtype=float) ** 2, x_lo=x_lo, x_hi=x_hi,
                   n_x=n_x, T=T, gamma=gamma, p=p, name="quadratic",
                   params={"steep": steep})

    @classmethod
    def zero(cls, **kw) -> "KineticSpec":
        return cls(H_fn=lambda x: np.zeros_like(np.asarray(x, dtype=float)), name="zero", **kw)

    def metadata(self) -> dict:
        return {"name": self.name, "x_lo": self.x_lo, "x_hi": self.x_hi, "n_x": self.n_x,
                "t0": self.t0, "T": self.T, "params": self.params}


@dataclass
class HSolution:
    t: np.ndarray
    x: np.ndarray
    h: np.ndarray  # (n_t + 1, n_x)
    Dh: np.ndarray
    spec: KineticSpec = field(repr=False)

    def _interp(self, arr: np.ndarray, t, x) -> np.ndarray:
        t = np.clip(np.asarray(t, dtype=float), self.t[0], self.t[-1])
        x = np.clip(np.asarray(x, dtype=float), self.x[0], self.x[-1])
        nt, nx = self.t.size - 1, self.x.size - 1
        st = (t - self.t[0]) / (self.t[-1] - self.t[0]) * nt
        sx = (x - self.x[0]) / (self.x[-1] - self.x[0]) * nx
        i = np.minimum(np.floor(st).astype(np.intp), nt - 1)
        j = np.minimum(np.floor(sx).astype(np.intp), nx - 1)
        wt, wx = st - i, sx - j
        return ((1 - wt) * ((1 - wx) * arr[i, j] + wx * arr[i, j + 1])
                + wt * ((1 - wx) * arr[i + 1, j] + wx * arr[i + 1, j + 1]))

    def h_at(self, t, x):
        return self._interp(self.h, t, x)

    def Dh_at(self, t, x):
        return self._interp(self.Dh, t, x)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("t," + ",".join(repr(float(v)) for v in self.x) + "\n")
        for k in range(self.t.size):
            buf.write(repr(float(self.t[k])) + "," + ",".join(repr(float(v)) for v in self.h[k]) + "\n")
        return buf.getvalue()

    def metadata_json(self) -> str:
        meta = self.spec.metadata()
        meta.update({"n_t": int(self.t.size - 1), "dx": self.spec.dx,
                     "dt": float(self.t[1] - self.t[0])})
        return json.dumps(meta, indent=2, sort_keys=True)


def _derivs(u: np.ndarray, dx: float):
    """Central first/second differences; Neumann closure at both ends."""
    D = np.empty_like(u)
    D2 = np.empty_like(u)
    D[1:-1] = (u[2:] - u[:-2]) / (2 * dx)
    D2[1:-1] = (u[2:] - 2 * u[1:-1] + u[:-2]) / dx**2
    D[0] = D[-1] = 0.0
    # reflected ghost node: u_{-1} = u_1
    D2[0] = 2 * (u[1] - u[0]) / dx**2
    D2[-1] = 2 * (u[-2] - u[-1]) / dx**2
    return D, D2


def auto_steps(spec: KineticSpec) -> int:
    return max(2, int(math.ceil((spec.T - spec.t0) / spec.dx**2 * (1 + 1e-12))))


def _march(spec: KineticSpec, n_t, terminal: np.ndarray, rhs) -> tuple:
    if n_t == "auto" or n_t is None:
        n_t = auto_steps(spec)
    n_t = int(n_t)
    dt = (spec.T - spec.t0) / n_t
    if dt > spec.dx**2 * (1 + 1e-12):
        raise KineticError(f"unstable: dt={dt:g} > dx^2={spec.dx**2:g}; use n_t >= {auto_steps(spec)}")
    t = np.linspace(spec.t0, spec.T, n_t + 1)
    U = np.empty((n_t + 1, spec.n_x))
    U[-1] = terminal
    for k in range(n_t, 0, -1):
        u = U[k]
        D, D2 = _derivs(u, spec.dx)
        new = u + dt * rhs(t[k], u, D, D2)
        if not np.all(np.isfinite(new)):
            bad = int(np.flatnonzero(~np.isfinite(new))[0])
            raise KineticError(f"non-finite value at t={t[k - 1]:g}, x={spec.x[bad]:g}")
        U[k - 1] = new
    return t, U


def solve_h(spec: KineticSpec, n_t="auto") -> HSolution:
    """Backward explicit finite differences (``dt <= dx^2`` enforced)."""
    x, phi = spec.x, spec.phi

    def rhs(t, u, D, D2):
        return spec.b_at(t, x) * D - 0.5 * D * D + 0.5 * D2 + phi * u

    t, h = _march(spec, n_t, spec.H_grid.copy(), rhs)
    Dh = np.stack([_derivs(row, spec.dx)[0] for row in h])
    return HSolution(t, x, h, Dh, spec)


def solve_g(spec: KineticSpec, n_t="auto") -> tuple:
    """Linear backward equation for ``g = exp(-h)`` (only valid when ``phi = 0``)."""
    x = spec.x

    def rhs(t, u, D, D2):
        return spec.b_at(t, x) * D + 0.5 * D2

    return _march(spec, n_t, np.exp(-spec.H_grid), rhs)


def inner_mask(x: np.ndarray) -> np.ndarray:
    lo, hi = x[0], x[-1]
    mid, half = 0.5 * (lo + hi), 0.25 * (hi - lo)
    return np.abs(x - mid) <= half + 1e-12


def hopf_cole_check(spec: KineticSpec, n_t="auto") -> float:
    """Sup over inner nodes and all times of ``|h - (-log g)|``."""
    if np.any(spec.phi != 0):
        raise KineticError("the exponential substitution linearises only when phi = 0")
    sol = solve_h(spec, n_t)
    _, g = solve_g(spec, n_t)
    m = inner_mask(spec.x)
    return float(np.max(np.abs(sol.h[:, m] + np.log(g[:, m]))))


def kinetic_feedback(sol: HSolution) -> ControlPolicy:
    def act(pop: Population):
        return -sol.Dh_at(pop.t, pop.x[:, 0]).reshape(-1, 1)

    return ControlPolicy(act, action_dim=1, kind="kinetic-feedback", declared_symmetric=True)


def kinetic_value_handle(sol: HSolution):
    """``w(t, lam) = <h(t, .), lam>`` in batched form."""

    def w(tt, pop: Population):
        if len(pop) == 0:
            return np.zeros(pop.n_groups)
        return pop.group_sum(sol.h_at(tt[pop.group], pop.x[:, 0]))

    return w


def kinetic_model(spec: KineticSpec) -> ModelCoefficients:
    g_sup = float(np.max(spec.gamma_at(spec.x))) if spec.gamma is not None else 0.0
    P = spec.p_at(spec.x)
    k = np.arange(P.shape[1], dtype=float)
    bounds = ModelBounds(L=1.0, C_b=1.0 + float(np.max(np.abs(spec.b_at(spec.t0, spec.x)))),
                         C_sigma=1.0, C_gamma=g_sup, C1_phi=float(np.max(P @ k)),
                         C2_phi=float(np.max(P @ (k * (k - 1)))))
    return ModelCoefficients(
        drift=lambda pop, a: spec.b_at(pop.t, pop.x[:, 0]).reshape(-1, 1) + a,
        diffusion=lambda pop, a: np.ones((len(pop), 1, 1)),
        rate=lambda pop, a: spec.gamma_at(pop.x[:, 0]),
        offspring=lambda pop, a: spec.p_at(pop.x[:, 0]),
        bounds=bounds,
        name=f"kinetic-{spec.name}",
    )


def kinetic_cost(spec: KineticSpec) -> CostSpec:
    H = spec.H_fn

    def terminal(pop):
        if len(pop) == 0:
            return np.zeros(pop.n_groups)
        return pop.group_sum(np.asarray(H(pop.x[:, 0]), dtype=float))

    return CostSpec(running=lambda pop, a: 0.5 * np.sum(a * a, axis=1), terminal=terminal,
                    C_Psi=max(1.0, float(spec.params.get("steep", 1.0))), c_psi=0.5,
                    name="kinetic")
