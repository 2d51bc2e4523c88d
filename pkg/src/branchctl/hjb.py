"""Truncated HJB system on grids, one level per population size.

Level ``n`` holds ``w_n(t, x_1, ..., x_n)`` on the tensor grid
``[x_lo, x_hi]^n`` (d = 1).  Levels are coupled through branching: a
particle at slot ``i`` replaced by ``k`` offspring moves the state to level
``n + k - 1`` at the node where coordinate ``i`` is repeated ``k`` times.
Offspring outcomes that would leave ``0..N_max`` are folded into ``k = 1``
(no change), which keeps the scheme monotone.

The explicit step is written with non-negative weights only,

    w_new = sum_i min_a [ w (1/n - dt E_i) + dt (c+ w+ + c- w- + gamma sum_k p_k r_k) + dt psi_i ],

so that ordering of terminal data carries over node by node, including
under floating-point rounding.  Spatial differences are central where the
diffusion dominates (``sigma^2 >= |b| dx``) and upwind otherwise; the
boundary uses a reflected ghost node (homogeneous Neumann).

With ``symmetric=True`` only nodes with sorted indices are computed and
stored; any other grid point is read through its sorted representative, so
values are exactly permutation invariant.  The general path computes every node and keeps coordinates in
label order.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .coefficients import CostSpec, MeanFieldCoefficients, MeanFieldCost, ModelCoefficients, mf_lift, mf_lift_cost
from .configuration import Configuration
from .control import ControlPolicy
from .population import Population


class HJBError(RuntimeError):
    pass


class GridEscape(HJBError):
    pass


@dataclass(frozen=True)
class ActionGrid:
    values: tuple

    def __post_init__(self):
        v = tuple(float(a) for a in self.values)
        if not v:
            raise HJBError("action grid is empty")
        if any(b < a for a, b in zip(v, v[1:])):
            raise HJBError("action grid must be sorted")
        object.__setattr__(self, "values", v)

    @classmethod
    def box(cls, lo: float, hi: float, n: int = 21) -> "ActionGrid":
        return cls(tuple(np.linspace(lo, hi, n)))

    @classmethod
    def single(cls, a: float = 0.0) -> "ActionGrid":
        return cls((float(a),))

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.values)

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True)
class Geometry:
    x_lo: float = -4.0
    x_hi: float = 4.0
    n_x: int = 101
    N_max: int = 1
    t0: float = 0.0
    T: float = 1.0

    def __post_init__(self):
        if self.n_x < 3 or not self.x_lo < self.x_hi:
            raise HJBError("need n_x >= 3 and x_lo < x_hi")
        if self.N_max < 1:
            raise HJBError("N_max must be >= 1")
        if not self.t0 < self.T:
            raise HJBError("need t0 < T")

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.x_lo, self.x_hi, self.n_x)

    @property
    def dx(self) -> float:
        return (self.x_hi - self.x_lo) / (self.n_x - 1)


@dataclass
class HamiltonianResult:
    value: float
    argmin: np.ndarray
    per_particle: np.ndarray


def hamiltonian(x, r: float, q, M, r_branch, m: ModelCoefficients, c: CostSpec, A_grid: ActionGrid,
                t: float = 0.0) -> HamiltonianResult:
    """Infimum over per-particle actions of the generator plus running cost at one node.

    ``q`` and ``M`` are the gradient and Hessian diagonal; ``r_branch[i, k]``
    is the value after slot ``i`` is replaced by ``k`` offspring.
    """
    if isinstance(m, MeanFieldCoefficients):
        m = mf_lift(m)
    if isinstance(c, MeanFieldCost):
        c = mf_lift_cost(c)
    x = np.asarray(x, dtype=float).reshape(-1)
    n = x.size
    q = np.asarray(q, dtype=float).reshape(n)
    M = np.asarray(M, dtype=float).reshape(n)
    rb = np.asarray(r_branch, dtype=float).reshape(n, -1)
    tab = _coefficient_tables(m, c, x[None, :], A_grid, t)
    b, s2, gam, P, psi = (v[0] for v in tab)  # (n, A), ..., P: (n, A, K+1)
    K1 = min(P.shape[2], rb.shape[1])
    br = np.einsum("iak,ik->ia", P[:, :, :K1], rb[:, :K1] - r)
    f = b * q[:, None] + 0.5 * s2 * M[:, None] + gam * br + psi
    idx = np.argmin(f, axis=1)
    per = f[np.arange(n), idx]
    return HamiltonianResult(float(per.sum()), A_grid.array[idx], per)


def _coefficient_tables(m: ModelCoefficients, c: CostSpec, X: np.ndarray, A_grid: ActionGrid, t: float):
    """Coefficients at every (node, slot, action); nodes are rows of ``X`` (G, n)."""
    G, n = X.shape
    A = len(A_grid)
    acts = A_grid.array
    # group = node * A + action; rows = slots with synthetic labels (0), (1), ...
    x = np.repeat(X[:, None, :], A, axis=1).reshape(-1, 1)
    group = np.repeat(np.arange(G * A), n)
    labels = np.empty(G * A * n, dtype=object)
    labels[:] = [(s,) for s in range(n)] * (G * A)
    pop = Population(x, labels, group, G * A, np.full(G * A * n, float(t)))
    a = np.repeat(np.tile(acts, G), n).reshape(-1, 1)
    rows = len(pop)
    if m.dim != 1 or m.action_dim != 1:
        raise HJBError("grid solver supports d = 1 and scalar actions")
    b = np.asarray(m.drift(pop, a), dtype=float).reshape(rows)
    sig = np.asarray(m.diffusion(pop, a), dtype=float).reshape(rows, -1)
    s2 = np.sum(sig * sig, axis=1)
    gam = np.asarray(m.rate(pop, a), dtype=float).reshape(rows)
    P = np.asarray(m.offspring(pop, a), dtype=float).reshape(rows, -1)
    psi = np.asarray(c.running(pop, a), dtype=float).reshape(rows)

    def shape(v):
        # (G, A, n, ...) -> (G, n, A, ...)
        v = v.reshape((G, A, n) + v.shape[1:])
        return np.swapaxes(v, 1, 2)

    return shape(b), shape(s2), shape(gam), shape(P), shape(psi)


def _terminal_values(c: CostSpec, X: np.ndarray, T: float) -> np.ndarray:
    G, n = X.shape
    labels = np.empty(G * n, dtype=object)
    labels[:] = [(s,) for s in range(n)] * G
    pop = Population(X.reshape(-1, 1).astype(float), labels, np.repeat(np.arange(G), n), G,
                     np.full(G * n, float(T)))
    return np.asarray(c.terminal(pop), dtype=float).reshape(G)


def _empty_terminal(c: CostSpec, T: float) -> float:
    pop = Population(np.zeros((0, 1)), np.empty(0, dtype=object), np.zeros(0, dtype=np.intp), 1, np.zeros(0))
    return float(np.asarray(c.terminal(pop), dtype=float).reshape(1)[0])


def _full_to_node(n: int, n_x: int, symmetric: bool) -> np.ndarray:
    """Map a flat full-grid index to its stored node (the sorted representative)."""
    size = n_x**n
    if not symmetric or n <= 1:
        return np.arange(size)
    full = np.indices((n_x,) * n).reshape(n, -1)
    keep = np.all(np.diff(full, axis=0) >= 0, axis=0)
    node_flat = np.flatnonzero(keep)
    sorted_flat = np.ravel_multi_index(np.sort(full, axis=0), (n_x,) * n)
    return np.searchsorted(node_flat, sorted_flat)


class _Level:
    """Index bookkeeping for one population size; everything is in node numbering."""

    def __init__(self, n: int, n_x: int, symmetric: bool):
        self.n = n
        self.shape = (n_x,) * n
        self.size = n_x**n
        self.full_to_node = _full_to_node(n, n_x, symmetric)
        if symmetric and n > 1:
            full = np.indices(self.shape).reshape(n, -1)
            keep = np.all(np.diff(full, axis=0) >= 0, axis=0)
            self.nodes = full[:, keep].T.copy()
        else:
            self.nodes = np.indices(self.shape).reshape(n, -1).T.copy()

    def node(self, cols) -> np.ndarray:
        return self.full_to_node[np.ravel_multi_index(cols, self.shape)]

    def neighbours(self, n_x: int):
        plus = np.empty(self.nodes.shape, dtype=np.intp)
        minus = np.empty(self.nodes.shape, dtype=np.intp)
        for i in range(self.n):
            up = self.nodes.copy()
            dn = self.nodes.copy()
            top = up[:, i] == n_x - 1
            bot = dn[:, i] == 0
            up[:, i] = np.where(top, up[:, i] - 1, up[:, i] + 1)
            dn[:, i] = np.where(bot, dn[:, i] + 1, dn[:, i] - 1)
            plus[:, i] = self.node(up.T)
            minus[:, i] = self.node(dn.T)
        return plus, minus

    def branch_targets(self, K: int, levels: list, N_max: int):
        """Node index at level n+k-1 for every (node, slot, k); -1 when truncated."""
        out = np.full(self.nodes.shape + (K + 1,), -1, dtype=np.intp)
        for k in range(K + 1):
            lev = self.n + k - 1
            if k == 1 or lev > N_max:
                continue
            for i in range(self.n):
                if lev == 0:
                    out[:, i, k] = 0
                    continue
                cols = [self.nodes[:, j] for j in range(i)] + [self.nodes[:, i]] * k + \
                       [self.nodes[:, j] for j in range(i + 1, self.n)]
                out[:, i, k] = levels[lev].node(np.stack(cols))
        return out


@dataclass
class ValueGrid:
    geometry: Geometry
    actions: ActionGrid
    symmetric: bool
    times: np.ndarray  # stored time slices
    values: list  # level n -> (S, nodes); level 0 -> (S, 1)
    policy_index: list  # level n -> (S, nodes, n) action indices in node slot order; level 0 None
    n_t: int
    dt: float
    stride: int
    meta: dict = field(default_factory=dict)

    @property
    def N_max(self) -> int:
        return self.geometry.N_max

    def full_to_node(self, n: int) -> np.ndarray:
        cache = self.__dict__.setdefault("_f2n", {})
        if n not in cache:
            cache[n] = _full_to_node(n, self.geometry.n_x, self.symmetric)
        return cache[n]

    def level(self, n: int, k: int = 0) -> np.ndarray:
        """Slice ``k`` of level ``n`` on the full tensor grid."""
        g = self.geometry
        if n == 0:
            return self.values[0][k].reshape(())
        return self.values[n][k][self.full_to_node(n)].reshape((g.n_x,) * n)

    def _time_weights(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < self.times[0] - 1e-12) or np.any(t > self.times[-1] + 1e-12):
            raise GridEscape(f"time outside [{self.times[0]}, {self.times[-1]}]")
        S = self.times.size
        i = np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, S - 2)
        w = (t - self.times[i]) / (self.times[i + 1] - self.times[i])
        exact = t == self.times[np.minimum(i + 1, S - 1)]
        i = np.where(exact, np.minimum(i + 1, S - 1), i)
        w = np.where(exact, 0.0, w)
        j = np.minimum(i + 1, S - 1)
        return i, j, w

    def _interp(self, table: np.ndarray, n: int, coords: np.ndarray, i, j, w) -> np.ndarray:
        """Multilinear interpolation of ``table`` (S, size) at coords (G, n), time weights per row."""
        g = self.geometry
        G = coords.shape[0]
        if n == 0:
            return (1 - w) * table[i, 0] + w * table[j, 0]
        s = (coords - g.x_lo) / g.dx
        cell = np.clip(np.floor(s).astype(np.intp), 0, g.n_x - 2)
        frac = s - cell
        out_i = np.zeros(G)
        out_j = np.zeros(G)
        f2n = self.full_to_node(n)
        for corner in itertools.product((0, 1), repeat=n):
            cidx = cell + np.array(corner)[None, :]
            wt = np.prod(np.where(np.array(corner)[None, :] == 1, frac, 1 - frac), axis=1)
            flat = f2n[np.ravel_multi_index(cidx.T, (g.n_x,) * n)]
            out_i += wt * table[i, flat]
            out_j += wt * table[j, flat]
        return (1 - w) * out_i + w * out_j

    def _coords(self, lam: Configuration) -> np.ndarray:
        x = lam.positions[:, 0]
        return np.sort(x) if self.symmetric else x.copy()

    def _check_box(self, coords):
        g = self.geometry
        if np.any(coords < g.x_lo - 1e-12) or np.any(coords > g.x_hi + 1e-12):
            raise GridEscape("position outside the grid box")

    def value_at(self, t: float, lam: Configuration) -> float:
        n = len(lam)
        if n > self.N_max:
            raise GridEscape(f"population {n} exceeds N_max={self.N_max}")
        coords = self._coords(lam)
        self._check_box(coords)
        i, j, w = self._time_weights(np.array([t]))
        return float(self._interp(self.values[n], n, coords[None, :], i, j, w)[0])

    def value_handle(self):
        """Batched ``w(t_groups, pop)``; returns NaN where the grid cannot answer."""

        def w(tt, pop: Population):
            out = np.full(pop.n_groups, np.nan)
            mass = pop.group_mass()
            live = np.flatnonzero(mass <= self.N_max)
            order = np.lexsort((pop.x[:, 0], pop.group))
            xs = pop.x[order, 0]
            starts = np.concatenate([[0], np.cumsum(mass)])
            for n in np.unique(mass[live]):
                gs = live[mass[live] == n]
                if n == 0:
                    coords = np.zeros((gs.size, 0))
                else:
                    coords = np.stack([xs[starts[gs] + k] for k in range(n)], axis=1)
                i, j, ww = self._time_weights(tt[gs])
                vals = self._interp(self.values[n], int(n), coords, i, j, ww)
                g = self.geometry
                inside = np.all((coords >= g.x_lo) & (coords <= g.x_hi), axis=1) if n else np.ones(gs.size, bool)
                out[gs] = np.where(inside, vals, np.nan)
            return out

        return w

    def save(self, path_prefix: str) -> tuple:
        arrays = {f"values_{n}": v for n, v in enumerate(self.values)}
        arrays.update({f"policy_{n}": p for n, p in enumerate(self.policy_index) if p is not None})
        arrays["times"] = self.times
        np.savez(path_prefix + ".npz", **arrays)
        meta = {
            "geometry": self.geometry.__dict__,
            "actions": list(self.actions.values),
            "symmetric": self.symmetric,
            "n_t": self.n_t,
            "dt": self.dt,
            "stride": self.stride,
            "levels": [int(v.shape[1]) for v in self.values],
            "meta": self.meta,
        }
        with open(path_prefix + ".json", "w") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
        return path_prefix + ".npz", path_prefix + ".json"

    @classmethod
    def load(cls, path_prefix: str) -> "ValueGrid":
        with open(path_prefix + ".json") as fh:
            meta = json.load(fh)
        data = np.load(path_prefix + ".npz")
        geo = Geometry(**meta["geometry"])
        L = len(meta["levels"])
        values = [data[f"values_{n}"] for n in range(L)]
        pol = [None] + [data[f"policy_{n}"] for n in range(1, L)]
        return cls(geo, ActionGrid(tuple(meta["actions"])), meta["symmetric"], data["times"], values, pol,
                   meta["n_t"], meta["dt"], meta["stride"], meta.get("meta", {}))


def grid_policy(g: ValueGrid) -> ControlPolicy:
    """Feedback from the stored argmin tables.

    Time uses the latest stored slice at or before ``t``; space uses
    multilinear interpolation of the slot's action.  Particles sharing a
    position read the same slot, so they receive identical actions.
    """
    acts = g.actions.array
    tables = g.policy_index
    geo = g.geometry

    def act(pop: Population):
        out = np.zeros((len(pop), 1))
        if len(pop) == 0:
            return out
        mass = pop.group_mass()
        if mass.max() > g.N_max:
            raise GridEscape(f"population {int(mass.max())} exceeds N_max={g.N_max}")
        x = np.clip(pop.x[:, 0], geo.x_lo, geo.x_hi)
        if g.symmetric:
            order = np.lexsort((x, pop.group))
        else:
            order = np.array(sorted(range(len(pop)), key=lambda r: (pop.group[r], pop.labels[r])), dtype=np.intp)
        starts = np.concatenate([[0], np.cumsum(mass)])
        S = g.times.size
        for n in np.unique(mass[pop.group]):
            gs = np.flatnonzero(mass == n)
            base = starts[gs]
            rows = np.stack([order[base + k] for k in range(n)], axis=1)  # (G, n)
            coords = x[rows]
            tg = pop.t[rows[:, 0]]
            si = np.clip(np.searchsorted(g.times, tg + 1e-12, side="right") - 1, 0, S - 1)
            for k in range(n):
                slot = np.full(gs.size, k)
                if g.symmetric:
                    # first slot holding the same position
                    for kk in range(k - 1, -1, -1):
                        tie = coords[:, kk] == coords[:, k]
                        slot = np.where(tie, kk, slot)
                tab = tables[n]
                vals = np.zeros(gs.size)
                s = (coords - geo.x_lo) / geo.dx
                cell = np.clip(np.floor(s).astype(np.intp), 0, geo.n_x - 2)
                frac = s - cell
                f2n = g.full_to_node(int(n))
                for corner in itertools.product((0, 1), repeat=int(n)):
                    cv = np.array(corner)[None, :]
                    wt = np.prod(np.where(cv == 1, frac, 1 - frac), axis=1)
                    cidx = cell + cv
                    node = f2n[np.ravel_multi_index(cidx.T, (geo.n_x,) * int(n))]
                    if g.symmetric:
                        # position of this slot inside the sorted node
                        srt = np.argsort(cidx, axis=1, kind="stable")
                        rank = np.argsort(srt, axis=1, kind="stable")
                        nslot = rank[np.arange(gs.size), slot]
                    else:
                        nslot = slot
                    vals += wt * acts[tab[si, node, nslot]]
                out[rows[:, k], 0] = vals
        return out

    return ControlPolicy(act, action_dim=1, kind="grid-feedback", declared_symmetric=g.symmetric,
                         action_box=(float(acts[0]), float(acts[-1])), meta={"max_atoms": g.N_max})


def cfl_steps(m, c, geometry: Geometry, A_grid: ActionGrid, symmetric: bool = True, min_steps: int = 200) -> int:
    return _setup(m, c, geometry, A_grid, symmetric)[1](min_steps)


def _tables_chunked(m, c, X: np.ndarray, A_grid: ActionGrid, t: float, rows: int = 200_000):
    """``_coefficient_tables`` evaluated over blocks of nodes to bound peak memory."""
    G, n = X.shape
    step = max(1, rows // max(1, n * len(A_grid)))
    parts = [_coefficient_tables(m, c, X[s:s + step], A_grid, t) for s in range(0, G, step)]
    return tuple(np.concatenate([p[q] for p in parts]) for q in range(5))


def _setup(m, c, geo: Geometry, A_grid: ActionGrid, symmetric: bool):
    if isinstance(m, MeanFieldCoefficients):
        m = mf_lift(m)
    if isinstance(c, MeanFieldCost):
        c = mf_lift_cost(c)
    xg = geo.x
    dx = geo.dx
    levels = [None] + [_Level(n, geo.n_x, symmetric) for n in range(1, geo.N_max + 1)]
    tables = [None]
    rate_bound = 0.0
    K = 0
    for n in range(1, geo.N_max + 1):
        L = levels[n]
        b, s2, gam, P, psi = _tables_chunked(m, c, xg[L.nodes], A_grid, geo.t0)
        K = max(K, P.shape[-1] - 1)
        central = s2 >= np.abs(b) * dx
        cp = np.where(central, s2 / (2 * dx * dx) + b / (2 * dx), s2 / (2 * dx * dx) + np.maximum(b, 0) / dx)
        cm = np.where(central, s2 / (2 * dx * dx) - b / (2 * dx), s2 / (2 * dx * dx) + np.maximum(-b, 0) / dx)
        del b, s2, central
        # fold outcomes beyond N_max into k = 1
        for k in range(P.shape[-1]):
            if n + k - 1 > geo.N_max and k != 1:
                if P.shape[-1] < 2:
                    raise HJBError("offspring law too short to fold")
                P[..., 1] += P[..., k]
                P[..., k] = 0.0
        p1 = P[..., 1] if P.shape[-1] > 1 else np.zeros_like(gam)
        E = cp + cm + gam * (1.0 - p1)
        rate_bound = max(rate_bound, float(n * E.max()))
        tables.append((cp, cm, gam, P, psi, E))

    def steps(min_steps=200):
        if rate_bound <= 0:
            return min_steps
        return max(min_steps, int(math.ceil((geo.T - geo.t0) * rate_bound * (1 + 1e-12))))

    return (m, c, levels, tables, K), steps


def hjb_solve(m, c, geometry: Geometry, A_grid: ActionGrid, n_t="auto", symmetric: bool = True,
              stored_slices: int = 101, stride: int | None = None):
    """Backward explicit solve across all levels; returns ``(ValueGrid, GridPolicy)``.

    Coefficients must not depend on time (they are tabulated once at ``t0``).
    """
    geo = geometry
    (m, c, levels, tables, K), steps = _setup(m, c, geo, A_grid, symmetric)
    need = steps(1)
    if n_t == "auto" or n_t is None:
        n_t = steps(200)
    n_t = int(n_t)
    if n_t < need:
        raise HJBError(f"unstable step: need n_t >= {need}, got {n_t}")
    dt = (geo.T - geo.t0) / n_t
    if stride is None:
        stride = max(1, n_t // max(1, stored_slices - 1))
    xg = geo.x
    N = geo.N_max
    idx_type = np.int16 if len(A_grid) < 2**15 else np.int32

    # precomputed weights and lookups, all in node numbering
    prep = [None]
    for n in range(1, N + 1):
        L = levels[n]
        cp, cm, gam, Pf, psi, E = tables[n]
        tables[n] = None
        plus, minus = L.neighbours(geo.n_x)
        br = L.branch_targets(Pf.shape[-1] - 1, levels, N)
        a0 = 1.0 / n - dt * E
        if np.any(a0 < 0):
            raise HJBError("negative weight; the time step is too large")
        ks = [k for k in range(Pf.shape[-1]) if k != 1 and np.any(br[:, :, k] >= 0)]
        beta = {k: dt * gam * Pf[..., k] for k in ks}
        prep.append((a0, dt * cp, dt * cm, beta, dt * psi, plus, minus, br, ks))
        del cp, cm, gam, Pf, psi, E

    # terminal data
    W = [np.array([_empty_terminal(c, geo.T)])]
    for n in range(1, N + 1):
        W.append(_terminal_values(c, xg[levels[n].nodes], geo.T))

    t_grid = geo.t0 + dt * np.arange(n_t + 1)
    t_grid[-1] = geo.T
    keep = sorted(set(range(0, n_t + 1, stride)) | {n_t})
    pos = {k: s for s, k in enumerate(keep)}
    S = len(keep)
    stored = [np.empty((S, W[n].size)) for n in range(N + 1)]
    pol = [None] + [np.zeros((S, W[n].size, n), dtype=idx_type) for n in range(1, N + 1)]
    for n in range(N + 1):
        stored[n][pos[n_t]] = W[n]
    for k in range(n_t, 0, -1):
        newW = [W[0]]
        for n in range(1, N + 1):
            a0, ap, am, beta, pdt, plus, minus, br, ks = prep[n]
            w = W[n]
            f = a0 * w[:, None, None] + ap * w[plus][:, :, None] + am * w[minus][:, :, None]
            for kk in ks:
                f += beta[kk] * W[n + kk - 1][br[:, :, kk]][:, :, None]
            f += pdt
            idx = np.argmin(f, axis=2)
            best = np.take_along_axis(f, idx[:, :, None], axis=2)[:, :, 0]
            node_val = best.sum(axis=1)
            if not np.all(np.isfinite(node_val)):
                raise HJBError(f"non-finite value at level {n}, t={t_grid[k - 1]:g}")
            newW.append(node_val)
            if (k - 1) in pos:
                pol[n][pos[k - 1]] = idx
            if k == n_t:
                # the terminal slice reuses the last step's actions
                pol[n][pos[n_t]] = idx
        W = newW
        if (k - 1) in pos:
            for n in range(N + 1):
                stored[n][pos[k - 1]] = W[n]
    vg = ValueGrid(geo, A_grid, symmetric, t_grid[keep], stored, pol, n_t, dt, stride,
                   meta={"model": m.name, "cost": c.name})
    return vg, grid_policy(vg)


@dataclass
class InvarianceReport:
    probes: int
    max_value_discrepancy: float
    max_action_discrepancy: float
    witness: dict | None = None

    @property
    def passed(self) -> bool:
        return self.max_value_discrepancy == 0.0 and self.max_action_discrepancy == 0.0


def permutation_invariance_check(g: ValueGrid, probes: int = 100, seed: int = 0,
                                 policy: ControlPolicy | None = None) -> InvarianceReport:
    """Relabel random configurations and compare values; duplicate a position and compare actions."""
    rng = np.random.default_rng(seed)
    geo = g.geometry
    pol = grid_policy(g) if policy is None else policy
    worst_v = worst_a = 0.0
    witness = None
    for probe in range(probes):
        n = int(rng.integers(1, geo.N_max + 1))
        t = float(rng.uniform(geo.t0, geo.T))
        # half the probes sit on grid nodes
        if rng.random() < 0.5:
            pos = geo.x[rng.integers(0, geo.n_x, size=n)]
        else:
            pos = rng.uniform(geo.x_lo, geo.x_hi, size=n)
        labels = [(k,) for k in range(n)]
        lam = Configuration(zip(labels, pos[:, None]), dim=1)
        perm = rng.permutation(n)
        lam_s = Configuration(zip([labels[k] for k in perm], pos[:, None]), dim=1)
        dv = abs(g.value_at(t, lam) - g.value_at(t, lam_s))
        if dv > worst_v:
            worst_v = dv
            witness = {"probe": probe, "kind": "value", "t": t, "positions": pos.tolist(),
                       "permutation": perm.tolist()}
        if n >= 2:
            dup = pos.copy()
            dup[1] = dup[0]
            lam_d = Configuration(zip(labels, dup[:, None]), dim=1)
            a = pol(Population.from_configuration(lam_d, t))
            da = float(abs(a[0, 0] - a[1, 0]))
            if da > worst_a:
                worst_a = da
                witness = {"probe": probe, "kind": "action", "t": t, "positions": dup.tolist(),
                           "actions": a[:, 0].tolist()}
    return InvarianceReport(probes, worst_v, worst_a, witness)
