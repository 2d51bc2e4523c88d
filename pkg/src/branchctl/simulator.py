"""Event-driven simulation of controlled branching diffusions.

Particles move by Euler-Maruyama between branching events.  Each particle
carries an exponential candidate clock of rate ``C_gamma``; at a candidate
time a uniform mark on ``[0, C_gamma]`` is compared with the partition of
``[0, gamma)`` by cumulative offspring probabilities (thinning).  Offspring
are placed at the parent's position.

The engine advances many independent replicates in lockstep, one numpy
array row per particle.  Each replicate moves to its own next breakpoint
(candidate clock, dt grid time, checkpoint or horizon), so a replicate's
path depends only on its own seed: replicate ``r`` of a batch is
bit-identical to :func:`simulate` run with ``replicate_seed(seed, r)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import noise
from .coefficients import ModelCoefficients, offspring_intervals
from .configuration import Configuration
from .control import ControlPolicy
from .genealogy import GenealogyError, Label, format_label, is_admissible
from .noise import Stream
from .population import Population

RUNNING, HORIZON, EXTINCT, POP_CAP, EVENT_CAP = 0, 1, 2, 3, 4
STATUS_NAMES = {RUNNING: "running", HORIZON: "horizon", EXTINCT: "extinct",
                POP_CAP: "population-cap", EVENT_CAP: "event-cap"}


@dataclass(frozen=True)
class SimConfig:
    t0: float = 0.0
    T: float = 1.0
    dt: float = 1e-3
    seed: int = 0
    max_population: int = 100_000
    max_events: int = 10_000_000

    def __post_init__(self):
        if not 0.0 <= self.t0 < self.T:
            raise ValueError(f"need 0 <= t0 < T, got t0={self.t0}, T={self.T}")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.max_population < 1 or self.max_events < 1:
            raise ValueError("caps must be >= 1")


@dataclass
class Event:
    time: float
    kind: str  # "branch" or "horizon"
    parent: Label | None
    k: int | None
    config: Configuration

    def to_json(self) -> dict:
        out = {"time": self.time, "kind": self.kind}
        if self.kind == "branch":
            out["parent"] = format_label(self.parent)
            out["k"] = self.k
        out["config"] = self.config.to_json()
        return out


@dataclass
class Trajectory:
    t0: float
    T: float
    events: list = field(default_factory=list)
    frames: list = field(default_factory=list)  # (t, Configuration) on the dt grid
    controls: list = field(default_factory=list)  # (t, label, action)
    steps: list = field(default_factory=list)  # (t, h, Configuration at step start)
    status: str = "running"
    final: Configuration | None = None

    @property
    def end_time(self) -> float:
        return self.events[-1].time if self.events else self.t0

    def configuration_at(self, t: float) -> Configuration:
        """State at a recorded frame time."""
        for s, conf in self.frames:
            if s == t:
                return conf
        raise KeyError(f"no frame at t={t}")

    def to_jsonl(self) -> str:
        return "\n".join(json.dumps(e.to_json()) for e in self.events) + "\n"

    def frames_csv(self) -> str:
        if not self.frames:
            return ""
        d = self.frames[0][1].dim
        rows = ["time,label," + ",".join(f"x{c + 1}" for c in range(d))]
        for t, conf in self.frames:
            for lab, x in conf.atoms():
                rows.append(f"{t!r},{format_label(lab)}," + ",".join(repr(float(v)) for v in x))
        return "\n".join(rows) + "\n"


class CapExceeded(RuntimeError):
    def __init__(self, kind: str, trajectory: Trajectory | None = None):
        super().__init__(f"{kind} cap exceeded")
        self.kind = kind
        self.trajectory = trajectory


class Observer:
    """Hooks called by the engine; all group arguments are index arrays."""

    def on_step(self, pop: Population, a: np.ndarray, h: np.ndarray) -> None:
        pass

    def on_checkpoint(self, k: int, groups: np.ndarray, pop: Population, t: np.ndarray) -> None:
        pass

    def on_finish(self, groups: np.ndarray, pop: Population, t: np.ndarray) -> None:
        pass


@dataclass
class BatchResult:
    status: np.ndarray
    end_time: np.ndarray
    events: np.ndarray
    seeds: list
    trajectories: list | None = None

    @property
    def ok(self) -> np.ndarray:
        return (self.status == HORIZON) | (self.status == EXTINCT)

    @property
    def discarded(self) -> int:
        return int(np.count_nonzero(~self.ok))


def step_diffusion(lam: Configuration, control: ControlPolicy, t: float, h: float,
                   m: ModelCoefficients, seed: int, counters: dict | None = None) -> Configuration:
    """One Euler-Maruyama step of every alive particle, coefficients frozen at ``t``.

    ``counters`` maps labels to their diffusion-stream counter and is advanced
    in place; absent labels start at zero.
    """
    if h <= 0:
        raise ValueError("step size must be positive")
    counters = {} if counters is None else counters
    pop = Population.from_configuration(lam, t)
    a = control(pop)
    b = np.asarray(m.drift(pop, a), dtype=float).reshape(len(lam), m.dim)
    sig = np.asarray(m.diffusion(pop, a), dtype=float).reshape(len(lam), m.dim, m.noise_dim)
    keys = np.array([noise.label_key(lab) for lab in lam.labels], dtype=np.uint64)
    cnt = np.array([counters.get(lab, 0) for lab in lam.labels], dtype=np.uint64)
    z = noise.normal(np.full(len(lam), noise.seed_key(seed), dtype=np.uint64), keys, Stream.DIFFUSION, cnt, m.noise_dim)
    x = lam.positions + b * h + np.einsum("nij,nj->ni", sig, z) * math.sqrt(h)
    for lab in lam.labels:
        counters[lab] = counters.get(lab, 0) + 1
    return Configuration._trusted(lam.labels, x, lam.dim)


def next_candidate(label: Label, t: float, C_gamma: float, seed: int, counter: int = 0) -> float:
    gap = noise.exponential(
        np.array([noise.seed_key(seed)], dtype=np.uint64),
        np.array([noise.label_key(label)], dtype=np.uint64),
        Stream.CLOCK, np.array([counter], dtype=np.uint64), C_gamma,
    )[0]
    return t + float(gap)


def resolve_branching(lam: Configuration, parent: Label, control: ControlPolicy, m: ModelCoefficients,
                      seed: int, t: float = 0.0, counter: int = 0) -> int | None:
    """Offspring count if the candidate at ``parent`` is accepted, else ``None``."""
    parent = tuple(parent)
    if parent not in lam.labels:
        raise GenealogyError(f"label {format_label(parent)!r} is not alive")
    pop = Population.from_configuration(lam, t)
    a = control(pop)
    r = lam.labels.index(parent)
    gam = float(np.asarray(m.rate(pop, a), dtype=float).reshape(-1)[r])
    p = np.asarray(m.offspring(pop, a), dtype=float).reshape(len(lam), -1)[r]
    u = noise.uniform(np.array([noise.seed_key(seed)], dtype=np.uint64),
                      np.array([noise.label_key(parent)], dtype=np.uint64),
                      Stream.MARK, np.array([counter], dtype=np.uint64))[0]
    z = m.bounds.C_gamma * u
    if not z < gam:
        return None
    for k, (lo, hi) in enumerate(offspring_intervals(gam, p)):
        if lo <= z < hi:
            return k
    return p.size - 1


def _offspring_counts(z: np.ndarray, gam: np.ndarray, p: np.ndarray) -> np.ndarray:
    # k = number of interval right ends gamma*sum_{l<=k} p_l that are <= z
    ends = gam[:, None] * np.cumsum(p, axis=1)
    k = np.sum(ends <= z[:, None], axis=1)
    return np.minimum(k, p.shape[1] - 1)


class _Engine:
    def __init__(self, lams: Sequence[Configuration], policy: ControlPolicy, m: ModelCoefficients,
                 cfg: SimConfig, seeds: Sequence[int], observers=(), checkpoints=None,
                 key_labels=None, record: bool = False, record_controls: bool = False,
                 record_steps: bool = False, check_admissible: bool = False):
        self.m, self.policy, self.cfg = m, policy, cfg
        self.observers = list(observers)
        self.R = len(lams)
        self.dim = m.dim
        self.record = record
        self.record_controls = record_controls
        self.record_steps = record_steps
        self.check_admissible = check_admissible
        self.Cg = float(m.bounds.C_gamma)
        self.ck = np.array(sorted(checkpoints if checkpoints is not None else []), dtype=float)
        if self.ck.size and (self.ck[0] < cfg.t0 or self.ck[-1] > cfg.T):
            raise ValueError("checkpoints must lie in [t0, T]")

        xs, labs, keys, groups = [], [], [], []
        for g, lam in enumerate(lams):
            if lam.dim != m.dim:
                raise ValueError(f"configuration dim {lam.dim} != model dim {m.dim}")
            xs.append(lam.positions)
            labs.extend(lam.labels)
            kl = key_labels[g] if key_labels is not None else None
            for lab in lam.labels:
                src = kl(lab) if kl is not None else lab
                keys.append(noise.label_key(src))
            groups.append(np.full(len(lam), g, dtype=np.intp))
        n = len(labs)
        self.x = np.concatenate(xs).astype(float) if n else np.zeros((0, self.dim))
        self.labels = np.empty(n, dtype=object)
        self.labels[:] = labs
        self.keys = np.array(keys, dtype=np.uint64)
        self.group = np.concatenate(groups) if n else np.zeros(0, dtype=np.intp)
        self.sk = np.array([noise.seed_key(s) for s in seeds], dtype=np.uint64)
        self.cnt_diff = np.zeros(n, dtype=np.uint64)
        self.cnt_clock = np.zeros(n, dtype=np.uint64)
        self.cnt_mark = np.zeros(n, dtype=np.uint64)

        R = self.R
        self.t = np.full(R, float(cfg.t0))
        self.status = np.full(R, RUNNING)
        self.n_events = np.zeros(R, dtype=np.int64)
        self.next_grid = np.ones(R, dtype=np.int64)
        self.next_ck = np.searchsorted(self.ck, cfg.t0, side="left") * np.ones(R, dtype=np.int64)
        self.clock = self.t[self.group] + self._draw_clock(np.arange(n))
        self.trajs = [Trajectory(cfg.t0, cfg.T) for _ in range(R)] if record else None

    # -- helpers -----------------------------------------------------------
    def _draw_clock(self, rows: np.ndarray) -> np.ndarray:
        gaps = noise.exponential(self.sk[self.group[rows]], self.keys[rows], Stream.CLOCK,
                                 self.cnt_clock[rows], self.Cg)
        self.cnt_clock[rows] += np.uint64(1)
        return gaps

    def _pop(self, rows=None) -> Population:
        if rows is None:
            return Population(self.x, self.labels, self.group, self.R, self.t[self.group])
        return Population(self.x[rows], self.labels[rows], self.group[rows], self.R, self.t[self.group[rows]])

    def _grid_time(self, k: np.ndarray) -> np.ndarray:
        return self.cfg.t0 + k * self.cfg.dt

    def _config(self, g: int) -> Configuration:
        rows = np.flatnonzero(self.group == g)
        order = sorted(rows, key=lambda r: self.labels[r])
        return Configuration._trusted(tuple(self.labels[r] for r in order), self.x[order].copy(), self.dim)

    def _record_frames(self, groups: np.ndarray, t: np.ndarray):
        for g, s in zip(groups, t):
            self.trajs[g].frames.append((float(s), self._config(g)))

    # -- main loop ---------------------------------------------------------
    def run(self) -> BatchResult:
        cfg = self.cfg
        T = float(cfg.T)
        if self.record:
            self._record_frames(np.arange(self.R), self.t)
        self._check_caps_and_extinction(np.arange(self.R))
        while True:
            active = np.flatnonzero(self.status == RUNNING)
            if active.size == 0:
                break
            min_clock = np.full(self.R, np.inf)
            if self.clock.size:
                np.minimum.at(min_clock, self.group, self.clock)
            grid_t = np.minimum(self._grid_time(self.next_grid[active]), T)
            ck_t = np.full(active.size, np.inf)
            has_ck = self.next_ck[active] < self.ck.size
            ck_t[has_ck] = self.ck[self.next_ck[active][has_ck]]
            bp = np.minimum(np.minimum(grid_t, ck_t), min_clock[active])
            h = np.zeros(self.R)
            h[active] = bp - self.t[active]

            if self.x.shape[0]:
                self._advance(h)
            self.t[active] = bp

            at_grid = bp == grid_t
            self.next_grid[active[at_grid]] += 1
            if self.record:
                rec = active[at_grid & (bp < T)]
                self._record_frames(rec, self.t[rec])
            at_ck = np.flatnonzero(bp == ck_t)
            if at_ck.size:
                self._checkpoint(active, at_ck)

            if self.clock.size:
                cand_rows = np.flatnonzero((self.clock == self.t[self.group]) & (self.status[self.group] == RUNNING))
                if cand_rows.size:
                    self._branch(cand_rows)

            done = active[(self.t[active] >= T) & (self.status[active] == RUNNING)]
            if done.size:
                self.status[done] = HORIZON
                self._finish(done)
        return BatchResult(self.status.copy(), self.t.copy(), self.n_events.copy(), [], self.trajs)

    def _advance(self, h: np.ndarray):
        rows_mask = h[self.group] > 0
        if not rows_mask.any():
            return
        all_rows = bool(rows_mask.all())
        rows = None if all_rows else np.flatnonzero(rows_mask)
        pop = self._pop(rows)
        a = self.policy(pop)
        hg = h[pop.group]
        for ob in self.observers:
            ob.on_step(pop, a, h)
        if self.record_controls or self.record_steps:
            self._record_step(pop, a, h)
        if self.m.motionless:
            return
        m = self.m
        n = len(pop)
        b = np.asarray(m.drift(pop, a), dtype=float).reshape(n, m.dim)
        sig = np.asarray(m.diffusion(pop, a), dtype=float).reshape(n, m.dim, m.noise_dim)
        keys = self.keys if all_rows else self.keys[rows]
        cnt = self.cnt_diff if all_rows else self.cnt_diff[rows]
        z = noise.normal(self.sk[pop.group], keys, Stream.DIFFUSION, cnt, m.noise_dim)
        dx = b * hg[:, None] + np.einsum("nij,nj->ni", sig, z) * np.sqrt(hg)[:, None]
        if all_rows:
            self.x = self.x + dx
            self.cnt_diff += np.uint64(1)
        else:
            self.x[rows] = self.x[rows] + dx
            self.cnt_diff[rows] += np.uint64(1)

    def _record_step(self, pop: Population, a: np.ndarray, h: np.ndarray):
        for g in np.unique(pop.group):
            sel = np.flatnonzero(pop.group == g)
            t = float(self.t[g])
            if self.record_steps:
                order = sorted(sel, key=lambda r: pop.labels[r])
                conf = Configuration._trusted(tuple(pop.labels[r] for r in order), pop.x[order].copy(), self.dim)
                self.trajs[g].steps.append((t, float(h[g]), conf))
            if self.record_controls:
                for r in sel:
                    self.trajs[g].controls.append((t, pop.labels[r], a[r].copy()))

    def _checkpoint(self, active: np.ndarray, at_ck: np.ndarray):
        groups = active[at_ck]
        ks = self.next_ck[groups]
        for k in np.unique(ks):
            gk = groups[ks == k]
            sel = np.isin(self.group, gk)
            pop = self._pop(np.flatnonzero(sel))
            for ob in self.observers:
                ob.on_checkpoint(int(k), gk, pop, self.t[gk])
        self.next_ck[groups] += 1

    def _branch(self, cand_rows: np.ndarray):
        m = self.m
        cand_groups = self.group[cand_rows]
        sel_rows = np.flatnonzero(np.isin(self.group, cand_groups))
        pop = self._pop(sel_rows)
        a = self.policy(pop)
        gam_all = np.asarray(m.rate(pop, a), dtype=float).reshape(len(pop))
        p_all = np.asarray(m.offspring(pop, a), dtype=float).reshape(len(pop), -1)
        pos = np.searchsorted(sel_rows, cand_rows)
        gam, p = gam_all[pos], p_all[pos]
        u = noise.uniform(self.sk[cand_groups], self.keys[cand_rows], Stream.MARK, self.cnt_mark[cand_rows])
        self.cnt_mark[cand_rows] += np.uint64(1)
        z = self.Cg * u
        accepted = z < gam
        k = _offspring_counts(z, gam, p)

        acc_rows = cand_rows[accepted]
        acc_k = k[accepted]
        acc_groups = cand_groups[accepted]
        np.add.at(self.n_events, acc_groups, 1)

        if acc_rows.size:
            reps = np.ones(self.x.shape[0], dtype=np.intp)
            reps[acc_rows] = acc_k
            start = np.cumsum(reps) - reps  # first new row of each old row
            parent_labels = self.labels[acc_rows]
            self.x = np.repeat(self.x, reps, axis=0)
            self.labels = np.repeat(self.labels, reps)
            self.keys = np.repeat(self.keys, reps)
            self.group = np.repeat(self.group, reps)
            self.clock = np.repeat(self.clock, reps)
            self.cnt_diff = np.repeat(self.cnt_diff, reps)
            self.cnt_clock = np.repeat(self.cnt_clock, reps)
            self.cnt_mark = np.repeat(self.cnt_mark, reps)
            new_rows, digits = [], []
            for r0, kk, plab in zip(start[acc_rows], acc_k, parent_labels):
                for j in range(kk):
                    self.labels[r0 + j] = plab + (j,)
                    new_rows.append(r0 + j)
                    digits.append(j)
            if new_rows:
                nr = np.array(new_rows, dtype=np.intp)
                self.keys[nr] = noise.child_keys(self.keys[nr], np.array(digits))
                self.cnt_diff[nr] = 0
                self.cnt_clock[nr] = 0
                self.cnt_mark[nr] = 0

        # every particle of a group with a candidate gets a fresh clock
        reseat = np.flatnonzero(np.isin(self.group, cand_groups))
        self.clock[reseat] = self.t[self.group[reseat]] + self._draw_clock(reseat)

        if self.record and acc_rows.size:
            for g, plab, kk in zip(acc_groups, parent_labels, acc_k):
                conf = self._config(g)
                if self.check_admissible and not is_admissible(conf.labels):
                    raise AssertionError(f"inadmissible configuration at t={self.t[g]}")
                self.trajs[g].events.append(Event(float(self.t[g]), "branch", plab, int(kk), conf))
        self._check_caps_and_extinction(np.unique(cand_groups))

    def _check_caps_and_extinction(self, groups: np.ndarray):
        if groups.size == 0:
            return
        mass = np.bincount(self.group, minlength=self.R)[groups]
        running = self.status[groups] == RUNNING
        pop_cap = running & (mass > self.cfg.max_population)
        ev_cap = running & ~pop_cap & (self.n_events[groups] > self.cfg.max_events)
        extinct = running & ~pop_cap & ~ev_cap & (mass == 0)
        self.status[groups[pop_cap]] = POP_CAP
        self.status[groups[ev_cap]] = EVENT_CAP
        self.status[groups[extinct]] = EXTINCT
        fin = groups[pop_cap | ev_cap | extinct]
        if fin.size:
            self._finish(fin)

    def _finish(self, groups: np.ndarray):
        sel = np.isin(self.group, groups)
        pop = self._pop(np.flatnonzero(sel))
        ok = np.isin(self.status[groups], (HORIZON, EXTINCT))
        good = groups[ok]
        if good.size:
            gsel = np.flatnonzero(np.isin(self.group, good))
            gpop = self._pop(gsel)
            # checkpoints left after extinction see the empty state
            empty = Population(np.zeros((0, self.dim)), np.empty(0, dtype=object),
                               np.zeros(0, dtype=np.intp), self.R, np.zeros(0))
            for g in good:
                gg = np.array([g])
                while self.next_ck[g] < self.ck.size:
                    k = int(self.next_ck[g])
                    for ob in self.observers:
                        ob.on_checkpoint(k, gg, empty, np.array([self.ck[k]]))
                    self.next_ck[g] += 1
            for ob in self.observers:
                ob.on_finish(good, gpop, self.t[good])
        if self.record:
            for g in groups:
                tr = self.trajs[g]
                tr.status = STATUS_NAMES[int(self.status[g])]
                tr.final = self._config(g)
                if self.status[g] == HORIZON:
                    tr.frames.append((float(self.t[g]), tr.final))
                    tr.events.append(Event(float(self.t[g]), "horizon", None, None, tr.final))
        keep = ~sel
        self.x = self.x[keep]
        self.labels = self.labels[keep]
        self.keys = self.keys[keep]
        self.group = self.group[keep]
        self.clock = self.clock[keep]
        self.cnt_diff = self.cnt_diff[keep]
        self.cnt_clock = self.cnt_clock[keep]
        self.cnt_mark = self.cnt_mark[keep]


def simulate(lam0: Configuration, control: ControlPolicy, m: ModelCoefficients, cfg: SimConfig,
             record_controls: bool = False, record_steps: bool = False, key_labels=None,
             check_admissible: bool = True, checkpoints=None, observers=()) -> Trajectory:
    """Simulate one path from ``lam0`` with seed ``cfg.seed``.

    ``key_labels`` optionally maps each initial label to the label whose
    noise streams it should use (descendants follow automatically).
    Raises :class:`CapExceeded` carrying the partial trajectory.
    """
    eng = _Engine([lam0], control, m, cfg, [cfg.seed], observers=observers, checkpoints=checkpoints,
                  key_labels=[key_labels] if key_labels is not None else None, record=True,
                  record_controls=record_controls, record_steps=record_steps,
                  check_admissible=check_admissible)
    res = eng.run()
    tr = res.trajectories[0]
    if res.status[0] == POP_CAP:
        raise CapExceeded("population", tr)
    if res.status[0] == EVENT_CAP:
        raise CapExceeded("event", tr)
    return tr


def simulate_batch(lam0: Configuration, control: ControlPolicy, m: ModelCoefficients, cfg: SimConfig,
                   replicates: int, observers=(), checkpoints=None, record: bool = False,
                   first_replicate: int = 0) -> BatchResult:
    """Independent replicates; replicate ``r`` uses ``replicate_seed(cfg.seed, r)``."""
    seeds = [noise.replicate_seed(cfg.seed, first_replicate + r) for r in range(replicates)]
    eng = _Engine([lam0] * replicates, control, m, cfg, seeds, observers=observers,
                  checkpoints=checkpoints, record=record)
    res = eng.run()
    res.seeds = seeds
    return res


class MomentObserver(Observer):
    """Running suprema of |V_s|, sum |Y|, sum |Y|^2 per replicate."""

    def __init__(self, R: int):
        self.sup_mass = np.zeros(R)
        self.sup_l1 = np.zeros(R)
        self.sup_l2 = np.zeros(R)
        self.final_mass = np.zeros(R)

    def _update(self, pop: Population, groups=None):
        mass = pop.group_mass().astype(float)
        norms = np.linalg.norm(pop.x, axis=1) if len(pop) else np.zeros(0)
        l1 = np.bincount(pop.group, weights=norms, minlength=pop.n_groups)
        l2 = np.bincount(pop.group, weights=norms**2, minlength=pop.n_groups)
        if groups is None:
            groups = np.unique(pop.group)
        self.sup_mass[groups] = np.maximum(self.sup_mass[groups], mass[groups])
        self.sup_l1[groups] = np.maximum(self.sup_l1[groups], l1[groups])
        self.sup_l2[groups] = np.maximum(self.sup_l2[groups], l2[groups])

    def on_step(self, pop, a, h):
        self._update(pop)

    def on_finish(self, groups, pop, t):
        self._update(pop, groups)
        self.final_mass[groups] = pop.group_mass()[groups]


@dataclass
class PopulationStats:
    replicates: int
    mean_sup_mass: float
    se_sup_mass: float
    max_sup_mass: float
    mean_sup_mass_sq: float
    se_sup_mass_sq: float
    mean_final_mass: float
    se_final_mass: float
    mean_sup_l1: float
    se_sup_l1: float
    mean_sup_l2: float
    se_sup_l2: float

    def to_json(self) -> dict:
        return dict(self.__dict__)


def _mean_se(v: np.ndarray) -> tuple:
    v = np.asarray(v, dtype=float)
    if v.size < 2:
        return float(v.mean()) if v.size else float("nan"), 0.0
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))


def population_stats(obs: MomentObserver, ok: np.ndarray | None = None) -> PopulationStats:
    sel = np.ones(obs.sup_mass.size, dtype=bool) if ok is None else ok
    if not sel.any():
        raise ValueError("empty batch")
    m1, s1 = _mean_se(obs.sup_mass[sel])
    m2, s2 = _mean_se(obs.sup_mass[sel] ** 2)
    mf, sf = _mean_se(obs.final_mass[sel])
    l1, sl1 = _mean_se(obs.sup_l1[sel])
    l2, sl2 = _mean_se(obs.sup_l2[sel])
    return PopulationStats(int(sel.sum()), m1, s1, float(obs.sup_mass[sel].max()), m2, s2, mf, sf, l1, sl1, l2, sl2)
