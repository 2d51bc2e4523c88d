"""Row-batched view of one or many configurations.

Coefficients, costs and policies are evaluated on a :class:`Population`:
a flat table of particles (one row each) tagged with the replicate
("group") they belong to.  A single configuration is the one-group case.
Within a group, the configuration passed conceptually to every row is the
whole group.

Reductions over a group (:meth:`Population.group_sum`) run in a canonical
order determined by positions alone, so results do not depend on labels or
on row order.  This is what makes relabelled simulations bit-identical.
"""

from __future__ import annotations

import numpy as np

from .configuration import Configuration, UnlabeledMeasure


class Population:
    __slots__ = ("x", "labels", "group", "n_groups", "t", "_canon", "_counts")

    def __init__(self, x, labels, group, n_groups: int, t):
        self.x = x
        self.labels = labels
        self.group = group
        self.n_groups = int(n_groups)
        self.t = t
        self._canon = None
        self._counts = None

    @classmethod
    def from_configuration(cls, lam: Configuration, t: float = 0.0) -> "Population":
        n = len(lam)
        labels = np.empty(n, dtype=object)
        labels[:] = list(lam.labels)
        return cls(
            lam.positions.astype(float, copy=True),
            labels,
            np.zeros(n, dtype=np.intp),
            1,
            np.full(n, float(t)),
        )

    @classmethod
    def from_configurations(cls, lams, times) -> "Population":
        xs, labs, groups, ts = [], [], [], []
        dim = None
        for g, (lam, t) in enumerate(zip(lams, times)):
            dim = lam.dim
            xs.append(lam.positions)
            labs.extend(lam.labels)
            groups.append(np.full(len(lam), g, dtype=np.intp))
            ts.append(np.full(len(lam), float(t)))
        labels = np.empty(len(labs), dtype=object)
        labels[:] = labs
        return cls(
            np.concatenate(xs) if xs else np.zeros((0, dim or 1)),
            labels,
            np.concatenate(groups) if groups else np.zeros(0, dtype=np.intp),
            len(lams),
            np.concatenate(ts) if ts else np.zeros(0),
        )

    def __len__(self) -> int:
        return self.x.shape[0]

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    def group_mass(self) -> np.ndarray:
        if self._counts is None:
            self._counts = np.bincount(self.group, minlength=self.n_groups)
        return self._counts

    def mass(self) -> np.ndarray:
        """Population size of each row's group, per row."""
        return self.group_mass()[self.group]

    def canonical_order(self) -> np.ndarray:
        if self._canon is None:
            keys = [self.x[:, c] for c in range(self.dim - 1, -1, -1)] + [self.group]
            self._canon = np.lexsort(keys)
        return self._canon

    def group_sum(self, values) -> np.ndarray:
        """Sum ``values`` (one entry or row-vector per particle) over each group."""
        values = np.asarray(values, dtype=float)
        order = self.canonical_order()
        g = self.group[order]
        v = values[order]
        if v.ndim == 1:
            return np.bincount(g, weights=v, minlength=self.n_groups)
        flat = v.reshape(v.shape[0], int(np.prod(v.shape[1:])))
        out = np.stack(
            [np.bincount(g, weights=flat[:, c], minlength=self.n_groups) for c in range(flat.shape[1])],
            axis=1,
        )
        return out.reshape((self.n_groups,) + v.shape[1:])

    def per_row(self, group_values) -> np.ndarray:
        return np.asarray(group_values)[self.group]

    def rows_of(self, g: int) -> np.ndarray:
        return np.flatnonzero(self.group == g)

    def configuration(self, g: int = 0) -> Configuration:
        rows = self.rows_of(g)
        return Configuration(zip(self.labels[rows], self.x[rows]), dim=self.dim)

    def measure(self, g: int = 0) -> UnlabeledMeasure:
        return UnlabeledMeasure(self.x[self.rows_of(g)], dim=self.dim)

    def blind(self) -> "MeasureView":
        return MeasureView(self)

    def subset(self, rows) -> "Population":
        """Rows ``rows`` only; group ids are kept, so groups may lose members."""
        return Population(self.x[rows], self.labels[rows], self.group[rows], self.n_groups, self.t[rows])


class MeasureView:
    """Label-free facade over a :class:`Population` for mean-field coefficients."""

    __slots__ = ("_pop",)

    def __init__(self, pop: Population):
        self._pop = pop

    @property
    def t(self) -> np.ndarray:
        return self._pop.t

    @property
    def n_groups(self) -> int:
        return self._pop.n_groups

    def mass(self) -> np.ndarray:
        return self._pop.mass()

    def group_mass(self) -> np.ndarray:
        return self._pop.group_mass()

    def group_sum(self, values) -> np.ndarray:
        return self._pop.group_sum(values)

    def per_row(self, group_values) -> np.ndarray:
        return self._pop.per_row(group_values)

    def mean_position(self) -> np.ndarray:
        """Empirical mean position of each row's group, per row."""
        pop = self._pop
        tot = pop.group_sum(pop.x)
        cnt = np.maximum(pop.group_mass(), 1)[:, None]
        return (tot / cnt)[pop.group]

    def measure(self, g: int = 0) -> UnlabeledMeasure:
        return self._pop.measure(g)
