"""Labelled atomic configurations and the cemetery-padded transport distance."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np
from scipy.optimize import linear_sum_assignment

from .genealogy import (
    AdmissibleConfig,
    GenealogyError,
    Label,
    LabelPermutation,
    apply_permutation,
    format_label,
    label_distance,
    label_norm,
    make_label,
    parse_label,
)


class ConfigurationError(ValueError):
    pass


class Configuration:
    """Finite sum of Dirac masses at (label, position) pairs.

    Atoms are kept sorted by label; ``positions[r]`` belongs to ``labels[r]``.
    """

    __slots__ = ("labels", "positions", "dim")

    def __init__(self, atoms: Iterable = (), dim: int | None = None):
        atoms = [(make_label(lab), np.atleast_1d(np.asarray(x, dtype=float))) for lab, x in atoms]
        if dim is None:
            if not atoms:
                raise ConfigurationError("dim is required for an empty configuration")
            dim = atoms[0][1].shape[0]
        for lab, x in atoms:
            if x.shape != (dim,):
                raise ConfigurationError(f"position of {format_label(lab)!r} has shape {x.shape}, expected ({dim},)")
        atoms.sort(key=lambda a: a[0])
        try:
            AdmissibleConfig(lab for lab, _ in atoms)
        except GenealogyError as exc:
            raise ConfigurationError(str(exc)) from exc
        self.dim = int(dim)
        self.labels = tuple(lab for lab, _ in atoms)
        self.positions = np.array([x for _, x in atoms], dtype=float).reshape(len(atoms), self.dim)

    @classmethod
    def _trusted(cls, labels: tuple, positions: np.ndarray, dim: int) -> "Configuration":
        # caller guarantees sorted, admissible labels
        obj = cls.__new__(cls)
        obj.labels = labels
        obj.positions = positions
        obj.dim = dim
        return obj

    @classmethod
    def from_arrays(cls, labels, positions) -> "Configuration":
        pos = np.asarray(positions, dtype=float)
        if pos.ndim == 1:
            pos = pos[:, None]
        return cls(zip(labels, pos), dim=pos.shape[1])

    @classmethod
    def empty(cls, dim: int = 1) -> "Configuration":
        return cls((), dim=dim)

    @classmethod
    def siblings(cls, positions, dim: int | None = None) -> "Configuration":
        """Atoms labelled (0), (1), ... at the given positions."""
        pos = np.asarray(positions, dtype=float)
        if pos.ndim == 1:
            pos = pos[:, None] if dim in (None, 1) else pos.reshape(-1, dim)
        labels = [(r,) for r in range(pos.shape[0])]
        return cls(zip(labels, pos), dim=pos.shape[1] if pos.size else (dim or 1))

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def mass(self) -> int:
        return len(self.labels)

    @property
    def index(self) -> AdmissibleConfig:
        return AdmissibleConfig._trusted(self.labels)

    def atoms(self):
        return list(zip(self.labels, self.positions))

    def position_of(self, i: Label) -> np.ndarray:
        try:
            r = self.labels.index(tuple(i))
        except ValueError:
            raise ConfigurationError(f"label {format_label(i)!r} is not alive") from None
        return self.positions[r]

    def __eq__(self, other) -> bool:
        if not isinstance(other, Configuration):
            return NotImplemented
        return (
            self.dim == other.dim
            and self.labels == other.labels
            and np.array_equal(self.positions, other.positions)
        )

    __hash__ = None

    def __repr__(self) -> str:
        inner = ", ".join(f"{format_label(lab)!r}: {x.tolist()}" for lab, x in self.atoms())
        return f"Configuration(dim={self.dim}, {{{inner}}})"

    def to_json(self) -> dict:
        return {
            "dim": self.dim,
            "atoms": [{"label": format_label(lab), "pos": x.tolist()} for lab, x in self.atoms()],
        }

    @classmethod
    def from_json(cls, data: dict) -> "Configuration":
        return cls(((parse_label(a["label"]), a["pos"]) for a in data["atoms"]), dim=int(data["dim"]))


@dataclass(frozen=True)
class PositionVector:
    config_index: AdmissibleConfig
    coords: np.ndarray
    dim: int

    def __post_init__(self):
        if self.coords.shape != (self.dim * len(self.config_index),):
            raise ConfigurationError(
                f"coordinate vector has length {self.coords.size}, expected {self.dim * len(self.config_index)}"
            )


class UnlabeledMeasure:
    """Multiset of points, stored in lexicographic order so that any
    reduction over it is independent of how the source was labelled."""

    __slots__ = ("points",)

    def __init__(self, points, dim: int | None = None):
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(-1, dim or 1)
        if pts.shape[0]:
            order = np.lexsort(pts.T[::-1])
            pts = pts[order]
        self.points = pts

    @property
    def mass(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def integrate(self, f: Callable[[np.ndarray], np.ndarray]) -> float:
        if self.mass == 0:
            return 0.0
        return float(np.sum(f(self.points)))

    def __eq__(self, other) -> bool:
        if not isinstance(other, UnlabeledMeasure):
            return NotImplemented
        return self.points.shape == other.points.shape and np.array_equal(self.points, other.points)

    __hash__ = None

    def __repr__(self) -> str:
        return f"UnlabeledMeasure({self.points.tolist()})"


def iota(lam: Configuration) -> PositionVector:
    return PositionVector(lam.index, lam.positions.reshape(-1).copy(), lam.dim)


def iota_inv(v: PositionVector) -> Configuration:
    n = len(v.config_index)
    if v.coords.shape != (v.dim * n,):
        raise ConfigurationError("coordinate vector length does not match the label set")
    return Configuration._trusted(v.config_index.labels, v.coords.reshape(n, v.dim).copy(), v.dim)


def make_position_vector(labels, coords, dim: int) -> PositionVector:
    return PositionVector(AdmissibleConfig(labels), np.asarray(coords, dtype=float).reshape(-1), dim)


def project_pi(lam: Configuration) -> UnlabeledMeasure:
    return UnlabeledMeasure(lam.positions.copy(), dim=lam.dim)


def integrate(phi: Callable[[Label, np.ndarray], float], lam: Configuration) -> float:
    return float(sum(phi(lab, x) for lab, x in lam.atoms()))


def relabel(s: LabelPermutation, lam: Configuration) -> Configuration:
    try:
        apply_permutation(s, lam.index)
    except GenealogyError as exc:
        raise ConfigurationError(str(exc)) from exc
    return Configuration(((s(lab), x) for lab, x in lam.atoms()), dim=lam.dim)


def d1_cost_matrix(lam: Configuration, mu: Configuration) -> np.ndarray:
    """Ground costs between the two atom lists, padded with cemetery atoms."""
    if lam.dim != mu.dim:
        raise ConfigurationError(f"dimension mismatch: {lam.dim} vs {mu.dim}")
    n, m = len(lam), len(mu)
    size = max(n, m)
    cost = np.zeros((size, size))
    for r, (i, x) in enumerate(lam.atoms()):
        for c, (j, y) in enumerate(mu.atoms()):
            cost[r, c] = label_distance(i, j) + np.abs(x - y).sum()
        cost[r, m:] = label_norm(i) + np.abs(x).sum() + 1.0
    for c, (j, y) in enumerate(mu.atoms()):
        cost[n:, c] = label_norm(j) + np.abs(y).sum() + 1.0
    return cost


def distance_d1(lam: Configuration, mu: Configuration) -> float:
    cost = d1_cost_matrix(lam, mu)
    if cost.size == 0:
        return 0.0
    rows, cols = linear_sum_assignment(cost)
    return math.fsum(cost[rows, cols])
