"""Ulam-Harris-Neveu labels and admissible label sets.

A label is a plain tuple of non-negative ints; the empty tuple is the
mother particle.  Python's tuple ordering coincides with the total order
used to lay out coordinates (an ancestor sorts before its descendants and
siblings sort by their first differing digit), so sorting labels needs no
custom key.
"""

from __future__ import annotations

import enum
from collections.abc import Iterable, Mapping
from typing import Tuple

Label = Tuple[int, ...]

ROOT: Label = ()


class GenealogyError(ValueError):
    pass


class Relation(enum.Enum):
    """Relation of ``i`` to ``j`` under the prefix (ancestry) order."""

    STRICT_ANCESTOR = "strict-ancestor"
    EQUAL = "equal"
    DESCENDANT = "descendant"
    INCOMPARABLE = "incomparable"

    @property
    def weak_ancestor(self) -> bool:
        return self in (Relation.STRICT_ANCESTOR, Relation.EQUAL)


def make_label(digits: Iterable[int]) -> Label:
    lab = tuple(int(k) for k in digits)
    if any(k < 0 for k in lab):
        raise GenealogyError(f"label digits must be non-negative: {lab}")
    return lab


def concat(i: Label, j: Label) -> Label:
    return i + j


def common_prefix_length(i: Label, j: Label) -> int:
    p = 0
    for a, b in zip(i, j):
        if a != b:
            break
        p += 1
    return p


def is_prefix(i: Label, j: Label) -> Relation:
    if i == j:
        return Relation.EQUAL
    p = common_prefix_length(i, j)
    if p == len(i):
        return Relation.STRICT_ANCESTOR
    if p == len(j):
        return Relation.DESCENDANT
    return Relation.INCOMPARABLE


def label_distance(i: Label, j: Label) -> int:
    """Tree distance: sum of (digit + 1) over both suffixes past the common prefix."""
    p = common_prefix_length(i, j)
    return sum(k + 1 for k in i[p:]) + sum(k + 1 for k in j[p:])


def label_norm(i: Label) -> int:
    return label_distance(i, ROOT)


def total_order_cmp(i: Label, j: Label) -> int:
    """-1, 0 or 1 according to the total order on labels."""
    return (i > j) - (i < j)


def format_label(i: Label) -> str:
    return ".".join(str(k) for k in i)


def parse_label(s: str) -> Label:
    s = s.strip()
    if s in ("", "∅"):
        return ROOT
    try:
        return make_label(int(tok) for tok in s.split("."))
    except ValueError as exc:
        raise GenealogyError(f"malformed label string {s!r}") from exc


def is_admissible(labels: Iterable[Label]) -> bool:
    # after sorting, a strict ancestor of any label is immediately followed
    # by one of its descendants, so adjacent pairs suffice
    ordered = sorted(set(labels))
    for a, b in zip(ordered, ordered[1:]):
        if b[: len(a)] == a:
            return False
    return True


class AdmissibleConfig:
    """A finite, prefix-free set of labels kept sorted by the total order."""

    __slots__ = ("_labels",)

    def __init__(self, labels: Iterable[Label] = ()):
        labs = [make_label(lab) for lab in labels]
        uniq = sorted(set(labs))
        if len(uniq) != len(labs):
            raise GenealogyError("duplicate labels in configuration")
        if not is_admissible(uniq):
            raise GenealogyError(f"label set is not admissible: {uniq}")
        self._labels = tuple(uniq)

    @classmethod
    def _trusted(cls, sorted_labels: tuple) -> "AdmissibleConfig":
        obj = cls.__new__(cls)
        obj._labels = sorted_labels
        return obj

    @property
    def labels(self) -> tuple:
        return self._labels

    def __len__(self) -> int:
        return len(self._labels)

    def __iter__(self):
        return iter(self._labels)

    def __contains__(self, item) -> bool:
        return tuple(item) in set(self._labels)

    def __eq__(self, other) -> bool:
        if isinstance(other, AdmissibleConfig):
            return self._labels == other._labels
        return NotImplemented

    def __hash__(self) -> int:
        return hash(self._labels)

    def __repr__(self) -> str:
        inner = ", ".join(repr(format_label(lab)) for lab in self._labels)
        return f"AdmissibleConfig([{inner}])"

    def to_json(self) -> list:
        return [format_label(lab) for lab in self._labels]

    @classmethod
    def from_json(cls, data: list) -> "AdmissibleConfig":
        return cls(parse_label(s) for s in data)


def offspring_labels(i: Label, k: int) -> list:
    return [i + (j,) for j in range(k)]


def branch_update(V: AdmissibleConfig, i: Label, k: int) -> AdmissibleConfig:
    """Replace ``i`` by its ``k`` children ``i0, ..., i(k-1)``."""
    i = tuple(i)
    if k < 0:
        raise GenealogyError("offspring count must be non-negative")
    if i not in V:
        raise GenealogyError(f"label {format_label(i)!r} is not alive")
    rest = [lab for lab in V.labels if lab != i]
    # children of i sort exactly where i sat, so the result stays sorted
    out = sorted(rest + offspring_labels(i, k))
    return AdmissibleConfig._trusted(tuple(out))


class LabelPermutation:
    """Finite partial bijection of labels, identity off its domain."""

    def __init__(self, forward: Mapping[Label, Label] | None = None):
        fwd = {make_label(a): make_label(b) for a, b in (forward or {}).items()}
        if len(set(fwd.values())) != len(fwd):
            raise GenealogyError("permutation is not injective on its domain")
        self.forward = fwd

    @classmethod
    def identity(cls) -> "LabelPermutation":
        return cls({})

    @classmethod
    def swap(cls, a: Label, b: Label) -> "LabelPermutation":
        return cls({tuple(a): tuple(b), tuple(b): tuple(a)})

    def __call__(self, i: Label) -> Label:
        return self.forward.get(tuple(i), tuple(i))

    def inverse(self) -> "LabelPermutation":
        return LabelPermutation({b: a for a, b in self.forward.items()})

    def extend(self, i: Label) -> Label:
        """Map a descendant of a domain label by rewriting its ancestor prefix."""
        i = tuple(i)
        for n in range(len(i), -1, -1):
            head = i[:n]
            if head in self.forward:
                return self.forward[head] + i[n:]
        return i

    def __repr__(self) -> str:
        pairs = ", ".join(f"{format_label(a)!r}->{format_label(b)!r}" for a, b in self.forward.items())
        return f"LabelPermutation({pairs})"


def apply_permutation(s: LabelPermutation, V: AdmissibleConfig) -> AdmissibleConfig:
    image = [s(lab) for lab in V.labels]
    if len(set(image)) != len(image):
        raise GenealogyError(f"{s!r} is not injective on {V!r}")
    if not is_admissible(image):
        raise GenealogyError(f"image of {V!r} under {s!r} is not admissible")
    return AdmissibleConfig._trusted(tuple(sorted(image)))
