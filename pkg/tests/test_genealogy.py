from __future__ import annotations

import itertools

import pytest
from hypothesis import given, strategies as st

from branchctl.genealogy import (
    ROOT,
    AdmissibleConfig,
    GenealogyError,
    LabelPermutation,
    Relation,
    apply_permutation,
    branch_update,
    concat,
    format_label,
    is_admissible,
    is_prefix,
    label_distance,
    label_norm,
    parse_label,
    total_order_cmp,
)
from conftest import labels


def test_concat_examples():
    assert concat(ROOT, (1, 2)) == (1, 2)
    assert concat((0,), (1, 2)) == (0, 1, 2)
    assert concat((1,), ROOT) == (1,)


def test_is_prefix_examples():
    assert is_prefix((0,), (0, 3)) is Relation.STRICT_ANCESTOR
    assert is_prefix((0,), (0,)) is Relation.EQUAL
    assert is_prefix((0,), (1, 0)) is Relation.INCOMPARABLE
    assert is_prefix((0, 3), (0,)) is Relation.DESCENDANT
    assert is_prefix((0,), (0, 3)).weak_ancestor and is_prefix((0,), (0,)).weak_ancestor
    assert not is_prefix((0,), (1, 0)).weak_ancestor


def test_label_distance_examples():
    assert label_distance((3, 1), (3, 1)) == 0
    assert label_distance((0,), (1,)) == 3
    assert label_distance((0, 1), ROOT) == 3
    assert label_norm((0, 1)) == 3


def test_total_order_examples():
    assert total_order_cmp(ROOT, (7,)) < 0
    assert total_order_cmp((0, 5), (1,)) < 0
    assert total_order_cmp((2,), (2, 0)) < 0
    assert total_order_cmp((2, 0), (2,)) > 0
    assert total_order_cmp((4, 4), (4, 4)) == 0


def test_branch_update_examples():
    assert branch_update(AdmissibleConfig([ROOT]), ROOT, 2).labels == ((0,), (1,))
    assert branch_update(AdmissibleConfig([ROOT]), ROOT, 0).labels == ()
    assert branch_update(AdmissibleConfig([(0,), (1,)]), (1,), 1).labels == ((0,), (1, 0))
    with pytest.raises(GenealogyError):
        branch_update(AdmissibleConfig([(0,)]), (1,), 2)


def test_is_admissible_examples():
    assert is_admissible([ROOT])
    assert not is_admissible([ROOT, (0,)])
    assert is_admissible([(0,), (1,), (2, 0)])


def test_admissible_config_rejects_ancestor_pairs():
    with pytest.raises(GenealogyError):
        AdmissibleConfig([(0,), (0, 1)])


def test_apply_permutation_examples():
    V = AdmissibleConfig([(0,), (1,)])
    assert apply_permutation(LabelPermutation.identity(), V) == V
    assert apply_permutation(LabelPermutation.swap((0,), (1,)), V) == V
    with pytest.raises(GenealogyError):
        apply_permutation(LabelPermutation({(0,): (1,)}), V)
    with pytest.raises(GenealogyError):
        # image {(), (1)} contains an ancestor pair
        apply_permutation(LabelPermutation({(0,): ROOT}), V)


def test_permutation_must_be_injective():
    with pytest.raises(GenealogyError):
        LabelPermutation({(0,): (2,), (1,): (2,)})


def test_permutation_extend_rewrites_prefix():
    s = LabelPermutation({(0,): (5,), (1,): (3, 1)})
    assert s.extend((0, 2, 1)) == (5, 2, 1)
    assert s.extend((1, 0)) == (3, 1, 0)
    assert s.extend((7,)) == (7,)
    assert s.inverse()(s((0,))) == (0,)


def test_label_serialisation():
    assert format_label((0, 2, 1)) == "0.2.1"
    assert format_label(ROOT) == ""
    assert parse_label("0.2.1") == (0, 2, 1)
    assert parse_label("") == ROOT
    V = AdmissibleConfig([(1,), (0, 2)])
    assert V.to_json() == ["0.2", "1"]
    assert AdmissibleConfig.from_json(V.to_json()) == V
    with pytest.raises(GenealogyError):
        parse_label("0.x")


@given(labels, labels, labels)
def test_distance_is_a_metric(i, j, k):
    assert label_distance(i, j) == label_distance(j, i)
    assert (label_distance(i, j) == 0) == (i == j)
    assert label_distance(i, k) <= label_distance(i, j) + label_distance(j, k)


@given(labels, labels, labels)
def test_total_order_is_consistent(i, j, k):
    assert total_order_cmp(i, j) == -total_order_cmp(j, i)
    if total_order_cmp(i, j) <= 0 and total_order_cmp(j, k) <= 0:
        assert total_order_cmp(i, k) <= 0
    if is_prefix(i, j).weak_ancestor:
        assert total_order_cmp(i, j) <= 0


@given(labels)
def test_label_string_roundtrip(i):
    assert parse_label(format_label(i)) == i


def _admissible_sets(max_depth=2, width=2):
    pool = [()] + [tuple(t) for d in range(1, max_depth + 1) for t in itertools.product(range(width), repeat=d)]
    for r in range(0, 4):
        for combo in itertools.combinations(pool, r):
            if is_admissible(combo):
                yield AdmissibleConfig(combo)


def test_branch_update_preserves_admissibility_exhaustively():
    count = 0
    for V in _admissible_sets():
        for i in V.labels:
            for k in range(11):
                W = branch_update(V, i, k)
                assert is_admissible(W.labels)
                assert len(W) == len(V) + k - 1
                assert list(W.labels) == sorted(W.labels, key=_cmp_key())
                count += 1
    assert count > 100


def _cmp_key():
    import functools

    return functools.cmp_to_key(total_order_cmp)


@given(st.lists(labels, max_size=5), st.integers(0, 10), st.data())
def test_branch_update_property(raw, k, data):
    V = AdmissibleConfig([lab for n, lab in enumerate(raw)
                          if not any(is_prefix(o, lab) in (Relation.STRICT_ANCESTOR, Relation.DESCENDANT,
                                                            Relation.EQUAL) for o in raw[:n])])
    if len(V) == 0:
        return
    i = data.draw(st.sampled_from(V.labels))
    W = branch_update(V, i, k)
    assert is_admissible(W.labels)
    assert set(W.labels) == (set(V.labels) - {i}) | {i + (d,) for d in range(k)}
