from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from branchctl.configuration import (
    Configuration,
    ConfigurationError,
    distance_d1,
    integrate,
    iota,
    iota_inv,
    make_position_vector,
    project_pi,
    relabel,
)
from branchctl.genealogy import ROOT, LabelPermutation, label_norm
from branchctl.verify import brute_force_d1, random_admissible


def conf(*atoms, dim=1):
    return Configuration([(lab, np.atleast_1d(np.asarray(x, dtype=float))) for lab, x in atoms], dim=dim)


def test_iota_examples():
    v = iota(Configuration.empty())
    assert len(v.config_index) == 0 and v.coords.size == 0
    v = iota(conf((ROOT, 1.5)))
    assert v.config_index.labels == (ROOT,) and v.coords.tolist() == [1.5]
    v = iota(conf(((1,), [0, 1]), ((0,), [2, 3]), dim=2))
    assert v.config_index.labels == ((0,), (1,))
    assert v.coords.tolist() == [2.0, 3.0, 0.0, 1.0]


def test_iota_inv_examples():
    assert iota_inv(make_position_vector([ROOT], [0.0], 1)) == conf((ROOT, 0.0))
    with pytest.raises(ConfigurationError):
        make_position_vector([(0,), (1,)], [1, 2, 3], 2)


def test_iota_roundtrip_fuzz():
    rng = np.random.default_rng(0)
    for _ in range(100):
        lam = random_admissible(rng, max_atoms=5, dim=int(rng.integers(1, 3)))
        assert iota_inv(iota(lam)) == lam


def test_configuration_invariants():
    with pytest.raises(ConfigurationError):
        conf(((0,), 1.0), ((0, 1), 2.0))
    with pytest.raises(ConfigurationError):
        conf(((0,), 1.0), ((0,), 2.0))
    with pytest.raises(ConfigurationError):
        Configuration([((0,), np.array([1.0])), ((1,), np.array([1.0, 2.0]))])
    lam = conf(((2,), 0.0), ((0, 1), 1.0), ((1,), 2.0))
    assert lam.labels == ((0, 1), (1,), (2,))


def test_project_pi_examples():
    assert project_pi(Configuration.empty()).mass == 0
    x = 0.7
    mu = project_pi(conf(((0,), x), ((1,), x)))
    assert mu.mass == 2 and mu == project_pi(conf(((5,), x), ((3,), x)))


def test_integrate_examples():
    lam3 = conf(((0,), 1.0), ((1,), -2.0), ((2,), 4.0))
    assert integrate(lambda i, x: 1.0, lam3) == 3
    assert integrate(lambda i, x: float(x[0]), conf((ROOT, 2.0))) == 2.0
    assert integrate(lambda i, x: float(x @ x), conf(((0,), 1.0), ((1,), 2.0))) == 5.0


def test_distance_examples():
    lam = conf(((0,), 0.3), ((1, 2), -1.0))
    assert distance_d1(lam, lam) == 0.0
    assert distance_d1(conf((ROOT, 0.0)), conf((ROOT, 1.0))) == 1.0
    assert distance_d1(conf((ROOT, 0.0)), Configuration.empty()) == 1.0
    with pytest.raises(ConfigurationError):
        distance_d1(conf((ROOT, 0.0)), conf((ROOT, [0.0, 1.0]), dim=2))


def test_distance_to_empty_is_the_cemetery_sum():
    rng = np.random.default_rng(1)
    for _ in range(50):
        lam = random_admissible(rng)
        expect = math.fsum(label_norm(i) + float(np.abs(x).sum()) + 1.0 for i, x in lam.atoms())
        assert distance_d1(lam, Configuration.empty()) == expect


def test_relabel_examples():
    lam = conf(((0,), 1.0), ((1,), 2.0))
    assert relabel(LabelPermutation.identity(), lam) == lam
    assert relabel(LabelPermutation.swap((0,), (1,)), lam) == conf(((0,), 2.0), ((1,), 1.0))
    with pytest.raises(ConfigurationError):
        relabel(LabelPermutation({(0,): (1,)}), lam)


def test_relabel_preserves_projection_fuzz():
    rng = np.random.default_rng(2)
    for _ in range(100):
        lam = random_admissible(rng)
        perm = list(lam.labels)
        rng.shuffle(perm)
        s = LabelPermutation(dict(zip(lam.labels, perm)))
        assert project_pi(relabel(s, lam)) == project_pi(lam)


def test_json_roundtrip():
    lam = conf(((0, 1), [1.0, -2.0]), ((1,), [0.5, 0.25]), dim=2)
    data = lam.to_json()
    assert data["atoms"][0]["label"] == "0.1"
    assert Configuration.from_json(data) == lam


def test_matching_equals_brute_force():
    rng = np.random.default_rng(3)
    for _ in range(100):
        lam, mu = random_admissible(rng), random_admissible(rng)
        assert distance_d1(lam, mu) == brute_force_d1(lam, mu)


def test_metric_properties_fuzz():
    rng = np.random.default_rng(4)
    for _ in range(500):
        a, b, c = (random_admissible(rng, max_atoms=5) for _ in range(3))
        ab, ba = distance_d1(a, b), distance_d1(b, a)
        assert ab == ba
        assert (ab == 0.0) == (a == b)
        assert distance_d1(a, c) <= ab + distance_d1(b, c) + 1e-12


@given(st.integers(1, 5), st.integers(0, 10**6))
def test_same_labels_bounded_by_coordinate_distance(n, seed):
    rng = np.random.default_rng(seed)
    labels = [(r,) for r in range(n)]
    x, y = rng.standard_normal((2, n, 2))
    lam = Configuration(zip(labels, x), dim=2)
    mu = Configuration(zip(labels, y), dim=2)
    d = distance_d1(lam, mu)
    l1 = float(np.abs(x - y).sum())
    assert d <= l1 + 1e-12
    # l1 over all coordinates is at most sqrt(n d) times the Euclidean norm
    assert d <= math.sqrt(2 * n) * float(np.linalg.norm(x - y)) + 1e-12
