import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gossip_aoi.star import (
    LambdaTable,
    lambda_from_independent_links,
    marginal_geometric,
    product_form_holds,
    random_lambda_table,
    restrict_lambda,
    star2_box,
    star2_covariance,
    star2_joint_closed_form,
    star_joint_algorithm1,
    star_joint_box,
)

from .oracles import star_chain

UNIFORM2 = lambda_from_independent_links({1: 0.5, 2: 0.5})


def table2(l0, l1, l2, l12):
    return LambdaTable((1, 2), {(): l0, (1,): l1, (2,): l2, (1, 2): l12})


seeds = st.integers(0, 2**32 - 1)


# --- tables -----------------------------------------------------------------


def test_independent_link_tables():
    assert all(UNIFORM2[B] == 0.25 for B in UNIFORM2.subsets())
    sure = lambda_from_independent_links({1: 1.0, 2: 1.0})
    assert sure[{1, 2}] == 1.0 and sure[()] == sure[{1}] == sure[{2}] == 0.0
    three = lambda_from_independent_links({1: 0.5, 2: 0.5, 3: 0.5})
    assert all(three[B] == 0.125 for B in three.subsets())
    with pytest.raises(ValueError):
        lambda_from_independent_links({1: 1.2})


def test_table_validation():
    with pytest.raises(ValueError, match="sum"):
        table2(0.5, 0.5, 0.5, 0.5)
    with pytest.raises(ValueError, match="negative"):
        table2(1.1, -0.1, 0.0, 0.0)
    with pytest.raises(ValueError, match="not contained"):
        LambdaTable((1, 2), {(3,): 1.0})


def test_restriction():
    t = table2(0.1, 0.2, 0.3, 0.4)
    assert restrict_lambda(t, (1, 2)).mass == t.mass
    r = restrict_lambda(t, (1,))
    assert r[{1}] == pytest.approx(0.6) and r[()] == pytest.approx(0.4)
    three = lambda_from_independent_links({1: 0.5, 2: 0.5, 3: 0.5})
    for k in (1, 2, 3):
        s = restrict_lambda(three, (k,))
        assert (s[()], s[{k}]) == (0.5, 0.5)
    with pytest.raises(ValueError):
        restrict_lambda(t, (3,))


@given(seed=seeds, n=st.integers(1, 4), data=st.data())
@settings(max_examples=40, deadline=None)
def test_restriction_sums_to_one(seed, n, data):
    nodes = tuple(range(1, n + 1))
    t = random_lambda_table(np.random.default_rng(seed), nodes)
    D = data.draw(st.sets(st.sampled_from(nodes), min_size=1))
    r = restrict_lambda(t, D)
    assert abs(sum(r.mass.values()) - 1) <= 1e-12
    for B in r.subsets():
        expect = sum(t[B | Bc] for Bc in _subsets(set(nodes) - D))
        assert r[B] == pytest.approx(expect, abs=1e-15)


def _subsets(s):
    s = sorted(s)
    return [frozenset(c) for r in range(len(s) + 1) for c in itertools.combinations(s, r)]


# --- marginals --------------------------------------------------------------


def test_geometric_marginal():
    g = marginal_geometric(UNIFORM2, 1)
    assert g.parameter == 0.5 and g.pmf(3) == 0.125
    assert g.mean == 2 and g.variance == 2
    point = marginal_geometric(lambda_from_independent_links({1: 1.0}), 1)
    assert point.pmf(1) == 1.0 and point.pmf(2) == 0.0
    with pytest.raises(ValueError):
        marginal_geometric(lambda_from_independent_links({1: 0.0, 2: 0.5}), 1)


def test_marginal_in_c_notation():
    t = table2(0.1, 0.2, 0.3, 0.4)
    c = {1: 1 - (t[{2}] + t[{1, 2}]), 2: 1 - (t[{1}] + t[{1, 2}])}
    for k in (1, 2):
        g = marginal_geometric(t, k)
        for i in range(1, 10):
            assert g.pmf(i) == pytest.approx((1 - c[3 - k]) * c[3 - k] ** (i - 1), rel=1e-13)


# --- two receivers ----------------------------------------------------------


def test_closed_form_anchors():
    t = table2(0.1, 0.2, 0.3, 0.4)
    assert star2_joint_closed_form(t, 1, 1) == 0.4
    assert star2_joint_closed_form(UNIFORM2, 2, 1) == 0.125
    assert star2_joint_closed_form(UNIFORM2, 2, 2) == 0.0625
    with pytest.raises(ValueError):
        star2_joint_closed_form(t, 0, 1)


def test_uniform_values_against_chain():
    ref = star_chain(UNIFORM2.mass, (1, 2), 25)
    assert ref[(2, 1)] == pytest.approx(0.125, abs=1e-12)
    assert ref[(2, 2)] == pytest.approx(0.0625, abs=1e-12)


@given(seed=seeds)
@settings(max_examples=8, deadline=None)
def test_closed_form_against_chain_interior(seed):
    t = random_lambda_table(np.random.default_rng(seed), (1, 2), floor=0.02)
    K = 20
    ref = star_chain(t.mass, (1, 2), K)
    for i in range(1, K):
        for j in range(1, K):
            assert star2_joint_closed_form(t, i, j) == pytest.approx(ref[(i, j)], abs=1e-11)


def test_product_form_for_uniform_table():
    g = marginal_geometric(UNIFORM2, 1)
    for i in range(1, 15):
        for j in range(1, 15):
            assert star2_joint_closed_form(UNIFORM2, i, j) == pytest.approx(g.pmf(i) * g.pmf(j), rel=1e-13)
    assert product_form_holds(UNIFORM2) and star2_covariance(UNIFORM2) == 0.0


def _chain_covariance(t, K=40):
    ref = star_chain(t.mass, (1, 2), K)
    e1 = sum(i * p for (i, _), p in ref.items())
    e2 = sum(j * p for (_, j), p in ref.items())
    return sum(i * j * p for (i, j), p in ref.items()) - e1 * e2


def test_covariance_examples():
    # reception rates are 0.5 each: (0.16 - 0.01) / (0.5 * 0.5 * 0.6) = 1
    coupled = table2(0.4, 0.1, 0.1, 0.4)
    assert star2_covariance(coupled) == pytest.approx(1.0, rel=1e-13)
    assert _chain_covariance(coupled) == pytest.approx(1.0, abs=1e-6)
    same = table2(0.5, 0.0, 0.0, 0.5)
    assert star2_covariance(same) == pytest.approx(2.0, rel=1e-13)
    assert _chain_covariance(same) == pytest.approx(2.0, abs=1e-6)
    with pytest.raises(ValueError):
        star2_covariance(table2(1.0, 0.0, 0.0, 0.0))


@given(seed=seeds, independent=st.booleans())
@settings(max_examples=60, deadline=None)
def test_product_form_criterion_both_ways(seed, independent):
    rng = np.random.default_rng(seed)
    if independent:
        s1, s2 = rng.uniform(0.05, 1.0, size=2)
        t = lambda_from_independent_links({1: float(s1), 2: float(s2)})
    else:
        t = random_lambda_table(rng, (1, 2), floor=0.01)
    cov_zero = abs(star2_covariance(t)) <= 1e-9
    assert cov_zero == product_form_holds(t, tol=1e-9)
    assert product_form_holds(t, tol=1e-9) == independent


# --- general receiver sets ----------------------------------------------------


@given(seed=seeds)
@settings(max_examples=10, deadline=None)
def test_algorithm1_equals_closed_form(seed):
    t = random_lambda_table(np.random.default_rng(seed), (1, 2))
    assert np.abs(star_joint_box(t, (1, 2), 20).probs - star2_box(t, 20).probs).max() <= 1e-12


def test_algorithm1_single_node_is_geometric():
    t = lambda_from_independent_links({1: 0.3, 2: 0.6, 3: 0.9})
    for k in (1, 2, 3):
        g = marginal_geometric(t, k)
        for i in range(1, 12):
            assert star_joint_algorithm1(t, (k,), (i,)) == pytest.approx(g.pmf(i), rel=1e-13)


def test_algorithm1_three_uniform_links():
    three = lambda_from_independent_links({1: 0.5, 2: 0.5, 3: 0.5})
    assert star_joint_algorithm1(three, (1, 2, 3), (1, 1, 1)) == 0.125


def test_algorithm1_three_receivers_against_chain_interior():
    t = random_lambda_table(np.random.default_rng(99), (1, 2, 3), floor=0.05)
    K = 10
    ref = star_chain(t.mass, (1, 2, 3), K)
    for ages in itertools.product(range(1, K), repeat=3):
        assert star_joint_algorithm1(t, (1, 2, 3), ages) == pytest.approx(ref[ages], abs=1e-12)


def test_algorithm1_argument_errors():
    with pytest.raises(ValueError):
        star_joint_algorithm1(UNIFORM2, (), ())
    with pytest.raises(ValueError):
        star_joint_algorithm1(UNIFORM2, (1, 2), (0, 1))
    with pytest.raises(ValueError):
        star_joint_algorithm1(UNIFORM2, (1, 3), (1, 1))


@given(seed=seeds, n=st.integers(2, 3))
@settings(max_examples=12, deadline=None)
def test_box_mass_marginals_and_diagonal_decay(seed, n):
    nodes = tuple(range(1, n + 1))
    t = random_lambda_table(np.random.default_rng(seed), nodes, floor=0.1 / 2**n)
    K = 40 if n == 2 else 18
    box = star_joint_box(t, nodes, K)
    assert box.total <= 1 + 1e-12
    # tail bounds are loose but must cover what the box misses
    r_min = min(marginal_geometric(t, k).parameter for k in nodes)
    if (1 - r_min) ** K < 1e-10:
        assert box.total + box.tail_mass_bound >= 1 - 1e-9
    for axis, k in enumerate(nodes):
        full = star_joint_box(t, nodes, K)
        g = marginal_geometric(t, k).pmf_array(K)
        # the box marginal misses only mass where another node's age exceeds K
        gap = g - full.marginal(axis)
        assert np.all(gap >= -1e-12) and gap.max() <= box.tail_mass_bound + 1e-12
    empty = restrict_lambda(t, nodes)[()]
    for ages in itertools.product(range(2, 5), repeat=n):
        up = tuple(a + 1 for a in ages)
        assert star_joint_algorithm1(t, nodes, up) == pytest.approx(
            empty * star_joint_algorithm1(t, nodes, ages), rel=1e-12, abs=1e-300
        )


def test_ties_across_groups():
    t = lambda_from_independent_links({1: 0.5, 2: 0.4, 3: 0.3, 4: 0.2})
    ref = star_chain(t.mass, (1, 2, 3, 4), 6)
    for ages in [(1, 1, 3, 3), (2, 4, 2, 4), (3, 3, 3, 1), (5, 1, 5, 1)]:
        assert star_joint_algorithm1(t, (1, 2, 3, 4), ages) == pytest.approx(ref[ages], abs=1e-12)
