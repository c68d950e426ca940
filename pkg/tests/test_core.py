from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gossip_aoi.core import (
    UNREACHABLE,
    AgeState,
    ChannelModel,
    SlotOutcome,
    Topology,
    TopologyKind,
    apply_outcome,
    build_ring_policy,
    line_policy,
    line_topology,
    relative_theta,
    ring_constant,
    ring_topology,
    shortest_path_floor,
    source_policy,
    star_topology,
    step,
    theta_of_node,
    tree_topology,
    uniform_policy,
)

from .oracles import ring_q


# --- topologies -------------------------------------------------------------


def test_topology_rejects_self_loops_and_bad_labels():
    with pytest.raises(ValueError, match="self-loop"):
        Topology(3, frozenset({(2, 2)}))
    with pytest.raises(ValueError, match="outside"):
        Topology(3, frozenset({(1, 4)}))


def test_ring_kind_needs_even_count():
    with pytest.raises(ValueError, match="even"):
        Topology(5, frozenset({(1, 2)}), TopologyKind.RING)
    assert ring_topology(6).kind is TopologyKind.RING


def test_tree_builder_rejects_cycles():
    with pytest.raises(ValueError):
        tree_topology({1: 2, 2: 1})
    t = tree_topology({2: 1, 3: 1, 4: 2})
    assert t.out_neighbours(1) == [2, 3]
    assert t.in_neighbours(4) == [2]


def test_shortest_paths():
    assert shortest_path_floor(line_topology(3))[(3, 1)] == 2
    assert (1, 3) not in shortest_path_floor(line_topology(3))
    assert shortest_path_floor(ring_topology(4))[(3, 1)] == 2
    star = shortest_path_floor(star_topology(3))
    assert (3, 2) not in star and star[(3, 1)] == 1


# --- policies ---------------------------------------------------------------


def test_uniform_ring_policy():
    pol = build_ring_policy(1.0, 0.25, 2)
    assert pol.ring.C == pytest.approx(0.25, abs=1e-15)
    for i in range(1, 5):
        for j in range(1, 5):
            assert pol.prob(i, j) == pytest.approx(0.25, abs=1e-15)


@pytest.mark.parametrize("M", [2, 5, 15, 50])
def test_fully_uniform_when_beta_is_one_over_ring_size(M):
    assert ring_constant(1.0, 1 / (2 * M), M) == pytest.approx(1 / (2 * M), rel=1e-14)


def test_decaying_ring_policy_values():
    # C = (1 - 0.5)(1 - 0.1) / (0.2 - 0.01 * 1.1) = 0.45 / 0.189
    pol = build_ring_policy(0.1, 0.5, 2)
    assert pol.ring.C == pytest.approx(2.380952380952381, rel=1e-12)
    qs = [pol.ring.q(Fraction(d, 2)) for d in (-2, -1, 0, 1)]
    assert qs == pytest.approx([0.5, 0.2380952380952381, 0.023809523809523808, 0.2380952380952381], rel=1e-12)
    assert sum(qs) == pytest.approx(1.0, abs=1e-12)


@given(
    alpha=st.floats(0.01, 1.0),
    beta=st.floats(0.01, 0.99),
    M=st.integers(1, 40),
)
@settings(max_examples=60, deadline=None)
def test_ring_policy_matches_brute_normalisation(alpha, beta, M):
    pol = build_ring_policy(alpha, beta, M)
    ref = ring_q(alpha, beta, M)
    for d, v in ref.items():
        assert pol.ring.q(Fraction(d, M)) == pytest.approx(v, rel=1e-9, abs=1e-300)
    for i in range(1, 2 * M + 1):
        assert abs(sum(pol.distribution(i).values()) - 1) <= 1e-12


@given(alpha=st.floats(0.01, 1.0), beta=st.floats(0.01, 0.99), M=st.integers(2, 30), d=st.integers(1, 29))
@settings(max_examples=60, deadline=None)
def test_ring_policy_symmetric(alpha, beta, M, d):
    d = d % M
    ring = build_ring_policy(alpha, beta, M).ring
    assert ring.q(Fraction(d, M)) == pytest.approx(ring.q(Fraction(-d, M)), rel=1e-14)


@pytest.mark.parametrize("args", [(1.0, 0.0, 3), (1.0, 1.0, 3), (0.0, 0.5, 3), (1.5, 0.5, 3), (1.0, 0.5, 0)])
def test_ring_policy_rejects_out_of_range(args):
    with pytest.raises(ValueError):
        build_ring_policy(*args)


def test_line_and_source_policies_normalised():
    for pol in (line_policy(4, (0.5, 0.25, 0.1)), source_policy(3, 1, {1: 0.3, 2: 0.6}), uniform_policy(5)):
        for i in range(1, pol.node_count + 1):
            assert abs(sum(pol.distribution(i).values()) - 1) <= 1e-12
    pol = line_policy(3, (0.5, 0.25))
    assert pol.prob(1, 1) == 0.5 and pol.prob(2, 1) == 0.25


# --- ring coordinates -------------------------------------------------------


def test_theta_of_node():
    assert theta_of_node(1, 2) == -1
    assert theta_of_node(8, 7) == 0
    assert theta_of_node(30, 15) == Fraction(14, 15)
    with pytest.raises(ValueError):
        theta_of_node(0, 2)
    with pytest.raises(ValueError):
        theta_of_node(5, 2)


@given(M=st.integers(1, 40), data=st.data())
def test_relative_theta_seen_from_node_one_is_absolute(M, data):
    i = data.draw(st.integers(1, 2 * M))
    assert relative_theta(1, i, M) == theta_of_node(i, M)
    assert relative_theta(i, i, M) == -1


# --- slot dynamics ----------------------------------------------------------


def _line_state(ages):
    return AgeState.from_ages(line_topology(3), ages)


def test_no_receptions_increments_every_age():
    topo = ring_topology(6)
    s = AgeState.initial(topo)
    nxt = apply_outcome(s, SlotOutcome({k: k for k in range(1, 7)}, frozenset()))
    for p in s.pairs():
        assert nxt[p] == s[p] + 1
    assert nxt.slot == 1


def test_fresh_source_broadcast_resets_age():
    s = _line_state({(2, 1): 7})
    nxt = apply_outcome(s, SlotOutcome({1: 1, 2: 2, 3: 3}, frozenset({(1, 2)})))
    assert nxt[(2, 1)] == 1


def test_stale_relay_does_not_help():
    s = _line_state({(2, 1): 3, (3, 1): 2})
    nxt = apply_outcome(s, SlotOutcome({1: 2, 2: 1, 3: 3}, frozenset({(2, 3)})))
    assert nxt[(3, 1)] == 3


def test_missing_pairs_are_absent():
    s = AgeState.initial(line_topology(3))
    with pytest.raises(KeyError):
        s[(1, 3)]
    with pytest.raises(KeyError):
        s[(2, 2)]
    with pytest.raises(ValueError):
        AgeState.from_ages(line_topology(3), {(3, 1): 1})


def test_ideal_channel():
    ch = ChannelModel.ideal()
    assert ch.edge_success((1, 2)) == 1.0
    assert ChannelModel.lossy({(1, 2): 0.3}, default=0.9).edge_success((2, 1)) == 0.9


def _random_setting(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 7))
    edges = {(k, i) for k in range(1, n + 1) for i in range(1, n + 1) if k != i and rng.random() < 0.4}
    topo = Topology(n, frozenset(edges))
    W = rng.random((n, n)) + 0.05
    W /= W.sum(axis=1, keepdims=True)
    from gossip_aoi.core import PolicyTable

    policy = PolicyTable(W)
    channel = ChannelModel.lossy(default=float(rng.uniform(0.3, 1.0)))
    return topo, policy, channel


@given(seed=st.integers(0, 2**32 - 1), slots=st.integers(1, 40))
@settings(max_examples=60, deadline=None)
def test_step_monotone_floor_and_matches_reference(seed, slots):
    topo, policy, channel = _random_setting(seed)
    floor = shortest_path_floor(topo)
    rng = np.random.default_rng(seed)
    s = AgeState.initial(topo)
    for _ in range(slots):
        nxt, out = step(s, topo, policy, channel, rng)
        assert out.receptions <= topo.edges
        assert set(out.transmissions) == set(range(1, topo.node_count + 1))
        assert np.array_equal(apply_outcome(s, out).matrix, nxt.matrix)
        for p in s.pairs():
            assert 1 <= nxt[p] <= s[p] + 1
            assert nxt[p] >= floor[p]
        assert set(nxt.pairs()) == set(floor)
        s = nxt
    assert np.all(np.diag(s.matrix) == 0)
    assert np.all((s.matrix < UNREACHABLE) | (s.matrix == UNREACHABLE))


@given(seed=st.integers(0, 2**32 - 1))
@settings(max_examples=25, deadline=None)
def test_step_deterministic_under_seed(seed):
    topo, policy, channel = _random_setting(seed)

    def run():
        rng = np.random.default_rng(seed)
        s, outs = AgeState.initial(topo), []
        for _ in range(15):
            s, o = step(s, topo, policy, channel, rng)
            outs.append(o)
        return s, outs

    (a, oa), (b, ob) = run(), run()
    assert np.array_equal(a.matrix, b.matrix) and oa == ob


@pytest.mark.parametrize("alpha", [0.1, 0.3, 0.5, 0.8, 0.95])
@pytest.mark.parametrize("M", [1, 2, 7, 15])
def test_ring_constant_agrees_with_closed_form_away_from_one(alpha, M):
    closed = (1 - 0.4) * (1 - alpha) / (2 * alpha - alpha**M * (alpha + 1))
    assert ring_constant(alpha, 0.4, M) == pytest.approx(closed, rel=1e-10)
