import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import TOY_RADIO, isolated_scenario, symmetric
from oracles import brute_force_emics, brute_force_mics, emics_ok
from schedaware import (ActiveLink, ContentionGraph, MicsCapExceeded, MicsFamily, Scenario, SignalField,
                        build_contention_graph, can_coexist, enumerate_emics, enumerate_mics,
                        enumerate_mics_exact, enumerate_mics_heuristic)
from schedaware.contention import emics_conditions_hold

A, B, C = ActiveLink(0, 1), ActiveLink(2, 3), ActiveLink(4, 5)


def pair_field(to_second, to_first):
    th = symmetric(4, {(0, 1): 5.0, (2, 3): 5.0})
    th[0, 2] = to_second  # power of source 0 at source 2
    th[2, 0] = to_first
    return SignalField(th)


@pytest.mark.parametrize("fwd, back, expected", [(2.0, 2.0, False), (0.01, 0.01, True), (0.95, 0.01, False)])
def test_can_coexist_examples(fwd, back, expected):
    assert can_coexist(pair_field(fwd, back), TOY_RADIO, A, B) is expected


def test_links_sharing_a_node_never_coexist():
    th = symmetric(3, {(0, 1): 5.0, (1, 2): 5.0})
    assert not can_coexist(SignalField(th), TOY_RADIO, ActiveLink(0, 1), ActiveLink(1, 2))


def test_h3_graph(h3):
    sc, links = h3
    g = build_contention_graph(links, sc.field, sc.radio)
    assert g.concurrent[0, 2] and g.concurrent[1, 2] and not g.concurrent[0, 1]
    assert g.edge_count == 2


def test_single_and_far_apart_graphs():
    sc, links = isolated_scenario(1)
    assert build_contention_graph(links, sc.field, sc.radio).edge_count == 0
    th = symmetric(6, {(0, 1): 5.0, (2, 3): 5.0, (4, 5): 5.0})
    g = build_contention_graph([A, B, C], SignalField(th), TOY_RADIO)
    assert g.edge_count == 3


def test_h3_mics(h3):
    sc, links = h3
    fam = enumerate_mics_exact(build_contention_graph(links, sc.field, sc.radio))
    assert fam.sets == ((0, 2), (1, 2))
    assert list(fam.mu) == [0.5, 0.5]
    assert fam.membership[0] == (0,) and fam.membership[2] == (0, 1)


def test_mics_extremes():
    sc, links = isolated_scenario(4)
    fam = enumerate_mics_exact(build_contention_graph(links, sc.field, sc.radio))
    assert fam.sets == ((0,), (1,), (2,), (3,))
    assert np.allclose(fam.mu, 0.25)
    full = ContentionGraph(tuple(ActiveLink(2 * i, 2 * i + 1) for i in range(4)), ~np.eye(4, dtype=bool))
    fam = enumerate_mics_exact(full)
    assert fam.sets == ((0, 1, 2, 3),) and fam.mu[0] == 1.0
    assert enumerate_mics_heuristic(full, limit=1).sets == ((0, 1, 2, 3),)


def test_exact_cap():
    g = ContentionGraph(tuple(ActiveLink(2 * i, 2 * i + 1) for i in range(5)), np.zeros((5, 5), dtype=bool))
    with pytest.raises(MicsCapExceeded):
        enumerate_mics_exact(g, cap=4)
    assert len(enumerate_mics(g, cap=4)) == 5  # auto falls back to the heuristic


def test_heuristic_h3(h3):
    sc, links = h3
    g = build_contention_graph(links, sc.field, sc.radio)
    assert enumerate_mics_heuristic(g, limit=2).sets == enumerate_mics_exact(g).sets


def test_h3_emics(h3):
    sc, links = h3
    fam = enumerate_mics_exact(build_contention_graph(links, sc.field, sc.radio))
    em = enumerate_emics(fam, sc.field, sc.radio)
    # C breaks A's DATA, so {A, C} splits; {B, C} survives whole
    assert set(em.sets) == {(0,), (2,), (1, 2)}


def test_emics_singleton_and_distant_pair():
    th = symmetric(4, {(0, 1): 5.0, (2, 3): 5.0})
    g = build_contention_graph([A, B], SignalField(th), TOY_RADIO)
    fam = enumerate_mics_exact(g)
    assert enumerate_emics(fam, SignalField(th), TOY_RADIO).sets == ((0, 1),)
    single = MicsFamily.from_sets([A], [(0,)])
    assert enumerate_emics(single, SignalField(th), TOY_RADIO).sets == ((0,),)


def random_graph(n, p, seed):
    rng = np.random.default_rng(seed)
    upper = np.triu(rng.random((n, n)) < p, 1)
    adj = upper | upper.T
    return ContentionGraph(tuple(ActiveLink(2 * i, 2 * i + 1) for i in range(n)), adj)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 12), st.floats(0.0, 1.0), st.integers(0, 2**31))
def test_exact_equals_brute_force(n, p, seed):
    g = random_graph(n, p, seed)
    exact = {frozenset(s) for s in enumerate_mics_exact(g).sets}
    assert exact == brute_force_mics(g.concurrent)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 12), st.floats(0.0, 1.0), st.integers(0, 2**31), st.integers(1, 50))
def test_heuristic_sound_and_covering(n, p, seed, limit):
    g = random_graph(n, p, seed)
    exact = set(enumerate_mics_exact(g).sets)
    heur = enumerate_mics_heuristic(g, limit=limit, seed=seed)
    assert set(heur.sets) <= exact
    assert {i for s in heur.sets for i in s} == set(range(n))
    assert len(heur) <= max(limit, n)
    assert heur.sets == enumerate_mics_heuristic(g, limit=limit, seed=seed).sets


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 10), st.floats(0.0, 1.0), st.integers(0, 2**31))
def test_family_invariants(n, p, seed):
    g = random_graph(n, p, seed)
    fam = enumerate_mics_exact(g)
    assert abs(fam.mu.sum() - 1.0) < 1e-12
    for s in fam.sets:
        assert all(g.concurrent[a, b] for a, b in itertools.combinations(s, 2))
        for e in set(range(n)) - set(s):
            assert any(not g.concurrent[e, f] for f in s)
    for i in range(n):
        assert fam.sigma(i) == pytest.approx(sum(fam.mu[k] for k, s in enumerate(fam.sets) if i in s))


def random_links_scenario(n_links, seed, spread=900.0):
    """Links of 150 m placed at random in a square, default radio."""
    from schedaware import RadioParams, Topology, compute_signal_field
    rng = np.random.default_rng(seed)
    pos = []
    for _ in range(n_links):
        x, y = rng.uniform(0, spread, 2)
        ang = rng.uniform(0, 2 * np.pi)
        pos += [(x, y), (x + 150 * np.cos(ang), y + 150 * np.sin(ang))]
    pos = np.array(pos)
    radio = RadioParams()
    field = compute_signal_field(Topology(pos - pos.min(axis=0), tuple(np.ptp(pos, axis=0) + 1)), radio)
    return Scenario(None, radio, field), [ActiveLink(2 * i, 2 * i + 1) for i in range(n_links)]


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 8), st.integers(0, 2**31))
def test_emics_conditions_and_maximality(n, seed):
    sc, links = random_links_scenario(n, seed)
    r = sc.radio
    fam = enumerate_mics_exact(build_contention_graph(links, sc.field, r))
    em = enumerate_emics(fam, sc.field, r)
    th = sc.field.theta
    for s in em.sets:
        assert emics_conditions_hold(s, links, sc.field, r)
        assert emics_ok(s, links, th, r.noise_floor, r.rx_sensitivity, r.sinr_threshold)
    expected = brute_force_emics(fam.sets, links, th, r.noise_floor, r.rx_sensitivity, r.sinr_threshold)
    assert {frozenset(s) for s in em.sets} == expected
