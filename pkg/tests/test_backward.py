import copy
import math

import numpy as np
import pytest

from privebc import (
    BackwardMsg,
    DegenerateEgoError,
    PrivacyParams,
    backward_message,
    oracle,
    partial_ebc_y,
    spanning_counts,
)
from privebc.backward import (
    _partial_ebc_y_idx,
    _partial_sum_core,
    _spanning_core_matrix,
    _spanning_counts_idx,
    _y_ego_sorted,
)

from .conftest import make_pg, random_graph, random_partition

BIG_EPS = PrivacyParams(epsilon=1e9)


def _bridge_pg():
    # x1-y1 crosses the cut, y1-y2 sits inside Y
    edges = [("a", "x1"), ("a", "y1"), ("a", "y2"), ("x1", "y1"), ("y1", "y2")]
    return make_pg(edges, x_labels={"a", "x1"})


def test_spanning_counts_single_bridge():
    pg = _bridge_pg()
    g = pg.graph
    x1, y1, y2 = g.index_of("x1"), g.index_of("y1"), g.index_of("y2")
    r = frozenset({x1})
    t = spanning_counts(pg, "a", r, BIG_EPS, np.random.default_rng(0))
    assert set(t) == {(x1, y1), (x1, y2)}
    # x1-y1-y2 is the only 2-path with a Y-side midpoint
    assert t[(x1, y2)] == pytest.approx(1.0, abs=1e-6)
    assert t[(x1, y1)] == pytest.approx(0.0, abs=1e-6)


def test_spanning_core_matches_reference_counts():
    rng = np.random.default_rng(1)
    for seed in range(20):
        g = random_graph(np.random.default_rng(seed), 10, 0.35)
        pg = random_partition(rng, g)
        for a_idx in pg.vx_indices:
            y_ego = _y_ego_sorted(pg, int(a_idx))
            if y_ego.size == 0:
                continue
            xm = sorted(v for v in g.neighbors(int(a_idx)) if pg.is_x(v))
            if not xm:
                continue
            r_sorted = np.array(xm, dtype=np.int64)
            core = _spanning_core_matrix(pg, r_sorted, y_ego)
            mids = [g.label_of(int(v)) for v in y_ego]
            for ri, i in enumerate(r_sorted):
                for ci, j in enumerate(y_ego):
                    want = oracle.two_path_reference(g, mids, g.label_of(int(i)),
                                                     g.label_of(int(j)))
                    assert core[ri, ci] == want


def test_spanning_counts_no_internal_y_edges():
    # without E_Y edges no 2-path can route through Y
    edges = [("a", "x1"), ("a", "y1"), ("a", "y2"), ("x1", "y1"), ("x1", "y2")]
    pg = make_pg(edges, x_labels={"a", "x1"})
    x1 = pg.graph.index_of("x1")
    t = spanning_counts(pg, "a", frozenset({x1}), BIG_EPS, np.random.default_rng(0))
    assert all(v == pytest.approx(0.0, abs=1e-6) for v in t.values())


def test_spanning_counts_deterministic_and_empty_r():
    pg = _bridge_pg()
    x1 = pg.graph.index_of("x1")
    params = PrivacyParams(epsilon=1.0)
    t1 = spanning_counts(pg, "a", frozenset({x1}), params, np.random.default_rng(42))
    t2 = spanning_counts(pg, "a", frozenset({x1}), params, np.random.default_rng(42))
    assert t1 == t2

    rng = np.random.default_rng(7)
    before = copy.deepcopy(rng.bit_generator.state)
    assert spanning_counts(pg, "a", frozenset(), params, rng) == {}
    assert rng.bit_generator.state == before  # no noise drawn for empty R


def test_partial_ebc_sole_intermediate_is_ego():
    # y1, y2 share no neighbour but a: one open pair with denominator 1
    pg = make_pg([("a", "y1"), ("a", "y2")], x_labels={"a"})
    got = partial_ebc_y(pg, "a", frozenset(), BIG_EPS, np.random.default_rng(0))
    assert got == pytest.approx(1.0, abs=1e-6)


def test_partial_ebc_clique_is_zero():
    edges = [("a", "y1"), ("a", "y2"), ("a", "y3"),
             ("y1", "y2"), ("y1", "y3"), ("y2", "y3")]
    pg = make_pg(edges, x_labels={"a"})
    got = partial_ebc_y(pg, "a", frozenset(), BIG_EPS, np.random.default_rng(0))
    assert got == pytest.approx(0.0, abs=1e-6)


def test_partial_ebc_counts_r_intermediates():
    # y1-x1-y2 adds a second route beside a: denominator 2
    edges = [("a", "y1"), ("a", "y2"), ("x1", "y1"), ("x1", "y2"), ("a", "x1")]
    pg = make_pg(edges, x_labels={"a", "x1"})
    x1 = pg.graph.index_of("x1")
    with_r = partial_ebc_y(pg, "a", frozenset({x1}), BIG_EPS, np.random.default_rng(0))
    without = partial_ebc_y(pg, "a", frozenset(), BIG_EPS, np.random.default_rng(0))
    assert with_r == pytest.approx(0.5, abs=1e-6)
    assert without == pytest.approx(1.0, abs=1e-6)


def test_partial_sum_core_brute_force():
    rng = np.random.default_rng(2)
    checked = 0
    for seed in range(40):
        g = random_graph(np.random.default_rng(100 + seed), 8, 0.4)
        pg = random_partition(rng, g)
        for a_idx in pg.vx_indices:
            a_idx = int(a_idx)
            y_ego = _y_ego_sorted(pg, a_idx)
            if y_ego.size < 2:
                continue
            xm = [v for v in g.neighbors(a_idx) if pg.is_x(v)]
            r_sorted = np.array(sorted(xm), dtype=np.int64)
            got = _partial_sum_core(pg, a_idx, r_sorted, y_ego)
            want = 0.0
            mids = set(int(v) for v in r_sorted) | set(int(v) for v in y_ego)
            for p in range(y_ego.size):
                for q in range(p + 1, y_ego.size):
                    i, j = int(y_ego[p]), int(y_ego[q])
                    if g.has_edge(i, j):
                        continue
                    denom = 1 + sum(1 for k in mids
                                    if g.has_edge(i, k) and g.has_edge(k, j))
                    want += 1.0 / denom
            assert got == pytest.approx(want, rel=1e-12, abs=1e-12)
            checked += 1
    assert checked >= 30


def test_degenerate_gates():
    lonely = make_pg([("a", "x1"), ("a", "y1"), ("x1", "y1")], x_labels={"a", "x1"})
    none_y = make_pg([("a", "x1")], x_labels={"a", "x1"})
    for pg in (lonely, none_y):
        with pytest.raises(DegenerateEgoError):
            partial_ebc_y(pg, "a", frozenset(), BIG_EPS, np.random.default_rng(0))
        with pytest.raises(DegenerateEgoError):
            backward_message(pg, "a", frozenset(), BIG_EPS, np.random.default_rng(0))


def test_backward_message_key_set_and_high_budget(mixed_pg):
    g = mixed_pg.graph
    a_idx = g.index_of("a")
    y_ego = _y_ego_sorted(mixed_pg, a_idx)
    xm = frozenset(v for v in g.neighbors(a_idx) if mixed_pg.is_x(v))
    msg = backward_message(mixed_pg, "a", xm, BIG_EPS, np.random.default_rng(3))
    assert isinstance(msg, BackwardMsg)
    assert set(msg.T) == {(int(i), int(j)) for i in sorted(xm) for j in y_ego}
    r_sorted = np.array(sorted(xm), dtype=np.int64)
    core = _spanning_core_matrix(mixed_pg, r_sorted, y_ego)
    for ri, i in enumerate(r_sorted):
        for ci, j in enumerate(y_ego):
            assert msg.T[(int(i), int(j))] == pytest.approx(core[ri, ci], abs=1e-6)
    want_s = _partial_sum_core(mixed_pg, a_idx, r_sorted, y_ego)
    assert msg.S_Y == pytest.approx(want_s, abs=1e-6)


def test_noise_scale_of_count_vector():
    # |R|=2 at eps=1: scale 2*(2*2)/1 = 8, std sqrt(2)*8
    edges = [("a", "x1"), ("a", "x2"), ("a", "y1"), ("a", "y2")]
    pg = make_pg(edges, x_labels={"a", "x1", "x2"})
    g = pg.graph
    r = frozenset({g.index_of("x1"), g.index_of("x2")})
    params = PrivacyParams(epsilon=1.0)
    rng = np.random.default_rng(4)
    samples = []
    for _ in range(2500):
        t = spanning_counts(pg, "a", r, params, rng)
        samples.extend(t.values())  # cores are all zero here
    arr = np.array(samples)
    assert arr.size == 10_000
    assert abs(arr.mean()) < 0.5
    assert arr.std() == pytest.approx(math.sqrt(2.0) * 8.0, rel=0.05)


def test_noise_scale_of_partial_sum():
    # d_Y=3 at eps=1: scale 2*(3-1)/1 = 4, std sqrt(2)*4
    edges = [("a", "y1"), ("a", "y2"), ("a", "y3")]
    pg = make_pg(edges, x_labels={"a"})
    params = PrivacyParams(epsilon=1.0)
    rng = np.random.default_rng(5)
    draws = np.array([partial_ebc_y(pg, "a", frozenset(), params, rng)
                      for _ in range(10_000)])
    assert draws.mean() == pytest.approx(3.0, abs=0.3)  # core: three 1/1 pairs
    assert draws.std() == pytest.approx(math.sqrt(2.0) * 4.0, rel=0.05)


def _toggle_y_edge(edges, u, v):
    e = tuple(sorted((u, v)))
    pool = [tuple(sorted(p)) for p in edges]
    if e in pool:
        pool.remove(e)
    else:
        pool.append(e)
    return pool


def test_count_sensitivity_bound_over_y_edges():
    # flipping one Y-internal edge moves the cores by at most the stated
    # sensitivities: 2|R| for the count vector, d_Y - 1 for the partial sum
    rng = np.random.default_rng(6)
    from privebc import Graph, PartitionedGraph

    checked = 0
    for seed in range(25):
        g = random_graph(np.random.default_rng(200 + seed), 9, 0.35)
        pg = random_partition(rng, g)
        mask = np.array([pg.is_x(i) for i in range(g.n)])
        labelled = [(g.label_of(i), g.label_of(j)) for i, j in g.edges_iter()]
        ys = [int(v) for v in pg.vy_indices]
        for a_idx in (int(v) for v in pg.vx_indices):
            y_ego = _y_ego_sorted(pg, a_idx)
            xm = sorted(v for v in g.neighbors(a_idx) if pg.is_x(v))
            if y_ego.size < 2 or not xm:
                continue
            r_sorted = np.array(xm, dtype=np.int64)
            for u, v in [(ys[p], ys[q]) for p in range(len(ys))
                         for q in range(p + 1, len(ys))][:4]:
                flipped = _toggle_y_edge(labelled, g.label_of(u), g.label_of(v))
                pg2 = PartitionedGraph(Graph(g.labels, flipped), mask)
                assert np.array_equal(_y_ego_sorted(pg2, a_idx), y_ego)
                c1 = _spanning_core_matrix(pg, r_sorted, y_ego)
                c2 = _spanning_core_matrix(pg2, r_sorted, y_ego)
                assert np.abs(c1 - c2).sum() <= 2 * len(xm) + 1e-9
                s1 = _partial_sum_core(pg, a_idx, r_sorted, y_ego)
                s2 = _partial_sum_core(pg2, a_idx, r_sorted, y_ego)
                assert abs(s1 - s2) <= (y_ego.size - 1) + 1e-9
                checked += 1
    assert checked >= 40


def test_density_ratio_bounded_by_budget():
    # log-likelihood ratio of one release under two neighbouring Y graphs
    edges = [("a", "x1"), ("a", "y1"), ("a", "y2"), ("a", "y3"),
             ("x1", "y1"), ("y1", "y2"), ("y2", "y3")]
    x_labels = {"a", "x1"}
    pg1 = make_pg(edges, x_labels)
    pg2 = make_pg(_toggle_y_edge(edges, "y1", "y3"), x_labels)
    g = pg1.graph
    a_idx = g.index_of("a")
    r = frozenset({g.index_of("x1")})
    r_sorted = np.array(sorted(r), dtype=np.int64)
    y_ego = _y_ego_sorted(pg1, a_idx)
    assert np.array_equal(y_ego, _y_ego_sorted(pg2, a_idx))

    eps = 1.3
    params = PrivacyParams(epsilon=eps)
    scale_t = 2.0 * (2.0 * len(r)) / eps
    scale_s = 2.0 * (y_ego.size - 1) / eps
    c1 = _spanning_core_matrix(pg1, r_sorted, y_ego).ravel()
    c2 = _spanning_core_matrix(pg2, r_sorted, y_ego).ravel()
    s1 = _partial_sum_core(pg1, a_idx, r_sorted, y_ego)
    s2 = _partial_sum_core(pg2, a_idx, r_sorted, y_ego)

    rng = np.random.default_rng(8)
    for _ in range(200):
        msg = backward_message(pg1, "a", r, params, rng)
        t = np.array([msg.T[k] for k in sorted(msg.T)])
        ratio_t = (np.abs(t - c2).sum() - np.abs(t - c1).sum()) / scale_t
        ratio_s = (abs(msg.S_Y - s2) - abs(msg.S_Y - s1)) / scale_s
        assert ratio_t <= eps / 2 + 1e-9
        assert ratio_s <= eps / 2 + 1e-9
        assert ratio_t + ratio_s <= eps + 1e-9


def test_noiseless_flags_bypass_sampling():
    pg = _bridge_pg()
    g = pg.graph
    a_idx = g.index_of("a")
    y_ego = _y_ego_sorted(pg, a_idx)
    r = frozenset({g.index_of("x1")})
    params = PrivacyParams(epsilon=0.1)
    rng = np.random.default_rng(9)
    before = copy.deepcopy(rng.bit_generator.state)
    t = _spanning_counts_idx(pg, y_ego, r, params, rng, noiseless=True)
    s = _partial_ebc_y_idx(pg, a_idx, y_ego, r, params, rng, noiseless=True)
    assert rng.bit_generator.state == before
    r_sorted = np.array(sorted(r), dtype=np.int64)
    core = _spanning_core_matrix(pg, r_sorted, y_ego)
    assert t[(int(r_sorted[0]), int(y_ego[0]))] == core[0, 0]
    assert s == _partial_sum_core(pg, a_idx, r_sorted, y_ego)
