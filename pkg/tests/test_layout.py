import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wsnholes.layout import (
    GLOBAL,
    KKMSDS,
    LayoutParams,
    decay_stiffness,
    edge_lengths,
    run_kk_ms_ds,
    select_start_node,
    stability_statistic,
)
from wsnholes.topology import Topology, generate_topology


def cycle(n):
    return Topology(n, [(i, (i + 1) % n) for i in range(n)])


def path(n):
    return Topology(n, [(i, i + 1) for i in range(n - 1)])


def random_connected(rng, n, extra):
    edges = {(int(rng.integers(0, i)), i) for i in range(1, n)}
    for _ in range(extra):
        u, v = rng.choice(n, 2, replace=False)
        edges.add((int(min(u, v)), int(max(u, v))))
    return Topology(n, edges)


def test_params_validation():
    with pytest.raises(ValueError):
        LayoutParams(p=1.0)
    with pytest.raises(ValueError):
        LayoutParams(epsilon=0)
    with pytest.raises(ValueError):
        LayoutParams(move_fraction=0)


def test_params_resolve_defaults():
    p = LayoutParams().resolve(400)
    assert p.L0 == pytest.approx(0.05)
    assert p.z == pytest.approx(0.1)
    assert p.max_iterations == 80_000


def test_decay_worked_values():
    assert decay_stiffness(1.0, 0.1, 0.5, 3) == pytest.approx(0.9875)
    assert decay_stiffness(0.7, 0.0, 0.5, 2) == 0.7
    assert decay_stiffness(0.01, 1.0, 0.9, 0) == 0.0


def test_decay_examples():
    # M=1, p=0.5, z=0.5: 1 -> 0.5 -> 0.25
    m = decay_stiffness(1.0, 0.5, 0.5, 0)
    assert m == pytest.approx(0.5)
    assert decay_stiffness(m, 0.5, 0.5, 1) == pytest.approx(0.25)
    assert decay_stiffness(0.01, 5.0, 0.5, 0) == 0.0


@given(st.integers(1, 60), st.floats(0.05, 0.95))
def test_decay_closed_form(T, p):
    # z = M(1-p) telescopes to m = M p**T
    m, M = 1.0, 1.0
    for t in range(T):
        m = float(decay_stiffness(m, M * (1 - p), p, t))
    assert m == pytest.approx(p**T, rel=1e-9, abs=1e-12)


def test_stability_statistic_examples():
    rep = stability_statistic([0.1, -0.1, 0.1, -0.1])
    assert rep.r == 0.0 and rep.flag is None
    rep = stability_statistic([0.2, 0.2, 0.2])
    assert rep.r == 0.0 and rep.flag == "degenerate-uniform"
    rep = stability_statistic([0.2, 0.4, 0.6])
    assert rep.mean_residual == pytest.approx(0.4)
    assert rep.sigma == pytest.approx(0.2)
    assert rep.r == pytest.approx(2.0)
    rep = stability_statistic([0.1, -0.1])
    assert rep.r == 0.0 and rep.sigma == pytest.approx(0.1414, abs=1e-4)
    assert stability_statistic([]).flag == "too-few-edges"
    assert stability_statistic([0.0], 1.0).r == 0.0
    assert math.isinf(stability_statistic([0.5], 1.0).r)


def test_select_start_node():
    t = Topology(5, [(0, 1), (1, 2), (1, 3), (3, 4), (2, 3)])
    assert select_start_node(t) == 1
    # ties go to the smaller ID
    assert select_start_node(cycle(6)) == 0


def test_select_start_node_ties():
    star = Topology(6, [(0, i) for i in range(1, 6)])
    assert select_start_node(star) == 0
    # degrees {0: 2, 1: 2, 2: 1}
    assert select_start_node(Topology(4, [(0, 1), (0, 3), (1, 2)])) == 0
    assert select_start_node(Topology(1)) == 0


def test_start_area_examples():
    eng = KKMSDS(path(5), seed=0)
    eng.build_start_area(0)
    assert eng.state.working_set == {0, 1, 2}
    assert eng.state.phase == "growing"
    assert eng.state.decaying[[0, 1, 2]].all()
    k5 = Topology(5, [(i, j) for i in range(5) for j in range(i + 1, 5)])
    eng = KKMSDS(k5, seed=0)
    eng.build_start_area(2)
    assert eng.state.working_set == set(range(5))
    eng = KKMSDS(Topology(3, [(1, 2)]), seed=0)
    eng.build_start_area(0)
    assert eng.state.working_set == {0}


def test_expand_examples():
    eng = KKMSDS(path(5), seed=0)
    eng.build_start_area(0)
    eng.state.decay_m[:] = [0.3, 0.4, 0.9, 1.0, 1.0]
    eng.expand_working_area()
    assert eng.state.working_set == {0, 1, 2, 3, 4}
    assert eng.state.decay_m[3] == 0.9
    eng.expand_working_area()
    assert eng.state.phase == GLOBAL


def test_adopts_largest_neighbour_decay():
    # node 3 has working neighbours 1 (m=0.4) and 2 (m=0.9)
    t = Topology(4, [(0, 1), (0, 2), (1, 3), (2, 3)])
    eng = KKMSDS(t, seed=0)
    eng.state.working[:] = [True, True, True, False]
    eng.state.decaying[:] = [True, True, True, False]
    eng.state.decay_m[:] = [1.0, 0.4, 0.9, 1.0]
    eng._refresh()
    eng.expand_working_area()
    assert eng.state.decay_m[3] == 0.9


def test_init_layout_examples():
    a = KKMSDS(Topology(500), seed=1).state.positions
    b = KKMSDS(Topology(500), seed=1).state.positions
    assert np.array_equal(a, b)
    assert ((a >= 0) & (a <= 1)).all()
    st_ = KKMSDS(Topology(1), seed=0).state
    assert st_.positions.shape == (1, 2) and not st_.working.any()
    assert (st_.decay_m == 1.0).all() and st_.iteration == 0


def test_energy_examples():
    t = Topology(2, [(0, 1)])
    eng = KKMSDS(t, seed=0)
    L0 = eng.params.L0
    pos = np.array([[0.0, 0.0], [L0, 0.0]])
    assert eng.total_energy(pos) == 0.0
    np.testing.assert_array_equal(eng.spring_gradient(0, [0, 1], pos), [0.0, 0.0])
    delta = 0.01
    pos[1, 0] += delta
    assert eng.total_energy(pos) == pytest.approx(0.5 * delta**2)


def test_frozen_node_does_not_move():
    eng = KKMSDS(Topology(2, [(0, 1)]), LayoutParams(move_fraction=1.0), seed=0)
    eng.build_start_area(0)
    eng.state.decay_m[0] = 0.0
    before = eng.state.positions[0].copy()
    eng.kk_ms_step()
    np.testing.assert_array_equal(eng.state.positions[0], before)


def test_two_node_step_strictly_decreases():
    eng = KKMSDS(Topology(2, [(0, 1)]), seed=0)
    eng.build_start_area(0)
    eng.state.positions[1] = eng.state.positions[0] + [3 * eng.params.L0, 0]
    eng._refresh()
    e0 = eng.spring_energy()
    eng.kk_ms_step()
    assert eng.spring_energy() < e0


def test_start_area_is_two_hops():
    eng = KKMSDS(path(8), seed=0)
    eng.build_start_area(3)
    assert eng.state.working_set == {1, 2, 3, 4, 5}


def test_expand_adds_two_hops_then_goes_global():
    eng = KKMSDS(path(12), seed=0)
    eng.build_start_area(0)
    eng.expand_working_area()
    assert eng.state.working_set == set(range(5))
    for _ in range(5):
        eng.expand_working_area()
    assert eng.state.phase == GLOBAL
    assert eng.state.working.all()


def test_kk_ms_step_moves_top_gradients_and_decays():
    t, _ = generate_topology(200, 6, seed=2)
    eng = KKMSDS(t, seed=1)
    eng.build_start_area(select_start_node(t))
    W = np.flatnonzero(eng.state.working)
    cached = eng.gradients()
    direct = np.array([eng.spring_gradient(v) for v in W])
    np.testing.assert_allclose(cached, direct, rtol=1e-9, atol=1e-12)
    g = np.linalg.norm(cached, axis=1)
    expected = set(W[np.lexsort((W, -g))][: math.ceil(0.05 * len(W))].tolist())
    before = eng.state.positions.copy()
    e0 = eng.spring_energy()
    eng.kk_ms_step()
    moved = set(np.flatnonzero((eng.state.positions != before).any(axis=1)).tolist())
    assert moved == expected
    assert eng.spring_energy() <= e0
    assert set(np.flatnonzero(eng.state.select_count).tolist()) == expected
    assert (eng.state.decay_m[list(expected)] < 1.0).all()
    for _ in range(50):
        eng.kk_ms_step()
    # the incrementally patched gradient cache stays exact
    direct = np.array([eng.spring_gradient(v) for v in W])
    np.testing.assert_allclose(eng.gradients(), direct, rtol=1e-8, atol=1e-10)


def test_gradient_matches_finite_differences_small():
    rng = np.random.default_rng(0)
    t = random_connected(rng, 6, 4)
    eng = KKMSDS(t, seed=3)
    pos = rng.random((6, 2))
    h = 1e-6
    for v in range(6):
        g = eng.spring_gradient(v, range(6), pos)
        for a in range(2):
            p1, p2 = pos.copy(), pos.copy()
            p1[v, a] += h
            p2[v, a] -= h
            fd = (eng.total_energy(p1) - eng.total_energy(p2)) / (2 * h)
            assert g[a] == pytest.approx(fd, rel=1e-5, abs=1e-7)


def test_coincident_nodes_get_a_defined_push():
    t = Topology(2, [(0, 1)])
    eng = KKMSDS(t, seed=0)
    pos = np.zeros((2, 2))
    g0, g1 = eng.spring_gradient(0, [0, 1], pos), eng.spring_gradient(1, [0, 1], pos)
    assert np.isfinite(g0).all() and np.linalg.norm(g0) > 0
    np.testing.assert_allclose(g0, -g1)


def test_disconnected_pairs_carry_no_spring():
    t = Topology(4, [(0, 1), (2, 3)])
    eng = KKMSDS(t, seed=0)
    assert eng.k[0, 2] == 0.0 and eng.k[0, 1] > 0


def test_single_edge_equilibrium():
    res = run_kk_ms_ds(Topology(2, [(0, 1)]), seed=0)
    L0 = res.params.L0
    assert abs(edge_lengths(Topology(2, [(0, 1)]), res.final.positions)[0] - L0) <= 1e-3 * L0


def test_path_terminates_within_cap():
    # the bending mode of a path is very soft: the run may hit the cap, but
    # it must stop there with every edge at its rest length
    res = run_kk_ms_ds(path(5), seed=0)
    assert res.final.iteration <= res.params.max_iterations
    assert res.converged or res.flag == "not-converged"
    L = edge_lengths(path(5), res.final.positions)
    np.testing.assert_allclose(L, res.params.L0, rtol=1e-3)


def test_cycle_c6_regular_polygon():
    res = run_kk_ms_ds(cycle(6), seed=0)
    L = edge_lengths(cycle(6), res.final.positions)
    assert res.converged
    assert L.std() / L.mean() < 0.1


def test_snapshots_scheduled_and_final():
    res = run_kk_ms_ds(cycle(16), seed=0, snapshot_schedule=[100, 500])
    its = [it for it, _ in res.snapshots]
    assert its[:2] == [100, 500]
    assert its[-1] == res.final.iteration


def test_snapshot_energy_ordering_500():
    t, _ = generate_topology(500, 6, seed=4)
    res = run_kk_ms_ds(t, seed=4, snapshot_schedule=[2000, 5000])
    eng = KKMSDS(t, seed=4)
    (i1, s1), (i2, s2) = res.snapshots[:2]
    assert (i1, i2) == (2000, 5000)
    assert eng.total_energy(s2.positions) <= eng.total_energy(s1.positions)


def test_determinism():
    t, _ = generate_topology(150, 6, seed=5)
    a = run_kk_ms_ds(t, seed=9, snapshot_schedule=[300])
    b = run_kk_ms_ds(t, seed=9, snapshot_schedule=[300])
    assert [i for i, _ in a.snapshots] == [i for i, _ in b.snapshots]
    for (_, x), (_, y) in zip(a.snapshots, b.snapshots):
        assert np.array_equal(x.positions, y.positions)


def test_max_iterations_flag():
    t, _ = generate_topology(120, 6, seed=1)
    res = run_kk_ms_ds(t, LayoutParams(max_iterations=200, epsilon=1e-9), seed=0)
    assert res.flag == "not-converged"
    assert res.final.iteration == 200


def test_placed_positions_masks_unreached():
    t = Topology(6, [(0, 1), (1, 2), (0, 2), (3, 4)])
    res = run_kk_ms_ds(t, seed=0)
    pos = res.placed_positions(res.final)
    assert np.isfinite(pos[[0, 1, 2]]).all()
    assert np.isnan(pos[[3, 4, 5]]).all()


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000))
def test_single_step_never_increases_energy(seed):
    rng = np.random.default_rng(seed)
    t = random_connected(rng, int(rng.integers(5, 25)), int(rng.integers(0, 20)))
    eng = KKMSDS(t, seed=seed)
    eng.build_start_area(select_start_node(t))
    for _ in range(5):
        e0 = eng.spring_energy()
        eng.kk_ms_step()
        assert eng.spring_energy() <= e0 + 1e-12
