import math

import numpy as np
import pytest
from scipy.linalg import orth

from mimolab.channel import PathParams, PathSet, steering_vector, synthesize
from mimolab.estimation import (DirectionGrid, build_dictionaries,
                                estimate_gain, hemisphere_directions, joint_select,
                                matching_pursuit, reports_to_csv, sequential_select)
from mimolab.geometry import Direction, upa
from mimolab.observation import ObservationSetup, identity_setup, observe


def small_grid(k=6):
    return DirectionGrid(hemisphere_directions(k, k), hemisphere_directions(k, k))


def on_grid_scenario(grid, doa_idx, dod_idx, rho=1.2, phi=0.7, n_r=(2, 2), n_t=(2, 3)):
    g_r, g_t = upa(*n_r), upa(*n_t)
    p = PathParams(rho, phi, grid.test_doas[doa_idx], grid.test_dods[dod_idx])
    H = synthesize(PathSet([p]), g_r, g_t)
    s = identity_setup(g_t.n_antennas, g_r.n_antennas, 0.0)
    Y = observe(H, s, 0).Y
    return g_r, g_t, p, H, s, Y


def test_hemisphere_directions_layout():
    dirs = hemisphere_directions(5, 4)
    assert len(dirs) == 20
    assert all(-math.pi / 2 < d.azimuth < math.pi / 2 for d in dirs)
    assert all(-math.pi / 2 < d.elevation < math.pi / 2 for d in dirs)
    with pytest.raises(ValueError):
        hemisphere_directions(0, 4)


def test_grid_validation():
    with pytest.raises(ValueError):
        DirectionGrid((), hemisphere_directions(2, 2))
    d = Direction(0.1, 0.2)
    with pytest.raises(ValueError):
        DirectionGrid((d, Direction(0.1, 0.2)), (Direction(0.0, 0.0),))
    # same physical direction through pole folding is also a duplicate
    with pytest.raises(ValueError):
        DirectionGrid((Direction(0.0, math.pi / 2), Direction(1.0, math.pi / 2)),
                      (Direction(0.0, 0.0),))


def test_grid_product_requires_squares():
    g = DirectionGrid.product(2500, 100)
    assert g.m == 2500 and g.n == 100
    with pytest.raises(ValueError):
        DirectionGrid.product(2000, 100)


def test_dictionary_identity_combiner_equals_steering(rng):
    grid = small_grid(4)
    g_r, g_t = upa(2, 2), upa(2, 2)
    s = identity_setup(4, 4, 1.0)
    d = build_dictionaries(grid, s, g_r, g_t)
    assert d.m == 16 and d.n == 16
    for col in (0, 7, 15):
        assert np.allclose(d.K_r[:, col], steering_vector(g_r, grid.test_doas[col]))
    norms_r = np.linalg.norm(d.K_r, axis=0)
    norms_t = np.linalg.norm(d.K_t, axis=0)
    assert np.all(np.abs(norms_r - 1.0) < 1e-12)
    assert np.all(np.abs(norms_t - 1.0) < 1e-12)


def test_dictionary_drops_annihilated_directions(rng):
    grid = small_grid(3)
    g_r, g_t = upa(2, 2), upa(2, 2)
    # combiner orthogonal to the first grid steering vector kills that column
    e0 = steering_vector(g_r, grid.test_doas[0])
    basis = orth(np.eye(4) - np.outer(e0, e0.conj()))
    s = ObservationSetup(np.eye(4), basis, 1.0)
    with pytest.warns(UserWarning):
        d = build_dictionaries(grid, s, g_r, g_t)
    assert d.m == grid.m - 1
    assert 0 not in d.doa_indices
    assert d.doa_of(0) == grid.test_doas[d.doa_indices[0]]


def test_joint_select_finds_on_grid_path():
    grid = small_grid(6)
    g_r, g_t, p, H, s, Y = on_grid_scenario(grid, 13, 29)
    d = build_dictionaries(grid, s, g_r, g_t)
    sel = joint_select(Y, d)
    assert (sel.doa_index, sel.dod_index) == (13, 29)
    assert sel.score_evaluations == 36 * 36


def test_joint_select_matches_bruteforce_oracle(rng):
    grid = small_grid(5)
    g_r, g_t = upa(2, 2), upa(2, 3)
    s = identity_setup(6, 4, 1.0)
    d = build_dictionaries(grid, s, g_r, g_t)
    Y = rng.normal(size=(4, 6)) + 1j * rng.normal(size=(4, 6))
    best, arg = -1.0, None
    for i in range(d.m):
        for j in range(d.n):
            v = abs(np.vdot(d.K_r[:, i], Y @ d.K_t[:, j]))
            if v > best:
                best, arg = v, (i, j)
    sel = joint_select(Y, d)
    assert (sel.doa_index, sel.dod_index) == arg


def test_joint_select_zero_observation_tie_break():
    grid = small_grid(4)
    g_r, g_t = upa(2, 2), upa(2, 2)
    s = identity_setup(4, 4, 1.0)
    d = build_dictionaries(grid, s, g_r, g_t)
    sel = joint_select(np.zeros((4, 4), dtype=complex), d)
    assert (sel.doa_index, sel.dod_index) == (0, 0)


def test_sequential_select_matches_joint_on_grid():
    # exhaustive oracle scenario on a 20x20-point grid per side
    grid = DirectionGrid(hemisphere_directions(5, 4), hemisphere_directions(4, 5))
    g_r, g_t, p, H, s, Y = on_grid_scenario(grid, 7, 11)
    d = build_dictionaries(grid, s, g_r, g_t)
    js, ss = joint_select(Y, d), sequential_select(Y, d)
    assert (js.doa_index, js.dod_index) == (7, 11)
    assert (ss.doa_index, ss.dod_index) == (7, 11)
    assert ss.score_evaluations == 20 + 20
    assert js.score_evaluations == 20 * 20


def test_sequential_select_stage_oracles(rng):
    grid = small_grid(4)
    g_r, g_t = upa(2, 2), upa(2, 2)
    s = identity_setup(4, 4, 1.0)
    d = build_dictionaries(grid, s, g_r, g_t)
    Y = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    stage1 = [np.vdot(d.K_r[:, i], Y @ Y.conj().T @ d.K_r[:, i]).real for i in range(d.m)]
    i_hat = int(np.argmax(stage1))
    stage2 = [abs(np.vdot(d.K_r[:, i_hat], Y @ d.K_t[:, j])) for j in range(d.n)]
    j_hat = int(np.argmax(stage2))
    sel = sequential_select(Y, d)
    assert (sel.doa_index, sel.dod_index) == (i_hat, j_hat)


def test_sequential_select_zero_observation_tie_break():
    grid = small_grid(3)
    g_r, g_t = upa(2, 2), upa(2, 2)
    d = build_dictionaries(grid, identity_setup(4, 4, 1.0), g_r, g_t)
    sel = sequential_select(np.zeros((4, 4), dtype=complex), d)
    assert (sel.doa_index, sel.dod_index) == (0, 0)


def test_estimate_gain_recovers_true_gain():
    grid = small_grid(5)
    g_r, g_t, p, H, s, Y = on_grid_scenario(grid, 3, 21)
    c = estimate_gain(Y, s, p.doa, p.dod, g_r, g_t)
    assert abs(c - p.gain) <= 1e-10


def test_estimate_gain_zero_and_linear(rng):
    g_r, g_t = upa(2, 2), upa(2, 2)
    s = identity_setup(4, 4, 1.0)
    doa, dod = Direction(0.2, -0.1), Direction(-0.4, 0.3)
    assert estimate_gain(np.zeros((4, 4)), s, doa, dod, g_r, g_t) == 0.0
    Y = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    c1 = estimate_gain(Y, s, doa, dod, g_r, g_t)
    c2 = estimate_gain(2 * Y, s, doa, dod, g_r, g_t)
    assert abs(c2 - 2 * c1) < 1e-13


def test_estimate_gain_rejects_annihilated_atom(rng):
    g_r, g_t = upa(2, 2), upa(2, 2)
    doa = Direction(0.3, 0.2)
    e0 = steering_vector(g_r, doa)
    W = orth(np.eye(4) - np.outer(e0, e0.conj()))
    s = ObservationSetup(np.eye(4), W, 1.0)
    with pytest.raises(ValueError):
        estimate_gain(np.zeros((3, 4)), s, doa, Direction(0, 0), g_r, g_t)


def test_matching_pursuit_exact_recovery():
    grid = small_grid(6)
    g_r, g_t, p, H, s, Y = on_grid_scenario(grid, 8, 17)
    for strategy in ("joint", "sequential"):
        rep = matching_pursuit(Y, s, grid, g_r, g_t, 1, strategy, true_channel=H)
        assert rep.rmse <= 1e-10
        assert len(rep.estimated) == 1
        est = rep.estimated[0]
        assert est.doa == p.doa and est.dod == p.dod
        assert abs(est.gain - p.gain) <= 1e-10


def test_matching_pursuit_counters_exact(rng):
    grid = small_grid(5)
    g_r, g_t = upa(2, 2), upa(2, 2)
    sigma2 = 0.05
    ps = PathSet([PathParams(1.0, 0.2, grid.test_doas[4], grid.test_dods[9])])
    H = synthesize(ps, g_r, g_t)
    s = identity_setup(4, 4, sigma2)
    Y = observe(H, s, 3).Y
    rep_j = matching_pursuit(Y, s, grid, g_r, g_t, 4, "joint", true_channel=H)
    rep_s = matching_pursuit(Y, s, grid, g_r, g_t, 4, "sequential", true_channel=H)
    assert rep_j.score_evaluations == 25 * 25 * 4
    assert rep_s.score_evaluations == (25 + 25) * 4
    assert rep_j.P == rep_s.P == 4


def test_matching_pursuit_residual_non_increasing(rng):
    grid = small_grid(5)
    g_r, g_t = upa(2, 2), upa(2, 3)
    ps = PathSet([PathParams(1.0, 0.2, grid.test_doas[3], grid.test_dods[8]),
                  PathParams(0.6, 1.2, grid.test_doas[17], grid.test_dods[2])])
    H = synthesize(ps, g_r, g_t)
    s = identity_setup(6, 4, 0.02)
    Y = observe(H, s, 11).Y
    rep = matching_pursuit(Y, s, grid, g_r, g_t, 6, "sequential", true_channel=H)
    norms = rep.residual_norms
    assert len(norms) == 7
    for a, b in zip(norms, norms[1:]):
        assert b <= a + 1e-12


def test_matching_pursuit_zero_observation():
    grid = small_grid(3)
    g_r, g_t = upa(2, 2), upa(2, 2)
    s = identity_setup(4, 4, 0.0)
    rep = matching_pursuit(np.zeros((4, 4)), s, grid, g_r, g_t, 2, "joint")
    assert rep.estimated == ()
    assert rep.score_evaluations == 9 * 9 * 2
    assert rep.rmse is None


def test_matching_pursuit_rejects_bad_arguments():
    grid = small_grid(3)
    g_r, g_t = upa(2, 2), upa(2, 2)
    s = identity_setup(4, 4, 1.0)
    with pytest.raises(ValueError):
        matching_pursuit(np.zeros((4, 4)), s, grid, g_r, g_t, 0, "joint")
    with pytest.raises(ValueError):
        matching_pursuit(np.zeros((4, 4)), s, grid, g_r, g_t, 1, "greedy")


def test_grid_permutation_changes_only_indices(rng):
    base = hemisphere_directions(4, 4)
    perm = list(rng.permutation(len(base)))
    grid1 = DirectionGrid(base, base)
    grid2 = DirectionGrid(tuple(base[i] for i in perm), tuple(base[i] for i in perm))
    g_r, g_t = upa(2, 2), upa(2, 3)
    ps = PathSet([PathParams(1.0, 0.4, base[5], base[10])])
    H = synthesize(ps, g_r, g_t)
    s = identity_setup(6, 4, 0.01)
    Y = observe(H, s, 9).Y
    d1 = build_dictionaries(grid1, s, g_r, g_t)
    d2 = build_dictionaries(grid2, s, g_r, g_t)
    for select in (joint_select, sequential_select):
        s1, s2 = select(Y, d1), select(Y, d2)
        assert d1.doa_of(s1.doa_index) == d2.doa_of(s2.doa_index)
        assert d1.dod_of(s1.dod_index) == d2.dod_of(s2.dod_index)


def test_reports_to_csv(tmp_path, rng):
    grid = small_grid(3)
    g_r, g_t, p, H, s, Y = on_grid_scenario(grid, 1, 2)
    rep = matching_pursuit(Y, s, grid, g_r, g_t, 1, "joint", true_channel=H)
    out = tmp_path / "rows.csv"
    reports_to_csv([rep], out)
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "strategy,P,rmse,wall_time_s,score_evals"
    assert lines[1].startswith("joint,1,")
