import itertools

import numpy as np
import pytest

from mfghom._util import CapExceeded
from mfghom.bounds import LipschitzProfile
from mfghom.game_model import GroupPartition, Spaces
from mfghom.partition import (EXACT_ENUM_CAP, PartitionSolution, kmeans,
                              micp_objective, solve_exact, solve_local,
                              suggest_k)

_SPACES = Spaces(n_states=2, n_actions=3, horizon=2)


def _lip(w_d=4.0):
    return LipschitzProfile(w_r=[1.5], w_p=[0.2], rbar_max=2.0, w_d=w_d,
                            d_max=100.0)


def _canon(labels):
    """First-appearance relabeling, dropping unused group ids."""
    labels = np.asarray(labels)
    seen = {}
    out = np.empty(labels.size, dtype=np.int64)
    for i, g in enumerate(labels):
        out[i] = seen.setdefault(int(g), len(seen))
    return out, len(seen)


def _brute_force_best(th, k_max, lip):
    best = np.inf
    for labels in itertools.product(range(k_max), repeat=th.shape[0]):
        canon, k = _canon(labels)
        part = GroupPartition(canon, k)
        val = micp_objective(part, th, lip, _SPACES)
        best = min(best, val)
    return best


def test_solve_exact_matches_brute_force():
    lip = _lip()
    for seed in range(6):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(4, 8))
        d = int(rng.integers(1, 3))
        th = rng.normal(size=(n, d))
        sol = solve_exact(th, 3, lip, _SPACES)
        want = _brute_force_best(th, 3, lip)
        assert abs(sol.objective - want) <= 1e-9
        # reported split re-evaluates to the reported objective
        re_val = micp_objective(sol.partition, th, lip, _SPACES)
        assert re_val == pytest.approx(sol.objective, abs=1e-12)
        assert sol.method == "exact_enum"


def test_local_never_beats_exact():
    lip = _lip()
    hits = 0
    for seed in range(10):
        rng = np.random.default_rng(seed + 40)
        th = rng.normal(size=(7, 2))
        exact = solve_exact(th, 3, lip, _SPACES)
        local = solve_local(th, 3, lip, _SPACES, seed=seed)
        assert local.objective >= exact.objective - 1e-12
        if abs(local.objective - exact.objective) <= 1e-9:
            hits += 1
    assert hits >= 8  # the descent finds the optimum almost always here


def test_exact_cap_points_to_local():
    lip = _lip()
    th = np.zeros((EXACT_ENUM_CAP + 1, 1))
    with pytest.raises(CapExceeded, match="solve_local") as exc:
        solve_exact(th, 2, lip, _SPACES)
    assert exc.value.required_cap == EXACT_ENUM_CAP + 1


def test_two_players_merge_or_split_by_cost_gap():
    lip = _lip(w_d=5.0)
    far = np.array([[0.0], [10.0]])
    sol = solve_exact(far, 2, lip, _SPACES)
    assert sol.partition.n_groups == 2
    same = np.array([[1.0], [1.0]])
    sol = solve_exact(same, 2, lip, _SPACES)
    assert sol.partition.n_groups == 1  # sqrt-size penalty favors merging


def test_micp_objective_invariances():
    lip = _lip()
    rng = np.random.default_rng(3)
    th = rng.normal(size=(6, 2))
    a = GroupPartition(np.array([0, 0, 1, 1, 2, 2]), 3)
    b = GroupPartition(np.array([2, 2, 0, 0, 1, 1]), 3)  # relabeled groups
    va = micp_objective(a, th, lip, _SPACES)
    vb = micp_objective(b, th, lip, _SPACES)
    assert va == pytest.approx(vb, rel=1e-12)
    with pytest.raises(ValueError):
        micp_objective(a, th[:5], lip, _SPACES)
    with pytest.raises(ValueError):
        micp_objective(a, th, lip, _SPACES, n_players=7)


def test_kmeans_quality_on_uniform_points():
    rng = np.random.default_rng(11)
    th = rng.random(4000)
    sol = kmeans(th, 2, seed=5)
    # asymptotic mean squared error for K clusters on U[0,1] is 1/(12 K^2)
    assert sol.objective == pytest.approx(1.0 / 48.0, rel=0.15)
    centers = np.sort(sol.centroids[:, 0])
    assert abs(centers[0] - 0.25) < 0.04
    assert abs(centers[1] - 0.75) < 0.04
    assert sol.mf_term == 0.0
    assert sol.heter_term == sol.objective


def test_kmeans_sse_weakly_decreasing_in_k():
    rng = np.random.default_rng(13)
    th = rng.normal(size=(60, 2))
    prev = None
    for k in range(1, 6):
        sol = kmeans(th, k, seed=1)
        if prev is not None:
            assert sol.objective <= prev + 1e-12
        prev = sol.objective
    assert kmeans(th, 1, seed=0).objective == pytest.approx(
        float(((th - th.mean(axis=0)) ** 2).sum()) / 60.0)


def test_kmeans_deterministic_and_validates():
    rng = np.random.default_rng(17)
    th = rng.normal(size=(30, 1))
    a = kmeans(th, 3, seed=9)
    b = kmeans(th, 3, seed=9)
    assert np.array_equal(a.partition.assignment, b.partition.assignment)
    assert a.objective == b.objective
    with pytest.raises(ValueError):
        kmeans(th, 0)
    with pytest.raises(ValueError):
        kmeans(th, 31)
    with pytest.raises(ValueError):
        kmeans(th, 2, restarts=0)


def test_solve_local_deterministic():
    rng = np.random.default_rng(19)
    th = rng.normal(size=(20, 2))
    lip = _lip()
    a = solve_local(th, 4, lip, _SPACES, seed=2)
    b = solve_local(th, 4, lip, _SPACES, seed=2)
    assert a.to_dict() == b.to_dict()
    assert a.method == "local_search"


def test_suggest_k_cube_root_rule():
    assert suggest_k(1) == 1
    assert suggest_k(2) == 1
    assert suggest_k(8) == 2
    assert suggest_k(27) == 3
    assert suggest_k(1000) == 10
    assert suggest_k(10 ** 6) == 100
    with pytest.raises(ValueError):
        suggest_k(0)


def test_partition_solution_validation_and_dict():
    part = GroupPartition(np.array([0, 0, 1]), 2)
    cent = np.array([[0.0], [1.0]])
    with pytest.raises(ValueError):
        PartitionSolution(partition=part, centroids=cent, objective=1.0,
                          heter_term=0.2, mf_term=0.2, method="kmeans")
    with pytest.raises(ValueError):
        PartitionSolution(partition=part, centroids=cent, objective=1.0,
                          heter_term=0.5, mf_term=0.5, method="annealing")
    sol = PartitionSolution(partition=part, centroids=cent, objective=1.0,
                            heter_term=0.5, mf_term=0.5, method="kmeans")
    d = sol.to_dict()
    assert set(d) == {"method", "n_groups", "assignment", "group_sizes",
                      "centroids", "objective", "heter_term", "mf_term"}
    assert d["assignment"] == [0, 0, 1]
    assert d["group_sizes"] == [2, 1]
