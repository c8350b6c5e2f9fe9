import numpy as np
import pytest

from mfghom.game_model import (GroupPartition, MeanFieldFlow,
                               MeanFieldTypeGame, NPlayerGame, Spaces,
                               StrategyProfile, build_mpmfg, empirical_flows,
                               expand_profile, to_nplayer, uniform_profile,
                               vectorize_group_oracle)

from support import random_mft


def test_spaces_validation():
    sp = Spaces(n_states=3, n_actions=2, horizon=4)
    assert (sp.n_states, sp.n_actions, sp.horizon) == (3, 2, 4)
    with pytest.raises(ValueError):
        Spaces(n_states=0, n_actions=2, horizon=1)
    with pytest.raises(ValueError):
        Spaces(n_states=2, n_actions=0, horizon=1)
    with pytest.raises(ValueError):
        Spaces(n_states=2, n_actions=2, horizon=-1)


def test_partition_properties():
    part = GroupPartition(assignment=np.array([0, 1, 0, 2, 1, 0]), n_groups=3)
    assert part.n_players == 6
    assert np.array_equal(part.group_sizes, [3, 2, 1])
    assert np.allclose(part.weights, [0.5, 1 / 3, 1 / 6])
    assert np.array_equal(part.members(0), [0, 2, 5])
    assert np.array_equal(part.members(2), [3])


def test_partition_rejects_empty_group():
    with pytest.raises(ValueError, match="empty"):
        GroupPartition(assignment=np.array([0, 0, 2]), n_groups=3)
    with pytest.raises(ValueError):
        GroupPartition(assignment=np.array([0, -1]), n_groups=2)
    with pytest.raises(ValueError):
        GroupPartition(assignment=np.array([0, 5]), n_groups=2)


def test_strategy_profile_normalization():
    sp = Spaces(n_states=2, n_actions=2, horizon=1)
    prof = uniform_profile(sp, 3)
    assert prof.policies.shape == (3, 2, 2, 2)
    assert np.allclose(prof.policies, 0.25 * 2)  # uniform over 2 actions
    with pytest.raises(ValueError):
        StrategyProfile(np.zeros((2, 2, 2, 2)))  # rows sum to 0, not 1
    with pytest.raises(ValueError):
        StrategyProfile(np.ones((2, 2, 2)))  # wrong rank


def test_expand_profile_copies_by_group():
    sp = Spaces(n_states=2, n_actions=2, horizon=1)
    rng = np.random.default_rng(0)
    pols = rng.random((2, 2, 2, 2)) + 0.1
    pols /= pols.sum(-1, keepdims=True)
    prof = StrategyProfile(pols)
    part = GroupPartition(assignment=np.array([1, 0, 1, 1]), n_groups=2)
    expanded = expand_profile(prof, part)
    assert expanded.n == 4
    for i, k in enumerate(part.assignment):
        assert np.array_equal(expanded.policies[i], prof.policies[k])
    with pytest.raises(ValueError):
        expand_profile(prof, GroupPartition(np.zeros(3, np.int64), 1))


def test_mean_field_flow_mass_check():
    L = np.full((2, 1, 2, 2), 0.25)
    mu = L.sum(-1)
    MeanFieldFlow(L=L, mu=mu)
    with pytest.raises(ValueError, match="mass"):
        MeanFieldFlow(L=L * 2, mu=mu * 2)


def test_empirical_flows_counts_and_mass():
    part = GroupPartition(assignment=np.array([0, 0, 1]), n_groups=2)
    sp = Spaces(n_states=2, n_actions=2, horizon=1)
    states = np.array([0, 1, 1])
    actions = np.array([1, 1, 0])
    L = empirical_flows(part, sp, states, actions)
    assert L.shape == (2, 2, 2)
    assert L[0, 0, 1] == 0.5 and L[0, 1, 1] == 0.5  # group 0: two firms
    assert L[1, 1, 0] == 1.0  # group 1: one firm
    assert np.allclose(L.sum(axis=(1, 2)), 1.0)
    # batched input keeps leading shape
    Lb = empirical_flows(part, sp, np.tile(states, (5, 4, 1)),
                         np.tile(actions, (5, 4, 1)))
    assert Lb.shape == (5, 4, 2, 2, 2)
    assert np.allclose(Lb, L)


def test_nplayer_game_oracle_spot_checks():
    sp = Spaces(n_states=2, n_actions=2, horizon=1)

    def ok_reward(t, i, states, actions):
        return np.zeros(np.asarray(states).shape[:-1])

    def bad_transition(t, i, states, actions):
        return np.full(np.asarray(states).shape[:-1] + (2,), 0.7)

    def ok_transition(t, i, states, actions):
        out = np.zeros(np.asarray(states).shape[:-1] + (2,))
        out[..., 0] = 1.0
        return out

    NPlayerGame(spaces=sp, n_players=3, initial_states=np.zeros(3, np.int64),
                reward=ok_reward, transition=ok_transition, r_max=1.0)
    with pytest.raises(ValueError):
        NPlayerGame(spaces=sp, n_players=3,
                    initial_states=np.zeros(3, np.int64),
                    reward=ok_reward, transition=bad_transition, r_max=1.0)


def test_mft_to_nplayer_reward_equivalence():
    rng = np.random.default_rng(3)
    game, _ = random_mft(rng, n_players=4, n_states=2, n_actions=2,
                         horizon=2, n_groups=2)
    flat = to_nplayer(game)
    sp = game.spaces
    states = rng.integers(0, sp.n_states, size=(6, 4))
    actions = rng.integers(0, sp.n_actions, size=(6, 4))
    L = empirical_flows(game.partition, sp, states, actions)
    for i in range(4):
        k = game.partition.assignment[i]
        want_r = game.group_reward(1, k, states[:, i], actions[:, i], L)
        got_r = flat.reward(1, i, states, actions)
        assert np.max(np.abs(want_r - got_r)) < 1e-14
        want_p = game.group_transition(1, k, states[:, i], actions[:, i], L)
        got_p = flat.transition(1, i, states, actions)
        assert np.max(np.abs(want_p - got_p)) < 1e-14


def test_to_nplayer_deviation_hook_is_identity_only():
    rng = np.random.default_rng(4)
    game, _ = random_mft(rng)
    flat = to_nplayer(game)
    eps_r, eps_p = flat.analytic_deviations(game)
    assert np.all(eps_r == 0.0) and np.all(eps_p == 0.0)
    other, _ = random_mft(np.random.default_rng(5))
    with pytest.raises(ValueError):
        flat.analytic_deviations(other)


def test_build_mpmfg_weights_and_initial_dists():
    rng = np.random.default_rng(6)
    game, _ = random_mft(rng, n_players=6, n_groups=2)
    mpmfg = build_mpmfg(game)
    assert np.allclose(mpmfg.weights, game.partition.weights)
    for k in range(2):
        members = game.partition.members(k)
        want = np.bincount(
            game.initial_states[members], minlength=game.spaces.n_states
        ) / members.size
        assert np.allclose(mpmfg.initial_dists[k], want)


def test_vectorize_group_oracle_matches_scalar():
    sp = Spaces(n_states=2, n_actions=3, horizon=1)

    def scalar_reward(t, k, s, a, L):
        return float(s) - 0.5 * float(a) + float(np.asarray(L)[k].sum())

    vec = vectorize_group_oracle(scalar_reward, sp, "reward")
    rng = np.random.default_rng(8)
    s = rng.integers(0, 2, size=(4, 5))
    a = rng.integers(0, 3, size=(4, 5))
    L = rng.random((4, 5, 2, 2, 3))
    got = vec(0, 1, s, a, L)
    assert got.shape == (4, 5)
    for idx in np.ndindex(4, 5):
        want = scalar_reward(0, 1, s[idx], a[idx], L[idx])
        assert abs(got[idx] - want) < 1e-14
