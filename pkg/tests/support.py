"""Shared test fixtures: random games with known Lipschitz constants.

The generator builds mean-field-type games whose rewards couple linearly
to the groups' action marginals and whose transitions mix a base kernel
with flow-driven kernels.  Both couplings have closed-form sensitivities,
so every generated game ships with an honest LipschitzProfile:

  reward:      R = base_r[t,k,s,a] + sum_j coef_r[t,k,j,s,a] * mass_j(a)
               with mass_j the action marginal of L^j, so
               w_r[j] = max |coef_r[., j, .]|
  transition:  P <- P*(1-lam_j) + lam_j * (state_marginal_j @ kern_j)
               applied per group with lam_j = mix[t,k,j,s,a] and kern rows
               normalized, so w_p[j] = max mix[., j, .]
"""
import numpy as np

from mfghom.bounds import LipschitzProfile
from mfghom.game_model import (GroupPartition, MeanFieldTypeGame, Spaces,
                               StrategyProfile)


def random_mft(rng, n_players=4, n_states=2, n_actions=2, horizon=2,
               n_groups=2):
    """Random mean-field-type game plus its certified Lipschitz profile."""
    N, S, A, T, K = n_players, n_states, n_actions, horizon, n_groups
    assignment = rng.integers(0, K, size=N)
    assignment[:K] = np.arange(K)  # every group non-empty
    part = GroupPartition(assignment=assignment, n_groups=K)
    base_r = rng.normal(size=(T + 1, K, S, A))
    coef_r = rng.normal(size=(T + 1, K, K, S, A)) * 0.3
    base_p = rng.random(size=(T + 1, K, S, A, S)) + 0.2
    base_p /= base_p.sum(-1, keepdims=True)
    mix = rng.random(size=(T + 1, K, K, S, A))
    mix = 0.3 * mix / mix.sum(axis=2, keepdims=True)
    kern = rng.random(size=(T + 1, K, K, S, S)) + 0.1
    kern /= kern.sum(-1, keepdims=True)

    def group_reward(t, k, s, a, L):
        s = np.asarray(s)
        a = np.asarray(a)
        L = np.asarray(L)
        single = L.ndim == 3
        shape = np.broadcast_shapes(
            s.shape, a.shape, () if single else L.shape[:-3]
        )
        s = np.broadcast_to(s, shape)
        a = np.broadcast_to(a, shape)
        Lb = np.broadcast_to(L, shape + L.shape[-3:])
        out = base_r[t, k, s, a].astype(float).copy()
        for j in range(K):
            mass_j = Lb[..., j, :, :].sum(-2)  # (..., A)
            out += coef_r[t, k, j, s, a] * np.take_along_axis(
                mass_j, a[..., None], -1
            )[..., 0]
        return out

    def group_transition(t, k, s, a, L):
        s = np.asarray(s)
        a = np.asarray(a)
        L = np.asarray(L)
        single = L.ndim == 3
        shape = np.broadcast_shapes(
            s.shape, a.shape, () if single else L.shape[:-3]
        )
        s = np.broadcast_to(s, shape)
        a = np.broadcast_to(a, shape)
        Lb = np.broadcast_to(L, shape + L.shape[-3:])
        p = base_p[t, k, s, a].astype(float).copy()
        for j in range(K):
            lam = mix[t, k, j, s, a]
            mass_j = Lb[..., j, :, :].sum(-1)  # (..., S)
            mixed = mass_j @ kern[t, k, j]
            p = p * (1 - lam[..., None]) + lam[..., None] * mixed
        return p

    rbar = float(
        (np.abs(base_r) + np.abs(coef_r).sum(axis=2)).max()
    )
    lip = LipschitzProfile(
        w_r=np.abs(coef_r).max(axis=(0, 1, 3, 4)),
        w_p=mix.max(axis=(0, 1, 3, 4)),
        rbar_max=rbar,
    )
    game = MeanFieldTypeGame(
        spaces=Spaces(n_states=S, n_actions=A, horizon=T),
        partition=part,
        group_reward=group_reward,
        group_transition=group_transition,
        initial_states=rng.integers(0, S, size=N),
        rbar_max=rbar,
    )
    return game, lip


def random_group_policies(rng, game):
    """A random valid StrategyProfile with one policy per group."""
    spaces = game.spaces
    pols = rng.random(
        size=(game.n_groups, spaces.horizon + 1, spaces.n_states,
              spaces.n_actions)
    ) + 0.1
    pols /= pols.sum(-1, keepdims=True)
    return StrategyProfile(pols)


def mirror_constant_tables(spaces, lip):
    """Scalar-loop recomputation of the recursion tables.

    Follows the same accumulation order as the library (t outer, then the
    l/i/j loops) so agreement with ``constant_table`` is expected bit for
    bit.
    """
    import math

    T, K = spaces.horizon, lip.n_groups
    two_sa = 2.0 * math.sqrt(2.0 * spaces.n_states * spaces.n_actions
                             * math.log(2.0))
    four_s = 4.0 * math.sqrt(2.0 * spaces.n_states * math.log(2.0))
    c = np.zeros((T + 1, K, K))
    cs = np.zeros((T + 1, K))
    ct = np.zeros((T + 1, K, K))
    cst = np.zeros((T + 1, K))
    cst[0] = 2.0
    for t in range(T):
        mix = np.zeros(K)
        mix_t = np.zeros(K)
        for l in range(K):
            for j in range(K):
                mix[j] += lip.w_p[l] * c[t, l, j]
                mix_t[j] += lip.w_p[l] * ct[t, l, j]
        for k in range(K):
            for j in range(K):
                c[t + 1, k, j] = ((two_sa + c[t, k, j]) + cs[t, j]) + mix[j]
                ct[t + 1, k, j] = ((2.0 + ct[t, k, j]) + cst[t, j]) + mix_t[j]
            cs[t + 1, k] = cs[t, k] + four_s
            cst[t + 1, k] = cst[t, k] + 4.0
    return c, cs, ct, cst


def mirror_bar_c(spaces, lip, c, cs, ct):
    """Companion recomputation of the six aggregated maxima."""
    T, K = spaces.horizon, lip.n_groups
    sum_pair = np.zeros((K, K))
    sum_weighted = np.zeros(K)
    for t in range(T + 1):
        sum_pair += c[t]
        for i in range(K):
            sum_weighted += lip.w_r[i] * c[t, i, :]
    acc3 = np.zeros(K)
    acc4 = np.zeros(K)
    for t in range(T + 1):
        for l in range(t + 1):
            for j in range(K):
                acc3 += lip.w_p[j] * c[l, j, :]
                acc4 += lip.w_p[j] * ct[l, j, :]
    acc5 = np.zeros(K)
    acc6 = np.zeros(K)
    for t in range(T + 1):
        for j in range(K):
            acc5 += lip.w_r[j] * c[t, j, :]
            acc6 += lip.w_r[j] * ct[t, j, :]
    return np.array([sum_pair.max(), sum_weighted.max(), acc3.max(),
                     acc4.max(), acc5.max(), acc6.max()])
