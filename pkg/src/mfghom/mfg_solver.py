"""Fictitious play for multi-population mean-field games.

The solver alternates forward flow computation with per-group best responses
and averages policies uniformly: after evaluating iterate n (1-based), the
next iterate is pi + (BR - pi)/n, so the first iteration replaces the uniform
initializer with the pure best response.  Exploitability of each evaluated
iterate is recorded and the report returns the best iterate seen (lowest
weighted exploitability, earliest on ties) together with the full history.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._util import clean_distribution, parallel_map, write_csv
from .game_model import MeanFieldFlow, StrategyProfile, uniform_policy

# Exploitability may undershoot zero by at most this much before we treat it
# as a broken best response rather than roundoff.
EXPL_TOL = 1e-9
MASS_TOL = 1e-10


@dataclass(frozen=True)
class BestResponseResult:
    """Best response of one group against a frozen flow."""

    policy: np.ndarray
    value_by_state: np.ndarray
    value: float
    initial_dist: np.ndarray

    def __post_init__(self):
        expected = float(np.dot(self.initial_dist, self.value_by_state))
        if abs(self.value - expected) > 1e-10:
            raise ValueError(
                f"best-response value {self.value!r} does not match "
                f"initial-weighted state values {expected!r}"
            )


@dataclass(frozen=True)
class SolveReport:
    """Outcome of a fictitious-play run.

    ``profile`` is the best evaluated iterate; ``expl_history`` holds the
    weighted exploitability of every evaluated iterate in order, and
    ``per_group_history`` the per-group breakdown (iterations, K).
    """

    profile: StrategyProfile
    weights: np.ndarray
    weighted_expl: float
    per_group_expl: np.ndarray
    iterations: int
    expl_history: np.ndarray
    per_group_history: np.ndarray

    def __post_init__(self):
        per_group = np.asarray(self.per_group_expl, dtype=np.float64)
        if np.any(per_group < 0):
            raise ValueError("per-group exploitability must be non-negative")
        combo = float(np.dot(self.weights, per_group))
        if abs(combo - self.weighted_expl) > 1e-12:
            raise ValueError(
                "weighted exploitability is not consistent with the per-group values"
            )
        if self.iterations != len(self.expl_history):
            raise ValueError("iterations must equal the history length")


def _grids(game, flow_t, t):
    """Reward (K, S, A) and transition (K, S, A, S) grids at one period's flow."""
    S, A = game.spaces.n_states, game.spaces.n_actions
    K = game.n_groups
    s_grid = np.broadcast_to(np.arange(S)[:, None], (S, A))
    a_grid = np.broadcast_to(np.arange(A)[None, :], (S, A))
    rewards = np.empty((K, S, A))
    trans = np.empty((K, S, A, S))
    for k in range(K):
        rewards[k] = np.asarray(game.group_reward(t, k, s_grid, a_grid, flow_t))
        trans[k] = np.asarray(game.group_transition(t, k, s_grid, a_grid, flow_t))
    return rewards, trans


def _forward(game, policies):
    """Flow arrays (L, mu) for raw (K, T+1, S, A) policies.  See forward_flow."""
    S, A = game.spaces.n_states, game.spaces.n_actions
    K, T = game.n_groups, game.spaces.horizon
    L = np.zeros((T + 1, K, S, A))
    mu = np.zeros((T + 1, K, S))
    mu[0] = game.initial_dists
    for t in range(T + 1):
        L[t] = mu[t][:, :, None] * policies[:, t]
        mass = L[t].sum(axis=(1, 2))
        if np.max(np.abs(mass - 1.0)) > MASS_TOL:
            raise RuntimeError(
                f"flow mass drifted by {np.max(np.abs(mass - 1.0)):.3e} at t={t}"
            )
        if t < T:
            _, trans = _grids(game, L[t], t)
            nxt = np.einsum("ksa,ksaz->kz", L[t], trans)
            mu[t + 1] = clean_distribution(
                nxt, MASS_TOL, f"state marginal at t={t + 1}", exc=RuntimeError
            )
    return L, mu


def forward_flow(game, profile):
    """Propagate the population flow of ``profile`` through the game.

    Returns a :class:`MeanFieldFlow`; mass errors beyond 1e-10 raise
    RuntimeError since they indicate a numerical problem, not bad input.
    """
    if profile.n != game.n_groups:
        raise ValueError("profile must hold one policy per group")
    L, mu = _forward(game, profile.policies)
    return MeanFieldFlow(L=L, mu=mu)


def agent_flow(game, flow, k, s0, policy):
    """State-action occupancy of a single group-k agent started at ``s0``.

    The agent follows ``policy`` while the population flow stays frozen at
    ``flow``.  Returns a (T+1, S, A) array of occupancies.
    """
    S, A = game.spaces.n_states, game.spaces.n_actions
    T = game.spaces.horizon
    if not 0 <= s0 < S:
        raise ValueError(f"s0={s0} out of range")
    d = np.zeros((T + 1, S, A))
    d[0, s0] = policy[0, s0]
    for t in range(T):
        s_grid = np.broadcast_to(np.arange(S)[:, None], (S, A))
        a_grid = np.broadcast_to(np.arange(A)[None, :], (S, A))
        trans = np.asarray(game.group_transition(t, k, s_grid, a_grid, flow.L[t]))
        m = np.einsum("sa,saz->z", d[t], trans)
        d[t + 1] = m[:, None] * policy[t + 1]
        mass = d[t + 1].sum()
        if abs(mass - 1.0) > MASS_TOL:
            raise RuntimeError(f"agent flow mass drifted to {mass!r} at t={t + 1}")
    return d


def _best_response_from_grids(rewards, trans, spaces):
    """Backward induction. ``rewards``: (T+1, S, A); ``trans``: (T, S, A, S)."""
    S, A, T = spaces.n_states, spaces.n_actions, spaces.horizon
    policy = np.zeros((T + 1, S, A))
    v_next = np.zeros(S)
    for t in range(T, -1, -1):
        q = rewards[t] + (trans[t] @ v_next if t < T else 0.0)
        best = np.argmax(q, axis=1)  # ties resolve to the lowest action index
        policy[t, np.arange(S), best] = 1.0
        v_next = q[np.arange(S), best]
    return policy, v_next


def best_response(game, flow, k):
    """Best response of group ``k`` against the frozen ``flow``."""
    T = game.spaces.horizon
    rewards = np.empty((T + 1, game.spaces.n_states, game.spaces.n_actions))
    trans = np.empty((T,) + rewards.shape[1:] + (game.spaces.n_states,))
    for t in range(T + 1):
        r_t, p_t = _grids(game, flow.L[t], t)
        rewards[t] = r_t[k]
        if t < T:
            trans[t] = p_t[k]
    policy, v0 = _best_response_from_grids(rewards, trans, game.spaces)
    mu0 = game.initial_dists[k]
    return BestResponseResult(
        policy=policy,
        value_by_state=v0,
        value=float(np.dot(mu0, v0)),
        initial_dist=mu0,
    )


def _clamp_expl(raw):
    if raw < -EXPL_TOL:
        raise RuntimeError(
            f"exploitability {raw:.3e} is negative beyond tolerance; "
            "the best-response routine is inconsistent"
        )
    return max(raw, 0.0)


def exploitability(game, flow, threads=1):
    """Per-group and weighted exploitability of the profile inducing ``flow``.

    The flow determines everything: the profile value of group k is the
    flow-weighted reward sum, and the best response is computed with the
    population flow frozen.  Returns (per_group, weighted, best_responses).
    """
    K, T = game.n_groups, game.spaces.horizon
    reward_grids = np.empty((T + 1, K) + (game.spaces.n_states, game.spaces.n_actions))
    trans_grids = np.empty((T, K) + reward_grids.shape[2:] + (game.spaces.n_states,))
    for t in range(T + 1):
        r_t, p_t = _grids(game, flow.L[t], t)
        reward_grids[t] = r_t
        if t < T:
            trans_grids[t] = p_t

    def one_group(k):
        policy, v0 = _best_response_from_grids(
            reward_grids[:, k], trans_grids[:, k], game.spaces
        )
        br = BestResponseResult(
            policy=policy,
            value_by_state=v0,
            value=float(np.dot(game.initial_dists[k], v0)),
            initial_dist=game.initial_dists[k],
        )
        profile_value = float(np.sum(flow.L[:, k] * reward_grids[:, k]))
        return br, _clamp_expl(br.value - profile_value)

    results = parallel_map(one_group, range(K), threads)
    brs = [r[0] for r in results]
    per_group = np.array([r[1] for r in results])
    weighted = float(np.dot(game.weights, per_group))
    return per_group, weighted, brs


def solve_fictitious_play(game, n_iterations, tol=0.0, threads=1):
    """Run fictitious play for up to ``n_iterations`` evaluated iterates.

    Stops early once the weighted exploitability drops to ``tol`` or below.
    Deterministic: identical inputs give bit-identical reports regardless of
    ``threads``.
    """
    if n_iterations < 1:
        raise ValueError("n_iterations must be >= 1")
    spaces = game.spaces
    K = game.n_groups
    pi = np.broadcast_to(
        uniform_policy(spaces),
        (K, spaces.n_periods, spaces.n_states, spaces.n_actions),
    ).copy()

    history = []
    group_history = []
    best = None  # (weighted, pi snapshot, per_group)
    for n in range(1, n_iterations + 1):
        L, mu = _forward(game, pi)
        flow = MeanFieldFlow(L=L, mu=mu)
        per_group, weighted, brs = exploitability(game, flow, threads)
        history.append(weighted)
        group_history.append(per_group)
        if best is None or weighted < best[0]:
            best = (weighted, pi.copy(), per_group)
        if weighted <= tol:
            break
        br_stack = np.stack([br.policy for br in brs])
        pi += (br_stack - pi) / n

    weighted, best_pi, per_group = best
    return SolveReport(
        profile=StrategyProfile(best_pi),
        weights=np.asarray(game.weights, dtype=np.float64),
        weighted_expl=weighted,
        per_group_expl=per_group,
        iterations=len(history),
        expl_history=np.asarray(history),
        per_group_history=np.asarray(group_history),
    )


def report_to_dict(report):
    return {
        "weighted_exploitability": float(report.weighted_expl),
        "per_group_exploitability": [float(x) for x in report.per_group_expl],
        "group_weights": [float(x) for x in report.weights],
        "iterations": int(report.iterations),
        "exploitability_history": [float(x) for x in report.expl_history],
        "policies": report.profile.policies.tolist(),
    }


def write_exploitability_csv(report, path):
    """One row per evaluated iterate: iteration, weighted, then per-group columns."""
    k = report.per_group_history.shape[1]
    header = ["iteration", "weighted_expl"] + [f"expl_{j}" for j in range(k)]
    rows = [
        [i + 1, repr(float(report.expl_history[i]))]
        + [repr(float(x)) for x in report.per_group_history[i]]
        for i in range(report.iterations)
    ]
    write_csv(path, header, rows)
