"""Game containers and the builders that connect them.

Three layers of model live here:

* ``NPlayerGame`` -- a finite-horizon Markov game among N players with
  per-player conditionally independent transitions.
* ``MeanFieldTypeGame`` -- an N-player game whose oracles only see a player's
  own state/action and the empirical state-action distribution of each
  population group.  This is the homogenized finite game.
* ``MPMFG`` -- the multi-population mean-field game obtained in the infinite
  limit, with one representative agent per group.

Policies are plain float64 arrays of shape (T+1, S, A); a strategy profile
stacks one policy per player (or per group).  All probability objects are
validated on construction: entries may undershoot zero by at most 1e-14 and
row masses must match 1 within the stated tolerance, in which case rows are
renormalized; anything worse is a hard error.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from ._util import clean_distribution

POLICY_TOL = 1e-12
FLOW_TOL = 1e-10
_N_PROBES = 32


@dataclass(frozen=True)
class Spaces:
    """Shared state space size, action space size and horizon T.

    Time runs over periods 0..T inclusive, so there are T+1 decision epochs
    and T transitions.
    """

    n_states: int
    n_actions: int
    horizon: int

    def __post_init__(self):
        if int(self.n_states) < 1:
            raise ValueError(f"n_states must be >= 1, got {self.n_states}")
        if int(self.n_actions) < 1:
            raise ValueError(f"n_actions must be >= 1, got {self.n_actions}")
        if int(self.horizon) < 0:
            raise ValueError(f"horizon must be >= 0, got {self.horizon}")

    @property
    def n_periods(self):
        return self.horizon + 1


@dataclass(frozen=True)
class GroupPartition:
    """Assignment of N players to K non-empty groups labeled 0..K-1."""

    assignment: np.ndarray
    n_groups: int

    def __post_init__(self):
        arr = np.asarray(self.assignment, dtype=np.int64)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("assignment must be a non-empty 1-D integer array")
        if self.n_groups < 1:
            raise ValueError("n_groups must be >= 1")
        if arr.min() < 0 or arr.max() >= self.n_groups:
            raise ValueError("group labels must lie in [0, n_groups)")
        sizes = np.bincount(arr, minlength=self.n_groups)
        if np.any(sizes == 0):
            empty = int(np.flatnonzero(sizes == 0)[0])
            raise ValueError(
                f"group {empty} is empty; drop empty groups before building games"
            )
        object.__setattr__(self, "assignment", arr)

    @property
    def n_players(self):
        return self.assignment.size

    @property
    def group_sizes(self):
        return np.bincount(self.assignment, minlength=self.n_groups)

    @property
    def weights(self):
        """Group weights N_k / N."""
        return self.group_sizes / self.n_players

    def members(self, k):
        return np.flatnonzero(self.assignment == k)


def uniform_policy(spaces):
    """The uniform policy, shape (T+1, S, A)."""
    shape = (spaces.n_periods, spaces.n_states, spaces.n_actions)
    return np.full(shape, 1.0 / spaces.n_actions)


def validate_policy(policy, spaces):
    """Check shape and per-(t, s) simplex rows; returns a clean float64 copy."""
    arr = np.asarray(policy, dtype=np.float64)
    want = (spaces.n_periods, spaces.n_states, spaces.n_actions)
    if arr.shape != want:
        raise ValueError(f"policy shape {arr.shape} != expected {want}")
    return clean_distribution(arr, POLICY_TOL, "policy")


@dataclass(frozen=True)
class StrategyProfile:
    """A stack of policies, shape (n, T+1, S, A) -- one per player or group."""

    policies: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.policies, dtype=np.float64)
        if arr.ndim != 4:
            raise ValueError("policies must have shape (n, T+1, S, A)")
        arr = clean_distribution(arr, POLICY_TOL, "strategy profile")
        object.__setattr__(self, "policies", arr)

    @property
    def n(self):
        return self.policies.shape[0]

    def policy(self, i):
        return self.policies[i]


def uniform_profile(spaces, n):
    return StrategyProfile(np.broadcast_to(
        uniform_policy(spaces), (n,) + (spaces.n_periods, spaces.n_states, spaces.n_actions)
    ).copy())


def expand_profile(profile, partition):
    """Expand K group policies into N per-player policies (bit-equal copies)."""
    if profile.n != partition.n_groups:
        raise ValueError(
            f"profile has {profile.n} policies but partition has "
            f"{partition.n_groups} groups"
        )
    return StrategyProfile(profile.policies[partition.assignment])


@dataclass(frozen=True)
class MeanFieldFlow:
    """Population flow of an MP-MFG under some profile.

    ``L`` has shape (T+1, K, S, A): joint state-action distribution of each
    group at each period.  ``mu`` has shape (T+1, K, S) and must equal the
    state marginal of ``L``.
    """

    L: np.ndarray
    mu: np.ndarray

    def __post_init__(self):
        L = np.asarray(self.L, dtype=np.float64)
        mu = np.asarray(self.mu, dtype=np.float64)
        if L.ndim != 4:
            raise ValueError("L must have shape (T+1, K, S, A)")
        if mu.shape != L.shape[:3]:
            raise ValueError("mu must have shape (T+1, K, S)")
        mass = L.sum(axis=(2, 3))
        if np.max(np.abs(mass - 1.0)) > FLOW_TOL:
            raise ValueError(
                f"flow mass error {np.max(np.abs(mass - 1.0)):.3e} exceeds {FLOW_TOL:.0e}"
            )
        if np.max(np.abs(mu - L.sum(axis=3))) > FLOW_TOL:
            raise ValueError("mu is not the state marginal of L")
        object.__setattr__(self, "L", L)
        object.__setattr__(self, "mu", mu)

    @property
    def n_groups(self):
        return self.L.shape[1]


def _probe_profiles(rng, spaces, n_players, batch):
    states = rng.integers(0, spaces.n_states, size=(batch, n_players))
    actions = rng.integers(0, spaces.n_actions, size=(batch, n_players))
    return states, actions


@dataclass(frozen=True)
class NPlayerGame:
    """Finite-horizon Markov game among ``n_players`` players.

    ``reward(t, i, states, actions)`` takes integer arrays of shape (..., N)
    and returns player i's reward, shape (...).  ``transition(t, i, states,
    actions)`` returns player i's next-state distribution, shape (..., S).
    Both must be pure functions of their arguments.  ``r_max`` bounds
    |reward| over the whole grid.

    ``analytic_deviations``, when present, maps a homogenized
    ``MeanFieldTypeGame`` to exact per-period reward/transition deviation
    maxima ``(eps_t_R, eps_t_P)``; games without a closed form leave it None.
    """

    spaces: Spaces
    n_players: int
    initial_states: np.ndarray
    reward: Callable
    transition: Callable
    r_max: float
    analytic_deviations: Optional[Callable] = None

    def __post_init__(self):
        init = np.asarray(self.initial_states, dtype=np.int64)
        if init.shape != (self.n_players,):
            raise ValueError("initial_states must have shape (n_players,)")
        if init.size and (init.min() < 0 or init.max() >= self.spaces.n_states):
            raise ValueError("initial states out of range")
        if self.n_players < 1:
            raise ValueError("n_players must be >= 1")
        if not self.r_max > 0:
            raise ValueError("r_max must be positive")
        object.__setattr__(self, "initial_states", init)
        self._spot_check()

    def _spot_check(self):
        rng = np.random.default_rng(0)
        states, actions = _probe_profiles(rng, self.spaces, self.n_players, _N_PROBES)
        for t in (0, self.spaces.horizon):
            i = int(rng.integers(self.n_players))
            r = np.asarray(self.reward(t, i, states, actions), dtype=np.float64)
            if r.shape != (states.shape[0],):
                raise ValueError("reward oracle is not batched over profiles")
            if np.max(np.abs(r)) > self.r_max + 1e-9:
                raise ValueError(
                    f"|reward| {np.max(np.abs(r)):.6g} exceeds r_max={self.r_max:.6g}"
                )
            p = np.asarray(self.transition(t, i, states, actions), dtype=np.float64)
            if p.shape != (states.shape[0], self.spaces.n_states):
                raise ValueError("transition oracle must return (..., S) rows")
            clean_distribution(p, 1e-12, "transition probe")


@dataclass(frozen=True)
class MeanFieldTypeGame:
    """N-player game whose oracles see only (own state, own action, flows).

    ``group_reward(t, k, s, a, L)`` / ``group_transition(t, k, s, a, L)``
    take integer arrays ``s, a`` of any shape (...) and a flow ``L`` of shape
    (..., K, S, A) broadcastable against them; they return (...) rewards and
    (..., S) next-state distribution rows.  The same oracles define both the
    finite game (at empirical flows) and its mean-field limit.
    """

    spaces: Spaces
    partition: GroupPartition
    group_reward: Callable
    group_transition: Callable
    initial_states: np.ndarray
    rbar_max: float

    def __post_init__(self):
        init = np.asarray(self.initial_states, dtype=np.int64)
        if init.shape != (self.partition.n_players,):
            raise ValueError("initial_states must match partition size")
        if init.min() < 0 or init.max() >= self.spaces.n_states:
            raise ValueError("initial states out of range")
        if not self.rbar_max > 0:
            raise ValueError("rbar_max must be positive")
        object.__setattr__(self, "initial_states", init)
        self._spot_check()

    @property
    def n_players(self):
        return self.partition.n_players

    @property
    def n_groups(self):
        return self.partition.n_groups

    def _spot_check(self):
        rng = np.random.default_rng(0)
        K, S, A = self.n_groups, self.spaces.n_states, self.spaces.n_actions
        s = rng.integers(0, S, size=_N_PROBES)
        a = rng.integers(0, A, size=_N_PROBES)
        L = rng.random((_N_PROBES, K, S, A))
        L /= L.sum(axis=(2, 3), keepdims=True)
        for t in (0, self.spaces.horizon):
            k = int(rng.integers(K))
            r = np.asarray(self.group_reward(t, k, s, a, L), dtype=np.float64)
            if r.shape != s.shape:
                raise ValueError("group_reward must broadcast over batched flows")
            if np.max(np.abs(r)) > self.rbar_max + 1e-9:
                raise ValueError(
                    f"|group reward| {np.max(np.abs(r)):.6g} exceeds "
                    f"rbar_max={self.rbar_max:.6g}"
                )
            p = np.asarray(self.group_transition(t, k, s, a, L), dtype=np.float64)
            if p.shape != s.shape + (S,):
                raise ValueError("group_transition must return (..., S) rows")
            clean_distribution(p, 1e-12, "group transition probe")


@dataclass(frozen=True)
class MPMFG:
    """Multi-population mean-field game: K representative agents.

    ``weights`` are the population weights N_k/N; ``initial_dists`` is the
    (K, S) array of initial state distributions.  Oracles share the
    signature of :class:`MeanFieldTypeGame`.
    """

    spaces: Spaces
    weights: np.ndarray
    initial_dists: np.ndarray
    group_reward: Callable
    group_transition: Callable

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 1 or w.size == 0 or np.any(w < 0):
            raise ValueError("weights must be a non-negative 1-D array")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {w.sum()!r}, expected 1")
        dists = np.asarray(self.initial_dists, dtype=np.float64)
        if dists.shape != (w.size, self.spaces.n_states):
            raise ValueError("initial_dists must have shape (K, S)")
        dists = clean_distribution(dists, 1e-12, "initial distribution")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "initial_dists", dists)

    @property
    def n_groups(self):
        return self.weights.size


def empirical_flows(partition, spaces, states, actions):
    """Empirical per-group state-action distributions L^{k,N}.

    ``states``/``actions`` have shape (..., N); the result has shape
    (..., K, S, A) with each (S, A) slab summing to 1.
    """
    K, S, A = partition.n_groups, spaces.n_states, spaces.n_actions
    states = np.asarray(states)
    actions = np.asarray(actions)
    lead = states.shape[:-1]
    n = states.shape[-1]
    b = int(np.prod(lead)) if lead else 1
    flat_s = states.reshape(b, n)
    flat_a = actions.reshape(b, n)
    cell = (partition.assignment[None, :] * S + flat_s) * A + flat_a
    rows = np.repeat(np.arange(b, dtype=np.int64), n)
    counts = np.bincount(
        rows * (K * S * A) + cell.reshape(-1), minlength=b * K * S * A
    ).reshape(b, K, S, A)
    L = counts / partition.group_sizes[None, :, None, None]
    return L.reshape(lead + (K, S, A))


class _FlowCache:
    """Single-slot cache of empirical flows keyed by array identity.

    Strong references to the keyed arrays keep ids stable.  The exact joint
    evaluators call the adapter oracles once per player on the same profile
    batch, so one slot removes the N-fold recomputation.
    """

    def __init__(self, partition, spaces):
        self.partition = partition
        self.spaces = spaces
        self._key = (None, None)
        self._value = None

    def flows(self, states, actions):
        key = (states, actions)
        if key[0] is self._key[0] and key[1] is self._key[1]:
            return self._value
        value = empirical_flows(self.partition, self.spaces, states, actions)
        self._key = key
        self._value = value
        return value


def to_nplayer(game):
    """View a :class:`MeanFieldTypeGame` as a plain :class:`NPlayerGame`.

    Player i's oracles apply the group oracles at the empirical flows of the
    supplied profile, which is exactly the homogenized finite game.  The
    attached analytic-deviation hook is the statement that this game *is*
    its own homogenization: deviations are identically zero against this
    very game, and nothing else has a closed form.
    """
    partition, spaces = game.partition, game.spaces
    cache = _FlowCache(partition, spaces)
    assignment = partition.assignment

    def reward(t, i, states, actions):
        L = cache.flows(states, actions)
        k = int(assignment[i])
        return game.group_reward(
            t, k, np.asarray(states)[..., i], np.asarray(actions)[..., i], L
        )

    def transition(t, i, states, actions):
        L = cache.flows(states, actions)
        k = int(assignment[i])
        return game.group_transition(
            t, k, np.asarray(states)[..., i], np.asarray(actions)[..., i], L
        )

    def analytic_deviations(hatgame):
        if hatgame is not game:
            raise ValueError(
                "no closed-form deviations: this game is its own homogenization "
                "and only certifies against itself"
            )
        T = spaces.horizon
        return np.zeros(T + 1), np.zeros(max(T, 0))

    return NPlayerGame(
        spaces=spaces,
        n_players=game.n_players,
        initial_states=game.initial_states,
        reward=reward,
        transition=transition,
        r_max=game.rbar_max,
        analytic_deviations=analytic_deviations,
    )


def build_mpmfg(game):
    """Mean-field limit of a :class:`MeanFieldTypeGame`.

    Weights are the group shares N_k/N and the initial distributions are the
    empirical distributions of the groups' initial states.
    """
    partition, spaces = game.partition, game.spaces
    K, S = partition.n_groups, spaces.n_states
    dists = np.zeros((K, S))
    for k in range(K):
        members = partition.members(k)
        dists[k] = np.bincount(game.initial_states[members], minlength=S) / members.size
    return MPMFG(
        spaces=spaces,
        weights=partition.weights,
        initial_dists=dists,
        group_reward=game.group_reward,
        group_transition=game.group_transition,
    )


def _mean_average(thetas):
    return thetas.mean(axis=0)


@dataclass(frozen=True)
class ParametricFamily:
    """Heterogeneous game family: shared base oracles, per-player parameters.

    ``base_reward(t, s, a, L, theta)`` / ``base_transition(t, s, a, L, theta)``
    follow the group-oracle batching contract with one extra parameter vector.
    ``averaging`` maps a (m, d) block of member parameters to the group
    parameter; the default is the arithmetic mean.
    """

    spaces: Spaces
    thetas: np.ndarray
    base_reward: Callable
    base_transition: Callable
    initial_states: np.ndarray
    rbar_max: float
    averaging: Callable = _mean_average

    def __post_init__(self):
        th = np.asarray(self.thetas, dtype=np.float64)
        if th.ndim != 2 or th.shape[0] == 0:
            raise ValueError("thetas must have shape (N, d)")
        object.__setattr__(self, "thetas", th)

    @property
    def n_players(self):
        return self.thetas.shape[0]


def build_mptype_from_partition(family, partition):
    """Homogenize a parametric family: group oracles at group-average parameters."""
    if partition.n_players != family.n_players:
        raise ValueError("partition size does not match the family")
    theta_hat = np.stack(
        [family.averaging(family.thetas[partition.members(k)])
         for k in range(partition.n_groups)]
    )

    def group_reward(t, k, s, a, L):
        return family.base_reward(t, s, a, L, theta_hat[k])

    def group_transition(t, k, s, a, L):
        return family.base_transition(t, s, a, L, theta_hat[k])

    return MeanFieldTypeGame(
        spaces=family.spaces,
        partition=partition,
        group_reward=group_reward,
        group_transition=group_transition,
        initial_states=np.asarray(family.initial_states, dtype=np.int64),
        rbar_max=family.rbar_max,
    )


def family_to_nplayer(family, partition):
    """The *heterogeneous* N-player game of a parametric family.

    Player i keeps their own parameter vector; interactions go through the
    empirical flows of ``partition``'s groups (the grouping fixes which
    empirical distributions the oracles see, not the parameters).
    """
    spaces = family.spaces
    cache = _FlowCache(partition, spaces)
    thetas = family.thetas

    def reward(t, i, states, actions):
        L = cache.flows(states, actions)
        return family.base_reward(
            t, np.asarray(states)[..., i], np.asarray(actions)[..., i], L, thetas[i]
        )

    def transition(t, i, states, actions):
        L = cache.flows(states, actions)
        return family.base_transition(
            t, np.asarray(states)[..., i], np.asarray(actions)[..., i], L, thetas[i]
        )

    return NPlayerGame(
        spaces=spaces,
        n_players=family.n_players,
        initial_states=np.asarray(family.initial_states, dtype=np.int64),
        reward=reward,
        transition=transition,
        r_max=family.rbar_max,
    )


def vectorize_group_oracle(fn, spaces, kind):
    """Wrap a scalar group oracle ``fn(t, k, s, a, L) -> float | (S,)``.

    Returns an oracle obeying the batched contract (arrays ``s, a`` with a
    broadcastable flow).  Convenience for hand-written game definitions;
    builders in this package implement batching natively.
    """
    if kind not in ("reward", "transition"):
        raise ValueError("kind must be 'reward' or 'transition'")

    def batched(t, k, s, a, L):
        s = np.asarray(s)
        a = np.asarray(a)
        L = np.asarray(L, dtype=np.float64)
        single_flow = L.ndim == 3
        shape = np.broadcast_shapes(s.shape, a.shape, () if single_flow else L.shape[:-3])
        s_b = np.broadcast_to(s, shape)
        a_b = np.broadcast_to(a, shape)
        if not single_flow:
            L_b = np.broadcast_to(L, shape + L.shape[-3:])
        if kind == "reward":
            out = np.empty(shape)
        else:
            out = np.empty(shape + (spaces.n_states,))
        for idx in np.ndindex(shape):
            flow = L if single_flow else L_b[idx]
            out[idx] = fn(t, k, int(s_b[idx]), int(a_b[idx]), flow)
        return out

    return batched
