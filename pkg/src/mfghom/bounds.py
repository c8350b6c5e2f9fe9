"""Non-asymptotic error certificates for mean-field homogenization.

Everything here is closed-form arithmetic on small arrays: the recursive
constant tables behind the finite-population flow-deviation bounds, the
mean-field approximation error eps_mf, the heterogeneity error eps_heter,
and the partition-specialized variants used by the optimizer.

Accumulation-order contract: every sum over time/group indices in this
module is accumulated sequentially in increasing index order (t outer,
then l/i/j inner, via explicit loops), so an independent recomputation
that follows the same natural order reproduces the tables bit-exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ._util import write_csv
from .game_model import MeanFieldTypeGame, NPlayerGame, Spaces, empirical_flows

__all__ = [
    "LipschitzProfile",
    "ConstantTable",
    "HeterEstimate",
    "EpsMFBound",
    "BoundReport",
    "constant_table",
    "flow_deviation_bound",
    "eps_mf_theorem",
    "c_theorem_scalar",
    "eps_heter_generic",
    "eps_heter_parametric",
    "assemble",
    "pricing_constants",
    "representative_threshold",
    "eps_mf_partition_corollary",
    "eps_mf_partition_micp",
    "eps_mf_partition_vanishing",
    "estimate_lipschitz",
    "write_bound_curves_csv",
]

PROVENANCES = ("explicit_appendix", "theorem_generic")


def _sqrt_2s(spaces):
    return math.sqrt(2.0 * spaces.n_states * math.log(2.0))


def _sqrt_2sa(spaces):
    return math.sqrt(2.0 * spaces.n_states * spaces.n_actions * math.log(2.0))


@dataclass(frozen=True)
class LipschitzProfile:
    """Sensitivity constants of the group oracles to the mean-field terms.

    ``w_r[j]`` / ``w_p[j]`` bound how much a group reward / per-entry
    transition probability can move per unit L1 change of group j's flow;
    ``rbar_max`` bounds |group reward|.  ``w_d`` and ``d_max`` describe the
    parametric families of the partition optimizer: rewards move at most
    ``w_d``·‖dtheta‖ and all parameters live in the ball of radius
    ``d_max``.  These constants are scenario-supplied inputs to every
    certificate; nothing in this module estimates them (see
    :func:`estimate_lipschitz` for the diagnostic-only sampler).
    """

    w_r: np.ndarray
    w_p: np.ndarray
    rbar_max: float
    w_d: float = 0.0
    d_max: float = 0.0

    def __post_init__(self):
        w_r = np.asarray(self.w_r, dtype=np.float64).reshape(-1)
        w_p = np.asarray(self.w_p, dtype=np.float64).reshape(-1)
        if w_r.shape != w_p.shape or w_r.size == 0:
            raise ValueError("w_r and w_p must be equal-length, non-empty vectors")
        for name, vec in (("w_r", w_r), ("w_p", w_p)):
            if not np.all(np.isfinite(vec)) or np.any(vec < 0):
                raise ValueError(f"{name} entries must be finite and >= 0")
        if not (np.isfinite(self.rbar_max) and self.rbar_max >= 0):
            raise ValueError("rbar_max must be finite and >= 0")
        if self.w_d < 0 or self.d_max < 0:
            raise ValueError("w_d and d_max must be >= 0")
        object.__setattr__(self, "w_r", w_r)
        object.__setattr__(self, "w_p", w_p)

    @property
    def n_groups(self):
        return self.w_r.size

    @property
    def w_max(self):
        return max(float(self.w_r.sum()), float(self.w_p.sum()))


@dataclass(frozen=True)
class ConstantTable:
    """Recursion constants entering the flow-deviation and eps_mf bounds.

    ``c_pair[t, k, j]`` bounds the sensitivity of group k's period-t flow to
    group j's population size; ``c_single[t, k]`` is the self term.  The
    ``*_tilde`` tables are the 1/N-order companions that appear once a
    single player deviates.  ``f`` holds the five horizon polynomials and
    ``bar_c`` the six aggregated maxima; both are consumed verbatim by
    :func:`eps_mf_theorem`.

    Recursions (built by :func:`constant_table`, t from 0):
        c_pair[t+1, k, j]   = 2*sqrt(2*S*A*ln 2) + c_pair[t, k, j]
                              + c_single[t, j] + sum_l w_p[l]*c_pair[t, l, j]
        c_single[t+1, k]    = c_single[t, k] + 4*sqrt(2*S*ln 2)
        c_pair_tilde[t+1]   = 2 + (same shape as c_pair, with tilde tables)
        c_single_tilde[t+1] = c_single_tilde[t, k] + 4
    with c_pair[0] = c_single[0] = c_pair_tilde[0] = 0 and
    c_single_tilde[0] = 2.
    """

    spaces: Spaces
    c_pair: np.ndarray
    c_single: np.ndarray
    c_pair_tilde: np.ndarray
    c_single_tilde: np.ndarray
    f: np.ndarray
    bar_c: np.ndarray

    def __post_init__(self):
        T = self.spaces.horizon
        K = self.c_pair.shape[1]
        if self.c_pair.shape != (T + 1, K, K) or self.c_pair_tilde.shape != (T + 1, K, K):
            raise ValueError("pair tables must have shape (T+1, K, K)")
        if self.c_single.shape != (T + 1, K) or self.c_single_tilde.shape != (T + 1, K):
            raise ValueError("single tables must have shape (T+1, K)")
        if self.f.shape != (5,) or self.bar_c.shape != (6,):
            raise ValueError("f must have 5 entries and bar_c 6")
        if np.any(self.c_pair[0] != 0.0) or np.any(self.c_single[0] != 0.0):
            raise ValueError("plain tables must start at zero")
        if np.any(self.c_pair_tilde[0] != 0.0) or np.any(self.c_single_tilde[0] != 2.0):
            raise ValueError("tilde tables must start at 0 (pair) and 2 (single)")
        for arr in (self.c_pair, self.c_single, self.c_pair_tilde,
                    self.c_single_tilde, self.f, self.bar_c):
            if not np.all(np.isfinite(arr)) or np.any(arr < 0):
                raise ValueError("constant tables must be finite and >= 0")

    @property
    def n_groups(self):
        return self.c_pair.shape[1]


def constant_table(spaces, lip, n_groups=None):
    """Build the full :class:`ConstantTable` for ``spaces`` and ``lip``.

    ``n_groups``, when given, must match ``lip``; it exists so call sites
    can assert the K they believe they are certifying.
    """
    K = lip.n_groups
    if n_groups is not None and int(n_groups) != K:
        raise ValueError(f"n_groups={n_groups} does not match lip (K={K})")
    T = spaces.horizon
    w_p = lip.w_p
    two_sa = 2.0 * _sqrt_2sa(spaces)
    four_s = 4.0 * _sqrt_2s(spaces)

    c_pair = np.zeros((T + 1, K, K))
    c_single = np.zeros((T + 1, K))
    c_pair_tilde = np.zeros((T + 1, K, K))
    c_single_tilde = np.zeros((T + 1, K))
    c_single_tilde[0] = 2.0
    for t in range(T):
        mix = np.zeros(K)
        mix_tilde = np.zeros(K)
        for l in range(K):
            mix += w_p[l] * c_pair[t, l, :]
            mix_tilde += w_p[l] * c_pair_tilde[t, l, :]
        c_pair[t + 1] = two_sa + c_pair[t] + c_single[t][None, :] + mix[None, :]
        c_pair_tilde[t + 1] = (
            2.0 + c_pair_tilde[t] + c_single_tilde[t][None, :] + mix_tilde[None, :]
        )
        c_single[t + 1] = c_single[t] + four_s
        c_single_tilde[t + 1] = c_single_tilde[t] + 4.0

    root_s = _sqrt_2s(spaces)
    root_sa = _sqrt_2sa(spaces)
    f = np.array([
        2.0 * (T + 1) * (T + 2) * root_s + 2.0 * (T + 1) * root_sa,
        T * (T + 1) * (2 * T + 4) / 3.0 * root_s + (T + 1) * (T + 2) * root_sa,
        T * (T + 1) * (2 * T + 4) / 3.0 + (T + 1) * (T + 2),
        2.0 * (T + 1) * (T + 2) * root_s + 2.0 * (T + 1) * root_sa,
        2.0 * (T + 1) * (T + 2) + 2.0 * (T + 1),
    ])

    # Aggregated maxima over sequential index-ordered sums (t, then l, then
    # the remaining group index), as promised in the module docstring.
    sum_pair = np.zeros((K, K))
    sum_weighted = np.zeros(K)
    for t in range(T + 1):
        sum_pair += c_pair[t]
        for i in range(K):
            sum_weighted += lip.w_r[i] * c_pair[t, i, :]
    bar1 = float(sum_pair.max())
    bar2 = float(sum_weighted.max())

    acc3 = np.zeros(K)
    acc4 = np.zeros(K)
    for t in range(T + 1):
        for l in range(t + 1):
            for j in range(K):
                acc3 += w_p[j] * c_pair[l, j, :]
                acc4 += w_p[j] * c_pair_tilde[l, j, :]
    bar3 = float(acc3.max())
    bar4 = float(acc4.max())

    acc5 = np.zeros(K)
    acc6 = np.zeros(K)
    for t in range(T + 1):
        for j in range(K):
            acc5 += lip.w_r[j] * c_pair[t, j, :]
            acc6 += lip.w_r[j] * c_pair_tilde[t, j, :]
    bar5 = float(acc5.max())
    bar6 = float(acc6.max())

    return ConstantTable(
        spaces=spaces,
        c_pair=c_pair,
        c_single=c_single,
        c_pair_tilde=c_pair_tilde,
        c_single_tilde=c_single_tilde,
        f=f,
        bar_c=np.array([bar1, bar2, bar3, bar4, bar5, bar6]),
    )


def _group_sizes_array(group_sizes, n_groups):
    ns = np.asarray(group_sizes, dtype=np.float64).reshape(-1)
    if ns.shape != (n_groups,):
        raise ValueError(f"group_sizes must have length {n_groups}")
    if not np.all(np.isfinite(ns)) or np.any(ns < 1):
        raise ValueError("group sizes must be finite and >= 1")
    return ns


def flow_deviation_bound(table, lip, group_sizes, unilateral=False):
    """Expected-L1 gap between empirical group flows and their limits.

    Returns an array (T+1, K): an upper bound on E‖L_t^{k,N} - L_t^k‖_1
    when every player in a size-``group_sizes`` population plays its group
    policy.  ``unilateral=True`` adds the 1/N-order terms that cover one
    arbitrarily deviating player.
    """
    if lip.n_groups != table.n_groups:
        raise ValueError("lip and table disagree on the number of groups")
    ns = _group_sizes_array(group_sizes, table.n_groups)
    root = np.sqrt(ns)
    two_sa = 2.0 * _sqrt_2sa(table.spaces)
    rhs = table.c_pair @ (lip.w_p / root)
    rhs = rhs + (table.c_single + two_sa) / root[None, :]
    if unilateral:
        rhs = rhs + table.c_pair_tilde @ (lip.w_p / ns)
        rhs = rhs + (table.c_single_tilde + 2.0) / ns[None, :]
    return rhs


@dataclass(frozen=True)
class EpsMFBound:
    """Mean-field approximation error, in both available realizations.

    ``explicit`` assembles the proof-level inequality chain term by term
    (tightest available form); ``generic`` evaluates the headline display
    whose constant ``c_scalar`` is the maximum of the table constants
    divided by sqrt(S·A).  ``explicit`` is the default certificate value.
    """

    explicit: float
    generic: float
    c_scalar: float

    def __post_init__(self):
        for name in ("explicit", "generic", "c_scalar"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and >= 0")

    def value(self, provenance="explicit_appendix"):
        if provenance not in PROVENANCES:
            raise ValueError(f"provenance must be one of {PROVENANCES}")
        return self.explicit if provenance == "explicit_appendix" else self.generic


def c_theorem_scalar(spaces, lip, table=None):
    """Scalar realization of the horizon/Lipschitz constant C(T, W_max).

    Every table constant is of the form sqrt(S·A)·C(T, W_max); the scalar
    is therefore realized as the maximum table entry divided by sqrt(S·A).
    """
    if table is None:
        table = constant_table(spaces, lip)
    top = max(float(table.bar_c.max()), float(table.f.max()))
    return top / math.sqrt(spaces.n_states * spaces.n_actions)


def eps_mf_theorem(spaces, lip, group_sizes):
    """Certified gap between the mean-field game and its finite version.

    Bounds |NashConv of the expanded profile in the finite mean-field-type
    game - weighted exploitability in the limit game| for any group-policy
    profile.  Group sizes may be non-integral (useful for alpha·N studies);
    each must be >= 1.
    """
    table = constant_table(spaces, lip)
    ns = _group_sizes_array(group_sizes, lip.n_groups)
    root = np.sqrt(ns)
    n_total = float(ns.sum())
    rbar = lip.rbar_max
    f1, f2, f3, f4, f5 = (float(v) for v in table.f)
    b1, b2, b3, b4, b5, b6 = (float(v) for v in table.bar_c)

    coef_p_root = rbar * (b1 + b3 + f2) + b2 + b5
    coef_p_lin = rbar * (b4 + f3) + b6
    coef_r_root = f1 + f4
    coef_r_lin = f5
    explicit = (
        coef_p_root * float((lip.w_p / root).sum())
        + coef_p_lin * float((lip.w_p / ns).sum())
        + coef_r_root * float((lip.w_r / root).sum())
        + coef_r_lin * float((lip.w_r / ns).sum())
        + rbar * f1 * float(root.sum()) / n_total
    )

    c_scalar = c_theorem_scalar(spaces, lip, table)
    root_sa = math.sqrt(spaces.n_states * spaces.n_actions)
    generic = max(rbar, 1.0) * c_scalar * root_sa * (
        float(((lip.w_p + lip.w_r) * (1.0 / ns + 1.0 / root)).sum())
        + float(root.sum()) / n_total
    )
    return EpsMFBound(explicit=explicit, generic=generic, c_scalar=c_scalar)


@dataclass(frozen=True)
class HeterEstimate:
    """Per-period heterogeneity deviations and their aggregate error.

    ``eps_t_r[t]`` is the root-mean-square (over players) of the worst-case
    reward gap to the homogenized oracle at period t; ``eps_t_p[t]`` is the
    worst-case total L1 transition gap summed over players.  ``sampled``
    marks estimates whose maxima were searched over sampled profiles only:
    those are lower bounds on the true deviations, not certificates.
    """

    eps_t_r: np.ndarray
    eps_t_p: np.ndarray
    eps_heter: float
    sampled: bool = False

    def __post_init__(self):
        eps_r = np.asarray(self.eps_t_r, dtype=np.float64).reshape(-1)
        eps_p = np.asarray(self.eps_t_p, dtype=np.float64).reshape(-1)
        if eps_p.size != max(eps_r.size - 1, 0):
            raise ValueError("eps_t_p must have one fewer entry than eps_t_r")
        for name, vec in (("eps_t_r", eps_r), ("eps_t_p", eps_p)):
            if not np.all(np.isfinite(vec)) or np.any(vec < 0):
                raise ValueError(f"{name} entries must be finite and >= 0")
        if not (np.isfinite(self.eps_heter) and self.eps_heter >= 0):
            raise ValueError("eps_heter must be finite and >= 0")
        object.__setattr__(self, "eps_t_r", eps_r)
        object.__setattr__(self, "eps_t_p", eps_p)


def _heter_total(eps_t_r, eps_t_p, horizon, r_max):
    total = 0.0
    for t in range(horizon + 1):
        total += 2.0 * float(eps_t_r[t])
    for t in range(horizon):
        total += 2.0 * horizon * r_max * float(eps_t_p[t])
    return total


def eps_heter_generic(game, hatgame, mode="analytic", n_samples=64, seed=0):
    """Heterogeneity error between an N-player game and its homogenization.

    ``mode='analytic'`` asks the game for its closed-form per-period
    deviation maxima and produces a certified value.  ``mode='sampled'``
    searches uniformly sampled joint profiles instead and returns a value
    flagged as a lower bound (the true maxima range over exponentially many
    profiles).
    """
    if not isinstance(hatgame, MeanFieldTypeGame):
        raise ValueError("hatgame must be a MeanFieldTypeGame")
    if game.n_players != hatgame.n_players:
        raise ValueError("game and hatgame must have the same player count")
    if game.spaces != hatgame.spaces:
        raise ValueError("game and hatgame must share state/action spaces")
    T = game.spaces.horizon
    if mode == "analytic":
        hook = game.analytic_deviations
        if hook is None:
            raise ValueError(
                "no closed-form deviation maxima available for this game; "
                "use mode='sampled' for a flagged lower bound"
            )
        eps_t_r, eps_t_p = hook(hatgame)
        eps_t_r = np.asarray(eps_t_r, dtype=np.float64).reshape(-1)
        eps_t_p = np.asarray(eps_t_p, dtype=np.float64).reshape(-1)
        if eps_t_r.shape != (T + 1,) or eps_t_p.shape != (T,):
            raise ValueError("deviation hook returned wrong shapes")
        sampled = False
    elif mode == "sampled":
        if n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        eps_t_r, eps_t_p = _sampled_deviations(game, hatgame, n_samples, seed)
        sampled = True
    else:
        raise ValueError("mode must be 'analytic' or 'sampled'")
    total = _heter_total(eps_t_r, eps_t_p, T, game.r_max)
    return HeterEstimate(eps_t_r=eps_t_r, eps_t_p=eps_t_p, eps_heter=total,
                         sampled=sampled)


def _sampled_deviations(game, hatgame, n_samples, seed):
    spaces = game.spaces
    N = game.n_players
    T = spaces.horizon
    partition = hatgame.partition
    assignment = partition.assignment
    rng = np.random.default_rng(seed)
    eps_t_r = np.zeros(T + 1)
    eps_t_p = np.zeros(T)
    for t in range(T + 1):
        states = rng.integers(0, spaces.n_states, size=(n_samples, N))
        actions = rng.integers(0, spaces.n_actions, size=(n_samples, N))
        L = empirical_flows(partition, spaces, states, actions)
        sq_max = np.zeros(N)
        p_gap = np.zeros(n_samples)
        for i in range(N):
            k = int(assignment[i])
            r = np.asarray(game.reward(t, i, states, actions), dtype=np.float64)
            r_hat = np.asarray(
                hatgame.group_reward(t, k, states[:, i], actions[:, i], L),
                dtype=np.float64,
            )
            sq_max[i] = np.max(np.abs(r - r_hat)) ** 2
            if t < T:
                p = np.asarray(game.transition(t, i, states, actions),
                               dtype=np.float64)
                p_hat = np.asarray(
                    hatgame.group_transition(t, k, states[:, i], actions[:, i], L),
                    dtype=np.float64,
                )
                p_gap += np.abs(p - p_hat).sum(axis=1)
        eps_t_r[t] = math.sqrt(float(sq_max.mean()))
        if t < T:
            eps_t_p[t] = float(p_gap.max())
    return eps_t_r, eps_t_p


def eps_heter_parametric(thetas, partition, lip, horizon):
    """Heterogeneity error when rewards depend on per-player parameters.

    Replacing each player's parameter vector by its group mean costs
    2·w_d·T·sqrt(mean squared within-group parameter distance); transitions
    are parameter-free in this setting, so there is no transition term.
    """
    th = np.asarray(thetas, dtype=np.float64)
    if th.ndim != 2 or th.shape[0] != partition.n_players:
        raise ValueError("thetas must have shape (n_players, d)")
    norms = np.sqrt((th ** 2).sum(axis=1))
    if np.any(norms > lip.d_max + 1e-12):
        raise ValueError(
            f"parameter norm {norms.max():.6g} outside the declared ball "
            f"radius {lip.d_max:.6g}"
        )
    sse = 0.0
    for k in range(partition.n_groups):
        members = partition.members(k)
        center = th[members].mean(axis=0)
        sse += float(((th[members] - center) ** 2).sum())
    return 2.0 * lip.w_d * horizon * math.sqrt(sse / partition.n_players)


@dataclass(frozen=True)
class BoundReport:
    """Complete certificate: solver + mean-field + heterogeneity errors.

    ``total`` bounds the NashConv of the expanded policy in the original
    N-player game.  ``flow_deviation_rhs[t, k]`` is the on-policy flow
    bound, kept for diagnostics/plots.  ``provenance`` records which
    eps_mf realization produced the certificate; ``heter_sampled`` flags a
    heterogeneity term that is only a sampled lower bound.
    """

    eps_mf: float
    eps_heter: float
    eps_solver: float
    total: float
    eps_t_r: np.ndarray
    eps_t_p: np.ndarray
    flow_deviation_rhs: np.ndarray
    provenance: str
    heter_sampled: bool = False

    def __post_init__(self):
        if self.provenance not in PROVENANCES:
            raise ValueError(f"provenance must be one of {PROVENANCES}")
        for name in ("eps_mf", "eps_heter", "eps_solver", "total"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and >= 0")
        if abs(self.total - (self.eps_solver + self.eps_mf + self.eps_heter)) > 1e-12:
            raise ValueError("total must equal eps_solver + eps_mf + eps_heter")
        if self.flow_deviation_rhs.ndim != 2:
            raise ValueError("flow_deviation_rhs must be (T+1, K)")

    def to_dict(self):
        return {
            "eps_solver": self.eps_solver,
            "eps_mf": self.eps_mf,
            "eps_heter": self.eps_heter,
            "total": self.total,
            "provenance": self.provenance,
            "heter_sampled": self.heter_sampled,
            "eps_t_R": [float(v) for v in self.eps_t_r],
            "eps_t_P": [float(v) for v in self.eps_t_p],
            "flow_deviation_rhs": [[float(v) for v in row]
                                   for row in self.flow_deviation_rhs],
        }


def assemble(spaces, lip, group_sizes, eps_solver, heter=None,
             provenance="explicit_appendix"):
    """Combine the three error sources into one :class:`BoundReport`.

    ``heter=None`` means the finite game *is* the homogenized game (zero
    heterogeneity), as when certifying a mean-field-type game against
    itself.
    """
    if not (np.isfinite(eps_solver) and eps_solver >= 0):
        raise ValueError("eps_solver must be finite and >= 0")
    T = spaces.horizon
    if heter is None:
        heter = HeterEstimate(
            eps_t_r=np.zeros(T + 1), eps_t_p=np.zeros(T), eps_heter=0.0
        )
    if heter.eps_t_r.shape != (T + 1,):
        raise ValueError("heterogeneity estimate disagrees with the horizon")
    mf = eps_mf_theorem(spaces, lip, group_sizes)
    eps_mf = mf.value(provenance)
    table = constant_table(spaces, lip)
    rhs = flow_deviation_bound(table, lip, group_sizes, unilateral=False)
    total = eps_solver + eps_mf + heter.eps_heter
    return BoundReport(
        eps_mf=eps_mf,
        eps_heter=heter.eps_heter,
        eps_solver=float(eps_solver),
        total=total,
        eps_t_r=heter.eps_t_r,
        eps_t_p=heter.eps_t_p,
        flow_deviation_rhs=rhs,
        provenance=provenance,
        heter_sampled=heter.sampled,
    )


def pricing_constants(params, alpha=None):
    """Lipschitz/reward constants of the inventory-pricing market.

    The price moves only through the population's mean production, which
    gives the closed-form reward sensitivity W = (Q²/sigma)·(d/q0)^(1/sigma-1)
    and price cap (d/q0)^(1/sigma); transitions ignore the flows entirely.
    ``alpha`` splits the population into two groups carrying alpha·W and
    (1-alpha)·W; None keeps a single group.
    """
    Q, H, S = params.q_cap, params.h_cap, params.s_cap
    if params.sigma <= 0:
        raise ValueError("sigma must be positive")
    price_cap = (params.d / params.q0) ** (1.0 / params.sigma)
    rbar = max(price_cap * Q, params.c_max * (Q + Q * Q + H + 2 * Q + S))
    w_total = (Q * Q / params.sigma) * (params.d / params.q0) ** (1.0 / params.sigma - 1.0)
    if alpha is None:
        w_r = np.array([w_total])
    else:
        alpha = float(alpha)
        if not 0.0 < alpha < 1.0:
            raise ValueError("alpha must lie strictly inside (0, 1)")
        w_r = np.array([alpha * w_total, (1.0 - alpha) * w_total])
    return LipschitzProfile(w_r=w_r, w_p=np.zeros_like(w_r), rbar_max=rbar)


def representative_threshold(params, alpha, c2_pair, horizon):
    """Population size above which one representative group is worse.

    For a two-type market (shares alpha/1-alpha differing only in the
    linear cost c2), returns the conservative closed-form threshold N*
    beyond which the single-group model's heterogeneity penalty provably
    exceeds what it saves in mean-field error.  The comparison in
    :func:`mfghom.pricing_scenario.two_type_study` shows the actual
    crossing happens far earlier; N* certifies, it does not locate.
    """
    alpha = float(alpha)
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie strictly inside (0, 1)")
    c2a, c2b = (float(v) for v in c2_pair)
    for v in (c2a, c2b):
        if not 0.0 <= v <= params.c_max:
            raise ValueError("c2 values must lie in [0, c_max]")
    gap = abs(c2a - c2b)
    if gap == 0.0:
        raise ValueError("the two c2 values must differ")
    Q, H, S = params.q_cap, params.h_cap, params.s_cap
    T = int(horizon)
    if T < 1:
        raise ValueError("horizon must be >= 1")
    price_term = (params.d / params.q0) ** (1.0 / params.sigma) * Q
    cost_term = params.c_max * (Q + Q * Q + H + 2 * Q + S)
    if not cost_term >= price_term >= 1.0:
        raise ValueError(
            "threshold formula requires c_max(Q+Q^2+H+2Q+S) >= (d/q0)^(1/sigma)Q >= 1; "
            f"got {cost_term:.6g} vs {price_term:.6g}"
        )
    lip = pricing_constants(params)
    spaces = Spaces(n_states=S + 1, n_actions=(Q + 1) * (H + 1), horizon=T)
    c_tw = c_theorem_scalar(spaces, lip)
    w_total = float(lip.w_r[0])
    k_bar = (
        ((1.0 + 2.0 * w_total) / (2.0 * (H + Q) * (T + 1))) ** 2
        * (Q + Q * Q + H + 2 * Q + S) ** 2
        * c_tw ** 2
        * (S + 1) * (Q + 1) * (H + 1)
    )
    return k_bar * params.c_max ** 2 / (alpha * (1.0 - alpha) * gap ** 2)


def eps_mf_partition_corollary(spaces, lip, group_sizes):
    """Mean-field error of a partition, per-group form.

    Specialization to a single shared (w_p, w_r) pair: the per-group terms
    scale as 1/N + sqrt(N_k/N).  See :func:`eps_mf_partition_micp` for the
    companion form used inside the partition objective; the two scale
    differently and are both kept verbatim.
    """
    if lip.n_groups != 1:
        raise ValueError("partition forms take a single-population profile")
    ns = np.asarray(group_sizes, dtype=np.float64).reshape(-1)
    if ns.size == 0 or np.any(ns < 1):
        raise ValueError("group sizes must be >= 1")
    n_total = float(ns.sum())
    root = np.sqrt(ns)
    c = c_theorem_scalar(spaces, lip)
    w = float(lip.w_p[0] + lip.w_r[0])
    root_sa = math.sqrt(spaces.n_states * spaces.n_actions)
    body = float((w * (1.0 / n_total + root / math.sqrt(n_total))).sum())
    body += float(root.sum()) / n_total
    return max(lip.rbar_max, 1.0) * c * root_sa * body


def eps_mf_partition_micp(spaces, lip, group_sizes, n_players=None):
    """Mean-field error term as it appears in the partition objective.

    Same constant as :func:`eps_mf_partition_corollary` but multiplying
    ((w_p+w_r)/N + 1/sqrt(N))·sum_k sqrt(N_k); empty groups contribute
    zero.  ``n_players`` pins N when ``group_sizes`` includes empty slots.
    """
    if lip.n_groups != 1:
        raise ValueError("partition forms take a single-population profile")
    ns = np.asarray(group_sizes, dtype=np.float64).reshape(-1)
    if np.any(ns < 0):
        raise ValueError("group sizes must be >= 0")
    n_total = float(ns.sum()) if n_players is None else float(n_players)
    if n_total < 1:
        raise ValueError("total player count must be >= 1")
    c = c_theorem_scalar(spaces, lip)
    w = float(lip.w_p[0] + lip.w_r[0])
    root_sa = math.sqrt(spaces.n_states * spaces.n_actions)
    coef = max(lip.rbar_max, 1.0) * c * root_sa * (
        w / n_total + 1.0 / math.sqrt(n_total)
    )
    return coef * float(np.sqrt(ns).sum())


def eps_mf_partition_vanishing(spaces, lip, n_players, n_groups):
    """Partition-free large-N form of the mean-field error.

    Cauchy-Schwarz collapse of :func:`eps_mf_partition_corollary`:
    (w_p+w_r)(K/N + 1/sqrt(N)) + 1/sqrt(N), which vanishes as N grows for
    any K = O(sqrt(N)).  Useful for sizing K before any partition exists.
    """
    if lip.n_groups != 1:
        raise ValueError("partition forms take a single-population profile")
    n_players = float(n_players)
    if n_players < 1 or int(n_groups) < 1:
        raise ValueError("need n_players >= 1 and n_groups >= 1")
    c = c_theorem_scalar(spaces, lip)
    w = float(lip.w_p[0] + lip.w_r[0])
    root_sa = math.sqrt(spaces.n_states * spaces.n_actions)
    return max(lip.rbar_max, 1.0) * c * root_sa * (
        w * (int(n_groups) / n_players + 1.0 / math.sqrt(n_players))
        + 1.0 / math.sqrt(n_players)
    )


def estimate_lipschitz(game, n_samples=64, seed=0):
    """Diagnostic sampler for the flow-sensitivity constants.

    Probes the group oracles at random pairs of flow arguments differing in
    one group's block and records the largest observed difference ratios.
    The result is a *lower* bound on the true (w_r, w_p): use it to sanity
    check scenario-supplied constants, never in place of them.
    """
    if not isinstance(game, MeanFieldTypeGame):
        raise ValueError("estimate_lipschitz expects a MeanFieldTypeGame")
    spaces = game.spaces
    K = game.n_groups
    S, A = spaces.n_states, spaces.n_actions
    rng = np.random.default_rng(seed)
    w_r_low = np.zeros(K)
    w_p_low = np.zeros(K)

    def random_flow(batch):
        raw = rng.random(size=(batch, K, S, A)) + 1e-3
        return raw / raw.sum(axis=(2, 3), keepdims=True)

    for j in range(K):
        L = random_flow(n_samples)
        L_alt = L.copy()
        L_alt[:, j] = random_flow(n_samples)[:, j]
        gap = np.abs(L_alt[:, j] - L[:, j]).sum(axis=(1, 2))
        ok = gap > 1e-9
        if not np.any(ok):
            continue
        s = rng.integers(0, S, size=n_samples)
        a = rng.integers(0, A, size=n_samples)
        for k in range(K):
            for t in range(spaces.horizon + 1):
                r = np.asarray(game.group_reward(t, k, s, a, L), dtype=np.float64)
                r_alt = np.asarray(game.group_reward(t, k, s, a, L_alt),
                                   dtype=np.float64)
                ratios = np.abs(r_alt - r)[ok] / gap[ok]
                w_r_low[j] = max(w_r_low[j], float(ratios.max()))
                p = np.asarray(game.group_transition(t, k, s, a, L),
                               dtype=np.float64)
                p_alt = np.asarray(game.group_transition(t, k, s, a, L_alt),
                                   dtype=np.float64)
                entry_gap = np.abs(p_alt - p).max(axis=1)
                ratios = entry_gap[ok] / gap[ok]
                w_p_low[j] = max(w_p_low[j], float(ratios.max()))
    return w_r_low, w_p_low


def write_bound_curves_csv(report, path):
    """Write the per-period deviation curves of a report to CSV.

    One row per period: eps_t_R, eps_t_P (empty in the final period, which
    has no transition), and the per-group flow-deviation bound.
    """
    n_periods, n_groups = report.flow_deviation_rhs.shape
    header = ["t", "eps_t_R", "eps_t_P"] + [
        f"flow_rhs_{k}" for k in range(n_groups)
    ]
    rows = []
    for t in range(n_periods):
        row = [t, repr(float(report.eps_t_r[t]))]
        row.append(repr(float(report.eps_t_p[t])) if t < n_periods - 1 else "")
        row.extend(repr(float(v)) for v in report.flow_deviation_rhs[t])
        rows.append(row)
    write_csv(path, header, rows)
