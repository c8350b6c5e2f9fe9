"""Exact and Monte Carlo evaluation of strategy profiles in finite games.

Three evaluation paths live here:

* a generic joint-state evaluator for :class:`NPlayerGame` (state space
  S^N, refused above a cap -- runtime is exponential in N by nature);
* an exact count-state evaluator for :class:`MeanFieldTypeGame`: players
  within a group are exchangeable once they share a policy, so the pair
  (own state, per-group state counts of the others) is a Markov chain whose
  size is polynomial in N.  This is what makes exact NashConv affordable
  for group-structured games at sizes the joint evaluator cannot touch;
* a vectorized simulator with counter-based RNG substreams, whose output is
  a pure function of (game, profile, n_rollouts, seed) regardless of
  threading.

``nashconv`` dispatches between the exact paths by game type.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numpy.random import Generator, Philox

from ._util import CapExceeded, decode_codes, encode_digits, parallel_map, write_csv
from .game_model import (
    MeanFieldTypeGame,
    NPlayerGame,
    StrategyProfile,
    empirical_flows,
    expand_profile,
    to_nplayer,
)

DEFAULT_JOINT_CAP = 200_000
_ROW_BUDGET = 1 << 22  # joint evaluator: rows x S^N elements per expansion chunk
_COUNT_ROW_CAP = 2_000_000


def joint_state_cap():
    return int(os.environ.get("MFGHOM_JOINT_STATE_CAP", DEFAULT_JOINT_CAP))


@dataclass(frozen=True)
class JointEvaluation:
    """Exact per-player values, best-response values, and NashConv."""

    values: np.ndarray
    br_values: np.ndarray
    nashconv: float

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        br = np.asarray(self.br_values, dtype=np.float64)
        if v.shape != br.shape:
            raise ValueError("values and br_values must have equal shapes")
        if np.min(br - v) < -1e-9:
            raise ValueError(
                f"best-response value fell {np.min(br - v):.3e} below the "
                "profile value; evaluator is inconsistent"
            )
        if abs(self.nashconv - float(np.mean(br - v))) > 1e-10:
            raise ValueError("nashconv does not match mean(br - values)")


@dataclass(frozen=True)
class EmpiricalFlowSample:
    """Mean empirical group flows over rollouts and their L1 gap to a flow."""

    l_emp: np.ndarray
    deviation_l1: Optional[np.ndarray]

    def __post_init__(self):
        mass = np.asarray(self.l_emp).sum(axis=(2, 3))
        if np.max(np.abs(mass - 1.0)) > 1e-12:
            raise ValueError("mean empirical flow does not sum to 1 per group")


@dataclass(frozen=True)
class SimulationResult:
    values: np.ndarray
    std_errors: np.ndarray
    n_rollouts: int
    flow_sample: Optional[EmpiricalFlowSample]


def _check_joint_cap(game):
    n_joint = game.spaces.n_states ** game.n_players
    cap = joint_state_cap()
    if n_joint > cap:
        raise CapExceeded(
            f"joint evaluation needs S^N = {n_joint} states but the cap is "
            f"{cap}; set MFGHOM_JOINT_STATE_CAP={n_joint} to allow it",
            required_cap=n_joint,
        )
    return n_joint


def _profile_policies(game, profile):
    if profile.n != game.n_players:
        raise ValueError(
            f"profile has {profile.n} policies for {game.n_players} players"
        )
    return profile.policies


def exact_value(game, profile):
    """Expected cumulative reward of every player, exactly.

    Enumerates the joint chain over S^N states and A^N action profiles in
    bounded-memory chunks; refuses with :class:`CapExceeded` when S^N
    exceeds the joint-state cap.
    """
    pols = _profile_policies(game, profile)
    S, A, T = game.spaces.n_states, game.spaces.n_actions, game.spaces.horizon
    N = game.n_players
    n_joint = _check_joint_cap(game)
    n_act = A ** N
    act_digits = decode_codes(np.arange(n_act), A, N)  # (n_act, N)

    dist = np.zeros(n_joint)
    dist[int(encode_digits(game.initial_states, S))] = 1.0
    values = np.zeros(N)
    state_block = max(1, _ROW_BUDGET // max(n_act * S, 1))
    for t in range(T + 1):
        nxt = np.zeros(n_joint) if t < T else None
        for lo in range(0, n_joint, state_block):
            codes = np.arange(lo, min(lo + state_block, n_joint))
            codes = codes[dist[codes] > 0.0]
            if codes.size == 0:
                continue
            s_dig = decode_codes(codes, S, N)  # (C, N)
            C = codes.size
            s_prof = np.broadcast_to(s_dig[:, None, :], (C, n_act, N))
            a_prof = np.broadcast_to(act_digits[None, :, :], (C, n_act, N))
            w = np.ones((C, n_act))
            for i in range(N):
                w *= pols[i, t, s_dig[:, None, i], act_digits[None, :, i]]
            w *= dist[codes][:, None]
            flat_s = s_prof.reshape(C * n_act, N)
            flat_a = a_prof.reshape(C * n_act, N)
            w_flat = w.reshape(C * n_act)
            live = w_flat > 0.0
            for i in range(N):
                r = np.asarray(game.reward(t, i, flat_s[live], flat_a[live]))
                values[i] += float(np.dot(w_flat[live], r))
            if t < T:
                rows = np.flatnonzero(live)
                row_block = max(1, _ROW_BUDGET // n_joint)
                for rlo in range(0, rows.size, row_block):
                    sel = rows[rlo:rlo + row_block]
                    expand = w_flat[sel][:, None]
                    for i in range(N):
                        p_i = np.asarray(
                            game.transition(t, i, flat_s[sel], flat_a[sel])
                        )
                        # player i owns digit weight S^i, so it must become
                        # the most significant axis of the expansion so far
                        expand = (p_i[:, :, None] * expand[:, None, :]).reshape(
                            sel.size, -1
                        )
                    nxt += expand.sum(axis=0)
        if t < T:
            mass = nxt.sum()
            if abs(mass - 1.0) > 1e-9:
                raise RuntimeError(f"joint occupancy mass drifted to {mass!r}")
            dist = nxt
    return values


def _leave_one_out(factors):
    """Products of all factors except each one; factors has shape (R, N)."""
    R, N = factors.shape
    prefix = np.ones((R, N))
    suffix = np.ones((R, N))
    for i in range(1, N):
        prefix[:, i] = prefix[:, i - 1] * factors[:, i - 1]
        suffix[:, N - 1 - i] = suffix[:, N - i] * factors[:, N - i]
    return prefix * suffix


def exact_best_response(game, profile, player):
    """Value of ``player``'s best response against the others' policies."""
    pols = _profile_policies(game, profile)
    S, A, T = game.spaces.n_states, game.spaces.n_actions, game.spaces.horizon
    N = game.n_players
    n_joint = _check_joint_cap(game)
    n_act = A ** N
    act_digits = decode_codes(np.arange(n_act), A, N)

    v_next = np.zeros(n_joint)
    state_block = max(1, _ROW_BUDGET // max(n_act * S, 1))
    for t in range(T, -1, -1):
        q = np.zeros((n_joint, A))
        for lo in range(0, n_joint, state_block):
            codes = np.arange(lo, min(lo + state_block, n_joint))
            C = codes.size
            s_dig = decode_codes(codes, S, N)
            factors = np.empty((C, n_act, N))
            for i in range(N):
                factors[:, :, i] = pols[i, t, s_dig[:, None, i], act_digits[None, :, i]]
            w_others = _leave_one_out(
                factors.reshape(C * n_act, N)
            )[:, player].reshape(C, n_act)
            flat_s = np.broadcast_to(s_dig[:, None, :], (C, n_act, N)).reshape(-1, N)
            flat_a = np.broadcast_to(act_digits[None, :, :], (C, n_act, N)).reshape(-1, N)
            payoff = np.asarray(game.reward(t, player, flat_s, flat_a)).reshape(C, n_act)
            if t < T:
                cont = np.empty(C * n_act)
                row_block = max(1, _ROW_BUDGET // n_joint)
                v_grid = v_next.reshape((S,) * N)  # axis 0 = player N-1 ... axis N-1 = player 0
                for rlo in range(0, C * n_act, row_block):
                    sel = slice(rlo, min(rlo + row_block, C * n_act))
                    nsel = sel.stop - sel.start
                    # contract the value grid player by player, least
                    # significant digit (player 0) first
                    p0 = np.asarray(game.transition(t, 0, flat_s[sel], flat_a[sel]))
                    acc = p0 @ v_grid.reshape(-1, S).T  # (R, S^(N-1))
                    for i in range(1, N):
                        p_i = np.asarray(game.transition(t, i, flat_s[sel], flat_a[sel]))
                        acc = np.einsum(
                            "rks,rs->rk", acc.reshape(nsel, -1, S), p_i
                        )
                    cont[sel] = acc.reshape(nsel)
                payoff = payoff + cont.reshape(C, n_act)
            own = act_digits[:, player]
            for a in range(A):
                cols = own == a
                q[codes, a] = (w_others[:, cols] * payoff[:, cols]).sum(axis=1)
        v_next = q.max(axis=1)
    s0_code = int(encode_digits(game.initial_states, S))
    return float(v_next[s0_code])


def _nashconv_joint(game, profile, threads=1):
    values = exact_value(game, profile)
    brs = parallel_map(
        lambda i: exact_best_response(game, profile, i), range(game.n_players), threads
    )
    return _finish_eval(values, np.asarray(brs))


def _finish_eval(values, br_values):
    gaps = br_values - values
    conv = float(np.mean(gaps))
    if conv < -1e-9:
        raise RuntimeError(f"NashConv {conv:.3e} is negative beyond tolerance")
    return JointEvaluation(values=values, br_values=br_values, nashconv=conv)


# ---------------------------------------------------------------------------
# exact evaluation of mean-field-type games via group state counts
# ---------------------------------------------------------------------------


def _comps_exact(total, parts):
    """All length-``parts`` vectors of non-negative ints summing to ``total``,
    in lexicographic order."""
    if parts == 1:
        return np.array([[total]], dtype=np.int64)
    blocks = []
    for first in range(total + 1):
        rest = _comps_exact(total - first, parts - 1)
        blocks.append(
            np.hstack([np.full((rest.shape[0], 1), first, dtype=np.int64), rest])
        )
    return np.vstack(blocks)


def _comps_upto(total, parts):
    """All composition vectors with sum <= total, lexicographic."""
    ext = _comps_exact(total, parts + 1)
    return ext[:, :parts]


class _CompSpace:
    """Indexed compositions with totals 0..max_total, plus an addition table."""

    def __init__(self, max_total, parts):
        self.max_total = max_total
        self.parts = parts
        comps = _comps_upto(max_total, parts)
        self.comps = comps
        self.totals = comps.sum(axis=1)
        base = max_total + 1
        self.base = base
        powers = base ** np.arange(parts, dtype=np.int64)
        self._powers = powers
        codes = comps @ powers
        lookup = np.full(base ** parts, -1, dtype=np.int64)
        lookup[codes] = np.arange(comps.shape[0])
        self._lookup = lookup
        self.exact_idx = [
            np.flatnonzero(self.totals == m) for m in range(max_total + 1)
        ]
        n = comps.shape[0]
        ii, jj = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
        ii, jj = ii.ravel(), jj.ravel()
        keep = self.totals[ii] + self.totals[jj] <= max_total
        ii, jj = ii[keep], jj[keep]
        self.add_i = ii
        self.add_j = jj
        self.add_k = lookup[(comps[ii] + comps[jj]) @ powers]
        facts = np.array([math.factorial(m) for m in range(max_total + 1)], dtype=np.float64)
        self.facts = facts
        self.inv_comp_fact = 1.0 / np.prod(facts[comps], axis=1)

    def index_of(self, comp):
        idx = int(self._lookup[int(np.asarray(comp) @ self._powers)])
        if idx < 0:
            raise ValueError("composition outside the indexed space")
        return idx


def _action_splits(count_comp, n_actions):
    """All ways to split each state's count over actions.

    Returns (m_tables, coefs): m_tables has shape (n_splits, S, A) and coefs
    the product of per-state multinomial coefficients.
    """
    S = count_comp.shape[0]
    tables = [np.zeros((1, 0, n_actions), dtype=np.int64)]
    coefs = np.ones(1)
    for s in range(S):
        rows = _comps_exact(int(count_comp[s]), n_actions)  # (r, A)
        c = np.array(
            [
                math.factorial(int(count_comp[s]))
                / np.prod([math.factorial(int(x)) for x in row])
                for row in rows
            ]
        )
        prev = tables[-1]
        n_prev, n_new = prev.shape[0], rows.shape[0]
        merged = np.concatenate(
            [
                np.repeat(prev, n_new, axis=0),
                np.tile(rows[:, None, :], (n_prev, 1, 1)),
            ],
            axis=1,
        )
        tables.append(merged)
        coefs = np.repeat(coefs, n_new) * np.tile(c, n_prev)
    return tables[-1], coefs


class _CountModel:
    """Precomputed layout of the deviator + others-count chain for one group.

    ``g0`` is the deviating player's group.  Rows enumerate (joint count
    state j, others' action-split combo); per-period probabilities are
    filled in from the group policies.
    """

    def __init__(self, game, g0):
        self.game = game
        self.g0 = g0
        spaces = game.spaces
        K, S, A = game.n_groups, spaces.n_states, spaces.n_actions
        sizes = game.partition.group_sizes
        self.sizes = sizes
        self.m_others = sizes - (np.arange(K) == g0)
        self.spaces_kSA = (K, S, A)
        self.comp_spaces = [_CompSpace(int(m), S) for m in self.m_others]
        self.group_comps = [
            sp.comps[sp.exact_idx[int(m)]]
            for sp, m in zip(self.comp_spaces, self.m_others)
        ]
        self.n_comp = [c.shape[0] for c in self.group_comps]
        self.J = int(np.prod(self.n_comp))
        if self.J > 100_000:
            raise CapExceeded(
                f"count evaluation needs {self.J} joint count states", required_cap=self.J
            )

        # per (group, count index): action-split tables
        self.split_m = []  # [k][c] -> (n_spl, S, A)
        self.split_coef = []  # [k][c] -> (n_spl,)
        for k in range(K):
            per_c_m, per_c_coef = [], []
            for comp in self.group_comps[k]:
                m_tab, coef = _action_splits(comp, A)
                per_c_m.append(m_tab)
                per_c_coef.append(coef)
            self.split_m.append(per_c_m)
            self.split_coef.append(per_c_coef)

        # flat row enumeration: all (j, split combo) pairs
        j_of_row, m_rows, gsi = [], [], []
        self.split_offsets = [
            np.concatenate([[0], np.cumsum([tab.shape[0] for tab in self.split_m[k]])])
            for k in range(K)
        ]
        for j in range(self.J):
            cs = self._decode_j(j)
            local = [np.arange(self.split_m[k][cs[k]].shape[0]) for k in range(K)]
            mesh = np.stack(
                np.meshgrid(*local, indexing="ij"), axis=-1
            ).reshape(-1, K)
            n_rows = mesh.shape[0]
            j_of_row.append(np.full(n_rows, j, dtype=np.int64))
            m_here = np.empty((n_rows, K, S, A), dtype=np.int64)
            g_here = np.empty((n_rows, K), dtype=np.int64)
            for k in range(K):
                m_here[:, k] = self.split_m[k][cs[k]][mesh[:, k]]
                g_here[:, k] = self.split_offsets[k][cs[k]] + mesh[:, k]
            m_rows.append(m_here)
            gsi.append(g_here)
        self.j_of_row = np.concatenate(j_of_row)
        self.m_rows = np.concatenate(m_rows)  # (R, K, S, A)
        self.gsi = np.concatenate(gsi)  # (R, K) global split index per group
        self.n_rows = self.j_of_row.shape[0]
        if self.n_rows * S * A > _COUNT_ROW_CAP:
            raise CapExceeded(
                f"count evaluation needs {self.n_rows * S * A} rows",
                required_cap=self.n_rows * S * A,
            )
        # concatenated split tables for probability evaluation
        self.split_m_flat = [
            np.concatenate(self.split_m[k], axis=0) for k in range(K)
        ]
        self.split_coef_flat = [np.concatenate(self.split_coef[k]) for k in range(K)]

    def _decode_j(self, j):
        cs = []
        for k in range(len(self.n_comp)):
            cs.append(j % self.n_comp[k])
            j //= self.n_comp[k]
        return cs

    def encode_counts(self, counts):
        """Joint index of per-group count matrix (K, S)."""
        j, mult = 0, 1
        for k, comp_list in enumerate(self.group_comps):
            sp = self.comp_spaces[k]
            idx_upto = sp.index_of(counts[k])
            exact = sp.exact_idx[int(self.m_others[k])]
            pos = int(np.searchsorted(exact, idx_upto))
            if pos >= len(exact) or exact[pos] != idx_upto:
                raise ValueError("count state outside the model")
            j += pos * mult
            mult *= self.n_comp[k]
        return j

    def split_probs(self, policies, t):
        """Row probabilities Pr(action splits | counts) at period t."""
        K, S, A = self.spaces_kSA
        prob = np.ones(self.n_rows)
        for k in range(K):
            tab = self.split_m_flat[k]
            pi_t = policies[k, t]  # (S, A)
            per_split = self.split_coef_flat[k] * np.prod(
                pi_t[None, :, :] ** tab, axis=(1, 2)
            )
            prob *= per_split[self.gsi[:, k]]
        return prob


def _group_transition_dist(game, model, k, t, m_cell, L_rows, chunk_len):
    """Distribution of group k's next counts, vectorized over rows.

    ``m_cell``: (R, S, A) others' action-split counts for group k;
    ``L_rows``: (R, K, S, A) flows seen by the oracles.  Returns
    (n_comp_k, R) over the group's exact composition list.
    """
    sp = model.comp_spaces[k]
    S, A = model.spaces_kSA[1], model.spaces_kSA[2]
    n_upto = sp.comps.shape[0]
    dist = np.zeros((n_upto, chunk_len))
    dist[sp.index_of(np.zeros(S, dtype=np.int64))] = 1.0
    for s in range(S):
        for a in range(A):
            m = m_cell[:, s, a]
            if not np.any(m > 0):
                continue
            p = np.asarray(
                game.group_transition(
                    t, k, np.full(chunk_len, s), np.full(chunk_len, a), L_rows
                )
            )
            # multinomial pmf of each candidate composition, masked by total
            w = np.ones((n_upto, chunk_len))
            for sprime in range(S):
                w *= p[:, sprime][None, :] ** sp.comps[:, sprime][:, None]
            w *= (sp.facts[m][None, :] * sp.inv_comp_fact[:, None])
            w *= sp.totals[:, None] == m[None, :]
            out = np.zeros_like(dist)
            np.add.at(out, sp.add_k, dist[sp.add_i] * w[sp.add_j])
            dist = out
    exact = sp.exact_idx[int(model.m_others[k])]
    return dist[exact]


def _count_backward(game, policies, g0, chunk_rows=4096):
    """Backward induction over (own state, others' counts) for group g0.

    Returns (V_eval, V_br) at t=0, each of shape (S, J): the exact on-policy
    and best-response values of a group-g0 player, for every own state and
    every configuration of the other players.
    """
    model = _CountModel(game, g0)
    spaces = game.spaces
    K, S, A = model.spaces_kSA
    T = spaces.horizon
    sizes = model.sizes
    J, R = model.J, model.n_rows
    inc = 1.0 / sizes[g0]

    v_eval = np.zeros((S, J))
    v_br = np.zeros((S, J))
    for t in range(T, -1, -1):
        prob_rows = model.split_probs(policies, t)
        q_eval = np.zeros((S, J, A))
        q_br = np.zeros((S, J, A))
        for lo in range(0, R, chunk_rows):
            hi = min(lo + chunk_rows, R)
            C = hi - lo
            base_L = model.m_rows[lo:hi] / sizes[None, :, None, None]
            big = np.broadcast_to(
                base_L[:, None, None], (C, S, A, K, S, A)
            ).copy()
            for x in range(S):
                for a in range(A):
                    big[:, x, a, g0, x, a] += inc
            L_rows = big.reshape(C * S * A, K, S, A)
            x_rows = np.broadcast_to(
                np.arange(S)[None, :, None], (C, S, A)
            ).reshape(-1)
            a_rows = np.broadcast_to(
                np.arange(A)[None, None, :], (C, S, A)
            ).reshape(-1)
            reward = np.asarray(game.group_reward(t, g0, x_rows, a_rows, L_rows))
            if t < T:
                p_dev = np.asarray(
                    game.group_transition(t, g0, x_rows, a_rows, L_rows)
                )
                m_big = np.repeat(model.m_rows[lo:hi], S * A, axis=0)
                d_joint = None
                for k in range(K):
                    dist_k = _group_transition_dist(
                        game, model, k, t, m_big[:, k], L_rows, C * S * A
                    )
                    d_joint = (
                        dist_k
                        if d_joint is None
                        else (d_joint[None, :, :] * dist_k[:, None, :]).reshape(
                            -1, C * S * A
                        )
                    )
                # group 0 varies fastest in j; products were built in that order
                vd_eval = v_eval @ d_joint
                vd_br = v_br @ d_joint
                cont_eval = np.einsum("rx,xr->r", p_dev, vd_eval)
                cont_br = np.einsum("rx,xr->r", p_dev, vd_br)
            else:
                cont_eval = cont_br = 0.0
            w = np.repeat(prob_rows[lo:hi], S * A)
            contrib_eval = (w * (reward + cont_eval)).reshape(C, S, A)
            contrib_br = (w * (reward + cont_br)).reshape(C, S, A)
            j_chunk = model.j_of_row[lo:hi]
            for x in range(S):
                for a in range(A):
                    q_eval[x, :, a] += np.bincount(
                        j_chunk, weights=contrib_eval[:, x, a], minlength=J
                    )
                    q_br[x, :, a] += np.bincount(
                        j_chunk, weights=contrib_br[:, x, a], minlength=J
                    )
        pi_own = policies[g0, t]  # (S, A)
        v_eval = np.einsum("xja,xa->xj", q_eval, pi_own)
        v_br = q_br.max(axis=2)
    return model, v_eval, v_br


def _group_policies(game, profile):
    """Collapse an expanded profile to per-group policies, or None if mixed."""
    if profile.n == game.n_groups:
        return profile.policies
    if profile.n != game.n_players:
        raise ValueError("profile must hold one policy per player or per group")
    assignment = game.partition.assignment
    policies = np.empty(
        (game.n_groups,) + profile.policies.shape[1:], dtype=np.float64
    )
    for k in range(game.n_groups):
        members = np.flatnonzero(assignment == k)
        first = profile.policies[members[0]]
        for m in members[1:]:
            if not np.array_equal(profile.policies[m], first):
                return None
        policies[k] = first
    return policies


def _nashconv_counts(game, policies):
    S = game.spaces.n_states
    N = game.n_players
    assignment = game.partition.assignment
    init = game.initial_states
    group_state_counts = np.zeros((game.n_groups, S), dtype=np.int64)
    for i in range(N):
        group_state_counts[assignment[i], init[i]] += 1

    values = np.empty(N)
    br_values = np.empty(N)
    for g0 in range(game.n_groups):
        model, v_eval, v_br = _count_backward(game, policies, g0)
        for i in np.flatnonzero(assignment == g0):
            others = group_state_counts.copy()
            others[g0, init[i]] -= 1
            j = model.encode_counts(others)
            values[i] = v_eval[init[i], j]
            br_values[i] = v_br[init[i], j]
    return _finish_eval(values, br_values)


def nashconv(game, profile, threads=1):
    """Exact NashConv of ``profile``.

    Mean-field-type games with group-identical policies use the count-state
    evaluator; anything else goes through the joint-state brute force (and
    inherits its cap).
    """
    if isinstance(game, MeanFieldTypeGame):
        policies = _group_policies(game, profile)
        if policies is not None:
            return _nashconv_counts(game, policies)
        flat = to_nplayer(game)
        expanded = (
            profile
            if profile.n == game.n_players
            else expand_profile(profile, game.partition)
        )
        return _nashconv_joint(flat, expanded, threads)
    if isinstance(game, NPlayerGame):
        return _nashconv_joint(game, profile, threads)
    raise ValueError(f"cannot evaluate object of type {type(game).__name__}")


# ---------------------------------------------------------------------------
# Monte Carlo simulation
# ---------------------------------------------------------------------------


def _draw_uniforms(seed, n_rollouts, periods, n_players):
    u = np.empty((n_rollouts, periods, 2, n_players))
    for r in range(n_rollouts):
        gen = Generator(Philox(key=seed).jumped(r))
        u[r] = gen.random((periods, 2, n_players))
    return u


def _inverse_cdf(probs, u):
    """Sample indices from rows of ``probs`` with uniforms ``u``."""
    cdf = np.cumsum(probs, axis=-1)
    idx = np.sum(u[..., None] > cdf, axis=-1)
    return np.clip(idx, 0, probs.shape[-1] - 1)


def simulate(game, profile, n_rollouts, seed, flow=None, threads=1):
    """Monte Carlo rollout evaluation.

    Rollout r draws all its randomness from substream r of a counter-based
    generator keyed on ``seed``: the result is a pure function of the
    arguments no matter how rollouts are batched or threaded.  For
    mean-field-type games the per-group empirical flows of each rollout are
    recorded; passing ``flow`` also yields the mean L1 deviation from it.
    """
    if n_rollouts < 1:
        raise ValueError("n_rollouts must be >= 1")
    mft = isinstance(game, MeanFieldTypeGame)
    if mft and profile.n == game.n_groups:
        profile = expand_profile(profile, game.partition)
    pols = _profile_policies(game, profile)
    spaces = game.spaces
    S, A, T = spaces.n_states, spaces.n_actions, spaces.horizon
    N = game.n_players
    u = _draw_uniforms(seed, n_rollouts, T + 1, N)

    chunk = (n_rollouts + threads - 1) // threads if threads > 1 else n_rollouts
    bounds = [(lo, min(lo + chunk, n_rollouts)) for lo in range(0, n_rollouts, chunk)]

    def run_chunk(b):
        lo, hi = b
        Rc = hi - lo
        states = np.broadcast_to(game.initial_states, (Rc, N)).copy()
        returns = np.zeros((Rc, N))
        # per-rollout records keep the final reduction independent of chunking
        l_roll = np.zeros((Rc, T + 1, game.n_groups, S, A)) if mft else None
        dev_roll = (
            np.zeros((Rc, T + 1, game.n_groups))
            if (mft and flow is not None)
            else None
        )
        for t in range(T + 1):
            probs = pols[np.arange(N)[None, :], t, states]  # (Rc, N, A)
            actions = _inverse_cdf(probs, u[lo:hi, t, 0, :])
            if mft:
                L_emp = empirical_flows(game.partition, spaces, states, actions)
                l_roll[:, t] = L_emp
                if dev_roll is not None:
                    dev_roll[:, t] = np.abs(L_emp - flow.L[t][None]).sum(axis=(2, 3))
                nxt = np.empty((Rc, N), dtype=np.int64)
                for k in range(game.n_groups):
                    members = game.partition.members(k)
                    r_k = np.asarray(
                        game.group_reward(
                            t, k, states[:, members], actions[:, members],
                            L_emp[:, None],
                        )
                    )
                    returns[:, members] += r_k
                    if t < T:
                        p_k = np.asarray(
                            game.group_transition(
                                t, k, states[:, members], actions[:, members],
                                L_emp[:, None],
                            )
                        )
                        nxt[:, members] = _inverse_cdf(
                            p_k, u[lo:hi, t, 1, members]
                        )
                if t < T:
                    states = nxt
            else:
                nxt = np.empty((Rc, N), dtype=np.int64)
                for i in range(N):
                    returns[:, i] += np.asarray(game.reward(t, i, states, actions))
                    if t < T:
                        p_i = np.asarray(game.transition(t, i, states, actions))
                        nxt[:, i] = _inverse_cdf(p_i, u[lo:hi, t, 1, i])
                if t < T:
                    states = nxt
        return returns, l_roll, dev_roll

    parts = parallel_map(run_chunk, bounds, threads)
    returns = np.concatenate([p[0] for p in parts], axis=0)
    values = returns.mean(axis=0)
    if n_rollouts > 1:
        se = returns.std(axis=0, ddof=1) / math.sqrt(n_rollouts)
    else:
        se = np.zeros(N)
    flow_sample = None
    if mft:
        l_emp = np.concatenate([p[1] for p in parts], axis=0).mean(axis=0)
        dev = None
        if flow is not None:
            dev = np.concatenate([p[2] for p in parts], axis=0).mean(axis=0)
        flow_sample = EmpiricalFlowSample(l_emp=l_emp, deviation_l1=dev)
    return SimulationResult(
        values=values, std_errors=se, n_rollouts=n_rollouts, flow_sample=flow_sample
    )


def write_flow_deviation_csv(sample, bound_rhs, path):
    """Rows of (t, k, mean_l1, bound_rhs) for an empirical flow sample."""
    if sample.deviation_l1 is None:
        raise ValueError("sample carries no deviations; simulate with a flow")
    dev = sample.deviation_l1
    rows = []
    for t in range(dev.shape[0]):
        for k in range(dev.shape[1]):
            rows.append([t, k, repr(float(dev[t, k])), repr(float(bound_rhs[t, k]))])
    write_csv(path, ["t", "k", "mean_l1", "bound_rhs"], rows)
