"""Inventory-pricing market: the package's reference scenario.

N firms hold inventory s in {0..S}, choose production q in {0..Q} and
replenishment h in {0..H} each period (one action code a = q*(H+1) + h),
and sell at the market-clearing price set by aggregate production.  Firm
heterogeneity lives entirely in five cost coefficients per firm, which
makes every error constant of :mod:`mfghom.bounds` available in closed
form and the homogenized group games exact to construct.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ._util import write_csv
from .bounds import (LipschitzProfile, eps_mf_theorem, pricing_constants,
                     representative_threshold)
from .game_model import (GroupPartition, MeanFieldTypeGame, MPMFG, NPlayerGame,
                         Spaces, build_mpmfg)

__all__ = [
    "PricingParams",
    "Scenario",
    "clearing_price",
    "pricing_spaces",
    "build_n_player",
    "build_pricing_mpmfg",
    "two_type_study",
    "two_type_coefficients",
    "theta_lipschitz",
    "heter_two_type_closed_form",
    "load_scenario",
    "write_two_type_csv",
]

_COST_TERMS = 5


@dataclass(frozen=True)
class PricingParams:
    """Market primitives and the per-firm cost table.

    ``coeffs`` rows are (c0..c4): unit production cost, quadratic
    production cost, replenishment/emergency unit cost, extra emergency
    premium, and holding cost.  ``coeffs=None`` is allowed for studies
    that only need the closed-form constants.  ``c_max`` caps every
    coefficient and enters the reward bound.
    """

    s_cap: int
    q_cap: int
    h_cap: int
    q0: float
    d: float
    sigma: float
    c_max: float
    coeffs: Optional[np.ndarray] = None

    def __post_init__(self):
        for name in ("s_cap", "q_cap", "h_cap"):
            v = getattr(self, name)
            if not (isinstance(v, (int, np.integer)) and v >= 1):
                raise ValueError(f"{name} must be a positive integer")
        if not self.q0 > 0:
            raise ValueError("q0 must be positive")
        if not self.d > 0:
            raise ValueError("d must be positive")
        if not 0.0 < self.sigma <= 1.0:
            raise ValueError("sigma must lie in (0, 1]")
        if self.sigma == 1.0:
            warnings.warn(
                "sigma=1 sits on the boundary of the supported elasticity "
                "range; the closed-form constants remain finite but the "
                "scenario analysis assumes sigma < 1",
                UserWarning,
                stacklevel=2,
            )
        if not self.c_max > 0:
            raise ValueError("c_max must be positive")
        if self.coeffs is not None:
            co = np.asarray(self.coeffs, dtype=np.float64)
            if co.ndim != 2 or co.shape[1] != _COST_TERMS or co.shape[0] < 1:
                raise ValueError("coeffs must have shape (n_firms, 5)")
            if not np.all(np.isfinite(co)):
                raise ValueError("coefficients must be finite")
            if np.any(co < 0) or np.any(co > self.c_max):
                raise ValueError("coefficients must lie in [0, c_max]")
            object.__setattr__(self, "coeffs", co)

    @property
    def n_firms(self):
        if self.coeffs is None:
            raise ValueError("this parameter set carries no coefficient table")
        return self.coeffs.shape[0]


def pricing_spaces(params, horizon):
    """State/action/horizon sizes of the market game."""
    return Spaces(
        n_states=params.s_cap + 1,
        n_actions=(params.q_cap + 1) * (params.h_cap + 1),
        horizon=int(horizon),
    )


def clearing_price(mean_q, params):
    """Inverse-demand price at the given population-mean production."""
    mean_q = np.asarray(mean_q, dtype=np.float64)
    if np.any(mean_q < 0):
        raise ValueError("mean production must be >= 0")
    return (params.d / (params.q0 + mean_q)) ** (1.0 / params.sigma)


def _decode_actions(actions, h_cap):
    actions = np.asarray(actions)
    return actions // (h_cap + 1), actions % (h_cap + 1)


def _firm_reward(price, s, q, h, coeffs_row):
    c0, c1, c2, c3, c4 = (coeffs_row[..., m] for m in range(_COST_TERMS))
    emergency = np.maximum(q - s, 0)
    return ((price - c0) * q - c1 * q * q - c2 * h
            - (c2 + c3) * emergency - c4 * s)


def _next_state_rows(s, q, h, s_cap):
    nxt = np.clip(s - np.minimum(q, s) + h, 0, s_cap)
    rows = np.zeros(nxt.shape + (s_cap + 1,))
    np.put_along_axis(rows, nxt[..., None], 1.0, axis=-1)
    return rows


def _deviation_table(coeffs, centers, assignment, params):
    """Worst-case reward gap per firm against group-mean coefficients.

    The price term is shared between a firm and its homogenization (both
    see the same population production), so the gap reduces to the cost
    difference; the maximum over the (s, q, h) grid is exact.
    """
    S, Q, H = params.s_cap, params.q_cap, params.h_cap
    s, q, h = np.meshgrid(np.arange(S + 1), np.arange(Q + 1), np.arange(H + 1),
                          indexing="ij")
    features = np.stack([
        q, q * q, h + np.maximum(q - s, 0), np.maximum(q - s, 0), s,
    ], axis=-1).reshape(-1, _COST_TERMS).astype(np.float64)
    delta = coeffs - centers[assignment]
    return np.abs(delta @ features.T).max(axis=1)


def build_n_player(params, horizon, initial_states=None):
    """The heterogeneous N-firm market as a plain N-player game.

    The attached deviation hook gives the exact per-period reward gap to
    any group-averaged homogenization of the same market (transitions are
    shared by construction, so their gap is zero).
    """
    if params.coeffs is None:
        raise ValueError("build_n_player needs a coefficient table")
    coeffs = params.coeffs
    n = params.n_firms
    spaces = pricing_spaces(params, horizon)
    if initial_states is None:
        initial_states = np.zeros(n, dtype=np.int64)
    h_cap, s_cap = params.h_cap, params.s_cap
    lip = pricing_constants(params)

    def reward(t, i, states, actions):
        states = np.asarray(states)
        q_all, h_all = _decode_actions(actions, h_cap)
        price = clearing_price(q_all.mean(axis=-1), params)
        return _firm_reward(price, states[..., i], q_all[..., i],
                            h_all[..., i], coeffs[i])

    def transition(t, i, states, actions):
        states = np.asarray(states)
        q_all, h_all = _decode_actions(actions, h_cap)
        return _next_state_rows(states[..., i], q_all[..., i],
                                h_all[..., i], s_cap)

    def analytic_deviations(hatgame):
        if not isinstance(hatgame, MeanFieldTypeGame):
            raise ValueError("deviation hook expects a MeanFieldTypeGame")
        if hatgame.spaces != spaces or hatgame.n_players != n:
            raise ValueError("homogenized game does not match this market")
        part = hatgame.partition
        centers = np.stack([coeffs[part.members(k)].mean(axis=0)
                            for k in range(part.n_groups)])
        _check_group_oracle(hatgame, centers, params)
        devs = _deviation_table(coeffs, centers, part.assignment, params)
        eps_r = math.sqrt(float((devs ** 2).mean()))
        T = spaces.horizon
        return np.full(T + 1, eps_r), np.zeros(T)

    return NPlayerGame(
        spaces=spaces,
        n_players=n,
        initial_states=np.asarray(initial_states, dtype=np.int64),
        reward=reward,
        transition=transition,
        r_max=lip.rbar_max,
        analytic_deviations=analytic_deviations,
    )


def _check_group_oracle(hatgame, centers, params, n_probes=8):
    """Spot-verify that hatgame prices and costs match this market."""
    spaces = hatgame.spaces
    K = hatgame.n_groups
    rng = np.random.default_rng(0)
    raw = rng.random((n_probes, K, spaces.n_states, spaces.n_actions)) + 1e-3
    L = raw / raw.sum(axis=(2, 3), keepdims=True)
    s = rng.integers(0, spaces.n_states, size=n_probes)
    a = rng.integers(0, spaces.n_actions, size=n_probes)
    weights = hatgame.partition.weights
    q_grid = np.arange(spaces.n_actions) // (params.h_cap + 1)
    mean_q = np.einsum("k,bksa,a->b", weights, L, q_grid.astype(np.float64))
    price = clearing_price(mean_q, params)
    q, h = _decode_actions(a, params.h_cap)
    for k in range(K):
        got = np.asarray(hatgame.group_reward(0, k, s, a, L), dtype=np.float64)
        want = _firm_reward(price, s, q, h, centers[k])
        if np.max(np.abs(got - want)) > 1e-9:
            raise ValueError(
                "homogenized game does not use this market's group-mean "
                "cost structure; deviations have no closed form"
            )


def build_pricing_mpmfg(params, partition, horizon, initial_states=None):
    """Homogenized market: group game, its mean-field limit, and constants.

    Returns ``(mft, mpmfg, lip)``: the finite game of mean-field type with
    group-averaged costs, the limit game built on the same oracles, and
    the matching Lipschitz profile (per-group reward sensitivity
    proportional to the group's population share; flow-free transitions).
    """
    if params.coeffs is None:
        raise ValueError("build_pricing_mpmfg needs a coefficient table")
    if partition.n_players != params.n_firms:
        raise ValueError("partition does not match the coefficient table")
    coeffs = params.coeffs
    spaces = pricing_spaces(params, horizon)
    if initial_states is None:
        initial_states = np.zeros(params.n_firms, dtype=np.int64)
    h_cap, s_cap = params.h_cap, params.s_cap
    weights = partition.weights
    centers = np.stack([coeffs[partition.members(k)].mean(axis=0)
                        for k in range(partition.n_groups)])
    q_grid = (np.arange(spaces.n_actions) // (h_cap + 1)).astype(np.float64)

    def group_reward(t, k, s, a, L):
        L = np.asarray(L, dtype=np.float64)
        mean_q = np.einsum("j,...jsa,a->...", weights, L, q_grid)
        price = clearing_price(mean_q, params)
        q, h = _decode_actions(a, h_cap)
        return _firm_reward(price, np.asarray(s), q, h, centers[k])

    def group_transition(t, k, s, a, L):
        q, h = _decode_actions(a, h_cap)
        return _next_state_rows(np.asarray(s), q, h, s_cap)

    base = pricing_constants(params)
    lip_profile = LipschitzProfile(
        w_r=weights * base.w_r[0],
        w_p=np.zeros(partition.n_groups),
        rbar_max=base.rbar_max,
    )
    mft = MeanFieldTypeGame(
        spaces=spaces,
        partition=partition,
        group_reward=group_reward,
        group_transition=group_transition,
        initial_states=np.asarray(initial_states, dtype=np.int64),
        rbar_max=base.rbar_max,
    )
    return mft, build_mpmfg(mft), lip_profile


def two_type_coefficients(n_players, alpha, c2_pair, shared):
    """Coefficient table for a two-type population.

    The first round(alpha·N) firms carry ``c2_pair[0]``, the rest
    ``c2_pair[1]``; the other four coefficients are shared.
    """
    n = int(n_players)
    alpha = float(alpha)
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie strictly inside (0, 1)")
    shared = [float(v) for v in shared]
    if len(shared) != 4:
        raise ValueError("shared must list (c0, c1, c3, c4)")
    n1 = int(round(alpha * n))
    if not 1 <= n1 <= n - 1:
        raise ValueError(
            f"alpha={alpha} leaves an empty type at n_players={n}"
        )
    c0, c1, c3, c4 = shared
    coeffs = np.empty((n, _COST_TERMS))
    coeffs[:] = (c0, c1, 0.0, c3, c4)
    coeffs[:n1, 2] = float(c2_pair[0])
    coeffs[n1:, 2] = float(c2_pair[1])
    return coeffs


def theta_lipschitz(params):
    """Reward sensitivity to the cost vector, and the cost-ball radius.

    The reward is linear in (c0..c4) with gradient (-q, -q², -(h+e), -e, -s)
    where e = max(q-s, 0), so the worst-case sensitivity is the largest
    gradient norm over the (s, q, h) grid.  Returns (w_d, d_max) for a
    :class:`mfghom.bounds.LipschitzProfile`.
    """
    S, Q, H = params.s_cap, params.q_cap, params.h_cap
    s, q, h = np.meshgrid(np.arange(S + 1), np.arange(Q + 1), np.arange(H + 1),
                          indexing="ij")
    e = np.maximum(q - s, 0)
    grad_sq = q ** 2 + q ** 4 + (h + e) ** 2 + e ** 2 + s ** 2
    w_d = math.sqrt(float(grad_sq.max()))
    return w_d, math.sqrt(_COST_TERMS) * params.c_max


def heter_two_type_closed_form(params, horizon, alpha, c2_pair):
    """Heterogeneity error of the one-group model of a two-type market."""
    gap = abs(float(c2_pair[0]) - float(c2_pair[1]))
    return (2.0 * (params.h_cap + params.q_cap) * (int(horizon) + 1)
            * math.sqrt(alpha * (1.0 - alpha)) * gap)


def two_type_study(alpha, c2_pair, params, n_grid, horizon):
    """Compare one-group and two-group models across population sizes.

    For each N: the mean-field error of the single representative group
    (eps_mf_1), of the exact two-group split at sizes alpha·N/(1-alpha)·N
    (eps_mf_2), the one-group heterogeneity penalty (eps_heter_1; the
    two-group model has none), and the resulting totals.  Also reports the
    conservative threshold N* and the first grid point where the two-group
    model's total is already smaller.
    """
    alpha = float(alpha)
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie strictly inside (0, 1)")
    n_grid = sorted(float(v) for v in n_grid)
    if not n_grid:
        raise ValueError("n_grid must be non-empty")
    min_share = min(alpha, 1.0 - alpha)
    if n_grid[0] * min_share < 1.0:
        raise ValueError(
            f"smallest N={n_grid[0]:g} leaves a group below one player "
            f"at alpha={alpha}"
        )
    spaces = pricing_spaces(params, horizon)
    lip1 = pricing_constants(params)
    lip2 = pricing_constants(params, alpha=alpha)
    heter1 = heter_two_type_closed_form(params, horizon, alpha, c2_pair)
    rows = []
    for n in n_grid:
        mf1 = eps_mf_theorem(spaces, lip1, [n]).generic
        mf2 = eps_mf_theorem(spaces, lip2, [alpha * n, (1.0 - alpha) * n]).generic
        rows.append({
            "n": n,
            "eps_mf_1": mf1,
            "eps_mf_2": mf2,
            "eps_heter_1": heter1,
            "eps_heter_2": 0.0,
            "total_1": mf1 + heter1,
            "total_2": mf2,
        })
    crossing = None
    for row in rows:
        if row["total_2"] < row["total_1"]:
            crossing = row["n"]
            break
    try:
        n_star = representative_threshold(params, alpha, c2_pair, horizon)
        n_star_note = ""
    except ValueError as exc:
        # the comparison table stands on its own; only the closed-form
        # threshold needs the extra parameter assumptions
        n_star, n_star_note = None, str(exc)
    return {
        "alpha": alpha,
        "c2_pair": [float(c2_pair[0]), float(c2_pair[1])],
        "ratio_limit": math.sqrt(alpha) + math.sqrt(1.0 - alpha),
        "n_star": n_star,
        "n_star_note": n_star_note,
        "crossing": crossing,
        "rows": rows,
    }


def write_two_type_csv(study, path):
    header = ["n", "eps_mf_1", "eps_mf_2", "eps_heter_1", "eps_heter_2",
              "total_1", "total_2"]
    rows = [[repr(float(row[c])) for c in header] for row in study["rows"]]
    write_csv(path, header, rows)


@dataclass(frozen=True)
class Scenario:
    """Validated scenario file: market parameters plus run configuration."""

    name: str
    params: PricingParams
    horizon: int
    initial_states: np.ndarray
    partition: Optional[GroupPartition]
    two_type: Optional[dict]

    @property
    def n_players(self):
        return self.params.n_firms


def _require(cfg, key, kind):
    if key not in cfg:
        raise ValueError(f"scenario is missing required field '{key}'")
    value = cfg[key]
    if kind is float:
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise ValueError(f"scenario field '{key}' must be a number")
        return float(value)
    if kind is int:
        if not isinstance(value, int) or isinstance(value, bool):
            raise ValueError(f"scenario field '{key}' must be an integer")
        return value
    if not isinstance(value, kind):
        raise ValueError(f"scenario field '{key}' has the wrong type")
    return value


def load_scenario(path):
    """Parse and validate a scenario JSON file.

    Required fields: kind="pricing", caps {s,q,h}, q0, d, sigma, c_max,
    horizon, n_players, and either a full "coefficients" table (N rows of
    5) or a "two_type" block {alpha, c2_pair, shared}.  Optional:
    "name", "initial_states" (N ints), "partition" (N group labels).
    """
    with open(path, "r", encoding="utf-8") as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise ValueError("scenario file must hold a JSON object")
    if cfg.get("kind") != "pricing":
        raise ValueError("scenario 'kind' must be 'pricing'")
    caps = _require(cfg, "caps", dict)
    for key in ("s", "q", "h"):
        if key not in caps or not isinstance(caps[key], int) or caps[key] < 1:
            raise ValueError(f"caps.{key} must be a positive integer")
    horizon = _require(cfg, "horizon", int)
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    n_players = _require(cfg, "n_players", int)
    if n_players < 1:
        raise ValueError("n_players must be >= 1")

    two_type = cfg.get("two_type")
    if ("coefficients" in cfg) == (two_type is not None):
        raise ValueError(
            "scenario must provide exactly one of 'coefficients' or 'two_type'"
        )
    if two_type is not None:
        if not isinstance(two_type, dict):
            raise ValueError("two_type must be an object")
        for key in ("alpha", "c2_pair", "shared"):
            if key not in two_type:
                raise ValueError(f"two_type is missing '{key}'")
        coeffs = two_type_coefficients(
            n_players, two_type["alpha"], two_type["c2_pair"],
            two_type["shared"],
        )
    else:
        coeffs = np.asarray(cfg["coefficients"], dtype=np.float64)
        if coeffs.shape != (n_players, _COST_TERMS):
            raise ValueError("coefficients must have shape (n_players, 5)")

    params = PricingParams(
        s_cap=caps["s"],
        q_cap=caps["q"],
        h_cap=caps["h"],
        q0=_require(cfg, "q0", float),
        d=_require(cfg, "d", float),
        sigma=_require(cfg, "sigma", float),
        c_max=_require(cfg, "c_max", float),
        coeffs=coeffs,
    )

    init = cfg.get("initial_states")
    if init is None:
        initial_states = np.zeros(n_players, dtype=np.int64)
    else:
        initial_states = np.asarray(init, dtype=np.int64)
        if initial_states.shape != (n_players,):
            raise ValueError("initial_states must list one state per player")
        if initial_states.min() < 0 or initial_states.max() > params.s_cap:
            raise ValueError("initial_states out of the inventory range")

    partition = None
    if cfg.get("partition") is not None:
        assignment = np.asarray(cfg["partition"], dtype=np.int64)
        if assignment.shape != (n_players,):
            raise ValueError("partition must list one group label per player")
        partition = GroupPartition(
            assignment=assignment, n_groups=int(assignment.max()) + 1
        )

    name = cfg.get("name", "scenario")
    if not isinstance(name, str) or not name:
        raise ValueError("name must be a non-empty string")
    return Scenario(
        name=name,
        params=params,
        horizon=horizon,
        initial_states=initial_states,
        partition=partition,
        two_type=two_type,
    )
