"""Command-line front end over the full homogenization pipeline.

``mfghom`` exposes five subcommands: ``solve`` (fictitious play on a
scenario's mean-field game), ``certify`` (partition, solve, expand, and
bound — the end-to-end equilibrium certificate), ``sweep`` (error
components across a parameter grid), ``partition`` (population grouping
on its own), and ``pricing-demo`` (a self-contained end-to-end run).

Every command is a pure function of (scenario file, flags, seed):
rerunning writes byte-identical artifacts, with the single exception of
the wall-clock entry inside ``manifest.json``.  Exit codes: 0 success,
2 validation error, 3 resource-cap refusal.

Scenario files are JSON.  ``kind: "pricing"`` is the heterogeneous
inventory-pricing market (see :mod:`mfghom.pricing_scenario`); ``kind:
"tabular"`` is a plain mean-field-type game given by explicit reward and
transition tables, useful for small exact checks.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from ._util import CapExceeded, dump_json, write_csv  # noqa: E402
from .bounds import (LipschitzProfile, assemble, eps_heter_generic,  # noqa: E402
                     eps_heter_parametric, eps_mf_partition_corollary,
                     eps_mf_theorem, pricing_constants, write_bound_curves_csv)
from .game_model import (GroupPartition, MeanFieldTypeGame, Spaces,  # noqa: E402
                         StrategyProfile, build_mpmfg, expand_profile)
from .mfg_solver import (report_to_dict, solve_fictitious_play,  # noqa: E402
                         write_exploitability_csv)
from .nplayer_eval import joint_state_cap, nashconv  # noqa: E402
from .partition import (kmeans, micp_objective, solve_exact, solve_local,  # noqa: E402
                        suggest_k)
from .pricing_scenario import (build_n_player, build_pricing_mpmfg,  # noqa: E402
                               heter_two_type_closed_form, load_scenario,
                               pricing_spaces, theta_lipschitz,
                               two_type_study, write_two_type_csv)

__all__ = ["main", "RunManifest"]

_TOOL = "mfghom"
_PNG_META = {"Software": _TOOL}
_DPI = 120
# certify only attempts the exact joint-state NashConv when the enumeration
# work S^N * A^N * (T+1) * N stays under this budget (the joint-state cap
# alone does not count action profiles)
_NASHCONV_WORK_BUDGET = 5e7


class RunManifest:
    """Record of one CLI invocation and every file it wrote."""

    def __init__(self, command, scenario, seed, threads, overrides, out_dir,
                 outputs, wall_clock_s):
        from . import __version__

        self.tool = _TOOL
        self.version = __version__
        self.command = command
        self.scenario = scenario
        self.seed = seed
        self.threads = threads
        self.overrides = overrides
        self.out_dir = out_dir
        self.outputs = sorted(outputs)
        self.wall_clock_s = wall_clock_s

    def to_dict(self):
        return {
            "tool": self.tool,
            "version": self.version,
            "command": self.command,
            "scenario": self.scenario,
            "seed": self.seed,
            "threads": self.threads,
            "overrides": self.overrides,
            "out_dir": self.out_dir,
            "outputs": self.outputs,
            "wall_clock_s": self.wall_clock_s,
        }


# --------------------------------------------------------------------------
# scenario loading


class TabularScenario:
    """A mean-field-type game spelled out as explicit tables."""

    def __init__(self, name, game, lip):
        self.name = name
        self.game = game
        self.lip = lip


def _tabular_from_cfg(cfg):
    for key in ("n_states", "n_actions", "horizon", "partition", "reward"):
        if key not in cfg:
            raise ValueError(f"tabular scenario is missing '{key}'")
    S, A, T = cfg["n_states"], cfg["n_actions"], cfg["horizon"]
    spaces = Spaces(n_states=S, n_actions=A, horizon=T)
    assignment = np.asarray(cfg["partition"], dtype=np.int64)
    if assignment.ndim != 1 or assignment.size < 1:
        raise ValueError("partition must be a non-empty list of group labels")
    partition = GroupPartition(
        assignment=assignment, n_groups=int(assignment.max()) + 1
    )
    K = partition.n_groups
    reward = np.asarray(cfg["reward"], dtype=np.float64)
    if reward.shape != (T + 1, K, S, A):
        raise ValueError(
            f"reward table must have shape {(T + 1, K, S, A)}, "
            f"got {reward.shape}"
        )
    if "transition" in cfg and cfg["transition"] is not None:
        trans = np.asarray(cfg["transition"], dtype=np.float64)
        if trans.shape != (max(T, 1), K, S, A, S):
            raise ValueError(
                f"transition table must have shape {(max(T, 1), K, S, A, S)}"
            )
    else:
        trans = np.broadcast_to(
            np.eye(S)[None, None, :, None, :], (max(T, 1), K, S, A, S)
        ).copy()
    init = cfg.get("initial_states")
    if init is None:
        init = np.zeros(partition.n_players, dtype=np.int64)
    else:
        init = np.asarray(init, dtype=np.int64)

    def group_reward(t, k, s, a, L):
        val = reward[t, k][np.asarray(s), np.asarray(a)]
        shape = np.broadcast_shapes(np.shape(val), np.shape(L)[:-3])
        return np.broadcast_to(val, shape)

    def group_transition(t, k, s, a, L):
        rows = trans[min(t, trans.shape[0] - 1), k][np.asarray(s), np.asarray(a)]
        shape = np.broadcast_shapes(rows.shape[:-1], np.shape(L)[:-3])
        return np.broadcast_to(rows, shape + (S,))

    rbar = cfg.get("rbar_max")
    if rbar is None:
        rbar = max(float(np.abs(reward).max()), 1.0)
    game = MeanFieldTypeGame(
        spaces=spaces,
        partition=partition,
        group_reward=group_reward,
        group_transition=group_transition,
        initial_states=init,
        rbar_max=float(rbar),
    )
    lip = LipschitzProfile(
        w_r=np.zeros(K), w_p=np.zeros(K), rbar_max=float(rbar)
    )
    name = cfg.get("name", "scenario")
    return TabularScenario(name=name, game=game, lip=lip)


def _load_any_scenario(path):
    """Returns ("pricing", Scenario) or ("tabular", TabularScenario)."""
    with open(path, "r", encoding="utf-8") as fh:
        cfg = json.load(fh)
    kind = cfg.get("kind") if isinstance(cfg, dict) else None
    if kind == "pricing":
        return "pricing", load_scenario(path)
    if kind == "tabular":
        return "tabular", _tabular_from_cfg(cfg)
    raise ValueError("scenario 'kind' must be 'pricing' or 'tabular'")


# --------------------------------------------------------------------------
# plotting


def _save_fig(fig, path):
    fig.savefig(path, dpi=_DPI, metadata=_PNG_META)
    plt.close(fig)


def _plot_exploitability(history, path):
    fig, ax = plt.subplots(figsize=(6, 4))
    iters = np.arange(1, len(history) + 1)
    positive = np.asarray(history) > 0
    if positive.all():
        ax.semilogy(iters, history, marker=".", lw=1)
    else:
        ax.plot(iters, history, marker=".", lw=1)
    ax.set_xlabel("iteration")
    ax.set_ylabel("weighted exploitability")
    ax.set_title("fictitious play")
    fig.tight_layout()
    _save_fig(fig, path)


def _plot_components(parts, path):
    fig, ax = plt.subplots(figsize=(6, 4))
    names = list(parts)
    vals = [parts[k] for k in names]
    ax.bar(names, vals, color=["#4c72b0", "#dd8452", "#55a868", "#c44e52"][: len(names)])
    ax.set_ylabel("error")
    ax.set_title("certificate components")
    fig.tight_layout()
    _save_fig(fig, path)


def _plot_sweep(vary, rows, path):
    fig, ax = plt.subplots(figsize=(6, 4))
    xs = [row[0] for row in rows]
    if vary in ("N",):
        ax.loglog(xs, [r[1] for r in rows], marker="o", label="total, one group")
        ax.loglog(xs, [r[2] for r in rows], marker="s", label="total, two groups")
    elif vary in ("alpha", "c2gap"):
        ax.plot(xs, [r[1] for r in rows], marker="o", label="total, one group")
        ax.plot(xs, [r[2] for r in rows], marker="s", label="total, two groups")
    else:  # K
        ax.plot(xs, [r[1] for r in rows], marker="o", label="mean within-group SSE")
        ax.plot(xs, [r[2] for r in rows], marker="s", label="certified total")
        ax.set_yscale("log")
    ax.set_xlabel(vary)
    ax.legend()
    ax.set_title(f"sweep over {vary}")
    fig.tight_layout()
    _save_fig(fig, path)


def _plot_partition_curve(ks, sse, micp, path):
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 4))
    ax1.plot(ks, sse, marker="o")
    ax1.set_xlabel("groups")
    ax1.set_ylabel("mean within-group SSE")
    ax2.plot(ks, micp, marker="s", color="#dd8452")
    ax2.set_xlabel("groups")
    ax2.set_ylabel("certified objective")
    fig.tight_layout()
    _save_fig(fig, path)


# --------------------------------------------------------------------------
# commands


def _pricing_partition(scn, args):
    """Resolve the player partition for a pricing scenario per the flags."""
    thetas = scn.params.coeffs
    n = scn.n_players
    source = args.partition_source
    if source == "file":
        if args.partition_file is not None:
            with open(args.partition_file, "r", encoding="utf-8") as fh:
                labels = json.load(fh)
            assignment = np.asarray(labels, dtype=np.int64)
            if assignment.shape != (n,):
                raise ValueError(
                    "partition file must list one group label per player"
                )
        elif scn.partition is not None:
            return scn.partition
        else:
            raise ValueError(
                "--partition-source file needs --partition-file or a "
                "'partition' field in the scenario"
            )
        return GroupPartition(
            assignment=assignment, n_groups=int(assignment.max()) + 1
        )
    k = args.k if args.k is not None else suggest_k(n)
    if source == "kmeans":
        return kmeans(thetas, k, seed=args.seed).partition
    spaces = pricing_spaces(scn.params, scn.horizon)
    w_d, d_max = theta_lipschitz(scn.params)
    base = pricing_constants(scn.params)
    lip_part = LipschitzProfile(
        w_r=base.w_r, w_p=base.w_p, rbar_max=base.rbar_max,
        w_d=w_d, d_max=d_max,
    )
    if source == "exact":
        return solve_exact(thetas, k, lip_part, spaces, n_players=n).partition
    return solve_local(
        thetas, k, lip_part, spaces, n_players=n, seed=args.seed
    ).partition


def _run_solve(args, out):
    kind, scn = _load_any_scenario(args.scenario)
    if kind == "pricing":
        partition = scn.partition
        if partition is None:
            partition = GroupPartition(
                assignment=np.zeros(scn.n_players, dtype=np.int64), n_groups=1
            )
        _, mpmfg, _ = build_pricing_mpmfg(
            scn.params, partition, scn.horizon, scn.initial_states
        )
    else:
        mpmfg = build_mpmfg(scn.game)
    report = solve_fictitious_play(
        mpmfg, args.iters, tol=args.tol, threads=args.threads
    )
    payload = {"scenario_name": scn.name, **report_to_dict(report)}
    dump_json(payload, out / "solve_report.json")
    write_exploitability_csv(report, out / "exploitability.csv")
    _plot_exploitability(report.expl_history, out / "exploitability.png")
    print(
        f"solved: weighted exploitability {report.weighted_expl:.6g} "
        f"after {report.iterations} iterations"
    )
    return ["solve_report.json", "exploitability.csv", "exploitability.png"]


def _nashconv_feasible(game):
    spaces, n = game.spaces, game.n_players
    work = (
        float(spaces.n_states) ** n * float(spaces.n_actions) ** n
        * (spaces.horizon + 1) * n
    )
    return (
        spaces.n_states ** n <= joint_state_cap()
        and work <= _NASHCONV_WORK_BUDGET
    )


def _run_certify(args, out):
    kind, scn = _load_any_scenario(args.scenario)
    if kind == "pricing":
        partition = _pricing_partition(scn, args)
        mft, mpmfg, lip = build_pricing_mpmfg(
            scn.params, partition, scn.horizon, scn.initial_states
        )
        nplayer = build_n_player(scn.params, scn.horizon, scn.initial_states)
        heter = eps_heter_generic(
            nplayer, mft, mode=args.heter, seed=args.seed
        )
        nashconv_game = nplayer
    else:
        mft, lip = scn.game, scn.lip
        partition = mft.partition
        mpmfg = build_mpmfg(mft)
        heter = None
        nashconv_game = mft
    report = solve_fictitious_play(
        mpmfg, args.iters, tol=args.tol, threads=args.threads
    )
    bound = assemble(
        mft.spaces,
        lip,
        partition.group_sizes,
        report.weighted_expl,
        heter=heter,
        provenance=args.provenance,
    )
    certificate = {
        "eps_solver": bound.eps_solver,
        "eps_mf": bound.eps_mf,
        "eps_heter": bound.eps_heter,
        "total": bound.total,
        "provenance": bound.provenance,
        "heter_sampled": bound.heter_sampled,
        "group_sizes": [int(v) for v in partition.group_sizes],
    }
    exact = None
    if args.nashconv != "skip":
        feasible = _nashconv_feasible(nashconv_game) or args.nashconv == "force"
        if feasible:
            try:
                if kind == "pricing":
                    profile = expand_profile(report.profile, partition)
                    exact = nashconv(nashconv_game, profile,
                                     threads=args.threads)
                else:
                    exact = nashconv(nashconv_game, report.profile,
                                     threads=args.threads)
            except CapExceeded as exc:
                if args.nashconv == "force":
                    raise
                print(f"exact NashConv skipped: {exc}", file=sys.stderr)
        else:
            print(
                "exact NashConv skipped: joint enumeration over "
                f"{nashconv_game.spaces.n_states}^{nashconv_game.n_players} "
                "states exceeds the work budget (use --nashconv force)",
                file=sys.stderr,
            )
    if exact is not None:
        certificate["nashconv_exact"] = exact.nashconv
    dump_json(certificate, out / "certificate.json")
    write_bound_curves_csv(bound, out / "bound_curves.csv")
    parts = {
        "eps_solver": bound.eps_solver,
        "eps_mf": bound.eps_mf,
        "eps_heter": bound.eps_heter,
        "total": bound.total,
    }
    _plot_components(parts, out / "certificate_components.png")
    msg = (
        f"certified: eps_solver {bound.eps_solver:.6g} + eps_mf "
        f"{bound.eps_mf:.6g} + eps_heter {bound.eps_heter:.6g} = "
        f"{bound.total:.6g}"
    )
    if exact is not None:
        msg += f" (exact NashConv {exact.nashconv:.6g})"
    print(msg)
    return ["certificate.json", "bound_curves.csv", "certificate_components.png"]


def _parse_grid(text):
    try:
        grid = [float(v) for v in text.split(",") if v.strip() != ""]
    except ValueError:
        raise ValueError(f"could not parse --grid {text!r} as numbers")
    if not grid:
        raise ValueError("--grid must list at least one value")
    return grid


def _require_two_type(scn):
    if scn.two_type is None:
        raise ValueError("this sweep needs a scenario with a 'two_type' block")
    return float(scn.two_type["alpha"]), [float(v) for v in scn.two_type["c2_pair"]]


def _run_sweep(args, out):
    kind, scn = _load_any_scenario(args.scenario)
    if kind != "pricing":
        raise ValueError("sweep works on pricing scenarios")
    grid = _parse_grid(args.grid)
    params, horizon = scn.params, scn.horizon
    spaces = pricing_spaces(params, horizon)
    lip1 = pricing_constants(params)
    rows, plot_rows = [], []
    if args.vary == "N":
        alpha, c2_pair = _require_two_type(scn)
        study = two_type_study(alpha, c2_pair, params, grid, horizon)
        write_two_type_csv(study, out / "sweep.csv")
        plot_rows = [
            (row["n"], row["total_1"], row["total_2"]) for row in study["rows"]
        ]
    elif args.vary == "alpha":
        _, c2_pair = _require_two_type(scn)
        n = float(scn.n_players)
        mf1 = eps_mf_theorem(spaces, lip1, [n]).generic
        header = ["alpha", "eps_mf_1", "eps_mf_2", "eps_heter_1",
                  "total_1", "total_2"]
        for a in grid:
            if not 0.0 < a < 1.0:
                raise ValueError("alpha grid values must lie inside (0, 1)")
            if min(a, 1.0 - a) * n < 1.0:
                raise ValueError(
                    f"alpha={a:g} leaves a group below one player at "
                    f"n_players={n:g}"
                )
            lip2 = pricing_constants(params, alpha=a)
            mf2 = eps_mf_theorem(
                spaces, lip2, [a * n, (1.0 - a) * n]
            ).generic
            h1 = heter_two_type_closed_form(params, horizon, a, c2_pair)
            rows.append([a, mf1, mf2, h1, mf1 + h1, mf2])
            plot_rows.append((a, mf1 + h1, mf2))
        _write_sweep_csv(out / "sweep.csv", header, rows)
    elif args.vary == "c2gap":
        alpha, c2_pair = _require_two_type(scn)
        center = 0.5 * (c2_pair[0] + c2_pair[1])
        n = float(scn.n_players)
        mf1 = eps_mf_theorem(spaces, lip1, [n]).generic
        lip2 = pricing_constants(params, alpha=alpha)
        mf2 = eps_mf_theorem(
            spaces, lip2, [alpha * n, (1.0 - alpha) * n]
        ).generic
        header = ["c2gap", "c2_lo", "c2_hi", "eps_mf_1", "eps_mf_2",
                  "eps_heter_1", "total_1", "total_2"]
        for g in grid:
            lo, hi = center - g / 2.0, center + g / 2.0
            if g <= 0 or lo < 0 or hi > params.c_max:
                raise ValueError(
                    f"c2gap {g:g} leaves the pair ({lo:g}, {hi:g}) outside "
                    f"[0, c_max={params.c_max:g}]"
                )
            h1 = heter_two_type_closed_form(params, horizon, alpha, (lo, hi))
            rows.append([g, lo, hi, mf1, mf2, h1, mf1 + h1, mf2])
            plot_rows.append((g, mf1 + h1, mf2))
        _write_sweep_csv(out / "sweep.csv", header, rows)
    else:  # K
        thetas = params.coeffs
        if thetas is None:
            raise ValueError("K sweep needs a scenario coefficient table")
        n = scn.n_players
        w_d, d_max = theta_lipschitz(params)
        lip_theta = LipschitzProfile(
            w_r=lip1.w_r, w_p=lip1.w_p, rbar_max=lip1.rbar_max,
            w_d=w_d, d_max=d_max,
        )
        header = ["k", "mean_sse", "eps_heter", "eps_mf", "total"]
        for g in grid:
            k = int(g)
            if k < 1 or k > n or k != g:
                raise ValueError("K grid values must be integers in [1, N]")
            sol = kmeans(thetas, k, seed=args.seed)
            h = eps_heter_parametric(thetas, sol.partition, lip_theta, horizon)
            mf = eps_mf_partition_corollary(
                spaces, lip1, sol.partition.group_sizes
            )
            rows.append([k, sol.objective, h, mf, h + mf])
            plot_rows.append((k, sol.objective, h + mf))
        _write_sweep_csv(out / "sweep.csv", header, rows)
    _plot_sweep(args.vary, plot_rows, out / "sweep.png")
    print(f"swept {args.vary} over {len(plot_rows)} grid points")
    return ["sweep.csv", "sweep.png"]


def _write_sweep_csv(path, header, rows):
    write_csv(
        path, header,
        [[repr(float(v)) if isinstance(v, float) else v for v in row]
         for row in rows],
    )


def _run_partition(args, out):
    kind, scn = _load_any_scenario(args.scenario)
    if kind != "pricing":
        raise ValueError("partition works on pricing scenarios")
    thetas = scn.params.coeffs
    n = scn.n_players
    k_max = args.k_max if args.k_max is not None else suggest_k(n)
    if not 1 <= k_max <= n:
        raise ValueError(f"--k-max must lie in [1, {n}]")
    spaces = pricing_spaces(scn.params, scn.horizon)
    base = pricing_constants(scn.params)
    w_d, d_max = theta_lipschitz(scn.params)
    lip_part = LipschitzProfile(
        w_r=base.w_r, w_p=base.w_p, rbar_max=base.rbar_max,
        w_d=w_d, d_max=d_max,
    )
    if args.method == "kmeans":
        sol = kmeans(thetas, k_max, seed=args.seed)
    elif args.method == "exact":
        sol = solve_exact(thetas, k_max, lip_part, spaces, n_players=n)
    else:
        sol = solve_local(thetas, k_max, lip_part, spaces, n_players=n,
                          seed=args.seed)
    payload = {"suggested_k": suggest_k(n), **sol.to_dict()}
    dump_json(payload, out / "partition.json")
    ks, sses, micps = [], [], []
    for k in range(1, k_max + 1):
        curve_sol = kmeans(thetas, k, seed=args.seed)
        ks.append(k)
        sses.append(curve_sol.objective)
        micps.append(
            micp_objective(curve_sol.partition, thetas, lip_part, spaces,
                           n_players=n)
        )
    _write_sweep_csv(
        out / "partition_curve.csv",
        ["k", "kmeans_mean_sse", "certified_objective"],
        [[k, s, m] for k, s, m in zip(ks, sses, micps)],
    )
    _plot_partition_curve(ks, sses, micps, out / "partition_curve.png")
    print(
        f"partitioned {n} players into {sol.partition.n_groups} groups "
        f"({args.method}); objective {sol.objective:.6g}"
    )
    return ["partition.json", "partition_curve.csv", "partition_curve.png"]


_DEMO_CFG = {
    "kind": "pricing",
    "name": "two-type-demo",
    "caps": {"s": 2, "q": 1, "h": 1},
    "q0": 1.0,
    "d": 2.0,
    "sigma": 0.5,
    "c_max": 1.0,
    "horizon": 3,
    "n_players": 4,
    "two_type": {
        "alpha": 0.25,
        "c2_pair": [0.1, 0.6],
        "shared": [0.2, 0.1, 0.1, 0.05],
    },
}


def _run_pricing_demo(args, out):
    scenario_path = out / "demo_scenario.json"
    dump_json(_DEMO_CFG, scenario_path)
    outputs = ["demo_scenario.json"]

    ns = argparse.Namespace(
        scenario=str(scenario_path), seed=args.seed, threads=args.threads,
        iters=60, tol=0.0,
    )
    outputs += _run_solve(ns, out)

    ns = argparse.Namespace(
        scenario=str(scenario_path), seed=args.seed, threads=args.threads,
        iters=60, tol=0.0, partition_source="kmeans", k=2,
        partition_file=None, heter="analytic",
        provenance="explicit_appendix", nashconv="auto",
    )
    outputs += _run_certify(ns, out)

    ns = argparse.Namespace(
        scenario=str(scenario_path), seed=args.seed, threads=args.threads,
        vary="N", grid="100,1000,10000,100000,1000000,10000000",
    )
    outputs += _run_sweep(ns, out)
    return outputs


# --------------------------------------------------------------------------
# argument parsing


def _build_parser():
    from . import __version__

    parser = argparse.ArgumentParser(
        prog=_TOOL,
        description=(
            "homogenize heterogeneous dynamic games, solve the mean-field "
            "limit, and certify the expanded policy"
        ),
    )
    parser.add_argument(
        "--version", action="version", version=f"{_TOOL} {__version__}"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, scenario=True):
        if scenario:
            p.add_argument("--scenario", required=True,
                           help="scenario JSON file")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--threads", type=int, default=1)

    p = sub.add_parser("solve", help="fictitious play on the scenario's MFG")
    common(p)
    p.add_argument("--iters", type=int, default=200)
    p.add_argument("--tol", type=float, default=0.0)
    p.set_defaults(func=_run_solve)

    p = sub.add_parser(
        "certify",
        help="partition, solve, expand, and bound: the full certificate",
    )
    common(p)
    p.add_argument("--iters", type=int, default=200)
    p.add_argument("--tol", type=float, default=0.0)
    p.add_argument("--partition-source", default="kmeans",
                   choices=["kmeans", "exact", "local", "file"])
    p.add_argument("--k", type=int, default=None,
                   help="group count (kmeans) or cap (exact/local); "
                        "default cube-root rule")
    p.add_argument("--partition-file", default=None,
                   help="JSON list of group labels (with --partition-source file)")
    p.add_argument("--heter", default="analytic",
                   choices=["analytic", "sampled"],
                   help="sampled gives a flagged lower bound, not a certificate")
    p.add_argument("--provenance", default="explicit_appendix",
                   choices=["explicit_appendix", "theorem_generic"])
    p.add_argument("--nashconv", default="auto",
                   choices=["auto", "force", "skip"],
                   help="exact joint-state NashConv of the expanded policy")
    p.set_defaults(func=_run_certify)

    p = sub.add_parser("sweep", help="error components across a grid")
    common(p)
    p.add_argument("--vary", required=True,
                   choices=["N", "K", "alpha", "c2gap"])
    p.add_argument("--grid", required=True,
                   help="comma-separated grid values")
    p.set_defaults(func=_run_sweep)

    p = sub.add_parser("partition", help="population grouping on its own")
    common(p)
    p.add_argument("--k-max", type=int, default=None)
    p.add_argument("--method", default="local",
                   choices=["kmeans", "exact", "local"])
    p.set_defaults(func=_run_partition)

    p = sub.add_parser("pricing-demo",
                       help="self-contained two-type market end to end")
    common(p, scenario=False)
    p.set_defaults(func=_run_pricing_demo)
    return parser


_MANIFEST_SKIP = {"func", "command", "scenario", "out", "seed", "threads"}


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    out = Path(args.out)
    started = time.monotonic()
    try:
        out.mkdir(parents=True, exist_ok=True)
        outputs = args.func(args, out)
        manifest = RunManifest(
            command=args.command,
            scenario=getattr(args, "scenario", None),
            seed=args.seed,
            threads=args.threads,
            overrides={
                k: v for k, v in sorted(vars(args).items())
                if k not in _MANIFEST_SKIP
            },
            out_dir=str(out),
            outputs=outputs,
            wall_clock_s=round(time.monotonic() - started, 3),
        )
        dump_json(manifest.to_dict(), out / "manifest.json")
    except CapExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {len(outputs) + 1} files to {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
