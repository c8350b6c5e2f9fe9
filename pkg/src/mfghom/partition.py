"""Grouping players to minimize the certified approximation error.

Two regimes: plain K-means when the population is large (the mean-field
term is negligible and only within-group parameter variance matters), and
the full combined objective — heterogeneity plus size-dependent mean-field
term — solved exactly by set-partition enumeration at small N and by
multi-start local search beyond.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._util import CapExceeded
from .bounds import c_theorem_scalar, eps_mf_partition_micp
from .game_model import GroupPartition

__all__ = [
    "PartitionSolution",
    "kmeans",
    "micp_objective",
    "solve_exact",
    "solve_local",
    "suggest_k",
]

METHODS = ("kmeans", "exact_enum", "local_search")
EXACT_ENUM_CAP = 12
_IMPROVE_TOL = 1e-12


def _as_points(thetas):
    th = np.asarray(thetas, dtype=np.float64)
    if th.ndim == 1:
        th = th[:, None]
    if th.ndim != 2 or th.shape[0] < 1:
        raise ValueError("thetas must be an (n_players, d) array")
    if not np.all(np.isfinite(th)):
        raise ValueError("thetas must be finite")
    return th


def _canonical_relabel(assignment):
    """Relabel groups in order of first appearance, dropping empty labels."""
    assignment = np.asarray(assignment, dtype=np.int64)
    mapping = {}
    out = np.empty_like(assignment)
    for i, g in enumerate(assignment):
        if g not in mapping:
            mapping[g] = len(mapping)
        out[i] = mapping[g]
    return out, len(mapping)


def _group_stats(th, assignment, n_groups):
    """Per-group counts, coordinate sums, and within-group squared error."""
    counts = np.bincount(assignment, minlength=n_groups).astype(np.float64)
    sums = np.zeros((n_groups, th.shape[1]))
    np.add.at(sums, assignment, th)
    sse = 0.0
    for k in range(n_groups):
        members = np.flatnonzero(assignment == k)
        if members.size:
            center = sums[k] / members.size
            sse += float(((th[members] - center) ** 2).sum())
    return counts, sums, sse


@dataclass(frozen=True)
class PartitionSolution:
    """A grouping together with the objective it was selected under.

    For ``method='kmeans'`` the objective is the mean within-group squared
    distance (the large-population criterion); the combined methods carry
    the heterogeneity + mean-field split explicitly.  ``centroids`` always
    holds the group parameter means.
    """

    partition: GroupPartition
    centroids: np.ndarray
    objective: float
    heter_term: float
    mf_term: float
    method: str

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        if self.centroids.ndim != 2 or self.centroids.shape[0] != self.partition.n_groups:
            raise ValueError("centroids must be (n_groups, d)")
        for name in ("objective", "heter_term", "mf_term"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and >= 0")
        gap = abs(self.objective - (self.heter_term + self.mf_term))
        if gap > 1e-12 * max(1.0, abs(self.objective)):
            raise ValueError("objective must equal heter_term + mf_term")

    def to_dict(self):
        return {
            "method": self.method,
            "n_groups": self.partition.n_groups,
            "assignment": [int(g) for g in self.partition.assignment],
            "group_sizes": [int(n) for n in self.partition.group_sizes],
            "centroids": [[float(v) for v in row] for row in self.centroids],
            "objective": self.objective,
            "heter_term": self.heter_term,
            "mf_term": self.mf_term,
        }


def _finish_solution(th, assignment, method, objective, heter, mf):
    labels, k = _canonical_relabel(assignment)
    part = GroupPartition(assignment=labels, n_groups=k)
    centroids = np.stack([th[part.members(g)].mean(axis=0) for g in range(k)])
    return PartitionSolution(
        partition=part,
        centroids=centroids,
        objective=float(objective),
        heter_term=float(heter),
        mf_term=float(mf),
        method=method,
    )


def _kmeans_once(th, n_clusters, rng):
    n = th.shape[0]
    # k-means++ seeding: spread the initial centers by squared distance.
    centers = np.empty((n_clusters, th.shape[1]))
    centers[0] = th[rng.integers(n)]
    d2 = ((th - centers[0]) ** 2).sum(axis=1)
    for c in range(1, n_clusters):
        total = d2.sum()
        if total <= 0:
            centers[c:] = th[rng.integers(n, size=n_clusters - c)]
            break
        probs = d2 / total
        centers[c] = th[rng.choice(n, p=probs)]
        d2 = np.minimum(d2, ((th - centers[c]) ** 2).sum(axis=1))

    assignment = np.zeros(n, dtype=np.int64)
    prev_sse = math.inf
    for _ in range(200):
        dists = ((th[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        assignment = dists.argmin(axis=1)
        # Re-seed empty clusters with the farthest point that can leave its
        # cluster without emptying it (one always exists by pigeonhole).
        counts = np.bincount(assignment, minlength=n_clusters)
        for k in range(n_clusters):
            if counts[k] == 0:
                pool = np.flatnonzero(counts[assignment] >= 2)
                worst = int(pool[np.argmax(dists[pool, assignment[pool]])])
                counts[assignment[worst]] -= 1
                assignment[worst] = k
                counts[k] = 1
        sse = 0.0
        for k in range(n_clusters):
            members = np.flatnonzero(assignment == k)
            centers[k] = th[members].mean(axis=0)
            sse += float(((th[members] - centers[k]) ** 2).sum())
        if sse > prev_sse * (1 + 1e-12) + 1e-15:
            raise RuntimeError("k-means squared error increased between sweeps")
        if prev_sse - sse <= 1e-15 * max(1.0, sse):
            break
        prev_sse = sse
    return assignment, sse


def kmeans(thetas, n_clusters, seed=0, restarts=10):
    """Cluster parameter vectors to minimize mean within-group variance.

    Runs ``restarts`` independent k-means++/Lloyd descents and keeps the
    best squared error; the reported objective is the population-mean
    squared distance (1/N)·sum_k sum_{i in k} ||theta_i - mean_k||^2.
    """
    th = _as_points(thetas)
    n = th.shape[0]
    if not 1 <= n_clusters <= n:
        raise ValueError("n_clusters must lie in [1, n_players]")
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    base_seed = [int(s) for s in np.atleast_1d(seed)]
    best = None
    for r in range(restarts):
        rng = np.random.default_rng(base_seed + [r])
        assignment, sse = _kmeans_once(th, n_clusters, rng)
        labels, _ = _canonical_relabel(assignment)
        key = (sse, tuple(labels))
        if best is None or key < best[0]:
            best = (key, labels)
    labels = best[1]
    _, _, sse = _group_stats(th, labels, int(labels.max()) + 1)
    mean_sse = sse / n
    return _finish_solution(th, labels, "kmeans", mean_sse, mean_sse, 0.0)


def _objective_parts(th, assignment, n_groups, lip, spaces, n_players):
    counts, _, sse = _group_stats(th, assignment, n_groups)
    heter = 2.0 * lip.w_d * spaces.horizon * math.sqrt(sse)
    mf = eps_mf_partition_micp(spaces, lip, counts, n_players=n_players)
    return heter + mf, heter, mf


def micp_objective(partition, thetas, lip, spaces, n_players=None):
    """Combined partition objective: heterogeneity + size-penalty terms.

    Evaluates 2·w_d·T·sqrt(sum_k sum_{i in k} ||theta_i - mean_k||^2)
    plus the mean-field term of :func:`mfghom.bounds.eps_mf_partition_micp`.
    Empty groups contribute zero to both sums, so the value is unchanged by
    unused group labels.  ``lip`` must be a single-population profile; the
    parameter ball is *not* enforced here (the certificate functions do
    that), keeping the optimizer usable on raw data.
    """
    th = _as_points(thetas)
    if th.shape[0] != partition.n_players:
        raise ValueError("thetas and partition disagree on the player count")
    if n_players is not None and int(n_players) != partition.n_players:
        raise ValueError("n_players does not match the partition")
    value, _, _ = _objective_parts(
        th, partition.assignment, partition.n_groups, lip, spaces,
        partition.n_players,
    )
    return value


def _rgs_enumerate(n, k_max):
    """All assignments of n players to at most k_max unlabeled groups.

    Restricted growth strings in lexicographic order: digit i may not
    exceed one plus the maximum of the earlier digits, which enumerates
    each set partition exactly once with its canonical labeling.
    """
    codes = np.zeros((1, 1), dtype=np.int8)
    maxes = np.zeros(1, dtype=np.int8)
    for _ in range(1, n):
        allowed = np.minimum(maxes + 2, k_max).astype(np.int64)
        rows = np.repeat(np.arange(codes.shape[0]), allowed)
        starts = np.repeat(np.cumsum(allowed) - allowed, allowed)
        digits = (np.arange(rows.size) - starts).astype(np.int8)
        codes = np.concatenate([codes[rows], digits[:, None]], axis=1)
        maxes = np.maximum(maxes[rows], digits)
    return codes


def _relocation_check(th, assignment, k_max, lip, spaces, n_players, best_value):
    """Assert no single-player move improves on the reported optimum."""
    assignment = np.asarray(assignment, dtype=np.int64)
    for i in range(assignment.size):
        for g in range(k_max):
            if g == assignment[i]:
                continue
            trial = assignment.copy()
            trial[i] = g
            value, _, _ = _objective_parts(th, trial, k_max, lip, spaces, n_players)
            if value < best_value - 1e-9:
                raise RuntimeError(
                    "returned partition admits an improving relocation; "
                    "optimizer invariant violated"
                )


def solve_exact(thetas, k_max, lip, spaces, n_players=None, chunk=16384):
    """Globally optimal partition by enumeration of set partitions.

    Only feasible for small populations (hard cap at 12 players); beyond
    that a :class:`CapExceeded` points to :func:`solve_local`.  Ties at
    float resolution resolve to the lexicographically smallest assignment
    because candidates stream in lexicographic order and only strict
    improvements replace the incumbent.
    """
    th = _as_points(thetas)
    n = th.shape[0]
    if n_players is not None and int(n_players) != n:
        raise ValueError("n_players does not match thetas")
    if n > EXACT_ENUM_CAP:
        raise CapExceeded(
            f"exact enumeration supports at most {EXACT_ENUM_CAP} players "
            f"(got {n}); use solve_local for larger populations",
            required_cap=n,
        )
    k_max = int(k_max)
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    k_max = min(k_max, n)

    codes = _rgs_enumerate(n, k_max)
    norm_total = float((th ** 2).sum())
    root_sa = math.sqrt(spaces.n_states * spaces.n_actions)
    coef = max(lip.rbar_max, 1.0) * c_theorem_scalar(spaces, lip) * root_sa * (
        float(lip.w_p[0] + lip.w_r[0]) / n + 1.0 / math.sqrt(n)
    )
    two_wdt = 2.0 * lip.w_d * spaces.horizon

    best_value = math.inf
    best_row = None
    eye = np.eye(k_max)
    for lo in range(0, codes.shape[0], chunk):
        block = codes[lo:lo + chunk].astype(np.int64)
        one_hot = eye[block]  # (C, n, k_max)
        counts = one_hot.sum(axis=1)  # (C, k_max)
        sums = np.einsum("cnk,nd->ckd", one_hot, th)
        norm2 = (sums ** 2).sum(axis=2)
        safe = np.where(counts > 0, counts, 1.0)
        sse = norm_total - (norm2 / safe).sum(axis=1)
        sse = np.maximum(sse, 0.0)
        values = two_wdt * np.sqrt(sse) + coef * np.sqrt(counts).sum(axis=1)
        j = int(values.argmin())
        if values[j] < best_value:
            best_value = float(values[j])
            best_row = block[j].copy()

    value, heter, mf = _objective_parts(th, best_row, k_max, lip, spaces, n)
    _relocation_check(th, best_row, k_max, lip, spaces, n, value)
    return _finish_solution(th, best_row, "exact_enum", value, heter, mf)


def _descend(th, assignment, k_max, lip, spaces, n_players):
    """Best-improvement relocation + pairwise-swap descent."""
    assignment = np.asarray(assignment, dtype=np.int64).copy()
    value, _, _ = _objective_parts(th, assignment, k_max, lip, spaces, n_players)
    n = assignment.size
    improved = True
    while improved:
        improved = False
        best_move, best_gain = None, _IMPROVE_TOL
        for i in range(n):
            for g in range(k_max):
                if g == assignment[i]:
                    continue
                trial = assignment.copy()
                trial[i] = g
                cand, _, _ = _objective_parts(th, trial, k_max, lip, spaces, n_players)
                if value - cand > best_gain:
                    best_gain, best_move = value - cand, ("move", i, g)
        for i in range(n):
            for j in range(i + 1, n):
                if assignment[i] == assignment[j]:
                    continue
                trial = assignment.copy()
                trial[i], trial[j] = trial[j], trial[i]
                cand, _, _ = _objective_parts(th, trial, k_max, lip, spaces, n_players)
                if value - cand > best_gain:
                    best_gain, best_move = value - cand, ("swap", i, j)
        if best_move is not None:
            kind, a, b = best_move
            if kind == "move":
                assignment[a] = b
            else:
                assignment[a], assignment[b] = assignment[b], assignment[a]
            value, _, _ = _objective_parts(th, assignment, k_max, lip, spaces,
                                           n_players)
            improved = True
    return assignment, value


def solve_local(thetas, k_max, lip, spaces, n_players=None, seed=0):
    """Heuristic partition optimizer for populations beyond the exact cap.

    Seeds one descent per candidate group count (k-means assignment, then
    best-improvement relocations and pairwise swaps on the combined
    objective) and returns the best local optimum found.  Deterministic
    for a fixed seed.
    """
    th = _as_points(thetas)
    n = th.shape[0]
    if n_players is not None and int(n_players) != n:
        raise ValueError("n_players does not match thetas")
    k_max = int(k_max)
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    k_max = min(k_max, n)

    best = None
    for k in range(1, k_max + 1):
        seeded = kmeans(th, k, seed=[int(seed), k], restarts=4)
        start = np.asarray(seeded.partition.assignment, dtype=np.int64).copy()
        assignment, value = _descend(th, start, k_max, lip, spaces, n)
        labels, _ = _canonical_relabel(assignment)
        key = (value, tuple(labels))
        if best is None or key < best[0]:
            best = (key, labels)
    labels = best[1]
    value, heter, mf = _objective_parts(th, labels, int(labels.max()) + 1,
                                        lip, spaces, n)
    return _finish_solution(th, labels, "local_search", value, heter, mf)


def suggest_k(n_players):
    """Cube-root rule for the group count of a large population."""
    n = int(n_players)
    if n < 1:
        raise ValueError("n_players must be >= 1")
    return min(max(int(round(n ** (1.0 / 3.0))), 1), n)
