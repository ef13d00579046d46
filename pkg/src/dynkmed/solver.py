"""Query path and cost evaluation.

The static weighted solver seeds k centers by weighted distance-power
sampling and then runs single-swap local search: a swap is accepted only when
it shrinks the weighted cost by at least a ``delta/k`` relative margin, so the
search terminates and never returns anything worse than its seeding.

Brute-force enumerations over all k-subsets back the tests; they carry hard
size guards and evaluate distances without touching the oracle counter.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .metric import DistanceOracle, Point, PointId

# Default relative-improvement cutoff for the local search.
LOCAL_SEARCH_DELTA = 0.01

_BRUTE_FORCE_MAX_POINTS = 16
_BRUTE_FORCE_MAX_SUBSETS = 100_000


@dataclass
class WeightedInstance:
    """Distinct points with positive integer weights."""

    entries: list[tuple[Point, int]]

    def __post_init__(self) -> None:
        seen: set[PointId] = set()
        for point, weight in self.entries:
            if weight < 1:
                raise ValueError(f"weight of point {point.id} must be at least 1")
            if point.id in seen:
                raise ValueError(f"duplicate point id {point.id} in instance")
            seen.add(point.id)

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def total_weight(self) -> int:
        return sum(w for _, w in self.entries)

    def ids(self) -> set[PointId]:
        return {p.id for p, _ in self.entries}

    def sorted_entries(self) -> list[tuple[Point, int]]:
        return sorted(self.entries, key=lambda e: e[0].id)


@dataclass(frozen=True)
class Solution:
    centers: frozenset[PointId]
    cost: float


# -- cost evaluators ---------------------------------------------------------


def cost_set(
    centers: Sequence[Point],
    universe: Sequence[Point],
    p: float,
    oracle: DistanceOracle,
) -> float:
    """Sum over the universe of the p-th power of the distance to the nearest
    center."""
    if p < 1.0:
        raise ValueError("power must be at least 1")
    members = sorted(universe, key=lambda q: q.id)
    if not members:
        return 0.0
    ctrs = sorted(centers, key=lambda q: q.id)
    if not ctrs:
        raise ValueError("center set must be nonempty")
    dmin = oracle.pairwise(members, ctrs).min(axis=1)
    return float(np.sum(dmin**p))


def cost_assignment(
    assignment: Mapping[PointId, PointId],
    points: Iterable[Point],
    p: float,
    oracle: DistanceOracle,
) -> float:
    """Cost of a point -> center map: sum of d(x, assignment[x])^p."""
    if p < 1.0:
        raise ValueError("power must be at least 1")
    by_id = {q.id: q for q in points}
    xs: list[Point] = []
    ys: list[Point] = []
    for pid in sorted(by_id):
        target = assignment.get(pid)
        if target is None:
            raise ValueError(f"point {pid} has no assigned center")
        xs.append(by_id[pid])
        ys.append(by_id[target])
    d = oracle.elementwise(xs, ys)
    return float(np.sum(d**p))


def cost_weighted(
    centers: Iterable[PointId],
    instance: WeightedInstance,
    p: float,
    oracle: DistanceOracle,
) -> float:
    """Weighted nearest-center cost over an instance; centers must be
    instance points."""
    if p < 1.0:
        raise ValueError("power must be at least 1")
    center_ids = sorted(set(centers))
    known = {q.id: q for q, _ in instance.entries}
    missing = [c for c in center_ids if c not in known]
    if missing:
        raise ValueError(f"centers {missing} are not instance points")
    if not center_ids:
        raise ValueError("center set must be nonempty")
    entries = instance.sorted_entries()
    members = [q for q, _ in entries]
    weights = np.array([w for _, w in entries], dtype=np.float64)
    dmin = oracle.pairwise(members, [known[c] for c in center_ids]).min(axis=1)
    return float(np.sum(weights * dmin**p))


# -- weighted solver ---------------------------------------------------------


def _seed_indices(
    powered: np.ndarray, weights: np.ndarray, k: int, rng: np.random.Generator
) -> list[int]:
    """Weighted distance-power seeding: first pick proportional to weight,
    then proportional to weight times powered distance to the picks so far."""
    n = powered.shape[0]
    first = int(rng.choice(n, p=weights / weights.sum()))
    chosen = [first]
    dmin = powered[:, first].copy()
    while len(chosen) < k:
        mass = weights * dmin
        total = mass.sum()
        if total <= 0.0:
            taken = set(chosen)
            nxt = next(i for i in range(n) if i not in taken)
        else:
            nxt = int(rng.choice(n, p=mass / total))
        chosen.append(nxt)
        np.minimum(dmin, powered[:, nxt], out=dmin)
    return chosen


def _solution_stats(
    powered: np.ndarray, weights: np.ndarray, chosen: Sequence[int]
) -> tuple[float, np.ndarray, np.ndarray, np.ndarray]:
    cols = powered[:, chosen]
    if cols.shape[1] == 1:
        d1 = cols[:, 0]
        c1 = np.zeros(cols.shape[0], dtype=np.int64)
        d2 = np.full(cols.shape[0], np.inf)
    else:
        order = np.argpartition(cols, 1, axis=1)
        rows = np.arange(cols.shape[0])
        c1 = order[:, 0]
        d1 = cols[rows, c1]
        d2 = cols[rows, order[:, 1]]
        # argpartition does not promise the first-minimum tie rule; it is not
        # needed here, c1 only groups points by their current center
    cost = float(np.sum(weights * d1))
    return cost, d1, c1, d2


def _local_search(
    powered: np.ndarray,
    weights: np.ndarray,
    chosen: list[int],
    cutoff: float,
) -> float:
    """Single-swap descent: scan candidates in column order and apply any
    swap that shrinks the cost to at most ``cutoff`` times the current value,
    until a full scan finds none.

    For each candidate the best center to retire is chosen by the standard
    decomposition: points keeping their center can only gain from the
    candidate; points losing theirs fall back to the second-nearest. The scan
    order and first-minimum tie rule make the descent deterministic.
    """
    n, k = powered.shape[0], len(chosen)
    cost, d1, c1, d2 = _solution_stats(powered, weights, chosen)
    in_solution = np.zeros(n, dtype=bool)
    in_solution[chosen] = True
    improved = True
    while improved and cost > 0.0:
        improved = False
        for j in range(n):
            if in_solution[j]:
                continue
            column = powered[:, j]
            gain_keep = np.minimum(column, d1)
            gain_keep -= d1
            gain_keep *= weights                      # <= 0 everywhere
            shared = gain_keep.sum()
            lose = np.minimum(column, d2)
            lose -= d1
            lose *= weights
            lose -= gain_keep                         # extra cost if center lost
            per_center = np.bincount(c1, weights=lose, minlength=k)
            c_pos = int(np.argmin(per_center))
            new_cost = cost + shared + per_center[c_pos]
            if new_cost <= cutoff * cost:
                in_solution[chosen[c_pos]] = False
                in_solution[j] = True
                chosen[c_pos] = j
                cost, d1, c1, d2 = _solution_stats(powered, weights, chosen)
                improved = True
                if cost <= 0.0:
                    return cost
    return cost


def weighted_solve(
    instance: WeightedInstance,
    k: int,
    p: float,
    seed: int | np.random.SeedSequence = 0,
    oracle: Optional[DistanceOracle] = None,
    delta: float = LOCAL_SEARCH_DELTA,
) -> Solution:
    """Solve the weighted instance: seeding plus single-swap local search.

    Instances with at most k points are returned whole at cost zero. A swap
    is accepted only when the new cost is at most ``(1 - delta/k)`` times the
    current one; the loop runs until no such swap exists. Deterministic given
    the seed.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    if p < 1.0:
        raise ValueError("power must be at least 1")
    if len(instance) == 0:
        raise ValueError("instance must be nonempty")
    oracle = oracle or DistanceOracle()
    entries = instance.sorted_entries()
    ids = [q.id for q, _ in entries]
    if len(entries) <= k:
        return Solution(frozenset(ids), 0.0)
    points = [q for q, _ in entries]
    weights = np.array([w for _, w in entries], dtype=np.float64)
    powered = oracle.pairwise(points, points) ** p
    rng = np.random.default_rng(seed)

    chosen = _seed_indices(powered, weights, k, rng)
    cost = _local_search(powered, weights, chosen, 1.0 - delta / k)
    return Solution(frozenset(ids[i] for i in chosen), cost)


def query(
    state,
    k: int,
    p: float,
    seed: int | np.random.SeedSequence = 0,
    delta: float = LOCAL_SEARCH_DELTA,
) -> Solution:
    """Extract the weighted instance from a dynamic state, solve it, and
    report the chosen centers with their cost over the full live point set."""
    if state.live_count == 0:
        raise ValueError("state is empty")
    if k < 1:
        raise ValueError("k must be at least 1")
    if state.live_count <= k:
        return Solution(frozenset(p.id for p in state.live_points()), 0.0)
    oracle = state.oracle
    instance = state.weighted_instance()
    picked = weighted_solve(instance, k, p, seed, oracle, delta)
    centers = [state.store.get(c) for c in sorted(picked.centers)]
    full_cost = cost_set(centers, state.live_points(), p, oracle)
    return Solution(picked.centers, full_cost)


# -- brute-force oracles (tests and calibration only) -------------------------


def _guard_subsets(n: int, k: int, max_points: int = _BRUTE_FORCE_MAX_POINTS) -> int:
    if n > max_points:
        raise ValueError(f"brute force limited to {max_points} points, got {n}")
    k_eff = min(k, n)
    if math.comb(n, k_eff) > _BRUTE_FORCE_MAX_SUBSETS:
        raise ValueError("brute force subset count over budget")
    return k_eff


def _powered_matrix(
    points: Sequence[Point], p: float, oracle: DistanceOracle
) -> np.ndarray:
    return oracle.pairwise(points, points, count=False) ** p


def brute_force_opt(
    universe: Sequence[Point], k: int, p: float, oracle: DistanceOracle
) -> Solution:
    """Exact optimum by enumerating every k-subset of center candidates.

    Ties go to the lexicographically smallest id tuple. Guarded to at most 16
    points and 1e5 subsets.
    """
    pts = sorted(universe, key=lambda q: q.id)
    n = len(pts)
    if n == 0:
        raise ValueError("universe must be nonempty")
    k_eff = _guard_subsets(n, k)
    if k_eff == n:
        return Solution(frozenset(q.id for q in pts), 0.0)
    powered = _powered_matrix(pts, p, oracle)
    best_cost = math.inf
    best: tuple[int, ...] = ()
    for subset in itertools.combinations(range(n), k_eff):
        c = float(powered[:, subset].min(axis=1).sum())
        if c < best_cost:
            best_cost = c
            best = subset
    return Solution(frozenset(pts[i].id for i in best), best_cost)


def brute_force_opt_weighted(
    instance: WeightedInstance, k: int, p: float, oracle: DistanceOracle
) -> Solution:
    """Exact weighted optimum over instance points; subset-count guarded."""
    entries = instance.sorted_entries()
    n = len(entries)
    if n == 0:
        raise ValueError("instance must be nonempty")
    k_eff = _guard_subsets(n, k, max_points=24)
    pts = [q for q, _ in entries]
    if k_eff == n:
        return Solution(frozenset(q.id for q in pts), 0.0)
    weights = np.array([w for _, w in entries], dtype=np.float64)
    powered = _powered_matrix(pts, p, oracle)
    best_cost = math.inf
    best: tuple[int, ...] = ()
    for subset in itertools.combinations(range(n), k_eff):
        c = float(np.sum(weights * powered[:, subset].min(axis=1)))
        if c < best_cost:
            best_cost = c
            best = subset
    return Solution(frozenset(pts[i].id for i in best), best_cost)


def brute_force_coverage_radius(
    universe: Sequence[Point],
    k: int,
    fraction: float,
    oracle: DistanceOracle,
) -> float:
    """Smallest coverage radius achievable with k centers: minimum over all
    k-subsets of the ceil(fraction*n)-th smallest distance to the subset."""
    if not 0.0 < fraction <= 1.0:
        raise ValueError("fraction must lie in (0, 1]")
    pts = sorted(universe, key=lambda q: q.id)
    n = len(pts)
    if n == 0:
        raise ValueError("universe must be nonempty")
    k_eff = _guard_subsets(n, k)
    dist = oracle.pairwise(pts, pts, count=False)
    m = max(1, math.ceil(fraction * n - 1e-9))
    best = math.inf
    for subset in itertools.combinations(range(n), k_eff):
        dmin = dist[:, subset].min(axis=1)
        r = float(np.partition(dmin, m - 1)[m - 1])
        if r < best:
            best = r
    return best
