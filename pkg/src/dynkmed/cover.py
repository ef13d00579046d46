"""Static successive-sampling pipeline.

One round (:func:`almost_cover`) samples ``phi`` points uniformly with
replacement, finds the smallest radius whose balls around the sample capture a
``beta`` fraction of the set, and assigns every captured point to its nearest
sampled center. :func:`build_layers` iterates rounds, peeling the covered
points each time, until the remainder fits under the last-layer threshold;
leftover points become their own centers at radius zero.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .metric import DistanceOracle, Point, PointId

Sampler = Callable[[Sequence[PointId], int, np.random.Generator], Sequence[PointId]]


@dataclass
class CoverParams:
    """Knobs for the sampling cover.

    ``phi`` is the per-round sample size; ``last_layer_threshold`` (default
    ``phi``) is the residual size at which peeling stops. ``sampler`` lets
    tests inject a deterministic sample in place of uniform-with-replacement
    draws.
    """

    k: int
    phi: int
    beta: float = 0.5
    last_layer_threshold: Optional[int] = None
    seed: int | np.random.SeedSequence = 0
    sampler: Optional[Sampler] = None

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if self.phi < 1:
            raise ValueError("phi must be at least 1")
        if not 0.0 < self.beta < 1.0:
            raise ValueError("beta must lie strictly between 0 and 1")
        if self.last_layer_threshold is not None and self.last_layer_threshold < self.phi:
            raise ValueError("last_layer_threshold must be at least phi")

    @property
    def threshold(self) -> int:
        return self.phi if self.last_layer_threshold is None else self.last_layer_threshold

    def effective_k(self, n: int) -> int:
        """max(k, ceil(log2(n + 2))): the center budget grows with log of n."""
        return max(self.k, math.ceil(math.log2(n + 2)))


@dataclass
class CoverResult:
    """Output of one cover round over a working set U'.

    ``centers`` is the deduplicated sample, ``covered`` the points within
    ``radius`` of it, and ``assignment`` maps each covered point to its
    nearest center (ties toward the smallest id).
    """

    centers: set[PointId]
    covered: set[PointId]
    assignment: dict[PointId, PointId]
    radius: float


def _quantile_index(fraction: float, n: int) -> int:
    # ceil(fraction * n) with a guard against one-ulp overshoot at integers
    return max(1, math.ceil(fraction * n - 1e-9))


def coverage_radius(
    centers: Sequence[Point],
    universe: Sequence[Point],
    fraction: float,
    oracle: DistanceOracle,
) -> float:
    """Smallest r such that balls of radius r around ``centers`` capture at
    least ``fraction`` of ``universe``; computed by exact selection of the
    ceil(fraction*|U|)-th smallest distance-to-set."""
    if not centers or not universe:
        raise ValueError("centers and universe must be nonempty")
    if not 0.0 < fraction <= 1.0:
        raise ValueError("fraction must lie in (0, 1]")
    dmin = oracle.pairwise(list(universe), sorted(centers, key=lambda p: p.id)).min(axis=1)
    m = _quantile_index(fraction, len(dmin))
    return float(np.partition(dmin, m - 1)[m - 1])


def _cover_arrays(
    ids: np.ndarray,
    coords: np.ndarray,
    params: CoverParams,
    rng: np.random.Generator,
    oracle: DistanceOracle,
) -> tuple[CoverResult, np.ndarray]:
    """Cover round over (sorted ids, matching coords); also returns the
    boolean covered mask aligned with ``ids``."""
    n = ids.shape[0]
    if params.sampler is not None:
        sample = list(params.sampler(list(int(i) for i in ids), params.phi, rng))
        known = set(int(i) for i in ids)
        for s in sample:
            if s not in known:
                raise ValueError(f"sampler returned id {s} outside the working set")
    else:
        sample = ids[rng.integers(0, n, size=params.phi)].tolist()
    center_ids = np.array(sorted(set(int(s) for s in sample)), dtype=np.int64)
    pos = np.searchsorted(ids, center_ids)

    dist = oracle.matrix_between(coords, ids, coords[pos], center_ids)
    dmin = dist.min(axis=1)
    m = _quantile_index(params.beta, n)
    radius = float(np.partition(dmin, m - 1)[m - 1])
    mask = dmin <= radius
    nearest = np.argmin(dist, axis=1)  # first minimum: smallest center id wins

    covered = ids[mask]
    assignment = {
        int(u): int(center_ids[j]) for u, j in zip(covered, nearest[mask])
    }
    result = CoverResult(
        centers={int(c) for c in center_ids},
        covered={int(u) for u in covered},
        assignment=assignment,
        radius=radius,
    )
    return result, mask


def almost_cover(
    universe: Sequence[Point],
    params: CoverParams,
    oracle: Optional[DistanceOracle] = None,
    rng: Optional[np.random.Generator] = None,
) -> CoverResult:
    """One sampling-cover round over ``universe``."""
    if not universe:
        raise ValueError("universe must be nonempty")
    oracle = oracle or DistanceOracle()
    rng = rng if rng is not None else np.random.default_rng(params.seed)
    pts = sorted(universe, key=lambda p: p.id)
    ids = np.array([p.id for p in pts], dtype=np.int64)
    coords = np.stack([p.coords for p in pts])
    result, _ = _cover_arrays(ids, coords, params, rng, oracle)
    return result


def _build_layers_arrays(
    ids: np.ndarray,
    coords: np.ndarray,
    params: CoverParams,
    rng: np.random.Generator,
    oracle: DistanceOracle,
) -> list[CoverResult]:
    layers: list[CoverResult] = []
    while ids.shape[0] > params.threshold:
        result, mask = _cover_arrays(ids, coords, params, rng, oracle)
        layers.append(result)
        keep = ~mask
        ids = ids[keep]
        coords = coords[keep]
    rest = {int(i) for i in ids}
    layers.append(
        CoverResult(
            centers=set(rest),
            covered=set(rest),
            assignment={i: i for i in rest},
            radius=0.0,
        )
    )
    return layers


def build_layers(
    universe: Sequence[Point],
    params: CoverParams,
    oracle: Optional[DistanceOracle] = None,
) -> tuple[list[CoverResult], dict[PointId, PointId], int]:
    """Peel cover rounds off ``universe`` until the remainder is small.

    Returns the per-round results (last round is the identity cover of the
    residual), the merged assignment over all of ``universe``, and the round
    count. Deterministic given ``params.seed`` and input ids.
    """
    if not universe:
        raise ValueError("universe must be nonempty")
    oracle = oracle or DistanceOracle()
    rng = np.random.default_rng(params.seed)
    pts = sorted(universe, key=lambda p: p.id)
    ids = np.array([p.id for p in pts], dtype=np.int64)
    coords = np.stack([p.coords for p in pts])
    layers = _build_layers_arrays(ids, coords, params, rng, oracle)
    assignment: dict[PointId, PointId] = {}
    for layer in layers:
        assignment.update(layer.assignment)
    return layers, assignment, len(layers)
