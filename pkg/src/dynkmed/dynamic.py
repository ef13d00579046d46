"""Fully dynamic layered clustering structure.

The state keeps a stack of layers, each one round of the static sampling
cover. Updates touch only per-layer member sets, counters, and single cluster
records; no distances are evaluated outside rebuilds. A slack counter per
layer (updates absorbed since the layer was last built) forces a rebuild of
layers i..t as soon as it reaches a ``tau`` fraction of the layer's size at
its last build, which keeps the maintained layers close to what a fresh
static run would produce.

Cluster records realize the assignment implicitly: every covered point knows
its cluster, every cluster its current center. Deleting a center promotes the
smallest-id surviving member, which keeps all members within twice the layer
radius of their center.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from .cover import CoverParams, CoverResult, _cover_arrays
from .metric import DistanceOracle, Point, PointId, PointStore
from .solver import WeightedInstance

# Absolute slop for comparing integer counters against fractional thresholds.
_EPS = 1e-9


@dataclass
class DynamicParams(CoverParams):
    """Cover knobs plus the rebuild slack ``epsilon``.

    ``slack`` (the tau threshold) defaults to ``epsilon * beta``;
    ``strict_slack`` switches to the more conservative
    ``epsilon*beta / (beta*(1+epsilon) + 1)`` variant.
    """

    epsilon: float = 0.2
    strict_slack: bool = False

    def __post_init__(self) -> None:
        super().__post_init__()
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError("epsilon must lie strictly between 0 and 1")

    @property
    def slack(self) -> float:
        if self.strict_slack:
            return self.epsilon * self.beta / (self.beta * (1.0 + self.epsilon) + 1.0)
        return self.epsilon * self.beta

    @property
    def shrink_factor(self) -> float:
        """Per-layer size decay guaranteed between consecutive layers."""
        return 1.0 - self.beta * (1.0 - self.epsilon)


@dataclass
class ClusterRecord:
    """One cluster: unique id within the state, current center, member ids."""

    cid: int
    center: PointId
    members: set[PointId]

    @property
    def size(self) -> int:
        return len(self.members)


@dataclass
class Layer:
    members: set[PointId]               # U_i
    centers: set[PointId]               # S_i: current cluster centers
    covered: set[PointId]               # C_i: union of cluster members
    clusters: dict[int, ClusterRecord]
    cluster_of: dict[PointId, int]      # domain is exactly `covered`
    radius: float
    base_size: int                      # |U_i| when the layer was last built
    updates: int                        # updates absorbed since that build


class ClusteringState:
    """Single-writer dynamic clustering instance.

    Mutating calls (:meth:`insert`, :meth:`delete`) must be serialized by the
    caller; read-only calls may interleave with each other freely.
    """

    def __init__(
        self, params: DynamicParams, oracle: Optional[DistanceOracle] = None
    ) -> None:
        self.params = params
        self.oracle = oracle or DistanceOracle()
        self.store = PointStore()
        self.rng = np.random.default_rng(params.seed)
        self.effective_k = params.k
        self._next_cid = 0
        self.layers: list[Layer] = [self._terminal_layer(set())]

    # -- basic views ---------------------------------------------------------

    @property
    def t(self) -> int:
        return len(self.layers)

    @property
    def live_count(self) -> int:
        return len(self.store)

    def live_points(self) -> list[Point]:
        return self.store.points_sorted()

    # -- construction --------------------------------------------------------

    def _new_cid(self) -> int:
        cid = self._next_cid
        self._next_cid += 1
        return cid

    def _terminal_layer(self, members: set[PointId]) -> Layer:
        clusters: dict[int, ClusterRecord] = {}
        cluster_of: dict[PointId, int] = {}
        for pid in sorted(members):
            cid = self._new_cid()
            clusters[cid] = ClusterRecord(cid, pid, {pid})
            cluster_of[pid] = cid
        return Layer(
            members=set(members),
            centers=set(members),
            covered=set(members),
            clusters=clusters,
            cluster_of=cluster_of,
            radius=0.0,
            base_size=len(members),
            updates=0,
        )

    def _layer_from_cover(self, members: set[PointId], cover: CoverResult) -> Layer:
        clusters: dict[int, ClusterRecord] = {}
        cluster_of: dict[PointId, int] = {}
        by_center: dict[PointId, set[PointId]] = {}
        for pid, center in cover.assignment.items():
            by_center.setdefault(center, set()).add(pid)
        # A sampled center can end up with no members only when a same-coord
        # twin with a smaller id absorbed it; such centers are dropped.
        for center in sorted(by_center):
            cid = self._new_cid()
            clusters[cid] = ClusterRecord(cid, center, by_center[center])
            for pid in by_center[center]:
                cluster_of[pid] = cid
        return Layer(
            members=set(members),
            centers=set(by_center),
            covered=set(cover.covered),
            clusters=clusters,
            cluster_of=cluster_of,
            radius=cover.radius,
            base_size=len(members),
            updates=0,
        )

    def rebuild_from_layer(self, index: int) -> None:
        """Discard layers index..t and rebuild them from the current U_index.

        ``index`` is 1-based. Rebuilding from layer 1 is exactly a fresh
        preprocess of the current point set on the same sample stream.
        """
        if not 1 <= index <= self.t:
            raise IndexError(f"layer index {index} out of range 1..{self.t}")
        working = self.layers[index - 1].members
        del self.layers[index - 1 :]
        self.effective_k = self.params.effective_k(len(self.store))

        ids = np.fromiter(sorted(working), dtype=np.int64, count=len(working))
        coords = self.store.coords_for(ids)
        remaining = ids
        while remaining.shape[0] > self.params.threshold:
            cover, mask = _cover_arrays(remaining, coords, self.params, self.rng, self.oracle)
            self.layers.append(
                self._layer_from_cover({int(i) for i in remaining}, cover)
            )
            keep = ~mask
            remaining = remaining[keep]
            coords = coords[keep]
        self.layers.append(self._terminal_layer({int(i) for i in remaining}))

    # -- updates -------------------------------------------------------------

    def insert(self, point: Point) -> None:
        """Add a new point: joins every layer, becomes its own center in the
        last one, then the slack check runs."""
        if point.id in self.store:
            raise ValueError(f"point id {point.id} already present")
        self.store.add(point)
        pid = point.id
        for layer in self.layers:
            layer.members.add(pid)
            layer.updates += 1
        last = self.layers[-1]
        cid = self._new_cid()
        last.clusters[cid] = ClusterRecord(cid, pid, {pid})
        last.cluster_of[pid] = cid
        last.covered.add(pid)
        last.centers.add(pid)
        self.rebuild()

    def delete(self, pid: PointId) -> None:
        """Remove a live point from every layer containing it.

        If it centered a cluster with surviving members, the smallest-id
        member takes over as center; an emptied cluster is dropped.
        """
        if pid not in self.store:
            raise KeyError(f"point id {pid} not present")
        for layer in self.layers:
            if pid not in layer.members:
                continue
            layer.members.discard(pid)
            layer.updates += 1
            cid = layer.cluster_of.pop(pid, None)
            if cid is None:
                continue
            layer.covered.discard(pid)
            record = layer.clusters[cid]
            record.members.discard(pid)
            if record.center == pid:
                layer.centers.discard(pid)
                if record.members:
                    promoted = min(record.members)
                    record.center = promoted
                    layer.centers.add(promoted)
                else:
                    del layer.clusters[cid]
        self.store.remove(pid)
        self.rebuild()

    def rebuild(self) -> None:
        """Rebuild from the shallowest layer whose slack budget is exhausted.

        No-op when every layer is within budget. At most one rebuild per
        update; rebuilding layer i resets the counters of all deeper layers,
        so a single pass restores the slack invariant everywhere.
        """
        slack = self.params.slack
        for i, layer in enumerate(self.layers, start=1):
            if layer.updates >= slack * layer.base_size - _EPS:
                self.rebuild_from_layer(i)
                return

    # -- queries over the maintained assignment ------------------------------

    def assignment_of(self, pid: PointId) -> PointId:
        """Current center of the unique cluster containing ``pid``."""
        for layer in self.layers:
            cid = layer.cluster_of.get(pid)
            if cid is not None:
                return layer.clusters[cid].center
        raise KeyError(f"point id {pid} not present")

    def assignment(self) -> dict[PointId, PointId]:
        """Full point -> center map across all layers."""
        out: dict[PointId, PointId] = {}
        for layer in self.layers:
            for record in layer.clusters.values():
                for pid in record.members:
                    out[pid] = record.center
        return out

    def weighted_instance(self) -> WeightedInstance:
        """All current centers, weighted by their cluster sizes.

        Weights sum to the live point count; last-layer points carry weight 1.
        """
        if len(self.store) == 0:
            raise ValueError("state is empty")
        entries: list[tuple[Point, int]] = []
        for layer in self.layers:
            for record in sorted(layer.clusters.values(), key=lambda r: r.center):
                entries.append((self.store.get(record.center), record.size))
        return WeightedInstance(entries)

    # -- diagnostics ---------------------------------------------------------

    def integrity_check(self) -> list[str]:
        """Verify the structural invariants; returns violations (empty = ok).

        Checks nesting, the covered-set partition, cluster-record consistency,
        the slack invariant, the per-layer shrink bound, the 2*radius cluster
        bound, and the layer-count bound. Distance work here is uncounted so
        diagnostics never distort evaluation-cost measurements.
        """
        violations: list[str] = []
        params = self.params
        live = set(self.store.ids_sorted())
        slack = params.slack

        seen_covered: set[PointId] = set()
        covered_total = 0
        prev_members: Optional[set[PointId]] = None
        for i, layer in enumerate(self.layers, start=1):
            if prev_members is not None:
                if not layer.members <= prev_members:
                    violations.append(f"layer {i}: members not nested in layer {i-1}")
                bound = params.shrink_factor * len(prev_members)
                if len(layer.members) > bound + _EPS:
                    violations.append(
                        f"layer {i}: size {len(layer.members)} exceeds shrink bound "
                        f"{bound:.3f} from layer {i-1}"
                    )
            if layer.updates > slack * layer.base_size + _EPS:
                violations.append(
                    f"layer {i}: slack invariant broken "
                    f"({layer.updates} updates > {slack} * {layer.base_size})"
                )
            if not layer.covered <= layer.members:
                violations.append(f"layer {i}: covered set not within members")
            member_count = 0
            for record in layer.clusters.values():
                if record.center not in record.members:
                    violations.append(
                        f"layer {i}: cluster {record.cid} center {record.center} "
                        "is not a member"
                    )
                if record.size < 1:
                    violations.append(f"layer {i}: cluster {record.cid} is empty")
                member_count += record.size
            if member_count != len(layer.covered):
                violations.append(
                    f"layer {i}: cluster members do not partition the covered set"
                )
            if set(layer.cluster_of) != layer.covered:
                violations.append(f"layer {i}: cluster index out of sync with covered set")
            centers = {r.center for r in layer.clusters.values()}
            if centers != layer.centers:
                violations.append(f"layer {i}: center set out of sync with clusters")
            if len(centers) != len(layer.clusters):
                violations.append(f"layer {i}: duplicate cluster centers")
            covered_total += len(layer.covered)
            seen_covered |= layer.covered
            violations.extend(self._check_layer_radius(i, layer))
            prev_members = layer.members

        if seen_covered != live or covered_total != len(live):
            violations.append("covered sets do not partition the live point set")
        if self.layers and self.layers[0].members != live:
            violations.append("top layer members differ from the live point set")

        n = len(live)
        if n > 0:
            # The next-to-last layer was bigger than the threshold when built
            # and may have shrunk by a `slack` fraction since, hence the
            # (1 - slack) correction on the threshold.
            ratio = n / ((1.0 - slack) * params.threshold)
            if ratio <= 1.0 + _EPS:
                allowed = 1
            else:
                allowed = math.ceil(
                    math.log(ratio) / math.log(1.0 / params.shrink_factor) - _EPS
                ) + 1
            if self.t > max(1, allowed):
                violations.append(
                    f"layer count {self.t} exceeds bound {max(1, allowed)} for n={n}"
                )
        return violations

    def _check_layer_radius(self, i: int, layer: Layer) -> list[str]:
        stale: list[str] = []
        pids: list[PointId] = []
        centers: list[PointId] = []
        for record in layer.clusters.values():
            if record.size == 1:
                continue  # singleton: zero distance by identity
            if record.center not in self.store:
                stale.append(
                    f"layer {i}: cluster {record.cid} center {record.center} is not live"
                )
                continue
            for pid in record.members:
                if pid != record.center:
                    if pid not in self.store:
                        stale.append(f"layer {i}: member {pid} is not live")
                        continue
                    pids.append(pid)
                    centers.append(record.center)
        if not pids:
            return stale
        a = self.store.coords_for(pids)
        b = self.store.coords_for(centers)
        if self.oracle.base is None:
            d = np.linalg.norm(a - b, axis=1)
        else:
            d = np.array([self.oracle.base(a[j], b[j]) for j in range(len(pids))])
        if self.oracle.offset:
            d = d + self.oracle.offset
        limit = 2.0 * layer.radius
        tol = 1e-6 + 1e-9 * max(1.0, limit)
        bad = np.nonzero(d > limit + tol)[0]
        return stale + [
            f"layer {i}: point {pids[j]} at distance {d[j]:.6g} from center "
            f"{centers[j]} exceeds 2*radius={limit:.6g}"
            for j in bad[:5]
        ]

    def snapshot(self) -> str:
        """Tab-separated debug dump: one line per layer with
        i, |U_i|, |S_i|, |C_i|, radius, base size, update counter."""
        lines = []
        for i, layer in enumerate(self.layers, start=1):
            lines.append(
                f"{i}\t{len(layer.members)}\t{len(layer.centers)}\t"
                f"{len(layer.covered)}\t{layer.radius!r}\t{layer.base_size}\t{layer.updates}"
            )
        return "\n".join(lines) + "\n"


def preprocess(
    points: Iterable[Point],
    params: DynamicParams,
    oracle: Optional[DistanceOracle] = None,
) -> ClusteringState:
    """Build a fresh dynamic state over a nonempty initial point set."""
    pts = list(points)
    if not pts:
        raise ValueError("initial point set must be nonempty")
    state = ClusteringState(params, oracle)
    for p in pts:
        state.store.add(p)
    state.layers = [
        Layer(
            members=set(state.store.ids_sorted()),
            centers=set(),
            covered=set(),
            clusters={},
            cluster_of={},
            radius=0.0,
            base_size=len(pts),
            updates=0,
        )
    ]
    state.rebuild_from_layer(1)
    return state


def empty_state(
    params: DynamicParams, oracle: Optional[DistanceOracle] = None
) -> ClusteringState:
    """A valid empty state (t = 1, no points); the first insert populates it."""
    return ClusteringState(params, oracle)
