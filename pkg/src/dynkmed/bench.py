"""Sliding-window benchmark harness.

Feeds a deterministic insert/delete stream into a dynamic clustering state,
issues evenly spaced queries, optionally runs a periodic static-recompute
baseline at query points, and emits one CSV row per update / query / baseline
evaluation plus a JSON run summary. Wall time is recorded but acceptance
gates read the distance-evaluation counter, which is hardware independent.
"""
from __future__ import annotations

import csv
import json
import time
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .cover import build_layers
from .dynamic import ClusteringState, DynamicParams, empty_state
from .metric import DistanceOracle, Point, points_from_array
from .solver import WeightedInstance, cost_set, query, weighted_solve

CSV_HEADER = [
    "update_index",
    "op",
    "wall_nanos",
    "distance_evals_delta",
    "t",
    "n",
    "solution_cost",
    "centers",
]


class ConfigError(ValueError):
    """Invalid experiment configuration."""


class DatasetError(ValueError):
    """Malformed or inconsistent input data."""


@dataclass
class SyntheticSpec:
    """Gaussian mixture: unit-variance blobs at uniform random means."""

    components: int
    dim: int
    count: int

    def __post_init__(self) -> None:
        if self.components < 1 or self.dim < 1 or self.count < 1:
            raise ConfigError("synthetic spec fields must be positive")


@dataclass
class MetricsRow:
    update_index: int
    op: str
    wall_nanos: int
    distance_evals_delta: int
    t: int
    n: int
    solution_cost: Optional[float] = None
    centers_returned: Optional[int] = None


@dataclass
class ExperimentConfig:
    window: int
    k: int
    phi: int
    dataset: Optional[str] = None
    synthetic: Optional[SyntheticSpec] = None
    limit: Optional[int] = None
    p: float = 1.0
    beta: float = 0.5
    epsilon: float = 0.2
    queries: int = 100
    offset_mode: str = "inv-n"          # "none" | "inv-n"
    baseline_every: Optional[int] = None  # static recompute staleness, in updates
    seed: int = 0
    out: Optional[str] = None
    shuffle_seed: Optional[int] = None
    check_every: int = 0                 # extra integrity checks every N updates

    def validate(self) -> None:
        if (self.dataset is None) == (self.synthetic is None):
            raise ConfigError("exactly one of dataset / synthetic is required")
        if self.window < 1:
            raise ConfigError("window must be at least 1")
        if self.queries < 0:
            raise ConfigError("query count must be nonnegative")
        if self.limit is not None and self.limit < self.window:
            raise ConfigError("limit must be at least the window size")
        if self.offset_mode not in ("none", "inv-n"):
            raise ConfigError(f"unknown offset mode {self.offset_mode!r}")
        if self.baseline_every is not None and self.baseline_every < 1:
            raise ConfigError("baseline period must be at least 1")
        if self.k < 1 or self.phi < 1:
            raise ConfigError("k and phi must be positive")
        if not 0.0 < self.beta < 1.0 or not 0.0 < self.epsilon < 1.0:
            raise ConfigError("beta and epsilon must lie strictly in (0, 1)")
        if self.p < 1.0:
            raise ConfigError("p must be at least 1")
        if self.check_every < 0:
            raise ConfigError("check_every must be nonnegative")


@dataclass
class ExperimentResult:
    rows: list[MetricsRow]
    summary: dict
    violations: list[str]


def load_dataset(path: str | Path, limit: Optional[int] = None) -> list[Point]:
    """Read numeric rows (comma or whitespace separated, one point per line).

    Blank lines are skipped; malformed rows and dimension drift raise
    :class:`DatasetError` with the offending line number. Ids run 0..n-1 in
    file order.
    """
    rows: list[list[float]] = []
    dim: Optional[int] = None
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            text = line.strip()
            if not text:
                continue
            parts = text.replace(",", " ").split()
            try:
                values = [float(v) for v in parts]
            except ValueError:
                raise DatasetError(f"{path}: malformed row at line {lineno}") from None
            if dim is None:
                dim = len(values)
            elif len(values) != dim:
                raise DatasetError(
                    f"{path}: line {lineno} has {len(values)} fields, expected {dim}"
                )
            rows.append(values)
            if limit is not None and len(rows) >= limit:
                break
    if not rows:
        raise DatasetError(f"{path}: no data rows")
    return points_from_array(np.array(rows, dtype=np.float64))


def synthetic_points(spec: SyntheticSpec, seed: int | np.random.SeedSequence) -> list[Point]:
    """Deterministic Gaussian-mixture sample in stream order."""
    rng = np.random.default_rng(seed)
    means = rng.uniform(-5.0 * spec.components, 5.0 * spec.components,
                        size=(spec.components, spec.dim))
    labels = rng.integers(0, spec.components, size=spec.count)
    coords = means[labels] + rng.standard_normal((spec.count, spec.dim))
    return points_from_array(coords)


def sliding_window_stream(n: int, window: int) -> list[tuple[str, int]]:
    """Update sequence: step i inserts point i and deletes point i-window.

    Every point is inserted exactly once and deleted exactly once, for 2n
    updates total; at step boundaries, at most ``window`` points are live.
    """
    if window < 1:
        raise ValueError("window must be at least 1")
    updates: list[tuple[str, int]] = []
    for step in range(n + window):
        if step < n:
            updates.append(("insert", step))
        gone = step - window
        if 0 <= gone < n:
            updates.append(("delete", gone))
    return updates


def _resolve_points(config: ExperimentConfig) -> list[Point]:
    if config.dataset is not None:
        points = load_dataset(config.dataset, config.limit)
    else:
        assert config.synthetic is not None
        points = synthetic_points(config.synthetic, config.seed)
        if config.limit is not None:
            points = points[: config.limit]
    if config.shuffle_seed is not None:
        order = np.random.default_rng(config.shuffle_seed).permutation(len(points))
        coords = np.stack([points[i].coords for i in order])
        points = points_from_array(coords)
    return points


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    """Execute the configured stream and return rows plus a run summary.

    Queries land after updates floor(j*m/queries) for j=1..queries; a query
    that falls on an empty live set is skipped and counted in the summary.
    Query timing covers instance extraction plus the weighted solve. The
    baseline, when enabled, recomputes a fresh static solution at a query
    point whenever at least ``baseline_every`` updates passed since its last
    recompute, and its current centers are re-costed at every query point.
    """
    config.validate()
    points = _resolve_points(config)
    offset = 1.0 / len(points) if config.offset_mode == "inv-n" else 0.0
    oracle = DistanceOracle(offset=offset, power=config.p)

    root_ss = np.random.SeedSequence(config.seed)
    state_ss, query_ss, baseline_ss = root_ss.spawn(3)
    params = DynamicParams(
        k=config.k,
        phi=config.phi,
        beta=config.beta,
        epsilon=config.epsilon,
        seed=state_ss,
    )
    state = empty_state(params, oracle)

    updates = sliding_window_stream(len(points), config.window)
    m = len(updates)
    query_after = {}
    if config.queries > 0:
        for j in range(1, config.queries + 1):
            query_after.setdefault((j * m) // config.queries, []).append(j)
    query_seeds = query_ss.spawn(config.queries) if config.queries else []
    baseline_seeds = iter(baseline_ss.spawn(2 * config.queries + 2))

    rows: list[MetricsRow] = []
    violations: list[str] = []
    skipped_queries = 0
    baseline_centers: Optional[list[Point]] = None
    updates_since_baseline = 0
    eval_mark = oracle.evals
    op_counts = {"insert": 0, "delete": 0, "query": 0, "baseline": 0}

    def emit(index: int, op: str, wall: int, cost=None, centers=None) -> None:
        nonlocal eval_mark
        rows.append(
            MetricsRow(
                update_index=index,
                op=op,
                wall_nanos=wall,
                distance_evals_delta=oracle.evals - eval_mark,
                t=state.t,
                n=state.live_count,
                solution_cost=cost,
                centers_returned=centers,
            )
        )
        eval_mark = oracle.evals
        op_counts[op] += 1

    for index, (op, pos) in enumerate(updates, start=1):
        start = time.perf_counter_ns()
        if op == "insert":
            state.insert(points[pos])
        else:
            state.delete(points[pos].id)
        emit(index, op, time.perf_counter_ns() - start)
        updates_since_baseline += 1

        if config.check_every and index % config.check_every == 0:
            violations.extend(
                f"update {index}: {v}" for v in state.integrity_check()
            )

        for j in query_after.get(index, ()):
            violations.extend(
                f"query point {index}: {v}" for v in state.integrity_check()
            )
            if state.live_count == 0:
                skipped_queries += 1
                continue
            start = time.perf_counter_ns()
            answer = query(state, config.k, config.p, query_seeds[j - 1])
            emit(
                index,
                "query",
                time.perf_counter_ns() - start,
                cost=answer.cost,
                centers=len(answer.centers),
            )
            if config.baseline_every is not None:
                start = time.perf_counter_ns()
                if (
                    baseline_centers is None
                    or updates_since_baseline >= config.baseline_every
                ):
                    baseline_centers = _static_solution(
                        state, config, oracle, next(baseline_seeds), next(baseline_seeds)
                    )
                    updates_since_baseline = 0
                base_cost = cost_set(
                    baseline_centers, state.live_points(), config.p, oracle
                )
                emit(
                    index,
                    "baseline",
                    time.perf_counter_ns() - start,
                    cost=base_cost,
                    centers=len(baseline_centers),
                )

    summary = _summarize(config, rows, m, skipped_queries, violations, oracle, op_counts)
    if config.out:
        out_path = Path(config.out)
        emit_metrics(rows, out_path)
        summary_path = out_path.with_suffix(".summary.json")
        summary_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return ExperimentResult(rows=rows, summary=summary, violations=violations)


def _static_solution(
    state: ClusteringState,
    config: ExperimentConfig,
    oracle: DistanceOracle,
    build_seed,
    solve_seed,
) -> list[Point]:
    """From-scratch static build plus weighted solve over the live set."""
    live = state.live_points()
    if len(live) <= config.k:
        return live
    params = DynamicParams(
        k=config.k,
        phi=config.phi,
        beta=config.beta,
        epsilon=config.epsilon,
        seed=build_seed,
    )
    layers, _, _ = build_layers(live, params, oracle)
    by_id = {p.id: p for p in live}
    weight: dict[int, int] = {}
    for layer in layers:
        for pid, center in layer.assignment.items():
            weight[center] = weight.get(center, 0) + 1
    instance = WeightedInstance(
        [(by_id[c], w) for c, w in sorted(weight.items())]
    )
    picked = weighted_solve(instance, config.k, config.p, solve_seed, oracle)
    return [by_id[c] for c in sorted(picked.centers)]


def _summarize(
    config: ExperimentConfig,
    rows: Sequence[MetricsRow],
    total_updates: int,
    skipped_queries: int,
    violations: Sequence[str],
    oracle: DistanceOracle,
    op_counts: dict,
) -> dict:
    per_op: dict[str, dict] = {}
    for op in sorted(op_counts):
        selected = [r for r in rows if r.op == op]
        per_op[op] = {
            "rows": len(selected),
            "distance_evals": int(sum(r.distance_evals_delta for r in selected)),
            "wall_nanos": int(sum(r.wall_nanos for r in selected)),
        }
    cfg = asdict(config)
    return {
        "config": cfg,
        "total_updates": total_updates,
        "total_distance_evals": int(oracle.evals),
        "distance_offset": oracle.offset,
        "queries_skipped_empty": skipped_queries,
        "invariant_violations": list(violations),
        "per_op": per_op,
        "timing_note": (
            "query wall time covers weighted-instance extraction plus the "
            "weighted solve; acceptance gates use distance_evals, not wall time"
        ),
    }


def emit_metrics(rows: Iterable[MetricsRow], path: str | Path) -> None:
    """Write rows as CSV with the fixed schema; blanks for inapplicable
    fields. Deterministic row order and formatting."""
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for row in rows:
            writer.writerow(
                [
                    row.update_index,
                    row.op,
                    row.wall_nanos,
                    row.distance_evals_delta,
                    row.t,
                    row.n,
                    "" if row.solution_cost is None else repr(row.solution_cost),
                    "" if row.centers_returned is None else row.centers_returned,
                ]
            )
