import math

import numpy as np
import pytest

from dynkmed import (
    DistanceOracle,
    DynamicParams,
    almost_cover,
    empty_state,
    points_from_array,
    preprocess,
)


def gaussian_points(n, dim=2, seed=0, start_id=0):
    rng = np.random.default_rng(seed)
    return points_from_array(rng.normal(0, 5, size=(n, dim)), start_id=start_id)


def line_points(*coords):
    return points_from_array(np.array([[float(c)] for c in coords]))


def first_id_sampler(ids, count, rng):
    return [ids[0]] * count


def big_state(n=300, phi=20, threshold=40, seed=3, k=5):
    # sized so that a single update never exhausts any layer's slack budget
    params = DynamicParams(k=k, phi=phi, last_layer_threshold=threshold, seed=seed)
    state = preprocess(gaussian_points(n, seed=seed), params)
    assert min(layer.base_size for layer in state.layers) > 1.0 / params.slack
    return state


def test_preprocess_small_input_trivial():
    pts = line_points(1, 2, 3)
    state = preprocess(pts, DynamicParams(k=2, phi=5))
    assert state.t == 1
    layer = state.layers[0]
    assert layer.members == layer.centers == layer.covered == {0, 1, 2}
    for pid in (0, 1, 2):
        assert state.assignment_of(pid) == pid
    assert state.integrity_check() == []


def test_preprocess_rejects_empty():
    with pytest.raises(ValueError):
        preprocess([], DynamicParams(k=1, phi=1))


def test_preprocess_invariants_and_layer_bound():
    params = DynamicParams(k=5, phi=50, last_layer_threshold=50, seed=11)
    state = preprocess(gaussian_points(500, seed=11), params)
    assert state.integrity_check() == []
    assert state.t <= math.ceil(math.log(500 / 50) / math.log(1 / params.shrink_factor)) + 1
    assert state.t <= 5
    for above, below in zip(state.layers, state.layers[1:]):
        assert below.members <= above.members
        assert len(below.members) <= params.shrink_factor * len(above.members) + 1e-9


def test_rebuild_from_layer_one_matches_static_pipeline():
    state = big_state(seed=7)
    params = state.params
    rng_clone = np.random.default_rng(0)
    rng_clone.bit_generator.state = state.rng.bit_generator.state

    state.rebuild_from_layer(1)

    remaining = state.live_points()
    fresh_oracle = DistanceOracle()
    for layer in state.layers[:-1]:
        cover = almost_cover(remaining, params, oracle=fresh_oracle, rng=rng_clone)
        assert cover.covered == layer.covered
        assert cover.radius == layer.radius
        assert cover.centers == layer.centers
        remaining = [p for p in remaining if p.id not in cover.covered]
    assert {p.id for p in remaining} == state.layers[-1].members
    for layer in state.layers:
        assert layer.updates == 0


def test_rebuild_from_layer_index_guard():
    state = big_state()
    with pytest.raises(IndexError):
        state.rebuild_from_layer(0)
    with pytest.raises(IndexError):
        state.rebuild_from_layer(state.t + 1)


def test_forced_sampler_hand_trace():
    pts = line_points(0, 1, 2, 10, 11, 12)
    params = DynamicParams(
        k=2, phi=1, last_layer_threshold=2, sampler=first_id_sampler
    )
    state = preprocess(pts, params)
    assert state.t == 3
    assert [layer.radius for layer in state.layers] == [2.0, 1.0, 0.0]
    assert state.layers[0].covered == {0, 1, 2}
    assert state.layers[1].covered == {3, 4}
    assert state.layers[2].covered == {5}
    assert state.assignment() == {0: 0, 1: 0, 2: 0, 3: 3, 4: 3, 5: 5}
    weights = {p.id: w for p, w in state.weighted_instance().entries}
    assert weights == {0: 3, 3: 2, 5: 1}


def test_insert_self_assigns_in_last_layer():
    state = big_state()
    evals_before = state.oracle.evals
    new = points_from_array(np.array([[100.0, 100.0]]), start_id=9000)[0]
    state.insert(new)
    assert state.assignment_of(9000) == 9000
    assert 9000 in state.layers[-1].centers
    assert state.oracle.evals == evals_before  # no rebuild, no distance work
    assert state.integrity_check() == []


def test_insert_bumps_every_layer_counter_pre_rebuild():
    state = big_state()
    before = [layer.updates for layer in state.layers]
    observed = {}
    original = state.rebuild

    def spy():
        observed["counters"] = [layer.updates for layer in state.layers]
        original()

    state.rebuild = spy
    state.insert(points_from_array(np.array([[1.0, 1.0]]), start_id=9001)[0])
    assert observed["counters"] == [c + 1 for c in before]


def test_insert_duplicate_id_rejected():
    state = big_state()
    pid = state.store.ids_sorted()[0]
    clone = points_from_array(np.array([[0.0, 0.0]]), start_id=pid)[0]
    with pytest.raises(ValueError):
        state.insert(clone)


def test_tenth_consecutive_update_rebuilds_top_layer():
    # top layer of size 100 with slack 0.1 tolerates 9 updates; the 10th trips it
    params = DynamicParams(k=3, phi=10, beta=0.5, epsilon=0.2, seed=5)
    state = preprocess(gaussian_points(100, seed=5), params)
    assert state.layers[0].base_size == 100
    assert params.slack == pytest.approx(0.1)
    fresh = gaussian_points(10, seed=99, start_id=500)
    for i, p in enumerate(fresh, start=1):
        state.insert(p)
        if i < 10:
            assert state.layers[0].updates == i
            assert state.layers[0].base_size == 100
        else:
            assert state.layers[0].updates == 0
            assert state.layers[0].base_size == 110
    assert state.integrity_check() == []


def test_delete_non_center_member():
    state = big_state(seed=9)
    layer = state.layers[0]
    record = next(r for r in layer.clusters.values() if r.size >= 2)
    victim = max(pid for pid in record.members if pid != record.center)
    centers_before = set(layer.centers)
    size_before = record.size
    state.delete(victim)
    assert layer.centers == centers_before
    assert record.size == size_before - 1
    assert victim not in layer.members
    assert state.integrity_check() == []


def test_delete_center_promotes_smallest_member():
    state = big_state(seed=21)
    layer = state.layers[0]
    record = next(r for r in layer.clusters.values() if r.size >= 3)
    old_center = record.center
    expected = min(pid for pid in record.members if pid != old_center)
    state.delete(old_center)
    assert record.center == expected
    assert expected in layer.centers and old_center not in layer.centers
    # every survivor sits within twice the layer radius of the new center
    oracle, store = state.oracle, state.store
    for pid in record.members:
        d = oracle.distance(store.get(pid), store.get(record.center))
        assert d <= 2 * layer.radius + 1e-9
    assert state.integrity_check() == []


def test_delete_last_layer_singleton_drops_cluster():
    state = big_state(seed=13)
    last = state.layers[-1]
    victim = sorted(last.members)[0]
    clusters_before = len(last.clusters)
    evals_before = state.oracle.evals
    state.delete(victim)
    assert len(last.clusters) == clusters_before - 1
    assert victim not in last.centers
    assert state.oracle.evals == evals_before
    assert state.integrity_check() == []


def test_delete_unknown_id_rejected():
    state = big_state()
    with pytest.raises(KeyError):
        state.delete(10**9)


def test_rebuild_noop_when_within_slack():
    state = big_state(seed=2)
    before = state.snapshot()
    state.rebuild()
    assert state.snapshot() == before


def test_rebuild_from_exact_violating_layer():
    params = DynamicParams(k=4, phi=25, seed=17)
    state = preprocess(gaussian_points(600, seed=17), params)
    assert state.t >= 4
    top_two = [id(state.layers[0]), id(state.layers[1])]
    counters = [state.layers[0].updates, state.layers[1].updates]
    state.layers[2].updates = 10**6  # fault injection
    state.rebuild()
    assert [id(state.layers[0]), id(state.layers[1])] == top_two
    assert [state.layers[0].updates, state.layers[1].updates] == counters
    assert state.layers[2].updates == 0
    assert state.layers[2].base_size == len(state.layers[2].members)
    assert state.integrity_check() == []


def test_invariants_hold_over_seeded_stream():
    params = DynamicParams(k=4, phi=25, seed=1)
    state = preprocess(gaussian_points(250, seed=1), params)
    rng = np.random.default_rng(100)
    pool = gaussian_points(400, seed=101, start_id=10_000)
    next_new = 0
    live = set(state.store.ids_sorted())
    for step in range(1000):
        if (rng.random() < 0.55 and next_new < len(pool)) or len(live) < 5:
            state.insert(pool[next_new])
            live.add(pool[next_new].id)
            next_new += 1
        else:
            victim = sorted(live)[int(rng.integers(0, len(live)))]
            state.delete(victim)
            live.discard(victim)
        slack = params.slack
        for layer in state.layers:
            assert layer.updates <= slack * layer.base_size + 1e-9
    assert state.integrity_check() == []


def test_assignment_of_center_and_covered():
    state = big_state(seed=33)
    layer = state.layers[0]
    record = next(r for r in layer.clusters.values() if r.size >= 2)
    assert state.assignment_of(record.center) == record.center
    member = next(pid for pid in record.members if pid != record.center)
    center = state.assignment_of(member)
    assert center == record.center
    d = state.oracle.distance(state.store.get(member), state.store.get(center))
    assert d <= 2 * layer.radius + 1e-9
    with pytest.raises(KeyError):
        state.assignment_of(10**9)


def test_weighted_instance_trivial_and_sum():
    pts = line_points(5, 6, 7)
    state = preprocess(pts, DynamicParams(k=2, phi=4))
    inst = state.weighted_instance()
    assert [(p.id, w) for p, w in inst.sorted_entries()] == [(0, 1), (1, 1), (2, 1)]

    state = big_state(seed=41)
    rng = np.random.default_rng(4)
    pool = gaussian_points(50, seed=42, start_id=5000)
    for i, p in enumerate(pool):
        if rng.random() < 0.6:
            state.insert(p)
        else:
            victim = state.store.ids_sorted()[0]
            state.delete(victim)
        inst = state.weighted_instance()
        assert inst.total_weight == state.live_count


def test_weighted_instance_empty_state_rejected():
    state = empty_state(DynamicParams(k=1, phi=1))
    with pytest.raises(ValueError):
        state.weighted_instance()


def test_integrity_check_flags_corruption():
    state = big_state(seed=55)
    layer = state.layers[0]
    record = next(iter(layer.clusters.values()))
    record.center = 10**8  # corrupt: center no longer a member
    report = state.integrity_check()
    assert report
    assert any("center" in line for line in report)


def test_update_locality_no_rebuild_means_no_distance_work():
    state = big_state(seed=66)
    evals = state.oracle.evals
    p = points_from_array(np.array([[3.0, 3.0]]), start_id=7777)[0]
    state.insert(p)
    state.delete(7777)
    assert state.oracle.evals == evals


def test_snapshot_schema():
    state = big_state(seed=8)
    lines = state.snapshot().strip().split("\n")
    assert len(lines) == state.t
    for i, line in enumerate(lines, start=1):
        fields = line.split("\t")
        assert len(fields) == 7
        assert int(fields[0]) == i
        layer = state.layers[i - 1]
        assert [int(fields[1]), int(fields[2]), int(fields[3])] == [
            len(layer.members),
            len(layer.centers),
            len(layer.covered),
        ]
        assert float(fields[4]) == layer.radius
        assert [int(fields[5]), int(fields[6])] == [layer.base_size, layer.updates]


def test_delete_to_empty_and_repopulate():
    pts = line_points(0, 1, 2)
    state = preprocess(pts, DynamicParams(k=1, phi=2))
    for pid in (0, 1, 2):
        state.delete(pid)
    assert state.live_count == 0
    assert state.t == 1
    assert state.integrity_check() == []
    state.insert(line_points(9)[0])
    assert state.live_count == 1
    assert state.assignment_of(0) == 0
    assert state.integrity_check() == []


def test_empty_state_constructor():
    state = empty_state(DynamicParams(k=2, phi=3))
    assert state.live_count == 0 and state.t == 1
    assert state.integrity_check() == []
    state.insert(line_points(1)[0])
    assert state.live_count == 1


def test_strict_slack_variant():
    loose = DynamicParams(k=1, phi=1, beta=0.5, epsilon=0.2)
    strict = DynamicParams(k=1, phi=1, beta=0.5, epsilon=0.2, strict_slack=True)
    assert loose.slack == pytest.approx(0.1)
    assert strict.slack == pytest.approx(0.1 / 1.6)
    assert strict.slack < loose.slack


def test_effective_k_frozen_at_rebuild():
    params = DynamicParams(k=2, phi=10, seed=3)
    state = preprocess(gaussian_points(100, seed=3), params)
    assert state.effective_k == max(2, math.ceil(math.log2(102)))


def test_cluster_members_pairwise_within_twice_radius():
    state = big_state(seed=77)
    rng = np.random.default_rng(6)
    pool = gaussian_points(60, seed=78, start_id=4000)
    for i, p in enumerate(pool):
        if rng.random() < 0.5:
            state.insert(p)
        else:
            state.delete(state.store.ids_sorted()[int(rng.integers(0, state.live_count))])
    for layer in state.layers:
        for record in layer.clusters.values():
            members = [state.store.get(m) for m in sorted(record.members)]
            dist = state.oracle.pairwise(members, members, count=False)
            assert dist.max() <= 2 * layer.radius + 1e-9


def test_amortized_distance_work_budget():
    # total evaluations over a long seeded stream stay under
    # c * m * k' * t * log2(n) for the frozen calibration constant c = 6
    from dynkmed import Point, synthetic_points, SyntheticSpec

    pts = synthetic_points(SyntheticSpec(6, 3, 1000), 3)
    params = DynamicParams(k=10, phi=50, seed=4)
    state = preprocess(pts, params)
    state.oracle.evals = 0
    pool = [
        Point(p.id + 10**6, p.coords)
        for p in synthetic_points(SyntheticSpec(6, 3, 1200), 5)
    ]
    rng = np.random.default_rng(8)
    live = set(state.store.ids_sorted())
    nxt = 0
    m = 1200
    for _ in range(m):
        if rng.random() < 0.5 and nxt < len(pool):
            state.insert(pool[nxt])
            live.add(pool[nxt].id)
            nxt += 1
        else:
            victim = sorted(live)[int(rng.integers(0, len(live)))]
            state.delete(victim)
            live.discard(victim)
    budget = 6.0 * m * state.effective_k * state.t * math.log2(len(live))
    assert state.oracle.evals <= budget
