import math

import numpy as np
import pytest

from oracles import brute_voronoi, dijkstra_cost, score_field_oracle
from fieldswarm.errors import NoPathError, ValidationError
from fieldswarm.grid import AgentState, Cell, GridMap, GridSpec, ObstacleMask
from fieldswarm.kriging import ReconstructedMap
from fieldswarm.planner import (
    SCORE_EPS,
    ScoreMap,
    ScoreWeights,
    WEIGHT_KEYS,
    _entry_cost_field,
    compute_score,
    normalize01,
    path_cost,
    route_astar,
    select_goal,
    shortest_path,
    voronoi_partition,
)


def _recon(spec, est, unc):
    return ReconstructedMap(
        estimate=GridMap(spec, est, kind="estimate"),
        uncertainty=GridMap(spec, unc, kind="uncertainty"),
        n_measurements_used=3,
    )


# -- weights ----------------------------------------------------------------


def test_default_weights_by_team_size():
    small = ScoreWeights.defaults_for(2)
    large = ScoreWeights.defaults_for(3)
    assert small.prefer_current_goal == 10.0
    assert large.prefer_current_goal == 1.0
    assert small.expected_value == 1.0
    assert small.uncertainty == 10.0
    assert small.prefer_center == 0.1
    assert small.prefer_closeness == 0.1
    assert small.step_cost == 0.01


def test_weights_validation():
    with pytest.raises(ValidationError):
        ScoreWeights(expected_value=-1.0)
    with pytest.raises(ValidationError):
        ScoreWeights(
            expected_value=0,
            uncertainty=0,
            prefer_center=0,
            prefer_closeness=0,
            prefer_current_goal=0,
        )
    with pytest.raises(ValidationError):
        ScoreWeights(step_cost=0.0)
    with pytest.raises(ValidationError):
        ScoreWeights(uncertainty=math.inf)


def test_weights_mapping_roundtrip():
    w = ScoreWeights(expected_value=2.0, step_cost=0.5)
    back = ScoreWeights.from_mapping(w.to_mapping())
    assert back == w
    assert set(w.to_mapping()) == set(WEIGHT_KEYS)
    with pytest.raises(ValidationError):
        ScoreWeights.from_mapping({"weight_speed": 1.0})


def test_weights_partial_mapping_keeps_defaults():
    w = ScoreWeights.from_mapping({"weight_uncertainty": 3.0}, num_agents=4)
    assert w.uncertainty == 3.0
    assert w.prefer_current_goal == 1.0  # 4-agent default fills the gap


def test_weights_from_file(tmp_path):
    path = tmp_path / "w.cfg"
    path.write_text(
        "# tuning for the demo\n"
        "weight_expected_value = 2.5\n"
        "weight_step_cost=0.2  # cheap travel\n"
        "\n"
    )
    w = ScoreWeights.from_file(path)
    assert w.expected_value == 2.5
    assert w.step_cost == 0.2
    bad = tmp_path / "bad.cfg"
    bad.write_text("just words\n")
    with pytest.raises(ValidationError):
        ScoreWeights.from_file(bad)


# -- normalization ------------------------------------------------------------


def test_normalize01_free_cells_only():
    spec = GridSpec(rows=2, cols=3)
    blocked = np.zeros((2, 3), dtype=bool)
    blocked[0, 0] = True
    mask = ObstacleMask(spec, blocked)
    gm = GridMap(spec, np.array([[100.0, 2.0, 4.0], [6.0, 8.0, 10.0]]))
    out = normalize01(gm, mask)
    # 100 sits on a blocked cell, so the free range is [2, 10]
    assert out.values[0, 1] == 0.0
    assert out.values[1, 2] == 1.0
    assert out.values[1, 0] == pytest.approx(0.5)


def test_normalize01_flat_map_is_zero():
    spec = GridSpec(rows=3, cols=3)
    mask = ObstacleMask.open(spec)
    out = normalize01(GridMap(spec, np.full((3, 3), 7.0)), mask)
    assert (out.values == 0.0).all()


# -- voronoi -------------------------------------------------------------------


def test_voronoi_two_agents_on_a_strip():
    # 2x10 strip, agents at columns 2 and 7: columns 0-4 belong to the first
    # (ties at the exact midline go to the lower id), 5-9 to the second.
    spec = GridSpec(rows=2, cols=10)
    mask = ObstacleMask.open(spec)
    agents = [
        AgentState(id="a00", position=Cell(0, 2)),
        AgentState(id="a01", position=Cell(0, 7)),
    ]
    owner = voronoi_partition(agents, spec, mask)
    for c in range(5):
        assert owner[0, c] == 0 and owner[1, c] == 0
    for c in range(5, 10):
        assert owner[0, c] == 1 and owner[1, c] == 1


def test_voronoi_tie_goes_to_lower_id_regardless_of_order():
    spec = GridSpec(rows=3, cols=5)
    mask = ObstacleMask.open(spec)
    a = AgentState(id="a00", position=Cell(1, 1))
    b = AgentState(id="a01", position=Cell(1, 3))
    for agents in ([a, b], [b, a]):
        owner = voronoi_partition(agents, spec, mask)
        idx_a = agents.index(a)
        assert owner[1, 2] == idx_a  # equidistant column
        assert owner[0, 2] == idx_a


def test_voronoi_blocked_cells_unowned():
    spec = GridSpec(rows=4, cols=4)
    blocked = np.zeros((4, 4), dtype=bool)
    blocked[2, 2] = True
    mask = ObstacleMask(spec, blocked)
    owner = voronoi_partition([AgentState(id="a00", position=Cell(0, 0))], spec, mask)
    assert owner[2, 2] == -1
    assert (owner[mask.free] == 0).all()


def test_voronoi_matches_brute_force(rng):
    for trial in range(40):
        rows = int(rng.integers(2, 16))
        cols = int(rng.integers(2, 16))
        spec = GridSpec(rows=rows, cols=cols)
        blocked = rng.random((rows, cols)) < 0.2
        if blocked.all():
            blocked[0, 0] = False
        mask = ObstacleMask(spec, blocked)
        n_agents = int(rng.integers(1, 7))
        free = mask.free_cells()
        if len(free) < n_agents:
            continue
        picks = rng.choice(len(free), size=n_agents, replace=False)
        agents = [
            AgentState(id=f"a{i:02d}", position=free[p]) for i, p in enumerate(picks)
        ]
        owner = voronoi_partition(agents, spec, mask)
        expected = brute_voronoi(
            [tuple(a.position) for a in agents],
            [a.id for a in agents],
            rows,
            cols,
            mask.blocked,
        )
        assert np.array_equal(owner, expected)


# -- scoring -------------------------------------------------------------------


def test_score_matches_direct_recomputation(rng):
    spec = GridSpec(rows=9, cols=11)
    blocked = rng.random((9, 11)) < 0.15
    blocked[4, 5] = False
    blocked[2, 2] = False
    blocked[6, 8] = False
    mask = ObstacleMask(spec, blocked)
    est = rng.random((9, 11))
    unc = rng.random((9, 11))
    recon = _recon(spec, est, unc)
    agents = [
        AgentState(id="a00", position=Cell(4, 5), goal=Cell(2, 2)),
        AgentState(id="a01", position=Cell(6, 8)),
    ]
    weights = ScoreWeights(
        expected_value=1.3,
        uncertainty=7.0,
        prefer_center=0.4,
        prefer_closeness=0.2,
        prefer_current_goal=5.0,
        step_cost=0.02,
    )
    smap = compute_score(recon, agents[0], agents, weights, spec, mask)
    expected = score_field_oracle(
        est,
        unc,
        mask.free,
        (4, 5),
        (2, 2),
        {
            "expected_value": 1.3,
            "uncertainty": 7.0,
            "prefer_center": 0.4,
            "prefer_closeness": 0.2,
            "prefer_current_goal": 5.0,
        },
    )
    assert np.max(np.abs(smap.values - expected)) < 1e-12
    assert (smap.values[mask.blocked] == 0.0).all()

    # no-goal agent: the goal term must vanish entirely
    smap2 = compute_score(recon, agents[1], agents, weights, spec, mask)
    expected2 = score_field_oracle(
        est,
        unc,
        mask.free,
        (6, 8),
        None,
        {
            "expected_value": 1.3,
            "uncertainty": 7.0,
            "prefer_center": 0.4,
            "prefer_closeness": 0.2,
            "prefer_current_goal": 5.0,
        },
    )
    assert np.max(np.abs(smap2.values - expected2)) < 1e-12


def test_score_hand_value():
    # two cells differ only in normalized estimate; check the arithmetic
    spec = GridSpec(rows=2, cols=2)
    mask = ObstacleMask.open(spec)
    est = np.array([[0.0, 1.0], [0.5, 0.25]])
    unc = np.full((2, 2), 0.5)
    recon = _recon(spec, est, unc)
    agent = AgentState(id="a00", position=Cell(0, 0))
    w = ScoreWeights(
        expected_value=2.0,
        uncertainty=3.0,
        prefer_center=0.0,
        prefer_closeness=0.0,
        prefer_current_goal=0.0,
    )
    smap = compute_score(recon, agent, [agent], w, spec, mask)
    # uncertainty is flat -> normalizes to 0; score = 2 * est_norm
    assert smap.values[0, 1] == pytest.approx(2.0)
    assert smap.values[1, 0] == pytest.approx(1.0)
    assert smap.values[0, 0] == pytest.approx(0.0)


def test_select_goal_row_major_ties_and_own_cell_exclusion():
    spec = GridSpec(rows=3, cols=3)
    mask = ObstacleMask.open(spec)
    owner = np.zeros((3, 3), dtype=np.int64)
    score = np.zeros((3, 3))
    score[1, 1] = 5.0  # agent's own cell has the top score
    score[0, 2] = 3.0
    score[2, 0] = 3.0  # tie with (0, 2); row-major prefers (0, 2)
    smap = ScoreMap(GridMap(spec, score, kind="score"), owner, 0)
    agent = AgentState(id="a00", position=Cell(1, 1))
    assert select_goal(smap, agent) == Cell(0, 2)


def test_select_goal_sole_owned_cell_is_allowed():
    spec = GridSpec(rows=2, cols=2)
    mask = ObstacleMask.open(spec)
    owner = np.full((2, 2), 1, dtype=np.int64)
    owner[0, 0] = 0
    smap = ScoreMap(GridMap(spec, np.ones((2, 2)), kind="score"), owner, 0)
    agent = AgentState(id="a00", position=Cell(0, 0))
    assert select_goal(smap, agent) == Cell(0, 0)
    smap_none = ScoreMap(GridMap(spec, np.ones((2, 2)), kind="score"), owner, 3)
    with pytest.raises(ValidationError):
        select_goal(smap_none, agent)


# -- routing -------------------------------------------------------------------


def _random_scoremap(rng, spec, mask):
    score = rng.random((spec.rows, spec.cols))
    score[mask.blocked] = 0.0
    owner = np.zeros((spec.rows, spec.cols), dtype=np.int64)
    return ScoreMap(GridMap(spec, score, kind="score"), owner, 0)


def test_route_astar_matches_dijkstra(rng):
    for trial in range(60):
        rows = int(rng.integers(4, 21))
        cols = int(rng.integers(4, 21))
        spec = GridSpec(rows=rows, cols=cols)
        blocked = rng.random((rows, cols)) < (0.0 if trial % 2 == 0 else 0.25)
        mask_try = ObstacleMask(spec, blocked) if not blocked.all() else None
        if mask_try is None:
            continue
        free = mask_try.free_cells()
        if len(free) < 2:
            continue
        picks = rng.choice(len(free), size=2, replace=False)
        start, goal = free[picks[0]], free[picks[1]]
        smap = _random_scoremap(rng, spec, mask_try)
        weights = ScoreWeights(step_cost=float(rng.uniform(0.005, 2.0)))
        entry = _entry_cost_field(smap.values, mask_try.free)
        oracle = dijkstra_cost(blocked, entry, weights.step_cost, tuple(start), tuple(goal))
        try:
            path = route_astar(start, goal, smap, weights, mask_try)
        except NoPathError:
            assert oracle == math.inf
            continue
        assert path[0] == start and path[-1] == goal
        assert path_cost(path, entry, weights.step_cost) == oracle


def test_shortest_path_matches_dijkstra(rng):
    zeros_cost = None
    for trial in range(60):
        rows = int(rng.integers(4, 21))
        cols = int(rng.integers(4, 21))
        spec = GridSpec(rows=rows, cols=cols)
        blocked = rng.random((rows, cols)) < 0.3
        if blocked.all():
            continue
        mask = ObstacleMask(spec, blocked)
        free = mask.free_cells()
        if len(free) < 2:
            continue
        picks = rng.choice(len(free), size=2, replace=False)
        start, goal = free[picks[0]], free[picks[1]]
        zeros_cost = np.zeros((rows, cols))
        oracle = dijkstra_cost(blocked, zeros_cost, 1.0, tuple(start), tuple(goal))
        try:
            path = shortest_path(start, goal, mask)
        except NoPathError:
            assert oracle == math.inf
            continue
        assert path_cost(path, zeros_cost, 1.0) == oracle
        # steps are 8-connected single moves
        for a, b in zip(path, path[1:]):
            assert max(abs(a.row - b.row), abs(a.col - b.col)) == 1


def test_route_rejects_degenerate_endpoints():
    spec = GridSpec(rows=4, cols=4)
    mask = ObstacleMask.open(spec)
    smap = ScoreMap(
        GridMap(spec, np.ones((4, 4)), kind="score"),
        np.zeros((4, 4), dtype=np.int64),
        0,
    )
    w = ScoreWeights()
    with pytest.raises(ValidationError):
        route_astar(Cell(0, 0), Cell(0, 0), smap, w, mask)
    blocked = np.zeros((4, 4), dtype=bool)
    blocked[3, 3] = True
    mask2 = ObstacleMask(spec, blocked)
    with pytest.raises(NoPathError):
        shortest_path(Cell(0, 0), Cell(3, 3), mask2)


def test_no_path_through_a_wall():
    spec = GridSpec(rows=5, cols=5)
    blocked = np.zeros((5, 5), dtype=bool)
    blocked[:, 2] = True
    mask = ObstacleMask(spec, blocked)
    with pytest.raises(NoPathError):
        shortest_path(Cell(2, 0), Cell(2, 4), mask)


def test_route_prefers_high_score_corridor():
    # two corridors of equal length; the razor-thin step cost makes the
    # high-score one strictly cheaper
    spec = GridSpec(rows=3, cols=5)
    mask = ObstacleMask.open(spec)
    score = np.zeros((3, 5))
    score[0, :] = 1.0  # top corridor is maximally scored
    smap = ScoreMap(GridMap(spec, score, kind="score"), np.zeros((3, 5), dtype=np.int64), 0)
    w = ScoreWeights(step_cost=0.01)
    path = route_astar(Cell(1, 0), Cell(1, 4), smap, w, mask)
    assert any(cell.row == 0 for cell in path[1:-1])
    assert all(cell.row != 2 for cell in path)


def test_entry_cost_bounds():
    spec = GridSpec(rows=3, cols=3)
    mask = ObstacleMask.open(spec)
    values = np.linspace(0.0, 1.0, 9).reshape(3, 3)
    entry = _entry_cost_field(values, mask.free)
    assert entry.max() == pytest.approx(1.0 / SCORE_EPS)
    assert entry.min() == pytest.approx(1.0 / (1.0 + SCORE_EPS))
