import numpy as np
import pytest

from fieldswarm.errors import ValidationError
from fieldswarm.harness import (
    AGGREGATE_HEADER,
    AggregateRow,
    AggregateTable,
    ExperimentPlan,
    GeneratedMap,
    METRIC_ORDER,
    SavedMap,
    SweepSpec,
    SWEEPABLE_WEIGHTS,
    aggregate_metrics,
    compare,
    derive_seed,
    generated_map_set,
    milestone_rounds,
    run_plan,
    run_sweep,
)
from fieldswarm.strategies import StrategyConfig


# -- seed derivation -----------------------------------------------------------


def test_derive_seed_frozen_values():
    # pinned against a by-hand blake2b computation
    assert derive_seed(0) == 8493733112532773764
    assert derive_seed(0, "map", 0) == 2120251167132926547
    assert derive_seed(0, "map", 1) == 1338805302981760263
    assert derive_seed(1, "map", 0) == 16466278803123593384
    assert derive_seed(17, "map-003", "sbs") == 13016210194109001314
    assert derive_seed(0, "sweep-env", 1) == 6569261194324292760


def test_derive_seed_part_boundaries_matter():
    assert derive_seed(0, "ab", "c") != derive_seed(0, "a", "bc")
    assert derive_seed(0, "x") != derive_seed(0, "x", "")
    assert 0 <= derive_seed(12345, "anything") < 2**64


# -- map references --------------------------------------------------------------


def test_generated_map_realize_is_deterministic():
    ref = GeneratedMap(map_id="m", rows=20, cols=22, seed=99)
    t1, m1 = ref.realize()
    t2, m2 = ref.realize()
    assert np.array_equal(t1.values, t2.values)
    assert t1.spec.rows == 20 and t1.spec.cols == 22
    assert not m1.blocked.any()
    assert np.array_equal(m1.blocked, m2.blocked)


def test_generated_map_options_change_the_output():
    base = GeneratedMap(map_id="m", rows=24, cols=24, seed=5)
    curved = GeneratedMap(
        map_id="m", rows=24, cols=24, seed=5, scurve_threshold=0.3, scurve_power=4.0
    )
    walled = GeneratedMap(
        map_id="m", rows=24, cols=24, seed=5, layout="edge-reaching-bars"
    )
    t0, _ = base.realize()
    t1, _ = curved.realize()
    _, mask = walled.realize()
    assert not np.array_equal(t0.values, t1.values)
    assert mask.blocked.any()
    # the s-curve is monotone, so the cell ranking survives the remap
    assert np.array_equal(np.argsort(t0.values.ravel(), kind="stable"),
                          np.argsort(t1.values.ravel(), kind="stable"))


def test_generated_map_set_ids_and_seeds():
    maps = generated_map_set(4, rows=30, cols=31, master_seed=7, hurst=0.6)
    assert [m.map_id for m in maps] == ["map-000", "map-001", "map-002", "map-003"]
    assert all(m.rows == 30 and m.cols == 31 and m.hurst == 0.6 for m in maps)
    assert [m.seed for m in maps] == [derive_seed(7, "map", i) for i in range(4)]
    assert len({m.seed for m in maps}) == 4


def test_saved_map_roundtrip(tmp_path, truth20):
    path = tmp_path / "truth.json"
    truth20.save(path)
    ref = SavedMap(map_id="disk", path=str(path))
    t, mask = ref.realize()
    assert np.array_equal(t.values, truth20.values)
    assert mask.spec == truth20.spec


# -- plans ------------------------------------------------------------------------


def _tiny_maps(n=2, rows=15, cols=15, master=3):
    return generated_map_set(n, rows=rows, cols=cols, master_seed=master)


def test_plan_validation():
    maps = _tiny_maps()
    sbs = StrategyConfig(kind="sbs", total_step_budget=20)
    with pytest.raises(ValidationError):
        ExperimentPlan(maps=(), strategies=(sbs,))
    with pytest.raises(ValidationError):
        ExperimentPlan(maps=maps, strategies=())
    with pytest.raises(ValidationError):
        ExperimentPlan(
            maps=maps,
            strategies=(sbs, StrategyConfig(kind="ptp", total_step_budget=30)),
        )
    with pytest.raises(ValidationError):
        ExperimentPlan(maps=maps, strategies=(sbs, sbs))  # duplicate (label, agents)
    with pytest.raises(ValidationError):
        ExperimentPlan(maps=maps, strategies=(sbs,), labels=("a", "b"))
    with pytest.raises(ValidationError):
        ExperimentPlan(maps=(maps[0], maps[0]), strategies=(sbs,))
    with pytest.raises(ValidationError):
        ExperimentPlan(maps=maps, strategies=(sbs,), milestones=(0.0,))
    with pytest.raises(ValidationError):
        ExperimentPlan(maps=maps, strategies=(sbs,), milestones=(1.2,))
    with pytest.raises(ValidationError):
        ExperimentPlan(maps=maps, strategies=(sbs,), parallelism=0)


def test_plan_default_labels_are_strategy_kinds():
    plan = ExperimentPlan(
        maps=_tiny_maps(),
        strategies=(
            StrategyConfig(kind="sbs", total_step_budget=20),
            StrategyConfig(kind="wandering", total_step_budget=20),
        ),
    )
    assert plan.labels == ("sbs", "wandering")
    assert plan.replicates == 2


def test_milestone_rounds_floor():
    assert milestone_rounds((0.25, 0.5, 1.0), 20) == [5, 10, 20]
    assert milestone_rounds((0.25,), 10) == [2]
    assert milestone_rounds((1.0,), 7) == [7]


def test_run_plan_small_end_to_end(tmp_path):
    plan = ExperimentPlan(
        maps=_tiny_maps(),
        strategies=(
            StrategyConfig(kind="sbs", total_step_budget=20),
            StrategyConfig(kind="wandering", total_step_budget=20),
        ),
        milestones=(0.5, 1.0),
        master_seed=11,
    )
    out1 = tmp_path / "run1"
    result = run_plan(plan, out_dir=out1)
    assert result.failures == []
    assert len(result.episodes) == 4  # 2 maps x 2 strategies
    assert result.map_ids == ("map-000", "map-001")

    row = result.aggregate.lookup("sbs", 1, 1.0, "sse")
    assert row.n == 2 and row.mean >= 0.0 and row.sd >= 0.0
    assert result.aggregate.lookup("wandering", 1, 0.5, "ca90").n == 2
    with pytest.raises(KeyError):
        result.aggregate.lookup("sbs", 2, 1.0, "sse")

    assert (out1 / "aggregate.csv").is_file()
    tl = out1 / "timelines" / "sbs-1" / "map-000.csv"
    assert tl.is_file()

    # a second run must reproduce the exact artifact bytes
    out2 = tmp_path / "run2"
    run_plan(plan, out_dir=out2)
    assert (out1 / "aggregate.csv").read_bytes() == (out2 / "aggregate.csv").read_bytes()
    assert tl.read_bytes() == (out2 / "timelines" / "sbs-1" / "map-000.csv").read_bytes()


def test_run_plan_records_failures_instead_of_raising():
    maps = generated_map_set(
        1, rows=25, cols=25, master_seed=0, layout="edge-reaching-bars"
    )
    plan = ExperimentPlan(
        maps=maps,
        strategies=(
            StrategyConfig(kind="spiral", total_step_budget=40),
            StrategyConfig(kind="wandering", total_step_budget=40),
        ),
        milestones=(1.0,),
    )
    result = run_plan(plan)
    assert len(result.failures) == 1
    assert result.failures[0][0] == "spiral"
    assert {e.label for e in result.episodes} == {"wandering"}
    with pytest.raises(KeyError):
        result.aggregate.lookup("spiral", 1, 1.0, "sse")


def test_aggregate_matches_manual_recomputation():
    plan = ExperimentPlan(
        maps=_tiny_maps(3),
        strategies=(StrategyConfig(kind="wandering", total_step_budget=12),),
        milestones=(1.0,),
        master_seed=2,
    )
    result = run_plan(plan)
    finals = [
        next(r for r in e.rows if r.round_index == 12).sse for e in result.episodes
    ]
    row = result.aggregate.lookup("wandering", 1, 1.0, "sse")
    arr = np.array(finals)
    assert row.mean == pytest.approx(arr.mean())
    assert row.sd == pytest.approx(arr.std(ddof=1))
    assert row.n == 3

    # aggregate_metrics on the same episodes gives the identical table
    table = aggregate_metrics(result.episodes, (1.0,), {("wandering", 1): 12})
    assert table.lookup("wandering", 1, 1.0, "sse") == row


def test_aggregate_table_csv_roundtrip(tmp_path):
    rows = [
        AggregateRow("sbs", 1, 0.25, "sse", 1.2345678901234567, 0.5, 10),
        AggregateRow("ptp", 4, 1.0, "ca90", 1.0 / 3.0, 0.0, 10),
    ]
    table = AggregateTable(rows=rows)
    p1 = tmp_path / "agg.csv"
    table.save_csv(p1)
    loaded = AggregateTable.load_csv(p1)
    assert loaded.rows == rows
    p2 = tmp_path / "agg2.csv"
    loaded.save_csv(p2)
    assert p1.read_bytes() == p2.read_bytes()
    bad = tmp_path / "bad.csv"
    bad.write_text("x,y\n", encoding="utf-8")
    with pytest.raises(ValidationError):
        AggregateTable.load_csv(bad)
    assert tuple(AGGREGATE_HEADER) == (
        "strategy", "agents", "milestone", "metric", "mean", "sd", "n",
    )


# -- comparisons -------------------------------------------------------------------


def _table(agents, milestone, sse_mean, cax_mean, n=20, sd=0.01):
    rows = []
    for metric in METRIC_ORDER:
        mean = sse_mean if metric == "sse" else cax_mean
        rows.append(AggregateRow(
            strategy="x", agents=agents, milestone=milestone,
            metric=metric, mean=mean, sd=sd, n=n,
        ))
    return AggregateTable(rows=rows)


def test_compare_clearly_better_rejects_everywhere():
    better = _table(1, 1.0, sse_mean=1.0, cax_mean=0.9)
    worse = _table(1, 1.0, sse_mean=5.0, cax_mean=0.2)
    result = compare(better, worse, margin=0.0, alpha=0.05)
    assert len(result.cells) == len(METRIC_ORDER)
    assert all(c.reject for c in result.cells)
    assert all(c.p_value < 1e-6 for c in result.cells)
    assert all(c.agents_a == 1 and c.agents_b == 1 for c in result.cells)


def test_compare_identical_with_margin_rejects_nothing():
    t = _table(1, 1.0, sse_mean=2.0, cax_mean=0.5)
    result = compare(t, t, margin=0.10, alpha=0.05)
    assert not any(c.reject for c in result.cells)
    assert all(c.p_value > 0.5 for c in result.cells)


def test_compare_pair_agents_and_mismatch_errors(tmp_path):
    double = _table(2, 1.0, sse_mean=1.0, cax_mean=0.9)
    single = _table(1, 1.0, sse_mean=5.0, cax_mean=0.2)
    with pytest.raises(ValidationError):
        compare(double, single, margin=0.0, alpha=0.05)
    result = compare(double, single, margin=0.0, alpha=0.05, pair_agents=[(2, 1)])
    assert all(c.agents_a == 2 and c.agents_b == 1 for c in result.cells)
    assert all(c.reject for c in result.cells)
    out = tmp_path / "cmp.csv"
    result.save_csv(out)
    assert out.read_text().startswith("agents_a,agents_b,milestone,metric")

    shifted = _table(2, 0.5, sse_mean=1.0, cax_mean=0.9)
    with pytest.raises(ValidationError):
        compare(shifted, single, margin=0.0, alpha=0.05, pair_agents=[(2, 1)])

    gappy = AggregateTable(rows=single.rows[1:])
    with pytest.raises(ValidationError):
        compare(single, gappy, margin=0.0, alpha=0.05)


# -- sweeps ------------------------------------------------------------------------


def test_sweep_spec_validation_and_combinations():
    with pytest.raises(ValidationError):
        SweepSpec(grid_values=(-1.0, 0.0))
    with pytest.raises(ValidationError):
        SweepSpec(varied=("weight_step_cost",))
    with pytest.raises(ValidationError):
        SweepSpec(replicates=0)

    spec = SweepSpec(grid_values=(0.0, 1.0), varied=SWEEPABLE_WEIGHTS[:2])
    combos = spec.combinations()
    assert len(combos) == 4
    assert combos[0] == {SWEEPABLE_WEIGHTS[0]: 0.0, SWEEPABLE_WEIGHTS[1]: 0.0}
    assert combos[-1] == {SWEEPABLE_WEIGHTS[0]: 1.0, SWEEPABLE_WEIGHTS[1]: 1.0}

    full = SweepSpec()
    assert len(full.combinations()) == 5 ** 5


def test_sweep_environments_are_shared_and_reproducible():
    spec = SweepSpec(replicates=3, rows=20, cols=20, master_seed=9)
    envs1 = spec.environments()
    envs2 = spec.environments()
    assert envs1 == envs2
    assert [e.map_id for e in envs1] == ["env-000", "env-001", "env-002"]
    for env in envs1:
        assert 0.2 <= env.scurve_threshold <= 0.8
        assert 0.5 <= env.scurve_power <= 8.0
    other = SweepSpec(replicates=3, rows=20, cols=20, master_seed=10)
    assert other.environments() != envs1


def test_run_sweep_tiny_grid(tmp_path):
    spec = SweepSpec(
        grid_values=(0.0, 1.0),
        varied=("weight_uncertainty",),
        replicates=2,
        rows=15,
        cols=15,
        budget=12,
        master_seed=4,
    )
    result = run_sweep(spec)
    assert result.skipped == []
    assert len(result.rows) == 2
    assert [r.rank for r in result.rows] == [1, 2]
    assert result.rows[0].mean_final_sse <= result.rows[1].mean_final_sse
    assert result.best == result.rows[0].weights
    out = tmp_path / "sweep.csv"
    result.save_csv(out)
    header = out.read_text().splitlines()[0]
    assert header.endswith("mean_final_sse,mean_final_ca90,rank")


def test_run_sweep_skips_degenerate_combinations():
    spec = SweepSpec(
        grid_values=(0.0,),
        varied=SWEEPABLE_WEIGHTS,
        replicates=1,
        rows=15,
        cols=15,
        budget=12,
    )
    result = run_sweep(spec)
    assert result.rows == []
    assert result.skipped == [{k: 0.0 for k in SWEEPABLE_WEIGHTS}]
