"""Command line interface.

Subcommands: gen-maps, simulate, sweep, analyze, report, serve, replay,
operator-sim.  Run ``fieldswarm <command> --help`` for flags.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .envgen import (
    LAYOUT_NAMES,
    FbfParams,
    SCurveParams,
    apply_scurve,
    generate_fbf,
    obstacle_layout,
)
from .grid import GridMap, GridSpec
from .harness import (
    SWEEP_OBJECTIVE,
    AggregateTable,
    EpisodeMetrics,
    SweepSpec,
    aggregate_metrics,
    compare,
    derive_seed,
    milestone_rounds,
    run_sweep,
)
from .metrics import timeline_from_trace
from .opsim import (
    HttpSessionClient,
    OperatorModel,
    run_lockstep,
    run_threaded,
    save_transcripts,
)
from .planner import ScoreWeights
from .session import SessionRecord, replay_session
from .strategies import PLACEMENT_NAMES, STRATEGY_KINDS, StrategyConfig, run_episode

log = logging.getLogger("fieldswarm")

DEFAULT_MILESTONES = (0.25, 0.50, 1.00)


def _cmd_gen_maps(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    spec = GridSpec(rows=args.rows, cols=args.cols, cell_size_m=args.cell_size)
    manifest = {"layout": args.layout, "maps": []}
    for i in range(args.count):
        seed = derive_seed(args.seed, "map", i)
        truth = generate_fbf(FbfParams(spec=spec, seed=seed, hurst=args.hurst))
        if args.scurve_threshold is not None:
            truth = apply_scurve(
                truth,
                SCurveParams(
                    threshold_value=args.scurve_threshold,
                    curve_power=args.scurve_power,
                ),
            )
        map_id = f"map-{i:03d}"
        truth.save(out / f"{map_id}.json")
        manifest["maps"].append({"map_id": map_id, "file": f"{map_id}.json", "seed": seed})
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
    print(f"wrote {args.count} maps to {out}")
    return 0


def _load_map_dir(maps_dir: Path) -> list[tuple[str, Path, str]]:
    """(map_id, path, layout) triples from a gen-maps directory."""
    manifest_path = maps_dir / "manifest.json"
    if manifest_path.is_file():
        with open(manifest_path, "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
        layout = manifest.get("layout", "none")
        return [
            (m["map_id"], maps_dir / m["file"], layout) for m in manifest["maps"]
        ]
    paths = sorted(p for p in maps_dir.glob("*.json") if p.name != "manifest.json")
    return [(p.stem, p, "none") for p in paths]


def _cmd_simulate(args) -> int:
    maps = _load_map_dir(Path(args.maps))
    if not maps:
        print(f"no maps found in {args.maps}", file=sys.stderr)
        return 2
    out = Path(args.out)
    label = f"{args.strategy}-{args.agents}"
    (out / "traces").mkdir(parents=True, exist_ok=True)
    (out / "timelines" / label).mkdir(parents=True, exist_ok=True)
    weights = (
        ScoreWeights.from_file(args.weights, num_agents=args.agents)
        if args.weights
        else None
    )
    episodes = []
    rounds_total = None
    for map_id, path, manifest_layout in maps:
        truth = GridMap.load(path)
        layout = args.obstacles if args.obstacles is not None else manifest_layout
        mask = obstacle_layout(layout, truth.spec)
        config = StrategyConfig(
            kind=args.strategy,
            weights=weights,
            total_step_budget=args.budget,
            num_agents=args.agents,
            placement=args.placement,
            rng_seed=derive_seed(args.seed, map_id, args.strategy),
        )
        rounds_total = config.movement_rounds
        if args.metrics == "milestones":
            metric_rounds = sorted(set(milestone_rounds(DEFAULT_MILESTONES, rounds_total)))
        else:
            metric_rounds = None
        trace = run_episode(truth, mask, config, metric_rounds=metric_rounds)
        trace.save(out / "traces" / f"{map_id}.jsonl")
        timeline = timeline_from_trace(trace, truth, mask)
        timeline.save_csv(out / "timelines" / label / f"{map_id}.csv")
        episodes.append(
            EpisodeMetrics(
                label=args.strategy,
                agents=args.agents,
                map_id=map_id,
                rows=tuple(timeline.rows),
            )
        )
        log.info("episode done: %s", map_id)
    table = aggregate_metrics(
        episodes,
        DEFAULT_MILESTONES,
        {(args.strategy, args.agents): rounds_total},
    )
    table.save_csv(out / "aggregate.csv")
    print(f"{len(episodes)} episodes -> {out}")
    return 0


def _cmd_sweep(args) -> int:
    fields: dict = {}
    if args.spec:
        with open(args.spec, "r", encoding="utf-8") as fh:
            fields.update(json.load(fh))
    for key in (
        "replicates",
        "rows",
        "cols",
        "budget",
        "master_seed",
        "parallelism",
    ):
        value = getattr(args, key)
        if value is not None:
            fields[key] = value
    if args.values:
        fields["grid_values"] = tuple(float(v) for v in args.values.split(","))
    if args.varied:
        fields["varied"] = tuple(args.varied.split(","))
    if "grid_values" in fields:
        fields["grid_values"] = tuple(fields["grid_values"])
    if "varied" in fields:
        fields["varied"] = tuple(fields["varied"])
    spec = SweepSpec(**fields)
    n_combos = len(spec.grid_values) ** len(spec.varied)
    log.info("sweep: %d combinations x %d replicates", n_combos, spec.replicates)
    result = run_sweep(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result.save_csv(out / "sweep.csv")
    best = result.rows[0]
    with open(out / "best.json", "w", encoding="utf-8") as fh:
        json.dump(
            {
                "objective": SWEEP_OBJECTIVE,
                "weights": best.weights.to_mapping(),
                "mean_final_sse": best.mean_final_sse,
                "mean_final_ca90": best.mean_final_ca90,
                "combinations": n_combos,
                "skipped": result.skipped,
            },
            fh,
            indent=2,
        )
    print(f"best combination: {best.weights.to_mapping()}")
    return 0


def _aggregate_path(path_arg: str) -> Path:
    path = Path(path_arg)
    return path / "aggregate.csv" if path.is_dir() else path


def _cmd_analyze(args) -> int:
    table_a = AggregateTable.load_csv(_aggregate_path(args.a))
    table_b = AggregateTable.load_csv(_aggregate_path(args.b))
    pair_agents = None
    if args.pair_agents:
        pair_agents = [
            tuple(int(x) for x in pair.split(":"))
            for pair in args.pair_agents.split(",")
        ]
    result = compare(
        table_a, table_b, margin=args.margin, alpha=args.alpha, pair_agents=pair_agents
    )
    result.save_csv(args.out)
    rejected = sum(c.reject for c in result.cells)
    print(
        f"{rejected}/{len(result.cells)} cells significant at margin "
        f"{args.margin:.0%}, alpha {args.alpha} -> {args.out}"
    )
    return 0


def _cmd_report(args) -> int:
    from .report import render_run_figures

    written = render_run_figures(args.run, fig_dir=args.out)
    for path in written:
        print(f"wrote {path}")
    return 0


def _cmd_serve(args) -> int:
    from .server import serve

    serve(port=args.port, host=args.host, log_dir=args.log_dir, ui_dir=args.ui_dir)
    return 0


def _cmd_replay(args) -> int:
    record = SessionRecord.load(args.log)
    truth = GridMap.load(args.truth) if args.truth else None
    session = replay_session(record, truth=truth)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    state = session.state()
    for key in ("estimate", "uncertainty"):
        with open(out / f"{key}.json", "w", encoding="utf-8") as fh:
            json.dump(state[key], fh)
    with open(out / "state.json", "w", encoding="utf-8") as fh:
        json.dump(state, fh, indent=2)
    if truth is not None and state.get("timeline"):
        keys = list(state["timeline"][0].keys())
        with open(out / "timeline.csv", "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(keys)
            for row in state["timeline"]:
                writer.writerow([row[k] for k in keys])
    print(f"replayed {len(record.events)} events -> {out}")
    return 0


def _cmd_operator_sim(args) -> int:
    truth = GridMap.load(args.truth)
    rng = np.random.default_rng(args.seed)
    models = []
    for i in range(args.count):
        speed = args.speed if args.speed is not None else float(rng.uniform(1.0, 1.8))
        models.append(
            OperatorModel(
                speed_mps=speed,
                gps_noise_sigma_m=args.noise_sigma,
                compliance=args.compliance,
                sloppy_radius_m=args.sloppy_radius,
                rng_seed=derive_seed(args.seed, "operator", i),
            )
        )
    clients = [
        HttpSessionClient(args.server, args.session) for _ in range(args.count)
    ]
    runner = run_threaded if args.threaded else run_lockstep
    transcripts = runner(clients, models, truth)
    paths = save_transcripts(transcripts, args.out)
    readings = sum(
        1 for tr in transcripts for entry in tr.entries if entry["kind"] == "reading"
    )
    print(f"{len(paths)} transcripts ({readings} readings) -> {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fieldswarm",
        description="Adaptive soil-mapping toolkit: simulation, analysis, field service.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-maps", help="generate synthetic truth maps")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--rows", type=int, default=100)
    p.add_argument("--cols", type=int, default=100)
    p.add_argument("--cell-size", type=float, default=1.0)
    p.add_argument("--hurst", type=float, default=0.7)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--layout", choices=LAYOUT_NAMES, default="none")
    p.add_argument("--scurve-threshold", type=float, default=None)
    p.add_argument("--scurve-power", type=float, default=1.0)
    p.set_defaults(func=_cmd_gen_maps)

    p = sub.add_parser("simulate", help="run one strategy over a map directory")
    p.add_argument("--maps", required=True)
    p.add_argument("--strategy", choices=STRATEGY_KINDS, required=True)
    p.add_argument("--agents", type=int, default=1)
    p.add_argument("--budget", type=int, default=800)
    p.add_argument("--weights", default=None, help="key=value weight file")
    p.add_argument("--obstacles", choices=LAYOUT_NAMES, default=None)
    p.add_argument("--placement", choices=PLACEMENT_NAMES, default="center")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument(
        "--metrics",
        choices=("per-round", "milestones"),
        default="per-round",
        help="evaluate reconstruction every round, or only at milestones",
    )
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("sweep", help="full-factorial score-weight sweep")
    p.add_argument("--spec", default=None, help="JSON file of SweepSpec fields")
    p.add_argument("--out", required=True)
    p.add_argument("--values", default=None, help="comma-separated grid values")
    p.add_argument("--varied", default=None, help="comma-separated weight keys")
    p.add_argument("--replicates", type=int, default=None)
    p.add_argument("--rows", type=int, default=None)
    p.add_argument("--cols", type=int, default=None)
    p.add_argument("--budget", type=int, default=None)
    p.add_argument("--master-seed", dest="master_seed", type=int, default=None)
    p.add_argument("--parallelism", type=int, default=None)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("analyze", help="margin-shifted significance comparison")
    p.add_argument("--a", required=True, help="run dir or aggregate.csv (candidate)")
    p.add_argument("--b", required=True, help="run dir or aggregate.csv (baseline)")
    p.add_argument("--margin", type=float, default=0.10)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--pair-agents", default=None, help='e.g. "2:1,4:2,8:4"')
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("report", help="render figures from a run directory")
    p.add_argument("--run", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("serve", help="start the field coordination server")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="0.0.0.0")
    p.add_argument("--log-dir", default=None)
    p.add_argument("--ui-dir", default=None)
    p.set_defaults(func=_cmd_serve)

    p = sub.add_parser("replay", help="rebuild a session from its event log")
    p.add_argument("--log", required=True)
    p.add_argument("--truth", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_replay)

    p = sub.add_parser("operator-sim", help="simulated operators against a server")
    p.add_argument("--server", required=True)
    p.add_argument("--session", required=True)
    p.add_argument("--count", type=int, default=4)
    p.add_argument("--truth", required=True)
    p.add_argument("--noise-sigma", dest="noise_sigma", type=float, default=2.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--speed", type=float, default=None)
    p.add_argument("--compliance", choices=("strict", "sloppy"), default="strict")
    p.add_argument("--sloppy-radius", dest="sloppy_radius", type=float, default=5.0)
    p.add_argument("--threaded", action="store_true")
    p.set_defaults(func=_cmd_operator_sim)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    if not args.verbose:
        logging.getLogger("httpx").setLevel(logging.WARNING)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
