"""Command-line entry points.

Subcommands:
  run <config>        run every configured seed; traces, reports, figures
  baselines <config>  print the LP upper bounds implied by a config
  gapdemo --step s    numerical duality-gap exhibit on a discretized interval
  goodedge <trace>    audit a pacing trace's jump edges and per-node regret

Exit codes: 0 success, 2 configuration error, 3 tree-capacity error.
"""
from __future__ import annotations

import argparse
import json
import sys

from .core import semi_infinite_gap_demo
from .fpa import CapacityError, good_edge_report
from .harness import (ConfigError, baseline_report, parse_config,
                      read_pacing_rounds, read_trace_csv, run_experiment)


def _cmd_run(args) -> int:
    cfg = parse_config(args.config)
    manifest = run_experiment(cfg)
    print(f"wrote {len(manifest['traces'])} trace(s) to {manifest['out_dir']}")
    agg = json.loads(manifest["aggregate"].read_text())
    print(f"total_reward mean={agg['total_reward']['mean']:.6g} "
          f"stdev={agg['total_reward']['stdev']:.6g}")
    print(f"tau mean={agg['tau']['mean']:.6g}")
    if agg["regret_vs_upper"]["mean"] is not None:
        print(f"regret_vs_upper mean={agg['regret_vs_upper']['mean']:.6g}")
    if agg["competitive_lhs"]["mean"] is not None:
        print(f"competitive_lhs mean={agg['competitive_lhs']['mean']:.6g}")
    return 0


def _cmd_baselines(args) -> int:
    cfg = parse_config(args.config)
    report = baseline_report(cfg)
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0


def _cmd_gapdemo(args) -> int:
    demo = semi_infinite_gap_demo(args.step)
    print(f"grid_step={demo.grid_step:g}")
    print(f"primal={demo.primal:.9g}")
    print(f"dual={demo.dual:.9g}")
    print(f"gap={demo.gap:.9g}")
    return 0


def _cmd_goodedge(args) -> int:
    parsed = read_trace_csv(args.trace)
    config = json.loads(parsed.meta.get("config", "{}"))
    if config.get("application") != "fpa_continuous":
        raise ConfigError("goodedge audits hierarchical pacing traces only")
    rounds_path = str(args.trace).replace(".csv", ".rounds.csv")
    rounds = read_pacing_rounds(rounds_path)
    horizon = int(config["T"])
    rho = float(config["rho"])
    levels = int(config.get("alg.levels") or 0) or None
    bid_step = float(config.get("alg.bid_step") or 0.0) or None
    report = good_edge_report(rounds, horizon, rho,
                              levels=levels, bid_step=bid_step,
                              node_cap=int(config.get("alg.node_cap", 200_000)),
                              eta_rule=config.get("alg.eta_rule", "per_level_rate"))
    print(f"rounds_checked={report.rounds_checked}")
    print(f"violations={report.violation_count}")
    for t, node, gap, margin in report.violations[:20]:
        print(f"  round {t} node {node}: gap {gap:.6g} exceeds margin {margin:.6g}")
    worst = max(report.node_regrets, key=lambda nr: nr.regret - nr.bound)
    print(f"worst node regret slack={worst.bound - worst.regret:.6g} "
          f"(node {worst.node}, level {worst.level})")
    over = [nr for nr in report.node_regrets if nr.regret > nr.bound]
    print(f"node_regret_bound_exceedances={len(over)}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="knapdual",
                                     description="Budget-constrained online learning harness")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a configured experiment")
    p_run.add_argument("config")
    p_run.set_defaults(func=_cmd_run)

    p_base = sub.add_parser("baselines", help="print LP upper bounds for a config")
    p_base.add_argument("config")
    p_base.set_defaults(func=_cmd_baselines)

    p_gap = sub.add_parser("gapdemo", help="duality-gap exhibit")
    p_gap.add_argument("--step", type=float, required=True)
    p_gap.set_defaults(func=_cmd_gapdemo)

    p_edge = sub.add_parser("goodedge", help="audit a pacing trace")
    p_edge.add_argument("trace")
    p_edge.set_defaults(func=_cmd_goodedge)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except CapacityError as exc:
        print(f"capacity error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
