"""Command-line entry point: scenario runs, bound analysis, ledger I/O."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .analysis import AnalysisError, bound_report
from .harness import SCENARIO_NAMES, ScenarioError, emit_csv, run_scenario
from .ledger import Ledger, LedgerError, load_ledger, save_ledger
from .sites import KeyedDigestScheme, StyleIndicator, build_site
from .simconfig import ConfigError, SimConfig


def _load_config(path: str | None) -> SimConfig:
    if path is None:
        return SimConfig().validate()
    return SimConfig.from_json(path)


def _cmd_sim(args) -> int:
    cfg = _load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
        cfg.validate()
    log = run_scenario(cfg, args.scenario)
    paths = emit_csv(log, args.out)
    for name in sorted(paths):
        print(f"{name}: {paths[name]}")
    return 0


def _cmd_analyze_bound(args) -> int:
    params = json.loads(Path(args.params).read_text())
    report = bound_report(
        gamma=params.get("gamma"),
        epsilon=params["epsilon"],
        horizon=params["horizon"],
        h_min=params["h_min"],
        h_max=params["h_max"],
        k_max=params["k_max"],
    )
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0


def demo_ledger(sites: int, seed: int, beta: float = 5.0) -> Ledger:
    """Small seeded random ledger used for export demos and golden tests."""
    from .ledger import select_tips

    rng = np.random.default_rng(seed)
    scheme = KeyedDigestScheme()
    key = scheme.new_key(rng)
    ledger = Ledger()
    for _ in range(2):
        ledger.append(
            build_site(None, StyleIndicator(float(rng.uniform())), (), key, scheme,
                       difficulty_bits=0)
        )
    for _ in range(max(0, sites - 2)):
        style = float(rng.uniform())
        selection = select_tips(ledger, style, rng, beta=beta)
        ledger.append(
            build_site(None, StyleIndicator(style), selection.digests(), key, scheme,
                       difficulty_bits=0)
        )
    return ledger


def _cmd_ledger(args) -> int:
    if args.action == "export":
        ledger = demo_ledger(args.sites, args.seed)
        save_ledger(ledger, args.file)
        print(f"exported {len(ledger)} sites to {args.file}")
        return 0
    ledger = load_ledger(args.file)
    tips = ledger.tip_count
    print(f"imported {len(ledger)} sites, {tips} tips, "
          f"assortativity {ledger.style_assortativity():.4f}")
    return 0


def _cmd_validate_config(args) -> int:
    cfg = SimConfig.from_json(args.file)
    print(f"ok: seed={cfg.seed} digest={cfg.digest()[:12]}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dagshare",
        description="DAG-ledger knowledge sharing simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("sim", help="run a scenario and emit CSV metrics")
    p_sim.add_argument("scenario", choices=SCENARIO_NAMES)
    p_sim.add_argument("--config", default=None, help="scenario config JSON")
    p_sim.add_argument("--out", required=True, help="output directory")
    p_sim.add_argument("--seed", type=int, default=None, help="override config seed")
    p_sim.set_defaults(func=_cmd_sim)

    p_analyze = sub.add_parser("analyze", help="closed-form analysis tools")
    analyze_sub = p_analyze.add_subparsers(dest="what", required=True)
    p_bound = analyze_sub.add_parser("bound", help="convergence bound minimizer")
    p_bound.add_argument("--params", required=True, help="JSON with epsilon, horizon, h_min, h_max, k_max [, gamma]")
    p_bound.set_defaults(func=_cmd_analyze_bound)

    p_ledger = sub.add_parser("ledger", help="export or import a ledger file")
    ledger_sub = p_ledger.add_subparsers(dest="action", required=True)
    p_export = ledger_sub.add_parser("export", help="write a seeded demo ledger")
    p_export.add_argument("file")
    p_export.add_argument("--sites", type=int, default=50)
    p_export.add_argument("--seed", type=int, default=7)
    p_export.set_defaults(func=_cmd_ledger, action="export")
    p_import = ledger_sub.add_parser("import", help="read and check a ledger file")
    p_import.add_argument("file")
    p_import.set_defaults(func=_cmd_ledger, action="import")

    p_validate = sub.add_parser("validate-config", help="check a config file")
    p_validate.add_argument("file")
    p_validate.set_defaults(func=_cmd_validate_config)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ScenarioError, LedgerError, AnalysisError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
