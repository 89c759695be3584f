"""Command-line front end: ``simulate``, ``calibrate``, ``genlut`` and ``validate``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .calibration import calibrate_beta, load_ensemble
from .errors import L2smError
from .lut import DEFAULT_CBS_GRID, default_lut, generate_synthetic_lut, load_lut, save_lut
from .sim import (
    config_from_dict,
    config_to_dict,
    emit_results,
    expand_sweep,
    load_config,
    load_config_dict,
    run_sweep,
    sweep_dicts,
)

log = logging.getLogger("nrl2sm")


def _parse_sweep(text: str):
    """``key=v1,v2,...`` -> (key, [values])."""
    if "=" not in text:
        raise argparse.ArgumentTypeError("sweep must look like key=v1,v2,...")
    key, raw = text.split("=", 1)
    values = []
    for item in raw.split(","):
        item = item.strip()
        try:
            values.append(json.loads(item))
        except json.JSONDecodeError:
            values.append(item)
    if not values:
        raise argparse.ArgumentTypeError("sweep needs at least one value")
    return key.strip(), values


def cmd_simulate(args) -> int:
    dicts = [load_config_dict(args.config, args.set)]
    for key, values in args.sweep or []:
        dicts = [d for base in dicts for d in sweep_dicts(base, key, values)]
    configs = [config_from_dict(d) for d in dicts]
    if args.seeds:
        configs = [c for cfg in configs for c in expand_sweep(cfg, "seed", range(cfg.seed, cfg.seed + args.seeds))]
    lut_paths = {c.lut_path for c in configs}
    if len(lut_paths) != 1:
        raise L2smError("all runs of one invocation must share lut_path")
    lut_path = lut_paths.pop()
    lut = load_lut(lut_path) if lut_path else None
    rows = run_sweep(configs, lut, jobs=args.jobs)
    emit_results(rows, args.format, args.output, args.trace)
    for m in rows:
        log.info("%s seed=%d snr=%.2f dB app_loss=%.2f%% phy_loss=%.2f%% mcs=%d",
                 m.label or "-", m.seed, m.snr_db, m.app_loss_pct, m.phy_loss_pct, m.mcs_mode_stat)
    return 0


def cmd_calibrate(args) -> int:
    lut = load_lut(args.lut) if args.lut else None
    ensemble = load_ensemble(args.ensemble, lut=lut)
    res = calibrate_beta(ensemble, args.beta_min, args.beta_max, args.tolerance)
    table_id, index = ensemble.mcs
    doc = {
        "mcs": {"table_id": table_id.label, "index": index},
        "beta_opt": res.beta_opt,
        "objective_value": res.objective_value,
        "at_boundary": res.at_boundary,
        "beta_insensitive": res.beta_insensitive,
        "realizations": len(ensemble.realizations),
        "dropped": ensemble.dropped,
    }
    if args.trace:
        doc["search_trace"] = [list(p) for p in res.search_trace]
    text = json.dumps(doc, indent=2) + "\n"
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def cmd_genlut(args) -> int:
    cbs_grid = [int(c) for c in args.cbs.split(",")] if args.cbs else DEFAULT_CBS_GRID
    lut = generate_synthetic_lut(cbs_grid=cbs_grid, table_ids=args.tables, seed=args.seed)
    save_lut(lut, args.output)
    log.info("wrote %d curve families to %s", len(lut.curves), args.output)
    return 0


def cmd_validate(args) -> int:
    if not args.lut and not args.config:
        raise L2smError("nothing to validate: pass --lut and/or --config")
    if args.lut:
        lut = load_lut(args.lut)
        print(f"{args.lut}: ok ({len(lut.curves)} MCS families, generator {lut.generator})")
    if args.config:
        cfg = load_config(args.config, args.set)
        if cfg.lut_path:
            load_lut(cfg.lut_path)
        else:
            default_lut()
        config_from_dict(config_to_dict(cfg))
        print(f"{args.config}: ok ({cfg.n_packets} packets at {cfg.snr_db:.2f} dB)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nrl2sm", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run the end-to-end link simulator")
    s.add_argument("config", nargs="?", help="JSON config file (defaults are used when omitted)")
    s.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="dotted override, e.g. mcs_mode.index=20 (repeatable)")
    s.add_argument("--sweep", action="append", type=_parse_sweep, metavar="KEY=V1,V2,...",
                   help="one run per value; repeat for a cartesian product")
    s.add_argument("--seeds", type=int, default=0, help="replicate each run over this many seeds")
    s.add_argument("--format", choices=("csv", "json"), default="csv")
    s.add_argument("-o", "--output", required=True, help="metrics file")
    s.add_argument("--trace", help="per-packet trace CSV of the first run")
    s.add_argument("-j", "--jobs", type=int, default=1, help="parallel worker processes")
    s.set_defaults(func=cmd_simulate)

    c = sub.add_parser("calibrate", help="fit beta to a fading-channel ensemble")
    c.add_argument("ensemble", help="ensemble JSON file")
    c.add_argument("--lut", help="LUT providing the AWGN reference (default: shipped LUT)")
    c.add_argument("--beta-min", type=float, default=0.1)
    c.add_argument("--beta-max", type=float, default=300.0)
    c.add_argument("--tolerance", type=float, default=1e-3)
    c.add_argument("--trace", action="store_true", help="include the search trace")
    c.add_argument("-o", "--output", help="result file (default: stdout)")
    c.set_defaults(func=cmd_calibrate)

    g = sub.add_parser("genlut", help="generate a synthetic AWGN BLER LUT")
    g.add_argument("-o", "--output", required=True)
    g.add_argument("--cbs", help="comma-separated CBS grid")
    g.add_argument("--tables", nargs="+", help="MCS tables to include (default: all)")
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(func=cmd_genlut)

    v = sub.add_parser("validate", help="check a LUT file and/or a simulation config")
    v.add_argument("--lut")
    v.add_argument("--config")
    v.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    v.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (L2smError, OSError) as exc:
        print(f"nrl2sm {args.command}: error: {exc}", file=sys.stderr)
        return 2
