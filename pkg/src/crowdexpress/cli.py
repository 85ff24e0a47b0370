"""``crowdexpress`` command line.

Exit codes: 0 success, 1 usage error (bad flags or values), 2 data error
(malformed CSV, network or config files, replay preconditions).
"""
from __future__ import annotations

import argparse
import csv
import io as _io
import json
import logging
import os
import pathlib
import sys
from importlib import resources

from . import __version__
from .config import DEFAULTS, RunConfig
from .io import load_network, read_trajectories, save_network, write_trajectories
from .model import CrowdExpressError, DataError
from .network import build_network, reference_paths
from .prob import TooLarge, brute_force_max_prob, max_prob
from .scheduler import Policy
from .simulator import OD_SAMPLING, SWEEP_DIMENSIONS, replay, sweep, write_run
from .synthetic import SyntheticSpec

log = logging.getLogger("crowdexpress")

FIXTURE = "fixture"
REPORT_METRICS = ("success_rate", "mean_relays", "throughput_per_day", "mean_decision_latency_us")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage().rstrip()}\n{self.prog}: error: {message}")


def _defaults_epilog(prefixes) -> str:
    lines = ["config keys (file values; flags override):"]
    for key, (default, text) in DEFAULTS.items():
        if key.split(".")[0] in prefixes:
            lines.append(f"  {key} = {default!r}  {text}")
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="crowdexpress",
                description="On-time package delivery by hitchhiking taxi rides.",
                formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    def cmd(name, help_text, prefixes=()):
        sp = sub.add_parser(name, help=help_text, description=help_text,
                            epilog=_defaults_epilog(prefixes) if prefixes else None,
                            formatter_class=argparse.RawDescriptionHelpFormatter)
        sp.add_argument("--config", help="TOML file with dotted keys")
        sp.add_argument("--seed", type=int, help="seed for every random draw (default 0)")
        return sp

    trips_help = f"trajectory CSV, '{FIXTURE}' for the bundled one, or synthetic:key=value,..."

    b = cmd("build-network", "Cluster stations and estimate per-slot edges.", ("network", "slots"))
    b.add_argument("--trajectories", help=trips_help)
    b.add_argument("--out", help="network JSON to write")
    b.add_argument("--delta", type=float, help="matching radius, meters")
    b.add_argument("--min-flow", type=int, help="rides per slot needed to keep an edge")

    q = cmd("prob", "Maximum on-time probability between two stations.")
    q.add_argument("--network", required=True)
    q.add_argument("--from", dest="origin", type=int, required=True)
    q.add_argument("--to", dest="dest", type=int, required=True)
    q.add_argument("--budget", type=float, required=True, help="seconds")
    q.add_argument("--slot", type=int, required=True)
    q.add_argument("--oracle", action="store_true", help="exhaustive search instead of the DFS")
    q.add_argument("--first-wait", action="store_true", help="charge the waiting time of the first leg")

    s = cmd("simulate", "Replay a trip stream under one policy.",
            ("paths", "workload", "sim", "seed"))
    s.add_argument("--network")
    s.add_argument("--trajectories", help=trips_help)
    s.add_argument("--policy", help="maxProb, FCFS, DesCloser or Direct")
    s.add_argument("--packages", type=int)
    s.add_argument("--extraT", type=float, help="seconds")
    s.add_argument("--od-sampling", choices=OD_SAMPLING)
    s.add_argument("--out", help="run directory")

    w = cmd("sweep", "One replay per value of a workload or network dimension.",
            ("paths", "workload", "sim", "sweep"))
    w.add_argument("--network")
    w.add_argument("--trajectories", help=trips_help)
    w.add_argument("--training", help="trajectories to rebuild networks (station_density only)")
    w.add_argument("--policy")
    w.add_argument("--dimension", choices=SWEEP_DIMENSIONS)
    w.add_argument("--values", help="comma separated")
    w.add_argument("--packages", type=int)
    w.add_argument("--extraT", type=float)
    w.add_argument("--out", help="directory; one run directory per value")

    g = cmd("gen-synthetic", "Write a synthetic trip stream as trajectory CSV.")
    g.add_argument("--spec", default="synthetic",
                   help="synthetic:stations=34,city_seed=1,start=2013-01-14,days=1,rate_scale=1")
    g.add_argument("--out", required=True)

    r = sub.add_parser("report", help="Compare finished runs.", description="Compare finished runs.")
    r.add_argument("runs", nargs="+", help="run directories (searched recursively)")
    r.add_argument("--csv", help="also write the table as CSV")
    return p


# --------------------------------------------------------------------------
# helpers
# --------------------------------------------------------------------------


def _fixture_path() -> pathlib.Path:
    return pathlib.Path(str(resources.files("crowdexpress") / "data" / "trips_fixture.csv"))


def _load_trajectories(source: str, seed: int, scheme):
    if source == FIXTURE:
        return read_trajectories(_fixture_path()), None
    if SyntheticSpec.is_spec(source):
        try:
            spec = SyntheticSpec.parse(source)
        except ValueError as exc:
            raise UsageError(f"--trajectories: {exc}") from exc
        log.info("generating %s", source)
        return spec.generate(seed, scheme), spec
    return read_trajectories(source), None


def _need(value, flag: str):
    if value is None:
        raise UsageError(f"{flag} is required (flag or config file)")
    return value


def _policy(name: str) -> Policy:
    try:
        return Policy.parse(name)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _resolve(args, overrides) -> RunConfig:
    overrides = dict(overrides)
    overrides["seed"] = args.seed
    return RunConfig.resolve(args.config, overrides)


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------


def cmd_build_network(args) -> int:
    cfg = _resolve(args, {"paths.trajectories": args.trajectories, "paths.out": args.out,
                          "network.delta": args.delta, "network.min_flow": args.min_flow})
    source = _need(cfg["paths.trajectories"], "--trajectories")
    out = _need(cfg["paths.out"], "--out")
    scheme = cfg.slot_scheme()
    records, spec = _load_trajectories(source, cfg["seed"], scheme)
    # generated streams come with their true station layout
    stations = spec.city(scheme).stations if spec else None
    net = build_network(records, cfg.network_config(), scheme, stations=stations)
    save_network(net, out)
    print(json.dumps({"network": str(out), "stations": len(net), "edges": len(net.edges)}))
    return 0


def cmd_prob(args) -> int:
    net = load_network(args.network)
    for flag, v in (("--from", args.origin), ("--to", args.dest)):
        if not 0 <= v < len(net):
            raise UsageError(f"{flag}: station {v} not in network (0..{len(net) - 1})")
    if not 0 <= args.slot < net.slot_scheme.n_slots:
        raise UsageError(f"--slot: {args.slot} not in 0..{net.slot_scheme.n_slots - 1}")
    if args.budget < 0:
        raise UsageError("--budget must be non-negative")
    if args.oracle:
        try:
            res = brute_force_max_prob(args.origin, args.dest, args.budget, args.slot, net,
                                       include_first_wait=args.first_wait)
        except TooLarge as exc:
            raise UsageError(f"--oracle: {exc}") from exc
    else:
        refs = reference_paths(net)
        res = max_prob(args.origin, args.dest, args.budget, args.slot, net, refs,
                       include_first_wait=args.first_wait)
    print(json.dumps(res.to_dict()))
    return 0


def _replay_inputs(args, cfg: RunConfig):
    net = load_network(_need(cfg["paths.network"], "--network"))
    source = _need(cfg["paths.trajectories"], "--trajectories")
    records, _ = _load_trajectories(source, cfg["seed"], net.slot_scheme)
    if not records:
        raise DataError(f"{source}: no trajectories")
    workload = cfg.workload(min(r.start_time for r in records), net.slot_scheme)
    return net, reference_paths(net), records, workload


def cmd_simulate(args) -> int:
    cfg = _resolve(args, {
        "paths.network": args.network, "paths.trajectories": args.trajectories,
        "paths.out": args.out, "sim.policy": args.policy, "workload.packages": args.packages,
        "workload.extraT": args.extraT, "workload.od_sampling": args.od_sampling})
    policy = _policy(cfg["sim.policy"])
    out = _need(cfg["paths.out"], "--out")
    net, refs, records, workload = _replay_inputs(args, cfg)
    rep = replay(records, workload, policy, net, refs, overhead=cfg["sim.overhead"])
    write_run(rep, out, cfg.to_toml())
    print(json.dumps(rep.summary(), sort_keys=True))
    return 0


def _sweep_values(dimension: str, raw) -> list:
    items = raw.split(",") if isinstance(raw, str) else list(raw)
    conv = {"category": str, "n_packages": int, "station_density": int}.get(dimension, float)
    try:
        values = [conv(str(v).strip()) for v in items if str(v).strip()]
    except ValueError as exc:
        raise UsageError(f"--values: {exc}") from exc
    if not values:
        raise UsageError("--values: nothing to sweep")
    return values


def cmd_sweep(args) -> int:
    cfg = _resolve(args, {
        "paths.network": args.network, "paths.trajectories": args.trajectories,
        "paths.out": args.out, "sim.policy": args.policy, "workload.packages": args.packages,
        "workload.extraT": args.extraT, "sweep.dimension": args.dimension,
        "sweep.values": args.values})
    policy = _policy(cfg["sim.policy"])
    out = pathlib.Path(_need(cfg["paths.out"], "--out"))
    dimension = cfg["sweep.dimension"]
    values = _sweep_values(dimension, cfg["sweep.values"])
    net, refs, records, workload = _replay_inputs(args, cfg)
    training = None
    if dimension == "station_density":
        src = _need(args.training, "--training")
        training, _ = _load_trajectories(src, cfg["seed"], net.slot_scheme)
    reports = sweep(dimension, values, workload, policy, net, refs, records,
                    training=training)
    for v, rep in zip(values, reports):
        write_run(rep, out / f"{dimension}={v}", cfg.to_toml())
    _print_report([r.summary() for r in reports], None)
    return 0


def cmd_gen_synthetic(args) -> int:
    cfg = _resolve(args, {})
    try:
        spec = SyntheticSpec.parse(args.spec if SyntheticSpec.is_spec(args.spec)
                                   else f"{SyntheticSpec.PREFIX}:{args.spec}")
    except ValueError as exc:
        raise UsageError(f"--spec: {exc}") from exc
    records = spec.generate(cfg["seed"], cfg.slot_scheme())
    write_trajectories(records, args.out)
    print(json.dumps({"trajectories": str(args.out), "records": len(records)}))
    return 0


def _collect(runs) -> list[dict]:
    found = []
    for d in runs:
        root = pathlib.Path(d)
        paths = sorted(root.rglob("summary.json")) if root.is_dir() else []
        if not paths:
            log.warning("%s: no summary.json found, skipped", root)
        for p in paths:
            try:
                found.append(json.loads(p.read_text()))
            except (OSError, json.JSONDecodeError) as exc:
                log.warning("%s: unreadable summary (%s), skipped", p, exc)
    return found


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.4f}" if abs(v) < 100 else f"{v:.1f}"
    return str(v)


def _table(rows: list[list[str]]) -> str:
    if not rows:
        return ""
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    return "\n".join("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows)


def report_rows(summaries: list[dict]) -> list[list[str]]:
    """Header plus one row per (policy, sweep value)."""
    header = ["policy", "sweep", "value", *REPORT_METRICS]
    body = []
    for s in summaries:
        body.append([str(s.get("policy", "?")), str(s.get("sweep_dimension", "-")),
                     _fmt(s.get("sweep_value", "-"))] +
                    [_fmt(s.get(m, "")) for m in REPORT_METRICS])
    body.sort(key=lambda r: (r[1], r[0], r[2]))
    return [header] + body


def pivot_rows(summaries: list[dict], metric: str = "success_rate") -> list[list[str]]:
    """Policies down, sweep values across, for runs that belong to a sweep."""
    swept = [s for s in summaries if "sweep_value" in s]
    if not swept:
        return []
    values = sorted({s["sweep_value"] for s in swept}, key=lambda v: (str(type(v)), v))
    policies = sorted({s["policy"] for s in swept})
    cell = {(s["policy"], s["sweep_value"]): s.get(metric) for s in swept}
    dim = swept[0].get("sweep_dimension", "value")
    rows = [[f"{metric} / {dim}"] + [_fmt(v) for v in values]]
    for p in policies:
        rows.append([p] + [_fmt(cell.get((p, v), "")) for v in values])
    return rows


def _print_report(summaries, csv_path) -> None:
    rows = report_rows(summaries)
    print(_table(rows))
    pivot = pivot_rows(summaries)
    if pivot:
        print()
        print(_table(pivot))
    if csv_path:
        buf = _io.StringIO()
        csv.writer(buf, lineterminator="\n").writerows(rows)
        pathlib.Path(csv_path).write_text(buf.getvalue())


def cmd_report(args) -> int:
    summaries = _collect(args.runs)
    if not summaries:
        log.warning("no completed runs found")
    _print_report(summaries, args.csv)
    return 0


COMMANDS = {
    "build-network": cmd_build_network,
    "prob": cmd_prob,
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "gen-synthetic": cmd_gen_synthetic,
    "report": cmd_report,
}


def _setup_logging():
    level = os.environ.get("CROWDEXPRESS_LOG", "info").upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s", force=True)


def run(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        if "usage:" not in str(exc):
            print(parser.format_usage().rstrip(), file=sys.stderr)
        return 1
    except (CrowdExpressError, ValueError) as exc:
        print(f"crowdexpress: error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
