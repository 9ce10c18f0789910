"""Command line front end: run scenarios, replay logs, summarize metrics,
and serve the operator gateway.

    swarmsim run     --scenario s.yaml [--seed N] [--duration S] [--out log.ndjson]
    swarmsim replay  --log log.ndjson [--speed X] [--out filtered.ndjson]
    swarmsim metrics --scenario s.yaml | --log log.ndjson [--out report.json]
    swarmsim serve   --scenario s.yaml [--host H] [--port P] [--push-hz R]
"""

from __future__ import annotations

import argparse
import asyncio
import json
import sys
import time

import yaml

from .gateway import serve as gateway_serve
from .metrics import MetricsReport, land_rate, launch_rate
from .scenario import scenario_from_dict
from .simkernel import RunLog, SimKernel


def _load(args) -> "SimKernel":
    with open(args.scenario) as fh:
        doc = yaml.safe_load(fh)
    # seed has to be overridden before parsing: the wind and channel seeds
    # default to offsets of it
    if args.seed is not None:
        doc["seed"] = args.seed
        for key in ("wind", "sensor"):
            if isinstance(doc.get(key), dict):
                doc[key].pop("seed", None)
        for ch in (doc.get("channels") or {}).values():
            if isinstance(ch, dict):
                ch.pop("seed", None)
    cfg = scenario_from_dict(doc)
    if args.duration is not None:
        cfg.duration = args.duration
    return SimKernel(cfg, parallel=getattr(args, "parallel", False))


def cmd_run(args) -> int:
    kernel = _load(args)
    t0 = time.perf_counter()
    log, report = kernel.run()
    wall = time.perf_counter() - t0
    if args.out:
        log.to_ndjson(args.out)
    summary = report.as_dict()
    summary["digest"] = log.digest
    summary["wall_seconds"] = round(wall, 3)
    json.dump(summary, sys.stdout, indent=2)
    print()
    return 0


def cmd_replay(args) -> int:
    records = RunLog.read_ndjson(args.log)
    out = open(args.out, "w") if args.out else sys.stdout
    last_t = None
    try:
        for rec in records:
            if args.kind and rec["kind"] != args.kind:
                continue
            if args.agent is not None and rec["agent"] != args.agent:
                continue
            if args.speed > 0 and last_t is not None:
                time.sleep(max(0.0, rec["t"] - last_t) / args.speed)
            last_t = rec["t"]
            out.write(json.dumps(rec, sort_keys=True) + "\n")
    finally:
        if args.out:
            out.close()
    return 0


def metrics_from_log(records: list[dict]) -> MetricsReport:
    """Rebuild the rate metrics a run reported from its recorded events."""
    agents = {r["agent"] for r in records if r["agent"] != 0}
    t_launch = t_land = None
    liftoffs: dict[int, float] = {}
    landings: dict[int, float] = {}
    counters: dict = {}
    for r in records:
        if r["kind"] != "event":
            continue
        if r["event"] == "mission_issued":
            if r["data"]["kind"] == "launch" and t_launch is None:
                t_launch = r["t"]
            elif r["data"]["kind"] == "land" and t_land is None:
                t_land = r["t"]
        elif r["event"] == "liftoff":
            liftoffs.setdefault(r["agent"], r["t"])
        elif r["event"] == "landed":
            landings.setdefault(r["agent"], r["t"])
        elif r["event"] == "channel_counters":
            counters = r["data"]
    n = len(agents)
    report = MetricsReport(duration=records[-1]["t"] if records else 0.0,
                           n_agents=n)
    if liftoffs and t_launch is not None:
        taus = sorted(t - t_launch for t in liftoffs.values())
        report.launch_times = taus
        report.launch_rate = launch_rate(taus, n).value
    if landings and t_land is not None:
        taus = sorted(t - t_land for t in landings.values())
        report.land_times = taus
        report.land_rate = land_rate(taus, n).value
    report.channel_counters = {"latency_sensitive": counters}
    return report


def cmd_metrics(args) -> int:
    if args.log:
        report = metrics_from_log(RunLog.read_ndjson(args.log))
    else:
        _, report = _load(args).run()
    text = json.dumps(report.as_dict(), indent=2)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return 0


def cmd_serve(args) -> int:
    kernel = _load(args)
    print(f"serving {args.scenario} on {args.host}:{args.port} "
          f"at {args.push_hz} Hz", file=sys.stderr)
    asyncio.run(gateway_serve(kernel, host=args.host, port=args.port,
                              push_hz=args.push_hz,
                              realtime=not args.no_realtime))
    return 0


def _add_scenario_flags(p: argparse.ArgumentParser, required: bool = True):
    p.add_argument("--scenario", required=required, help="scenario YAML file")
    p.add_argument("--seed", type=int, default=None, help="override seed")
    p.add_argument("--duration", type=float, default=None,
                   help="override duration, s")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="swarmsim", description="fixed-wing UAV swarm simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a scenario and print a metrics summary")
    _add_scenario_flags(p)
    p.add_argument("--out", default=None, help="write the run log (NDJSON)")
    p.add_argument("--parallel", action="store_true",
                   help="step agents in parallel (identical results)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("replay", help="stream a recorded run log")
    p.add_argument("--log", required=True, help="NDJSON run log")
    p.add_argument("--speed", type=float, default=0.0,
                   help="real-time multiplier; 0 streams flat out")
    p.add_argument("--kind", choices=["state", "event"], default=None)
    p.add_argument("--agent", type=int, default=None)
    p.add_argument("--out", default=None, help="write instead of stdout")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("metrics",
                       help="metrics from a scenario run or a recorded log")
    _add_scenario_flags(p, required=False)
    p.add_argument("--log", default=None, help="NDJSON run log to analyze")
    p.add_argument("--out", default=None, help="write JSON report here")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("serve", help="run a scenario behind the gateway")
    _add_scenario_flags(p)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8808)
    p.add_argument("--push-hz", type=float, default=2.0,
                   help="snapshot push rate")
    p.add_argument("--no-realtime", action="store_true",
                   help="run the sim flat out instead of paced")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "metrics" and not args.scenario and not args.log:
        build_parser().error("metrics needs --scenario or --log")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
