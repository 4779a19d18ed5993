"""Command-line entry points: scenario runner, calibration bench, trace
generation, and the realtime serve mode for the operator console."""

from __future__ import annotations

import argparse
import json
import os
import sys
from typing import List, Optional

from .core import GpsFix
from .harness import (
    ConfigInvalid,
    TraceNotFound,
    ScenarioRuntime,
    bench_table1,
    load_config,
    run_scenario,
    DEFAULT_FACE_POOL,
    DEFAULT_PLATE_POOL,
)
from .http_api import ApiHttpServer
from .synthscene import BadCode, gen_trace, write_trace

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2


class _Parser(argparse.ArgumentParser):
    # bad arguments are configuration errors: exit 1, not argparse's 2
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_CONFIG)


def build_parser() -> _Parser:
    parser = _Parser(prog="vcsim",
                     description="Vehicular-cloud video pipeline simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a scenario and emit its metrics report")
    run_p.add_argument("--config", required=True, help="scenario JSON path")
    run_p.add_argument("--mode", choices=["virtual", "realtime"])
    run_p.add_argument("--seed", type=int)
    run_p.add_argument("--out", help="write the report JSON here (default: stdout)")
    run_p.add_argument("--snapshot-dir",
                       help="write detections.jsonl / watchlist.jsonl here")

    bench_p = sub.add_parser("bench", help="calibration benches")
    bench_sub = bench_p.add_subparsers(dest="bench_target", required=True)
    table1_p = bench_sub.add_parser("table1",
                                    help="compare modeled times to the measured table")
    table1_p.add_argument("--out", help="write the comparison JSON here")

    trace_p = sub.add_parser("trace", help="trace utilities")
    trace_sub = trace_p.add_subparsers(dest="trace_cmd", required=True)
    gen_p = trace_sub.add_parser("gen", help="generate a synthetic drive trace")
    gen_p.add_argument("--steps", type=int, required=True)
    gen_p.add_argument("--seed", type=int, default=42)
    gen_p.add_argument("--step-ms", type=int, default=1000)
    gen_p.add_argument("--speed-mps", type=float, default=13.9)
    gen_p.add_argument("--plates", help="file with one plate code per line")
    gen_p.add_argument("--faces", help="file with one face code per line")
    gen_p.add_argument("--repeat-prob", type=float, default=0.0)
    gen_p.add_argument("--start-lat", type=float, default=48.8566)
    gen_p.add_argument("--start-lon", type=float, default=2.3522)
    gen_p.add_argument("--vehicle-id", type=int, default=1)
    gen_p.add_argument("--width", type=int, default=177)
    gen_p.add_argument("--height", type=int, default=93)
    gen_p.add_argument("--out", required=True)

    serve_p = sub.add_parser("serve",
                             help="realtime run with the HTTP API for the console")
    serve_p.add_argument("--config", required=True)
    serve_p.add_argument("--host")
    serve_p.add_argument("--port", type=int)
    serve_p.add_argument("--static", help="serve these files at / (console build)")
    serve_p.add_argument("--time-scale", type=float)
    return parser


def _cmd_run(args) -> int:
    config = load_config(args.config)
    if args.mode:
        config.mode = args.mode
    if args.seed is not None:
        config.seed = args.seed
    result = run_scenario(config)
    text = result.report_json()
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if args.snapshot_dir:
        os.makedirs(args.snapshot_dir, exist_ok=True)
        result.store.save_jsonl(os.path.join(args.snapshot_dir, "detections.jsonl"))
        result.watchlist.save_jsonl(os.path.join(args.snapshot_dir, "watchlist.jsonl"))
    return EXIT_OK


def _cmd_bench_table1(args) -> int:
    table = bench_table1()
    text = json.dumps(table, sort_keys=True, indent=2) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    header = f"{'metric':<26} {'measured':>10} {'paper':>8} {'rel_error':>10}"
    print(header)
    print("-" * len(header))
    for row in table["rows"]:
        print(f"{row['metric']:<26} {row['measured_s']:>9.4f}s {row['paper_s']:>7.2f}s "
              f"{row['rel_error']:>10.2e}")
    return EXIT_OK


def _read_pool(path: Optional[str], fallback, parse) -> List:
    if path is None:
        return list(fallback)
    with open(path, "r", encoding="utf-8") as fh:
        values = [parse(line.strip()) for line in fh if line.strip()]
    if not values:
        raise ConfigInvalid(f"pool file {path} is empty")
    return values


def _cmd_trace_gen(args) -> int:
    if args.steps < 1:
        raise ConfigInvalid("--steps must be >= 1")
    if not 0.0 <= args.repeat_prob <= 1.0:
        raise ConfigInvalid("--repeat-prob must be in [0, 1]")
    plates = _read_pool(args.plates, DEFAULT_PLATE_POOL, str)
    faces = _read_pool(args.faces, DEFAULT_FACE_POOL, int)
    start = GpsFix(round(args.start_lat * 1e7), round(args.start_lon * 1e7), 0)
    trace = gen_trace(args.seed, args.steps, args.step_ms, start, args.speed_mps,
                      plates, faces, args.repeat_prob,
                      frame_width=args.width, frame_height=args.height,
                      vehicle_id=args.vehicle_id)
    write_trace(trace, args.out)
    print(f"wrote {len(trace.steps)} steps to {args.out}")
    return EXIT_OK


def _cmd_serve(args) -> int:
    config = load_config(args.config)
    config.mode = "realtime"
    config.loop = True
    if args.host:
        config.api_host = args.host
    if args.port is not None:
        config.api_port = args.port
    if args.static:
        config.static_dir = args.static
    if args.time_scale is not None:
        config.time_scale = args.time_scale
    runtime = ScenarioRuntime(config)
    server = ApiHttpServer(runtime.gateway, host=config.api_host,
                           port=config.api_port, static_dir=config.static_dir)
    server.start()
    print(f"vcsim gateway listening on {server.base_url}")
    print("replaying traces in realtime; Ctrl-C to stop")
    try:
        runtime.net.clock.mode = "realtime"
        runtime.net.run_realtime(time_scale=config.time_scale)
    except KeyboardInterrupt:
        pass
    finally:
        server.stop()
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "bench":
            return _cmd_bench_table1(args)
        if args.command == "trace":
            return _cmd_trace_gen(args)
        if args.command == "serve":
            return _cmd_serve(args)
        parser.error(f"unknown command {args.command!r}")
    except (ConfigInvalid, TraceNotFound, BadCode, FileNotFoundError) as exc:
        sys.stderr.write(f"vcsim: config error: {exc}\n")
        return EXIT_CONFIG
    except KeyboardInterrupt:
        return EXIT_OK
    except Exception as exc:  # runtime failure contract
        sys.stderr.write(f"vcsim: runtime failure: {type(exc).__name__}: {exc}\n")
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
