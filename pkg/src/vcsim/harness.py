"""Scenario orchestration: builds the vehicle/RSU/worker/gateway topology on
the simulated network, replays traces through it, and aggregates per-stage
latency metrics.

The default topology mirrors the reference bench rig: one RSU fronting two
cloud workers, with link and service times calibrated so that one 16.5 kB
frame takes 1.33 s to reach the RSU, 1.12 s more to reach a worker, and
max(1.08, 3.29) s of parallel extraction - 5.74 s end to end.
"""

from __future__ import annotations

import json
import math
import os
import random
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple

from .core import GpsFix, decode_frame, digest_hex
from .edge import (
    DedupConfig,
    OffloadPolicy,
    RsuNode,
    VehicleNode,
    decode_detection_record,
)
from .extract import ModeledTimes, WorkerNode
from .gateway import Gateway, Matcher
from .netsim import (
    MSG_DETECTION_RECORD,
    MSG_FRAME_UPLOAD,
    Link,
    Network,
    SimEvent,
    calibrate_table1,
    parse_message,
    transfer_time,
)
from .store import BlobStore, DetectionStore, WatchlistStore
from .synthscene import Trace, TraceStep, gen_trace, read_trace

STAGES = ("upload_v2i", "dedup", "dispatch", "transfer_rsu_cloud",
          "extract_face", "extract_plate", "extract_gps", "persist", "match",
          "end_to_end")

# built-in pools for auto-generated traces (seeded, stable across runs)
_pool_rng = random.Random(0x5EED)
DEFAULT_PLATE_POOL = tuple(
    "".join(_pool_rng.choice("ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789") for _ in range(7))
    for _ in range(24)
)
DEFAULT_FACE_POOL = tuple(_pool_rng.sample(range(4096), 24))
del _pool_rng


class ConfigInvalid(ValueError):
    pass


class TraceNotFound(FileNotFoundError):
    pass


@dataclass(frozen=True)
class VehicleSpec:
    vehicle_id: int
    trace_path: Optional[str] = None
    gen: Optional[dict] = None


@dataclass
class ScenarioConfig:
    vehicles: List[VehicleSpec]
    mode: str = "virtual"
    seed: int = 42
    workers: int = 2
    web_workers: int = 2
    t_end_ms: Optional[float] = None
    frame_width: int = 177
    frame_height: int = 93
    noise_level: float = 0.0
    offload: OffloadPolicy = field(default_factory=OffloadPolicy)
    local_extract_enabled: bool = False
    dedup: DedupConfig = field(default_factory=DedupConfig)
    dispatch_policy: str = "round_robin"
    link_overrides: Dict[str, dict] = field(default_factory=dict)
    modeled_times: Optional[ModeledTimes] = field(default_factory=ModeledTimes)
    t_face: int = 0
    loop: bool = False
    time_scale: float = 1.0
    api_host: str = "127.0.0.1"
    api_port: int = 8099
    static_dir: Optional[str] = None

    def __post_init__(self):
        if self.mode not in ("virtual", "realtime"):
            raise ConfigInvalid(f"mode must be virtual or realtime, not {self.mode!r}")
        if not self.vehicles:
            raise ConfigInvalid("at least one vehicle is required")
        if self.workers < 1:
            raise ConfigInvalid("workers must be >= 1")
        if self.web_workers < 1:
            raise ConfigInvalid("web_workers must be >= 1")


_KNOWN_KEYS = {
    "mode", "seed", "vehicles", "workers", "web_workers", "t_end_ms", "frame",
    "offload", "dedup", "dispatch_policy", "links", "modeled_times", "match",
    "realtime", "api",
}


def config_from_dict(raw: dict, base_dir: str = ".") -> ScenarioConfig:
    """Parse and validate a scenario JSON document."""
    unknown = set(raw) - _KNOWN_KEYS
    if unknown:
        raise ConfigInvalid(f"unknown config keys: {sorted(unknown)}")
    try:
        vehicles = []
        for i, v in enumerate(raw.get("vehicles", [])):
            vid = int(v.get("vehicle_id", i + 1))
            trace_path = v.get("trace")
            if trace_path is not None:
                trace_path = os.path.join(base_dir, trace_path)
            vehicles.append(VehicleSpec(vid, trace_path, v.get("gen")))
        frame = raw.get("frame", {})
        offload_raw = raw.get("offload", {})
        offload = OffloadPolicy(offload_raw.get("policy", "always_central"),
                                float(offload_raw.get("threshold_s", 2.0)))
        dedup_raw = raw.get("dedup", {})
        dedup = DedupConfig(
            max_hamming=int(dedup_raw.get("max_hamming", 5)),
            max_distance_m=float(dedup_raw.get("max_distance_m", 15.0)),
            max_dt_ms=int(dedup_raw.get("max_dt_ms", 10_000)),
            window_capacity=int(dedup_raw.get("window", 100)),
        )
        mt_raw = raw.get("modeled_times", "table1")
        if mt_raw is None:
            modeled: Optional[ModeledTimes] = None
        elif mt_raw == "table1" or mt_raw == {}:
            modeled = ModeledTimes()
        else:
            modeled = ModeledTimes(float(mt_raw.get("face_s", 1.08)),
                                   float(mt_raw.get("plate_s", 3.29)),
                                   float(mt_raw.get("gps_s", 0.01)))
        realtime_raw = raw.get("realtime", {})
        api_raw = raw.get("api", {})
        return ScenarioConfig(
            vehicles=vehicles,
            mode=raw.get("mode", "virtual"),
            seed=int(raw.get("seed", 42)),
            workers=int(raw.get("workers", 2)),
            web_workers=int(raw.get("web_workers", 2)),
            t_end_ms=(float(raw["t_end_ms"]) if raw.get("t_end_ms") is not None else None),
            frame_width=int(frame.get("width", 177)),
            frame_height=int(frame.get("height", 93)),
            noise_level=float(frame.get("noise_level", 0.0)),
            offload=offload,
            local_extract_enabled=bool(offload_raw.get("local_extract_enabled", False)),
            dedup=dedup,
            dispatch_policy=raw.get("dispatch_policy", "round_robin"),
            link_overrides=raw.get("links", {}),
            modeled_times=modeled,
            t_face=int(raw.get("match", {}).get("t_face", 0)),
            loop=bool(realtime_raw.get("loop", False)),
            time_scale=float(realtime_raw.get("time_scale", 1.0)),
            api_host=api_raw.get("host", "127.0.0.1"),
            api_port=int(api_raw.get("port", 8099)),
            static_dir=api_raw.get("static_dir"),
        )
    except ConfigInvalid:
        raise
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigInvalid(f"bad scenario config: {exc}") from exc


def load_config(path: str) -> ScenarioConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ConfigInvalid(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(f"config is not valid JSON: {exc}") from None
    return config_from_dict(raw, base_dir=os.path.dirname(path) or ".")


def _resolve_trace(spec: VehicleSpec, config: ScenarioConfig) -> Trace:
    if spec.trace_path is not None:
        if not os.path.exists(spec.trace_path):
            raise TraceNotFound(spec.trace_path)
        try:
            return read_trace(spec.trace_path)
        except (ValueError, KeyError) as exc:
            raise ConfigInvalid(f"bad trace file {spec.trace_path}: {exc}") from exc
    gen = dict(spec.gen or {})
    start = GpsFix(round(float(gen.get("start_lat", 48.8566)) * 1e7),
                   round(float(gen.get("start_lon", 2.3522)) * 1e7),
                   int(gen.get("start_t_ms", 0)))
    plates = gen.get("plates") or list(DEFAULT_PLATE_POOL)
    faces = gen.get("faces") or list(DEFAULT_FACE_POOL)
    return gen_trace(
        seed=int(gen.get("seed", config.seed * 1000 + spec.vehicle_id)),
        n_steps=int(gen.get("steps", 100)),
        step_ms=int(gen.get("step_ms", 1000)),
        start_fix=start,
        speed_mps=float(gen.get("speed_mps", 13.9)),
        plate_pool=plates,
        face_pool=faces,
        repeat_prob=float(gen.get("repeat_prob", 0.0)),
        frame_width=config.frame_width,
        frame_height=config.frame_height,
        scales=tuple(gen.get("scales", (1, 2))),
        background=int(gen.get("background", 64)),
        vehicle_id=spec.vehicle_id,
    )


def _percentile_nearest_rank(sorted_samples: List[float], pct: float) -> float:
    n = len(sorted_samples)
    rank = max(1, math.ceil(pct / 100.0 * n))
    return sorted_samples[rank - 1]


class MetricsCollector:
    """Accumulates per-stage duration samples plus pipeline counters."""

    def __init__(self):
        self.samples: Dict[str, List[float]] = {name: [] for name in STAGES}
        self.frames_captured = 0

    def add(self, stage: str, seconds: float) -> None:
        self.samples[stage].append(seconds)

    def stage_summary(self) -> Dict[str, dict]:
        out = {}
        for name in STAGES:
            values = sorted(self.samples[name])
            if values:
                out[name] = {
                    "count": len(values),
                    "mean_s": sum(values) / len(values),
                    "p50_s": _percentile_nearest_rank(values, 50),
                    "p95_s": _percentile_nearest_rank(values, 95),
                }
            else:
                out[name] = {"count": 0, "mean_s": 0.0, "p50_s": 0.0, "p95_s": 0.0}
        return out

    def report(self, net: Network, rsu: RsuNode, store: DetectionStore,
               matcher: Matcher) -> dict:
        distinct_sources = len({d.source_frame for d in store.all()})
        return {
            "frames_captured": self.frames_captured,
            "dedup_suppressed": rsu.dedup_suppressed,
            "drops": net.drops,
            "bytes_sent": dict(sorted(net.bytes_sent.items())),
            "detections": len(store),
            "distinct_source_frames": distinct_sources,
            "matches": len(matcher.events),
            "stages": self.stage_summary(),
            "virtual_end_ms": net.clock.now_ms,
            "event_log_digest": net.log_digest(),
        }


@dataclass
class RunResult:
    report: dict
    net: Network
    store: DetectionStore
    blobs: BlobStore
    watchlist: WatchlistStore
    matcher: Matcher
    gateway: Gateway
    rsu: RsuNode
    workers: List[WorkerNode]
    vehicles: List[VehicleNode]
    metrics: MetricsCollector

    def report_json(self) -> str:
        return json.dumps(self.report, sort_keys=True, indent=2) + "\n"


class ScenarioRuntime:
    """Wires every tier onto one Network and drives the trace replay."""

    def __init__(self, config: ScenarioConfig,
                 watchlist: Optional[WatchlistStore] = None):
        self.config = config
        self.net = Network(seed=config.seed)
        self.store = DetectionStore()
        self.blobs = BlobStore()
        self.watchlist = watchlist if watchlist is not None else WatchlistStore()
        self.matcher = Matcher(self.watchlist, self.store,
                               now_ms=lambda: self.net.clock.now_ms,
                               t_face=config.t_face)
        self.metrics = MetricsCollector()
        self.gateway = Gateway(self.store, self.blobs, self.watchlist, self.matcher,
                               web_workers=config.web_workers,
                               metrics_provider=self.metrics_snapshot,
                               now_ms=lambda: self.net.clock.now_ms)
        self._capture_ms: Dict[int, float] = {}
        self._dispatch_ms: Dict[int, float] = {}
        self._dispatch_worker: Dict[int, int] = {}
        self._local_pending: Dict[int, int] = {}
        self._build_topology()

    # -- topology ---------------------------------------------------------

    def _link_params(self, name: str, template: Link) -> Tuple[float, float, float]:
        raw = self.config.link_overrides.get(name, {})
        return (float(raw.get("base_latency_s", template.base_latency_s)),
                float(raw.get("bandwidth_Bps", template.bandwidth_Bps)),
                float(raw.get("loss_prob", template.loss_prob)))

    def _build_topology(self) -> None:
        config = self.config
        v2r_tpl, r2c_tpl = calibrate_table1()
        self.workers: List[WorkerNode] = []
        downlinks = []
        for i in range(config.workers):
            lat, bw, loss = self._link_params("rsu_cloud", r2c_tpl)
            link_id = f"rsu->w{i}"
            self.net.add_link(Link(link_id, "rsu", f"worker:{i}", lat, bw, loss))
            downlinks.append(link_id)
            worker = WorkerNode(f"w{i}", store=self.store, blobs=self.blobs,
                                matcher=self.matcher,
                                modeled_times=config.modeled_times)
            self.workers.append(worker)
            self.net.add_node(f"worker:{i}", self._make_worker_handler(i))
        self.rsu = RsuNode("rsu", downlinks, self.net, dedup=config.dedup,
                           dispatch_policy=config.dispatch_policy)
        self.net.add_node("rsu", self._rsu_handler)
        self.vehicles: List[VehicleNode] = []
        for spec in config.vehicles:
            trace = _resolve_trace(spec, config)
            lat, bw, loss = self._link_params("vehicle_rsu", v2r_tpl)
            link_id = f"v{spec.vehicle_id}->rsu"
            self.net.add_link(Link(link_id, f"vehicle:{spec.vehicle_id}", "rsu",
                                   lat, bw, loss))
            vehicle = VehicleNode(
                spec.vehicle_id, trace, link_id, self.net,
                policy=config.offload,
                local_extract_enabled=config.local_extract_enabled,
                frame_width=config.frame_width, frame_height=config.frame_height,
                noise_level=config.noise_level, master_seed=config.seed,
            )
            self.vehicles.append(vehicle)
            self.net.add_node(f"vehicle:{spec.vehicle_id}",
                              self._make_vehicle_handler(len(self.vehicles) - 1))
        for idx, vehicle in enumerate(self.vehicles):
            first = vehicle.trace.steps[0]
            self.net.schedule_timer(float(first.t_ms), f"vehicle:{vehicle.vehicle_id}",
                                    ("capture", idx, 0, 0))

    # -- node handlers ------------------------------------------------------

    def _make_vehicle_handler(self, idx: int):
        def handler(event: SimEvent):
            if event.kind != "timer" or event.payload[0] != "capture":
                return
            _tag, vidx, step_idx, loop_k = event.payload
            vehicle = self.vehicles[vidx]
            steps = vehicle.trace.steps
            step = steps[step_idx]
            if loop_k:
                span = self._loop_span(vehicle.trace)
                shift = loop_k * span
                step = TraceStep(step.t_ms + shift,
                                 GpsFix(step.fix.lat_e7, step.fix.lon_e7,
                                        step.fix.timestamp_ms + shift),
                                 step.spec)
            result = vehicle.capture_tick(step)
            self.metrics.frames_captured += 1
            self._capture_ms[result.frame.frame_id] = result.capture_ms
            if result.offload == "local":
                self._local_pending[result.frame.frame_id] = len(result.record_events)
            nxt = step_idx + 1
            k = loop_k
            if nxt >= len(steps):
                if not (self.config.loop and self.config.mode == "realtime"):
                    return
                nxt, k = 0, loop_k + 1
            due = float(vehicle.trace.steps[nxt].t_ms + k * self._loop_span(vehicle.trace))
            self.net.schedule_timer(due, event.target_node, ("capture", vidx, nxt, k))

        return handler

    @staticmethod
    def _loop_span(trace: Trace) -> int:
        steps = trace.steps
        if len(steps) == 1:
            return 1000
        gap = steps[1].t_ms - steps[0].t_ms
        return steps[-1].t_ms - steps[0].t_ms + gap

    def _rsu_handler(self, event: SimEvent) -> None:
        if event.kind != "deliver":
            return
        now = self.net.clock.now_ms
        msg_type, body = parse_message(event.payload)
        if msg_type == MSG_FRAME_UPLOAD:
            frame = decode_frame(body)
            capture = self._capture_ms.get(frame.frame_id, now)
            self.metrics.add("upload_v2i", (now - capture) / 1000.0)
            _frame, decision, worker, fwd = self.rsu.handle_upload(event.payload, frame=frame)
            self.metrics.add("dedup", 0.0)
            if worker is not None and fwd is not None:
                self.metrics.add("dispatch", 0.0)
                self._dispatch_ms[fwd.seq] = now
                self._dispatch_worker[fwd.seq] = worker
        elif msg_type == MSG_DETECTION_RECORD:
            det, crop = decode_detection_record(body)
            if crop is not None:
                self.blobs.put(crop)
            persisted = self.store.put_detection(det)
            self.metrics.add("persist", 0.0)
            if persisted.kind in ("plate", "face"):
                self.matcher.on_detection(persisted)
                self.metrics.add("match", 0.0)
            left = self._local_pending.get(persisted.source_frame)
            if left is not None:
                left -= 1
                if left <= 0:
                    del self._local_pending[persisted.source_frame]
                    capture = self._capture_ms.get(persisted.source_frame, now)
                    self.metrics.add("end_to_end", (now - capture) / 1000.0)
                else:
                    self._local_pending[persisted.source_frame] = left

    def _make_worker_handler(self, widx: int):
        def handler(event: SimEvent):
            now = self.net.clock.now_ms
            if event.kind == "deliver":
                msg_type, body = parse_message(event.payload)
                if msg_type != MSG_FRAME_UPLOAD:
                    return
                sent = self._dispatch_ms.pop(event.seq, now)
                self.metrics.add("transfer_rsu_cloud", (now - sent) / 1000.0)
                frame = decode_frame(body)
                worker = self.workers[widx]
                actions = worker.process(frame, arrival_ms=now,
                                         realtime=(self.config.mode == "realtime"))
                dispatched_from = self._dispatch_worker.pop(event.seq, widx)
                for action in actions:
                    self.net.schedule_timer(
                        action.due_ms, event.target_node,
                        ("persist", widx, action, dispatched_from))
            elif event.kind == "timer" and event.payload[0] == "persist":
                _tag, _widx, action, dispatched_from = event.payload
                worker = self.workers[widx]
                persisted = worker.commit(action)
                self.metrics.add(f"extract_{action.stage}",
                                 (action.due_ms - action.arrival_ms) / 1000.0)
                for det in persisted:
                    self.metrics.add("persist", 0.0)
                    if det.kind in ("plate", "face"):
                        self.metrics.add("match", 0.0)
                if action.completes_frame:
                    capture = self._capture_ms.get(action.frame_id, action.arrival_ms)
                    self.metrics.add("end_to_end", (action.due_ms - capture) / 1000.0)
                    self.rsu.frame_completed(dispatched_from)

        return handler

    # -- running ------------------------------------------------------------

    def metrics_snapshot(self) -> dict:
        return self.metrics.report(self.net, self.rsu, self.store, self.matcher)

    def run(self) -> RunResult:
        if self.config.mode == "virtual":
            self.net.run_until(self.config.t_end_ms)
        else:
            self.net.clock.mode = "realtime"
            self.net.run_realtime(time_scale=self.config.time_scale)
        return self._result()

    def _result(self) -> RunResult:
        return RunResult(
            report=self.metrics_snapshot(), net=self.net, store=self.store,
            blobs=self.blobs, watchlist=self.watchlist, matcher=self.matcher,
            gateway=self.gateway, rsu=self.rsu, workers=self.workers,
            vehicles=self.vehicles, metrics=self.metrics,
        )


def run_scenario(config: ScenarioConfig,
                 watchlist: Optional[WatchlistStore] = None) -> RunResult:
    """Build the topology, replay every trace, and return report plus stores."""
    runtime = ScenarioRuntime(config, watchlist=watchlist)
    return runtime.run()


def bench_table1() -> dict:
    """Measure calibrated link and stage times against the published table."""
    from .synthscene import SceneSpec, compose_frame

    net = Network()
    v2r, r2c = calibrate_table1()
    net.add_link(v2r)
    net.add_link(r2c)
    arrivals: Dict[str, float] = {}
    net.add_node("rsu", lambda ev: arrivals.__setitem__("v2r", ev.due_ms))
    net.add_node("cloud", lambda ev: arrivals.__setitem__("r2c", ev.due_ms))
    net.schedule_send(bytes(16_500), v2r.link_id)
    net.run_until()
    net.schedule_send(bytes(16_500), r2c.link_id)
    net.run_until()
    send_t = arrivals["v2r"]
    worker = WorkerNode("bench", modeled_times=ModeledTimes())
    frame = compose_frame(SceneSpec(background=64), GpsFix(0, 0, 0), 1, 177, 93)
    actions = {a.stage: a for a in worker.process(frame, arrival_ms=0.0)}

    rows = []

    def row(name: str, measured_s: float, paper_s: float):
        rows.append({
            "metric": name,
            "measured_s": measured_s,
            "paper_s": paper_s,
            "rel_error": abs(measured_s - paper_s) / paper_s,
        })

    row("vehicle_to_rsu_transfer", arrivals["v2r"] / 1000.0, 1.33)
    row("rsu_to_cloud_transfer", (arrivals["r2c"] - send_t) / 1000.0, 1.12)
    row("face_extraction_stage", actions["face"].due_ms / 1000.0, 1.08)
    row("plate_extraction_stage", actions["plate"].due_ms / 1000.0, 3.29)
    return {"payload_bytes": 16_500, "rows": rows}
