"""Vehicle and RSU node state machines.

The vehicle composes geotagged frames from its trace and either uploads them
raw (central processing) or extracts locally and ships compact detection
records (the hybrid-cloud offload branch). The RSU removes redundant frames
via a perceptual-hash window fused with GPS/time gates, then spreads the
survivors evenly over the cloud workers.
"""

from __future__ import annotations

import base64
import json
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Deque, Dict, List, Optional, Tuple

import numpy as np

from . import extract as extract_mod
from .core import (
    Detection,
    GeoFrame,
    GpsFix,
    decode_frame,
    encode_frame,
    fnv1a_64,
    haversine_m,
)
from .netsim import (
    MSG_DETECTION_RECORD,
    MSG_FRAME_UPLOAD,
    Network,
    SimEvent,
    frame_message,
    parse_message,
    transfer_time,
)
from .synthscene import Trace, TraceStep, compose_frame, frame_noise_seed

OFFLOAD_ALWAYS_CENTRAL = "always_central"
OFFLOAD_ALWAYS_LOCAL = "always_local"
OFFLOAD_ADAPTIVE = "adaptive"

DISPATCH_ROUND_ROBIN = "round_robin"
DISPATCH_LEAST_LOADED = "least_loaded"


class TraceExhausted(RuntimeError):
    pass


class NoWorkers(RuntimeError):
    pass


def phash(frame: GeoFrame) -> int:
    """64-bit average hash: 8x8 box means thresholded at their global mean.

    Cells at or above the mean map to 1; bits are packed row-major with the
    top-left cell in the most significant position. Integer arithmetic only,
    so the value is identical on every platform.
    """
    arr = np.frombuffer(frame.pixels, dtype=np.uint8).reshape(frame.height, frame.width)
    arr = arr.astype(np.int64)
    rows = _grid_bounds(frame.height)
    cols = _grid_bounds(frame.width)
    cells = np.empty((8, 8), dtype=np.int64)
    for r, (r0, r1) in enumerate(rows):
        for c, (c0, c1) in enumerate(cols):
            block = arr[r0:r1, c0:c1]
            cells[r, c] = int(block.sum()) // block.size
    total = int(cells.sum())
    h = 0
    for r in range(8):
        for c in range(8):
            h = (h << 1) | (1 if int(cells[r, c]) * 64 >= total else 0)
    return h


def _grid_bounds(n: int) -> List[Tuple[int, int]]:
    bounds = []
    for i in range(8):
        lo = i * n // 8
        hi = max((i + 1) * n // 8, lo + 1)
        bounds.append((lo, hi))
    return bounds


def hamming64(a: int, b: int) -> int:
    return bin(a ^ b).count("1")


@dataclass(frozen=True)
class DedupConfig:
    max_hamming: int = 5
    max_distance_m: float = 15.0
    max_dt_ms: int = 10_000
    window_capacity: int = 100  # per vehicle


@dataclass(frozen=True)
class DedupDecision:
    duplicate: bool
    matched_hash_distance: Optional[int] = None
    matched_distance_m: Optional[float] = None
    matched_dt_ms: Optional[int] = None


@dataclass(frozen=True)
class OffloadPolicy:
    kind: str = OFFLOAD_ALWAYS_CENTRAL
    threshold_s: float = 2.0

    def __post_init__(self):
        if self.kind not in (OFFLOAD_ALWAYS_CENTRAL, OFFLOAD_ALWAYS_LOCAL, OFFLOAD_ADAPTIVE):
            raise ValueError(f"unknown offload policy {self.kind!r}")


def decide_offload(policy: OffloadPolicy, estimated_upload_s: float,
                   local_enabled: bool) -> str:
    """Pick the processing site for one frame: "local" or "central".

    Local extraction requires the capability flag; the adaptive policy goes
    local only when the estimated raw upload would exceed its threshold.
    """
    if not local_enabled:
        return "central"
    if policy.kind == OFFLOAD_ALWAYS_LOCAL:
        return "local"
    if policy.kind == OFFLOAD_ADAPTIVE:
        return "local" if estimated_upload_s > policy.threshold_s else "central"
    return "central"


def encode_detection_record(det: Detection, crop_png: Optional[bytes]) -> bytes:
    record = det.to_dict()
    if crop_png is not None:
        record["crop_png_b64"] = base64.b64encode(crop_png).decode("ascii")
    return json.dumps(record, sort_keys=True).encode()


def decode_detection_record(body: bytes) -> Tuple[Detection, Optional[bytes]]:
    record = json.loads(body.decode())
    crop_b64 = record.pop("crop_png_b64", None)
    crop = base64.b64decode(crop_b64) if crop_b64 else None
    return Detection.from_dict(record), crop


class _CropCollector:
    """Blob-sink shim that keeps crop bytes in memory for wire transmission."""

    def __init__(self):
        self.by_digest: Dict[int, bytes] = {}

    def put(self, data: bytes) -> int:
        digest = fnv1a_64(data)
        self.by_digest[digest] = data
        return digest


@dataclass
class CaptureResult:
    frame: GeoFrame
    offload: str                          # "central" | "local"
    upload_event: Optional[SimEvent]      # FRAME_UPLOAD delivery (central path)
    record_events: List[SimEvent]         # DETECTION_RECORD deliveries (local path)
    capture_ms: float


class VehicleNode:
    """Replays a trace: one frame composed, geotagged and shipped per step."""

    def __init__(self, vehicle_id: int, trace: Trace, uplink_id: str, net: Network,
                 policy: OffloadPolicy = OffloadPolicy(),
                 local_extract_enabled: bool = False,
                 frame_width: int = 177, frame_height: int = 93,
                 noise_level: float = 0.0, master_seed: int = 0,
                 extract_threshold: int = extract_mod.THRESHOLD):
        self.vehicle_id = vehicle_id
        self.trace = trace
        self.uplink_id = uplink_id
        self.net = net
        self.policy = policy
        self.local_extract_enabled = local_extract_enabled
        self.frame_width = frame_width
        self.frame_height = frame_height
        self.noise_level = noise_level
        self.master_seed = master_seed
        self.extract_threshold = extract_threshold
        self.cursor = 0
        self.frames_captured = 0

    def has_next(self) -> bool:
        return self.cursor < len(self.trace.steps)

    def compose_step(self, step: TraceStep) -> GeoFrame:
        seed = frame_noise_seed(self.master_seed, self.vehicle_id, step.fix, step.spec)
        return compose_frame(step.spec, step.fix, self.vehicle_id,
                             self.frame_width, self.frame_height,
                             noise_level=self.noise_level, rng_seed=seed)

    def capture_tick(self, step: Optional[TraceStep] = None) -> CaptureResult:
        """Compose the next frame and emit its upload (or local detections)."""
        if step is None:
            if not self.has_next():
                raise TraceExhausted(f"vehicle {self.vehicle_id}")
            step = self.trace.steps[self.cursor]
            self.cursor += 1
        frame = self.compose_step(step)
        self.frames_captured += 1
        now = self.net.clock.now_ms
        msg = frame_message(MSG_FRAME_UPLOAD, encode_frame(frame))
        est = transfer_time(len(msg), self.net.links[self.uplink_id])
        offload = decide_offload(self.policy, est, self.local_extract_enabled)
        if offload == "central":
            event = self.net.schedule_send(msg, self.uplink_id)
            return CaptureResult(frame, "central", event, [], now)
        crops = _CropCollector()
        detections = []
        detections.extend(extract_mod.extract_plates(
            frame, blob_sink=crops, threshold=self.extract_threshold))
        detections.extend(extract_mod.extract_faces(
            frame, blob_sink=crops, threshold=self.extract_threshold))
        if frame.fix is not None:
            detections.append(extract_mod.extract_gps(frame))
        events = []
        worker_id = f"vehicle:{self.vehicle_id}"
        for det in detections:
            det = replace(det, worker_id=worker_id, detected_at_ms=now)
            body = encode_detection_record(det, crops.by_digest.get(det.crop_blob))
            events.append(self.net.schedule_send(
                frame_message(MSG_DETECTION_RECORD, body), self.uplink_id))
        return CaptureResult(frame, "local", None, events, now)


@dataclass(frozen=True)
class _WindowEntry:
    phash: int
    fix: GpsFix
    t_ms: int


class RsuNode:
    """Roadside unit: perceptual-hash dedup window plus even dispatch."""

    def __init__(self, rsu_id: str, downlink_ids: List[str], net: Network,
                 dedup: DedupConfig = DedupConfig(),
                 dispatch_policy: str = DISPATCH_ROUND_ROBIN):
        if dispatch_policy not in (DISPATCH_ROUND_ROBIN, DISPATCH_LEAST_LOADED):
            raise ValueError(f"unknown dispatch policy {dispatch_policy!r}")
        self.rsu_id = rsu_id
        self.downlink_ids = downlink_ids
        self.net = net
        self.dedup = dedup
        self.dispatch_policy = dispatch_policy
        self.windows: Dict[int, Deque[_WindowEntry]] = {}
        self.rr_cursor = 0
        self.worker_load: Dict[int, int] = {i: 0 for i in range(len(downlink_ids))}
        self.dedup_suppressed = 0

    def is_duplicate(self, frame: GeoFrame) -> DedupDecision:
        """Test a frame against every remembered (hash, fix, time) triple.

        The frame's own triple is appended to its vehicle's window no matter
        what, evicting the oldest entry at capacity.
        """
        h = phash(frame)
        fix = frame.fix
        best: Optional[Tuple[int, float, int]] = None
        if fix is not None:
            for window in self.windows.values():
                for entry in window:
                    d_hash = hamming64(h, entry.phash)
                    if d_hash > self.dedup.max_hamming:
                        continue
                    d_m = haversine_m(fix, entry.fix)
                    if d_m > self.dedup.max_distance_m:
                        continue
                    dt = abs(fix.timestamp_ms - entry.t_ms)
                    if dt > self.dedup.max_dt_ms:
                        continue
                    if best is None or (d_hash, dt) < (best[0], best[2]):
                        best = (d_hash, d_m, dt)
        if fix is not None:
            window = self.windows.setdefault(
                frame.vehicle_id, deque(maxlen=self.dedup.window_capacity))
            window.append(_WindowEntry(h, fix, fix.timestamp_ms))
        if best is None:
            return DedupDecision(duplicate=False)
        return DedupDecision(duplicate=True, matched_hash_distance=best[0],
                             matched_distance_m=best[1], matched_dt_ms=best[2])

    def pick_worker(self) -> int:
        if not self.downlink_ids:
            raise NoWorkers(self.rsu_id)
        if self.dispatch_policy == DISPATCH_ROUND_ROBIN:
            worker = self.rr_cursor
            self.rr_cursor = (self.rr_cursor + 1) % len(self.downlink_ids)
            return worker
        return min(self.worker_load, key=lambda i: (self.worker_load[i], i))

    def dispatch(self, msg: bytes) -> Tuple[int, SimEvent]:
        """Forward a frame upload on one downlink; returns (worker index, event)."""
        worker = self.pick_worker()
        event = self.net.schedule_send(msg, self.downlink_ids[worker])
        self.worker_load[worker] += 1
        return worker, event

    def frame_completed(self, worker: int) -> None:
        """Called when a dispatched frame finishes processing (load tracking)."""
        if self.worker_load.get(worker, 0) > 0:
            self.worker_load[worker] -= 1

    def handle_upload(self, msg: bytes,
                      frame: Optional[GeoFrame] = None
                      ) -> Tuple[GeoFrame, DedupDecision, Optional[int], Optional[SimEvent]]:
        """Full RSU pipeline for one FRAME_UPLOAD: decode, dedup, dispatch."""
        if frame is None:
            _type, body = parse_message(msg)
            frame = decode_frame(body)
        decision = self.is_duplicate(frame)
        if decision.duplicate:
            self.dedup_suppressed += 1
            return frame, decision, None, None
        worker, event = self.dispatch(msg)
        return frame, decision, worker, event
