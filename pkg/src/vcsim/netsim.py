"""Discrete-event simulated network: links with latency and bandwidth on a
deterministic virtual clock, calibrated to measured one-image transfer times.

A link serializes transmissions at its bandwidth (FIFO) and then adds a fixed
propagation latency, so a lone message of B bytes arrives after
``base_latency_s + B / bandwidth_Bps`` and back-to-back messages queue behind
each other's transmission time.
"""

from __future__ import annotations

import hashlib
import heapq
import random
import struct
import time as _time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

# calibration targets: measured seconds to move one 16.5 kB image
TABLE1_IMAGE_BYTES = 16_500
TABLE1_VEHICLE_RSU_S = 1.33
TABLE1_RSU_CLOUD_S = 1.12
TABLE1_FACE_S = 1.08
TABLE1_PLATE_S = 3.29
DEFAULT_BASE_LATENCY_S = 0.05
DEFAULT_GPS_S = 0.01

MSG_FRAME_UPLOAD = 1
MSG_DETECTION_RECORD = 2
MSG_ACK = 3
MSG_CONTROL = 4

_WIRE_HEADER = struct.Struct("<IB")
WIRE_OVERHEAD = _WIRE_HEADER.size  # 5 bytes: u32 body length + u8 type


class UnknownLink(ValueError):
    pass


def frame_message(msg_type: int, body: bytes) -> bytes:
    return _WIRE_HEADER.pack(len(body), msg_type) + body


def parse_message(data: bytes) -> Tuple[int, bytes]:
    if len(data) < WIRE_OVERHEAD:
        raise ValueError("wire message shorter than its header")
    length, msg_type = _WIRE_HEADER.unpack_from(data)
    if len(data) != WIRE_OVERHEAD + length:
        raise ValueError(f"wire message length {len(data)} != header {WIRE_OVERHEAD + length}")
    return msg_type, data[WIRE_OVERHEAD:]


@dataclass
class Link:
    link_id: str
    src_node: str
    dst_node: str
    base_latency_s: float = DEFAULT_BASE_LATENCY_S
    bandwidth_Bps: float = 1e6
    loss_prob: float = 0.0
    # transmission bookkeeping (the FIFO): when the pipe finishes draining
    busy_until_ms: float = field(default=0.0, repr=False, compare=False)


def transfer_time(payload_bytes: int, link: Link) -> float:
    """Seconds for one payload on an otherwise idle link."""
    if payload_bytes < 0:
        raise ValueError("payload_bytes must be >= 0")
    return link.base_latency_s + payload_bytes / link.bandwidth_Bps


def calibrate_table1(base_latency_s: float = DEFAULT_BASE_LATENCY_S) -> Tuple[Link, Link]:
    """Solve link bandwidths so one 16.5 kB image reproduces the measured times."""
    v2r_bw = TABLE1_IMAGE_BYTES / (TABLE1_VEHICLE_RSU_S - base_latency_s)
    r2c_bw = TABLE1_IMAGE_BYTES / (TABLE1_RSU_CLOUD_S - base_latency_s)
    vehicle_rsu = Link("vehicle->rsu", "vehicle", "rsu",
                       base_latency_s=base_latency_s, bandwidth_Bps=v2r_bw)
    rsu_cloud = Link("rsu->cloud", "rsu", "cloud",
                     base_latency_s=base_latency_s, bandwidth_Bps=r2c_bw)
    return vehicle_rsu, rsu_cloud


@dataclass(frozen=True)
class SimEvent:
    due_ms: float
    seq: int
    target_node: str
    kind: str                    # "deliver" | "drop" | "timer"
    msg_type: Optional[int] = None
    payload: object = None       # wire bytes for deliveries, anything for timers
    link_id: Optional[str] = None


@dataclass
class VirtualClock:
    now_ms: float = 0.0
    mode: str = "virtual"        # "virtual" | "realtime"

    def advance_to(self, t_ms: float) -> None:
        if t_ms > self.now_ms:
            self.now_ms = t_ms


Handler = Callable[[SimEvent], None]


class Network:
    """Event scheduler plus link registry; the single logical executor.

    In virtual mode all node handlers run serially in (due_ms, seq) order and
    the processed-event log is a pure function of (topology, inputs, seed).
    """

    def __init__(self, clock: Optional[VirtualClock] = None, seed: int = 0):
        self.clock = clock or VirtualClock()
        self.links: Dict[str, Link] = {}
        self.nodes: Dict[str, Handler] = {}
        self._heap: List[Tuple[float, int, SimEvent]] = []
        self._seq = 0
        self._loss_rng = random.Random(seed ^ 0x10552)
        self.event_log: List[SimEvent] = []
        self.bytes_sent: Dict[str, int] = {}
        self.drops = 0

    def add_node(self, node_id: str, handler: Handler) -> None:
        self.nodes[node_id] = handler

    def add_link(self, link: Link) -> None:
        self.links[link.link_id] = link
        self.bytes_sent.setdefault(link.link_id, 0)

    def _push(self, event: SimEvent) -> None:
        heapq.heappush(self._heap, (event.due_ms, event.seq, event))

    def _next_seq(self) -> int:
        self._seq += 1
        return self._seq

    def schedule_timer(self, due_ms: float, target_node: str, payload: object) -> SimEvent:
        event = SimEvent(due_ms=due_ms, seq=self._next_seq(), target_node=target_node,
                         kind="timer", payload=payload)
        self._push(event)
        return event

    def schedule_send(self, msg: bytes, link_id: str) -> SimEvent:
        """Queue a wire message on a link; returns the delivery (or drop) event."""
        link = self.links.get(link_id)
        if link is None:
            raise UnknownLink(link_id)
        now = self.clock.now_ms
        start = max(now, link.busy_until_ms)
        link.busy_until_ms = start + len(msg) / link.bandwidth_Bps * 1000.0
        due = link.busy_until_ms + link.base_latency_s * 1000.0
        self.bytes_sent[link_id] = self.bytes_sent.get(link_id, 0) + len(msg)
        lost = link.loss_prob > 0.0 and self._loss_rng.random() < link.loss_prob
        event = SimEvent(due_ms=due, seq=self._next_seq(), target_node=link.dst_node,
                         kind="drop" if lost else "deliver",
                         msg_type=msg[4] if len(msg) >= WIRE_OVERHEAD else None,
                         payload=msg, link_id=link_id)
        self._push(event)
        return event

    def _dispatch(self, event: SimEvent) -> None:
        self.clock.advance_to(event.due_ms)
        self.event_log.append(event)
        if event.kind == "drop":
            self.drops += 1
            return
        handler = self.nodes.get(event.target_node)
        if handler is not None:
            handler(event)

    def run_until(self, t_end_ms: Optional[float] = None) -> List[SimEvent]:
        """Drain the queue in order; stops once the next event is past t_end_ms."""
        processed: List[SimEvent] = []
        while self._heap:
            due, _seq, event = self._heap[0]
            if t_end_ms is not None and due > t_end_ms:
                break
            heapq.heappop(self._heap)
            self._dispatch(event)
            processed.append(event)
        return processed

    def run_realtime(self, time_scale: float = 1.0,
                     should_stop: Optional[Callable[[], bool]] = None) -> List[SimEvent]:
        """Pace the same event queue against the wall clock.

        time_scale > 1 plays the scenario faster than modeled time. Handler
        timing here is best-effort; determinism is only promised in virtual mode.
        """
        processed: List[SimEvent] = []
        start_wall = _time.monotonic()
        start_virtual = self.clock.now_ms
        while self._heap:
            if should_stop is not None and should_stop():
                break
            due, _seq, event = self._heap[0]
            wall_due = start_wall + (due - start_virtual) / 1000.0 / time_scale
            delay = wall_due - _time.monotonic()
            if delay > 0:
                _time.sleep(min(delay, 0.05))
                continue
            heapq.heappop(self._heap)
            self._dispatch(event)
            processed.append(event)
        return processed

    def pending(self) -> int:
        return len(self._heap)

    def log_digest(self) -> str:
        """SHA-256 over a canonical rendering of the processed-event log."""
        h = hashlib.sha256()
        for ev in self.event_log:
            payload = ev.payload if isinstance(ev.payload, bytes) else repr(ev.payload).encode()
            line = f"{ev.due_ms!r}|{ev.seq}|{ev.kind}|{ev.target_node}|{ev.msg_type}|{ev.link_id}|{len(payload)}|"
            h.update(line.encode())
            h.update(hashlib.sha256(payload).digest())
        return h.hexdigest()
