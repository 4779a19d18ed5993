"""Service tier: watchlist matching at persist time, a round-robin load
balancer over in-process web workers, the JSON API, and the push stream of
match events.

Matching is push-based: every persisted plate/face detection is compared to
the live watchlist and the resulting MatchEvents are appended to one global,
totally ordered sequence that subscribers replay from a cursor. Historical
re-matching after watchlist edits is exposed as an explicit rescan.
"""

from __future__ import annotations

import json
import threading
import time as _time
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterator, List, Optional, Set, Tuple

from .core import Detection, MatchEvent, WatchlistEntry, digest_hex
from .store import (
    BadFilter,
    BadValue,
    BlobStore,
    DetectionStore,
    DuplicateEntry,
    NotFound,
    QueryFilter,
    UnknownEntry,
    WatchlistStore,
)

DEFAULT_T_FACE = 0
MAX_SUBSCRIBER_LAG = 10_000


class NoWorkers(RuntimeError):
    pass


class SlowSubscriber(RuntimeError):
    """Raised into a stream that fell more than MAX_SUBSCRIBER_LAG behind."""


def _wall_ms() -> float:
    return _time.time() * 1000.0


def face_distance(a: int, b: int) -> int:
    return bin((a ^ b) & 0xFFF).count("1")


def values_match(kind: str, entry_value, det_value, t_face: int = DEFAULT_T_FACE) -> bool:
    if kind == "plate":
        return entry_value == det_value
    if kind == "face":
        return face_distance(int(entry_value), int(det_value)) <= t_face
    return False


class Matcher:
    """Owns the global match sequence and the (entry, detection) join."""

    def __init__(self, watchlist: WatchlistStore, store: DetectionStore,
                 now_ms: Optional[Callable[[], float]] = None,
                 t_face: int = DEFAULT_T_FACE):
        self.watchlist = watchlist
        self.store = store
        self.t_face = t_face
        self.now_ms = now_ms or _wall_ms
        self._cond = threading.Condition()
        self.events: List[MatchEvent] = []
        self._pairs: Set[Tuple[int, int]] = set()

    def __len__(self) -> int:
        with self._cond:
            return len(self.events)

    def _emit(self, entry: WatchlistEntry, det: Detection) -> Optional[MatchEvent]:
        pair = (entry.entry_id, det.detection_id)
        if pair in self._pairs:
            return None
        event = MatchEvent(len(self.events) + 1, entry.entry_id, det.detection_id,
                           det.fix, self.now_ms())
        self._pairs.add(pair)
        self.events.append(event)
        return event

    def match_detection(self, det: Detection) -> List[MatchEvent]:
        """Join one detection against the watchlist; gps detections never match."""
        if det.kind not in ("plate", "face"):
            return []
        emitted = []
        with self._cond:
            for entry in self.watchlist.watchlist_list():
                if entry.kind != det.kind:
                    continue
                if values_match(entry.kind, entry.value, det.value, self.t_face):
                    event = self._emit(entry, det)
                    if event is not None:
                        emitted.append(event)
            if emitted:
                self._cond.notify_all()
        return emitted

    # workers call this at each stage's completion time
    on_detection = match_detection

    def rescan(self, entry_id: int) -> int:
        """Replay the whole detection log against one entry; returns new matches."""
        entry = self.watchlist.get(entry_id)
        new = 0
        with self._cond:
            for det in self.store.all():
                if det.kind != entry.kind:
                    continue
                if values_match(entry.kind, entry.value, det.value, self.t_face):
                    if self._emit(entry, det) is not None:
                        new += 1
            if new:
                self._cond.notify_all()
        return new

    def matches_since(self, cursor: int) -> List[MatchEvent]:
        """Events with match_id greater than the cursor, in order.

        Ids are assigned 1..n in sequence, so the cursor doubles as an index.
        """
        with self._cond:
            return self.events[max(0, cursor):]

    def wait_for_matches(self, cursor: int, timeout_s: float) -> List[MatchEvent]:
        with self._cond:
            if len(self.events) > cursor:
                return self.events[cursor:]
            self._cond.wait(timeout=timeout_s)
            return self.events[cursor:]

    def pair_set(self) -> Set[Tuple[int, int]]:
        with self._cond:
            return set(self._pairs)


@dataclass
class Subscription:
    subscriber_id: int
    cursor: int = 0


class LoadBalancer:
    """Round-robin request router with per-worker accounting."""

    def __init__(self, size: int):
        if size < 1:
            raise NoWorkers("load balancer needs at least one worker")
        self.counters = [0] * size
        self.rr_cursor = 0

    def lb_route(self, request=None) -> int:
        worker = self.rr_cursor
        self.rr_cursor = (self.rr_cursor + 1) % len(self.counters)
        self.counters[worker] += 1
        return worker

    def total(self) -> int:
        return sum(self.counters)


@dataclass
class ApiRequest:
    method: str
    path: str
    query: Dict[str, str] = field(default_factory=dict)
    body: bytes = b""


@dataclass
class ApiResponse:
    status: int
    body: bytes
    content_type: str = "application/json"

    @staticmethod
    def json(status: int, payload) -> "ApiResponse":
        return ApiResponse(status, json.dumps(payload, sort_keys=True).encode())

    @staticmethod
    def error(status: int, message: str) -> "ApiResponse":
        return ApiResponse.json(status, {"error": message})


def _parse_bbox_deg(raw: str) -> Tuple[int, int, int, int]:
    parts = raw.split(",")
    if len(parts) != 4:
        raise BadFilter("bbox must be minLat,minLon,maxLat,maxLon")
    try:
        min_lat, min_lon, max_lat, max_lon = (float(p) for p in parts)
    except ValueError:
        raise BadFilter(f"bbox {raw!r} is not numeric") from None
    return (round(min_lat * 1e7), round(min_lon * 1e7),
            round(max_lat * 1e7), round(max_lon * 1e7))


def _detection_filter(query: Dict[str, str]) -> QueryFilter:
    kind = query.get("kind")
    value: Optional[object] = query.get("value")
    if value is not None and kind == "face":
        try:
            value = int(value)
        except ValueError:
            raise BadFilter(f"face value {value!r} is not an integer") from None
    t_from = float(query["from"]) if "from" in query else None
    t_to = float(query["to"]) if "to" in query else None
    bbox = _parse_bbox_deg(query["bbox"]) if "bbox" in query else None
    return QueryFilter(kind=kind, value=value, t_from=t_from, t_to=t_to, bbox=bbox)


class ApiWorker:
    """One in-process web worker; all workers share the same stores."""

    def __init__(self, index: int, store: DetectionStore, blobs: BlobStore,
                 watchlist: WatchlistStore, matcher: Matcher,
                 metrics_provider: Optional[Callable[[], dict]] = None,
                 now_ms: Optional[Callable[[], float]] = None):
        self.index = index
        self.store = store
        self.blobs = blobs
        self.watchlist = watchlist
        self.matcher = matcher
        self.metrics_provider = metrics_provider
        self.now_ms = now_ms or _wall_ms

    def handle(self, req: ApiRequest) -> ApiResponse:
        parts = [p for p in req.path.split("/") if p]
        if len(parts) < 3 or parts[0] != "api" or parts[1] != "v1":
            return ApiResponse.error(404, f"no such endpoint {req.path}")
        head = parts[2]
        rest = parts[3:]
        try:
            if head == "watchlist":
                return self._watchlist(req, rest)
            if head == "detections" and req.method == "GET" and not rest:
                flt = _detection_filter(req.query)
                hits = self.store.query_detections(flt)
                return ApiResponse.json(200, [d.to_dict() for d in hits])
            if head == "matches" and req.method == "GET" and not rest:
                since = int(req.query.get("since", 0))
                return ApiResponse.json(
                    200, [m.to_dict() for m in self.matcher.matches_since(since)])
            if head == "blobs" and req.method == "GET" and len(rest) == 1:
                try:
                    digest = int(rest[0], 16)
                except ValueError:
                    return ApiResponse.error(400, f"malformed digest {rest[0]!r}")
                return ApiResponse(200, self.blobs.get(digest), "image/png")
            if head == "metrics" and req.method == "GET" and not rest:
                payload = self.metrics_provider() if self.metrics_provider else {}
                return ApiResponse.json(200, payload)
        except BadFilter as exc:
            return ApiResponse.error(400, str(exc))
        except NotFound as exc:
            return ApiResponse.error(404, str(exc))
        return ApiResponse.error(404, f"no such endpoint {req.method} {req.path}")

    def _watchlist(self, req: ApiRequest, rest: List[str]) -> ApiResponse:
        if req.method == "GET" and not rest:
            return ApiResponse.json(200, [e.to_dict() for e in self.watchlist.watchlist_list()])
        if req.method == "POST" and not rest:
            try:
                payload = json.loads(req.body.decode() or "{}")
            except json.JSONDecodeError:
                return ApiResponse.error(400, "body is not valid JSON")
            kind = payload.get("kind")
            value = payload.get("value")
            if kind == "face" and isinstance(value, str) and value.strip().isdigit():
                value = int(value)
            try:
                entry = self.watchlist.watchlist_add(
                    kind, value, str(payload.get("label", "")), int(self.now_ms()))
            except BadValue as exc:
                return ApiResponse.error(400, str(exc))
            except DuplicateEntry as exc:
                return ApiResponse.error(409, str(exc))
            return ApiResponse.json(201, {"entry_id": entry.entry_id})
        if rest and rest[0].isdigit():
            entry_id = int(rest[0])
            if req.method == "DELETE" and len(rest) == 1:
                try:
                    self.watchlist.watchlist_remove(entry_id)
                except UnknownEntry as exc:
                    return ApiResponse.error(404, str(exc))
                return ApiResponse.json(200, {"removed": entry_id})
            if req.method == "POST" and rest[1:] == ["rescan"]:
                try:
                    new = self.matcher.rescan(entry_id)
                except UnknownEntry as exc:
                    return ApiResponse.error(404, str(exc))
                return ApiResponse.json(200, {"new_matches": new})
        return ApiResponse.error(404, f"no such endpoint {req.method} {req.path}")


class Gateway:
    """Front door: routes API requests over W web workers and feeds streams."""

    def __init__(self, store: DetectionStore, blobs: BlobStore,
                 watchlist: WatchlistStore, matcher: Matcher,
                 web_workers: int = 2,
                 metrics_provider: Optional[Callable[[], dict]] = None,
                 now_ms: Optional[Callable[[], float]] = None):
        self.store = store
        self.blobs = blobs
        self.watchlist = watchlist
        self.matcher = matcher
        self.lb = LoadBalancer(web_workers)
        self.workers = [
            ApiWorker(i, store, blobs, watchlist, matcher,
                      metrics_provider=metrics_provider, now_ms=now_ms)
            for i in range(web_workers)
        ]
        self._lb_lock = threading.Lock()
        self._next_subscriber = 1

    def serve_api(self, req: ApiRequest) -> ApiResponse:
        with self._lb_lock:
            worker = self.lb.lb_route(req)
        return self.workers[worker].handle(req)

    def subscribe(self, since: int = 0) -> Subscription:
        with self._lb_lock:
            sub = Subscription(self._next_subscriber, cursor=since)
            self._next_subscriber += 1
        return sub

    def event_stream(self, sub: Subscription,
                     should_stop: Optional[Callable[[], bool]] = None,
                     poll_s: float = 0.2,
                     max_lag: int = MAX_SUBSCRIBER_LAG) -> Iterator[MatchEvent]:
        """Yield every match at or after the cursor, then follow the live feed.

        Blocks between events; stops when should_stop() turns true. A consumer
        that falls more than max_lag events behind is cut off.
        """
        while should_stop is None or not should_stop():
            events = self.matcher.wait_for_matches(sub.cursor, timeout_s=poll_s)
            if len(self.matcher) - sub.cursor > max_lag:
                raise SlowSubscriber(f"subscriber {sub.subscriber_id} lagged")
            for event in events:
                sub.cursor = event.match_id
                yield event
