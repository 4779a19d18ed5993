"""Persistence tier: append-only detection log with indexed queries, a
content-addressed blob store for crops, and the operator watchlist.

All stores are in-memory with single-writer locking; the detection and
watchlist stores snapshot to JSON Lines files. Indexes are an optimization
only: every query is defined as (and tested against) the brute-force scan.
"""

from __future__ import annotations

import bisect
import json
import threading
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Tuple

from .core import (
    Detection,
    WatchlistEntry,
    fnv1a_64,
    validate_value,
)

GEO_CELL_E7 = 10_000  # grid bucket edge: 0.001 degree in 1e-7-degree units


class BadFilter(ValueError):
    pass


class BadValue(ValueError):
    pass


class NotFound(LookupError):
    pass


class DuplicateEntry(ValueError):
    pass


class UnknownEntry(LookupError):
    pass


@dataclass(frozen=True)
class QueryFilter:
    """Conjunction of optional predicates; bbox bounds are inclusive e7 ints."""

    kind: Optional[str] = None
    value: Optional[object] = None
    t_from: Optional[float] = None
    t_to: Optional[float] = None
    bbox: Optional[Tuple[int, int, int, int]] = None  # min_lat, min_lon, max_lat, max_lon

    def validate(self) -> None:
        if self.kind is not None and self.kind not in ("plate", "face", "gps"):
            raise BadFilter(f"unknown kind {self.kind!r}")
        if self.t_from is not None and self.t_to is not None and self.t_from > self.t_to:
            raise BadFilter("t_from is after t_to")
        if self.bbox is not None:
            min_lat, min_lon, max_lat, max_lon = self.bbox
            if min_lat > max_lat or min_lon > max_lon:
                raise BadFilter("bbox minimum exceeds maximum")

    def admits(self, det: Detection) -> bool:
        if self.kind is not None and det.kind != self.kind:
            return False
        if self.value is not None and det.value != self.value:
            return False
        if self.t_from is not None and det.detected_at_ms < self.t_from:
            return False
        if self.t_to is not None and det.detected_at_ms > self.t_to:
            return False
        if self.bbox is not None:
            min_lat, min_lon, max_lat, max_lon = self.bbox
            if not (min_lat <= det.fix.lat_e7 <= max_lat and
                    min_lon <= det.fix.lon_e7 <= max_lon):
                return False
        return True


def _geo_cell(lat_e7: int, lon_e7: int) -> Tuple[int, int]:
    return lat_e7 // GEO_CELL_E7, lon_e7 // GEO_CELL_E7


class DetectionStore:
    """Append-only detection log; ids are assigned monotonically from 1."""

    def __init__(self):
        self._lock = threading.RLock()
        self._log: List[Detection] = []
        self._by_id: Dict[int, Detection] = {}
        self._by_kind_value: Dict[Tuple[str, object], List[int]] = {}
        self._by_kind: Dict[str, List[int]] = {}
        self._by_time: List[Tuple[float, int]] = []
        self._by_geo: Dict[Tuple[int, int], List[int]] = {}

    def __len__(self) -> int:
        return len(self._log)

    def put_detection(self, det: Detection) -> Detection:
        with self._lock:
            det = replace(det, detection_id=len(self._log) + 1)
            self._log.append(det)
            self._by_id[det.detection_id] = det
            self._by_kind_value.setdefault((det.kind, det.value), []).append(det.detection_id)
            self._by_kind.setdefault(det.kind, []).append(det.detection_id)
            bisect.insort(self._by_time, (det.detected_at_ms, det.detection_id))
            cell = _geo_cell(det.fix.lat_e7, det.fix.lon_e7)
            self._by_geo.setdefault(cell, []).append(det.detection_id)
            return det

    def get(self, detection_id: int) -> Detection:
        with self._lock:
            try:
                return self._by_id[detection_id]
            except KeyError:
                raise NotFound(f"detection {detection_id}") from None

    def all(self) -> List[Detection]:
        with self._lock:
            return list(self._log)

    def _candidates(self, flt: QueryFilter) -> List[int]:
        if flt.kind is not None and flt.value is not None:
            return list(self._by_kind_value.get((flt.kind, flt.value), ()))
        if flt.kind is not None:
            return list(self._by_kind.get(flt.kind, ()))
        if flt.bbox is not None:
            min_lat, min_lon, max_lat, max_lon = flt.bbox
            lat_lo, lat_hi = min_lat // GEO_CELL_E7, max_lat // GEO_CELL_E7
            lon_lo, lon_hi = min_lon // GEO_CELL_E7, max_lon // GEO_CELL_E7
            ids: List[int] = []
            n_cells = (lat_hi - lat_lo + 1) * (lon_hi - lon_lo + 1)
            if n_cells > len(self._by_geo):
                # wide box: walk the populated cells instead of the box
                for (clat, clon), bucket in self._by_geo.items():
                    if lat_lo <= clat <= lat_hi and lon_lo <= clon <= lon_hi:
                        ids.extend(bucket)
            else:
                for clat in range(lat_lo, lat_hi + 1):
                    for clon in range(lon_lo, lon_hi + 1):
                        ids.extend(self._by_geo.get((clat, clon), ()))
            return ids
        if flt.t_from is not None or flt.t_to is not None:
            lo = 0 if flt.t_from is None else bisect.bisect_left(self._by_time, (flt.t_from, 0))
            hi = (len(self._by_time) if flt.t_to is None
                  else bisect.bisect_right(self._by_time, (flt.t_to, float("inf"))))
            return [i for _, i in self._by_time[lo:hi]]
        return [d.detection_id for d in self._log]

    def query_detections(self, flt: QueryFilter) -> List[Detection]:
        """Every detection satisfying all present predicates, in (time, id) order."""
        flt.validate()
        with self._lock:
            hits = [self._by_id[i] for i in self._candidates(flt)]
            hits = [d for d in hits if flt.admits(d)]
            hits.sort(key=lambda d: (d.detected_at_ms, d.detection_id))
            return hits

    def scan(self, flt: QueryFilter) -> List[Detection]:
        """Index-free reference implementation of query_detections."""
        flt.validate()
        with self._lock:
            hits = [d for d in self._log if flt.admits(d)]
            hits.sort(key=lambda d: (d.detected_at_ms, d.detection_id))
            return hits

    def save_jsonl(self, path: str) -> None:
        with self._lock, open(path, "w", encoding="utf-8") as fh:
            for det in self._log:
                fh.write(json.dumps(det.to_dict(), sort_keys=True) + "\n")

    def load_jsonl(self, path: str) -> None:
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    self.put_detection(Detection.from_dict(json.loads(line)))


class BlobStore:
    """Content-addressed byte store; 64-bit digest collisions read as equality."""

    def __init__(self):
        self._lock = threading.RLock()
        self._blobs: Dict[int, bytes] = {}

    def __len__(self) -> int:
        return len(self._blobs)

    def put(self, data: bytes) -> int:
        digest = fnv1a_64(data)
        with self._lock:
            self._blobs.setdefault(digest, bytes(data))
        return digest

    def get(self, digest: int) -> bytes:
        with self._lock:
            try:
                return self._blobs[digest]
            except KeyError:
                raise NotFound(f"blob {digest:016x}") from None

    def contains(self, digest: int) -> bool:
        with self._lock:
            return digest in self._blobs


class WatchlistStore:
    """Operator-maintained search targets; (kind, value) pairs are unique."""

    def __init__(self):
        self._lock = threading.RLock()
        self._entries: Dict[int, WatchlistEntry] = {}
        self._values: Dict[Tuple[str, object], int] = {}
        self._next_id = 1

    def __len__(self) -> int:
        return len(self._entries)

    def watchlist_add(self, kind: str, value, label: str = "",
                      now_ms: int = 0) -> WatchlistEntry:
        try:
            validate_value(kind, value)
        except ValueError as exc:
            raise BadValue(str(exc)) from None
        if kind not in ("plate", "face"):
            raise BadValue(f"watchlist kind must be plate or face, not {kind!r}")
        with self._lock:
            if (kind, value) in self._values:
                raise DuplicateEntry(f"{kind} {value!r} already on the watchlist")
            entry = WatchlistEntry(self._next_id, kind, value, label, int(now_ms))
            self._next_id += 1
            self._entries[entry.entry_id] = entry
            self._values[(kind, value)] = entry.entry_id
            return entry

    def watchlist_remove(self, entry_id: int) -> WatchlistEntry:
        with self._lock:
            entry = self._entries.pop(entry_id, None)
            if entry is None:
                raise UnknownEntry(f"watchlist entry {entry_id}")
            del self._values[(entry.kind, entry.value)]
            return entry

    def watchlist_list(self) -> List[WatchlistEntry]:
        with self._lock:
            return sorted(self._entries.values(), key=lambda e: e.entry_id)

    def get(self, entry_id: int) -> WatchlistEntry:
        with self._lock:
            entry = self._entries.get(entry_id)
            if entry is None:
                raise UnknownEntry(f"watchlist entry {entry_id}")
            return entry

    def save_jsonl(self, path: str) -> None:
        with self._lock, open(path, "w", encoding="utf-8") as fh:
            for entry in self.watchlist_list():
                fh.write(json.dumps(entry.to_dict(), sort_keys=True) + "\n")

    def load_jsonl(self, path: str) -> None:
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                entry = WatchlistEntry.from_dict(json.loads(line))
                with self._lock:
                    self._entries[entry.entry_id] = entry
                    self._values[(entry.kind, entry.value)] = entry.entry_id
                    self._next_id = max(self._next_id, entry.entry_id + 1)
