"""
Kernel same-page merging across co-located VPS instances.

A `FrameStore` owns the physical frames, the VPS page tables and the
`KsmForest` (stable and unstable content trees plus the checksum record).
The scanner visits frames round-robin by frame number; a full pass ends
when the cursor wraps, at which point the unstable tree is rebuilt from
scratch.
"""

import json
import logging
import zlib
from bisect import bisect_left, bisect_right
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Hashable, List, Mapping, Optional, Set, Tuple, Union

from .errors import ArgumentError, ConfigError, DuplicateVpsError, UnmappedPageError
from .estimator import PAGE_SIZE
from .rbtree import ContentTree

logger = logging.getLogger(__name__)

GIB = 1 << 30

INSERTED_UNSTABLE = "inserted-unstable"
MERGED = "merged"
COW_BREAK = "cow-break"
DROPPED_CHANGED_CHECKSUM = "dropped-changed-checksum"

Owner = Tuple[Hashable, int]


class Latency(str, Enum):
    FAST = "fast"
    SLOW = "slow"


def page_checksum(data: bytes) -> int:
    return zlib.adler32(data) & 0xFFFFFFFF


@dataclass
class ScanConfig:
    pages_to_scan: int = 100
    sleep_millisec: int = 20
    gb_scan_minutes: float = 5.0

    def __post_init__(self):
        if self.pages_to_scan < 1:
            raise ConfigError(f"pages_to_scan must be at least 1, got {self.pages_to_scan}")
        if self.sleep_millisec < 0:
            raise ConfigError(f"sleep_millisec must be non-negative, got {self.sleep_millisec}")
        if self.gb_scan_minutes <= 0:
            raise ConfigError(f"gb_scan_minutes must be positive, got {self.gb_scan_minutes}")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "pages_to_scan": self.pages_to_scan,
            "sleep_millisec": self.sleep_millisec,
            "gb_scan_minutes": self.gb_scan_minutes,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ScanConfig":
        unknown = set(data) - {"pages_to_scan", "sleep_millisec", "gb_scan_minutes"}
        if unknown:
            raise ConfigError(f"Unknown scan settings: {sorted(unknown)}")
        return cls(**data)


@dataclass
class VpsInstance:
    """A VPS with `memory_pages` of address space; `contents` lists the pages it touches."""

    id: Hashable
    memory_pages: int
    contents: Optional[Dict[int, bytes]] = None
    pages: Dict[int, int] = field(default_factory=dict)

    def __post_init__(self):
        if self.memory_pages < 1:
            raise ArgumentError(f"VPS {self.id} needs at least one page")
        if self.contents is not None:
            for idx, data in self.contents.items():
                if not 0 <= idx < self.memory_pages:
                    raise ArgumentError(
                        f"Page {idx} outside the {self.memory_pages}-page VPS {self.id}"
                    )
                if len(data) != PAGE_SIZE:
                    raise ArgumentError(f"Page {idx} of VPS {self.id} is {len(data)} bytes")

    @property
    def memory_bytes(self) -> int:
        return self.memory_pages * PAGE_SIZE


@dataclass
class PageFrame:
    frame_no: int
    content: bytearray
    owners: Set[Owner] = field(default_factory=set)
    write_protected: bool = False
    merged: bool = False


@dataclass(frozen=True)
class DedupEvent:
    sim_time: int
    kind: str
    frames: Tuple[int, ...]

    def to_dict(self) -> Dict[str, Any]:
        return {"t": self.sim_time, "kind": self.kind, "frames": list(self.frames)}


class KsmForest:
    """Stable tree of merged frames, unstable tree of candidates, last-seen checksums."""

    def __init__(self):
        self.stable: ContentTree[int] = ContentTree()
        self.unstable: ContentTree[int] = ContentTree()
        self.checksums: Dict[int, int] = {}

    def forget(self, frame_no: int, content: bytes) -> None:
        if self.unstable.search(content) == frame_no:
            self.unstable.delete(content)
        self.checksums.pop(frame_no, None)


class FrameStore:
    """Physical memory of one deduplicating host."""

    def __init__(self, config: Optional[ScanConfig] = None, enabled: bool = True):
        self.config = config or ScanConfig()
        self.enabled = enabled
        self.forest = KsmForest()
        self.frames: Dict[int, PageFrame] = {}
        self.vps: Dict[Hashable, VpsInstance] = {}
        self.clock_ms = 0
        self.full_scans = 0
        self.events: List[DedupEvent] = []
        self._order: List[int] = []
        self._cursor = 0
        self._next_frame = 0

    def register_vps(self, vps: VpsInstance) -> List[int]:
        """Allocate private frames for every page the VPS touches; zero pages if none given."""
        if vps.id in self.vps:
            raise DuplicateVpsError(f"VPS {vps.id!r} is already registered")
        contents = vps.contents
        if contents is None:
            contents = {idx: bytes(PAGE_SIZE) for idx in range(vps.memory_pages)}
        allocated = []
        for idx in sorted(contents):
            frame_no = self._allocate(contents[idx], (vps.id, idx))
            vps.pages[idx] = frame_no
            allocated.append(frame_no)
        self.vps[vps.id] = vps
        logger.debug(f"Registered VPS {vps.id!r} with {len(allocated)} frame(s)")
        return allocated

    def set_ksm_enabled(self, flag: bool) -> None:
        self.enabled = bool(flag)
        logger.info(f"KSM {'enabled' if self.enabled else 'disabled'}")

    def _allocate(self, data: bytes, owner: Owner) -> int:
        if len(data) != PAGE_SIZE:
            raise ArgumentError(f"Frame content must be {PAGE_SIZE} bytes, got {len(data)}")
        frame_no = self._next_frame
        self._next_frame += 1
        self.frames[frame_no] = PageFrame(frame_no, bytearray(data), {owner})
        self.forest.checksums[frame_no] = page_checksum(data)
        self._order.append(frame_no)
        return frame_no

    def _free(self, frame_no: int) -> None:
        frame = self.frames.pop(frame_no)
        self.forest.forget(frame_no, bytes(frame.content))
        pos = bisect_left(self._order, frame_no)
        del self._order[pos]

    def _emit(self, kind: str, *frames: int) -> DedupEvent:
        event = DedupEvent(self.clock_ms, kind, tuple(frames))
        self.events.append(event)
        logger.debug(f"t={self.clock_ms}ms {kind} {list(frames)}")
        return event

    def frame_of(self, vps_id: Hashable, page_idx: int) -> PageFrame:
        vps = self.vps.get(vps_id)
        if vps is None or page_idx not in vps.pages:
            raise UnmappedPageError(f"Page {page_idx} of VPS {vps_id!r} is not mapped")
        return self.frames[vps.pages[page_idx]]

    def read_page(self, vps_id: Hashable, page_idx: int) -> bytes:
        return bytes(self.frame_of(vps_id, page_idx).content)

    def shares_frame(self, a: Owner, b: Owner) -> bool:
        return self.frame_of(*a).frame_no == self.frame_of(*b).frame_no

    def scan_tick(self, config: Optional[ScanConfig] = None) -> List[DedupEvent]:
        """Visit `pages_to_scan` candidates, then sleep `sleep_millisec`."""
        config = config or self.config
        start = len(self.events)
        if self.enabled:
            for _ in range(config.pages_to_scan):
                if not self._order:
                    break
                pos = bisect_left(self._order, self._cursor)
                if pos == len(self._order):
                    pos = 0
                frame_no = self._order[pos]
                self._scan_frame(frame_no)
                if bisect_right(self._order, frame_no) == len(self._order):
                    self._end_pass()
                else:
                    self._cursor = frame_no + 1
        self.clock_ms += config.sleep_millisec
        return self.events[start:]

    def _end_pass(self) -> None:
        self.forest.unstable.clear()
        self.full_scans += 1
        self._cursor = 0

    def _scan_frame(self, frame_no: int) -> None:
        frame = self.frames[frame_no]
        if frame.merged:
            return
        content = bytes(frame.content)
        forest = self.forest

        shared = forest.stable.search(content)
        if shared is not None and shared != frame_no:
            self._merge(shared, frame_no)
            return

        checksum = page_checksum(content)
        if checksum != forest.checksums.get(frame_no):
            forest.checksums[frame_no] = checksum
            self._emit(DROPPED_CHANGED_CHECKSUM, frame_no)
            return

        candidate = forest.unstable.search(content)
        if candidate is None:
            forest.unstable.insert(content, frame_no)
            self._emit(INSERTED_UNSTABLE, frame_no)
        elif candidate != frame_no:
            forest.unstable.delete(content)
            promoted = self.frames[candidate]
            promoted.merged = promoted.write_protected = True
            forest.stable.insert(content, candidate)
            self._merge(candidate, frame_no)

    def _merge(self, target_no: int, frame_no: int) -> None:
        target, frame = self.frames[target_no], self.frames[frame_no]
        for vps_id, idx in frame.owners:
            self.vps[vps_id].pages[idx] = target_no
        target.owners |= frame.owners
        frame.owners = set()
        self._free(frame_no)
        self._emit(MERGED, target_no, frame_no)

    def write_page(self, vps_id: Hashable, page_idx: int, data: bytes, offset: int = 0) -> Latency:
        """Write `data` at `offset`; a merged frame is copied first and the write is slow."""
        frame = self.frame_of(vps_id, page_idx)
        if offset < 0 or offset + len(data) > PAGE_SIZE:
            raise ArgumentError(f"Write of {len(data)} bytes at {offset} leaves the page")
        if not frame.merged:
            old = bytes(frame.content)
            if self.forest.unstable.search(old) == frame.frame_no:
                self.forest.unstable.delete(old)
            frame.content[offset:offset + len(data)] = data
            return Latency.FAST

        copy = bytearray(frame.content)
        copy[offset:offset + len(data)] = data
        owner = (vps_id, page_idx)
        frame.owners.discard(owner)
        new_no = self._allocate(bytes(copy), owner)
        self.vps[vps_id].pages[page_idx] = new_no
        self._emit(COW_BREAK, frame.frame_no, new_no)
        if len(frame.owners) < 2:
            self.forest.stable.delete(bytes(frame.content))
            frame.merged = frame.write_protected = False
            if not frame.owners:
                self._free(frame.frame_no)
        return Latency.SLOW

    def detect_merge_via_timing(self, vps_id: Hashable, page_idx: int) -> bool:
        """Probe with a one-byte write, then put the byte back; slow means it was merged."""
        original = self.read_page(vps_id, page_idx)[0]
        latency = self.write_page(vps_id, page_idx, bytes([original ^ 0xFF]))
        self.write_page(vps_id, page_idx, bytes([original]))
        merged = latency is Latency.SLOW
        state = "merged" if merged else "private"
        logger.info(f"Write probe on VPS {vps_id!r} page {page_idx}: {latency.value} ({state})")
        return merged

    def corrupt_frame(self, frame_no: int, offset: int, data: bytes) -> None:
        """Change frame bytes behind the MMU's back, as a DRAM fault would; every owner sees it."""
        if frame_no not in self.frames:
            raise UnmappedPageError(f"Frame {frame_no} is not allocated")
        frame = self.frames[frame_no]
        if offset < 0 or offset + len(data) > PAGE_SIZE:
            raise ArgumentError(f"Corruption of {len(data)} bytes at {offset} leaves the page")
        old = bytes(frame.content)
        frame.content[offset:offset + len(data)] = data
        if frame.merged:
            self.forest.stable.delete(old)
            self.forest.stable.insert(bytes(frame.content), frame_no)
        elif self.forest.unstable.search(old) == frame_no:
            self.forest.unstable.delete(old)

    def stats(self) -> Dict[str, int]:
        merged = [f for f in self.frames.values() if f.merged]
        return {
            "pages_shared": len(merged),
            "pages_sharing": sum(len(f.owners) - 1 for f in merged),
            "pages_unshared": len(self.frames) - len(merged),
            "full_scans": self.full_scans,
        }

    def snapshot(self) -> Dict[str, Any]:
        return {
            "clock_ms": self.clock_ms,
            "enabled": self.enabled,
            "stats": self.stats(),
            "frames": [
                {
                    "frame_no": f.frame_no,
                    "owners": sorted([str(v), i] for v, i in f.owners),
                    "merged": f.merged,
                    "write_protected": f.write_protected,
                    "checksum": self.forest.checksums.get(f.frame_no),
                }
                for f in sorted(self.frames.values(), key=lambda f: f.frame_no)
            ],
        }

    def write_events(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        with open(path, "w", encoding="utf-8") as f:
            for event in self.events:
                f.write(json.dumps(event.to_dict()) + "\n")
        return path


def dedup_time(total_bytes: int, config: Optional[ScanConfig] = None, vps_count: int = 1) -> float:
    """Minutes to scan `total_bytes` of every co-located VPS at the calibrated rate."""
    config = config or ScanConfig()
    if total_bytes <= 0:
        raise ArgumentError(f"Memory size must be positive, got {total_bytes}")
    if vps_count < 1:
        raise ArgumentError(f"Need at least one VPS, got {vps_count}")
    return config.gb_scan_minutes * total_bytes / GIB * vps_count
