"""
DRAM geometry and a seeded Rowhammer fault model.

Frames interleave across banks by their low bits: bank = f % banks,
then column (page within the row) and row from the remaining bits. A
vulnerable cell fires when the rows directly above or below it in the same
bank collect enough activations in one hammering session.
"""

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from typing import (
    Any,
    Dict,
    Iterable,
    Iterator,
    List,
    Mapping,
    NamedTuple,
    Optional,
    Sequence,
    Set,
    Tuple,
)

import numpy as np

from .errors import ArgumentError, ConfigError, UnmappedPageError
from .estimator import PAGE_SIZE

logger = logging.getLogger(__name__)

THRESHOLD_LOW = 100_000
THRESHOLD_HIGH = 1_500_000
DEFAULT_DENSITY = 1e-4
SECONDS_PER_HOUR = 3600.0


class Direction(str, Enum):
    ONE_TO_ZERO = "one-to-zero"
    ZERO_TO_ONE = "zero-to-one"


@dataclass(frozen=True)
class DramGeometry:
    channels: int = 1
    dimms: int = 2
    ranks: int = 2
    banks_per_dimm: int = 8
    rows: int = 32768
    row_bytes: int = 8192

    def __post_init__(self):
        for name in ("channels", "dimms", "ranks", "banks_per_dimm", "rows", "row_bytes"):
            if getattr(self, name) < 1:
                raise ConfigError(f"DRAM {name} must be positive")
        if self.row_bytes % PAGE_SIZE:
            raise ConfigError(f"Row size {self.row_bytes} is not a whole number of pages")
        if self.banks_per_dimm % self.ranks:
            raise ConfigError(f"{self.banks_per_dimm} banks do not split over {self.ranks} ranks")

    @property
    def total_banks(self) -> int:
        return self.channels * self.dimms * self.banks_per_dimm

    @property
    def pages_per_row(self) -> int:
        return self.row_bytes // PAGE_SIZE

    @property
    def frame_count(self) -> int:
        return self.total_banks * self.rows * self.pages_per_row

    @property
    def bank_hit_probability(self) -> float:
        return 1.0 / self.total_banks

    def locate(self, frame: int) -> Tuple[int, int, int]:
        """(bank, row, column) of a frame; the column is the page index within the row."""
        self.check_frame(frame)
        bank = frame % self.total_banks
        rest = frame // self.total_banks
        return bank, rest // self.pages_per_row, rest % self.pages_per_row

    def frame_at(self, bank: int, row: int, column: int = 0) -> int:
        in_range = 0 <= bank < self.total_banks and 0 <= row < self.rows
        if not (in_range and 0 <= column < self.pages_per_row):
            raise UnmappedPageError(f"No frame at bank {bank}, row {row:#x}, column {column}")
        return (row * self.pages_per_row + column) * self.total_banks + bank

    def check_frame(self, frame: int) -> None:
        if not 0 <= frame < self.frame_count:
            raise UnmappedPageError(f"Frame {frame} outside the {self.frame_count}-frame DRAM")

    def address(self, frame: int) -> str:
        """Readout in (channel dimm rank bank row column) form, row in hex."""
        bank, row, column = self.locate(frame)
        per_channel = self.dimms * self.banks_per_dimm
        channel = (bank // per_channel) % self.channels
        dimm = (bank // self.banks_per_dimm) % self.dimms
        bank_in_dimm = bank % self.banks_per_dimm
        rank = bank_in_dimm // (self.banks_per_dimm // self.ranks)
        return f"({channel} {dimm} {rank} {bank_in_dimm} {row:x} {column})"

    def to_dict(self) -> Dict[str, int]:
        return {
            "channels": self.channels,
            "dimms": self.dimms,
            "ranks": self.ranks,
            "banks_per_dimm": self.banks_per_dimm,
            "rows": self.rows,
            "row_bytes": self.row_bytes,
        }


@dataclass(frozen=True)
class FlipCell:
    bank: int
    row: int
    byte_offset: int  # within the DRAM row
    bit: int
    direction: Direction
    threshold: int = THRESHOLD_LOW
    draw: float = 1.0

    def __post_init__(self):
        if not 0 <= self.bit < 8:
            raise ArgumentError(f"Bit index {self.bit} outside [0, 8)")
        object.__setattr__(self, "direction", Direction(self.direction))

    def frame(self, geometry: DramGeometry) -> int:
        return geometry.frame_at(self.bank, self.row, self.byte_offset // PAGE_SIZE)

    @property
    def page_offset(self) -> int:
        return self.byte_offset % PAGE_SIZE

    def to_dict(self) -> Dict[str, Any]:
        return {
            "bank": self.bank,
            "row": self.row,
            "byte_offset": self.byte_offset,
            "bit": self.bit,
            "direction": self.direction.value,
            "threshold": self.threshold,
            "draw": self.draw,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "FlipCell":
        return cls(**data)


class FlipMap:
    """The ground-truth vulnerable cells, indexed by (bank, row)."""

    def __init__(self, cells: Iterable[FlipCell] = ()):
        self.cells: Tuple[FlipCell, ...] = tuple(cells)
        self._by_row: Dict[Tuple[int, int], List[FlipCell]] = defaultdict(list)
        for cell in self.cells:
            self._by_row[(cell.bank, cell.row)].append(cell)

    def __len__(self) -> int:
        return len(self.cells)

    def __iter__(self) -> Iterator[FlipCell]:
        return iter(self.cells)

    def at(self, bank: int, row: int) -> List[FlipCell]:
        return self._by_row.get((bank, row), [])

    def to_dict(self) -> Dict[str, Any]:
        return {"cells": [c.to_dict() for c in self.cells]}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "FlipMap":
        return cls(FlipCell.from_dict(c) for c in data["cells"])


@dataclass
class HammerConfig:
    reads_per_address: int = 2_000_000
    aggressors_per_iteration: int = 4
    per_row_seconds: float = 51.45
    flips_per_vulnerable_row: float = 3.0
    fill_byte: int = 0xFF
    flip_attenuation: float = 0.0
    vps_pressure: Dict[int, float] = field(default_factory=lambda: {1: 1.0, 3: 1.25, 6: 1.6})

    def __post_init__(self):
        if self.reads_per_address < 1 or self.aggressors_per_iteration < 1:
            raise ConfigError("Hammer reads and aggressor counts must be positive")
        if self.per_row_seconds <= 0 or self.flips_per_vulnerable_row <= 0:
            raise ConfigError("Hammer timing calibration must be positive")
        if not 0 <= self.fill_byte <= 0xFF:
            raise ConfigError(f"Fill byte {self.fill_byte} is not a byte")
        if not 0.0 <= self.flip_attenuation <= 1.0:
            raise ConfigError(f"Flip attenuation {self.flip_attenuation} outside [0, 1]")
        self.vps_pressure = {int(k): float(v) for k, v in self.vps_pressure.items()}
        if not self.vps_pressure:
            raise ConfigError("VPS pressure table is empty")

    def pressure(self, vps_count: int) -> float:
        keys = sorted(self.vps_pressure)
        return float(np.interp(vps_count, keys, [self.vps_pressure[k] for k in keys]))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "reads_per_address": self.reads_per_address,
            "aggressors_per_iteration": self.aggressors_per_iteration,
            "per_row_seconds": self.per_row_seconds,
            "flips_per_vulnerable_row": self.flips_per_vulnerable_row,
            "fill_byte": self.fill_byte,
            "flip_attenuation": self.flip_attenuation,
            "vps_pressure": {str(k): v for k, v in self.vps_pressure.items()},
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "HammerConfig":
        unknown = set(data) - set(cls().to_dict())
        if unknown:
            raise ConfigError(f"Unknown hammer settings: {sorted(unknown)}")
        return cls(**data)


class ProfileEntry(NamedTuple):
    frame: int
    page_offset: int
    bit: int
    direction: Direction


@dataclass
class ProfileResult:
    entries: List[ProfileEntry]
    elapsed: float
    rows_hammered: int
    fill_byte: int = 0xFF

    def to_dict(self) -> Dict[str, Any]:
        return {
            "entries": [[e.frame, e.page_offset, e.bit, e.direction.value] for e in self.entries],
            "elapsed": self.elapsed,
            "rows_hammered": self.rows_hammered,
            "fill_byte": self.fill_byte,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ProfileResult":
        entries = [ProfileEntry(f, o, b, Direction(d)) for f, o, b, d in data["entries"]]
        return cls(entries, data["elapsed"], data["rows_hammered"], data.get("fill_byte", 0xFF))

    def merge(self, other: "ProfileResult") -> "ProfileResult":
        """Union of two profiling passes, e.g. with complementary fill patterns."""
        seen = set(self.entries)
        entries = self.entries + [e for e in other.entries if e not in seen]
        return ProfileResult(
            entries,
            self.elapsed + other.elapsed,
            self.rows_hammered + other.rows_hammered,
            self.fill_byte,
        )


class AppliedFlip(NamedTuple):
    frame: int
    page_offset: int
    bit: int
    direction: Direction
    before: int
    after: int

    @property
    def changed(self) -> bool:
        return self.before != self.after


@dataclass
class DramConfig:
    seed: int = 7
    density: float = DEFAULT_DENSITY
    block_pages: int = 128
    block_start_frame: int = 0x3C96 * 32
    planted_cells: List[FlipCell] = field(default_factory=list)

    def __post_init__(self):
        if not 0.0 <= self.density < 1.0:
            raise ConfigError(f"Vulnerability density {self.density} outside [0, 1)")
        if self.block_pages < 1:
            raise ConfigError(f"Profiling block needs at least one page, got {self.block_pages}")
        self.planted_cells = [
            c if isinstance(c, FlipCell) else FlipCell.from_dict(c) for c in self.planted_cells
        ]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "seed": self.seed,
            "density": self.density,
            "block_pages": self.block_pages,
            "block_start_frame": self.block_start_frame,
            "planted_cells": [c.to_dict() for c in self.planted_cells],
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "DramConfig":
        unknown = set(data) - set(cls().to_dict())
        if unknown:
            raise ConfigError(f"Unknown DRAM settings: {sorted(unknown)}")
        return cls(**data)


class Dram:
    """Resident page images plus the cells that can flip under them."""

    def __init__(self, geometry: DramGeometry, flip_map: FlipMap):
        self.geometry = geometry
        self.flip_map = flip_map
        self.pages: Dict[int, bytearray] = {}

    def place_page(self, frame: int, image: bytes) -> None:
        self.geometry.check_frame(frame)
        data = bytes(image)[:PAGE_SIZE]
        if len(data) != PAGE_SIZE:
            raise ArgumentError(f"Page image is {len(data)} bytes, expected {PAGE_SIZE}")
        self.pages[frame] = bytearray(data)

    def read_page(self, frame: int) -> bytes:
        self.geometry.check_frame(frame)
        if frame not in self.pages:
            raise UnmappedPageError(f"No page resident at frame {frame}")
        return bytes(self.pages[frame])

    def _fires(
        self, cell: FlipCell, activations: Mapping[Tuple[int, int], int], attenuation: float
    ) -> bool:
        above = activations.get((cell.bank, cell.row - 1), 0)
        below = activations.get((cell.bank, cell.row + 1), 0)
        pressure = above + below
        return pressure >= cell.threshold and cell.draw >= attenuation

    def _neighbours(self, rows: Iterable[Tuple[int, int]]) -> List[FlipCell]:
        cells: List[FlipCell] = []
        for bank, row in dict.fromkeys(rows):
            for victim_row in (row - 1, row + 1):
                cells.extend(self.flip_map.at(bank, victim_row))
        return list(dict.fromkeys(cells))

    def _apply(self, cell: FlipCell) -> Optional[AppliedFlip]:
        frame = cell.frame(self.geometry)
        page = self.pages.get(frame)
        if page is None:
            return None
        before = page[cell.page_offset]
        mask = 1 << cell.bit
        after = before & ~mask if cell.direction is Direction.ONE_TO_ZERO else before | mask
        page[cell.page_offset] = after
        return AppliedFlip(frame, cell.page_offset, cell.bit, cell.direction, before, after)

    def hammer(
        self, aggressor_rows: Sequence[Tuple[int, int]], config: Optional[HammerConfig] = None
    ) -> List[AppliedFlip]:
        """Hammer (bank, row) aggressors once; returns flips landing on resident pages."""
        config = config or HammerConfig()
        activations: Dict[Tuple[int, int], int] = defaultdict(int)
        for bank, row in aggressor_rows:
            if not (0 <= bank < self.geometry.total_banks and 0 <= row < self.geometry.rows):
                raise ArgumentError(f"Aggressor (bank {bank}, row {row:#x}) outside the DRAM")
            activations[(bank, row)] += config.reads_per_address
        flips = []
        for cell in self._neighbours(activations):
            if self._fires(cell, activations, config.flip_attenuation):
                applied = self._apply(cell)
                if applied is not None:
                    flips.append(applied)
        if flips:
            changed = sum(f.changed for f in flips)
            logger.info(f"Hammering flipped {changed} bit(s) in {len(flips)} vulnerable cell(s)")
        return flips


def build_dram(
    seed: int,
    geometry: Optional[DramGeometry] = None,
    density: float = DEFAULT_DENSITY,
    planted: Iterable[FlipCell] = (),
) -> Dram:
    """Seeded vulnerable-cell map at `density` cells per page, plus any planted cells."""
    geometry = geometry or DramGeometry()
    if not 0.0 <= density < 1.0:
        raise ArgumentError(f"Vulnerability density {density} outside [0, 1)")
    rng = np.random.default_rng(seed)
    count = int(rng.binomial(geometry.frame_count, density)) if density else 0
    frames = np.sort(rng.choice(geometry.frame_count, size=count, replace=False)) if count else []
    cells = []
    for frame in frames:
        bank, row, column = geometry.locate(int(frame))
        cells.append(FlipCell(
            bank=bank,
            row=row,
            byte_offset=column * PAGE_SIZE + int(rng.integers(PAGE_SIZE)),
            bit=int(rng.integers(8)),
            direction=Direction.ONE_TO_ZERO if rng.random() < 0.5 else Direction.ZERO_TO_ONE,
            threshold=int(rng.integers(THRESHOLD_LOW, THRESHOLD_HIGH + 1)),
            draw=float(rng.random()),
        ))
    cells.extend(planted)
    logger.debug(f"Built DRAM (seed={seed}) with {len(cells)} vulnerable cell(s)")
    return Dram(geometry, FlipMap(cells))


def profile(
    dram: Dram,
    block_pages: int,
    config: Optional[HammerConfig] = None,
    rng: Optional[np.random.Generator] = None,
    start_frame: int = 0,
    banks: Optional[Set[int]] = None,
) -> ProfileResult:
    """
    Fill a block with the fill pattern and hammer every page of it once, in
    random order, `aggressors_per_iteration` at a time. Only bit flips that
    change the fill pattern are observable and recorded. With `banks` given,
    aggressors are drawn from those banks only.
    """
    config = config or HammerConfig()
    rng = rng if rng is not None else np.random.default_rng()
    if block_pages < 1 or start_frame < 0 or start_frame + block_pages > dram.geometry.frame_count:
        raise ArgumentError(f"Block of {block_pages} pages at frame {start_frame} exceeds the DRAM")

    block = range(start_frame, start_frame + block_pages)
    fill = bytes([config.fill_byte]) * PAGE_SIZE
    for frame in block:
        dram.place_page(frame, fill)

    candidates = [f for f in block if banks is None or f % dram.geometry.total_banks in banks]
    order = rng.permutation(candidates) if candidates else []
    activations: Dict[Tuple[int, int], int] = defaultdict(int)
    entries: List[ProfileEntry] = []
    seen: Set[ProfileEntry] = set()
    rows_hammered = 0
    step = config.aggressors_per_iteration
    for start in range(0, len(order), step):
        group = [int(f) for f in order[start:start + step]]
        rows = []
        for frame in group:
            bank, row, _ = dram.geometry.locate(frame)
            activations[(bank, row)] += config.reads_per_address
            rows.append((bank, row))
        rows_hammered += len(group)
        for cell in dram._neighbours(rows):
            if not dram._fires(cell, activations, config.flip_attenuation):
                continue
            applied = dram._apply(cell)
            if applied is None or not applied.changed:
                continue
            entry = ProfileEntry(applied.frame, applied.page_offset, applied.bit, applied.direction)
            if entry not in seen:
                seen.add(entry)
                entries.append(entry)

    elapsed = rows_hammered * config.per_row_seconds
    result = ProfileResult(entries, elapsed, rows_hammered, config.fill_byte)
    logger.info(
        f"Profiled {block_pages} pages with fill {config.fill_byte:#04x}: "
        f"{len(entries)} flip(s), {result.elapsed:.1f}s simulated"
    )
    return result


def profiling_time(
    target_locations: int, config: Optional[HammerConfig] = None, vps_count: int = 1
) -> float:
    """Simulated hours to collect `target_locations` flippable bits."""
    config = config or HammerConfig()
    if target_locations < 1:
        raise ArgumentError(f"Need at least one target location, got {target_locations}")
    rows = target_locations / config.flips_per_vulnerable_row
    return rows * config.per_row_seconds / SECONDS_PER_HOUR * config.pressure(vps_count)
