"""
End-to-end attack harness.

Runs the whole pipeline on simulated components: train the estimator on a
historian log, guess the victim's tag-table page, spray it next to the victim,
let KSM merge the pages, confirm the merge through the copy-on-write timing
channel, profile the DRAM, move the merged frame onto a vulnerable cell and
hammer it. Every duration in the report comes from a simulated clock or a
calibrated rate, never from wall time.
"""

import csv
import json
import logging
import math
import zlib
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .cache import ProfileCache
from .dedup import FrameStore, ScanConfig, VpsInstance, dedup_time
from .dram import (
    Direction,
    DramConfig,
    FlipCell,
    HammerConfig,
    ProfileEntry,
    ProfileResult,
    build_dram,
    profile,
    profiling_time,
)
from .errors import ArgumentError, ConfigError, InfeasiblePlacementError
from .estimator import (
    BYTES_PER_GB,
    DEFAULT_SPRAY_GB,
    PAGE_SIZE,
    Belief,
    EstimateResult,
    EstimatorConfig,
    FrequencyTables,
    ImposterEstimator,
    candidate_pages_needed,
    fit,
    score_steps,
)
from .ics_model import (
    HistorianLog,
    WarehouseScenario,
    build_warehouse_model,
    nominal_step,
    simulate,
)
from .page_synth import (
    DLL_NAMES,
    PINNED_OFFSETS,
    BssImage,
    ProtocolProfile,
    TagTableLayout,
    apply_signature_defense,
    bruteforce_cost,
    decode_page,
    layout_from_model,
    synthesize_page,
    tag_values,
)
from .utils import get_python_version, host_memory_snapshot

logger = logging.getLogger(__name__)

PREDICTIVE = "predictive-injection"
ADVERSARIAL = "adversarial"
TARGET_KINDS = (PREDICTIVE, ADVERSARIAL)

CONSEQUENCE_NONE = "none"
OUT_OF_RANGE_DROP = "out-of-range-drop"
ADVERSARIAL_DROP = "adversarial-drop"

VICTIM = "victim"
ATTACKER = "attacker"

# The cell observed flipping under the threshold's upper byte at (0 0 1 7 3c97 0).
OBSERVED_CELL = FlipCell(
    bank=7,
    row=0x3C97,
    byte_offset=PINNED_OFFSETS["S_theta"] + 1,
    bit=3,
    direction=Direction.ZERO_TO_ONE,
)
TARGET_CELL_BANK = 7
TARGET_CELL_ROW = 0x3C98


@dataclass(frozen=True)
class TargetSpec:
    """What the flip should hit: whatever the profile offers, or one chosen tag bit."""

    kind: str = PREDICTIVE
    tag: Optional[str] = None
    bit: Optional[int] = None
    direction: Direction = Direction.ONE_TO_ZERO

    def __post_init__(self):
        if self.kind not in TARGET_KINDS:
            raise ConfigError(f"Unknown target kind: {self.kind}")
        try:
            object.__setattr__(self, "direction", Direction(self.direction))
        except ValueError as e:
            raise ConfigError(f"Unknown flip direction: {self.direction}") from e
        if self.kind == ADVERSARIAL and (self.tag is None or self.bit is None):
            raise ConfigError("An adversarial target needs a tag and a bit")
        if self.bit is not None and self.bit < 0:
            raise ConfigError(f"Bit index must be non-negative, got {self.bit}")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "tag": self.tag,
            "bit": self.bit,
            "direction": self.direction.value,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "TargetSpec":
        unknown = set(data) - {"kind", "tag", "bit", "direction"}
        if unknown:
            raise ConfigError(f"Unknown target settings: {sorted(unknown)}")
        return cls(**data)


def _harness_scan() -> ScanConfig:
    return ScanConfig(pages_to_scan=100, sleep_millisec=20, gb_scan_minutes=6.5)


_NESTED = {
    "estimator": EstimatorConfig,
    "scan": ScanConfig,
    "dram": DramConfig,
    "hammer": HammerConfig,
    "target": TargetSpec,
}


@dataclass
class AttackScenario:
    model_seed: int = 42
    protocol: str = "Mosquitto"
    training_length: int = 10_000
    holdout_steps: int = 20
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)
    vps_count: int = 1
    vps_memory_bytes: int = 2 << 30
    scan: ScanConfig = field(default_factory=_harness_scan)
    dram: DramConfig = field(default_factory=DramConfig)
    hammer: HammerConfig = field(default_factory=HammerConfig)
    signature_defense: bool = False
    ksm_enabled: bool = True
    target: TargetSpec = field(default_factory=TargetSpec)
    plant_target_cell: bool = False
    spray_gb: float = DEFAULT_SPRAY_GB
    spray_refill_minutes: float = 2.0
    bystander_pages: int = 8
    max_scan_passes: int = 4
    profiling_locations: int = 20_000
    attacker_first: bool = False

    def __post_init__(self):
        if self.protocol not in DLL_NAMES:
            raise ConfigError(f"Unknown protocol variant: {self.protocol}")
        if self.training_length < 2:
            raise ConfigError(f"Training needs at least 2 records, got {self.training_length}")
        if self.holdout_steps < 1:
            raise ConfigError(f"Need at least one held-out step, got {self.holdout_steps}")
        if self.vps_count < 1:
            raise ConfigError(f"Need at least one co-located VPS, got {self.vps_count}")
        if self.vps_memory_bytes < PAGE_SIZE or self.vps_memory_bytes % PAGE_SIZE:
            raise ConfigError(f"VPS memory {self.vps_memory_bytes} is not a whole number of pages")
        if self.spray_gb <= 0:
            raise ConfigError(f"Spray budget must be positive, got {self.spray_gb}")
        if self.spray_refill_minutes < 0:
            raise ConfigError(f"Spray refill time is negative: {self.spray_refill_minutes}")
        if self.bystander_pages < 0 or self.max_scan_passes < 1 or self.profiling_locations < 1:
            raise ConfigError("Bystander pages, scan passes and profiling locations out of range")

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {}
        for name in self.__dataclass_fields__:
            value = getattr(self, name)
            data[name] = value.to_dict() if name in _NESTED else value
        return data

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "AttackScenario":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"Unknown scenario settings: {sorted(unknown)}")
        kwargs = dict(data)
        defaults = cls()
        for name, kind in _NESTED.items():
            if name in kwargs and isinstance(kwargs[name], Mapping):
                # Partial sections override the scenario defaults, not the section class defaults.
                merged = {**getattr(defaults, name).to_dict(), **kwargs[name]}
                kwargs[name] = kind.from_dict(merged)
        try:
            return cls(**kwargs)
        except TypeError as e:
            raise ConfigError(f"Invalid scenario: {e}") from e

    def with_seed(self, seed: int) -> "AttackScenario":
        """Same scenario with both the plant model and the DRAM seeded from `seed`."""
        return replace(self, model_seed=seed, dram=replace(self.dram, seed=seed))


@dataclass
class AttackReport:
    scenario: Dict[str, Any]
    state_accuracy: float
    meas_accuracy: float
    candidate_pages: int
    guessed_page_bytes: int
    bruteforce_pages_bytes: int
    bruteforce_pages_gb: float
    bruteforce_attempts: int
    bruteforce_hours: float
    bruteforce_log10_gb: float
    bruteforce_log10_hours: float
    dedup_minutes: float
    scan_clock_ms: int
    merge_detected: bool
    profiling_hours: float = 0.0
    profile_seconds: float = 0.0
    profile_flips: int = 0
    flips_applied: int = 0
    corrupted_tags: List[Dict[str, Any]] = field(default_factory=list)
    consequence: str = CONSEQUENCE_NONE
    hammer_seconds: float = 0.0
    total_seconds: float = 0.0
    dram_address: Optional[str] = None
    host_memory: Dict[str, int] = field(default_factory=dict)
    python_version: str = ""

    def to_dict(self) -> Dict[str, Any]:
        return {name: getattr(self, name) for name in self.__dataclass_fields__}

    def csv_row(self) -> Dict[str, Any]:
        row = {k: v for k, v in self.to_dict().items() if not isinstance(v, (dict, list))}
        row["protocol"] = self.scenario.get("protocol")
        row["model_seed"] = self.scenario.get("model_seed")
        row["corrupted_tags"] = ";".join(
            f"{t['tag']}:{t['before']}->{t['after']}" for t in self.corrupted_tags
        )
        return row


def write_reports_csv(reports: Sequence[AttackReport], path: Union[str, Path]) -> Path:
    if not reports:
        raise ArgumentError("No reports to write")
    path = Path(path)
    rows = [r.csv_row() for r in reports]
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
    return path


@dataclass
class SweepGrid:
    protocols: List[str] = field(default_factory=lambda: list(DLL_NAMES))
    vps_counts: List[int] = field(default_factory=lambda: [1, 3, 6])
    locations: List[int] = field(default_factory=lambda: [5_000, 10_000, 15_000, 20_000])

    def __post_init__(self):
        if not (self.protocols and self.vps_counts and self.locations):
            raise ArgumentError("Sweep grid has an empty axis")
        unknown = [p for p in self.protocols if p not in DLL_NAMES]
        if unknown:
            raise ArgumentError(f"Unknown protocol variants in sweep: {unknown}")

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "SweepGrid":
        unknown = set(data) - {"protocols", "vps_counts", "locations"}
        if unknown:
            raise ConfigError(f"Unknown sweep settings: {sorted(unknown)}")
        return cls(**data)


@dataclass
class _Trained:
    plant: WarehouseScenario
    log: HistorianLog
    tables: FrequencyTables


def classify(
    before: Mapping[str, Any],
    after: Mapping[str, Any],
    out_of_range: Sequence[str],
    plant: WarehouseScenario,
) -> str:
    """Physical consequence of a corrupted tag table."""
    if plant.threshold.name in out_of_range:
        return OUT_OF_RANGE_DROP
    suction = plant.suction
    on, off = suction.code_of("ON"), suction.code_of("OFF")
    if before.get(suction.name) == on and after.get(suction.name) == off:
        return ADVERSARIAL_DROP
    return CONSEQUENCE_NONE


def _flip_byte(value: int, bit: int, direction: Direction) -> int:
    mask = 1 << bit
    return value & ~mask if direction is Direction.ONE_TO_ZERO else value | mask


class AttackHarness:
    """Runs attack scenarios; trained estimators and DRAM profiles are reused across runs."""

    def __init__(self, cache: Optional[ProfileCache] = None):
        self.cache = cache or ProfileCache()
        self._trained: Dict[Tuple[int, int, int, float], _Trained] = {}

    def train(self, scenario: AttackScenario) -> _Trained:
        """Simulate the plant's historian and fit the frequency tables on the training window."""
        key = (
            scenario.model_seed,
            scenario.training_length,
            scenario.holdout_steps,
            scenario.estimator.smoothing,
        )
        if key not in self._trained:
            plant = build_warehouse_model(scenario.model_seed)
            rng = np.random.default_rng(scenario.model_seed)
            x_0 = rng.integers(0, plant.model.state_sizes)
            log = simulate(plant.model, x_0, scenario.training_length + scenario.holdout_steps, rng)
            tables = fit(log.window(0, scenario.training_length), scenario.estimator.smoothing)
            self._trained[key] = _Trained(plant, log, tables)
        return self._trained[key]

    def _layouts(
        self, scenario: AttackScenario, plant: WarehouseScenario
    ) -> Tuple[TagTableLayout, TagTableLayout]:
        """(victim layout, layout the attacker reconstructs)."""
        profile_ = ProtocolProfile.for_variant(scenario.protocol)
        guessed = layout_from_model(plant, profile_, seed=scenario.model_seed)
        if not scenario.signature_defense:
            return guessed, guessed
        rng = np.random.default_rng([scenario.model_seed, zlib.crc32(b"bss_signature")])
        return apply_signature_defense(guessed, rng), guessed

    @staticmethod
    def _candidate_pages(layout: TagTableLayout, estimate: EstimateResult) -> List[bytes]:
        """Best guess first; a second page swaps the least confident variable to its runner-up."""
        x, y = estimate.x_hat.copy(), estimate.y_index.copy()
        pages = [synthesize_page(layout, tag_values(layout, x, y)).data]
        weakest = estimate.least_confident()
        if candidate_pages_needed(estimate.mean_posterior()) > 1 and weakest is not None:
            kind, var_id = weakest
            if kind == "state":
                x[var_id] = estimate.state_alternates[var_id]
            else:
                y[var_id] = estimate.meas_alternates[var_id]
            pages.append(synthesize_page(layout, tag_values(layout, x, y)).data)
        return pages

    @staticmethod
    def _tick_until_merged(
        store: FrameStore, attacker_pages: int, max_passes: int
    ) -> Optional[int]:
        """Scan until the victim page shares a frame with a sprayed page; None on timeout."""
        frames = len(store.frames)
        budget = max_passes * max(1, math.ceil(frames / store.config.pages_to_scan)) + 1
        for _ in range(budget):
            store.scan_tick()
            for idx in range(attacker_pages):
                if store.shares_frame((VICTIM, 0), (ATTACKER, idx)):
                    return idx
        return None

    def _register(
        self, scenario: AttackScenario, store: FrameStore, victim: bytes, pages: List[bytes]
    ) -> None:
        memory_pages = scenario.vps_memory_bytes // PAGE_SIZE
        rng = np.random.default_rng([scenario.model_seed, scenario.vps_count])
        victim_vps = VpsInstance(VICTIM, memory_pages, {0: victim})
        attacker_vps = VpsInstance(ATTACKER, memory_pages, dict(enumerate(pages)))
        order = [attacker_vps, victim_vps]
        if not scenario.attacker_first:
            order.reverse()
        for n in range(1, scenario.vps_count):
            contents = {i: rng.bytes(PAGE_SIZE) for i in range(scenario.bystander_pages)}
            order.append(VpsInstance(f"bystander-{n}", memory_pages, contents))
        for vps in order:
            store.register_vps(vps)

    def profile_dram(self, scenario: AttackScenario, planted: Sequence[FlipCell]) -> ProfileResult:
        """Dual-fill profile of the configured block, from the cache when available."""
        cfg = scenario.dram
        fingerprint = {
            "planted": [c.to_dict() for c in planted],
            "density": cfg.density,
            "hammer": scenario.hammer.to_dict(),
        }
        digest = zlib.crc32(json.dumps(fingerprint, sort_keys=True).encode())
        key = f"{cfg.seed}-{cfg.block_start_frame}-{cfg.block_pages}-{digest:08x}"
        cached = self.cache.get(key)
        if cached is not None:
            return cached
        rng = np.random.default_rng(cfg.seed)
        result: Optional[ProfileResult] = None
        for fill in (0xFF, 0x00):
            dram = build_dram(cfg.seed, density=cfg.density, planted=planted)
            hammer = replace(scenario.hammer, fill_byte=fill)
            passed = profile(dram, cfg.block_pages, hammer, rng, cfg.block_start_frame)
            result = passed if result is None else result.merge(passed)
        assert result is not None
        self.cache.store(key, result)
        return result

    def _planted(self, scenario: AttackScenario, layout: TagTableLayout) -> List[FlipCell]:
        planted = list(scenario.dram.planted_cells) + [OBSERVED_CELL]
        target = scenario.target
        if target.kind != ADVERSARIAL or not scenario.plant_target_cell:
            return planted
        assert target.tag is not None and target.bit is not None
        tag = layout.tag(target.tag)
        offset, bit = tag.offset + target.bit // 8, target.bit % 8
        wanted = (offset, bit, target.direction)
        if any((c.page_offset, c.bit, c.direction) == wanted for c in planted):
            return planted
        planted.append(FlipCell(TARGET_CELL_BANK, TARGET_CELL_ROW, offset, bit, target.direction))
        return planted

    def _select_cell(
        self,
        scenario: AttackScenario,
        entries: Sequence[ProfileEntry],
        layout: TagTableLayout,
        victim: bytes,
        plant: WarehouseScenario,
    ) -> ProfileEntry:
        ordered = sorted(entries, key=lambda e: (e.frame, e.page_offset, e.bit))
        target = scenario.target
        if target.kind == ADVERSARIAL:
            assert target.tag is not None and target.bit is not None
            tag = layout.tag(target.tag)
            if target.bit >= tag.width * 8:
                raise ArgumentError(f"Tag {tag.name} has no bit {target.bit}")
            want = (tag.offset + target.bit // 8, target.bit % 8, target.direction)
            for entry in ordered:
                if (entry.page_offset, entry.bit, entry.direction) == want:
                    return entry
            raise InfeasiblePlacementError(
                f"No profiled cell flips bit {target.bit} of {tag.name} {target.direction.value}"
            )

        baseline = decode_page(BssImage(victim), layout).values
        for entry in ordered:
            flipped = bytearray(victim)
            offset = entry.page_offset
            flipped[offset] = _flip_byte(flipped[offset], entry.bit, entry.direction)
            decoded = decode_page(BssImage(bytes(flipped)), layout)
            out_of_range = [c.tag for c in decoded.report]
            if classify(baseline, decoded.values, out_of_range, plant) != CONSEQUENCE_NONE:
                return entry
        raise InfeasiblePlacementError(
            "No profiled cell turns the victim page into a physical consequence"
        )

    def run_end_to_end(self, scenario: AttackScenario) -> AttackReport:
        trained = self.train(scenario)
        plant, log, tables = trained.plant, trained.log, trained.tables
        T = scenario.training_length
        estimator = ImposterEstimator(tables, scenario.estimator)
        acc = score_steps(estimator, log, T + 1, T + scenario.holdout_steps)

        last = log.record(len(log))
        victim_x, victim_y = nominal_step(plant.model, last.x)
        belief = Belief.one_hot(last.x, log.state_sizes)
        estimate = estimator.estimate(belief, last_measurements=last.y)

        victim_layout, guessed_layout = self._layouts(scenario, plant)
        victim = synthesize_page(victim_layout, tag_values(victim_layout, victim_x, victim_y)).data
        pages = self._candidate_pages(guessed_layout, estimate)

        cost = bruteforce_cost(victim_layout, scenario.spray_gb)
        dedup_minutes = dedup_time(scenario.vps_memory_bytes, scenario.scan, scenario.vps_count)
        # A blind attempt rewrites the whole spray before waiting out a full scan.
        attempt_hours = (dedup_minutes + scenario.spray_refill_minutes) / 60.0
        bf_hours = cost.attempts * attempt_hours
        report = AttackReport(
            scenario=scenario.to_dict(),
            state_accuracy=acc.state,
            meas_accuracy=acc.measurement,
            candidate_pages=len(pages),
            guessed_page_bytes=len(pages) * PAGE_SIZE,
            bruteforce_pages_bytes=cost.pages_bytes,
            bruteforce_pages_gb=float(cost.pages_gb),
            bruteforce_attempts=cost.attempts,
            bruteforce_hours=bf_hours,
            bruteforce_log10_gb=math.log10(cost.pages_bytes) - math.log10(BYTES_PER_GB),
            bruteforce_log10_hours=math.log10(cost.attempts) + math.log10(attempt_hours),
            dedup_minutes=dedup_minutes,
            scan_clock_ms=0,
            merge_detected=False,
            total_seconds=dedup_minutes * 60.0,
            host_memory=host_memory_snapshot(),
            python_version=get_python_version(),
        )
        logger.debug(f"Host memory during run: {report.host_memory}")

        store = FrameStore(scenario.scan, enabled=scenario.ksm_enabled)
        self._register(scenario, store, victim, pages)
        self._tick_until_merged(store, len(pages), scenario.max_scan_passes)
        detected = [store.detect_merge_via_timing(ATTACKER, i) for i in range(len(pages))]
        report.merge_detected = any(detected)
        if not report.merge_detected:
            report.scan_clock_ms = store.clock_ms
            logger.info(f"No merge on {scenario.protocol} after {store.full_scans} pass(es)")
            return report

        hit = detected.index(True)
        logger.info(f"Merge detected on sprayed page {hit} of {len(pages)} ({scenario.protocol})")
        if self._tick_until_merged(store, len(pages), scenario.max_scan_passes) is None:
            logger.warning("Pages did not re-merge after the timing probe")
            report.scan_clock_ms = store.clock_ms
            return report
        report.scan_clock_ms = store.clock_ms

        planted = self._planted(scenario, victim_layout)
        profiled = self.profile_dram(scenario, planted)
        report.profile_seconds = profiled.elapsed
        report.profile_flips = len(profiled.entries)
        report.profiling_hours = profiling_time(
            scenario.profiling_locations, scenario.hammer, scenario.vps_count
        )
        entry = self._select_cell(scenario, profiled.entries, victim_layout, victim, plant)

        dram = build_dram(scenario.dram.seed, density=scenario.dram.density, planted=planted)
        shared = store.frame_of(VICTIM, 0)
        dram.place_page(entry.frame, bytes(shared.content))
        bank, row, _ = dram.geometry.locate(entry.frame)
        aggressor = row - 1 if row > 0 else row + 1
        flips = dram.hammer([(bank, aggressor)], scenario.hammer)
        report.dram_address = dram.geometry.address(entry.frame)

        hammered = dram.read_page(entry.frame)
        for offset in BssImage(hammered).diff(BssImage(bytes(shared.content))):
            store.corrupt_frame(shared.frame_no, offset, hammered[offset:offset + 1])
        report.flips_applied = sum(1 for f in flips if f.frame == entry.frame and f.changed)
        pressure = scenario.hammer.pressure(scenario.vps_count)
        report.hammer_seconds = scenario.hammer.per_row_seconds * pressure
        report.total_seconds = dedup_minutes * 60.0 + report.hammer_seconds

        before = decode_page(BssImage(victim), victim_layout).values
        decoded = decode_page(BssImage(store.read_page(VICTIM, 0)), victim_layout)
        report.corrupted_tags = [
            {"tag": name, "before": before[name], "after": value}
            for name, value in decoded.values.items()
            if value != before[name]
        ]
        out_of_range = [c.tag for c in decoded.report]
        report.consequence = classify(before, decoded.values, out_of_range, plant)
        logger.info(
            f"Hammered {report.dram_address}: {report.flips_applied} flip(s), "
            f"consequence {report.consequence}"
        )
        return report

    def compare_bruteforce(
        self, scenario: AttackScenario, report: Optional[AttackReport] = None
    ) -> List[Dict[str, Any]]:
        """Guessed-page size and time of the estimated attack against blind enumeration."""
        report = report or self.run_end_to_end(scenario)
        return [
            {
                "method": "imposter",
                "guessed_page_bytes": report.guessed_page_bytes,
                "guessed_page_gb": report.guessed_page_bytes / BYTES_PER_GB,
                "attempts": 1,
                "hours": report.total_seconds / 3600.0,
            },
            {
                "method": "bruteforce",
                "guessed_page_bytes": report.bruteforce_pages_bytes,
                "guessed_page_gb": report.bruteforce_pages_gb,
                "attempts": report.bruteforce_attempts,
                "hours": report.bruteforce_hours,
            },
        ]

    def adversarial_flip(self, scenario: AttackScenario) -> AttackReport:
        """Attack run whose flip is forced onto one chosen bit of one tag."""
        if scenario.target.kind != ADVERSARIAL:
            raise ArgumentError("adversarial_flip needs an adversarial target")
        return self.run_end_to_end(scenario)

    def sweep_figures(
        self,
        base: AttackScenario,
        grid: SweepGrid,
        out_dir: Union[str, Path],
    ) -> Dict[str, Path]:
        """
        Write three datasets to `out_dir`:

        - profiling_time.csv: simulated profiling hours per VPS count and target locations
        - dedup_time.csv: calibrated dedup minutes and scan clock per protocol and VPS count
        - protocols.csv: merge and flip success per protocol at the base VPS count
        """
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)

        profiling_rows = [
            {"vps_count": n, "locations": loc, "hours": profiling_time(loc, base.hammer, n)}
            for n in grid.vps_counts
            for loc in grid.locations
        ]

        runs: Dict[Tuple[str, int], AttackReport] = {}
        for protocol in grid.protocols:
            for n in sorted(set(grid.vps_counts) | {base.vps_count}):
                scenario = replace(base, protocol=protocol, vps_count=n)
                runs[(protocol, n)] = self.run_end_to_end(scenario)
        dedup_rows = [
            {
                "protocol": protocol,
                "vps_count": n,
                "dedup_minutes": runs[(protocol, n)].dedup_minutes,
                "scan_clock_ms": runs[(protocol, n)].scan_clock_ms,
            }
            for protocol in grid.protocols
            for n in grid.vps_counts
        ]
        protocol_rows = []
        for protocol in grid.protocols:
            r = runs[(protocol, base.vps_count)]
            protocol_rows.append({
                "protocol": protocol,
                "dll_name": DLL_NAMES[protocol],
                "merge_detected": r.merge_detected,
                "flips_applied": r.flips_applied,
                "consequence": r.consequence,
                "success": r.consequence != CONSEQUENCE_NONE,
            })

        written = {}
        for name, rows in (
            ("profiling_time", profiling_rows),
            ("dedup_time", dedup_rows),
            ("protocols", protocol_rows),
        ):
            path = out / f"{name}.csv"
            with open(path, "w", newline="", encoding="utf-8") as f:
                writer = csv.DictWriter(f, fieldnames=list(rows[0]))
                writer.writeheader()
                writer.writerows(rows)
            written[name] = path
        logger.info(f"Sweep wrote {len(written)} dataset(s) to {out}")
        return written
