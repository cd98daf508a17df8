"""
Byte-exact model of the target DLL's .bss tag table.

Tags are packed little-endian with natural alignment: protocol constants
first, then one slot per state variable, then one per measurement variable.
The image is the page-aligned section payload only; no PE headers.
"""

import json
import logging
import math
import struct
import zlib
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Mapping, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import ArgumentError, CapacityError, DomainError, SerializationError
from .estimator import DEFAULT_SPRAY_GB, PAGE_SIZE, Combinations, combinations
from .ics_model import StateSpaceModel, WarehouseScenario

logger = logging.getLogger(__name__)

KIND_FORMATS = {
    "bool": "<B",
    "enum": "<B",
    "int16": "<h",
    "int64": "<q",
    "float64": "<d",
    "uint64": "<Q",
}
SIGNATURE_BITS = 64

# Places the threshold's upper byte at page offset 0x0743.
PINNED_OFFSETS = {"S_theta": 0x0742}

DLL_NAMES = {
    "EMQ X": "erlexec.dll",
    "Mosquitto": "mosquitto.dll",
    "MQTT-C": "mqtt_pal.dll",
    "eMQTT5": "MQTT_client.dll",
    "wolfMQTT": "MqttMessage.dll",
}

_BASE_CONSTANTS = {
    "broker_port": 1883,
    "keep_alive": 60,
    "protocol_level": 4,
    "qos": 1,
    "max_inflight": 20,
}

SOURCES = ("constant", "state", "measurement", "signature")


def kind_width(kind: str) -> int:
    try:
        return struct.calcsize(KIND_FORMATS[kind])
    except KeyError:
        raise DomainError(f"Unknown tag kind: {kind}") from None


@dataclass(frozen=True)
class TagDescriptor:
    name: str
    kind: str
    offset: int
    width: int
    source: str
    source_id: Optional[int] = None
    domain: Tuple[Any, ...] = ()
    value: Optional[int] = None  # fixed value of constants and the signature

    def __post_init__(self):
        if self.width != kind_width(self.kind):
            raise ArgumentError(
                f"Tag {self.name} of kind {self.kind} cannot be {self.width} bytes wide"
            )
        if self.source not in SOURCES:
            raise ArgumentError(f"Unknown tag source: {self.source}")
        if self.offset < 0:
            raise ArgumentError(f"Tag {self.name} has negative offset {self.offset}")

    @property
    def end(self) -> int:
        return self.offset + self.width

    @property
    def domain_size(self) -> int:
        """Number of values an attacker has to consider for this slot."""
        if self.source == "signature":
            return 2**SIGNATURE_BITS
        if self.source == "constant":
            return 1
        return len(self.domain)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "kind": self.kind,
            "offset": self.offset,
            "width": self.width,
            "source": self.source,
            "source_id": self.source_id,
            "domain": list(self.domain),
            "value": self.value,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "TagDescriptor":
        return cls(
            data["name"], data["kind"], data["offset"], data["width"], data["source"],
            data.get("source_id"), tuple(data.get("domain", ())), data.get("value"),
        )


@dataclass(frozen=True)
class ProtocolProfile:
    """A cloud protocol variant: its control DLL and the globals it always carries."""

    variant: str
    dll_name: str
    constants: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if DLL_NAMES.get(self.variant) != self.dll_name:
            raise DomainError(f"{self.dll_name!r} is not the control DLL of {self.variant!r}")

    @classmethod
    def for_variant(cls, variant: str) -> "ProtocolProfile":
        if variant not in DLL_NAMES:
            raise DomainError(f"Unknown protocol variant: {variant}")
        constants = dict(_BASE_CONSTANTS)
        if variant == "eMQTT5":
            constants["protocol_level"] = 5
        return cls(variant, DLL_NAMES[variant], constants)

    def build_id(self, seed: int) -> int:
        rng = np.random.default_rng([seed, zlib.crc32(self.variant.encode())])
        return int(rng.integers(0, 2**63))


def all_profiles() -> List[ProtocolProfile]:
    return [ProtocolProfile.for_variant(v) for v in DLL_NAMES]


@dataclass(frozen=True)
class TagTableLayout:
    page_count: int
    tags: Tuple[TagDescriptor, ...]
    profile: ProtocolProfile
    signature: Optional[TagDescriptor] = None

    def __post_init__(self):
        if self.page_count < 1:
            raise CapacityError(f"A layout needs at least one page, got {self.page_count}")
        spans = sorted((t.offset, t.end, t.name) for t in self.all_tags)
        for (_, end, name), (start, _, other) in zip(spans, spans[1:]):
            if start < end:
                raise ArgumentError(f"Tags {name} and {other} overlap")
        if spans and spans[-1][1] > self.size:
            raise CapacityError(f"Tag {spans[-1][2]} ends past the {self.page_count}-page image")

    @property
    def size(self) -> int:
        return self.page_count * PAGE_SIZE

    @property
    def all_tags(self) -> Tuple[TagDescriptor, ...]:
        return self.tags + ((self.signature,) if self.signature else ())

    def tag(self, name: str) -> TagDescriptor:
        for t in self.all_tags:
            if t.name == name:
                return t
        raise DomainError(f"Layout has no tag named {name!r}")

    def by_source(self, source: str) -> List[TagDescriptor]:
        return [t for t in self.tags if t.source == source]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "page_count": self.page_count,
            "variant": self.profile.variant,
            "dll_name": self.profile.dll_name,
            "constants": dict(self.profile.constants),
            "tags": [t.to_dict() for t in self.tags],
            "signature": self.signature.to_dict() if self.signature else None,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "TagTableLayout":
        constants = dict(data.get("constants", {}))
        profile = ProtocolProfile(data["variant"], data["dll_name"], constants)
        signature = data.get("signature")
        return cls(
            data["page_count"],
            tuple(TagDescriptor.from_dict(t) for t in data["tags"]),
            profile,
            TagDescriptor.from_dict(signature) if signature else None,
        )


@dataclass(frozen=True)
class BssImage:
    data: bytes

    def __post_init__(self):
        if not self.data or len(self.data) % PAGE_SIZE:
            raise ArgumentError(
                f"Image length {len(self.data)} is not a positive multiple of {PAGE_SIZE}"
            )
        object.__setattr__(self, "data", bytes(self.data))

    def __len__(self) -> int:
        return len(self.data)

    @property
    def page_count(self) -> int:
        return len(self.data) // PAGE_SIZE

    def page(self, index: int) -> bytes:
        if not 0 <= index < self.page_count:
            raise ArgumentError(f"Image has no page {index}")
        return self.data[index * PAGE_SIZE:(index + 1) * PAGE_SIZE]

    def diff(self, other: "BssImage") -> List[int]:
        """Offsets whose bytes differ; a length mismatch counts from the shorter end."""
        a = np.frombuffer(self.data, dtype=np.uint8)
        b = np.frombuffer(other.data, dtype=np.uint8)
        n = min(a.size, b.size)
        offsets = np.flatnonzero(a[:n] != b[:n]).tolist()
        return offsets + list(range(n, max(a.size, b.size)))

    def write(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.write_bytes(self.data)
        return path

    @classmethod
    def read(cls, path: Union[str, Path]) -> "BssImage":
        return cls(Path(path).read_bytes())


class Corruption(NamedTuple):
    tag: str
    value: Any
    reason: str


class DecodedPage(NamedTuple):
    values: Dict[str, Any]
    report: List[Corruption]


def _align(offset: int, width: int) -> int:
    return -(-offset // width) * width


def _place(cursor: int, width: int, reserved: List[Tuple[int, int]]) -> int:
    offset = _align(cursor, width)
    moved = True
    while moved:
        moved = False
        for start, end in reserved:
            if offset < end and start < offset + width:
                offset = _align(end, width)
                moved = True
    return offset


def _as_model(scenario: Union[WarehouseScenario, StateSpaceModel]) -> StateSpaceModel:
    return scenario.model if isinstance(scenario, WarehouseScenario) else scenario


def layout_from_model(
    scenario: Union[WarehouseScenario, StateSpaceModel],
    profile: ProtocolProfile,
    seed: int = 0,
    page_count: Optional[int] = None,
) -> TagTableLayout:
    """Pack constants, states and measurements into the smallest page-aligned table."""
    model = _as_model(scenario)
    pending: List[Tuple[str, str, str, Optional[int], Tuple[Any, ...], Optional[int]]] = []
    constants = dict(profile.constants, build_id=profile.build_id(seed))
    for name, value in constants.items():
        pending.append((name, "int64", "constant", None, (value,), value))
    for var in model.states:
        kind = "bool" if var.size == 2 else "enum"
        pending.append((var.name, kind, "state", var.id, tuple(range(var.size)), None))
    for meas in model.measurements:
        pending.append((meas.name, meas.kind, "measurement", meas.id, tuple(meas.values), None))

    reserved = [
        (PINNED_OFFSETS[p[0]], PINNED_OFFSETS[p[0]] + kind_width(p[1]))
        for p in pending
        if p[0] in PINNED_OFFSETS
    ]
    tags, cursor = [], 0
    for name, kind, source, source_id, domain, value in pending:
        width = kind_width(kind)
        if name in PINNED_OFFSETS:
            offset = PINNED_OFFSETS[name]
        else:
            offset = _place(cursor, width, reserved)
            cursor = offset + width
        tags.append(TagDescriptor(name, kind, offset, width, source, source_id, domain, value))

    end = max((t.end for t in tags), default=0)
    needed = max(1, math.ceil(end / PAGE_SIZE))
    if page_count is None:
        page_count = needed
    elif page_count < needed:
        raise CapacityError(f"Tag table needs {needed} pages, only {page_count} configured")
    layout = TagTableLayout(page_count, tuple(tags), profile)
    logger.debug(f"Laid out {len(tags)} tags of {profile.dll_name} in {page_count} page(s)")
    return layout


def tag_values(layout: TagTableLayout, x: Sequence[int], y_index: Sequence[int]) -> Dict[str, Any]:
    """Value map for a state code vector and measurement value indices."""
    values: Dict[str, Any] = {}
    for t in layout.by_source("state"):
        values[t.name] = int(x[t.source_id])
    for t in layout.by_source("measurement"):
        values[t.name] = t.domain[int(y_index[t.source_id])]
    return values


def _encode(tag: TagDescriptor, value: Any) -> bytes:
    try:
        if tag.kind in ("float64",):
            return struct.pack(KIND_FORMATS[tag.kind], float(value))
        if isinstance(value, float) and not value.is_integer():
            raise SerializationError(f"Tag {tag.name} expects an integer, got {value!r}")
        return struct.pack(KIND_FORMATS[tag.kind], int(value))
    except (struct.error, TypeError, ValueError) as e:
        raise SerializationError(
            f"Cannot encode {value!r} into tag {tag.name} ({tag.kind}): {e}"
        ) from e


def synthesize_page(layout: TagTableLayout, values: Mapping[str, Any]) -> BssImage:
    """Serialize a value map; unset bytes stay zero as in a fresh .bss."""
    buf = bytearray(layout.size)
    for tag in layout.all_tags:
        if tag.source in ("constant", "signature"):
            value = tag.value
        elif tag.name in values:
            value = values[tag.name]
            if value not in tag.domain:
                raise SerializationError(f"{value!r} is outside the domain of tag {tag.name}")
        else:
            raise SerializationError(f"No value supplied for tag {tag.name}")
        buf[tag.offset:tag.end] = _encode(tag, value)
    return BssImage(bytes(buf))


def decode_page(image: BssImage, layout: TagTableLayout) -> DecodedPage:
    """Parse every tag; values outside their declared domain are reported as out-of-range."""
    if len(image) != layout.size:
        raise ArgumentError(f"Image has {len(image)} bytes, layout expects {layout.size}")
    values: Dict[str, Any] = {}
    report = []
    for tag in layout.all_tags:
        (raw,) = struct.unpack_from(KIND_FORMATS[tag.kind], image.data, tag.offset)
        values[tag.name] = raw
        if tag.source == "signature":
            continue
        domain = tag.domain if tag.source != "constant" else (tag.value,)
        if raw not in domain:
            report.append(Corruption(tag.name, raw, "out-of-range"))
    if report:
        logger.debug(f"Decoded page with {len(report)} out-of-range tag(s)")
    return DecodedPage(values, report)


def entropy_bits(layout: TagTableLayout) -> float:
    """Sum of log2 of each tag's value count; constants add nothing, a signature adds 64."""
    return float(sum(math.log2(t.domain_size) for t in layout.all_tags))


def bruteforce_cost(layout: TagTableLayout, spray_gb: float = DEFAULT_SPRAY_GB) -> Combinations:
    """Search space of an attacker guessing every tag combination blindly."""
    state_sizes = [t.domain_size for t in layout.by_source("state")]
    if layout.signature:
        state_sizes.append(layout.signature.domain_size)
    meas_sizes = [t.domain_size for t in layout.by_source("measurement")]
    return combinations(state_sizes, meas_sizes, spray_gb)


def apply_signature_defense(layout: TagTableLayout, rng: np.random.Generator) -> TagTableLayout:
    """Add a fresh random 64-bit signature in the first free aligned 8-byte slot."""
    width = kind_width("uint64")
    spans = sorted((t.offset, t.end) for t in layout.tags)
    offset = _place(0, width, spans)
    if offset + width > layout.size:
        raise CapacityError("No free 8-byte slot for the signature")
    value = int(rng.integers(0, 2**64, dtype=np.uint64))
    signature = TagDescriptor("bss_signature", "uint64", offset, width, "signature", value=value)
    logger.debug(f"Signature placed at offset {offset:#06x}")
    return replace(layout, signature=signature)
