"""
Tests for the .bss tag-table model.
"""

import json
import struct

import numpy as np
import pytest

from imposter_sim.errors import ArgumentError, CapacityError, DomainError, SerializationError
from imposter_sim.estimator import PAGE_SIZE
from imposter_sim.ics_model import THRESHOLD_CM, model_from_tables, nominal_step
from imposter_sim.page_synth import (
    DLL_NAMES,
    BssImage,
    ProtocolProfile,
    TagDescriptor,
    TagTableLayout,
    all_profiles,
    apply_signature_defense,
    bruteforce_cost,
    decode_page,
    entropy_bits,
    layout_from_model,
    synthesize_page,
    tag_values,
)


@pytest.fixture
def mosquitto():
    return ProtocolProfile.for_variant("Mosquitto")


@pytest.fixture
def warehouse_layout(warehouse, mosquitto):
    return layout_from_model(warehouse, mosquitto, seed=42)


def _nominal_values(warehouse, layout):
    x = np.zeros(warehouse.model.M, dtype=np.int64)
    x[warehouse.suction_var] = 1
    x_next, y_next = nominal_step(warehouse.model, x)
    return tag_values(layout, x_next, y_next)


class TestProtocolProfile:
    """The five cloud protocol variants."""

    def test_every_variant_has_its_dll(self):
        profiles = all_profiles()
        assert [p.variant for p in profiles] == list(DLL_NAMES)
        assert ProtocolProfile.for_variant("wolfMQTT").dll_name == "MqttMessage.dll"

    def test_unknown_variant_rejected(self):
        with pytest.raises(DomainError):
            ProtocolProfile.for_variant("AMQP")

    def test_mismatched_dll_rejected(self):
        with pytest.raises(DomainError):
            ProtocolProfile("Mosquitto", "erlexec.dll")

    def test_build_id_is_seeded_per_variant(self, mosquitto):
        assert mosquitto.build_id(1) == mosquitto.build_id(1)
        assert mosquitto.build_id(1) != mosquitto.build_id(2)
        assert mosquitto.build_id(1) != ProtocolProfile.for_variant("EMQ X").build_id(1)


class TestLayout:
    """Packing tags into the page-aligned table."""

    def test_threshold_sits_at_pinned_offset(self, warehouse_layout):
        tag = warehouse_layout.tag("S_theta")
        assert tag.offset == 0x0742
        assert tag.kind == "int16"

    def test_tags_are_aligned_and_disjoint(self, warehouse_layout):
        spans = sorted((t.offset, t.end) for t in warehouse_layout.all_tags)
        for (_, end), (start, _) in zip(spans, spans[1:]):
            assert start >= end
        for t in warehouse_layout.all_tags:
            assert t.offset % t.width == 0

    def test_sources_follow_the_model(self, warehouse, warehouse_layout):
        assert len(warehouse_layout.by_source("state")) == warehouse.model.M
        assert len(warehouse_layout.by_source("measurement")) == warehouse.model.P
        assert warehouse_layout.tag("build_id").source == "constant"
        assert warehouse_layout.size % PAGE_SIZE == 0

    def test_two_state_layout_fits_one_page(self, two_state_model, mosquitto):
        layout = layout_from_model(two_state_model, mosquitto)
        assert layout.page_count == 1

    def test_explicit_page_count_too_small(self, mosquitto):
        # 2000 int16 sensors need more than one page.
        kernel = [[1.0, 0.0], [0.0, 1.0]]
        model = model_from_tables([kernel], [kernel] * 2000, parents=[0] * 2000)
        with pytest.raises(CapacityError):
            layout_from_model(model, mosquitto, page_count=1)

    def test_overlapping_tags_rejected(self, mosquitto):
        a = TagDescriptor("a", "int16", 0, 2, "state", 0, (0, 1))
        b = TagDescriptor("b", "int16", 1, 2, "state", 1, (0, 1))
        with pytest.raises(ArgumentError):
            TagTableLayout(1, (a, b), mosquitto)

    def test_width_must_match_kind(self):
        with pytest.raises(ArgumentError):
            TagDescriptor("a", "int16", 0, 4, "state", 0, (0, 1))
        with pytest.raises(DomainError):
            TagDescriptor("a", "int32", 0, 4, "state", 0, (0, 1))

    def test_layout_json_round_trip(self, warehouse_layout):
        restored = TagTableLayout.from_dict(json.loads(warehouse_layout.to_json()))
        assert restored == warehouse_layout


class TestSynthesis:
    """Serializing and decoding imposter pages."""

    def test_nominal_page_decodes_cleanly(self, warehouse, warehouse_layout):
        values = _nominal_values(warehouse, warehouse_layout)
        image = synthesize_page(warehouse_layout, values)
        decoded = decode_page(image, warehouse_layout)
        assert decoded.report == []
        assert decoded.values["S_theta"] == THRESHOLD_CM
        assert decoded.values["suctionstate"] == 1

    def test_threshold_bytes_on_the_page(self, warehouse, warehouse_layout):
        image = synthesize_page(warehouse_layout, _nominal_values(warehouse, warehouse_layout))
        assert image.data[0x0742] == 0x02
        assert image.data[0x0743] == 0x00

    def test_bit_flip_makes_threshold_out_of_range(self, warehouse, warehouse_layout):
        image = synthesize_page(warehouse_layout, _nominal_values(warehouse, warehouse_layout))
        data = bytearray(image.data)
        data[0x0743] |= 1 << 3
        decoded = decode_page(BssImage(bytes(data)), warehouse_layout)
        assert decoded.values["S_theta"] == 2050
        assert [c.tag for c in decoded.report] == ["S_theta"]
        assert decoded.report[0].reason == "out-of-range"

    def test_synthesis_is_deterministic(self, warehouse, warehouse_layout):
        values = _nominal_values(warehouse, warehouse_layout)
        a = synthesize_page(warehouse_layout, values)
        b = synthesize_page(warehouse_layout, values)
        assert a.diff(b) == []

    def test_value_outside_domain_rejected(self, warehouse, warehouse_layout):
        values = _nominal_values(warehouse, warehouse_layout)
        values["S_theta"] = 3
        with pytest.raises(SerializationError):
            synthesize_page(warehouse_layout, values)

    def test_missing_value_rejected(self, warehouse, warehouse_layout):
        values = _nominal_values(warehouse, warehouse_layout)
        del values["suctionstate"]
        with pytest.raises(SerializationError):
            synthesize_page(warehouse_layout, values)

    def test_decode_rejects_wrong_size(self, warehouse_layout):
        with pytest.raises(ArgumentError):
            oversized = bytes(PAGE_SIZE * (warehouse_layout.page_count + 1))
            decode_page(BssImage(oversized), warehouse_layout)

    def test_image_must_be_page_multiple(self):
        with pytest.raises(ArgumentError):
            BssImage(b"\x00" * 100)

    def test_diff_and_file_round_trip(self, temp_dir):
        a = BssImage(bytes(PAGE_SIZE))
        b = BssImage(b"\x01" + bytes(PAGE_SIZE - 1))
        assert a.diff(b) == [0]
        path = b.write(temp_dir / "imposter.page")
        assert BssImage.read(path) == b


class TestSearchSpace:
    """Entropy, brute-force cost and the signature defense."""

    def test_single_boolean_table(self, mosquitto):
        model = model_from_tables([[[0.5, 0.5], [0.5, 0.5]]])
        layout = layout_from_model(model, mosquitto)
        assert entropy_bits(layout) == pytest.approx(1.0)
        cost = bruteforce_cost(layout)
        assert cost.pages == 2
        assert cost.pages_bytes == 8192
        assert cost.attempts == 1

    def test_warehouse_entropy_matches_domains(self, warehouse, warehouse_layout):
        want = sum(np.log2(warehouse.model.state_sizes)) + sum(np.log2(warehouse.model.meas_sizes))
        assert entropy_bits(warehouse_layout) == pytest.approx(float(want))

    def test_signature_adds_64_bits(self, warehouse_layout):
        signed = apply_signature_defense(warehouse_layout, np.random.default_rng(0))
        assert entropy_bits(signed) == pytest.approx(entropy_bits(warehouse_layout) + 64)
        assert bruteforce_cost(signed).c_x == bruteforce_cost(warehouse_layout).c_x * 2**64

    def test_signature_slot_is_free_and_aligned(self, warehouse_layout):
        signed = apply_signature_defense(warehouse_layout, np.random.default_rng(0))
        sig = signed.signature
        assert sig.offset % 8 == 0
        assert all(sig.end <= t.offset or t.end <= sig.offset for t in warehouse_layout.tags)

    def test_signature_lands_on_the_page(self, warehouse, warehouse_layout):
        signed = apply_signature_defense(warehouse_layout, np.random.default_rng(3))
        image = synthesize_page(signed, _nominal_values(warehouse, signed))
        (raw,) = struct.unpack_from("<Q", image.data, signed.signature.offset)
        assert raw == signed.signature.value
        assert decode_page(image, signed).report == []

    def test_fresh_signatures_differ(self, warehouse_layout):
        a = apply_signature_defense(warehouse_layout, np.random.default_rng(1))
        b = apply_signature_defense(warehouse_layout, np.random.default_rng(2))
        assert a.signature.value != b.signature.value
