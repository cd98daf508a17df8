"""
Tests for formatting and host helpers.
"""

import logging

import pytest

from imposter_sim import utils
from imposter_sim.utils import (
    format_big,
    format_duration,
    format_file_size,
    format_report,
    get_python_version,
    host_memory_snapshot,
    setup_logging,
)


def _report(**overrides):
    report = {
        "scenario": {"protocol": "Mosquitto", "model_seed": 42},
        "state_accuracy": 0.9,
        "meas_accuracy": 0.85,
        "guessed_page_bytes": 8192,
        "candidate_pages": 2,
        "bruteforce_pages_gb": 9.6e194,
        "bruteforce_hours": 2.0e194,
        "merge_detected": True,
        "profiling_hours": 95.3,
        "consequence": "out-of-range-drop",
        "total_seconds": 831.45,
        "corrupted_tags": [{"tag": "S_theta", "before": 2, "after": 2050}],
    }
    report.update(overrides)
    return report


class TestFormatting:
    """Human-readable sizes, durations and huge numbers."""

    def test_format_duration(self):
        assert format_duration(831.45) == "13m 51s"
        assert format_duration(3723) == "1h 2m 3s"
        assert format_duration(5) == "5s"

    def test_format_file_size(self):
        assert format_file_size(512) == "512.0 B"
        assert format_file_size(8192) == "8.0 KB"

    def test_format_big_integers(self):
        assert format_big(12345) == "12345"
        assert format_big(1_730_000) == "1.73e6"
        assert format_big(173 * 10**400) == "1.73e402"

    def test_format_big_floats(self):
        assert format_big(1.73e194) == "1.73e+194"
        assert format_big(0.5) == "0.5"


class TestFormatReport:
    """Markdown rendering of attack reports."""

    def test_summary_counts(self):
        blocked = _report(merge_detected=False, consequence="none", corrupted_tags=[])
        text = format_report([_report(), blocked])
        assert text.startswith("# Attack Simulation Report")
        assert "- Scenarios run: 2" in text
        assert "- Merges detected: 1" in text
        assert "- Physical consequences: 1" in text
        assert "- Blocked: 1" in text

    def test_details(self):
        text = format_report([_report()])
        assert "### Mosquitto (model seed 42)" in text
        assert "**Total attack time**: 13m 51s" in text
        assert "- S_theta = 2" in text
        assert "+ S_theta = 2050" in text

    def test_python_version_line(self):
        assert "**Python**: 3.11.4" in format_report([_report(python_version="3.11.4")])
        assert "**Python**" not in format_report([_report()])

    def test_error_entry(self):
        failed = {"scenario": {"protocol": "EMQ X", "model_seed": 1}, "error": "boom"}
        text = format_report([failed])
        assert "**Error**: boom" in text


class TestHost:
    """Process and interpreter information."""

    def test_memory_snapshot(self):
        snapshot = host_memory_snapshot()
        assert snapshot["rss_bytes"] > 0
        assert snapshot["available_bytes"] > 0

    def test_memory_snapshot_reads_psutil(self, mocker):
        process = mocker.patch.object(utils.psutil, "Process")
        process.return_value.memory_info.return_value.rss = 1234
        mocker.patch.object(utils.psutil, "virtual_memory").return_value.available = 5678
        assert host_memory_snapshot() == {"rss_bytes": 1234, "available_bytes": 5678}

    def test_python_version(self):
        assert get_python_version().count(".") == 2

    def test_setup_logging_level(self, mocker):
        basic = mocker.patch.object(logging, "basicConfig")
        setup_logging(verbose=True)
        assert basic.call_args.kwargs["level"] == logging.DEBUG
