"""
Utility functions for the imposter simulation toolkit.
"""

import logging
import math
import os
import sys
from datetime import datetime
from typing import Any, Dict, List

import psutil


def setup_logging(verbose: bool = False) -> None:
    """Setup logging configuration."""
    level = logging.DEBUG if verbose else logging.INFO

    logging.basicConfig(
        level=level,
        format='%(asctime)s - %(levelname)s - %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S'
    )


def host_memory_snapshot() -> Dict[str, int]:
    """Resident set size of this process and memory still available on the host."""
    process = psutil.Process(os.getpid())
    return {
        'rss_bytes': int(process.memory_info().rss),
        'available_bytes': int(psutil.virtual_memory().available),
    }


def format_file_size(size_bytes: float) -> str:
    """Format file size in human-readable format."""
    for unit in ['B', 'KB', 'MB', 'GB']:
        if size_bytes < 1024:
            return f"{size_bytes:.1f} {unit}"
        size_bytes /= 1024
    return f"{size_bytes:.1f} TB"


def format_duration(seconds: float) -> str:
    """Render seconds as 'Xh Ym Zs', dropping leading zero units."""
    total = int(round(seconds))
    hours, rest = divmod(total, 3600)
    minutes, secs = divmod(rest, 60)
    if hours:
        return f"{hours}h {minutes}m {secs}s"
    if minutes:
        return f"{minutes}m {secs}s"
    return f"{secs}s"


def format_big(value: Any) -> str:
    """Scientific notation for integers too large to read."""
    if isinstance(value, int) and abs(value) >= 10**6:
        exponent = int(math.floor(math.log10(abs(value))))
        mantissa = value / 10**exponent if exponent < 300 else int(str(abs(value))[:3]) / 100
        return f"{mantissa:.2f}e{exponent}"
    if isinstance(value, float) and abs(value) >= 10**6:
        return f"{value:.2e}"
    return str(value)


def format_report(results: List[Dict[str, Any]]) -> str:
    """Format attack reports as a markdown report."""
    report = ["# Attack Simulation Report\n"]
    report.append(f"Generated on: {datetime.now().strftime('%Y-%m-%d %H:%M:%S')}\n")

    total = len(results)
    merged = sum(1 for r in results if r.get('merge_detected', False))
    succeeded = sum(1 for r in results if r.get('consequence', 'none') != 'none')

    report.append("## Summary\n")
    report.append(f"- Scenarios run: {total}")
    report.append(f"- Merges detected: {merged}")
    report.append(f"- Physical consequences: {succeeded}")
    report.append(f"- Blocked: {total - succeeded}\n")

    report.append("## Detailed Results\n")

    for result in results:
        scenario = result.get('scenario', {})
        protocol = scenario.get('protocol', '?')
        report.append(f"### {protocol} (model seed {scenario.get('model_seed', '?')})\n")

        if 'error' in result:
            report.append(f"**Error**: {result['error']}\n")
            continue

        report.append(f"**Estimation accuracy**: states {result['state_accuracy']:.2%}, "
                      f"measurements {result['meas_accuracy']:.2%}")
        report.append(f"**Guessed pages**: {format_file_size(result['guessed_page_bytes'])} "
                      f"({result['candidate_pages']} candidate page(s))")
        report.append(f"**Brute force**: {format_big(result['bruteforce_pages_gb'])} GB, "
                      f"{format_big(result['bruteforce_hours'])} hours")
        report.append(f"**Merge detected**: {'yes' if result['merge_detected'] else 'no'}")
        report.append(f"**Profiling**: {result['profiling_hours']:.1f} hours")
        report.append(f"**Consequence**: {result['consequence']}")
        report.append(f"**Total attack time**: {format_duration(result['total_seconds'])}")
        if result.get('python_version'):
            report.append(f"**Python**: {result['python_version']}")

        if result.get('corrupted_tags'):
            report.append("\n**Corrupted tags**:")
            report.append("```diff")
            for tag in result['corrupted_tags']:
                report.append(f"- {tag['tag']} = {tag['before']}")
                report.append(f"+ {tag['tag']} = {tag['after']}")
            report.append("```")

        report.append("")

    return '\n'.join(report)


def get_python_version() -> str:
    """Get the current Python version."""
    return f"{sys.version_info.major}.{sys.version_info.minor}.{sys.version_info.micro}"
