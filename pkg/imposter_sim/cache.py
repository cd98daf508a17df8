"""
Profile cache for the DRAM simulator.
"""

import json
import logging
from datetime import datetime
from pathlib import Path
from typing import Dict, Optional, Union

from .dram import ProfileResult

logger = logging.getLogger(__name__)

CacheKey = Union[int, str]


class ProfileCache:
    """Keeps one profiling result per DRAM key, in memory and optionally on disk."""

    def __init__(self, cache_dir: Optional[Union[str, Path]] = None):
        self.cache_dir = Path(cache_dir) if cache_dir else None
        self._memory: Dict[str, ProfileResult] = {}

    def store(self, key: CacheKey, result: ProfileResult) -> Optional[Path]:
        """Remember a result; on disk it gets a timestamped name."""
        self._memory[str(key)] = result
        if not self.cache_dir:
            return None
        timestamp = datetime.now().strftime("%Y%m%d_%H%M%S_%f")
        self.cache_dir.mkdir(parents=True, exist_ok=True)
        path = self.cache_dir / f"profile-{key}.{timestamp}.json"
        with open(path, "w", encoding="utf-8") as f:
            json.dump(result.to_dict(), f)
        logger.debug(f"Cached profile {key} at {path}")
        return path

    def find_latest(self, key: CacheKey) -> Optional[Path]:
        """Most recent cached file for a key."""
        if not self.cache_dir or not self.cache_dir.exists():
            return None
        files = list(self.cache_dir.glob(f"profile-{key}.*.json"))
        if not files:
            return None
        return max(files, key=lambda p: p.stat().st_mtime)

    @staticmethod
    def load(path: Union[str, Path]) -> ProfileResult:
        with open(path, "r", encoding="utf-8") as f:
            return ProfileResult.from_dict(json.load(f))

    def get(self, key: CacheKey) -> Optional[ProfileResult]:
        if str(key) in self._memory:
            return self._memory[str(key)]
        path = self.find_latest(key)
        if path is None:
            return None
        result = self.load(path)
        self._memory[str(key)] = result
        logger.info(f"Loaded cached profile {key} from {path}")
        return result

    def clear(self) -> None:
        self._memory.clear()
