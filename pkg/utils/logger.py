import os
import json
import logging
from datetime import datetime
from typing import List, Dict, Optional, Any
from dataclasses import asdict, is_dataclass
from enum import Enum

import numpy as np

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def setup_logging(level: str = "INFO") -> None:
    """Configure root logging for the CLI and long-running workers.

    Args:
        level: Logging level name (DEBUG, INFO, WARNING, ...)
    """
    logging.basicConfig(level=getattr(logging, level.upper(), logging.INFO), format=LOG_FORMAT)


def format_loop_event(kf_i: int, kf_lc: int, inliers: int, pre_gap: float, post_gap: float) -> str:
    """Single-line loop event, parsed by test harnesses."""
    return f"LOOP {kf_i} {kf_lc} {inliers} {pre_gap:.6f} {post_gap:.6f}"


class RunLogger:
    def __init__(self, log_dir: str = "run_logs"):
        """Initialize run logger.

        Args:
            log_dir: Directory to store run logs
        """
        self.log_dir = log_dir
        os.makedirs(log_dir, exist_ok=True)

    def _serialize(self, obj: Any) -> Any:
        """Helper method to serialize dataclasses, enums and numpy values.

        Args:
            obj: The object to serialize

        Returns:
            JSON-compatible structure
        """
        if obj is None:
            return None
        if is_dataclass(obj) and not isinstance(obj, type):
            return self._serialize(asdict(obj))
        if isinstance(obj, Enum):
            return obj.value
        if isinstance(obj, dict):
            return {str(key): self._serialize(value) for key, value in obj.items()}
        if isinstance(obj, (list, tuple, set)):
            return [self._serialize(value) for value in obj]
        if isinstance(obj, np.ndarray):
            return obj.tolist()
        if isinstance(obj, np.generic):
            return obj.item()
        return obj

    def log_run(self, config: Any, summary: Dict, events: Optional[List[str]] = None) -> str:
        """Log a run's configuration, summary and loop events to a JSON file.

        Args:
            config: SlamConfig used for the run
            summary: Dictionary with run results (frame counts, timings, map size)
            events: Optional loop event lines

        Returns:
            Path of the written log file
        """
        timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
        log_data = {
            "timestamp": timestamp,
            "config": self._serialize(config),
            "summary": self._serialize(summary),
            "events": events or [],
        }

        filename = f"run_{timestamp}.json"
        filepath = os.path.join(self.log_dir, filename)

        with open(filepath, 'w', encoding='utf-8') as f:
            json.dump(log_data, f, indent=2, ensure_ascii=False)
        return filepath
