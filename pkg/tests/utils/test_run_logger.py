import json
import logging

import numpy as np

from pipeline import load_config
from utils.logger import RunLogger, format_loop_event, setup_logging


def test_loop_event_line():
    assert format_loop_event(40, 3, 57, 0.25, 0.001) == "LOOP 40 3 57 0.250000 0.001000"
    assert format_loop_event(7, 1, 30, 1.23456789, 0.0).split() == ["LOOP", "7", "1", "30", "1.234568", "0.000000"]


def test_run_log_is_json(tmp_path):
    logger = RunLogger(str(tmp_path / "logs"))
    config = load_config(profile='fast', seed=9)
    summary = {"frames": np.int64(12), "positions": np.zeros(2), "timings": {"tracking": {"mean_ms": 1.5}}}
    path = logger.log_run(config, summary, ["LOOP 40 3 57 0.250000 0.001000"])
    data = json.loads(open(path, encoding='utf-8').read())
    assert data["config"]["profile"] == "fast"
    assert data["config"]["detector"] == "fast"
    assert data["config"]["loop_closing"] is False
    assert data["config"]["seed"] == 9
    assert data["summary"]["frames"] == 12
    assert data["summary"]["positions"] == [0.0, 0.0]
    assert data["events"] == ["LOOP 40 3 57 0.250000 0.001000"]


def test_run_log_without_events(tmp_path):
    path = RunLogger(str(tmp_path)).log_run({"mode": "mono"}, {})
    data = json.loads(open(path, encoding='utf-8').read())
    assert data["events"] == []
    assert data["config"] == {"mode": "mono"}


def test_setup_logging_accepts_level_names(monkeypatch):
    calls = []
    monkeypatch.setattr(logging, "basicConfig", lambda **kwargs: calls.append(kwargs))
    setup_logging("debug")
    setup_logging("nonsense")
    assert calls[0]["level"] == logging.DEBUG
    assert calls[1]["level"] == logging.INFO
