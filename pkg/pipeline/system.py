"""Four-worker orchestration: tracking, mapping, local BA and loop closing."""
import logging
import queue
import threading
import time
from collections import defaultdict
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, Iterator, List, Optional, Union

from frontend import FrontendOutput, TrackingState, VisualFrontend
from geometry import CameraModel, Se3Pose, StereoRig
from loopclosing import LoopCloser
from mapping import Mapper, SlamMap
from pipeline.config import SlamConfig
from pipeline.datasets import FrameSource, StereoFrame
from pipeline.evaluation import TrajectoryEstimate
from pipeline.queues import DroppingQueue
from solver import LocalBundleAdjuster
from utils.errors import CalibrationMismatchError
from utils.rng import SeedSequencer

logger = logging.getLogger(__name__)

POLL_S = 0.05
_STOP = object()


class ComponentTimer:
    """Thread-safe wall-clock samples per component."""

    def __init__(self):
        self._samples: Dict[str, List[float]] = defaultdict(list)
        self._lock = threading.Lock()

    def record(self, name: str, seconds: float) -> None:
        with self._lock:
            self._samples[name].append(seconds)

    def samples(self, name: str) -> List[float]:
        with self._lock:
            return list(self._samples.get(name, []))

    def summary(self) -> Dict[str, Dict[str, float]]:
        with self._lock:
            return {
                name: {
                    "count": len(values),
                    "mean_ms": 1e3 * sum(values) / len(values),
                    "max_ms": 1e3 * max(values),
                }
                for name, values in sorted(self._samples.items()) if values
            }


@dataclass
class FrameRecord:
    """Tracked pose with the keyframe it was expressed against at tracking time."""
    timestamp: float
    pose_wc: Se3Pose
    valid: bool
    state: TrackingState
    ref_kf: Optional[int] = None
    ref_pose_wc: Optional[Se3Pose] = None


@dataclass
class SlamRunResult:
    trajectory: TrajectoryEstimate
    summary: Dict[str, Any]
    events: List[str] = field(default_factory=list)
    keyframe_ids: List[int] = field(default_factory=list)


def corrected_pose(record: FrameRecord, kf_poses: Dict[int, Se3Pose],
                   kf_created: Dict[int, Se3Pose]) -> Se3Pose:
    """Frame pose moved along with its reference keyframe since tracking time.

    A culled reference is replaced by the newest surviving keyframe before it.
    """
    if record.ref_kf is None:
        return record.pose_wc
    if record.ref_kf in kf_poses:
        ref, then = record.ref_kf, record.ref_pose_wc
    else:
        older = [k for k in kf_poses if k < record.ref_kf and k in kf_created]
        if not older:
            return record.pose_wc
        ref = max(older)
        then = kf_created[ref]
    return kf_poses[ref].compose(then.inverse()).compose(record.pose_wc)


class SlamSystem:
    def __init__(self, config: SlamConfig, camera: Optional[CameraModel] = None,
                 rig: Optional[StereoRig] = None):
        """Wire the four workers around one shared map.

        Args:
            config: Validated configuration with calibration
            camera: Left camera; taken from the calibration when None
            rig: Stereo rig; taken from the calibration when None in stereo mode

        Raises:
            CalibrationMismatchError: stereo mode without a calibrated right camera
        """
        self.config = config
        self.camera = camera or config.camera()
        self.rig = rig if rig is not None else (config.stereo_rig() if config.is_stereo else None)
        if config.is_stereo and self.rig is None:
            raise CalibrationMismatchError("stereo mode needs t_rl in the calibration")
        self.map = SlamMap(self.camera, config.max_point_descriptors)
        self.frontend = VisualFrontend(config, self.camera, self.map, SeedSequencer(config.seed, stream=1))
        self.mapper = Mapper(config, self.map, self.rig)
        self.bundle_adjuster = LocalBundleAdjuster(config, self.map, self.rig)
        self.loop_closer = LoopCloser(config, self.map, self.rig, SeedSequencer(config.seed, stream=3))
        self.timer = ComponentTimer()

        self._frames: Union[DroppingQueue, 'queue.Queue[Any]'] = (
            DroppingQueue(config.frame_queue_size) if config.rt_mode else queue.Queue(maxsize=2))
        self._kf_queue: 'queue.Queue[Any]' = queue.Queue()
        self._ba_queue: 'queue.Queue[Any]' = queue.Queue()
        self._lc_queue: 'queue.Queue[Any]' = queue.Queue()
        self._input_done = threading.Event()
        self._failed = threading.Event()
        self._abandon_lc = threading.Event()
        self._errors: List[BaseException] = []
        self._records: List[FrameRecord] = []
        self._kf_created: Dict[int, Se3Pose] = {}
        self._last_kf: Optional[int] = None
        self._lost_frames = 0
        self._relocalizations = 0

    # --- public -----------------------------------------------------------------------

    def run(self, source: FrameSource) -> SlamRunResult:
        """Process every frame of `source` and return the exported trajectory.

        Raises:
            CalibrationMismatchError: when an image does not match the calibrated size
        """
        workers = [
            threading.Thread(target=self._guard(self._tracking_loop), name="tracking", daemon=True),
            threading.Thread(target=self._guard(self._mapping_loop), name="mapping", daemon=True),
            threading.Thread(target=self._guard(self._ba_loop), name="local-ba", daemon=True),
            threading.Thread(target=self._guard(self._lc_loop), name="loop-closing", daemon=True),
        ]
        for worker in workers:
            worker.start()
        received = 0
        try:
            received = self._feed(source)
        finally:
            self._input_done.set()
            if not self.config.rt_mode:
                self._put_frame(_STOP)
            workers[0].join()
            self._abandon_lc.set()
            self._kf_queue.put(_STOP)
            for worker in workers[1:]:
                worker.join()
        if self._errors:
            raise self._errors[0]
        return self._result(received)

    # --- input ------------------------------------------------------------------------

    def _feed(self, source: FrameSource) -> int:
        received = 0
        start = time.perf_counter()
        first_ts: Optional[float] = None
        for frame in source.frames():
            if self._failed.is_set():
                break
            self._check_size(frame)
            if self.config.rt_mode:
                first_ts = frame.timestamp if first_ts is None else first_ts
                wait = start + (frame.timestamp - first_ts) - time.perf_counter()
                if wait > 0.0:
                    time.sleep(wait)
                if self._frames.put(frame):
                    logger.debug("frame queue full, dropped the oldest frame")
            else:
                self._put_frame(frame)
            received += 1
        return received

    def _put_frame(self, item: Any) -> None:
        """Blocking put that gives up once a worker has failed."""
        while not self._failed.is_set():
            try:
                self._frames.put(item, timeout=POLL_S)
                return
            except queue.Full:
                continue

    def _check_size(self, frame: StereoFrame) -> None:
        expected = (self.camera.height, self.camera.width)
        for image in (frame.left, frame.right):
            if image is not None and image.shape[:2] != expected:
                raise CalibrationMismatchError(
                    f"frame {frame.index} is {image.shape[1]}x{image.shape[0]}, "
                    f"calibration expects {expected[1]}x{expected[0]}")

    def _next_frame(self) -> Optional[StereoFrame]:
        """Next frame to track, or None once the input has ended."""
        while not self._failed.is_set():
            if self.config.rt_mode:
                frame = self._frames.get(timeout=POLL_S)
                if frame is not None:
                    return frame
                if self._input_done.is_set() and self._frames.empty():
                    return None
                continue
            try:
                item = self._frames.get(timeout=POLL_S)
            except queue.Empty:
                continue
            return None if item is _STOP else item
        return None

    # --- workers ----------------------------------------------------------------------

    def _guard(self, target: Callable[[], None]) -> Callable[[], None]:
        def run() -> None:
            try:
                target()
            except BaseException as e:
                logger.exception("%s worker failed", threading.current_thread().name)
                self._errors.append(e)
                self._failed.set()
        return run

    def _items(self, work: 'queue.Queue[Any]') -> Iterator[Any]:
        """Queue items until the stop marker; the caller marks each item done."""
        while not self._failed.is_set():
            try:
                item = work.get(timeout=POLL_S)
            except queue.Empty:
                continue
            if item is _STOP:
                work.task_done()
                return
            yield item

    def _wait_idle(self, work: 'queue.Queue[Any]') -> None:
        with work.all_tasks_done:
            while work.unfinished_tasks and not self._failed.is_set():
                work.all_tasks_done.wait(POLL_S)

    def _tracking_loop(self) -> None:
        cfg = self.config
        while True:
            frame = self._next_frame()
            if frame is None:
                return
            start = time.perf_counter()
            _delay(cfg.tracker_delay_s)
            output = self.frontend.process(frame.timestamp, frame.left, frame.right)
            elapsed = time.perf_counter() - start
            self.timer.record("tracking", elapsed)
            if output.keyframes:
                self.timer.record("keyframe_creation", elapsed)
            self._record(output)
            for kf in output.keyframes:
                self._kf_queue.put(kf)
            if output.keyframes and not cfg.rt_mode:
                self._wait_idle(self._kf_queue)
                self._wait_idle(self._ba_queue)
                self._wait_idle(self._lc_queue)

    def _mapping_loop(self) -> None:
        cfg = self.config

        def should_abort() -> bool:
            return cfg.rt_mode and (self._failed.is_set() or not self._kf_queue.empty())

        try:
            for kf in self._items(self._kf_queue):
                try:
                    start = time.perf_counter()
                    _delay(cfg.mapping_delay_s)
                    report = self.mapper.process(kf, should_abort)
                    self.timer.record("mapping", time.perf_counter() - start)
                    if report.aborted:
                        logger.debug("local map tracking of keyframe %d aborted", kf.id)
                    self._ba_queue.put(kf.id)
                    if cfg.loop_closing:
                        self._lc_queue.put(kf.id)
                finally:
                    self._kf_queue.task_done()
        finally:
            self._ba_queue.put(_STOP)
            self._lc_queue.put(_STOP)

    def _ba_loop(self) -> None:
        for kf_id in self._items(self._ba_queue):
            try:
                start = time.perf_counter()
                _delay(self.config.ba_delay_s)
                self.bundle_adjuster.process(kf_id)
                self.timer.record("local_ba", time.perf_counter() - start)
            finally:
                self._ba_queue.task_done()

    def _lc_loop(self) -> None:
        for kf_id in self._items(self._lc_queue):
            try:
                if self._abandon_lc.is_set() and self.config.rt_mode:
                    continue
                start = time.perf_counter()
                _delay(self.config.lc_delay_s)
                self.loop_closer.process(kf_id)
                self.timer.record("loop_closing", time.perf_counter() - start)
            finally:
                self._lc_queue.task_done()

    # --- trajectory -------------------------------------------------------------------

    def _record(self, output: FrontendOutput) -> None:
        for kf in output.keyframes:
            self._kf_created[kf.id] = kf.pose_wc
            self._last_kf = kf.id
        if output.state == TrackingState.LOST:
            self._lost_frames += 1
        if output.relocalized:
            self._relocalizations += 1
        ref_pose = None
        if self._last_kf is not None:
            ref_pose = self.map.snapshot.keyframe_poses.get(self._last_kf, self._kf_created[self._last_kf])
        self._records.append(FrameRecord(output.timestamp, output.pose_wc, output.pose_valid, output.state,
                                         self._last_kf, ref_pose))

    def export_trajectory(self) -> TrajectoryEstimate:
        """Valid frame poses with loop and BA corrections applied, plus a gap per lost stretch."""
        with self.map.lock:
            kf_poses = {kid: kf.pose_wc for kid, kf in self.map.keyframes.items()}
        traj = TrajectoryEstimate()
        lost = False
        for record in self._records:
            if record.state == TrackingState.LOST and not record.valid:
                if not lost:
                    traj.add_gap(record.timestamp)
                lost = True
                continue
            lost = False
            if record.valid:
                traj.append(record.timestamp, corrected_pose(record, kf_poses, self._kf_created))
        return traj

    def _result(self, received: int) -> SlamRunResult:
        dropped = self._frames.dropped if isinstance(self._frames, DroppingQueue) else 0
        summary: Dict[str, Any] = {
            "mode": self.config.mode.value,
            "rt_mode": self.config.rt_mode,
            "frames": received,
            "tracked_frames": len(self._records),
            "dropped_frames": dropped,
            "lost_frames": self._lost_frames,
            "relocalizations": self._relocalizations,
            "keyframes_created": len(self._kf_created),
            **self.map.summary(),
            "timings": self.timer.summary(),
        }
        if dropped:
            logger.warning("dropped %d of %d frames", dropped, received)
        return SlamRunResult(
            trajectory=self.export_trajectory(),
            summary=summary,
            events=[event.line for event in self.loop_closer.events],
            keyframe_ids=sorted(self._kf_created),
        )


def _delay(seconds: float) -> None:
    if seconds > 0.0:
        time.sleep(seconds)


def run_slam(config: SlamConfig, source: FrameSource) -> SlamRunResult:
    """Build a system for `config` (calibration from the dataset when the config has none) and run it."""
    if not config.calibration:
        config = replace(config, calibration=dict(source.calibration()))
    return SlamSystem(config).run(source)
