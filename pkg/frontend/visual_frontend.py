"""Per-frame tracking state machine of the front-end thread."""
import itertools
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Dict, Iterator, List, Optional

import numpy as np

from frontend.frame import Frame, Keypoint
from frontend.initialization import init_monocular
from frontend.keyframe import KeyframeDecision, keyframe_decision
from frontend.motion import MotionModel
from frontend.outliers import filter_epipolar
from frontend.pose import PoseEstimate, estimate_pose, optimize_pose, p3p_fallback, solve_p3p_ransac
from frontend.tracker import track_frame
from geometry import CameraModel, Se3Pose
from imgproc import ImagePyramid, brief_descriptors, detect_grid, match_descriptors, preprocess
from mapping.map import Keyframe, SlamMap
from utils.rng import SeedSequencer

if TYPE_CHECKING:
    from pipeline.config import SlamConfig

logger = logging.getLogger(__name__)


class TrackingState(Enum):
    WAITING_INIT = "waiting_init"
    BOOTSTRAPPING = "bootstrapping"
    TRACKING = "tracking"
    LOST = "lost"


@dataclass
class FrontendOutput:
    frame_id: int
    timestamp: float
    pose_wc: Se3Pose
    pose_valid: bool
    state: TrackingState
    keyframes: List[Keyframe] = field(default_factory=list)
    num_keypoints: int = 0
    relocalized: bool = False


class VisualFrontend:
    def __init__(self, config: 'SlamConfig', camera: CameraModel, slam_map: SlamMap,
                 seeds: Optional[SeedSequencer] = None):
        """Initialize the front-end.

        Args:
            config: Thresholds and mode
            camera: Left camera (the front-end is monocular even with a stereo rig)
            slam_map: Shared map; only snapshots and the last keyframe are read
            seeds: RANSAC seed stream
        """
        self.config = config
        self.camera = camera
        self.map = slam_map
        self.seeds = seeds or SeedSequencer(config.seed, stream=1)
        self.motion = MotionModel()
        self.state = TrackingState.BOOTSTRAPPING if config.is_stereo else TrackingState.WAITING_INIT
        self.prev: Optional[Frame] = None
        self.init_candidate: Optional[Frame] = None
        self.failures = 0
        self._frame_ids: Iterator[int] = itertools.count()
        self._kf_ids: Iterator[int] = itertools.count()
        self._kp_ids: Iterator[int] = itertools.count()
        self._correction_epoch = 0
        self._applied_correction = Se3Pose.identity()

    @property
    def n_cells(self) -> int:
        cell = self.config.cell_size
        return int(np.ceil(self.camera.width / cell) * np.ceil(self.camera.height / cell))

    # --- public -----------------------------------------------------------------------

    def process(self, timestamp: float, image: np.ndarray,
                right_image: Optional[np.ndarray] = None) -> FrontendOutput:
        """Track one frame; returns its pose and any keyframes to hand to the mapper."""
        pyramid = ImagePyramid.build(preprocess(image, self.config.clahe_clip_limit), self.config.pyramid_levels)
        right = None
        if right_image is not None and self.config.is_stereo:
            right = ImagePyramid.build(preprocess(right_image, self.config.clahe_clip_limit),
                                       self.config.pyramid_levels)
        frame = Frame(id=next(self._frame_ids), timestamp=timestamp, pyramid=pyramid, right_pyramid=right)
        self._apply_map_correction()

        if self.prev is None:
            return self._first_frame(frame)
        if self.state == TrackingState.WAITING_INIT:
            return self._try_initialize(frame)
        return self._track(frame)

    # --- bootstrap --------------------------------------------------------------------

    def _first_frame(self, frame: Frame) -> FrontendOutput:
        frame.pose_wc = Se3Pose.identity()
        frame.pose_valid = True
        self.motion.update(frame.pose_wc, frame.timestamp)
        if self.config.is_stereo:
            kf = self._make_keyframe(frame)
            self.prev = frame
            return self._output(frame, [kf])
        self._detect_new(frame, first_kf_id=None)
        self.prev = frame
        self.init_candidate = frame
        return self._output(frame)

    def _try_initialize(self, frame: Frame) -> FrontendOutput:
        tracked = track_frame(self.prev, frame.pyramid, self.prev.pose_wc, self.map.snapshot, self.camera,
                              self.config.backward_max_error)
        frame.keypoints = tracked.keypoints
        frame.pose_wc = Se3Pose.identity()
        candidate = self.init_candidate
        shared = sum(1 for kp_id in frame.keypoints if kp_id in candidate.keypoints)
        if shared < self.config.init_min_matches:
            logger.info("monocular init restarted: %d shared keypoints", shared)
            frame.keypoints = {}
            self.prev = None
            return self._first_frame(frame)

        result = init_monocular(candidate, frame, self.camera, self.config.init_min_matches,
                                self.config.init_min_parallax_deg, self.config.epipolar_threshold_px,
                                self.config.ransac_confidence, self.config.epipolar_max_iters, self.seeds)
        if result is None:
            self.prev = frame
            return self._output(frame)

        kf0 = self._make_keyframe(candidate)
        inliers = set(result.inlier_ids)
        frame.keypoints = {k: kp for k, kp in frame.keypoints.items() if k in inliers or k not in candidate.keypoints}
        for kp in frame.keypoints.values():
            if kp.id in candidate.keypoints:
                kp.first_kf_id = kf0.id
        frame.pose_wc = result.pose_wc
        frame.pose_valid = True
        kf1 = self._make_keyframe(frame)
        self.motion.update(frame.pose_wc, frame.timestamp)
        self.state = TrackingState.BOOTSTRAPPING
        self.prev = frame
        logger.info("monocular initialization with %d inliers", len(inliers))
        return self._output(frame, [kf0, kf1])

    # --- tracking ---------------------------------------------------------------------

    def _track(self, frame: Frame) -> FrontendOutput:
        cfg = self.config
        snapshot = self.map.snapshot
        predicted = self.motion.predict(frame.timestamp) or self.prev.pose_wc
        tracked = track_frame(self.prev, frame.pyramid, predicted, snapshot, self.camera, cfg.backward_max_error)
        filtered = filter_epipolar(self.prev, tracked.keypoints, self.camera, cfg.epipolar_threshold_px,
                                   cfg.ransac_confidence, cfg.epipolar_max_iters, self.seeds)
        frame.keypoints = filtered.keypoints
        frame.pose_wc = predicted

        if self.state == TrackingState.BOOTSTRAPPING and not snapshot.positions:
            # first keyframe not yet triangulated: hold the last pose
            frame.pose_wc = self.prev.pose_wc
            frame.pose_valid = True
            self.prev = frame
            return self._output(frame)

        estimate = self._localize(frame, predicted, tracked.stage1_ratio, tracked.stage1_attempts)
        relocalized = False
        if estimate is None and self.failures >= cfg.lost_frames_before_reloc:
            estimate = self._relocalize(frame)
            relocalized = estimate is not None
        if estimate is None:
            return self._tracking_failed(frame)

        outliers = set(estimate.outlier_ids)
        frame.keypoints = {k: kp for k, kp in frame.keypoints.items() if k not in outliers}
        frame.pose_wc = estimate.pose_wc
        frame.pose_valid = True
        self.failures = 0
        self.state = TrackingState.TRACKING
        self.motion.update(frame.pose_wc, frame.timestamp)

        keyframes = []
        last_kf = self.map.last_keyframe()
        if relocalized or last_kf is None or keyframe_decision(
                frame, last_kf, self.camera, self.n_cells, cfg.kf_min_tracked_ratio,
                cfg.kf_max_parallax_px, cfg.kf_min_cell_ratio) == KeyframeDecision.CREATE:
            keyframes.append(self._make_keyframe(frame))
        self.prev = frame
        return self._output(frame, keyframes, relocalized=relocalized)

    def _localize(self, frame: Frame, predicted: Se3Pose, stage1_ratio: float,
                  stage1_attempts: int) -> Optional[PoseEstimate]:
        cfg = self.config
        kps_3d = frame.keypoints_3d()
        used_p3p = False
        initial = predicted
        if stage1_attempts > 0 and stage1_ratio < cfg.p3p_trigger_ratio:
            logger.debug("stage-1 ratio %.2f: predicted pose rejected", stage1_ratio)
            fallback = p3p_fallback(kps_3d, self.map.snapshot, self.camera, cfg.p3p_threshold_px,
                                    cfg.ransac_confidence, cfg.p3p_max_iters, self.seeds, cfg.chi2_threshold)
            used_p3p = True
            if fallback is None:
                return None
            initial = fallback.pose_wc
        estimate = estimate_pose(kps_3d, self.map.snapshot, initial, self.camera, cfg.pose_max_iters,
                                 cfg.chi2_threshold)
        if estimate.ok:
            return estimate
        if not used_p3p:
            return p3p_fallback(kps_3d, self.map.snapshot, self.camera, cfg.p3p_threshold_px,
                                cfg.ransac_confidence, cfg.p3p_max_iters, self.seeds, cfg.chi2_threshold)
        return None

    def _tracking_failed(self, frame: Frame) -> FrontendOutput:
        self.failures += 1
        self.motion.reset()
        self.state = TrackingState.LOST
        frame.pose_wc = self.prev.pose_wc
        frame.pose_valid = False
        logger.warning("tracking lost on frame %d (%d consecutive)", frame.id, self.failures)
        self.prev = frame
        return self._output(frame)

    def _relocalize(self, frame: Frame) -> Optional[PoseEstimate]:
        """Match fresh detections against the last keyframe's map points and solve P3P."""
        cfg = self.config
        last_kf = self.map.last_keyframe()
        snapshot = self.map.snapshot
        if last_kf is None:
            return None
        refs = [kp for kp in last_kf.keypoints.values()
                if kp.descriptor is not None and snapshot.resolve(kp.id) is not None]
        corners = detect_grid(frame.pyramid.image, cfg.cell_size, (), cfg.detector, cfg.quality_level,
                              cfg.fast_threshold)
        if len(refs) < 4 or len(corners) < 4:
            return None
        raw = np.array([c.px for c in corners])
        descs = brief_descriptors(frame.pyramid.smoothed, raw)
        matches = match_descriptors(descs, np.array([kp.descriptor for kp in refs]), cfg.lc_ratio_test,
                                    cfg.descriptor_threshold)
        if len(matches) < 4:
            return None
        undist = self.camera.undistort(raw)
        points = np.array([snapshot.positions[snapshot.resolve(refs[t].id)] for _, t in matches])
        pixels = np.array([undist[q] for q, _ in matches])
        hypothesis = solve_p3p_ransac(points, pixels, self.camera, cfg.p3p_threshold_px, cfg.ransac_confidence,
                                      cfg.p3p_max_iters, self.seeds)
        if hypothesis is None:
            return None
        ids = [refs[t].id for _, t in matches]
        estimate = optimize_pose(points, pixels, hypothesis, self.camera, ids, cfg.pose_max_iters,
                                 cfg.chi2_threshold)
        if not estimate.ok:
            return None

        # matched detections inherit the reference keypoint id, hence its map point
        inliers = set(estimate.inlier_ids)
        keypoints: Dict[int, Keypoint] = {}
        matched = set()
        for q, t in matches:
            ref_id = refs[t].id
            if ref_id in inliers:
                keypoints[ref_id] = Keypoint(id=ref_id, raw_px=raw[q], undist_px=undist[q],
                                             map_point_id=snapshot.resolve(ref_id), descriptor=descs[q],
                                             first_kf_id=refs[t].first_kf_id)
                matched.add(q)
        for q, corner in enumerate(corners):
            if q not in matched:
                kp_id = next(self._kp_ids)
                keypoints[kp_id] = Keypoint(id=kp_id, raw_px=raw[q], undist_px=undist[q], descriptor=descs[q])
        frame.keypoints = keypoints
        estimate.outlier_ids = []
        logger.info("relocalized frame %d against keyframe %d with %d inliers", frame.id, last_kf.id, len(inliers))
        return estimate

    # --- keyframes --------------------------------------------------------------------

    def _detect_new(self, frame: Frame, first_kf_id: Optional[int]) -> None:
        cfg = self.config
        occupied = [kp.raw_px for kp in frame.keypoints.values()]
        for corner in detect_grid(frame.pyramid.image, cfg.cell_size, occupied, cfg.detector,
                                  cfg.quality_level, cfg.fast_threshold):
            kp = Keypoint.from_raw(next(self._kp_ids), corner.px, self.camera, first_kf_id=first_kf_id)
            frame.keypoints[kp.id] = kp

    def _make_keyframe(self, frame: Frame) -> Keyframe:
        """Turn a frame into a keyframe: new detections in empty cells and BRIEF for every keypoint."""
        kf_id = next(self._kf_ids)
        self._detect_new(frame, first_kf_id=kf_id)
        kps = list(frame.keypoints.values())
        if kps:
            descs = brief_descriptors(frame.pyramid.smoothed, np.array([kp.raw_px for kp in kps]))
            for kp, desc in zip(kps, descs):
                kp.descriptor = desc
                if kp.first_kf_id is None:
                    kp.first_kf_id = kf_id
        return Keyframe(
            id=kf_id, timestamp=frame.timestamp, pose_wc=frame.pose_wc,
            keypoints={kp.id: kp.copy() for kp in kps},
            pyramid=frame.pyramid, right_pyramid=frame.right_pyramid,
        )

    # --- loop corrections -------------------------------------------------------------

    def _apply_map_correction(self) -> None:
        snapshot = self.map.snapshot
        if snapshot.correction_epoch == self._correction_epoch or snapshot.correction is None:
            return
        self._correction_epoch = snapshot.correction_epoch
        correction = snapshot.correction.compose(self._applied_correction.inverse())
        self._applied_correction = snapshot.correction
        self.motion.correct(correction)
        if self.prev is not None:
            self.prev.pose_wc = correction.compose(self.prev.pose_wc)
        logger.info("applied loop-closure correction (epoch %d)", self._correction_epoch)

    def _output(self, frame: Frame, keyframes: Optional[List[Keyframe]] = None,
                relocalized: bool = False) -> FrontendOutput:
        return FrontendOutput(
            frame_id=frame.id, timestamp=frame.timestamp, pose_wc=frame.pose_wc,
            pose_valid=frame.pose_valid, state=self.state, keyframes=keyframes or [],
            num_keypoints=len(frame.keypoints), relocalized=relocalized,
        )
