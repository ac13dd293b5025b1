"""Frame sources: EuRoC, KITTI odometry, plain image directories and synthetic scenes."""
import csv
import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Tuple, Union

import cv2
import numpy as np
import yaml

from geometry import Se3Pose
from pipeline.config import Mode, parse_flat_mapping
from pipeline.evaluation import Association, TrajectoryEstimate
from pipeline.synthetic import SyntheticSequence, generate_synthetic, load_synthetic_spec
from utils.errors import MalformedLayoutError, MissingRightCameraError

logger = logging.getLogger(__name__)

EUROC_STEREO_TOLERANCE_NS = 1_000_000
IMAGE_SUFFIXES = ('.png', '.jpg', '.jpeg', '.pgm', '.bmp', '.tif', '.tiff')
DEFAULT_RATE_HZ = 20.0


class Layout(Enum):
    EUROC = "euroc"
    KITTI = "kitti"
    IMAGEDIR = "imagedir"
    SYNTHETIC = "synthetic"


@dataclass
class StereoFrame:
    index: int
    timestamp: float
    left: np.ndarray
    right: Optional[np.ndarray] = None


def read_gray(path: Path) -> np.ndarray:
    image = cv2.imread(str(path), cv2.IMREAD_GRAYSCALE)
    if image is None:
        raise MalformedLayoutError(f"cannot read image {path}")
    return image


class FrameSource(ABC):
    """Ordered stream of (left, optional right) images with timestamps."""
    association = Association.NEAREST

    def __init__(self, mode: Mode = Mode.STEREO):
        self.mode = mode

    @abstractmethod
    def __len__(self) -> int:
        pass

    @abstractmethod
    def frame(self, index: int) -> StereoFrame:
        pass

    def frames(self) -> Iterator[StereoFrame]:
        for index in range(len(self)):
            yield self.frame(index)

    def ground_truth(self) -> Optional[TrajectoryEstimate]:
        return None

    def calibration(self) -> Dict[str, Any]:
        """Calibration entries shipped with the dataset; empty when it has none."""
        return {}

    @property
    def stereo(self) -> bool:
        return self.mode == Mode.STEREO


def _require_right(has_right: bool, mode: Mode, path: Path) -> None:
    if mode == Mode.STEREO and not has_right:
        raise MissingRightCameraError(f"stereo mode needs a right camera stream in {path}")


def _list_images(directory: Path) -> List[Path]:
    return sorted(p for p in directory.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)


class EurocSource(FrameSource):
    """`mav0/cam0` and `mav0/cam1` with `data.csv` (timestamp_ns, filename) and `data/` images.

    Ground truth is the body trajectory from `state_groundtruth_estimate0/data.csv`.
    """

    def __init__(self, root: Union[str, Path], mode: Mode = Mode.STEREO):
        super().__init__(mode)
        self.root = Path(root)
        base = self.root / "mav0" if (self.root / "mav0").is_dir() else self.root
        self.base = base
        left = self._read_csv(base / "cam0")
        if not left:
            raise MalformedLayoutError(f"no cam0 images listed under {base}")
        has_right = (base / "cam1" / "data.csv").is_file()
        _require_right(has_right, mode, base)
        self.entries: List[Tuple[int, Path, Optional[Path]]] = []
        if self.stereo:
            right = self._read_csv(base / "cam1")
            right_ts = np.array([ts for ts, _ in right], dtype=np.int64)
            for ts, path in left:
                j = int(np.argmin(np.abs(right_ts - ts))) if len(right_ts) else -1
                if j < 0 or abs(int(right_ts[j]) - ts) > EUROC_STEREO_TOLERANCE_NS:
                    logger.warning("no right image for %d, skipping frame", ts)
                    continue
                self.entries.append((ts, path, right[j][1]))
        else:
            self.entries = [(ts, path, None) for ts, path in left]

    @staticmethod
    def _read_csv(cam_dir: Path) -> List[Tuple[int, Path]]:
        csv_path = cam_dir / "data.csv"
        if not csv_path.is_file():
            raise MalformedLayoutError(f"missing {csv_path}")
        rows = []
        with open(csv_path, newline='') as f:
            for n, row in enumerate(csv.reader(f), 1):
                if not row or row[0].lstrip().startswith('#'):
                    continue
                if len(row) < 2:
                    raise MalformedLayoutError(f"{csv_path}:{n}: expected timestamp,filename")
                try:
                    ts = int(row[0].strip())
                except ValueError:
                    raise MalformedLayoutError(f"{csv_path}:{n}: bad timestamp '{row[0]}'")
                rows.append((ts, cam_dir / "data" / row[1].strip()))
        return sorted(rows)

    def __len__(self) -> int:
        return len(self.entries)

    def frame(self, index: int) -> StereoFrame:
        ts, left, right = self.entries[index]
        return StereoFrame(index, ts * 1e-9, read_gray(left), read_gray(right) if right is not None else None)

    def ground_truth(self) -> Optional[TrajectoryEstimate]:
        path = self.base / "state_groundtruth_estimate0" / "data.csv"
        if not path.is_file():
            return None
        traj = TrajectoryEstimate()
        with open(path, newline='') as f:
            for n, row in enumerate(csv.reader(f), 1):
                if not row or row[0].lstrip().startswith('#'):
                    continue
                if len(row) < 8:
                    raise MalformedLayoutError(f"{path}:{n}: expected timestamp, position and quaternion")
                ts, px, py, pz, qw, qx, qy, qz = (float(v) for v in row[:8])
                traj.append(ts * 1e-9, Se3Pose(np.array([qx, qy, qz, qw]), np.array([px, py, pz])))
        return traj

    def calibration(self) -> Dict[str, Any]:
        return _read_calibration(self.root / "calibration.yaml")


class KittiSource(FrameSource):
    """KITTI odometry sequence: `image_0/`, `image_1/`, `times.txt` and optional poses file."""
    association = Association.INDEX

    def __init__(self, root: Union[str, Path], mode: Mode = Mode.STEREO, poses_path: Optional[Path] = None):
        super().__init__(mode)
        self.root = Path(root)
        left_dir = self.root / "image_0"
        times_path = self.root / "times.txt"
        if not left_dir.is_dir() or not times_path.is_file():
            raise MalformedLayoutError(f"{self.root} needs image_0/ and times.txt")
        _require_right((self.root / "image_1").is_dir(), mode, self.root)
        self.left = _list_images(left_dir)
        self.right = _list_images(self.root / "image_1") if self.stereo else []
        self.times = _read_times(times_path)
        if len(self.times) != len(self.left):
            raise MalformedLayoutError(f"times.txt lists {len(self.times)} timestamps for {len(self.left)} images")
        if self.stereo and len(self.right) != len(self.left):
            raise MalformedLayoutError(f"{len(self.left)} left images but {len(self.right)} right images")
        self.poses_path = poses_path or self._find_poses()

    def _find_poses(self) -> Optional[Path]:
        for candidate in (self.root / "poses.txt", self.root.parent.parent / "poses" / f"{self.root.name}.txt"):
            if candidate.is_file():
                return candidate
        return None

    def __len__(self) -> int:
        return len(self.left)

    def frame(self, index: int) -> StereoFrame:
        right = read_gray(self.right[index]) if self.stereo else None
        return StereoFrame(index, self.times[index], read_gray(self.left[index]), right)

    def ground_truth(self) -> Optional[TrajectoryEstimate]:
        if self.poses_path is None:
            return None
        traj = TrajectoryEstimate()
        rows = [line.split() for line in self.poses_path.read_text().splitlines() if line.strip()]
        if len(rows) != len(self.times):
            raise MalformedLayoutError(f"{self.poses_path} has {len(rows)} poses for {len(self.times)} frames")
        for n, (t, row) in enumerate(zip(self.times, rows), 1):
            if len(row) != 12:
                raise MalformedLayoutError(f"{self.poses_path}:{n}: expected 12 values")
            m = np.eye(4)
            m[:3, :] = np.array(row, dtype=float).reshape(3, 4)
            traj.append(t, Se3Pose.from_matrix(m))
        return traj

    def calibration(self) -> Dict[str, Any]:
        return _read_calibration(self.root / "calibration.yaml")


class ImageDirSource(FrameSource):
    """`left/` (or images at the root), optional `right/`, `times.txt`, `groundtruth.txt`, `calibration.yaml`."""

    def __init__(self, root: Union[str, Path], mode: Mode = Mode.STEREO, rate_hz: float = DEFAULT_RATE_HZ):
        super().__init__(mode)
        self.root = Path(root)
        if not self.root.is_dir():
            raise MalformedLayoutError(f"{self.root} is not a directory")
        left_dir = self.root / "left" if (self.root / "left").is_dir() else self.root
        self.left = _list_images(left_dir)
        if not self.left:
            raise MalformedLayoutError(f"no images found in {left_dir}")
        _require_right((self.root / "right").is_dir(), mode, self.root)
        self.right = _list_images(self.root / "right") if self.stereo else []
        if self.stereo and len(self.right) != len(self.left):
            raise MalformedLayoutError(f"{len(self.left)} left images but {len(self.right)} right images")
        times_path = self.root / "times.txt"
        if times_path.is_file():
            self.times = _read_times(times_path)
            if len(self.times) != len(self.left):
                raise MalformedLayoutError(f"times.txt lists {len(self.times)} timestamps for {len(self.left)} images")
        else:
            self.times = [k / rate_hz for k in range(len(self.left))]

    def __len__(self) -> int:
        return len(self.left)

    def frame(self, index: int) -> StereoFrame:
        right = read_gray(self.right[index]) if self.stereo else None
        return StereoFrame(index, self.times[index], read_gray(self.left[index]), right)

    def ground_truth(self) -> Optional[TrajectoryEstimate]:
        path = self.root / "groundtruth.txt"
        return TrajectoryEstimate.load(path) if path.is_file() else None

    def calibration(self) -> Dict[str, Any]:
        return _read_calibration(self.root / "calibration.yaml")


class SyntheticSource(FrameSource):
    """Frames rendered on demand from a synthetic scene."""

    def __init__(self, sequence: SyntheticSequence, mode: Mode = Mode.STEREO):
        super().__init__(mode)
        _require_right(sequence.spec.stereo, mode, Path("<synthetic>"))
        self.sequence = sequence

    def __len__(self) -> int:
        return len(self.sequence)

    def frame(self, index: int) -> StereoFrame:
        right = self.sequence.render(index, right=True) if self.stereo else None
        return StereoFrame(index, self.sequence.timestamp(index), self.sequence.render(index), right)

    def ground_truth(self) -> Optional[TrajectoryEstimate]:
        return self.sequence.ground_truth()

    def calibration(self) -> Dict[str, Any]:
        return self.sequence.spec.calibration()


def _read_times(path: Path) -> List[float]:
    times = []
    for n, line in enumerate(path.read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith('#'):
            continue
        try:
            times.append(float(line.split()[0]))
        except ValueError:
            raise MalformedLayoutError(f"{path}:{n}: bad timestamp '{line}'")
    return times


def _read_calibration(path: Path) -> Dict[str, Any]:
    if not path.is_file():
        return {}
    try:
        data = parse_flat_mapping(path.read_text(encoding='utf-8')) or {}
    except yaml.YAMLError as e:
        raise MalformedLayoutError(f"invalid YAML in {path}: {e}")
    if not isinstance(data, dict):
        raise MalformedLayoutError(f"{path} must hold a key: value mapping")
    return data


def get_frame_source(layout: Union[str, Layout], path: Union[str, Path], mode: Mode = Mode.STEREO) -> FrameSource:
    """Open a dataset with the reader for its layout.

    Args:
        layout: euroc, kitti, imagedir or synthetic
        path: Dataset root; for synthetic, a spec YAML file or a directory written by `synth`
        mode: Mono ignores the right stream; stereo requires one

    Returns:
        FrameSource for the dataset

    Raises:
        MalformedLayoutError: when the directory does not follow the layout
        MissingRightCameraError: when stereo mode is requested without a right stream
    """
    layout = Layout(layout) if isinstance(layout, str) else layout
    path = Path(path)
    if not path.exists():
        raise MalformedLayoutError(f"{path} does not exist")
    if layout == Layout.EUROC:
        return EurocSource(path, mode)
    if layout == Layout.KITTI:
        return KittiSource(path, mode)
    if layout == Layout.SYNTHETIC and path.is_file():
        return SyntheticSource(generate_synthetic(load_synthetic_spec(path)), mode)
    return ImageDirSource(path, mode)
