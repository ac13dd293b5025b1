from dataclasses import dataclass, field
from typing import Optional

from geometry import Se3Pose


@dataclass
class MotionModel:
    """Constant-velocity model: the last frame-to-frame increment, rescaled by elapsed time."""
    prev_pose_wc: Optional[Se3Pose] = None
    relative_velocity: Se3Pose = field(default_factory=Se3Pose.identity)
    prev_timestamp: Optional[float] = None
    prev_dt: Optional[float] = None

    def predict(self, timestamp: float) -> Optional[Se3Pose]:
        if self.prev_pose_wc is None:
            return None
        increment = self.relative_velocity
        if self.prev_dt and self.prev_timestamp is not None:
            ratio = (timestamp - self.prev_timestamp) / self.prev_dt
            if abs(ratio - 1.0) > 1e-9:
                increment = increment.interpolate(ratio)
        return self.prev_pose_wc.compose(increment)

    def update(self, pose_wc: Se3Pose, timestamp: float) -> None:
        if self.prev_pose_wc is not None and self.prev_timestamp is not None:
            dt = timestamp - self.prev_timestamp
            if dt > 0:
                self.relative_velocity = self.prev_pose_wc.inverse().compose(pose_wc)
                self.prev_dt = dt
        self.prev_pose_wc = pose_wc
        self.prev_timestamp = timestamp

    def correct(self, correction: Se3Pose) -> None:
        """Left-apply a world correction (loop closure) to the stored pose."""
        if self.prev_pose_wc is not None:
            self.prev_pose_wc = correction.compose(self.prev_pose_wc)

    def reset(self) -> None:
        self.relative_velocity = Se3Pose.identity()
        self.prev_dt = None
