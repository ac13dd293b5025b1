from .se3 import Se3Pose, skew, se3_ad, rotation_error
from .camera import CameraModel, DistortionModel, StereoRig, MIN_DEPTH
from .triangulation import triangulate, triangulate_many, parallax_angles
from .epipolar import essential_from_pose, epipolar_distance

__all__ = [
    'Se3Pose', 'skew', 'se3_ad', 'rotation_error',
    'CameraModel', 'DistortionModel', 'StereoRig', 'MIN_DEPTH',
    'triangulate', 'triangulate_many', 'parallax_angles',
    'essential_from_pose', 'epipolar_distance',
]
