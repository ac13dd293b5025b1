from .map import Keyframe, MapPoint, CovisibilityGraph, MapSnapshot, SlamMap, MAX_POINT_DESCRIPTORS
from .stereo import stereo_match, stereo_guess
from .triangulator import triangulate_new_points, point_depths
from .local_map import track_local_map
from .mapper import Mapper, MappingReport

__all__ = [
    'Keyframe', 'MapPoint', 'CovisibilityGraph', 'MapSnapshot', 'SlamMap', 'MAX_POINT_DESCRIPTORS',
    'stereo_match', 'stereo_guess',
    'triangulate_new_points', 'point_depths',
    'track_local_map',
    'Mapper', 'MappingReport',
]
