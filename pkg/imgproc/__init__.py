from .pyramid import GrayImage, ImagePyramid, clahe, preprocess, to_gray, PYRAMID_LEVELS
from .features import Corner, DetectorType, detect_grid, detect_fast
from .brief import BRIEF_PATTERN, DESCRIPTOR_BYTES, brief_descriptors, compute_brief, hamming_distance
from .lk import lk_track, backward_check
from .matching import match_descriptors

__all__ = [
    'GrayImage', 'ImagePyramid', 'clahe', 'preprocess', 'to_gray', 'PYRAMID_LEVELS',
    'Corner', 'DetectorType', 'detect_grid', 'detect_fast',
    'BRIEF_PATTERN', 'DESCRIPTOR_BYTES', 'brief_descriptors', 'compute_brief', 'hamming_distance',
    'lk_track', 'backward_check',
    'match_descriptors',
]
