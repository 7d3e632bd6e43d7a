"""Spatio-temporal action localisation by tracking proposals through a video."""

__version__ = "0.1.0"

from .geometry import BoundingBox, Track, box_iou  # noqa: E402
from .video import Frame, VideoSequence, crop_resize, load_sequence  # noqa: E402
from .errors import DataError, InvariantError  # noqa: E402

__all__ = ["__version__", "BoundingBox", "Track", "box_iou", "Frame", "VideoSequence", "crop_resize",
           "load_sequence", "DataError", "InvariantError"]
