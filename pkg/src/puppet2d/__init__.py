"""puppet2d: physics-based character controllers learned from 2D keypoints."""

__version__ = "0.1.0"
