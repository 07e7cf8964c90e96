"""Radar-camera multi-object tracking with a radar-aware second association stage."""

__version__ = "0.1.0"
