"""Simulator and verification suite for a 2D exclusion process with face-rotation rates."""

__version__ = "0.1.0"
