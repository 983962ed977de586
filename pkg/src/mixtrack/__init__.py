"""Multi-agent pedestrian tracking with a per-window mixture of calibrated motion models."""

__version__ = "0.1.0"
