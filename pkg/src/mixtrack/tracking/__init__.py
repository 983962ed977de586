"""Particle-filter tracking with the motion-model mixture as transition prior."""

from .particles import (
    D_MAX, N_MAX, N_MIN, Confidence, NoiseModel, Particle, ParticleSet, adapt_particle_count, confidence,
    estimate, motion_model_reliability, propagate, propagation_reliability, resample, reweight,
)
from .tracker import DIAGNOSTIC_COLUMNS, TRACKER_OPTIMIZER, TrackerConfig, TrackResult, track

__all__ = [
    "Confidence", "D_MAX", "DIAGNOSTIC_COLUMNS", "N_MAX", "N_MIN", "NoiseModel", "Particle", "ParticleSet",
    "TRACKER_OPTIMIZER", "TrackResult", "TrackerConfig", "adapt_particle_count", "confidence", "estimate",
    "motion_model_reliability", "propagate", "propagation_reliability", "resample", "reweight", "track",
]
