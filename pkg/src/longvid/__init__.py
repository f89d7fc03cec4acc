"""Desk-scale long-form video-language pre-training testbed.

A float64 numpy stack built for verification: a from-scratch reverse-mode
autodiff engine, hierarchical temporal window attention, dual text/video
encoders with temporal contrastive alignment, a frozen-encoder cross-modal
stage, and an exact multiply-add cost model, all exercised on synthetic
long-form data.
"""

from . import attention, config, costmodel, data, encoders, engine, objectives, pipeline

__version__ = "0.1.0"

__all__ = [
    "attention",
    "config",
    "costmodel",
    "data",
    "encoders",
    "engine",
    "objectives",
    "pipeline",
]
