"""Gaze-guided positive-pair mining for contrastive pre-training."""

__version__ = "0.1.0"
