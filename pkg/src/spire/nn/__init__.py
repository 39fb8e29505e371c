"""Minimal NCHW layer core: functional kernels, layers, optimiser."""

from .optim import AdamState, ParamStore, ReduceLROnPlateau, adam_step

__all__ = ["AdamState", "ParamStore", "ReduceLROnPlateau", "adam_step"]
