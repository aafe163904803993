"""Planar bipedal walking: LIPM footstep MPC, task-space QP control, simulator."""

from ._backend import backend_name

__version__ = "0.1.0"

__all__ = ["backend_name", "__version__"]
