"""Soft tendon-driven gripper on a quadrotor.

Rigid-body flight dynamics with adaptive geometric control, minimum-snap
trajectory planning, a corotational-free FEM soft gripper with tendon
actuation, grasp pose optimization, and a drop-test pipeline that searches
tendon configurations for minimal landing impact.
"""

from softgrasp.errors import (
    ConfigError,
    DivergenceError,
    MeshError,
    OptimizationError,
    PlannerError,
    SoftgraspError,
)

__version__ = "0.1.0"

__all__ = [
    "SoftgraspError",
    "ConfigError",
    "DivergenceError",
    "MeshError",
    "OptimizationError",
    "PlannerError",
    "__version__",
]
