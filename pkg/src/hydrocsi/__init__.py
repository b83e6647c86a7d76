"""Water-level sensing from bi-static channel state information.

Subpackages cover the full chain: a synthetic CSI simulator with scripted
scenes, power-domain de-offsetting and the non-uniform Doppler transform,
minimum-variance delay estimation and Doppler-range heatmaps, CFAR detection,
complex feature extraction, Kalman phase unwrapping, and the geometric
height transform, plus file/stream formats and a CLI.
"""

from .core import (
    ConfigError,
    CsiWindow,
    DelayGrid,
    DopplerGrid,
    Geometry,
    PowerWindow,
    SPEED_OF_LIGHT,
    SystemConfig,
    load_system_config,
    make_sampling_schedule,
    reflection_angle,
)
from .pipeline import PipelineOptions, PipelineResult, run_pipeline
from .simulator import Scene, load_scene

__all__ = [
    "ConfigError",
    "CsiWindow",
    "DelayGrid",
    "DopplerGrid",
    "Geometry",
    "PipelineOptions",
    "PipelineResult",
    "PowerWindow",
    "SPEED_OF_LIGHT",
    "Scene",
    "SystemConfig",
    "load_scene",
    "load_system_config",
    "make_sampling_schedule",
    "reflection_angle",
    "run_pipeline",
]

__version__ = "0.1.0"
