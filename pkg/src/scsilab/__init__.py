"""scsilab: multi-user DMRS channel estimation with location-specific
statistical CSI, and grid-database construction by structured tensor
decomposition."""

from .config import SystemConfig, desk_config, paper_scale_config, snr_db_to_noise_var
from .scene import (
    GridScene,
    PathParams,
    PathSet,
    SceneParams,
    draw_gains,
    generate_scene,
    load_scene,
    save_scene,
    steering_antenna,
    steering_delay,
    synth_channel,
)

__all__ = [
    "SystemConfig",
    "desk_config",
    "paper_scale_config",
    "snr_db_to_noise_var",
    "GridScene",
    "PathParams",
    "PathSet",
    "SceneParams",
    "draw_gains",
    "generate_scene",
    "load_scene",
    "save_scene",
    "steering_antenna",
    "steering_delay",
    "synth_channel",
]

__version__ = "0.1.0"
