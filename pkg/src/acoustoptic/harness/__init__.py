"""Experiment configuration, sweeps and the command-line interface."""
from .config import ConfigError, ExperimentConfig, default_config, load_config, validate
from .sweep import emit_plotdata, run_figure_sweep, run_pipeline, twin_media_stability, write_sweep

__all__ = ["ConfigError", "ExperimentConfig", "default_config", "emit_plotdata", "load_config",
           "run_figure_sweep", "run_pipeline", "twin_media_stability", "validate", "write_sweep"]
