"""Configuration, phantoms, pipeline orchestration, heatmaps and the ``eit`` CLI."""

from .config import ConfigError, PipelineConfig, load_config, parse_config_text
from .phantoms import Phantom, PhantomKind, make_phantom
from .pipeline import PipelineError, read_manifest, run_pipeline

__all__ = [
    "ConfigError",
    "Phantom",
    "PhantomKind",
    "PipelineConfig",
    "PipelineError",
    "load_config",
    "make_phantom",
    "parse_config_text",
    "read_manifest",
    "run_pipeline",
]
