"""
Configuration management for the flow composition toolkit.
Handles loading environment variables and assembling the effective pipeline configuration.
"""

import json
import os
from pathlib import Path
from typing import Any, Dict, Optional, Union

from dotenv import load_dotenv
from pydantic import ValidationError

from errors import ConfigError
from models import PipelineConfig

# Load environment variables from .env file
load_dotenv()


class Config:
    """Process-level settings taken from the environment."""

    def __init__(self):
        self.log_level = os.getenv("FLOWCOMP_LOG_LEVEL", "INFO").upper()
        raw_threads = os.getenv("FLOWCOMP_THREADS", "1")
        try:
            self.threads = int(raw_threads)
        except ValueError:
            raise ConfigError(f"FLOWCOMP_THREADS must be an integer, got '{raw_threads}'")

        # Validate required configuration
        if self.threads < 1:
            raise ConfigError("FLOWCOMP_THREADS must be at least 1")


def load_config_file(path: Union[str, Path]) -> Dict[str, Any]:
    """Read a flat key-value JSON config file."""
    config_path = Path(path)
    if not config_path.exists():
        raise ConfigError(f"Config file not found: {config_path}")
    try:
        values = json.loads(config_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigError(f"{config_path}: invalid JSON ({e})")
    if not isinstance(values, dict):
        raise ConfigError(f"{config_path}: expected a JSON object at top level")
    return values


def build_pipeline_config(config_path: Optional[Union[str, Path]] = None,
                          overrides: Optional[Dict[str, Any]] = None) -> PipelineConfig:
    """
    Assemble the effective configuration.

    Defaults are replaced by values from the config file, which are in turn
    replaced by command-line overrides. Overrides set to None are ignored.
    """
    values: Dict[str, Any] = {}
    if config_path is not None:
        values.update(load_config_file(config_path))
    if overrides:
        values.update({key: value for key, value in overrides.items() if value is not None})
    try:
        return PipelineConfig(**values)
    except ValidationError as e:
        raise ConfigError(f"Invalid configuration: {e}")
