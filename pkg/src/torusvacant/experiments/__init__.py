from .config import config_hash, validate_config, CONFIG_SCHEMAS, ConfigError
from .runner import run_tasks, write_csv, write_ndjson, write_metadata
from . import commands

__all__ = [
    "config_hash", "validate_config", "CONFIG_SCHEMAS", "ConfigError",
    "run_tasks", "write_csv", "write_ndjson", "write_metadata", "commands",
]
