"""
Configuration Manager for the Stein OLO harness

Settings come from one flat key-value file (KEY=value lines, # comments,
dotted keys for nested sections) followed by command-line overrides. The
process environment is never read.
"""

import os
from typing import Any, Dict, Optional

import structlog
from dotenv import dotenv_values

from config.experiment_config import ExperimentConfig

DEFAULT_CONFIG_PATH = os.path.join(os.path.dirname(__file__), "defaults.conf")


class Config:
    """
    Configuration store shared by the CLI and the services.
    Values are kept as a nested dictionary built from dotted keys.
    """

    _instance = None
    _config: Dict[str, Any] = {}

    def __new__(cls) -> "Config":
        """Singleton pattern implementation"""
        if not cls._instance:
            cls._instance = super(Config, cls).__new__(cls)
        return cls._instance

    def __init__(self) -> None:
        self.logger = structlog.get_logger(self.__class__.__name__)
        if not self._config and os.path.isfile(DEFAULT_CONFIG_PATH):
            self._read(DEFAULT_CONFIG_PATH)

    def load_config(self, config_path: Optional[str] = None) -> None:
        """
        Load the flat key-value file, replacing any previous values.

        :param config_path: Path to the file; the checked-in defaults when omitted
        :raises FileNotFoundError: If an explicit path does not exist
        """
        explicit = config_path is not None
        path = config_path or DEFAULT_CONFIG_PATH
        if not os.path.isfile(path):
            if explicit:
                raise FileNotFoundError(f"configuration file {path} not found")
            self.logger.warning("default configuration file missing", path=path)
            return

        self._read(path)
        self.logger.debug("configuration loaded", path=path, keys=len(self.flatten()))

    def _read(self, path: str) -> None:
        self._config.clear()
        for key, value in dotenv_values(path, interpolate=False).items():
            self._set_nested_value(key, self._parse_value(value))

    @staticmethod
    def _parse_value(value: Optional[str]) -> Any:
        """Convert true/false and numeric strings, keep everything else as text."""
        if value is None:
            return ""
        text = value.strip()
        if text.lower() in ("true", "false"):
            return text.lower() == "true"
        try:
            return int(text)
        except ValueError:
            pass
        try:
            return float(text)
        except ValueError:
            return text

    def apply_overrides(self, overrides: Dict[str, Any]) -> None:
        """
        Apply command-line values on top of the file; None means not given.

        :param overrides: Dotted keys to values
        """
        for key, value in overrides.items():
            if value is not None:
                self._set_nested_value(key, value)

    def _set_nested_value(self, path: str, value: Any) -> None:
        """
        Set a value in a nested dictionary using a dot-separated path.

        :param path: Dot-separated path to the value
        :param value: Value to set
        """
        keys = path.split(".")
        current = self._config
        for key in keys[:-1]:
            if not isinstance(current.get(key), dict):
                current[key] = {}
            current = current[key]
        current[keys[-1]] = value

    def _get_nested_value(self, path: str, default: Any = None) -> Any:
        """
        Get a value from a nested dictionary using a dot-separated path.

        :param path: Dot-separated path to the value
        :param default: Default value if path doesn't exist
        :return: Value at the path or default
        """
        current: Any = self._config
        for key in path.split("."):
            if not isinstance(current, dict) or key not in current:
                return default
            current = current[key]
        return current

    def get(self, key: str, default: Any = None) -> Any:
        """
        Retrieve a configuration value.

        :param key: Configuration key, dotted for nested sections
        :param default: Default value if key is not found
        :return: Configuration value or default
        """
        if "." in key:
            return self._get_nested_value(key, default)
        return self._config.get(key, default)

    def flatten(self) -> Dict[str, Any]:
        """Dotted-key view of the stored values."""
        flat: Dict[str, Any] = {}

        def walk(prefix: str, node: Dict[str, Any]) -> None:
            for key, value in node.items():
                path = f"{prefix}.{key}" if prefix else key
                if isinstance(value, dict):
                    walk(path, value)
                else:
                    flat[path] = value

        walk("", self._config)
        return flat

    def experiment(self) -> ExperimentConfig:
        """
        Validate the merged settings.

        :raises pydantic.ValidationError: If a value or a combination is invalid
        """
        flat: Dict[str, Optional[str]] = {}
        for key, value in self.flatten().items():
            if isinstance(value, bool):
                flat[key] = "true" if value else "false"
            elif isinstance(value, (list, tuple)):
                flat[key] = ",".join(repr(float(v)) for v in value)
            else:
                flat[key] = str(value)
        return ExperimentConfig.from_flat(flat)

    def reset(self) -> None:
        self._config.clear()


# Create a singleton instance
config = Config()
