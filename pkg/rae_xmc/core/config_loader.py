"""Configuration loader for rae-xmc."""

import logging
from pathlib import Path
from typing import Any, Dict, List, Optional

import yaml

from ..utils.exceptions import ConfigurationError, InvalidConfig
from .config_types import (
    EvalConfig,
    IndexConfig,
    InferenceConfig,
    LossKind,
    SegmentSpec,
    TrainConfig,
)

logger = logging.getLogger(__name__)

DEFAULT_CONFIG_PATH = Path(__file__).parent.parent / "config" / "default_config.yaml"
PROJECT_CONFIG_NAME = ".rae-xmc.yaml"


def merge_configs(default: dict, override: dict) -> dict:
    """Recursively merge configuration dictionaries."""
    result = default.copy()

    for key, value in override.items():
        if key in result and isinstance(result[key], dict) and isinstance(value, dict):
            result[key] = merge_configs(result[key], value)
        else:
            result[key] = value

    return result


def _read_yaml(path: Path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f)
    except (OSError, yaml.YAMLError) as e:
        raise ConfigurationError(f"Cannot load configuration {path}: {e}") from e
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigurationError(f"Configuration {path} must be a mapping")
    return data


def load_configuration(
    config_path: Optional[Path] = None, search_dir: Optional[Path] = None
) -> dict:
    """Load the packaged defaults and merge a user configuration over them.

    An explicit ``config_path`` wins; otherwise ``.rae-xmc.yaml`` in
    ``search_dir`` is used when present.
    """
    config = _read_yaml(DEFAULT_CONFIG_PATH)

    if config_path:
        config = merge_configs(config, _read_yaml(Path(config_path)))
    elif search_dir is not None:
        project_config_path = Path(search_dir) / PROJECT_CONFIG_NAME
        if project_config_path.exists():
            logger.info(f"Using project configuration {project_config_path}")
            config = merge_configs(config, _read_yaml(project_config_path))

    return config


def _known(section: Dict[str, Any], allowed: List[str], name: str) -> Dict[str, Any]:
    unknown = sorted(set(section) - set(allowed))
    if unknown:
        raise InvalidConfig(f"Unknown keys in '{name}': {', '.join(unknown)}")
    return section


class ConfigLoader:
    """Typed views over the merged configuration."""

    def __init__(
        self, config_path: Optional[Path] = None, search_dir: Optional[Path] = None
    ):
        """
        Initialize configuration loader.

        Args:
            config_path: User configuration file merged over the defaults
            search_dir: Directory searched for a project configuration file
        """
        self.config_path = config_path
        self.config = load_configuration(config_path, search_dir)

    def _section(self, name: str) -> Dict[str, Any]:
        section = self.config.get(name) or {}
        if not isinstance(section, dict):
            raise ConfigurationError(f"Section '{name}' must be a mapping")
        return section

    def index_config(self, **overrides) -> IndexConfig:
        keys = ["m", "ef_construction", "seed", "num_threads"]
        values = dict(_known(self._section("index"), keys, "index"))
        values.update({k: v for k, v in overrides.items() if v is not None})
        return IndexConfig(**values)

    def preset(self, name: str) -> Dict[str, Any]:
        presets = self._section("presets")
        if name not in presets:
            raise InvalidConfig(
                f"Unknown preset '{name}' (available: {', '.join(sorted(presets))})"
            )
        return presets[name] or {}

    def inference_config(
        self, preset: Optional[str] = None, **overrides
    ) -> InferenceConfig:
        """Defaults, then the preset, then explicit overrides (``None`` means unset)."""
        values = dict(self._section("inference"))
        if preset:
            values = merge_configs(values, self.preset(preset))
        keys = ["b", "tau", "lambda", "ef_search", "topk"]
        values = _known(values, keys, "inference")
        values.update({k: v for k, v in overrides.items() if v is not None})
        lam = values.pop("lam", values.pop("lambda", 0.5))
        return InferenceConfig(lam=float(lam), **values)

    def eval_config(self, ks=None, segments=None) -> EvalConfig:
        section = self._section("evaluation")
        ks = tuple(int(k) for k in (ks or section.get("ks", (1, 5, 100))))
        thresholds = segments or section.get("segments", (1000, 100, 10))
        return EvalConfig(ks=ks, segments=SegmentSpec.from_thresholds(thresholds))

    def sweep_lambdas(self) -> List[float]:
        return [float(v) for v in self._section("sweep").get("lambdas", [])]

    def train_config(self, **overrides) -> TrainConfig:
        values = dict(self._section("train"))
        values.update({k: v for k, v in overrides.items() if v is not None})
        if "loss" in values and not isinstance(values["loss"], LossKind):
            try:
                values["loss"] = LossKind(values["loss"])
            except ValueError as e:
                raise InvalidConfig(f"Unknown training loss '{values['loss']}'") from e
        try:
            return TrainConfig(**values)
        except TypeError as e:
            raise InvalidConfig(f"Invalid 'train' section: {e}") from e
