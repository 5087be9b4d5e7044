"""
Configuration Module
====================
Loads desk defaults from config/settings.yaml and run configs from flat
JSON or YAML documents.

Layering (later wins):
1. Dataclass defaults of SaeConfig and TrainConfig
2. The sae: and train: sections of config/settings.yaml
3. The run config document
4. The ORTSAE_SEED environment variable

Usage:
    from src.utils.config import load_run_config

    sae_cfg, train_cfg = load_run_config("configs/ortsae.json")
"""

import os
from typing import Any, Dict, Mapping, Optional, Tuple

import yaml
import sys

# Add parent directory to path for imports
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.dirname(__file__))))

from src.sae.model import SaeConfig
from src.train.trainer import TrainConfig
from src.utils.errors import ConfigurationError


SEED_ENV_VAR = "ORTSAE_SEED"

# Public key -> (target, field name, type)
SAE_KEYS = {
    "mode": ("sae", "mode", str),
    "dict_size": ("sae", "dict_size", int),
    "k_sparsity": ("sae", "k_sparsity", int),
    "lambda": ("sae", "lam", float),
    "alpha": ("sae", "alpha", float),
    "gamma": ("sae", "gamma", float),
    "delta": ("sae", "delta", float),
    "chunk_count": ("sae", "chunk_count", int),
    "penalty_period": ("sae", "penalty_period", int),
    "aux_k": ("sae", "aux_k", int),
}
TRAIN_KEYS = {
    "learning_rate": ("train", "learning_rate", float),
    "batch_size": ("train", "batch_size", int),
    "total_steps": ("train", "total_steps", int),
    "adam_beta1": ("train", "adam_beta1", float),
    "adam_beta2": ("train", "adam_beta2", float),
    "adam_eps": ("train", "adam_eps", float),
    "weight_decay": ("train", "weight_decay", float),
    "dead_window": ("train", "dead_window", int),
    "seed": ("train", "seed", int),
    "checkpoint_every": ("train", "checkpoint_every", int),
    "log_every": ("train", "log_every", int),
}
RUN_KEYS = {**SAE_KEYS, **TRAIN_KEYS}

# Keys that may be null to request their derived default
NULLABLE_KEYS = {"chunk_count", "aux_k"}


def load_settings(config_path: Optional[str] = None) -> Dict:
    """
    Load config/settings.yaml.

    Args:
        config_path: Explicit path (optional)

    Returns:
        Settings dictionary, empty if no settings file is found
    """
    # Try multiple possible config locations
    possible_paths = [
        config_path,
        "config/settings.yaml",
        "../config/settings.yaml",
        os.path.join(os.path.dirname(__file__), "../../config/settings.yaml"),
    ]

    for path in possible_paths:
        if path and os.path.exists(path):
            with open(path, "r") as f:
                return yaml.safe_load(f) or {}

    return {}


def _coerce(key: str, value: Any, kind: type) -> Any:
    if value is None:
        if key in NULLABLE_KEYS:
            return None
        raise ConfigurationError("must not be null", key=key)
    if isinstance(value, bool):
        raise ConfigurationError(f"expected a number, got {value!r}", key=key)
    try:
        if kind is int:
            number = float(value) if isinstance(value, str) else value
            if int(number) != number:
                raise ValueError
            return int(number)
        if kind is float:
            return float(value)
    except (TypeError, ValueError, OverflowError):
        raise ConfigurationError(f"expected {kind.__name__}, got {value!r}", key=key)
    return str(value)


def _apply(values: Dict[str, Dict[str, Any]], document: Mapping[str, Any], allowed: Mapping[str, tuple]) -> None:
    for key, value in document.items():
        if key not in allowed:
            raise ConfigurationError("unknown configuration key", key=str(key))
        target, name, kind = allowed[key]
        values[target][name] = _coerce(key, value, kind)


def seed_override(environ: Optional[Mapping[str, str]] = None) -> Optional[int]:
    """Seed from ORTSAE_SEED, or None when the variable is unset or empty."""
    environ = os.environ if environ is None else environ
    raw = environ.get(SEED_ENV_VAR, "").strip()
    if not raw:
        return None
    try:
        return int(raw)
    except ValueError:
        raise ConfigurationError(f"{SEED_ENV_VAR} is not an integer: {raw!r}", key="seed")


def build_configs(
    document: Optional[Mapping[str, Any]] = None,
    settings: Optional[Mapping[str, Any]] = None,
    environ: Optional[Mapping[str, str]] = None,
) -> Tuple[SaeConfig, TrainConfig]:
    """
    Resolve SaeConfig and TrainConfig from settings, a run document and the environment.

    Raises:
        ConfigurationError: On unknown keys or invalid values (names the key)
    """
    values: Dict[str, Dict[str, Any]] = {"sae": {}, "train": {}}

    settings = settings or {}
    _apply(values, settings.get("sae") or {}, SAE_KEYS)
    _apply(values, settings.get("train") or {}, TRAIN_KEYS)

    if document is not None:
        if not isinstance(document, Mapping):
            raise ConfigurationError("run config must be a flat mapping of keys to values")
        _apply(values, document, RUN_KEYS)

    seed = seed_override(environ)
    if seed is not None:
        values["train"]["seed"] = seed

    return SaeConfig(**values["sae"]), TrainConfig(**values["train"])


def read_document(path: str) -> Dict:
    """Parse a JSON or YAML run config file."""
    with open(path, "r") as f:
        try:
            document = yaml.safe_load(f)
        except yaml.YAMLError as e:
            raise ConfigurationError(f"cannot parse {path}: {e}".splitlines()[0])
    return document if document is not None else {}


def load_run_config(
    path: Optional[str] = None,
    settings_path: Optional[str] = None,
    environ: Optional[Mapping[str, str]] = None,
) -> Tuple[SaeConfig, TrainConfig]:
    """
    Load a run config on top of the settings file.

    Args:
        path: Run config (JSON or YAML); None uses settings and defaults only
        settings_path: Explicit settings.yaml (optional)
        environ: Environment mapping (default os.environ)

    Returns:
        (SaeConfig, TrainConfig)
    """
    document = read_document(path) if path else None
    return build_configs(document, load_settings(settings_path), environ)


def settings_section(name: str, settings: Optional[Mapping[str, Any]] = None) -> Dict:
    """One top-level section of the settings file (empty when absent)."""
    settings = load_settings() if settings is None else settings
    return dict(settings.get(name) or {})
