# structure_tracker/config.py
"""
Flat key=value tracker configuration.

Keys (empty value = default / unset):

    lambda_motion, lambda_appearance, motion_scale, motion_scale_fraction,
    ar_order, history_window          -> CostWeights
    phi_s, phi_s_fraction, max_set_size -> StructuralConfig
    gate                              -> GateConfig
    window, solver_tolerance, recovery_enabled -> RecoveryConfig
    structural_enabled, appearance_enabled, min_confidence, gap_fill -> TrackerConfig
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple

from dotenv import dotenv_values
from pydantic import ValidationError

from structure_tracker.errors import ConfigError, TrackerIOError
from structure_tracker.tracker import TrackerConfig

log = logging.getLogger(__name__)

# flat key -> (section, field); section None means a TrackerConfig field
CONFIG_KEYS: Dict[str, Tuple[Optional[str], str]] = {
    "lambda_motion": ("costs", "lambda_motion"),
    "lambda_appearance": ("costs", "lambda_appearance"),
    "motion_scale": ("costs", "motion_scale"),
    "motion_scale_fraction": ("costs", "motion_scale_fraction"),
    "ar_order": ("costs", "ar_order"),
    "history_window": ("costs", "history_window"),
    "phi_s": ("structural", "phi_s"),
    "phi_s_fraction": ("structural", "phi_s_fraction"),
    "max_set_size": ("structural", "max_set_size"),
    "gate": ("gate", "gate"),
    "window": ("recovery", "window"),
    "solver_tolerance": ("recovery", "tolerance"),
    "recovery_enabled": ("recovery", "enabled"),
    "structural_enabled": (None, "structural_enabled"),
    "appearance_enabled": (None, "appearance_enabled"),
    "min_confidence": (None, "min_confidence"),
    "gap_fill": (None, "gap_fill"),
}


def read_flat_config(path: Path | str) -> Dict[str, Optional[str]]:
    path = Path(path)
    if not path.is_file():
        raise TrackerIOError(path, "config file not found")
    values = dotenv_values(path)
    log.info("Loaded config file %s (%d keys)", path, len(values))
    return dict(values)


def tracker_config_from_mapping(values: Mapping[str, Any]) -> TrackerConfig:
    """Build a TrackerConfig from flat keys; values may be strings, as read from a file."""
    nested: Dict[str, Any] = {}
    for key, value in values.items():
        if key not in CONFIG_KEYS:
            raise ConfigError(f"unknown config key '{key}' (known: {', '.join(sorted(CONFIG_KEYS))})")
        if value is None or (isinstance(value, str) and value.strip() == ""):
            continue
        section, name = CONFIG_KEYS[key]
        if section is None:
            nested[name] = value.strip() if isinstance(value, str) else value
        else:
            nested.setdefault(section, {})[name] = value.strip() if isinstance(value, str) else value
    try:
        return TrackerConfig.model_validate(nested)
    except ValidationError as e:
        first = e.errors()[0]
        where = ".".join(str(p) for p in first["loc"])
        raise ConfigError(f"invalid config value for {where}: {first['msg']}") from e


def load_tracker_config(
    path: Optional[Path | str] = None, overrides: Optional[Mapping[str, Any]] = None
) -> TrackerConfig:
    """File values first, then overrides (CLI flags) on top."""
    values: Dict[str, Any] = read_flat_config(path) if path is not None else {}
    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = value
    return tracker_config_from_mapping(values)


def _render(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def dump_tracker_config(cfg: Optional[TrackerConfig] = None) -> str:
    """Render a config in the flat format read by load_tracker_config."""
    cfg = cfg or TrackerConfig()
    lines = ["# structure-tracker configuration; empty values use the image-size dependent default"]
    for key, (section, name) in CONFIG_KEYS.items():
        owner = cfg if section is None else getattr(cfg, section)
        lines.append(f"{key}={_render(getattr(owner, name))}")
    return "\n".join(lines) + "\n"
