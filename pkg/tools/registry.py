from __future__ import annotations

import copy
import logging

import yaml

import config

logger = logging.getLogger(__name__)

_REGISTRY_PATH = config.MODELS_REGISTRY
_models: dict[str, dict] = {}


class UnknownPresetError(KeyError):
    """No preset with that name in models.yaml."""


def load_models() -> dict[str, dict]:
    """Load the preset registry from models.yaml."""
    global _models
    if not _REGISTRY_PATH.exists():
        logger.warning("models.yaml not found at %s", _REGISTRY_PATH)
        _models = {}
        return _models

    with open(_REGISTRY_PATH, encoding="utf-8") as f:
        data = yaml.safe_load(f)

    _models = data.get("models", {}) if data else {}
    logger.debug("Loaded %d presets from registry", len(_models))
    return _models


def get_models() -> dict[str, dict]:
    """Return cached presets (loads if not loaded yet)."""
    if not _models:
        load_models()
    return _models


def preset_names() -> list[str]:
    return sorted(get_models())


def resolve_preset(name: str, overrides: dict | None = None) -> dict:
    """Model document for a preset with command-line overrides applied.

    Only keys listed under the preset's ``overrides`` may be replaced;
    ``None`` values are ignored.

    Raises:
        UnknownPresetError: name not in the registry.
        ValueError: an override the preset does not accept.
    """
    models = get_models()
    if name not in models:
        raise UnknownPresetError(f"unknown preset {name!r}; available: {', '.join(sorted(models)) or 'none'}")
    entry = models[name]
    doc = copy.deepcopy(entry["document"])
    allowed = set(entry.get("overrides", []))
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in allowed:
            raise ValueError(f"preset {name!r} does not accept override {key!r}")
        doc[key] = value
    doc.setdefault("name", name)
    return doc


def presets_summary() -> str:
    """One line per preset for `--list-presets`."""
    models = get_models()
    if not models:
        return "No presets registered."
    lines = ["REGISTERED PRESETS:"]
    for name in sorted(models):
        desc = str(models[name].get("description", "")).strip().split("\n")[0]
        extra = models[name].get("overrides")
        suffix = f" [overrides: {', '.join(extra)}]" if extra else ""
        lines.append(f"  - {name}: {desc}{suffix}")
    return "\n".join(lines)
