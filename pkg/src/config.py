# src/config.py
from __future__ import annotations

import os
import re
import copy
from pathlib import Path
from typing import Any, Dict, Optional

import yaml
from dotenv import load_dotenv

from .errors import ConfigError

DEFAULT_CONFIG_PATH = os.getenv("DCN_CONFIG", "config/config.yaml")

# ${NAME:default} or ${NAME}
_ENV_REF = re.compile(r"\$\{([A-Za-z_][A-Za-z0-9_]*)(?::([^}]*))?\}")

DEFAULTS: Dict[str, Any] = {
    "paths": {
        "fixtures": "./data/fixtures",
    },
    "bench": {
        "reps": 10,
        "warmup": 3,
        "group_dim": 32,
        "kernel": 3,
        "d_prime": 8,
        "seed": 0,
        "anomaly_ratio": 10.0,
        "attention_max_tokens": 4096,
    },
    "verify": {
        "seed": 7,
        "cases": 1000,
        "grad_instances": 20,
        "fd_step": 1e-3,
        "probes": 10000,
        "attention_instances": 100,
        "tol_fp32": 1e-5,
        "tol_fp16": 2e-2,
        "tol_grad": 1e-3,
    },
    "module": {
        "ln_eps": 1e-6,
    },
    "logging": {
        "level": "${LOG_LEVEL:WARNING}",
        "format": "%(asctime)s %(levelname)s %(name)s: %(message)s",
    },
}


def _expand(value: Any) -> Any:
    if isinstance(value, str):
        return _ENV_REF.sub(lambda m: os.getenv(m.group(1), m.group(2) or ""), value)
    if isinstance(value, dict):
        return {k: _expand(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_expand(v) for v in value]
    return value


def _merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    out = copy.deepcopy(base)
    for k, v in (override or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def load_config(path: Optional[str] = None) -> Dict[str, Any]:
    """
    Load the YAML config on top of DEFAULTS, expanding ${NAME:default}
    references from the environment (.env included).
    A missing file yields the defaults.
    """
    load_dotenv()
    path = path or DEFAULT_CONFIG_PATH
    raw: Dict[str, Any] = {}
    if Path(path).exists():
        with open(path, "r", encoding="utf-8") as f:
            try:
                raw = yaml.safe_load(f) or {}
            except yaml.YAMLError as e:
                raise ConfigError(f"{path}: {e}") from e
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
    return _expand(_merge(DEFAULTS, raw))


def section(cfg: Dict[str, Any], name: str) -> Dict[str, Any]:
    sec = cfg.get(name)
    if not isinstance(sec, dict):
        raise ConfigError(f"config section '{name}' missing or not a mapping")
    return sec
