"""Exact discrete variational inference (Python front end to the C++ core)."""

import json

from ._core import (
    ConfigError,
    DataError,
    Model,
    NumericError,
    benchmark,
    default_config,
    glm_elbo,
    load_config,
    pack_sample,
    unpack_sample,
)
from . import _core


def _as_text(config):
    if config is None:
        return "{}"
    if isinstance(config, str):
        return config
    return json.dumps(config)


def train(x, y, config=None):
    """Fit a model; config is a dict or JSON text overriding the defaults. Returns (Model, trace, seconds)."""
    return _core.train(_as_text(config), x, y)


def crossval(x, y, k=5, config=None):
    return _core.crossval(_as_text(config), x, y, k)


__all__ = [
    "ConfigError",
    "DataError",
    "Model",
    "NumericError",
    "benchmark",
    "crossval",
    "default_config",
    "glm_elbo",
    "load_config",
    "pack_sample",
    "train",
    "unpack_sample",
]
