"""Margin-aware instance reweighting for adversarial training."""

import json

from ._pmat import (
    ConfigError,
    Error,
    InputError,
    Model,
    NumericError,
    ParseError,
    assign_weights,
    eval_robustness,
    lm_pgd,
    make_dataset,
    mm,
    normalize_weights,
    objective_loss,
    pgd,
    pm,
)
from ._pmat import resolve_config as _resolve_config
from ._pmat import train as _train

__all__ = [
    "ConfigError",
    "Error",
    "InputError",
    "Model",
    "NumericError",
    "ParseError",
    "assign_weights",
    "eval_robustness",
    "lm_pgd",
    "make_dataset",
    "mm",
    "normalize_weights",
    "objective_loss",
    "pgd",
    "pm",
    "resolve_config",
    "train",
]


def resolve_config(objective="mail_at", preset="desk", **overrides):
    """Training config as a dict, with overrides in the config-file layout."""
    return json.loads(_resolve_config(objective, preset, json.dumps(overrides) if overrides else ""))


def train(X, y, objective="mail_at", preset="desk", **overrides):
    """Train on (X, y). Returns the model and the training log as CSV text."""
    return _train(X, y, objective, preset, json.dumps(overrides) if overrides else "")
