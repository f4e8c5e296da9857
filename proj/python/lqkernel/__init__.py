"""Linear-quadratic optimal control with matrix-valued kernels.

Configurations are the same JSON documents the ``lqk`` command reads; pass a
dict or a JSON string.
"""

import json

from ._core import (
    ConfigError,
    DomainError,
    Kernel,
    NumericalError,
    UnsupportedModeError,
    UsageError,
    expm,
    preset_names,
)
from . import _core

__all__ = [
    "ConfigError",
    "DomainError",
    "Kernel",
    "NumericalError",
    "UnsupportedModeError",
    "UsageError",
    "expm",
    "preset",
    "preset_names",
    "run",
    "study",
]


def _text(config):
    return config if isinstance(config, str) else json.dumps(config)


def preset(name):
    """The built-in configuration `name` as a dict."""
    return json.loads(_core.preset_json(name))


def run(config):
    """Solve one problem. Returns status, objective, alpha, the sampled
    trajectory (times, states, controls) and the parsed report."""
    out = _core.run_json(_text(config))
    out["report"] = json.loads(out.pop("report_json"))
    return out


def study(config, axis, values):
    """One result dict per value along axis 'grid' or 'eta-scale'."""
    return _core.study_json(_text(config), axis, [float(v) for v in values])
