"""Kernel selection: compiled extension when built, numpy fallback otherwise.

The active default can be forced with the ``HETMARKET_ENGINE`` environment
variable (``compiled`` or ``python``); `run`/`tick` also accept an explicit
``engine=`` argument. Both kernels are bit-for-bit interchangeable.
"""

from __future__ import annotations

import os

from . import _engine_py

try:
    from . import _engine_cy
except ImportError:
    _engine_cy = None

ENV_VAR = "HETMARKET_ENGINE"

_ENGINES = {"python": _engine_py}
if _engine_cy is not None:
    _ENGINES["compiled"] = _engine_cy


def available() -> tuple:
    """Names of the engines importable in this environment."""
    return tuple(sorted(_ENGINES))


def have_compiled() -> bool:
    return _engine_cy is not None


def default_name() -> str:
    env = os.environ.get(ENV_VAR)
    if env:
        if env not in _ENGINES:
            raise ValueError(
                f"{ENV_VAR}={env!r} not available; choose from {available()}"
            )
        return env
    return "compiled" if _engine_cy is not None else "python"


def resolve(name=None):
    """Return the engine module for ``name`` (None selects the default)."""
    if name is None:
        name = default_name()
    try:
        return _ENGINES[name]
    except KeyError:
        raise ValueError(
            f"unknown engine {name!r}; choose from {available()}"
        ) from None
