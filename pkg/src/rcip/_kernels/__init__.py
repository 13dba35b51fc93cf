"""Kernel backend selection.

The compiled Cython module is used when it imports; otherwise the numpy
fallback is used.  :func:`use_backend` switches explicitly (benchmarks and
cross-backend tests rely on it).
"""
from __future__ import annotations

from types import ModuleType

from . import _pykernels

try:
    from . import _ckernels  # type: ignore[attr-defined]
except ImportError:  # pragma: no cover - depends on the build
    _ckernels = None

_active: ModuleType = _ckernels if _ckernels is not None else _pykernels

BACKENDS = ("compiled", "python")


def available_backends() -> list[str]:
    return ["compiled", "python"] if _ckernels is not None else ["python"]


def backend_name() -> str:
    return "compiled" if _active is _ckernels and _ckernels is not None else "python"


def use_backend(name: str) -> None:
    global _active
    if name == "python":
        _active = _pykernels
    elif name == "compiled":
        if _ckernels is None:
            raise RuntimeError("compiled kernels are not built; run `pip install -e .`")
        _active = _ckernels
    else:
        raise ValueError(f"unknown backend {name!r}; expected one of {BACKENDS}")


def step_stats(logits, n_intents, amap, num_actions, true_intent, theta):
    return _active.step_stats(logits, n_intents, amap, num_actions, true_intent, float(theta))


def binom_logcdf_table(n, p):
    return _active.binom_logcdf_table(int(n), float(p))


def binom_logcdf(k, n, p):
    return _active.binom_logcdf(int(k), int(n), float(p))
