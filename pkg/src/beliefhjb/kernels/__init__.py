"""Hot kernels: the compiled core when built, else the numpy fallback.

Set ``BELIEFHJB_BACKEND=python`` to force the fallback. ``BACKEND`` names the
active implementation; ``load(name)`` returns either one explicitly.
"""
import importlib
import os

from . import _fallback

__all__ = ["BACKEND", "load", "available", "residual", "sweep", "iterate",
           "argmax_pairs", "advance_paths"]


def available():
    names = ["python"]
    try:
        importlib.import_module("._core", __name__)
    except ImportError:
        pass
    else:
        names.insert(0, "cython")
    return names


def load(name):
    if name == "python":
        return _fallback
    if name == "cython":
        return importlib.import_module("._core", __name__)
    raise ValueError(f"unknown backend {name!r}")


_want = os.environ.get("BELIEFHJB_BACKEND", "").lower()
if _want == "python":
    _impl = _fallback
else:
    try:
        from . import _core as _impl
    except ImportError:
        if _want == "cython":
            raise
        _impl = _fallback

BACKEND = _impl.BACKEND
residual = _impl.residual
sweep = _impl.sweep
iterate = _impl.iterate
argmax_pairs = _impl.argmax_pairs
advance_paths = _impl.advance_paths
