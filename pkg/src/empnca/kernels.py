"""Backend selection for the rollout kernel.

The compiled extension is used when importable; setting ``EMPNCA_BACKEND=python``
forces the pure-Python fallback.
"""
import os

from . import _core_py

BACKEND = "python"
rollout_kernel = _core_py.rollout_kernel

if os.environ.get("EMPNCA_BACKEND", "").lower() != "python":
    try:
        from . import _core
    except ImportError:
        pass
    else:
        BACKEND = "cython"
        rollout_kernel = _core.rollout_kernel

python_rollout_kernel = _core_py.rollout_kernel
