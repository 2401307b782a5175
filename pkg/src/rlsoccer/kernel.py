"""Picks the simulation kernel at import time.

The compiled Cython kernel is used when it was built; otherwise the pure
Python one. Set ``RLSOCCER_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _pykernel

python_step_kernel = _pykernel.step_kernel

try:
    from ._kernel import step_kernel as compiled_step_kernel
except ImportError:  # extension not built
    compiled_step_kernel = None

if compiled_step_kernel is not None and not os.environ.get("RLSOCCER_PURE_PYTHON"):
    step_kernel = compiled_step_kernel
    KERNEL = "cython"
else:
    step_kernel = python_step_kernel
    KERNEL = "python"
