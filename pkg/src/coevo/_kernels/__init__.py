"""Training-epoch kernels.

The compiled Cython kernel is used when it imports; otherwise, or when the
environment variable ``COEVO_BACKEND=python`` is set, the NumPy reference
implementation runs instead.  Both expose ``run_epoch`` with the same
signature and semantics.
"""

import os

from . import _reference

python_run_epoch = _reference.run_epoch

try:
    from ._epoch import run_epoch as compiled_run_epoch
except ImportError:  # pragma: no cover - depends on the build
    compiled_run_epoch = None

if compiled_run_epoch is not None and os.environ.get("COEVO_BACKEND", "").lower() != "python":
    run_epoch = compiled_run_epoch
    BACKEND = "cython"
else:
    run_epoch = python_run_epoch
    BACKEND = "python"

__all__ = ["run_epoch", "BACKEND", "python_run_epoch", "compiled_run_epoch"]
