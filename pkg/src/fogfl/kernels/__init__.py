"""Evaluation backends for the barrier subproblem.

The hot path of the optimizer is the repeated evaluation of constraint
values, gradients and the assembled barrier Hessian. Two interchangeable
backends provide it:

  * ``_compiled`` -- Cython extension, used when importable,
  * ``_pyref``    -- pure-numpy reference implementation.

Selection happens at import time and can be forced with the environment
variable ``FOGFL_BACKEND`` set to ``compiled`` or ``python``. The benchmark
in ``benchmarks/bench_backends.py`` compares the two.
"""

from __future__ import annotations

import os

from . import _pyref
from .types import ProgramArrays, ProgramBuilder  # noqa: F401 (re-export)

_requested = os.environ.get("FOGFL_BACKEND", "auto")

if _requested not in ("auto", "compiled", "python"):
    raise ValueError(f"FOGFL_BACKEND must be auto|compiled|python, got {_requested!r}")

_impl = None
if _requested in ("auto", "compiled"):
    try:
        from . import _compiled as _impl  # type: ignore[attr-defined]
    except ImportError:
        if _requested == "compiled":
            raise
        _impl = None
if _impl is None:
    _impl = _pyref

BACKEND = "compiled" if _impl is not _pyref else "python"

constraint_values = _impl.constraint_values
jacobian = _impl.jacobian
potential = _impl.potential
barrier_eval = _impl.barrier_eval


def get_backend(name: str):
    """Return the module implementing the named backend (for benchmarks)."""
    if name == "python":
        return _pyref
    if name == "compiled":
        from . import _compiled
        return _compiled
    raise ValueError(f"unknown backend {name!r}")
