"""Backend selection: compiled extension when available, NumPy otherwise.

The compiled core (``itu_match._core``, built from Cython) and the pure
Python backend implement the same four entry points:

- ``eval_points(program, u, v, grad=False)``
- ``eval_table(table, u, v, grad=False)``
- ``ipfp_sweep(...)``
- ``jacobi_sweep(...)``

Set ``ITU_MATCH_BACKEND=python`` or ``=compiled`` to force a choice; the
default (``auto``) uses the extension if it imports.
"""

from __future__ import annotations

import os

from . import _kernels_py

_choice = os.environ.get("ITU_MATCH_BACKEND", "auto").lower()

_impl = None
if _choice in ("auto", "compiled"):
    try:
        from . import _core as _impl  # type: ignore[attr-defined]
    except ImportError:
        if _choice == "compiled":
            raise ImportError(
                "ITU_MATCH_BACKEND=compiled but the itu_match._core extension is not built"
            )
        _impl = None
if _impl is None:
    _impl = _kernels_py

BACKEND_NAME: str = _impl.NAME
IS_COMPILED: bool = _impl.IS_COMPILED

eval_points = _impl.eval_points
eval_table = _impl.eval_table
ipfp_sweep = _impl.ipfp_sweep
jacobi_sweep = _impl.jacobi_sweep


def get_backend(name: str):
    """Return a specific backend module (for benchmarks and equivalence tests)."""
    if name == "python":
        return _kernels_py
    if name == "compiled":
        from . import _core  # noqa: F811

        return _core
    raise ValueError(f"unknown backend {name!r}")
