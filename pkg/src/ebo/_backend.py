"""Backend selection for the hot numerical kernels.

The compiled extension (:mod:`ebo._core`) is used when it imported cleanly;
otherwise the NumPy fallback (:mod:`ebo._kernels_py`) takes over.  Setting
the environment variable ``EBO_FORCE_PYTHON=1`` before import forces the
fallback regardless of availability (useful for benchmarking and tests).

Both backends expose the same functions with identical semantics:
``add_equality``, ``chol_loglik``, ``gram_loglik``, ``loglik_delta``,
``cut_scan`` and ``cross_match``.
"""

from __future__ import annotations

import os

from . import _kernels_py

if os.environ.get("EBO_FORCE_PYTHON", "") not in ("", "0"):
    impl = _kernels_py
else:
    try:
        from . import _core as impl  # type: ignore[no-redef]
    except ImportError:
        impl = _kernels_py

BACKEND_NAME: str = impl.NAME

add_equality = impl.add_equality
chol_loglik = impl.chol_loglik
gram_loglik = impl.gram_loglik
loglik_delta = impl.loglik_delta
cut_scan = impl.cut_scan
cross_match = impl.cross_match


def available_backends() -> tuple[str, ...]:
    """Names of the backends importable in this environment."""
    names = ["python"]
    try:
        from . import _core  # noqa: F401

        names.insert(0, "compiled")
    except ImportError:
        pass
    return tuple(names)


def get_backend(name: str):
    """Return a backend module by name (``"compiled"`` or ``"python"``)."""
    if name == "python":
        return _kernels_py
    if name == "compiled":
        from . import _core

        return _core
    raise ValueError(f"unknown backend {name!r}")
