"""Build script for the optional compiled kernel extension.

The package is fully functional without the extension (a NumPy fallback is
selected at import time), so any failure to compile is reported as a warning
rather than aborting the install.
"""

import warnings

from setuptools import Extension, setup


def _extensions():
    try:
        import numpy as np
        from Cython.Build import cythonize
    except ImportError as exc:  # pragma: no cover - build-time only
        warnings.warn(f"building without compiled kernels: {exc}")
        return []
    ext = Extension(
        "ebo._core",
        sources=["src/ebo/_core.pyx"],
        include_dirs=[np.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
    )
    return cythonize([ext], language_level=3)


try:
    setup(ext_modules=_extensions())
except Exception as exc:  # pragma: no cover - build-time only
    warnings.warn(f"compiled kernels unavailable, installing pure-Python build: {exc}")
    setup(ext_modules=[])
