"""Build script: compiles the optional Cython evaluation core.

The package is fully functional without the extension (a pure-NumPy
backend is selected at import time); set ITU_MATCH_PURE_PYTHON=1 to skip
the compilation step entirely.
"""

import os

from setuptools import Extension, setup

ext_modules = []
if not os.environ.get("ITU_MATCH_PURE_PYTHON"):
    try:
        import numpy as np
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "itu_match._core",
                    sources=["src/itu_match/_core.pyx"],
                    include_dirs=[np.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
