"""Builds the optional Cython extension for the hot kernels.

The package works without the extension (a pure-numpy fallback is selected at
import time), so a failed compilation downgrades to a warning instead of
aborting the install.
"""

import sys

from setuptools import setup

try:
    import numpy as np
    from Cython.Build import cythonize
    from setuptools.extension import Extension

    ext_modules = cythonize(
        [
            Extension(
                "affclt.kernels._ext",
                ["src/affclt/kernels/_ext.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except Exception as exc:  # pragma: no cover - build environment dependent
    print(f"warning: skipping Cython extension build ({exc})", file=sys.stderr)
    ext_modules = []

setup(ext_modules=ext_modules)
