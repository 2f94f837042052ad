"""Build the optional compiled kernels for solitonlab.

The extension is optional: if Cython or a C compiler is missing the package
installs without it and the pure-Python kernels are used at import time.
"""

import os

import numpy as np
from setuptools import setup

ext_modules = []
if not os.environ.get("SOLITONLAB_NO_EXT"):
    try:
        from Cython.Build import cythonize
        from setuptools import Extension

        extensions = [
            Extension(
                "solitonlab._kernels._core",
                ["src/solitonlab/_kernels/_core.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ]
        ext_modules = cythonize(
            extensions,
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
