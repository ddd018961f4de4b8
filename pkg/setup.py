import os

import numpy as np
from setuptools import Extension, setup

# The compiled core is optional: without Cython (or with NEUROLAN_NO_EXT=1)
# the package installs with its pure-Python kernels only.
ext_modules = []
if not os.environ.get("NEUROLAN_NO_EXT"):
    try:
        from Cython.Build import cythonize
    except ImportError:
        cythonize = None
    if cythonize is not None:
        ext_modules = cythonize(
            [
                Extension(
                    "neurolan._kernels",
                    ["src/neurolan/_kernels.pyx"],
                    include_dirs=[np.get_include()],
                    # no -ffast-math: both backends must round identically
                    extra_compile_args=["-O2"],
                )
            ],
            compiler_directives={
                "language_level": "3",
                "boundscheck": False,
                "wraparound": False,
                "cdivision": True,
                "initializedcheck": False,
            },
        )

setup(ext_modules=ext_modules)
