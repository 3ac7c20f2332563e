import os

import numpy as np
from setuptools import Extension, setup

# The compiled core is optional: without Cython the package imports its numpy fallback.
ext_modules = []
if os.environ.get("QKDCOEXIST_NO_EXT") != "1":
    try:
        from Cython.Build import cythonize
    except ImportError:
        cythonize = None
    if cythonize is not None:
        ext_modules = cythonize(
            [
                Extension(
                    "qkdcoexist._kernels",
                    ["src/qkdcoexist/_kernels.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3", "boundscheck": False, "wraparound": False},
        )

setup(ext_modules=ext_modules)
