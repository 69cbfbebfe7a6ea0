import os

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # the package still works through its pure-Python fallback
    cythonize = None

ext_modules = []
if cythonize is not None and os.environ.get("PANOLOC_NO_EXT") != "1":
    ext_modules = cythonize(
        [
            Extension(
                "panoloc._kernels",
                ["src/panoloc/_kernels.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
