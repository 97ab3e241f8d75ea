"""Build script for the optional compiled hit-and-run kernel.

The package is fully functional without the extension (a NumPy fallback is
selected at import time); the compiled kernel just makes the polytope walk
much faster.
"""

import numpy
from setuptools import Extension, setup
from Cython.Build import cythonize

extensions = [
    Extension(
        "medianmech._hitrun",
        ["src/medianmech/_hitrun.pyx"],
        include_dirs=[numpy.get_include()],
        extra_compile_args=["-O3"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
]

setup(ext_modules=cythonize(extensions, language_level=3))
