import os

from setuptools import Extension, setup

# The compiled kernel core is optional: set TWOWEIGHT_NO_EXT=1 to skip it and
# run on the pure-numpy fallback selected at import time.
ext_modules = []
if not os.environ.get("TWOWEIGHT_NO_EXT"):
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "twoweight._kernels._core",
                    sources=["src/twoweight/_kernels/_core.pyx"],
                )
            ],
            compiler_directives={
                "language_level": 3,
                "boundscheck": False,
                "wraparound": False,
                "cdivision": True,
            },
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
