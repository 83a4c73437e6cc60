"""Build glue for the optional compiled kernels.

The package is pure Python plus one Cython extension
(libsift._kernels._core).  Set LIBSIFT_PURE=1 to skip compilation and
run on the NumPy fallback only.
"""
import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("LIBSIFT_PURE") != "1":
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "libsift._kernels._core",
                    ["src/libsift/_kernels/_core.pyx"],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        # no Cython at build time: install the pure-Python package
        ext_modules = []

setup(ext_modules=ext_modules)
