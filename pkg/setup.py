"""Build script for the optional compiled kernel extension.

The package works without the extension (pure-numpy fallback); set
MOTIONWEAVE_PURE_PYTHON=1 to skip compilation entirely.
"""

import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("MOTIONWEAVE_PURE_PYTHON") != "1":
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "motionweave.kernels._ckernels",
                    ["src/motionweave/kernels/_ckernels.pyx"],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
