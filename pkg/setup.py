"""Build script for the compiled kernel extension.

The package works without the extension (a numpy fallback is selected at
import time), so a failed compile only costs speed on small batches.
"""

import sys

from Cython.Build import cythonize
from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext

extensions = [
    Extension(
        "rulforge.kernels._ckernels",
        sources=["src/rulforge/kernels/_ckernels.pyx"],
    )
]


class OptionalBuildExt(build_ext):
    """Compile if possible; a broken toolchain is not an install failure."""

    def run(self):
        try:
            super().run()
        except Exception as exc:
            print(f"skipping compiled kernels ({exc}); numpy fallback applies",
                  file=sys.stderr)


setup(
    ext_modules=cythonize(extensions, language_level=3),
    cmdclass={"build_ext": OptionalBuildExt},
)
