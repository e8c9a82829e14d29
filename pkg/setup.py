"""Build script for the optional compiled kernel extension.

The package works without the extension (a pure-numpy fallback is selected
at import time), so a missing compiler must not break installation.
"""

import sys

from setuptools import setup
from setuptools.command.build_ext import build_ext


class optional_build_ext(build_ext):
    """Degrade to the pure-Python kernels if the extension cannot build."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # noqa: BLE001
            self._warn(exc)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:  # noqa: BLE001
            self._warn(exc)

    @staticmethod
    def _warn(exc):
        print(
            f"WARNING: compiled kernels unavailable ({exc}); "
            "falling back to pure-numpy kernels",
            file=sys.stderr,
        )


def _extensions():
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools.extension import Extension
    except ImportError:
        return []
    ext = Extension(
        "dipwtv._kernels_cy",
        sources=["src/dipwtv/_kernels_cy.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    return cythonize([ext], compiler_directives={"language_level": "3"})


setup(
    ext_modules=_extensions(),
    cmdclass={"build_ext": optional_build_ext},
)
