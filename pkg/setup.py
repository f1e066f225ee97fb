"""Build script: compiles the optional timestamp-kernel extension.

The package is fully functional without the extension (a NumPy fallback is
selected at import time); the build therefore tolerates a missing compiler
or Cython and degrades to the pure-Python install.
"""

import warnings

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class optional_build_ext(build_ext):
    """Build the extension if possible, warn and continue otherwise."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler missing entirely
            warnings.warn(f"timestamp kernel extension not built ({exc}); "
                          "falling back to the NumPy implementation")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            warnings.warn(f"building {ext.name} failed ({exc}); "
                          "falling back to the NumPy implementation")


def extensions():
    try:
        import numpy
        from Cython.Build import cythonize
    except ImportError as exc:
        warnings.warn(f"Cython/NumPy unavailable ({exc}); skipping extension build")
        return []
    ext = Extension(
        "quasarbell.events._kernels",
        ["src/quasarbell/events/_kernels.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    return cythonize([ext], language_level=3)


setup(
    ext_modules=extensions(),
    cmdclass={"build_ext": optional_build_ext},
)
