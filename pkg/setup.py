"""Build script for the compiled update kernels.

The package works without the extension: ggmfit.backend falls back to the
pure-NumPy kernels in ggmfit._kernels_py when ggmfit._kernels is missing.
A failed compile therefore only prints a warning instead of aborting the
install.
"""

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class optional_build_ext(build_ext):
    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler missing, etc.
            self._skip(exc)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            self._skip(exc)

    @staticmethod
    def _skip(exc):
        print(f"WARNING: could not build ggmfit._kernels ({exc}); "
              "the pure-Python kernels will be used instead")


def extensions():
    try:
        import numpy as np
        from Cython.Build import cythonize
    except ImportError as exc:
        optional_build_ext._skip(exc)
        return []
    ext = Extension(
        "ggmfit._kernels",
        sources=["src/ggmfit/_kernels.pyx"],
        include_dirs=[np.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    return cythonize([ext], language_level=3)


setup(ext_modules=extensions(), cmdclass={"build_ext": optional_build_ext})
