"""Build the optional compiled kernels; fall back to pure Python if that fails."""

import logging
import os

from setuptools import setup
from setuptools.command.build_ext import build_ext

log = logging.getLogger("strongwork.setup")


class OptionalBuildExt(build_ext):
    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler missing, etc.
            log.warning("compiled kernels not built (%s); using the numpy fallback", exc)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            log.warning("failed to build %s (%s); using the numpy fallback", ext.name, exc)


def get_extensions():
    if os.environ.get("STRONGWORK_NO_EXT"):
        return []
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        return []
    ext = Extension(
        "strongwork._ladder",
        ["src/strongwork/_ladder.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
    )
    return cythonize([ext], compiler_directives={"language_level": "3"}, quiet=True)


setup(ext_modules=get_extensions(), cmdclass={"build_ext": OptionalBuildExt})
