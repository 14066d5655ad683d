"""Build script for the optional compiled simulator kernel.

Without Cython or a C compiler the package installs pure Python and the
simulator falls back to ``groupsps.sim._kernel_py``.
"""

import os
import sys

from setuptools import setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler missing
            print(f"warning: compiled kernel not built ({exc}); using pure Python")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            print(f"warning: {ext.name} not built ({exc}); using pure Python")


def extensions():
    if os.environ.get("GROUPSPS_NO_EXT"):
        return []
    try:
        from Cython.Build import cythonize
    except ImportError:
        return []
    from setuptools import Extension
    # keep sin/cos as separate libm calls (no sincos fusion) so the compiled
    # kernel rounds exactly like the pure-Python one
    flags = [] if sys.platform == "win32" else ["-fno-builtin-sin", "-fno-builtin-cos"]
    ext = Extension("groupsps.sim._kernel", ["src/groupsps/sim/_kernel.pyx"], extra_compile_args=flags)
    return cythonize([ext], language_level=3, quiet=True)


setup(ext_modules=extensions(), cmdclass={"build_ext": OptionalBuildExt})
