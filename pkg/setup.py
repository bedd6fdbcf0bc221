"""Build script for the optional Cython fast-kernel extension.

The package works without the extension (a pure numpy fallback is selected at
import time), so the build is marked optional and any compiler failure
degrades to a source-only install.
"""

from setuptools import Extension, setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize

    ext = Extension(
        "deepfbsde.autodiff._fastkernels",
        ["src/deepfbsde/autodiff/_fastkernels.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        optional=True,
    )
    ext_modules = cythonize(
        [ext],
        compiler_directives={
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
            "language_level": 3,
        },
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
