"""Build script: compiles the optional native kernels when Cython is present.

The package is fully functional without the extension (a numpy reference
implementation is selected at import time), so a missing compiler or Cython
just means the pure-Python path is used.
"""

from setuptools import Extension, setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "sepnls._kernels._native",
                ["src/sepnls/_kernels/_native.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level="3",
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
