"""Build script: compiles the hot-loop kernels when Cython and a C toolchain
are available. The package stays importable without the extension (a numpy
fallback is selected at import time), so a failed extension build is not fatal.
"""

import os

from setuptools import setup

try:
    if not os.path.exists("src/netcp/_kernels/_ckernels.pyx"):
        raise ImportError("extension source not present")
    import numpy
    from Cython.Build import cythonize
    from setuptools import Extension

    extensions = cythonize(
        [
            Extension(
                "netcp._kernels._ckernels",
                ["src/netcp/_kernels/_ckernels.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
            "initializedcheck": False,
        },
    )
except ImportError:
    extensions = []

setup(ext_modules=extensions)
