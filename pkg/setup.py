"""Build script: compiles the optional fixed-point averaging kernel.

The compiled extension is a pure speedup; if Cython or a C compiler is
unavailable the package falls back to the numpy implementation selected
at import time in consim._kernels.
"""

from setuptools import Extension, setup

extensions = []
try:
    from Cython.Build import cythonize

    extensions = cythonize(
        [
            Extension(
                "consim._kernels._avg_cy",
                ["src/consim/_kernels/_avg_cy.pyx"],
                optional=True,
            )
        ],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )
except ImportError:
    pass

setup(ext_modules=extensions)
