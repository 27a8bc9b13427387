"""Build the optional Cython kernels.

The package works without them: ``cybertwin.kernels`` falls back to the
pure-Python implementation when the extension is not importable.
"""
import os

from setuptools import Extension, setup

ext_modules = []
if not os.environ.get("CYBERTWIN_NO_EXT"):
    try:
        from Cython.Build import cythonize
    except ImportError:
        cythonize = None
    if cythonize is not None:
        ext_modules = cythonize(
            [
                Extension(
                    "cybertwin._ckernels",
                    ["src/cybertwin/_ckernels.pyx"],
                    # bit-identical floats with the Python fallback
                    extra_compile_args=["-O2", "-ffp-contract=off"],
                )
            ],
            compiler_directives={
                "language_level": "3",
                "boundscheck": False,
                "wraparound": False,
                "cdivision": True,
            },
        )

setup(ext_modules=ext_modules)
