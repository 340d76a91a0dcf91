"""Build script for the optional compiled stepping kernel.

The package works without the extension: godelsim falls back to the
pure-Python twin of the kernel at import time. Building in place:

    python setup.py build_ext --inplace
"""

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

if cythonize is not None:
    extensions = cythonize(
        [
            Extension(
                "godelsim._kernel",
                sources=["src/godelsim/_kernel.pyx"],
                # -ffp-contract=off (no FMA contraction) and
                # -fno-builtin-sincos (glibc sincos rounds cos differently
                # than cos on rare arguments) keep the compiled kernel
                # bit-compatible with the pure-Python twin.
                extra_compile_args=["-O3", "-ffp-contract=off", "-fno-builtin"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
else:
    extensions = []

setup(ext_modules=extensions)
