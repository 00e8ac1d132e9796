"""Build script for the optional compiled augmentation kernels.

The package is fully functional without the extension (a numpy fallback is
selected at import time); building it just makes per-image augmentation
faster. `optional=True` keeps installation working on hosts without a C
toolchain.
"""

from setuptools import setup

try:
    import numpy
    from Cython.Build import cythonize
    from setuptools.extension import Extension

    extensions = cythonize(
        [
            Extension(
                "labelrefinery._kernels_native",
                ["src/labelrefinery/_kernels_native.pyx"],
                include_dirs=[numpy.get_include()],
                # -ffp-contract=off: forbid FMA fusion so the compiled kernels
                # round exactly like the float32 numpy fallback.
                extra_compile_args=["-O3", "-ffp-contract=off"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                optional=True,
            )
        ],
        language_level="3",
    )
except ImportError:
    extensions = []

setup(ext_modules=extensions)
