"""Build script for the optional compiled kernel extension.

The package is fully functional without the extension (a numpy fallback is
selected at import time), so the build is marked optional and any compiler
failure degrades gracefully to the pure-Python install.
"""

from setuptools import Extension, setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize

    ext = Extension(
        "fractokit.kernels._fast",
        sources=["src/fractokit/kernels/_fast.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        # -ffp-contract=off keeps float results bit-identical to the numpy
        # fallback (no fused multiply-add reassociation).
        extra_compile_args=["-O3", "-ffp-contract=off"],
        optional=True,
    )
    ext_modules = cythonize([ext], language_level=3)
except ImportError:
    pass

setup(ext_modules=ext_modules)
