import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    # The package still works without the compiled core: fbcqe.kernels falls
    # back to the pure numpy/scipy implementation at import time.
    cythonize = None

ext_modules = []
if cythonize is not None:
    ext_modules = cythonize(
        [
            Extension(
                "fbcqe._core",
                ["src/fbcqe/_core.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )

setup(ext_modules=ext_modules)
