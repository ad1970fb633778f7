import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

# -ffp-contract=off: the compiled loop must be bit-identical to the pure-Python
# fallback, so the compiler may not fuse multiply-adds.
ext = Extension(
    "theorylab._kernels._speedups",
    ["src/theorylab/_kernels/_speedups.pyx"],
    include_dirs=[np.get_include()],
    extra_compile_args=["-O2", "-ffp-contract=off"],
    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
)

setup(ext_modules=cythonize([ext], language_level="3"))
