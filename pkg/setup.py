import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

if cythonize is not None:
    # -ffp-contract=off keeps the C kernels bit-compatible with the NumPy
    # fallback (no fused multiply-add reassociation).
    ext_modules = cythonize(
        [
            Extension(
                "meppflow._kernels",
                ["src/meppflow/_kernels.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3", "-ffp-contract=off"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
else:
    # Pure-Python install still works; the package falls back to the
    # NumPy kernels at import time.
    ext_modules = []

setup(ext_modules=ext_modules)
