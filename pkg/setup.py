import sys

import numpy as np
from setuptools import Extension, setup

# The compiled gridding kernels are an optional speedup: if Cython or a C
# compiler is unavailable the package falls back to the numpy implementation
# selected at import time (kreg.gridding).
ext_modules = []
try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "kreg.gridding._kernels",
                ["src/kreg/gridding/_kernels.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except Exception as exc:  # pragma: no cover - build-environment dependent
    print(f"kreg: skipping compiled gridding kernels ({exc})", file=sys.stderr)

setup(ext_modules=ext_modules)
