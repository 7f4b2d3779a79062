import os

import numpy as np
from setuptools import Extension, setup

# SSENCODER_PURE=1 skips the compiled kernels; the package then runs on the
# numpy fallback backend.
if os.environ.get("SSENCODER_PURE"):
    ext_modules = []
else:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "ssencoder._kernels._core",
                ["src/ssencoder/_kernels/_core.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
