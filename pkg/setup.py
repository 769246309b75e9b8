import os

import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

extensions = [
    Extension(
        "mbclust._agglo_ext",
        ["src/mbclust/_agglo_ext.pyx"],
        include_dirs=[np.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        # keep multiply-adds unfused so results match the numpy fallback bit for bit
        extra_compile_args=["-O2", "-ffp-contract=off"],
        # a failed compile leaves the numpy kernel in charge instead of aborting the install
        optional=True,
    )
]

if os.environ.get("MBCLUST_NO_EXT"):
    extensions = []

setup(ext_modules=cythonize(extensions, compiler_directives={"language_level": "3"}))
