import numpy as np
from setuptools import Extension, setup
from Cython.Build import cythonize

extensions = cythonize(
    [
        Extension(
            "fogfl.kernels._compiled",
            sources=["src/fogfl/kernels/_compiled.pyx"],
            include_dirs=[np.get_include()],
            define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            extra_compile_args=["-O3"],
        )
    ],
    language_level=3,
)

setup(ext_modules=extensions)
