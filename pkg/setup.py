import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

ext_modules = [
    Extension(
        name="buffgraph._kernels",
        sources=["src/buffgraph/_kernels.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=["-O3", "-fopenmp"],
        extra_link_args=["-fopenmp"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        # the pure-Python kernels take over when the compiler is unavailable
        optional=True,
    ),
]

setup(
    ext_modules=cythonize(ext_modules, language_level="3"),
)
