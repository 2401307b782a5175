import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pure-Python install, kernel falls back at import
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "rlsoccer._kernel",
                ["src/rlsoccer/_kernel.pyx"],
                include_dirs=[np.get_include()],
                # no fast-math / FMA: results must match the Python kernel bit for bit
                extra_compile_args=["-O2", "-ffp-contract=off", "-fno-fast-math"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
