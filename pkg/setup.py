import numpy as np  # noqa: F401  (build requirement, keeps the include path consistent)
from Cython.Build import cythonize
from setuptools import Extension, setup

# No -ffast-math and no FMA contraction: the compiled loop must round exactly
# like the pure-Python fallback.
extensions = [
    Extension(
        "slipsim._kernel",
        ["src/slipsim/_kernel.pyx"],
        extra_compile_args=["-O2", "-ffp-contract=off", "-fno-fast-math"],
    )
]

setup(
    ext_modules=cythonize(
        extensions,
        compiler_directives={"language_level": "3"},
    )
)
