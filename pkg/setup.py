from setuptools import Extension, setup
from Cython.Build import cythonize

extensions = [
    Extension(
        "trigad._ot",
        ["src/trigad/_ot.pyx"],
        extra_compile_args=["-O3"],
    ),
]

setup(
    ext_modules=cythonize(
        extensions,
        compiler_directives={
            "language_level": 3,
            "boundscheck": False,
            "wraparound": False,
            "initializedcheck": False,
            "cdivision": True,
        },
    ),
)
