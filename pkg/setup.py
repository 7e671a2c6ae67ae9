import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("FHE_NO_EXT") != "1":
    try:
        import numpy
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "fheig._kernels",
                    ["src/fheig/_kernels.pyx"],
                    include_dirs=[numpy.get_include()],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        # no Cython / numpy at build time: ship pure python, the package
        # falls back to the numpy kernels at import
        ext_modules = []

setup(ext_modules=ext_modules)
