import os

from setuptools import Extension, setup

ext_modules = []
if not os.environ.get("SPLITSENSE_NO_EXT"):
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "splitsense.kernels._convops",
                    ["src/splitsense/kernels/_convops.pyx"],
                    extra_compile_args=["-O3"],
                )
            ],
            language_level="3",
        )
    except ImportError:
        # No Cython at build time: install pure-python kernels only.
        ext_modules = []

setup(ext_modules=ext_modules)
