"""Optional compiled kernels. Without Cython or a compiler the package still
installs and runs on the pure-Python kernels."""

import os

from setuptools import setup

ext_modules = []
if not os.environ.get("RLVAE_NO_EXT"):
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            ["src/rlvae/_kernels/_ckernels.pyx"],
            compiler_directives={"language_level": 3},
            quiet=True,
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
