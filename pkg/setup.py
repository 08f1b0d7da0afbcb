import os

from setuptools import setup

ext_modules = []
# The extension is built for the machine it is installed on; set
# KGPOOL_PORTABLE=1 to drop -march=native when building redistributable wheels.
cflags = ["-O3", "-ffast-math"]
if not os.environ.get("KGPOOL_PORTABLE"):
    cflags.append("-march=native")
if not os.environ.get("KGPOOL_NO_EXT"):
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "kgpool._lstm_ext",
                    ["src/kgpool/_lstm_ext.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=cflags,
                    libraries=["m"],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
