import os

from setuptools import Extension, setup

ext_modules = []
if not os.environ.get("GPSSWARP_NO_EXT"):
    try:
        from Cython.Build import cythonize
    except ImportError:
        print("Cython not available; installing the pure-Python engine only")
    else:
        ext_modules = cythonize(
            [Extension("gpsswarp.kernel._cengine", ["src/gpsswarp/kernel/_cengine.pyx"], extra_compile_args=["-O3"])],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
