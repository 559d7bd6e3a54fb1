"""Build the optional compiled simulation kernel.

Without Cython, or if compilation fails, the package installs without the
extension and the pure-Python engine is used.
"""

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

ext_modules = []
if cythonize is not None:
    ext_modules = cythonize(
        [
            Extension(
                "etc_lab.sim._lure_kernel",
                ["src/etc_lab/sim/_lure_kernel.pyx"],
                extra_compile_args=["-O3"],
                optional=True,
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
