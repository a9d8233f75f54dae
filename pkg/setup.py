"""Build script: compiles the optional accelerator extension.

The package works without the extension (a pure-numpy fallback is selected
at import time), so any failure to build it is non-fatal by design: install
with a plain `pip install -e . --no-build-isolation` and check
`linshadow.kernel_backend()` to see which core was picked up.
"""

from setuptools import Extension, setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "linshadow._kernels._core",
                ["src/linshadow/_kernels/_core.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
