"""Build script: compiles the planner's BFS core when Cython + a C++ toolchain
are available, otherwise installs with the pure-Python fallback only."""

from setuptools import Extension, setup

try:
    import numpy as np
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "sokotl.planner._core",
                ["src/sokotl/planner/_core.pyx"],
                include_dirs=[np.get_include()],
                language="c++",
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    ext_modules = []

try:
    setup(ext_modules=ext_modules)
except SystemExit:
    # no compiler on this host; the package still works via the fallback
    setup(ext_modules=[])
