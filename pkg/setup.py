"""Build script: compiles the PSOR kernel extension when Cython is available.

The package works without the extension (a pure-Python kernel with identical
arithmetic is selected at import), so the build degrades gracefully instead of
failing on machines without a C toolchain.
"""
from setuptools import setup

ext_modules = []
try:
    import numpy as np
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "capexmfg._psor",
                ["src/capexmfg/_psor.pyx"],
                include_dirs=[np.get_include()],
                # -ffp-contract=off keeps the C arithmetic bit-identical to the
                # pure-Python fallback (no FMA contraction).
                extra_compile_args=["-O3", "-ffp-contract=off"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
