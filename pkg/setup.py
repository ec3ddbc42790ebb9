import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

extensions = []
if cythonize is not None:
    extensions = cythonize(
        [
            Extension(
                "mrfseg._speedups",
                sources=["src/mrfseg/_speedups.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )

# The compiled module is optional: mrfseg.backends falls back to the pure
# NumPy kernels when the extension is absent.
setup(ext_modules=extensions)
