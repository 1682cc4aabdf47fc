from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    extensions = cythonize(
        [
            Extension(
                "renlab._pathcore",
                ["src/renlab/_pathcore.pyx"],
                optional=True,
            )
        ],
        language_level=3,
    )
except ImportError:
    # Pure-Python fallback in renlab/backend.py takes over.
    extensions = []

setup(ext_modules=extensions)
