from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # sdist without Cython: pure-Python fallback only
    cythonize = None

extensions = [
    Extension(
        "gasket_zrp._kmc",
        ["src/gasket_zrp/_kmc.pyx"],
        # no -ffast-math / -march=native: the compiled loop must round exactly like the fallback
        extra_compile_args=["-O3"],
        optional=True,
    )
]

setup(
    ext_modules=cythonize(extensions, compiler_directives={"language_level": "3"})
    if cythonize is not None
    else [],
)
