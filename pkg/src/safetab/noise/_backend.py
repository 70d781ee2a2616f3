"""Kernel selection: compiled ``_csampler`` when importable, else ``_pysampler``.

Set ``SAFETAB_PURE_PYTHON=1`` to force the reference kernel. Parameters too
large for the compiled kernel's 128-bit arithmetic go to the reference kernel
regardless; both read the same word stream, so draws do not depend on which
kernel ran.
"""

import os

from safetab.noise import _pysampler

_csampler = None
if not os.environ.get("SAFETAB_PURE_PYTHON"):
    try:
        from safetab.noise import _csampler
    except ImportError:  # extension not built
        _csampler = None

BACKEND = "cython" if _csampler is not None else "python"


def available_backends() -> list[str]:
    return ["python"] + (["cython"] if _csampler is not None else [])


def _pick(backend, fits, num, den):
    if backend is None:
        backend = BACKEND
    if backend == "cython":
        if _csampler is None:
            raise RuntimeError("compiled sampler is not available")
        if fits(num, den):
            return _csampler
        return _pysampler
    if backend == "python":
        return _pysampler
    raise ValueError(f"unknown backend {backend!r}")


def laplace(num: int, den: int, bitgen, size=None, backend=None):
    kern = _pick(backend, _csampler.fits_laplace if _csampler else None, num, den)
    if size is None:
        return kern.discrete_laplace(num, den, bitgen)
    return kern.discrete_laplace_many(num, den, bitgen, size)


def gaussian(num: int, den: int, bitgen, size=None, backend=None):
    kern = _pick(backend, _csampler.fits_gaussian if _csampler else None, num, den)
    if size is None:
        return kern.discrete_gaussian(num, den, bitgen)
    return kern.discrete_gaussian_many(num, den, bitgen, size)
