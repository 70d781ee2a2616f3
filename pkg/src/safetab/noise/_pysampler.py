"""Reference exact samplers driven by a raw 64-bit word stream.

Every function takes a numpy ``BitGenerator`` and only ever calls
``random_raw()`` on it.  The compiled kernel in ``_csampler`` consumes words in
exactly the same order, so the two backends produce identical draws for the
same generator state.

Parameters are positive integers: a discrete Laplace scale is ``num/den`` and
a discrete Gaussian variance is ``num/den``.
"""

from math import isqrt

import numpy as np

_WORD = 64


def uniform_below(bitgen, bound: int) -> int:
    """Uniform integer in ``[0, bound)`` by masked rejection."""
    if bound <= 1:
        if bound == 1:
            return 0
        raise ValueError(f"bound must be positive, got {bound}")
    nbits = (bound - 1).bit_length()
    nwords = (nbits + _WORD - 1) // _WORD
    mask = (1 << nbits) - 1
    while True:
        x = 0
        for i in range(nwords):
            x |= bitgen.random_raw() << (_WORD * i)
        x &= mask
        if x < bound:
            return x


def bernoulli(num: int, den: int, bitgen) -> bool:
    return uniform_below(bitgen, den) < num


def bernoulli_exp_unit(num: int, den: int, bitgen, k: int = 1) -> bool:
    """Bernoulli(exp(-num/den)) for ``0 <= num <= den``.

    ``k`` lets a caller resume the trial loop part way through.
    """
    while bernoulli(num, den * k, bitgen):
        k += 1
    return k % 2 == 1


def bernoulli_exp(num: int, den: int, bitgen) -> bool:
    """Bernoulli(exp(-num/den)) for any ``num >= 0``."""
    while num > den:
        if not bernoulli_exp_unit(1, 1, bitgen):
            return False
        num -= den
    return bernoulli_exp_unit(num, den, bitgen)


def geometric_exp(s: int, t: int, bitgen) -> int:
    """One-sided geometric: ``P(G = g)`` proportional to ``exp(-g * s / t)``.

    Draws X with ``P(X = x) ~ exp(-x / t)`` as ``U + t V`` (U a truncated
    geometric on ``[0, t)``, V geometric with ratio ``1/e``) and returns
    ``X // s``.
    """
    while True:
        u = uniform_below(bitgen, t)
        if bernoulli_exp(u, t, bitgen):
            break
    v = 0
    while bernoulli_exp_unit(1, 1, bitgen):
        v += 1
    return (u + t * v) // s


def discrete_laplace(num: int, den: int, bitgen) -> int:
    """Two-sided geometric with scale ``num/den``."""
    return geometric_exp(den, num, bitgen) - geometric_exp(den, num, bitgen)


def gaussian_accept(y: int, num: int, den: int, t: int, bitgen) -> bool:
    # exp(-(|y| - sigma2/t)^2 / (2 sigma2)) with sigma2 = num/den
    a = abs(y) * den * t - num
    return bernoulli_exp(a * a, 2 * num * den * t * t, bitgen)


def discrete_gaussian(num: int, den: int, bitgen) -> int:
    """Discrete Gaussian with variance ``num/den`` by Laplace rejection."""
    t = isqrt(num // den) + 1
    while True:
        y = discrete_laplace(t, 1, bitgen)
        if gaussian_accept(y, num, den, t, bitgen):
            return y


def discrete_laplace_many(num: int, den: int, bitgen, size: int) -> np.ndarray:
    return np.fromiter(
        (discrete_laplace(num, den, bitgen) for _ in range(size)),
        dtype=np.int64,
        count=size,
    )


def discrete_gaussian_many(num: int, den: int, bitgen, size: int) -> np.ndarray:
    return np.fromiter(
        (discrete_gaussian(num, den, bitgen) for _ in range(size)),
        dtype=np.int64,
        count=size,
    )
