# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled exact samplers.

Mirror of ``_pysampler`` on 128-bit unsigned integers. Word consumption order
is identical, so a generator state yields the same draws on either backend.
Callers guarantee the parameter bounds checked by ``fits_laplace`` and
``fits_gaussian``. The few steps that could still overflow (astronomically
long Bernoulli runs, huge Laplace candidates) are handed back to the Python
kernel at the exact point reached, without consuming extra words.
"""

from math import isqrt

import numpy as np

cimport numpy as cnp
from cpython.pycapsule cimport PyCapsule_GetPointer
from libc.stdint cimport int64_t, uint64_t
from numpy.random cimport bitgen_t

from safetab.noise import _pysampler

cnp.import_array()

cdef extern from *:
    """
    typedef unsigned __int128 u128;
    static inline int u128_mul_overflow(u128 a, u128 b, u128 *out) {
        return __builtin_mul_overflow(a, b, out);
    }
    static inline int u128_bit_length(u128 x) {
        uint64_t hi = (uint64_t)(x >> 64), lo = (uint64_t)x;
        if (hi) return 128 - __builtin_clzll(hi);
        if (lo) return 64 - __builtin_clzll(lo);
        return 0;
    }
    """
    ctypedef unsigned long long u128
    int u128_mul_overflow(u128 a, u128 b, u128 *out) nogil
    int u128_bit_length(u128 x) nogil

# den * k stays below 2**128 while den < 2**100 and k < 2**27
cdef uint64_t K_LIMIT = (<uint64_t>1) << 27
cdef u128 ONE = 1


cdef object _to_py(u128 x):
    return (int(<uint64_t>(x >> 64)) << 64) | int(<uint64_t>x)


cdef u128 _from_py(object x) except? 0:
    return ((<u128>(<uint64_t>(x >> 64))) << 64) | (<u128>(<uint64_t>(x & 0xFFFFFFFFFFFFFFFF)))


cdef class _Stream:
    cdef bitgen_t *rng
    cdef object bitgen

    def __cinit__(self, bitgen):
        self.bitgen = bitgen
        self.rng = <bitgen_t *> PyCapsule_GetPointer(bitgen.capsule, "BitGenerator")

    cdef inline uint64_t word(self):
        return self.rng.next_uint64(self.rng.state)

    cdef u128 uniform_below(self, u128 bound):
        cdef int nbits
        cdef u128 mask, x
        if bound <= 1:
            return 0
        nbits = u128_bit_length(bound - 1)
        mask = ((ONE << nbits) - 1) if nbits < 128 else ~(<u128>0)
        while True:
            x = self.word()
            if nbits > 64:
                x |= (<u128>self.word()) << 64
            x &= mask
            if x < bound:
                return x

    cdef int bernoulli_exp_unit(self, u128 num, u128 den) except -1:
        cdef uint64_t k = 1
        cdef u128 dk
        while True:
            if k >= K_LIMIT or u128_mul_overflow(den, k, &dk):
                return 1 if _pysampler.bernoulli_exp_unit(
                    _to_py(num), _to_py(den), self.bitgen, int(k)) else 0
            if self.uniform_below(dk) < num:
                k += 1
            else:
                return <int>(k & 1)

    cdef int bernoulli_exp(self, u128 num, u128 den) except -1:
        while num > den:
            if not self.bernoulli_exp_unit(1, 1):
                return 0
            num -= den
        return self.bernoulli_exp_unit(num, den)

    cdef u128 geometric_exp(self, u128 s, u128 t) except? 0:
        cdef u128 u, v = 0
        while True:
            u = self.uniform_below(t)
            if self.bernoulli_exp(u, t):
                break
        while self.bernoulli_exp_unit(1, 1):
            v += 1
        return (u + t * v) // s

    cdef int64_t laplace(self, u128 num, u128 den) except? -1:
        cdef u128 a = self.geometric_exp(den, num)
        cdef u128 b = self.geometric_exp(den, num)
        return <int64_t>a - <int64_t>b

    cdef int64_t gaussian(self, u128 num, u128 den, u128 t, u128 den2) except? -1:
        cdef int64_t y
        cdef u128 p, a, dt
        cdef int ok
        while True:
            y = self.laplace(t, 1)
            dt = den * t
            if u128_mul_overflow(<u128>(y if y >= 0 else -y), dt, &p) or (
                (p - num if p >= num else num - p) >> 64
            ):
                ok = _pysampler.gaussian_accept(
                    y, _to_py(num), _to_py(den), _to_py(t), self.bitgen)
            else:
                a = p - num if p >= num else num - p
                ok = self.bernoulli_exp(a * a, den2)
            if ok:
                return y


def fits_laplace(num, den):
    return 0 < num < 2**63 and 0 < den < 2**63


def fits_gaussian(num, den):
    if not (0 < num < 2**64 and 0 < den < 2**64):
        return False
    t = isqrt(num // den) + 1
    return t < 2**62 and 2 * num * den * t * t < 2**100


# The bit generator lock is not taken: the Python fallback path calls
# random_raw(), which acquires it itself. A RandomSource must not be shared
# between threads.

def discrete_laplace(num, den, bitgen):
    cdef _Stream st = _Stream(bitgen)
    return int(st.laplace(_from_py(num), _from_py(den)))


def discrete_laplace_many(num, den, bitgen, Py_ssize_t size):
    cdef _Stream st = _Stream(bitgen)
    out = np.empty(size, dtype=np.int64)
    cdef int64_t[::1] view = out
    cdef u128 n = _from_py(num), d = _from_py(den)
    cdef Py_ssize_t i
    for i in range(size):
        view[i] = st.laplace(n, d)
    return out


def discrete_gaussian(num, den, bitgen):
    cdef _Stream st = _Stream(bitgen)
    t = isqrt(num // den) + 1
    return int(st.gaussian(_from_py(num), _from_py(den), _from_py(t),
                           _from_py(2 * num * den * t * t)))


def discrete_gaussian_many(num, den, bitgen, Py_ssize_t size):
    cdef _Stream st = _Stream(bitgen)
    out = np.empty(size, dtype=np.int64)
    cdef int64_t[::1] view = out
    t = isqrt(num // den) + 1
    cdef u128 n = _from_py(num), d = _from_py(den), tt = _from_py(t)
    cdef u128 den2 = _from_py(2 * num * den * t * t)
    cdef Py_ssize_t i
    for i in range(size):
        view[i] = st.gaussian(n, d, tt, den2)
    return out
