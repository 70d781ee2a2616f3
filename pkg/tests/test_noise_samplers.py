import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from safetab.errors import InvalidParameterError
from safetab.noise import (
    BACKEND,
    GaussianScale,
    GeometricScale,
    RandomSource,
    available_backends,
    dgauss_pmf,
    epsilon_from_moe,
    geometric_pmf,
    rho_from_moe,
    sample_dgauss,
    sample_dgauss_many,
    sample_geometric,
    sample_geometric_many,
)
from safetab.noise import _pysampler

COVERAGE_N = 10**5
FIDELITY_N = 10**6


def empirical_tv(draws: np.ndarray, pmf, radius: int, width: int = 1) -> float:
    """TV distance between the draws and ``pmf`` on [-radius, radius] plus outside mass.

    With ``width > 1`` both distributions are first pooled into bins of that
    many consecutive integers.
    """
    x = np.arange(-radius, radius + 1)
    inside = (draws >= -radius) & (draws <= radius)
    emp = np.bincount((draws[inside] + radius) // width, minlength=(2 * radius) // width + 1)
    p = np.bincount((x + radius) // width, weights=pmf(x))
    return 0.5 * (np.abs(emp / draws.size - p).sum() + (1 - inside.mean()) + max(0.0, 1 - p.sum()))


# --- random source --------------------------------------------------------------


def test_random_source_rejects_bad_seeds():
    for bad in (-1, 2**64, 1.5, "3"):
        with pytest.raises(InvalidParameterError):
            RandomSource(bad)


def test_derived_streams_depend_only_on_key():
    a1 = RandomSource.derive(5, 1, "US", "D00").bit_generator.random_raw(4)
    RandomSource.derive(5, 2, "US", "D00").bit_generator.random_raw(4)
    a2 = RandomSource.derive(5, 1, "US", "D00").bit_generator.random_raw(4)
    b = RandomSource.derive(5, 1, "US", "D01").bit_generator.random_raw(4)
    c = RandomSource.derive(6, 1, "US", "D00").bit_generator.random_raw(4)
    assert np.array_equal(a1, a2)
    assert not np.array_equal(a1, b)
    assert not np.array_equal(a1, c)


# --- basic contracts ------------------------------------------------------------


def test_geometric_same_seed_same_value(backend):
    s = GeometricScale(3)
    assert sample_geometric(s, RandomSource(11), backend=backend) == sample_geometric(
        s, RandomSource(11), backend=backend
    )
    a = sample_geometric_many(s, RandomSource(11), 500, backend=backend)
    assert np.array_equal(a, sample_geometric_many(s, RandomSource(11), 500, backend=backend))


def test_dgauss_same_seed_same_value(backend):
    s = GaussianScale(7)
    assert sample_dgauss(s, RandomSource(3), backend=backend) == sample_dgauss(s, RandomSource(3), backend=backend)


def test_geometric_tiny_scale_is_all_zero(backend):
    draws = sample_geometric_many(GeometricScale(0.01), RandomSource(0), 1000, backend=backend)
    assert np.all(draws == 0)


def test_samplers_return_python_ints():
    assert type(sample_geometric(GeometricScale(2), RandomSource(1))) is int
    assert type(sample_dgauss(GaussianScale(2), RandomSource(1))) is int


def test_geometric_mass_at_zero():
    s = GeometricScale(2)
    draws = sample_geometric_many(s, RandomSource(2024), FIDELITY_N)
    assert abs(np.mean(draws == 0) - geometric_pmf(0, s)) <= 0.003


def test_dgauss_mean_near_zero():
    draws = sample_dgauss_many(GaussianScale(1), RandomSource(2025), FIDELITY_N)
    assert abs(draws.mean()) <= 0.004


def test_dgauss_tail_below_continuous_bound():
    n = FIDELITY_N
    draws = sample_dgauss_many(GaussianScale(4), RandomSource(2026), n)
    q = 0.5 * math.erfc(4 / (2 * math.sqrt(2)))  # P[N(0,4) >= 4]
    margin = 3 * math.sqrt(q * (1 - q) / n)
    assert np.mean(draws >= 5) <= q + margin


def test_geometric_matches_variance(backend):
    b = 1.7
    n = 20_000 if backend == "python" else 200_000
    draws = sample_geometric_many(GeometricScale(b), RandomSource(9), n, backend=backend)
    q = math.exp(-1 / b)
    var = 2 * q / (1 - q) ** 2
    assert draws.var() == pytest.approx(var, rel=0.05)


@pytest.mark.parametrize("b", [Fraction(1, 3), Fraction(7, 2), 0.37, 25.0])
def test_geometric_small_sample_fidelity_python_backend(b):
    s = GeometricScale(b)
    draws = sample_geometric_many(s, RandomSource(4), 20_000, backend="python")
    r = math.ceil(10 * float(b)) + 2
    assert empirical_tv(draws, lambda x: geometric_pmf(x, s), r, width=math.ceil(r / 15)) < 0.03


@pytest.mark.parametrize("sigma2", [Fraction(1, 4), 2.5, Fraction(135, 16), 90.0])
def test_dgauss_small_sample_fidelity_python_backend(sigma2):
    s = GaussianScale(sigma2)
    draws = sample_dgauss_many(s, RandomSource(5), 20_000, backend="python")
    r = math.ceil(10 * s.sigma) + 2
    assert empirical_tv(draws, lambda x: dgauss_pmf(x, s), r, width=math.ceil(r / 15)) < 0.03


# --- backends -------------------------------------------------------------------


def test_backend_reported():
    assert BACKEND in available_backends()
    assert "python" in available_backends()


needs_cython = pytest.mark.skipif("cython" not in available_backends(), reason="extension not built")


@needs_cython
@pytest.mark.parametrize(
    "scale",
    [Fraction(1, 3), 2, 2.3364, Fraction(10**6, 7), 1e-3, Fraction(2**64 + 1, 2**40)],
)
def test_backends_agree_geometric(scale):
    s = GeometricScale(scale)
    a = sample_geometric_many(s, RandomSource(77), 3000, backend="python")
    b = sample_geometric_many(s, RandomSource(77), 3000, backend="cython")
    assert np.array_equal(a, b)


@needs_cython
@pytest.mark.parametrize("scale", [Fraction(2**70 + 1, 3), Fraction(3, 2**80)])
def test_backends_agree_single_draws_beyond_int64(scale):
    r1, r2 = RandomSource(5), RandomSource(5)
    for _ in range(20):
        a = sample_geometric(GeometricScale(scale), r1, backend="python")
        assert a == sample_geometric(GeometricScale(scale), r2, backend="cython")


@needs_cython
@pytest.mark.parametrize(
    "sigma2",
    [Fraction(1, 8), 1, 9.375, Fraction(135, 16), 7000.5, Fraction(3**40, 2**5), Fraction(1, 2**70)],
)
def test_backends_agree_dgauss(sigma2):
    s = GaussianScale(sigma2)
    a = sample_dgauss_many(s, RandomSource(78), 2000, backend="python")
    b = sample_dgauss_many(s, RandomSource(78), 2000, backend="cython")
    assert np.array_equal(a, b)


@needs_cython
@settings(max_examples=40, deadline=None)
@given(
    num=st.integers(1, 10**12),
    den=st.integers(1, 10**12),
    seed=st.integers(0, 2**32),
)
def test_backends_agree_on_arbitrary_rationals(num, den, seed):
    for scale_cls, sampler in ((GeometricScale, sample_geometric_many), (GaussianScale, sample_dgauss_many)):
        s = scale_cls(Fraction(num, den))
        a = sampler(s, RandomSource(seed), 20, backend="python")
        b = sampler(s, RandomSource(seed), 20, backend="cython")
        assert np.array_equal(a, b)


@needs_cython
def test_backends_leave_generator_in_same_state():
    s = GaussianScale(Fraction(5, 3))
    r1, r2 = RandomSource(1), RandomSource(1)
    sample_dgauss_many(s, r1, 100, backend="python")
    sample_dgauss_many(s, r2, 100, backend="cython")
    assert r1.bit_generator.random_raw() == r2.bit_generator.random_raw()


def test_unknown_backend_rejected():
    with pytest.raises(ValueError):
        sample_geometric(GeometricScale(1), RandomSource(0), backend="fortran")


# --- reference kernel primitives ------------------------------------------------


def test_uniform_below_covers_range_uniformly():
    bg = RandomSource(8).bit_generator
    draws = [_pysampler.uniform_below(bg, 6) for _ in range(60_000)]
    counts = np.bincount(draws, minlength=6)
    assert counts.size == 6
    assert np.all(np.abs(counts / 60_000 - 1 / 6) < 0.01)


def test_uniform_below_handles_multiword_bounds():
    bg = RandomSource(8).bit_generator
    bound = 3 * 2**100 + 5
    for _ in range(200):
        assert 0 <= _pysampler.uniform_below(bg, bound) < bound


@pytest.mark.parametrize("num,den", [(1, 2), (1, 1), (3, 1), (7, 3)])
def test_bernoulli_exp_frequency(num, den):
    bg = RandomSource(num * 31 + den).bit_generator
    n = 40_000
    hits = sum(_pysampler.bernoulli_exp(num, den, bg) for _ in range(n))
    p = math.exp(-num / den)
    assert abs(hits / n - p) < 4 * math.sqrt(p * (1 - p) / n)


def test_bernoulli_exp_zero_is_certain():
    bg = RandomSource(0).bit_generator
    assert all(_pysampler.bernoulli_exp(0, 5, bg) for _ in range(100))


# --- statistical invariants -----------------------------------------------------

COVERAGE_THRESHOLD = 0.95 - 3 * math.sqrt(0.95 * 0.05 / COVERAGE_N)


@pytest.mark.invariant
@pytest.mark.slow
@pytest.mark.parametrize("moe", [6, 11, 50])
def test_geometric_moe_coverage(moe):
    s = GeometricScale.from_epsilon(epsilon_from_moe(moe))
    draws = sample_geometric_many(s, RandomSource(100 + moe), COVERAGE_N)
    assert np.mean(np.abs(draws) <= moe) >= COVERAGE_THRESHOLD


@pytest.mark.invariant
@pytest.mark.slow
@pytest.mark.parametrize("moe", [6, 11, 50])
def test_dgauss_moe_coverage(moe):
    s = GaussianScale.from_rho(rho_from_moe(moe))
    draws = sample_dgauss_many(s, RandomSource(200 + moe), COVERAGE_N)
    assert np.mean(np.abs(draws) <= moe) >= COVERAGE_THRESHOLD


@pytest.mark.invariant
@pytest.mark.slow
@pytest.mark.parametrize("b", [0.5, 2, 1 / epsilon_from_moe(11)])
def test_geometric_sampler_fidelity(b):
    s = GeometricScale(b)
    draws = sample_geometric_many(s, RandomSource(300), FIDELITY_N)
    assert empirical_tv(draws, lambda x: geometric_pmf(x, s), math.ceil(10 * b)) < 0.005


@pytest.mark.invariant
@pytest.mark.slow
@pytest.mark.parametrize("sigma2", [0.5, 4, 1 / (2 * rho_from_moe(11))])
def test_dgauss_sampler_fidelity(sigma2):
    s = GaussianScale(sigma2)
    draws = sample_dgauss_many(s, RandomSource(301), FIDELITY_N)
    assert empirical_tv(draws, lambda x: dgauss_pmf(x, s), math.ceil(10 * s.sigma)) < 0.005
