"""Exact integer noise for the base mechanisms, with PMFs, tails and MOEs."""

from safetab.noise._backend import BACKEND, available_backends
from safetab.noise.distributions import (
    GaussianScale,
    GeometricScale,
    RandomSource,
    dgauss_interval_mass,
    dgauss_pmf,
    epsilon_from_moe,
    geometric_interval_mass,
    geometric_pmf,
    geometric_tail,
    moe_dgauss,
    moe_geometric,
    rational_scale,
    rho_from_moe,
    sample_dgauss,
    sample_dgauss_many,
    sample_geometric,
    sample_geometric_many,
)

__all__ = [
    "BACKEND",
    "GaussianScale",
    "GeometricScale",
    "RandomSource",
    "available_backends",
    "dgauss_interval_mass",
    "dgauss_pmf",
    "epsilon_from_moe",
    "geometric_interval_mass",
    "geometric_pmf",
    "geometric_tail",
    "moe_dgauss",
    "moe_geometric",
    "rational_scale",
    "rho_from_moe",
    "sample_dgauss",
    "sample_dgauss_many",
    "sample_geometric",
    "sample_geometric_many",
]
