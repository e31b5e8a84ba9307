"""Shared numba helpers: seeding of numba's internal generator and stable draws."""
from __future__ import annotations

import numba
import numpy as np


@numba.njit(cache=True)
def nb_seed(seed):
    np.random.seed(seed)


def seed_from(rng: np.random.Generator) -> None:
    """Seed numba's generator from a numpy Generator (deterministic per stream)."""
    nb_seed(int(rng.integers(0, 2**32 - 1)))


@numba.njit(cache=True)
def nb_positive_stable(beta):
    u = np.random.random()
    while u == 0.0:
        u = np.random.random()
    th = np.pi * u
    e = np.random.standard_exponential()
    a = np.sin((1.0 - beta) * th) * np.sin(beta * th) ** (beta / (1.0 - beta)) / np.sin(th) ** (1.0 / (1.0 - beta))
    return (a / e) ** ((1.0 - beta) / beta)


@numba.njit(cache=True)
def nb_sub_length(ell, c, beta, kappa):
    """S-increment over inner length ell for kappa*l + c*l**beta exponents."""
    out = kappa * ell
    if c > 0.0 and ell > 0.0:
        out += (c * ell) ** (1.0 / beta) * nb_positive_stable(beta)
    return out


def exponent_params(exponent) -> tuple[float, float, float]:
    """(c, beta, kappa) for kernels that support stable and drift exponents."""
    if exponent.kind == "stable":
        return exponent.c, exponent.beta, 0.0
    if exponent.kind == "drift":
        return 0.0, 0.5, exponent.kappa
    raise NotImplementedError("batch kernels support stable and drift exponents; "
                              "use the path-based operations for general tails")
