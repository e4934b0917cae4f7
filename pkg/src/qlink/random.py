"""Seeded random objects used by synthetic channels and test panels."""

from __future__ import annotations

import numpy as np

from .tensor import DensityOperator, HilbertFactorization, StateVector

__all__ = [
    "haar_unitary",
    "random_state_vector",
    "random_density_matrix",
    "random_hermitian",
]


def haar_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed unitary via QR of a complex Gaussian matrix."""
    z = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    q, r = np.linalg.qr(z)
    # fix the phase ambiguity of QR so the distribution is exactly Haar
    d = np.diagonal(r)
    return q * (d / np.abs(d))


def random_state_vector(space, rng: np.random.Generator) -> StateVector:
    if not isinstance(space, HilbertFactorization):
        space = HilbertFactorization(tuple(space))
    z = rng.normal(size=space.total) + 1j * rng.normal(size=space.total)
    return StateVector(z / np.linalg.norm(z), space)


def random_density_matrix(space, rng: np.random.Generator, rank: int | None = None) -> DensityOperator:
    """Full-rank (or fixed-rank) random density matrix, Hilbert-Schmidt style."""
    if not isinstance(space, HilbertFactorization):
        space = HilbertFactorization(tuple(space))
    d = space.total
    r = d if rank is None else int(rank)
    g = rng.normal(size=(d, r)) + 1j * rng.normal(size=(d, r))
    m = g @ g.conj().T
    return DensityOperator(m / np.trace(m).real, space)


def random_hermitian(dim: int, rng: np.random.Generator) -> np.ndarray:
    z = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return (z + z.conj().T) / 2
