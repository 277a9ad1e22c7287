"""Shared numerical kernels: guarded Cholesky factorisation, PSD solves,
finite-difference gradients and reproducible random streams.

Everything in here is deterministic for fixed inputs; covariance code and
optimisers build on these primitives instead of calling numpy/scipy directly
so that jitter policy and RNG seeding stay in one place.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, cholesky

__all__ = [
    "NotPositiveDefinite",
    "DimensionMismatch",
    "NonFiniteValue",
    "CholFactor",
    "cholesky_psd",
    "logdet",
    "solve_psd",
    "fd_gradient",
    "RngStream",
]

# Jitter escalates by factors of ten; one failed clean attempt plus seven
# jittered attempts before giving up.
_JITTER_STEPS = 7


class NotPositiveDefinite(Exception):
    """Matrix could not be factorised even after jitter escalation."""


class DimensionMismatch(Exception):
    """Operands have incompatible shapes."""


class NonFiniteValue(Exception):
    """A NaN or infinity appeared where a finite value is required."""


@dataclass(frozen=True)
class CholFactor:
    """Lower-triangular Cholesky factor together with the jitter that was
    added to the diagonal to obtain it (0.0 when the clean factorisation
    succeeded)."""

    lower: np.ndarray
    jitter: float

    @property
    def n(self) -> int:
        return self.lower.shape[0]


def default_base_jitter(a: np.ndarray) -> float:
    """Base jitter scaled to the matrix: 1e-10 times the mean diagonal."""
    d = float(np.mean(np.diag(a)))
    return 1e-10 * (d if d > 0.0 else 1.0)


def cholesky_psd(a: np.ndarray, base_jitter: float | None = None) -> CholFactor:
    """Factor a symmetric matrix as L L^T, adding escalating diagonal jitter.

    Tries jitter c in {0, b, 10 b, ..., 1e6 b} where b is `base_jitter`
    (default: 1e-10 * mean diagonal) and returns the factor for the smallest
    c that succeeds.

    Raises
    ------
    NotPositiveDefinite
        If every attempt fails.
    NonFiniteValue
        If `a` contains NaN or infinity.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NonFiniteValue("matrix contains non-finite entries")
    if base_jitter is None:
        base_jitter = default_base_jitter(a)

    ladder = [0.0]
    if base_jitter > 0.0:
        ladder += [base_jitter * 10.0**i for i in range(_JITTER_STEPS)]
    eye = np.eye(a.shape[0])
    for c in ladder:
        try:
            low = cholesky(a if c == 0.0 else a + c * eye,
                           lower=True, check_finite=False)
        except np.linalg.LinAlgError:
            continue
        return CholFactor(lower=low, jitter=c)
    raise NotPositiveDefinite(
        f"factorisation failed up to jitter {ladder[-1]:.3e}")


def logdet(factor: CholFactor) -> float:
    """log-determinant of the factored matrix, 2 * sum(log diag(L))."""
    return 2.0 * float(np.sum(np.log(np.diag(factor.lower))))


def solve_psd(factor: CholFactor, b: np.ndarray) -> np.ndarray:
    """Solve A x = b given the Cholesky factor of A (vector or matrix b)."""
    b = np.asarray(b, dtype=float)
    if b.shape[0] != factor.n:
        raise DimensionMismatch(
            f"rhs has leading dimension {b.shape[0]}, factor is {factor.n}")
    return cho_solve((factor.lower, True), b, check_finite=False)


def fd_gradient(f, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central finite-difference gradient of a scalar function.

    Used as the reference when validating analytic gradients; O(2 D) function
    evaluations with stepsize `h` per coordinate.
    """
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        hi = float(f(x + e))
        lo = float(f(x - e))
        if not (np.isfinite(hi) and np.isfinite(lo)):
            raise NonFiniteValue(f"objective non-finite near coordinate {i}")
        g[i] = (hi - lo) / (2.0 * h)
    return g


class RngStream:
    """Reproducible random stream keyed by (seed, stream_id).

    Thin wrapper over numpy's PCG64 generator seeded through SeedSequence so
    that distinct stream ids give statistically independent streams while the
    same pair always replays the same draws.  Consumers own their stream;
    nothing in the package touches numpy's global RNG.
    """

    def __init__(self, seed: int, stream_id: int = 0):
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))
        self._gen = np.random.Generator(np.random.PCG64(ss))

    def uniform(self, low=0.0, high=1.0, size=None):
        return self._gen.uniform(low, high, size=size)

    def standard_normal(self, size=None):
        return self._gen.standard_normal(size=size)

    def integers(self, low, high=None, size=None):
        return self._gen.integers(low, high, size=size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def __repr__(self) -> str:  # pragma: no cover
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"
