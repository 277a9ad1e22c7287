"""Covariance construction for multi-output Gaussian processes built by
convolving Gaussian smoothing kernels with shared white-noise latent
functions.

Each of the M outputs f_d is a sum over Q latent groups; convolving the
group's latent function (variance upsilon_q, length-scale precisions beta_q)
with the output's kernel (weight nu_{d,q}, precisions alpha_d) gives the
closed-form cross covariance

    Cov[f_d(x), f_d'(x')] = sum_q nu_{d,q} nu_{d',q} upsilon_q
        * (2 pi)^(-n/2) |P|^(-1/2) exp(-1/2 (x-x')^T P^-1 (x-x'))

with diagonal P = diag(1/alpha_d + 1/alpha_d' + 1/beta_q).  The same
expression with d = d' gives the auto covariance, so one routine serves the
whole block matrix.  Observation noise sigma2_d is added on the diagonal of
the (d, d) blocks only.

All hyperparameters are strictly positive.  The flattened layout groups the
per-output parameters first (weights then precisions for each output), then
the per-group parameters (variance then precisions), then the noise
variances; analytic partial derivatives are returned in the same order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .numerics import DimensionMismatch

__all__ = [
    "KernelConfig",
    "Hyperparameters",
    "cross_cov",
    "prior_variance",
    "build_K_yy",
    "build_K_yy_with_partials",
    "build_K_cross",
    "build_K_cross_with_partials",
    "sample_hyperparameters",
]


@dataclass(frozen=True)
class KernelConfig:
    """Shape of the model: input dimension n, number of outputs M and number
    of latent groups Q (one latent function per group)."""

    input_dim: int
    n_outputs: int
    n_latent: int = 1

    def __post_init__(self):
        for name in ("input_dim", "n_outputs", "n_latent"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")

    @property
    def n_hyperparameters(self) -> int:
        n, m, q = self.input_dim, self.n_outputs, self.n_latent
        return m * (q + n) + q * (1 + n) + m

    # Offsets into the flattened vector; every partial-derivative routine
    # below fills its output through these.
    def idx_nu(self, d: int, q: int) -> int:
        return d * (self.n_latent + self.input_dim) + q

    def idx_alpha(self, d: int, i: int) -> int:
        return d * (self.n_latent + self.input_dim) + self.n_latent + i

    def idx_upsilon(self, q: int) -> int:
        return (self.n_outputs * (self.n_latent + self.input_dim)
                + q * (1 + self.input_dim))

    def idx_beta(self, q: int, i: int) -> int:
        return self.idx_upsilon(q) + 1 + i

    def idx_sigma2(self, d: int) -> int:
        return (self.n_outputs * (self.n_latent + self.input_dim)
                + self.n_latent * (1 + self.input_dim) + d)


@dataclass
class Hyperparameters:
    """Kernel and noise parameters; all entries strictly positive.

    nu : (M, Q) output weights per latent group
    alpha : (M, n) smoothing-kernel precisions per output
    upsilon : (Q,) latent variances
    beta : (Q, n) latent length-scale precisions
    sigma2 : (M,) observation noise variances
    """

    nu: np.ndarray
    alpha: np.ndarray
    upsilon: np.ndarray
    beta: np.ndarray
    sigma2: np.ndarray

    def __post_init__(self):
        self.nu = np.atleast_2d(np.asarray(self.nu, dtype=float))
        self.alpha = np.atleast_2d(np.asarray(self.alpha, dtype=float))
        self.upsilon = np.atleast_1d(np.asarray(self.upsilon, dtype=float))
        self.beta = np.atleast_2d(np.asarray(self.beta, dtype=float))
        self.sigma2 = np.atleast_1d(np.asarray(self.sigma2, dtype=float))

    @property
    def config(self) -> KernelConfig:
        return KernelConfig(input_dim=self.alpha.shape[1],
                            n_outputs=self.alpha.shape[0],
                            n_latent=self.upsilon.shape[0])

    def validate(self):
        m, n = self.alpha.shape
        q = self.upsilon.shape[0]
        if self.nu.shape != (m, q) or self.beta.shape != (q, n) \
                or self.sigma2.shape != (m,):
            raise DimensionMismatch("hyperparameter arrays have inconsistent shapes")
        for name in ("nu", "alpha", "upsilon", "beta", "sigma2"):
            arr = getattr(self, name)
            if not np.all(np.isfinite(arr)) or np.any(arr <= 0.0):
                raise ValueError(f"{name} must be finite and strictly positive")

    def flatten(self) -> np.ndarray:
        """Flat vector: per output [nu_{d,:}, alpha_{d,:}], then per group
        [upsilon_q, beta_{q,:}], then sigma2."""
        parts = []
        for d in range(self.alpha.shape[0]):
            parts.append(self.nu[d])
            parts.append(self.alpha[d])
        for q in range(self.upsilon.shape[0]):
            parts.append(self.upsilon[q:q + 1])
            parts.append(self.beta[q])
        parts.append(self.sigma2)
        return np.concatenate(parts)

    @staticmethod
    def unflatten(vec: np.ndarray, config: KernelConfig) -> "Hyperparameters":
        vec = np.asarray(vec, dtype=float).ravel()
        n, m, q = config.input_dim, config.n_outputs, config.n_latent
        if vec.size != config.n_hyperparameters:
            raise DimensionMismatch(
                f"expected {config.n_hyperparameters} entries, got {vec.size}")
        nu = np.empty((m, q))
        alpha = np.empty((m, n))
        pos = 0
        for d in range(m):
            nu[d] = vec[pos:pos + q]
            alpha[d] = vec[pos + q:pos + q + n]
            pos += q + n
        upsilon = np.empty(q)
        beta = np.empty((q, n))
        for j in range(q):
            upsilon[j] = vec[pos]
            beta[j] = vec[pos + 1:pos + 1 + n]
            pos += 1 + n
        sigma2 = vec[pos:pos + m].copy()
        return Hyperparameters(nu=nu, alpha=alpha, upsilon=upsilon,
                               beta=beta, sigma2=sigma2)


def cross_cov(x, x2, d: int, d2: int, hp: Hyperparameters,
              config: KernelConfig | None = None) -> float:
    """Scalar cross covariance between f_d(x) and f_d2(x2).

    Reference implementation: a direct loop over latent groups.  The matrix
    builders below are vectorised but must agree with this to rounding.
    """
    x = np.asarray(x, dtype=float).ravel()
    x2 = np.asarray(x2, dtype=float).ravel()
    n = hp.alpha.shape[1]
    if x.size != n or x2.size != n:
        raise DimensionMismatch(f"inputs must have dimension {n}")
    delta2 = (x - x2) ** 2
    acc = 0.0
    for q in range(hp.upsilon.shape[0]):
        p = 1.0 / hp.alpha[d] + 1.0 / hp.alpha[d2] + 1.0 / hp.beta[q]
        dens = ((2.0 * math.pi) ** (-0.5 * n)
                * float(np.prod(p)) ** -0.5
                * math.exp(-0.5 * float(np.sum(delta2 / p))))
        acc += hp.nu[d, q] * hp.nu[d2, q] * hp.upsilon[q] * dens
    return float(acc)


def prior_variance(d: int, hp: Hyperparameters) -> float:
    """Cov[f_d(x), f_d(x)], independent of x (noise excluded)."""
    n = hp.alpha.shape[1]
    acc = 0.0
    for q in range(hp.upsilon.shape[0]):
        p = 2.0 / hp.alpha[d] + 1.0 / hp.beta[q]
        acc += (hp.nu[d, q] ** 2 * hp.upsilon[q]
                * (2.0 * math.pi) ** (-0.5 * n) * float(np.prod(p)) ** -0.5)
    return float(acc)


def pair_sqdiff(x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
    """(J1, J2, n) tensor of squared coordinate differences."""
    return (x1[:, None, :] - x2[None, :, :]) ** 2


def train_sqdiff(data: Dataset) -> dict:
    """Upper-triangular table of squared differences between output blocks;
    computed once per dataset and reused across covariance evaluations."""
    table = {}
    for i in range(data.n_outputs):
        for j in range(i, data.n_outputs):
            if data.inputs[i].shape[0] and data.inputs[j].shape[0]:
                table[(i, j)] = pair_sqdiff(data.inputs[i], data.inputs[j])
    return table


def cross_sqdiff(queries: np.ndarray, data: Dataset) -> dict:
    table = {}
    for j in range(data.n_outputs):
        if data.inputs[j].shape[0]:
            table[j] = pair_sqdiff(queries, data.inputs[j])
    return table


def _block_and_parts(sq, d, d2, hp, cfg, dk, rows, cols, want_parts):
    """Covariance block for output pair (d, d2) over a squared-difference
    tensor; when `want_parts`, accumulates analytic partials into `dk`."""
    n = cfg.input_dim
    norm0 = (2.0 * math.pi) ** (-0.5 * n)
    block = 0.0
    for q in range(cfg.n_latent):
        p = 1.0 / hp.alpha[d] + 1.0 / hp.alpha[d2] + 1.0 / hp.beta[q]
        quad = sq @ (1.0 / p)
        g = norm0 * float(np.prod(p)) ** -0.5 * np.exp(-0.5 * quad)
        coeff = hp.nu[d, q] * hp.nu[d2, q] * hp.upsilon[q]
        block = block + coeff * g
        if not want_parts:
            continue
        _scatter(dk, cfg.idx_nu(d, q), hp.nu[d2, q] * hp.upsilon[q] * g, rows, cols)
        _scatter(dk, cfg.idx_nu(d2, q), hp.nu[d, q] * hp.upsilon[q] * g, rows, cols)
        _scatter(dk, cfg.idx_upsilon(q), hp.nu[d, q] * hp.nu[d2, q] * g, rows, cols)
        for i in range(n):
            # dg/dp_i, then chain through p_i = 1/a_d + 1/a_d2 + 1/b_q;
            # scattering both output sides handles d == d2 (factor 2) too
            dgdp = 0.5 * g * (sq[:, :, i] / p[i] ** 2 - 1.0 / p[i])
            _scatter(dk, cfg.idx_alpha(d, i),
                     coeff * dgdp * (-1.0 / hp.alpha[d, i] ** 2), rows, cols)
            _scatter(dk, cfg.idx_alpha(d2, i),
                     coeff * dgdp * (-1.0 / hp.alpha[d2, i] ** 2), rows, cols)
            _scatter(dk, cfg.idx_beta(q, i),
                     coeff * dgdp * (-1.0 / hp.beta[q, i] ** 2), rows, cols)
    return block


def _scatter(dk, param, blk, rows, cols):
    dk[param][rows, cols] += blk


def _offsets(sizes):
    off = np.concatenate([[0], np.cumsum(sizes)])
    return off


def build_K_yy(data: Dataset, hp: Hyperparameters, sq=None) -> np.ndarray:
    """Full (N, N) covariance of the stacked observations, observation noise
    included on the per-output diagonal blocks.  Exactly symmetric: the lower
    triangle is the mirrored upper triangle."""
    k, _ = _build_train(data, hp, sq, want_parts=False)
    return k


def build_K_yy_with_partials(data: Dataset, hp: Hyperparameters, sq=None):
    """K_yy together with its (D, N, N) stack of analytic partial
    derivatives, ordered like the flattened hyperparameter vector."""
    return _build_train(data, hp, sq, want_parts=True)


def _build_train(data, hp, sq, want_parts):
    cfg = hp.config
    if data.input_dim != cfg.input_dim or data.n_outputs != cfg.n_outputs:
        raise DimensionMismatch("dataset shape does not match hyperparameters")
    if sq is None:
        sq = train_sqdiff(data)
    sizes = data.sizes
    off = _offsets(sizes)
    total = off[-1]
    k = np.zeros((total, total))
    dk = np.zeros((cfg.n_hyperparameters, total, total)) if want_parts else None
    for i in range(cfg.n_outputs):
        if not sizes[i]:
            continue
        ri = slice(off[i], off[i + 1])
        for j in range(i, cfg.n_outputs):
            if not sizes[j]:
                continue
            cj = slice(off[j], off[j + 1])
            blk = _block_and_parts(sq[(i, j)], i, j, hp, cfg, dk, ri, cj,
                                   want_parts)
            k[ri, cj] = blk
            if j > i:
                k[cj, ri] = blk.T
        # noise on the diagonal of the (i, i) block
        idx = np.arange(off[i], off[i + 1])
        k[idx, idx] += hp.sigma2[i]
        if want_parts:
            dk[cfg.idx_sigma2(i)][idx, idx] = 1.0
    if want_parts:
        # mirror the off-diagonal partial blocks the same way as k itself
        for l in range(dk.shape[0]):
            for i in range(cfg.n_outputs):
                for j in range(i + 1, cfg.n_outputs):
                    if sizes[i] and sizes[j]:
                        ri = slice(off[i], off[i + 1])
                        cj = slice(off[j], off[j + 1])
                        dk[l][cj, ri] = dk[l][ri, cj].T
    return k, dk


def build_K_cross(queries: np.ndarray, query_output: int, data: Dataset,
                  hp: Hyperparameters, sq=None) -> np.ndarray:
    """(n_queries, N) covariance between f_{query_output} at the query rows
    and the stacked training observations (noise-free)."""
    kc, _ = _build_cross(queries, query_output, data, hp, sq, want_parts=False)
    return kc


def build_K_cross_with_partials(queries, query_output, data, hp, sq=None):
    return _build_cross(queries, query_output, data, hp, sq, want_parts=True)


def _build_cross(queries, query_output, data, hp, sq, want_parts):
    cfg = hp.config
    queries = np.atleast_2d(np.asarray(queries, dtype=float))
    if queries.shape[1] != cfg.input_dim:
        raise DimensionMismatch(
            f"queries must have {cfg.input_dim} columns, got {queries.shape[1]}")
    if not 0 <= query_output < cfg.n_outputs:
        raise DimensionMismatch(f"no output {query_output}")
    if sq is None:
        sq = cross_sqdiff(queries, data)
    sizes = data.sizes
    off = _offsets(sizes)
    nq = queries.shape[0]
    kc = np.zeros((nq, off[-1]))
    dkc = np.zeros((cfg.n_hyperparameters, nq, off[-1])) if want_parts else None
    rows = slice(0, nq)
    for j in range(cfg.n_outputs):
        if not sizes[j]:
            continue
        cj = slice(off[j], off[j + 1])
        kc[rows, cj] = _block_and_parts(sq[j], query_output, j, hp, cfg, dkc,
                                        rows, cj, want_parts)
    return kc, dkc


def sample_hyperparameters(config: KernelConfig, rng, low: float = 1e-2,
                           high: float = 10.0) -> Hyperparameters:
    """Random strictly-positive hyperparameters, log-uniform in [low, high];
    handy for gradient checks and property tests."""
    d = config.n_hyperparameters
    vec = np.exp(rng.uniform(math.log(low), math.log(high), size=d))
    return Hyperparameters.unflatten(vec, config)
