"""Gradient-based local minimisation on box-bounded problems.

Holds the shared optimisation types (Bounds, FitnessProblem) plus two local
methods — nonlinear conjugate gradients with Polak-Ribiere(+) directions and
BFGS with a dense inverse-Hessian estimate — and a uniform-restart wrapper
that serves as the classical baseline at a fixed evaluation budget.

Both methods use the same backtracking Armijo line search.  The search first
probes the minimiser of the quadratic interpolant through the endpoint
values and the initial slope, which makes steps exact on quadratic
objectives, then falls back to halving (at most 40 times).  Iterates are
clamped to the bounds before every evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import RngStream

__all__ = [
    "MissingGradient",
    "Bounds",
    "FitnessProblem",
    "LocalResult",
    "cg_minimize",
    "bfgs_minimize",
    "restarted_local",
]

_ARMIJO_C = 1e-4
_MAX_HALVINGS = 40
_CURVATURE_FLOOR = 1e-10


class MissingGradient(Exception):
    """A gradient-based step was requested but the problem has no gradient."""


@dataclass
class Bounds:
    """Box constraints lo < hi, one pair per coordinate."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        self.lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        self.hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        if self.lo.shape != self.hi.shape:
            raise ValueError("bound arrays must have matching shapes")
        if not np.all(self.lo < self.hi):
            raise ValueError("need lo < hi in every coordinate")

    @property
    def dimension(self) -> int:
        return self.lo.size

    def clip(self, x: np.ndarray) -> np.ndarray:
        return np.clip(x, self.lo, self.hi)

    def sample(self, rng: RngStream, m: int | None = None) -> np.ndarray:
        size = self.lo.size if m is None else (m, self.lo.size)
        return rng.uniform(self.lo, self.hi, size=size)

    @staticmethod
    def cube(lo: float, hi: float, dim: int) -> "Bounds":
        return Bounds(lo=np.full(dim, float(lo)), hi=np.full(dim, float(hi)))


@dataclass
class FitnessProblem:
    """A scalar objective to minimise over a box, with optional gradient."""

    objective: object
    bounds: Bounds
    gradient: object = None

    @property
    def dimension(self) -> int:
        return self.bounds.dimension


@dataclass
class LocalResult:
    x: np.ndarray
    fun: float
    n_iters: int
    n_evals: int
    n_grad_evals: int
    status: str  # converged | max_iters | line_search_failed
    n_restarts: int = 1


def _line_search(phi, f0: float, slope0: float, a_init: float):
    """Backtracking Armijo search along phi(a) with a quadratic probe.

    Returns (step, value, n_evals); step is None when no acceptable point
    was found within the halving budget.
    """
    evals = 0
    a = a_init
    fa = phi(a)
    evals += 1
    denom = fa - f0 - slope0 * a
    if np.isfinite(fa) and denom > 0.0:
        aq = -0.5 * slope0 * a * a / denom
        if np.isfinite(aq) and 0.0 < aq:
            aq = min(aq, 10.0 * a)
            fq = phi(aq)
            evals += 1
            if np.isfinite(fq) and (not np.isfinite(fa) or fq < fa):
                a, fa = aq, fq
    halvings = 0
    while not (np.isfinite(fa) and fa <= f0 + _ARMIJO_C * a * slope0) \
            and halvings < _MAX_HALVINGS:
        a *= 0.5
        fa = phi(a)
        evals += 1
        halvings += 1
    if np.isfinite(fa) and fa <= f0 + _ARMIJO_C * a * slope0:
        return a, fa, evals
    return None, None, evals


def _prepare(problem: FitnessProblem, x0):
    if problem.gradient is None:
        raise MissingGradient("this method needs problem.gradient")
    x = problem.bounds.clip(np.asarray(x0, dtype=float).copy())
    f = float(problem.objective(x))
    return x, f


def cg_minimize(problem: FitnessProblem, x0, max_iters: int = 200,
                grad_tol: float = 1e-6) -> LocalResult:
    """Polak-Ribiere(+) nonlinear conjugate gradients.

    The direction restarts to steepest descent whenever the PR coefficient
    goes negative or every `dimension` iterations.  Stops when the gradient
    max-norm drops below `grad_tol` (checked before stepping, so a start at
    the minimum returns after 0 iterations) or the iteration cap is hit; a
    failed line search returns the best iterate seen, flagged in `status`.
    """
    x, f = _prepare(problem, x0)
    n_evals, n_grads = 1, 0
    if not np.isfinite(f):
        return LocalResult(x, f, 0, n_evals, n_grads, "line_search_failed")
    g = np.asarray(problem.gradient(x), dtype=float)
    n_grads += 1
    if not np.all(np.isfinite(g)):
        return LocalResult(x, f, 0, n_evals, n_grads, "line_search_failed")
    d = -g
    best_x, best_f = x.copy(), f
    a_prev = 1.0
    status = "max_iters"
    it = 0
    while it < max_iters:
        if np.max(np.abs(g)) < grad_tol:
            status = "converged"
            break
        slope = float(g @ d)
        if slope >= 0.0:
            d = -g
            slope = -float(g @ g)

        def phi(a):
            nonlocal n_evals
            n_evals += 1
            return float(problem.objective(problem.bounds.clip(x + a * d)))

        a, f_new, _ = _line_search(phi, f, slope, a_prev)
        it += 1
        if a is None:
            status = "line_search_failed"
            break
        x_new = problem.bounds.clip(x + a * d)
        g_new = np.asarray(problem.gradient(x_new), dtype=float)
        n_grads += 1
        if not np.all(np.isfinite(g_new)):
            status = "line_search_failed"
            x, f = x_new, f_new
            if f_new < best_f:
                best_x, best_f = x_new.copy(), f_new
            break
        beta = float(g_new @ (g_new - g)) / float(g @ g)
        beta = max(0.0, beta)
        if it % problem.dimension == 0:
            beta = 0.0
        d = -g_new + beta * d
        x, f, g, a_prev = x_new, f_new, g_new, a
        if f < best_f:
            best_x, best_f = x.copy(), f
    if f < best_f:
        best_x, best_f = x.copy(), f
    return LocalResult(best_x, best_f, it, n_evals, n_grads, status)


def bfgs_minimize(problem: FitnessProblem, x0, max_iters: int = 200,
                  grad_tol: float = 1e-6) -> LocalResult:
    """BFGS with a dense inverse-Hessian estimate, same line search and
    stopping rules as `cg_minimize`.  The update is skipped whenever the
    curvature s.y is at or below 1e-10, keeping the estimate positive
    definite."""
    x, f = _prepare(problem, x0)
    n_evals, n_grads = 1, 0
    if not np.isfinite(f):
        return LocalResult(x, f, 0, n_evals, n_grads, "line_search_failed")
    g = np.asarray(problem.gradient(x), dtype=float)
    n_grads += 1
    if not np.all(np.isfinite(g)):
        return LocalResult(x, f, 0, n_evals, n_grads, "line_search_failed")
    dim = problem.dimension
    eye = np.eye(dim)
    h = eye.copy()
    best_x, best_f = x.copy(), f
    status = "max_iters"
    it = 0
    while it < max_iters:
        if np.max(np.abs(g)) < grad_tol:
            status = "converged"
            break
        d = -(h @ g)
        slope = float(g @ d)
        if slope >= 0.0:
            h = eye.copy()
            d = -g
            slope = -float(g @ g)

        def phi(a):
            nonlocal n_evals
            n_evals += 1
            return float(problem.objective(problem.bounds.clip(x + a * d)))

        a, f_new, _ = _line_search(phi, f, slope, 1.0)
        it += 1
        if a is None:
            status = "line_search_failed"
            break
        x_new = problem.bounds.clip(x + a * d)
        g_new = np.asarray(problem.gradient(x_new), dtype=float)
        n_grads += 1
        if not np.all(np.isfinite(g_new)):
            status = "line_search_failed"
            x, f = x_new, f_new
            if f_new < best_f:
                best_x, best_f = x_new.copy(), f_new
            break
        s = x_new - x
        yv = g_new - g
        sy = float(s @ yv)
        if sy > _CURVATURE_FLOOR:
            rho = 1.0 / sy
            left = eye - rho * np.outer(s, yv)
            h = left @ h @ left.T + rho * np.outer(s, s)
        x, f, g = x_new, f_new, g_new
        if f < best_f:
            best_x, best_f = x.copy(), f
    if f < best_f:
        best_x, best_f = x.copy(), f
    return LocalResult(best_x, best_f, it, n_evals, n_grads, status)


def restarted_local(problem: FitnessProblem, method: str = "cg",
                    n_restarts: int = 100, rng: RngStream | None = None,
                    max_evals: int | None = None, max_iters: int = 100,
                    grad_tol: float = 1e-6) -> LocalResult:
    """Best-of-many local minimisation from uniform random starts.

    Objective and gradient evaluations count against one shared budget; no
    new start is launched once `max_evals` is spent.  Returns the best run's
    result with the aggregate counts.
    """
    if method not in ("cg", "bfgs"):
        raise ValueError(f"unknown method {method!r}")
    minimize = cg_minimize if method == "cg" else bfgs_minimize
    if rng is None:
        rng = RngStream(0)
    best = None
    total_evals = total_grads = launched = 0
    for _ in range(n_restarts):
        if max_evals is not None and total_evals + total_grads >= max_evals:
            break
        x0 = problem.bounds.sample(rng)
        res = minimize(problem, x0, max_iters=max_iters, grad_tol=grad_tol)
        launched += 1
        total_evals += res.n_evals
        total_grads += res.n_grad_evals
        if best is None or res.fun < best.fun:
            best = res
    if best is None:
        raise ValueError("evaluation budget too small for a single start")
    return LocalResult(best.x, best.fun, best.n_iters, total_evals,
                       total_grads, best.status, n_restarts=launched)
