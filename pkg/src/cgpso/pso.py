"""Particle swarm optimisation with stagnation-triggered enhancements.

Four variants share one synchronous update loop:

* standard -- plain inertia-weighted PSO;
* multistart -- when the global best has stalled for `stagnation_patience`
  consecutive iterations, the whole swarm is re-initialised uniformly over
  the bounds (the global best and its value survive);
* gradient -- on the same trigger, the global best is refined by a short
  quasi-Newton descent and replaced only if the refined value is at least
  as good;
* hybrid -- restarts while t <= switch_fraction * max_iters, refines after.

Per iteration, every particle draws its own uniform factors per coordinate,
velocities update with the time-varying inertia weight, positions are
clamped to the bounds (zeroing the clamped velocity components), and the
personal/global bests are refreshed — personal bests on ties, the global
best only on strict improvement, earliest particle first.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .local import Bounds, FitnessProblem, MissingGradient, bfgs_minimize
from .numerics import RngStream

__all__ = [
    "NoProgress",
    "PsoConfig",
    "SwarmState",
    "TracePoint",
    "RunTrace",
    "RunResult",
    "inertia",
    "velocity_update",
    "position_update",
    "update_bests",
    "run_standard",
    "run_multistart",
    "run_gradient",
    "run_hybrid",
    "VARIANTS",
]


class NoProgress(Exception):
    """The search never saw a finite fitness value."""


@dataclass
class PsoConfig:
    """Swarm settings.  Defaults follow the reference parameterisation:
    20 particles, 500 iterations, c1 = c2 = 1.5, inertia decaying
    exponentially between 0.4 and 0.9 with rate 0.8, stagnation tolerance
    1e-5.  `stagnation_patience` and `switch_fraction` govern the enhanced
    variants; `target_fitness` (-inf: disabled) stops the run early."""

    n_particles: int = 20
    max_iters: int = 500
    c1: float = 1.5
    c2: float = 1.5
    omega_start: float = 0.4
    omega_end: float = 0.9
    decay: float = 0.8
    target_fitness: float = -math.inf
    stagnation_tol: float = 1e-5
    stagnation_patience: int = 10
    switch_fraction: float = 0.5
    refine_max_iters: int = 50
    refine_grad_tol: float = 1e-6
    seed: int = 0

    def validate(self):
        if self.n_particles < 1 or self.max_iters < 1:
            raise ValueError("need at least one particle and one iteration")
        if self.stagnation_patience < 1:
            raise ValueError("stagnation_patience must be >= 1")
        if not 0.0 <= self.switch_fraction <= 1.0:
            raise ValueError("switch_fraction must lie in [0, 1]")


@dataclass
class SwarmState:
    positions: np.ndarray
    velocities: np.ndarray
    pbest_positions: np.ndarray
    pbest_values: np.ndarray
    gbest_position: np.ndarray
    gbest_value: float


@dataclass
class TracePoint:
    t: int
    gbest: float
    evals: int
    elapsed_ms: float
    event: str  # none | restart | refine


@dataclass
class RunTrace:
    points: list = field(default_factory=list)

    def append(self, *args):
        self.points.append(TracePoint(*args))

    def gbest_values(self) -> np.ndarray:
        return np.array([p.gbest for p in self.points])

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("t,gbest_fitness,evals,elapsed_ms,event\n")
            for p in self.points:
                fh.write(f"{p.t},{p.gbest:.17g},{p.evals},"
                         f"{p.elapsed_ms:.3f},{p.event}\n")


@dataclass
class RunResult:
    x: np.ndarray
    fun: float
    n_evals: int
    n_grad_evals: int
    stopped: str  # max_iters | target
    trace: RunTrace


def inertia(t: int, cfg: PsoConfig) -> float:
    """Exponentially decaying inertia weight at iteration t: omega_end +
    (omega_start - omega_end) exp(-decay t / max_iters)."""
    return cfg.omega_end + (cfg.omega_start - cfg.omega_end) * math.exp(
        -cfg.decay * t / cfg.max_iters)


def velocity_update(v, x, pbest, gbest, omega, c1, c2, lam1, lam2):
    """New velocities: inertia plus cognitive and social pulls, with the
    uniform factors supplied per particle and coordinate."""
    return omega * v + c1 * lam1 * (pbest - x) + c2 * lam2 * (gbest - x)


def position_update(x, v, bounds: Bounds):
    """Move by v and clamp to the box; velocity components that hit a bound
    are zeroed so particles do not push against the walls."""
    moved = x + v
    clipped = bounds.clip(moved)
    v_out = np.where(clipped == moved, v, 0.0)
    return clipped, v_out


def update_bests(state: SwarmState, fitnesses: np.ndarray):
    """Refresh personal and global bests from the current positions.

    Personal bests are replaced on ties (<=); the global best only improves
    strictly, ties resolved to the earliest particle, so it is stable under
    re-evaluation of equal values.
    """
    improved = fitnesses <= state.pbest_values
    state.pbest_positions[improved] = state.positions[improved]
    state.pbest_values[improved] = fitnesses[improved]
    i = int(np.argmin(state.pbest_values))
    if state.pbest_values[i] < state.gbest_value:
        state.gbest_value = float(state.pbest_values[i])
        state.gbest_position = state.pbest_positions[i].copy()


def _evaluate(f, xs, counter):
    out = np.empty(xs.shape[0])
    for i in range(xs.shape[0]):
        v = float(f(xs[i]))
        out[i] = v if np.isfinite(v) else math.inf
    counter[0] += xs.shape[0]
    return out


def _reinitialise(state, problem, cfg, rng, counter):
    """Fresh uniform swarm; personal bests start over, the global best and
    its value carry across."""
    np_, dim = cfg.n_particles, problem.dimension
    state.positions = rng.uniform(problem.bounds.lo, problem.bounds.hi,
                                  size=(np_, dim))
    state.velocities = np.zeros((np_, dim))
    fs = _evaluate(problem.objective, state.positions, counter)
    state.pbest_positions = state.positions.copy()
    state.pbest_values = fs.copy()
    i = int(np.argmin(fs))
    if fs[i] < state.gbest_value:
        state.gbest_value = float(fs[i])
        state.gbest_position = state.positions[i].copy()


def _refine(state, problem, cfg, grad_counter):
    """Short quasi-Newton polish of the global best, accepted only if
    not worse."""
    res = bfgs_minimize(problem, state.gbest_position,
                        max_iters=cfg.refine_max_iters,
                        grad_tol=cfg.refine_grad_tol)
    grad_counter[0] += res.n_grad_evals
    if res.fun <= state.gbest_value:
        state.gbest_value = float(res.fun)
        state.gbest_position = problem.bounds.clip(res.x)
    return res.n_evals


def _run(problem: FitnessProblem, cfg: PsoConfig, variant: str) -> RunResult:
    cfg.validate()
    if variant in ("gradient", "hybrid") and problem.gradient is None:
        raise MissingGradient(f"variant {variant!r} needs a gradient")
    rng = RngStream(cfg.seed)
    counter = [0]
    grad_counter = [0]
    t_start = time.perf_counter()

    def elapsed():
        return (time.perf_counter() - t_start) * 1e3

    dim = problem.dimension
    x0 = rng.uniform(problem.bounds.lo, problem.bounds.hi,
                     size=(cfg.n_particles, dim))
    f0 = _evaluate(problem.objective, x0, counter)
    i0 = int(np.argmin(f0))
    state = SwarmState(positions=x0, velocities=np.zeros((cfg.n_particles, dim)),
                       pbest_positions=x0.copy(), pbest_values=f0.copy(),
                       gbest_position=x0[i0].copy(), gbest_value=float(f0[i0]))
    trace = RunTrace()
    trace.append(0, state.gbest_value, counter[0], elapsed(), "none")

    stall = 0
    stopped = "max_iters"
    for t in range(cfg.max_iters):
        event = "none"
        if variant != "standard" and stall >= cfg.stagnation_patience:
            explore = (variant == "multistart"
                       or (variant == "hybrid"
                           and t <= cfg.switch_fraction * cfg.max_iters))
            if explore:
                _reinitialise(state, problem, cfg, rng, counter)
                event = "restart"
            else:
                counter[0] += _refine(state, problem, cfg, grad_counter)
                event = "refine"
            stall = 0
        elif state.gbest_value <= cfg.target_fitness:
            stopped = "target"
            break
        else:
            omega = inertia(t, cfg)
            lam1 = rng.uniform(size=(cfg.n_particles, dim))
            lam2 = rng.uniform(size=(cfg.n_particles, dim))
            state.velocities = velocity_update(
                state.velocities, state.positions, state.pbest_positions,
                state.gbest_position, omega, cfg.c1, cfg.c2, lam1, lam2)
            state.positions, state.velocities = position_update(
                state.positions, state.velocities, problem.bounds)
            fs = _evaluate(problem.objective, state.positions, counter)
            prev = state.gbest_value
            update_bests(state, fs)
            delta = abs(state.gbest_value - prev)
            stall = stall + 1 if delta <= cfg.stagnation_tol else 0
        trace.append(t + 1, state.gbest_value, counter[0], elapsed(), event)
    if not np.isfinite(state.gbest_value):
        raise NoProgress("no finite fitness seen over the whole run")
    return RunResult(x=state.gbest_position.copy(), fun=state.gbest_value,
                     n_evals=counter[0], n_grad_evals=grad_counter[0],
                     stopped=stopped, trace=trace)


def run_standard(problem: FitnessProblem, cfg: PsoConfig) -> RunResult:
    """Plain inertia-weighted PSO."""
    return _run(problem, cfg, "standard")


def run_multistart(problem: FitnessProblem, cfg: PsoConfig) -> RunResult:
    """PSO with full swarm re-initialisation on stagnation."""
    return _run(problem, cfg, "multistart")


def run_gradient(problem: FitnessProblem, cfg: PsoConfig) -> RunResult:
    """PSO with quasi-Newton refinement of the global best on
    stagnation."""
    return _run(problem, cfg, "gradient")


def run_hybrid(problem: FitnessProblem, cfg: PsoConfig) -> RunResult:
    """PSO that restarts early in the run and refines late, split at
    switch_fraction * max_iters."""
    return _run(problem, cfg, "hybrid")


VARIANTS = {
    "pso_standard": run_standard,
    "pso_multistart": run_multistart,
    "pso_gradient": run_gradient,
    "pso_hybrid": run_hybrid,
}
