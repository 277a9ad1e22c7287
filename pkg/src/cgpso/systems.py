"""Benchmark dynamical systems and their regression datasets.

Three processes: a scalar NARX difference equation (optionally extended to
two outputs by a derived channel), a three-state linear system with
sinusoidally time-varying coefficients integrated by fixed-step RK4, and a
four-state nonlinear time-varying recursion with two inputs, two noisy
outputs and slowly drifting input gains.

Dataset builders turn simulated records into one-step-ahead regression
problems: inputs are the lagged plant inputs and outputs, targets the next
output sample.  Builders are sized by the number of regression rows, so
`n_rows=1000` really yields 1000 rows (one extra record is simulated to
cover the lag).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .numerics import NonFiniteValue, RngStream

__all__ = [
    "Trajectory",
    "save_trajectory_csv",
    "rk4_step",
    "simulate_narx",
    "make_narx_dataset",
    "derive_second_output",
    "simulate_ltv",
    "make_ltv_dataset",
    "simulate_nltv",
    "make_nltv_dataset",
    "reference_trajectory",
]

# Trajectories whose outputs leave this band are treated as diverged.
_DIVERGENCE_LIMIT = 1e6


@dataclass
class Trajectory:
    """Simulated records as aligned arrays: sample times (or indices),
    inputs, internal states and outputs, one row per record."""

    time: np.ndarray
    u: np.ndarray
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        m = len(self.time)
        for name in ("u", "x", "y"):
            if len(getattr(self, name)) != m:
                raise ValueError(f"{name} has {len(getattr(self, name))} rows, "
                                 f"expected {m}")

    @property
    def n_records(self) -> int:
        return len(self.time)


def save_trajectory_csv(traj: Trajectory, path):
    """Raw trajectory export: k,t,u...,x...,y... with one row per record."""
    cols = (["k", "t"]
            + [f"u_{i + 1}" for i in range(traj.u.shape[1])]
            + [f"x_{i + 1}" for i in range(traj.x.shape[1])]
            + [f"y_{i + 1}" for i in range(traj.y.shape[1])])
    body = np.column_stack([np.arange(traj.n_records), traj.time,
                            traj.u, traj.x, traj.y])
    np.savetxt(path, body, delimiter=",", header=",".join(cols),
               comments="", fmt="%.17g")


def _check_finite(y, k):
    if not np.all(np.isfinite(y)) or np.any(np.abs(y) > _DIVERGENCE_LIMIT):
        raise NonFiniteValue(f"simulation diverged at step {k}")


# --- scalar NARX benchmark -------------------------------------------------

def simulate_narx(u: np.ndarray) -> Trajectory:
    """Second-order NARX plant driven by the given input sequence.

    y(k) = 0.893 y(k-1) + 0.037 y(k-1)^2 - 0.05 y(k-2) + 0.157 u(k-1)
           - 0.05 u(k-1) y(k-1),   y(-1) = y(0) = 0.

    Records k = 0..len(u)-1; the state row holds (y(k-1), y(k-2)).
    """
    u = np.asarray(u, dtype=float).ravel()
    steps = u.size
    y = np.zeros(steps)
    x = np.zeros((steps, 2))
    y1 = y2 = 0.0  # y(k-1), y(k-2)
    for k in range(steps):
        x[k] = (y1, y2)
        if k == 0:
            y[k] = 0.0
        else:
            uk = u[k - 1]
            y[k] = (0.893 * y1 + 0.037 * y1 * y1 - 0.05 * y2
                    + 0.157 * uk - 0.05 * uk * y1)
        _check_finite(y[k], k)
        y1, y2 = y[k], y1
    return Trajectory(time=np.arange(steps, dtype=float), u=u.reshape(-1, 1),
                      x=x, y=y.reshape(-1, 1))


def make_narx_dataset(n_rows: int = 1000, u_low: float = -2.0,
                      u_high: float = 4.0, seed: int = 0,
                      rng: RngStream | None = None) -> Dataset:
    """One-step NARX regression data under uniform random excitation.

    Regressors are [u(k-1), y(k-1), y(k-2)], the target y(k); rows cover
    k = 2..n_rows+1 so every regressor is real data.
    """
    if rng is None:
        rng = RngStream(seed)
    steps = n_rows + 2
    u = rng.uniform(u_low, u_high, size=steps)
    traj = simulate_narx(u)
    y = traj.y[:, 0]
    k = np.arange(2, steps)
    inputs = np.column_stack([u[k - 1], y[k - 1], y[k - 2]])
    return Dataset(inputs=[inputs], targets=[y[k]])


def derive_second_output(ds: Dataset, kind: str = "linear") -> Dataset:
    """Two-output copy of a single-output dataset: the second channel is
    -y (kind="linear") or exp(y) (kind="nonlinear") of the first."""
    if ds.n_outputs != 1:
        raise ValueError("expected a single-output dataset")
    y = ds.targets[0]
    if kind == "linear":
        y2 = -y
    elif kind == "nonlinear":
        y2 = np.exp(y)
    else:
        raise ValueError(f"unknown kind {kind!r}")
    return Dataset(inputs=[ds.inputs[0].copy(), ds.inputs[0].copy()],
                   targets=[y.copy(), y2])


# --- linear time-varying system -------------------------------------------

def rk4_step(f, t: float, x: np.ndarray, dt: float) -> np.ndarray:
    """One classical Runge-Kutta step for dx/dt = f(t, x)."""
    k1 = f(t, x)
    k2 = f(t + 0.5 * dt, x + 0.5 * dt * k1)
    k3 = f(t + 0.5 * dt, x + 0.5 * dt * k2)
    k4 = f(t + dt, x + dt * k3)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _ltv_a(t: float) -> np.ndarray:
    g1 = math.sin(10.0 * t)
    g2 = math.cos(10.0 * t)
    return np.array([
        [0.3 - 0.9 * g1, 0.1, 0.7 * g2],
        [0.6 * g1, 0.3 - 0.8 * g2, 0.01],
        [0.5, 0.15, 0.6 - 0.9 * g1],
    ])


_LTV_B = np.array([[1.0, 0.0], [1.0, -1.0], [0.0, 1.0]])
_LTV_C = np.array([[1.0, 0.0, 1.0], [1.0, -1.0, 0.0]])
_LTV_D = 0.1 * np.eye(2)


def _ltv_u(t: float) -> np.ndarray:
    return np.array([0.5 * math.sin(12.0 * t), math.cos(7.0 * t)])


def simulate_ltv(n_records: int = 200, dt: float = 0.05) -> Trajectory:
    """Three-state linear system with sinusoidally varying coefficients.

    dx/dt = A(t) x + B u(t), y = C x + D u, x(0) = 0, driven by
    u(t) = (0.5 sin 12t, cos 7t); integrated with RK4 at fixed step `dt`
    and sampled at the same rate starting from t = 0.  Fully deterministic.
    """
    times = dt * np.arange(n_records)
    x = np.zeros(3)
    xs = np.empty((n_records, 3))
    us = np.empty((n_records, 2))
    ys = np.empty((n_records, 2))

    def deriv(t, state):
        return _ltv_a(t) @ state + _LTV_B @ _ltv_u(t)

    for k, t in enumerate(times):
        u = _ltv_u(t)
        xs[k] = x
        us[k] = u
        ys[k] = _LTV_C @ x + _LTV_D @ u
        _check_finite(ys[k], k)
        x = rk4_step(deriv, t, x, dt)
    return Trajectory(time=times, u=us, x=xs, y=ys)


def make_ltv_dataset(n_rows: int = 200, dt: float = 0.05) -> Dataset:
    """One-step regression data for the time-varying linear system.

    Regressors are the previous sample's inputs and outputs
    [u_1, u_2, y_1, y_2](k-1), targets the outputs at k, for both channels.
    The time dependence is deliberately not an input, which makes this a
    misspecified (and therefore hard) modelling problem.
    """
    traj = simulate_ltv(n_records=n_rows + 1, dt=dt)
    reg = np.column_stack([traj.u[:-1], traj.y[:-1]])
    return Dataset(inputs=[reg, reg.copy()],
                   targets=[traj.y[1:, 0], traj.y[1:, 1]])


# --- nonlinear time-varying system ----------------------------------------

def _nltv_gains(k: int):
    a = 1.0 + 0.1 * math.sin(2.0 * math.pi * k / 1500.0)
    b = 1.0 + 0.1 * math.cos(2.0 * math.pi * k / 1500.0)
    return a, b


def simulate_nltv(u: np.ndarray, seed: int = 0, noise_scale: float = 0.005,
                  gaussian_noise: bool = False,
                  rng: RngStream | None = None) -> Trajectory:
    """Four-state nonlinear recursion with two inputs and two outputs.

    States (x11, x12) and (x21, x22) form two coupled subsystems; inputs
    enter through drifting gains a(k) = 1 + 0.1 sin(2 pi k / 1500) and
    b(k) = 1 + 0.1 cos(2 pi k / 1500).  Outputs are the first state of each
    subsystem plus noise: uniform on [0, noise_scale] by default, or
    zero-mean gaussian with that standard deviation when `gaussian_noise`
    is set.  Pass noise_scale=0 for clean outputs.

    The recursion is seeded with two fixed records (k = 1, 2):
    x11 = x21 = 0.5 there, the other states zero, and the first two inputs
    forced to zero regardless of `u`.  Records are indexed k = 1..len(u).
    """
    u = np.atleast_2d(np.asarray(u, dtype=float))
    if u.shape[1] != 2:
        raise ValueError("u must have two columns")
    steps = u.shape[0]
    if steps < 2:
        raise ValueError("need at least the two seed records")
    if rng is None:
        rng = RngStream(seed)
    u = u.copy()
    u[0] = 0.0
    u[1] = 0.0
    xs = np.zeros((steps, 4))  # columns x11, x12, x21, x22
    xs[0] = (0.5, 0.0, 0.5, 0.0)
    xs[1] = (0.5, 0.0, 0.5, 0.0)
    for j in range(2, steps):
        x11, x12, x21, x22 = xs[j - 1]
        k = j  # previous record has index k (records are 1-based)
        a, b = _nltv_gains(k)
        xs[j, 0] = x11 ** 2 / (1.0 + x11 ** 2) + 0.3 * x12
        xs[j, 1] = (x11 ** 2 / (1.0 + x12 ** 2 + x21 ** 2 + x22 ** 2)
                    + a * u[j - 1, 0])
        xs[j, 2] = x21 ** 2 / (1.0 + x21 ** 2) + 0.2 * x22
        xs[j, 3] = (x21 ** 2 / (1.0 + x11 ** 2 + x12 ** 2 + x22 ** 2)
                    + b * u[j - 1, 1])
        _check_finite(xs[j], j)
    noise = np.zeros((steps, 2))
    if noise_scale > 0.0:
        if gaussian_noise:
            noise = noise_scale * rng.standard_normal(size=(steps, 2))
        else:
            noise = noise_scale * rng.uniform(size=(steps, 2))
    ys = xs[:, [0, 2]] + noise
    return Trajectory(time=np.arange(1, steps + 1, dtype=float), u=u,
                      x=xs, y=ys)


def make_nltv_dataset(trajectory: str = "step", n_rows: int | None = None,
                      u_low: float = 0.0, u_high: float = 1.0, seed: int = 0,
                      noise_scale: float = 0.005, excitation=None,
                      hold: int = 1, settle: int = 0) -> Dataset:
    """One-step regression data for the nonlinear time-varying system.

    Regressors are [u_1, u_2, y_1, y_2](k-1) and the targets the two outputs
    at k, giving the four-input two-output modelling problem.  Default row
    counts follow the benchmark trajectories: 200 for "step", 1500 for
    "curve".

    Excitation defaults to i.i.d. uniform inputs on [u_low, u_high] (the
    open-loop stand-in for a controller); pass a callable
    `excitation(steps, rng) -> (steps, 2)` to drive the plant differently.

    `hold` > 1 turns the default excitation piecewise-constant: each drawn
    level is held for `hold` consecutive steps, giving the step-like input
    records typical of identification experiments.  `settle` > 0 keeps only
    rows whose input was unchanged over the `settle` steps preceding the
    regressor record, discarding switching transients; because the plant
    carries the previous two inputs in its state, unsettled rows depend on
    input history the one-lag regressors cannot see.  The simulated horizon
    is extended so exactly `n_rows` settled rows remain.  With a callable
    excitation, set `hold` to its dwell length so the horizon estimate is
    right; a shortfall of settled rows raises ValueError.
    """
    if n_rows is None:
        n_rows = {"step": 200, "curve": 1500}.get(trajectory)
        if n_rows is None:
            raise ValueError(f"unknown trajectory {trajectory!r}")
    hold = int(hold)
    settle = int(settle)
    if hold < 1:
        raise ValueError("hold must be >= 1")
    if settle < 0:
        raise ValueError("settle must be >= 0")
    if excitation is None and settle >= hold:
        raise ValueError("settle must be < hold, else no row ever settles")
    rng = RngStream(seed)
    if settle == 0:
        steps = n_rows + 1
    else:
        keep = max(hold - settle, 1)
        steps = -(-(n_rows + 2) * hold // keep) + settle + 2
    if excitation is None:
        n_seg = -(-steps // hold)
        levels = rng.uniform(u_low, u_high, size=(n_seg, 2))
        u = np.repeat(levels, hold, axis=0)[:steps]
    else:
        u = np.asarray(excitation(steps, rng), dtype=float)
    traj = simulate_nltv(u, noise_scale=noise_scale, rng=rng)
    reg = np.column_stack([traj.u[:-1], traj.y[:-1]])
    targets = traj.y[1:]
    if settle > 0:
        past = traj.u[:-1]
        ok = np.ones(len(past), dtype=bool)
        ok[:settle] = False
        for i in range(1, settle + 1):
            ok[settle:] &= np.all(past[settle - i:len(past) - i]
                                  == past[settle:], axis=1)
        reg = reg[ok]
        targets = targets[ok]
        if len(reg) < n_rows:
            raise ValueError(
                f"only {len(reg)} settled rows for n_rows={n_rows}; "
                "lengthen the excitation dwell or lower settle")
        reg = reg[:n_rows]
        targets = targets[:n_rows]
    return Dataset(inputs=[reg, reg.copy()],
                   targets=[targets[:, 0], targets[:, 1]])


def reference_trajectory(kind: str, k) -> np.ndarray:
    """Desired output trajectories used by the tracking benchmarks.

    kind="step": piecewise-constant levels, switching at k = 500/1000 for
    the first output and k = 300/700/1200 for the second.  kind="curve":
    sums of two sinusoids.  `k` may be a scalar or array; returns shape
    (len(k), 2).
    """
    k = np.atleast_1d(np.asarray(k, dtype=float))
    if kind == "step":
        y1 = np.where(k <= 500, 0.4, np.where(k <= 1000, 0.7, 0.5))
        y2 = np.where(k <= 300, 0.6,
                      np.where(k <= 700, 0.8,
                               np.where(k <= 1200, 0.7, 0.5)))
    elif kind == "curve":
        y1 = 0.75 * np.sin(np.pi * k / 8.0) + 0.5 * np.cos(np.pi * k / 4.0)
        y2 = 0.5 * np.cos(np.pi * k / 8.0) + 0.5 * np.sin(np.pi * k / 4.0)
    else:
        raise ValueError(f"unknown kind {kind!r}")
    return np.column_stack([y1, y2])
