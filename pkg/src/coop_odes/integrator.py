"""Explicit Runge-Kutta solution of ``x' = A(t) x`` with a trace-integral channel.

The integrated state is ``(X, I)`` where ``X`` holds one or more solution
columns and ``I' = trace A(t)``; the trace integral therefore comes from the
same step sequence as the trajectory. Integration runs segment by segment
between the smoothness breaks of ``A`` (piecewise breakpoints, grid nodes),
landing exactly on each break and restarting with a fresh step size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import (
    DimensionMismatch,
    NonFiniteInput,
    StepLimitExceeded,
    StepUnderflow,
    TimeOutOfRange,
    TimeOutOfWindow,
)
from .model import CoefficientMatrix

__all__ = [
    "FixedRK4",
    "EmbeddedRK45",
    "StepperConfig",
    "Trajectory",
    "solve_ivp",
    "sample_at",
    "fundamental_matrix",
]


@dataclass(frozen=True)
class FixedRK4:
    """Classical RK4; each smooth segment is split into equal steps no longer than ``h``."""

    h: float

    def __post_init__(self):
        if not (math.isfinite(self.h) and self.h > 0):
            raise ValueError(f"step h must be positive and finite, got {self.h!r}")


@dataclass(frozen=True)
class EmbeddedRK45:
    """Dormand-Prince 5(4) with local extrapolation and max-norm error control."""

    rel_tol: float = 1e-9
    abs_tol: float = 1e-12
    initial_step: float = 1e-3
    min_step: float = 1e-12
    max_step: float = 0.25

    def __post_init__(self):
        for name in ("rel_tol", "abs_tol", "initial_step", "min_step", "max_step"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive and finite, got {v!r}")
        if self.min_step > self.max_step:
            raise ValueError("min_step must not exceed max_step")


Method = Union[FixedRK4, EmbeddedRK45]


@dataclass(frozen=True)
class StepperConfig:
    method: Method = EmbeddedRK45()
    max_steps: int = 1_000_000

    def __post_init__(self):
        if self.max_steps < 1:
            raise ValueError("max_steps must be positive")

    @property
    def rel_tol(self) -> float:
        m = self.method
        return m.rel_tol if isinstance(m, EmbeddedRK45) else 0.0


# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_BHAT = np.array(
    [5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40]
)
_E = _B - _BHAT


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Accepted steps of one solve.

    ``slopes_start[k]`` and ``slopes_end[k]`` are the derivatives of the
    augmented state ``(x, I)`` at the two ends of step ``k``, each taken with
    the coefficients active inside that step; at a breakpoint they are the two
    one-sided derivatives.
    """

    times: np.ndarray
    states: np.ndarray
    trace_integrals: np.ndarray
    slopes_start: np.ndarray
    slopes_end: np.ndarray
    breakpoints: tuple[float, ...]
    system_id: str
    interpolation: str = "cubic Hermite between accepted steps"

    def __post_init__(self):
        for name in ("times", "states", "trace_integrals", "slopes_start", "slopes_end"):
            getattr(self, name).setflags(write=False)

    @property
    def n(self) -> int:
        return self.states.shape[1]

    @property
    def t0(self) -> float:
        return float(self.times[0])

    @property
    def t_end(self) -> float:
        return float(self.times[-1])

    @property
    def x0(self) -> np.ndarray:
        return self.states[0]

    def __len__(self) -> int:
        return len(self.times)


def _check_span(A: CoefficientMatrix, t0: float, t_end: float) -> None:
    w = A.window
    if not w.contains(t0):
        raise TimeOutOfWindow(f"t0={t0!r} outside ({w.a}, {w.b})")
    if not w.contains(t_end):
        raise TimeOutOfWindow(f"t_end={t_end!r} outside ({w.a}, {w.b})")
    if t_end < t0:
        raise TimeOutOfWindow("t_end precedes t0; backward integration is not supported")


def _segments(A: CoefficientMatrix, t0: float, t_end: float) -> list[float]:
    breaks = A.smoothness_breaks()
    inner = [float(b) for b in breaks if t0 < b < t_end]
    return [t0, *inner, t_end]


class _Integration:
    """Mutable accumulator for one integration run (internal)."""

    def __init__(self, A: CoefficientMatrix, y0: np.ndarray, n: int, m: int, cfg: StepperConfig):
        self.A = A
        self.n, self.m = n, m
        self.cfg = cfg
        self.times: list[float] = []
        self.ys: list[np.ndarray] = []
        self.d0: list[np.ndarray] = []
        self.d1: list[np.ndarray] = []
        self.attempts = 0
        self.y0 = y0

    def rhs_for(self, lo: float, hi: float):
        evaluator = self.A.segment_function(lo, hi)
        n, m = self.n, self.m

        def f(t: float, y: np.ndarray) -> np.ndarray:
            M = evaluator(t)
            out = np.empty_like(y)
            out[:-1] = (M @ y[:-1].reshape(n, m)).ravel()
            out[-1] = M.diagonal().sum()
            return out

        return f

    def count(self) -> None:
        self.attempts += 1
        if self.attempts > self.cfg.max_steps:
            raise StepLimitExceeded(f"exceeded max_steps={self.cfg.max_steps}")

    def accept(self, t_new: float, y_new: np.ndarray, k_start: np.ndarray, k_end: np.ndarray):
        self.times.append(t_new)
        self.ys.append(y_new)
        self.d0.append(k_start)
        self.d1.append(k_end)

    def rk4_segment(self, lo: float, hi: float, y: np.ndarray, h: float) -> np.ndarray:
        f = self.rhs_for(lo, hi)
        steps = max(1, math.ceil((hi - lo) / h - 1e-9))
        dt = (hi - lo) / steps
        t = lo
        k1 = f(t, y)
        for s in range(1, steps + 1):
            self.count()
            t_new = hi if s == steps else lo + s * dt
            hh = t_new - t
            k2 = f(t + hh / 2, y + (hh / 2) * k1)
            k3 = f(t + hh / 2, y + (hh / 2) * k2)
            k4 = f(t_new, y + hh * k3)
            y_new = y + (hh / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
            k_end = f(t_new, y_new)
            self.accept(t_new, y_new, k1, k_end)
            t, y, k1 = t_new, y_new, k_end
        return y

    def dopri_segment(self, lo: float, hi: float, y: np.ndarray, meth: EmbeddedRK45) -> np.ndarray:
        f = self.rhs_for(lo, hi)
        t = lo
        h = min(meth.initial_step, meth.max_step)
        k = [None] * 7
        k[0] = f(t, y)
        while t < hi:
            last = t + h * (1 + 1e-10) >= hi
            if last:
                h = hi - t
            self.count()
            for s in range(1, 7):
                acc = y.copy()
                for j, a in enumerate(_A[s]):
                    if a:
                        acc += (h * a) * k[j]
                k[s] = f(hi if (s >= 5 and last) else t + _C[s] * h, acc)
            y_new = acc  # stage 7 argument is the 5th-order solution (FSAL)
            err_vec = h * sum(e * kj for e, kj in zip(_E, k) if e)
            scale = meth.abs_tol + meth.rel_tol * np.maximum(np.abs(y), np.abs(y_new))
            err = float(np.max(np.abs(err_vec) / scale))
            if err <= 1.0:
                t_new = hi if last else t + h
                self.accept(t_new, y_new, k[0], k[6])
                t, y = t_new, y_new
                k[0] = k[6]
                factor = 5.0 if err == 0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
                h = min(h * factor, meth.max_step)
            else:
                h *= max(0.2, 0.9 * err ** -0.2)
                if h < meth.min_step:
                    raise StepUnderflow(f"step {h:.3e} below min_step at t={t!r}")
        return y


def _integrate(A: CoefficientMatrix, t0: float, X0: np.ndarray, t_end: float, cfg: StepperConfig):
    n, m = X0.shape
    y = np.concatenate([X0.ravel(), [0.0]])
    run = _Integration(A, y, n, m, cfg)
    run.times.append(t0)
    run.ys.append(y.copy())
    knots = _segments(A, t0, t_end)
    for lo, hi in zip(knots[:-1], knots[1:]):
        if hi <= lo:
            continue
        if isinstance(cfg.method, FixedRK4):
            y = run.rk4_segment(lo, hi, y, cfg.method.h)
        else:
            y = run.dopri_segment(lo, hi, y, cfg.method)
    return run, knots[1:-1]


def _validate_x0(A: CoefficientMatrix, x0) -> np.ndarray:
    x0 = np.array(x0, dtype=float)
    if x0.ndim != 1 or x0.shape[0] != A.n:
        raise DimensionMismatch(f"x0 has shape {x0.shape}, system dimension is {A.n}")
    if not np.all(np.isfinite(x0)):
        raise NonFiniteInput("x0 contains NaN or inf")
    return x0


def solve_ivp(
    A: CoefficientMatrix,
    t0: float,
    x0,
    t_end: float,
    cfg: StepperConfig | None = None,
) -> Trajectory:
    """Integrate ``x' = A(t) x``, ``x(t0) = x0`` forward to ``t_end``.

    Negative coordinates produced by rounding are kept as they are. A
    zero-length span returns the single node ``(t0, x0)``.
    """
    cfg = cfg or StepperConfig()
    x0 = _validate_x0(A, x0)
    _check_span(A, t0, t_end)
    n = A.n
    run, breaks = _integrate(A, float(t0), x0[:, None], float(t_end), cfg)
    ys = np.array(run.ys)
    states = ys[:, :n]
    states[0] = x0
    integrals = ys[:, n].copy()
    integrals[0] = 0.0
    width = n + 1
    d0 = np.array(run.d0).reshape(-1, width)
    d1 = np.array(run.d1).reshape(-1, width)
    return Trajectory(
        times=np.array(run.times),
        states=states,
        trace_integrals=integrals,
        slopes_start=d0,
        slopes_end=d1,
        breakpoints=tuple(breaks),
        system_id=A.fingerprint,
    )


def sample_at(traj: Trajectory, t: float) -> tuple[np.ndarray, float]:
    """Dense output: cubic Hermite interpolation of ``(x, I)`` at ``t``."""
    times = traj.times
    if not times[0] <= t <= times[-1]:
        raise TimeOutOfRange(f"t={t!r} outside [{times[0]}, {times[-1]}]")
    k = int(np.searchsorted(times, t, side="left"))
    if k < len(times) and times[k] == t:
        return traj.states[k].copy(), float(traj.trace_integrals[k])
    k -= 1
    h = times[k + 1] - times[k]
    s = (t - times[k]) / h
    y0 = np.append(traj.states[k], traj.trace_integrals[k])
    y1 = np.append(traj.states[k + 1], traj.trace_integrals[k + 1])
    h00 = (1 + 2 * s) * (1 - s) ** 2
    h10 = s * (1 - s) ** 2
    h01 = s * s * (3 - 2 * s)
    h11 = s * s * (s - 1)
    y = h00 * y0 + h10 * h * traj.slopes_start[k] + h01 * y1 + h11 * h * traj.slopes_end[k]
    return y[:-1], float(y[-1])


def fundamental_matrix(
    A: CoefficientMatrix,
    t0: float,
    t_end: float,
    cfg: StepperConfig | None = None,
) -> np.ndarray:
    """``Phi(t_end, t0)``: column ``j`` is the solution started from ``e_j``.

    All columns are advanced together on one shared step sequence.
    """
    cfg = cfg or StepperConfig()
    _check_span(A, t0, t_end)
    n = A.n
    if t_end == t0:
        return np.eye(n)
    run, _ = _integrate(A, float(t0), np.eye(n), float(t_end), cfg)
    return run.ys[-1][:-1].reshape(n, n).copy()
