"""Ground truth independent of the stepper.

``expm`` gives exact-in-floating-point solutions of constant-coefficient
systems; ``epsilon_perturb`` and ``continuous_dependence_probe`` reproduce the
classical route through strongly cooperative approximations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NonFiniteInput
from .integrator import StepperConfig, solve_ivp
from .model import CoefficientMatrix

__all__ = [
    "expm",
    "SignCheck",
    "metzler_exponential_sign_check",
    "epsilon_perturb",
    "EpsilonSchedule",
    "ProbeRow",
    "continuous_dependence_probe",
    "deviations_nonincreasing",
]

TAYLOR_ORDER = 20
SCALING_THRESHOLD = 0.5


def expm(M) -> np.ndarray:
    """Matrix exponential by scaling and squaring a degree-20 Taylor polynomial.

    ``M`` is scaled by ``2**-s`` with the smallest ``s >= 0`` giving
    ``||M / 2**s||_inf <= 0.5``; the result is squared ``s`` times.
    """
    M = np.array(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expm needs a square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise NonFiniteInput("matrix contains NaN or inf")
    n = M.shape[0]
    norm = float(np.abs(M).sum(axis=1).max()) if n else 0.0
    s = 0
    if norm > SCALING_THRESHOLD:
        s = max(0, math.ceil(math.log2(norm / SCALING_THRESHOLD)))
        while norm / 2.0**s > SCALING_THRESHOLD:
            s += 1
    X = M / 2.0**s
    eye = np.eye(n)
    # Horner form of sum_{k=0}^{20} X^k / k!
    E = eye / math.factorial(TAYLOR_ORDER)
    for k in range(TAYLOR_ORDER - 1, -1, -1):
        E = X @ E + eye / math.factorial(k)
    for _ in range(s):
        E = E @ E
    return E


@dataclass(frozen=True)
class SignCheck:
    nonnegative: bool
    witness: tuple[float, int, int, float] | None = None  # (t, i, j, value)

    def __bool__(self) -> bool:
        return self.nonnegative


def metzler_exponential_sign_check(M, t_probe, abs_tol: float = 1e-9) -> SignCheck:
    """Is ``expm(t M)`` entrywise ``>= -abs_tol`` at every probe time?

    Probes are scanned in the given order and entries row-major; the first
    offending entry is the witness.
    """
    M = np.array(M, dtype=float)
    probes = np.atleast_1d(np.asarray(t_probe, dtype=float))
    if not np.all(np.isfinite(probes)):
        raise NonFiniteInput("probe times contain NaN or inf")
    if np.any(probes <= 0):
        raise ValueError("probe times must be positive")
    for t in probes:
        E = expm(t * M)
        bad = np.argwhere(E < -abs_tol)
        if len(bad):
            i, j = (int(v) for v in bad[0])
            return SignCheck(False, (float(t), i, j, float(E[i, j])))
    return SignCheck(True)


def _add_off_diagonal(eps: float):
    def fn(m: np.ndarray) -> np.ndarray:
        off = ~np.eye(m.shape[0], dtype=bool)
        m[off] += eps
        return m

    return fn


def epsilon_perturb(A: CoefficientMatrix, eps: float) -> CoefficientMatrix:
    """Add ``eps`` to every off-diagonal entry, keeping the body variant and breakpoints."""
    if not (math.isfinite(eps) and eps > 0):
        raise ValueError(f"eps must be positive and finite, got {eps!r}")
    return A.map_entries(_add_off_diagonal(eps))


@dataclass(frozen=True)
class EpsilonSchedule:
    values: tuple[float, ...] = (1e-1, 1e-2, 1e-3, 1e-4)

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if not vals:
            raise ValueError("schedule must not be empty")
        if not all(math.isfinite(v) and v > 0 for v in vals):
            raise ValueError("schedule values must be positive and finite")
        if any(b >= a for a, b in zip(vals, vals[1:])):
            raise ValueError("schedule must be strictly decreasing")
        object.__setattr__(self, "values", vals)


@dataclass(frozen=True)
class ProbeRow:
    eps: float
    deviation: float
    x_end: np.ndarray = field(repr=False, compare=False)


def continuous_dependence_probe(
    A: CoefficientMatrix,
    x0,
    t0: float,
    t_end: float,
    schedule: EpsilonSchedule | None = None,
    cfg: StepperConfig | None = None,
) -> list[ProbeRow]:
    """Sup-norm distance at ``t_end`` between each perturbed solve and the original."""
    schedule = schedule or EpsilonSchedule()
    base = solve_ivp(A, t0, x0, t_end, cfg).states[-1]
    rows = []
    for eps in schedule.values:
        x_eps = solve_ivp(epsilon_perturb(A, eps), t0, x0, t_end, cfg).states[-1]
        rows.append(ProbeRow(eps, float(np.max(np.abs(x_eps - base))), x_eps))
    return rows


def deviations_nonincreasing(rows: list[ProbeRow], slack: float = 1e-12) -> bool:
    devs = [r.deviation for r in rows]
    return all(b <= a + slack for a, b in zip(devs, devs[1:]))
