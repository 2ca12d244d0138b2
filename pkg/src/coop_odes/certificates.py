"""The product-of-coordinates certificate and the orthant-invariance checks.

Along a solution of a cooperative system the product ``xi = x_1 * ... * x_n``
satisfies ``xi' >= trace(A) * xi`` and hence
``xi(t) >= xi(t0) * exp(I(t))`` with ``I(t)`` the integral of the trace from
``t0``. :func:`check_certificate` tests both forms on a sampled trajectory;
:func:`check_M1` and :func:`check_M2` test the coordinates directly.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Union

import numpy as np

from .errors import EmptyTrajectory, MixedSystems, PreconditionViolated
from .integrator import Trajectory
from .model import CoefficientMatrix, OrthantTag, ToleranceProfile, classify_orthant, is_cooperative

__all__ = [
    "Verdict",
    "CertificateReport",
    "MonotonicityVerdict",
    "ConsistencySummary",
    "product_series",
    "trace_bound_series",
    "check_certificate",
    "check_M1",
    "check_M2",
    "implies_check",
]

MARGIN_FLOOR = np.finfo(float).tiny
FD_SLACK_FACTOR = 10.0
_EPS = np.finfo(float).eps


class Verdict(str, enum.Enum):
    CERTIFIED = "CertifiedPositive"
    VIOLATION = "ViolationFound"
    NOT_APPLICABLE = "NotApplicable"


@dataclass(frozen=True, eq=False)
class CertificateReport:
    times: np.ndarray
    xi: np.ndarray
    bound: np.ndarray
    margin: np.ndarray
    verdict: Verdict
    first_violation_time: float | None = None
    # samples (t_{k-1}, t_k) around the first violation; no root refinement
    violation_bracket: tuple[float, float] | None = None
    integral_failures: tuple[int, ...] = ()
    derivative_failures: tuple[int, ...] = ()
    log_domain_samples: tuple[int, ...] = ()
    system_id: str = ""

    @property
    def min_margin(self) -> float:
        return float(self.margin.min())

    @property
    def max_abs_margin(self) -> float:
        return float(np.abs(self.margin).max())


@dataclass(frozen=True)
class MonotonicityVerdict:
    property: str  # "M1" or "M2"
    holds: bool
    worst_time: float
    worst_coordinate: int
    worst_value: float
    system_id: str = ""


@dataclass(frozen=True)
class ConsistencySummary:
    system_id: str
    cooperative: bool
    checked: int
    contradictions: tuple[str, ...] = ()
    notes: tuple[str, ...] = field(default=())

    @property
    def consistent(self) -> bool:
        return not self.contradictions


def _require_nonempty(traj: Trajectory) -> None:
    if len(traj.times) == 0:
        raise EmptyTrajectory("trajectory has no samples")


def product_series(traj: Trajectory) -> tuple[np.ndarray, np.ndarray]:
    _require_nonempty(traj)
    states = traj.states
    xi = states[:, 0].copy()
    for i in range(1, states.shape[1]):
        xi *= states[:, i]
    return traj.times, xi


def trace_bound_series(traj: Trajectory) -> tuple[np.ndarray, np.ndarray]:
    times, xi = product_series(traj)
    return times, xi[0] * np.exp(traj.trace_integrals)


def _log_product(states: np.ndarray) -> np.ndarray:
    out = np.full(len(states), np.nan)
    ok = np.all(states > 0, axis=1)
    out[ok] = np.log(states[ok]).sum(axis=1)
    return out


def _derivative_failures(traj: Trajectory, xi: np.ndarray, tol: ToleranceProfile) -> list[int]:
    """Samples where the centered difference of xi drops below trace * xi - slack.

    With ``g = xi'/xi = sum x_i'/x_i``, ``rho = max(1, sum |x_i'/x_i|)`` and
    ``dg`` the centered difference of ``g``, the truncation slack is
    ``C h_- h_+ |xi| max(rho, |trace|) (rho**2 + |dg|)``, a stand-in for the
    third derivative of xi that stays meaningful when A(t) varies quickly.
    Skipped at the first and last sample, at smoothness breaks, and wherever
    a coordinate is nonpositive (the integrated check still covers those).
    """
    t = traj.times
    K = len(t)
    if K < 3:
        return []
    n = traj.n
    breaks = set(traj.breakpoints)
    states = traj.states
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = traj.slopes_start[:, :n] / states[:-1]
    g = ratios.sum(axis=1)
    failures = []
    for k in range(1, K - 1):
        if t[k] in breaks or np.any(states[k - 1 : k + 2] <= 0):
            continue
        hm, hp = t[k] - t[k - 1], t[k + 1] - t[k]
        fd = (hm * hm * xi[k + 1] - hp * hp * xi[k - 1] + (hp * hp - hm * hm) * xi[k]) / (
            hm * hp * (hm + hp)
        )
        tr = traj.slopes_start[k, -1]
        rhs = tr * xi[k]
        rho = max(1.0, float(np.abs(ratios[k]).sum()))
        # no slopes_start entry exists at the final node
        g_next = g[k + 1] if k + 1 < K - 1 else g[k]
        dg = abs(g_next - g[k - 1]) / (hm + hp)
        size = abs(xi[k])
        slack = (
            FD_SLACK_FACTOR * hm * hp * size * max(rho, abs(tr)) * (rho * rho + dg)
            + tol.rel_cert_tol * max(size, abs(rhs))
            + 16 * n * _EPS * max(abs(xi[k - 1]), size, abs(xi[k + 1])) / min(hm, hp)
        )
        if fd < rhs - slack:
            failures.append(k)
    return failures


def check_certificate(traj: Trajectory, tol: ToleranceProfile | None = None) -> CertificateReport:
    """Compare xi against its trace-exponential lower bound at every sample.

    The verdict is ``NotApplicable`` unless the initial state is in the open
    orthant. Samples where xi or the bound underflows while every coordinate
    is still positive are judged on ``log xi >= log xi(t0) + I - rel_cert_tol``.
    """
    tol = tol or ToleranceProfile()
    _require_nonempty(traj)
    times, xi = product_series(traj)
    bound = xi[0] * np.exp(traj.trace_integrals)
    bound[0] = xi[0]
    margin = (xi - bound) / np.maximum(np.abs(bound), MARGIN_FLOOR)

    applicable = classify_orthant(traj.x0, tol).tag is OrthantTag.INTERIOR
    if not applicable:
        return CertificateReport(
            times, xi, bound, margin, Verdict.NOT_APPLICABLE, system_id=traj.system_id
        )

    log_xi = _log_product(traj.states)
    log_bound = log_xi[0] + traj.trace_integrals
    underflow = (
        np.all(traj.states > 0, axis=1)
        & ((np.abs(xi) < MARGIN_FLOOR) | (np.abs(bound) < MARGIN_FLOOR))
    )
    margin[underflow] = np.expm1(log_xi[underflow] - log_bound[underflow])

    linear_ok = xi >= bound * (1.0 - tol.rel_cert_tol) - tol.abs_tol
    log_ok = log_xi - log_bound >= -tol.rel_cert_tol
    passed = np.where(underflow, log_ok, linear_ok)
    integral_failures = [int(k) for k in np.flatnonzero(~passed)]
    derivative_failures = _derivative_failures(traj, xi, tol)

    failing = sorted(set(integral_failures) | set(derivative_failures))
    first_t = bracket = None
    verdict = Verdict.CERTIFIED
    if failing:
        k = failing[0]
        verdict = Verdict.VIOLATION
        first_t = float(times[k])
        bracket = (float(times[max(k - 1, 0)]), first_t)
    return CertificateReport(
        times,
        xi,
        bound,
        margin,
        verdict,
        first_violation_time=first_t,
        violation_bracket=bracket,
        integral_failures=tuple(integral_failures),
        derivative_failures=tuple(derivative_failures),
        log_domain_samples=tuple(int(k) for k in np.flatnonzero(underflow)),
        system_id=traj.system_id,
    )


def _worst(traj: Trajectory, start: int) -> tuple[int, int, float]:
    block = traj.states[start:]
    flat = int(np.argmin(block))
    k, i = divmod(flat, block.shape[1])
    return k + start, i, float(block[k, i])


def check_M1(traj: Trajectory, tol: ToleranceProfile | None = None) -> MonotonicityVerdict:
    """Nonnegative orthant invariance: every sample keeps ``min x_i >= -abs_tol``."""
    tol = tol or ToleranceProfile()
    _require_nonempty(traj)
    status = classify_orthant(traj.x0, tol)
    if status.tag is OrthantTag.OUTSIDE:
        raise PreconditionViolated(
            f"x0 lies outside the nonnegative orthant (coordinate {status.witness_index})"
        )
    k, i, v = _worst(traj, 0)
    return MonotonicityVerdict("M1", v >= -tol.abs_tol, float(traj.times[k]), i, v, traj.system_id)


def check_M2(traj: Trajectory, tol: ToleranceProfile | None = None) -> MonotonicityVerdict:
    """Open orthant invariance: every sample after ``t0`` keeps ``min x_i > strict_tol``."""
    tol = tol or ToleranceProfile()
    _require_nonempty(traj)
    if classify_orthant(traj.x0, tol).tag is not OrthantTag.INTERIOR:
        raise PreconditionViolated("x0 is not in the open orthant")
    start = 1 if len(traj.times) > 1 else 0
    k, i, v = _worst(traj, start)
    return MonotonicityVerdict("M2", v > tol.strict_tol, float(traj.times[k]), i, v, traj.system_id)


Report = Union[CertificateReport, MonotonicityVerdict]


def implies_check(A: CoefficientMatrix, reports: Iterable[Report]) -> ConsistencySummary:
    """Cross-check a batch of results against the cooperativity of ``A``.

    A cooperative system with a failed certificate or a failed M1/M2 verdict is
    a contradiction (toolkit bug or tolerance misconfiguration). A
    non-cooperative system that still passes is only noted.
    """
    reports = list(reports)
    sid = A.fingerprint
    foreign = {r.system_id for r in reports} - {sid}
    if foreign:
        raise MixedSystems(f"reports come from systems {sorted(foreign)}, expected {sid}")
    cooperative = is_cooperative(A).cooperative
    contradictions, notes = [], []
    for idx, r in enumerate(reports):
        if isinstance(r, CertificateReport):
            failed = r.verdict is Verdict.VIOLATION
            passed = r.verdict is Verdict.CERTIFIED
            what = f"certificate violation at t={r.first_violation_time}"
        else:
            failed, passed = not r.holds, r.holds
            what = f"{r.property} fails at t={r.worst_time} (x_{r.worst_coordinate}={r.worst_value})"
        if cooperative and failed:
            contradictions.append(f"report {idx}: cooperative system but {what}")
        elif not cooperative and passed:
            notes.append(f"report {idx}: non-cooperative system passes (allowed)")
    return ConsistencySummary(sid, cooperative, len(reports), tuple(contradictions), tuple(notes))
