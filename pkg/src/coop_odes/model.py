"""Time-varying coefficient matrices, orthant classification and the Metzler check.

A :class:`CoefficientMatrix` couples a finite :class:`TimeWindow` ``(a, b)``
with one of four body variants describing ``t -> A(t)``:

* :class:`Constant`
* :class:`PiecewiseConstant` (right-continuous pieces, breakpoints inside the window)
* :class:`PolynomialEntries` (per-entry coefficients, lowest degree first)
* :class:`SampledGrid` (linear interpolation between grid nodes)

Everything here is immutable; arrays are stored read-only.
"""

from __future__ import annotations

import enum
import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from .errors import DimensionMismatch, NonFiniteInput, TimeOutOfWindow

__all__ = [
    "TimeWindow",
    "Constant",
    "PiecewiseConstant",
    "PolynomialEntries",
    "SampledGrid",
    "CoefficientMatrix",
    "ToleranceProfile",
    "OrthantTag",
    "OrthantStatus",
    "MetzlerViolation",
    "CooperativityReport",
    "evaluate",
    "trace_at",
    "is_cooperative",
    "classify_orthant",
]

DEFAULT_PROBES = 256


def _frozen(values, ndim: int, name: str) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.ndim != ndim:
        raise DimensionMismatch(f"{name}: expected a {ndim}-d array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteInput(f"{name} contains NaN or inf")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class TimeWindow:
    """Finite open interval ``(a, b)`` with an initial instant ``t0`` inside it."""

    a: float
    b: float
    t0: float

    def __post_init__(self):
        for name in ("a", "b", "t0"):
            if not math.isfinite(getattr(self, name)):
                raise NonFiniteInput(f"window endpoint {name} must be finite")
        if not self.a < self.t0 < self.b:
            raise TimeOutOfWindow(f"need a < t0 < b, got a={self.a}, t0={self.t0}, b={self.b}")

    def contains(self, t: float) -> bool:
        return self.a < t < self.b

    def require(self, t: float) -> None:
        if not self.contains(t):
            raise TimeOutOfWindow(f"t={t!r} outside the open window ({self.a}, {self.b})")


# --- body variants -------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Constant:
    matrix: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "matrix", _frozen(self.matrix, 2, "matrix"))

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def at(self, t: float) -> np.ndarray:
        return self.matrix


@dataclass(frozen=True, eq=False)
class PiecewiseConstant:
    """``pieces[k]`` is active on ``[breakpoints[k-1], breakpoints[k])``.

    The first piece extends down to the window start and the last one up to
    the window end, so ``len(pieces) == len(breakpoints) + 1``.
    """

    breakpoints: np.ndarray
    pieces: np.ndarray

    def __post_init__(self):
        bps = _frozen(self.breakpoints, 1, "breakpoints")
        pieces = _frozen(self.pieces, 3, "pieces")
        if len(pieces) != len(bps) + 1:
            raise DimensionMismatch(
                f"{len(bps)} breakpoints need {len(bps) + 1} pieces, got {len(pieces)}"
            )
        if np.any(np.diff(bps) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        object.__setattr__(self, "breakpoints", bps)
        object.__setattr__(self, "pieces", pieces)

    @property
    def n(self) -> int:
        return self.pieces.shape[1]

    def piece_index(self, t: float) -> int:
        return int(np.searchsorted(self.breakpoints, t, side="right"))

    def at(self, t: float) -> np.ndarray:
        return self.pieces[self.piece_index(t)]


@dataclass(frozen=True, eq=False)
class PolynomialEntries:
    """``coefficients[i, j, d]`` multiplies ``t**d`` in entry ``(i, j)``."""

    coefficients: np.ndarray

    def __post_init__(self):
        coeffs = _frozen(self.coefficients, 3, "coefficients")
        if coeffs.shape[2] == 0:
            raise DimensionMismatch("polynomial entries need at least one coefficient")
        object.__setattr__(self, "coefficients", coeffs)

    @property
    def n(self) -> int:
        return self.coefficients.shape[0]

    @property
    def degree(self) -> int:
        return self.coefficients.shape[2] - 1

    def at(self, t: float) -> np.ndarray:
        # Horner, highest degree first
        c = self.coefficients
        out = c[:, :, -1].copy()
        for d in range(c.shape[2] - 2, -1, -1):
            out *= t
            out += c[:, :, d]
        return out


@dataclass(frozen=True, eq=False)
class SampledGrid:
    """Node values ``values[k]`` at ``times[k]``, linearly interpolated."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        times = _frozen(self.times, 1, "times")
        values = _frozen(self.values, 3, "values")
        if len(times) < 2:
            raise DimensionMismatch("a sampled grid needs at least two nodes")
        if len(values) != len(times):
            raise DimensionMismatch(f"{len(times)} grid times but {len(values)} node matrices")
        if np.any(np.diff(times) <= 0):
            raise ValueError("grid times must be strictly increasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return self.values.shape[1]

    def at(self, t: float) -> np.ndarray:
        k = int(np.searchsorted(self.times, t, side="right")) - 1
        k = min(max(k, 0), len(self.times) - 2)
        t_lo, t_hi = self.times[k], self.times[k + 1]
        w = (t - t_lo) / (t_hi - t_lo)
        return (1.0 - w) * self.values[k] + w * self.values[k + 1]


Body = Union[Constant, PiecewiseConstant, PolynomialEntries, SampledGrid]

_BODY_TAGS = {
    Constant: "constant",
    PiecewiseConstant: "piecewise_constant",
    PolynomialEntries: "polynomial",
    SampledGrid: "sampled_grid",
}


@dataclass(frozen=True, eq=False)
class CoefficientMatrix:
    """The map ``t -> A(t)`` on a finite window."""

    window: TimeWindow
    body: Body
    _fingerprint: str = field(init=False, repr=False, default="")

    def __post_init__(self):
        body = self.body
        if type(body) not in _BODY_TAGS:
            raise TypeError(f"unsupported body type {type(body).__name__}")
        shape = {
            Constant: lambda b: b.matrix.shape,
            PiecewiseConstant: lambda b: b.pieces.shape[1:],
            PolynomialEntries: lambda b: b.coefficients.shape[:2],
            SampledGrid: lambda b: b.values.shape[1:],
        }[type(body)](body)
        if shape[0] != shape[1] or shape[0] < 1:
            raise DimensionMismatch(f"coefficient matrix must be square, got {shape}")
        w = self.window
        if isinstance(body, PiecewiseConstant) and len(body.breakpoints):
            if not (w.a < body.breakpoints[0] and body.breakpoints[-1] < w.b):
                raise TimeOutOfWindow("piecewise breakpoints must lie inside (a, b)")
        if isinstance(body, SampledGrid):
            if body.times[0] > w.a or body.times[-1] < w.b:
                raise TimeOutOfWindow("sampled grid must cover the window endpoints [a, b]")
        digest = hashlib.sha256(
            json.dumps(self.to_dict(), sort_keys=True).encode()
        ).hexdigest()
        object.__setattr__(self, "_fingerprint", digest[:16])

    @property
    def n(self) -> int:
        return self.body.n

    @property
    def kind(self) -> str:
        return _BODY_TAGS[type(self.body)]

    @property
    def fingerprint(self) -> str:
        """Short content hash identifying the system (window included)."""
        return self._fingerprint

    def with_window(self, window: TimeWindow) -> "CoefficientMatrix":
        return CoefficientMatrix(window, self.body)

    def smoothness_breaks(self) -> np.ndarray:
        """Interior instants where ``A`` is not smooth.

        Piecewise breakpoints (jumps) and sampled-grid nodes (kinks) strictly
        inside the window; empty for constant and polynomial bodies.
        """
        body, w = self.body, self.window
        if isinstance(body, PiecewiseConstant):
            return body.breakpoints
        if isinstance(body, SampledGrid):
            t = body.times
            return t[(t > w.a) & (t < w.b)]
        return np.empty(0)

    def segment_function(self, lo: float, hi: float) -> Callable[[float], np.ndarray]:
        """Evaluator valid on the closed interval ``[lo, hi]``.

        The interval must not straddle a smoothness break. At the endpoints the
        returned function uses the one-sided limit from inside the interval,
        which is what a stepper landing exactly on a breakpoint needs.
        """
        body = self.body
        if isinstance(body, Constant):
            m = body.matrix
            return lambda t: m
        if isinstance(body, PiecewiseConstant):
            m = body.at(0.5 * (lo + hi))
            return lambda t: m
        if isinstance(body, PolynomialEntries):
            return body.at
        k = int(np.searchsorted(body.times, 0.5 * (lo + hi), side="right")) - 1
        k = min(max(k, 0), len(body.times) - 2)
        t_lo = body.times[k]
        span = body.times[k + 1] - t_lo
        v_lo = body.values[k]
        dv = body.values[k + 1] - v_lo
        return lambda t: v_lo + ((t - t_lo) / span) * dv

    def map_entries(self, fn: Callable[[np.ndarray], np.ndarray]) -> "CoefficientMatrix":
        """Apply ``fn`` to every n-by-n matrix stored in the body.

        For polynomial bodies ``fn`` receives the constant-term matrix only.
        """
        body = self.body
        if isinstance(body, Constant):
            new = Constant(fn(body.matrix.copy()))
        elif isinstance(body, PiecewiseConstant):
            new = PiecewiseConstant(body.breakpoints, [fn(p.copy()) for p in body.pieces])
        elif isinstance(body, SampledGrid):
            new = SampledGrid(body.times, [fn(v.copy()) for v in body.values])
        else:
            coeffs = body.coefficients.copy()
            coeffs[:, :, 0] = fn(coeffs[:, :, 0].copy())
            new = PolynomialEntries(coeffs)
        return CoefficientMatrix(self.window, new)

    def to_dict(self) -> dict:
        body = self.body
        w = self.window
        out: dict = {"type": self.kind}
        if isinstance(body, Constant):
            out["matrix"] = body.matrix.tolist()
        elif isinstance(body, PiecewiseConstant):
            out["breakpoints"] = body.breakpoints.tolist()
            out["pieces"] = body.pieces.tolist()
        elif isinstance(body, PolynomialEntries):
            out["coefficients"] = body.coefficients.tolist()
        else:
            out["times"] = body.times.tolist()
            out["values"] = body.values.tolist()
        out["window"] = {"a": w.a, "b": w.b, "t0": w.t0}
        return out

    @classmethod
    def from_dict(cls, doc: dict, window: TimeWindow | None = None) -> "CoefficientMatrix":
        """Inverse of :meth:`to_dict`; an explicit ``window`` wins over ``doc['window']``."""
        if window is None:
            w = doc["window"]
            window = TimeWindow(float(w["a"]), float(w["b"]), float(w["t0"]))
        kind = doc["type"]
        if kind == "constant":
            body = Constant(doc["matrix"])
        elif kind == "piecewise_constant":
            body = PiecewiseConstant(doc["breakpoints"], doc["pieces"])
        elif kind == "polynomial":
            body = _polynomial_from_nested(doc["coefficients"])
        elif kind == "sampled_grid":
            body = SampledGrid(doc["times"], doc["values"])
        else:
            raise ValueError(f"unknown system type {kind!r}")
        return cls(window, body)


def _polynomial_from_nested(rows) -> PolynomialEntries:
    # entries may carry coefficient lists of different lengths; pad with zeros
    n = len(rows)
    if any(len(r) != n for r in rows):
        raise DimensionMismatch("polynomial coefficient table must be n-by-n")
    width = max(len(c) for r in rows for c in r) if n else 0
    arr = np.zeros((n, n, max(width, 1)))
    for i, r in enumerate(rows):
        for j, c in enumerate(r):
            arr[i, j, : len(c)] = c
    return PolynomialEntries(arr)


# --- operations ------------------------------------------------------------------------


def evaluate(A: CoefficientMatrix, t: float) -> np.ndarray:
    """Return ``A(t)`` as a fresh array; ``t`` must lie in the open window."""
    A.window.require(t)
    return np.array(A.body.at(t), dtype=float)


def trace_at(A: CoefficientMatrix, t: float) -> float:
    return float(evaluate(A, t).diagonal().sum())


@dataclass(frozen=True)
class ToleranceProfile:
    abs_tol: float = 1e-9
    strict_tol: float = 1e-12
    rel_cert_tol: float = 1e-6
    metzler_tol: float = 0.0

    def __post_init__(self):
        for name in ("abs_tol", "strict_tol", "rel_cert_tol", "metzler_tol"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and nonnegative, got {v!r}")

    @classmethod
    def zero(cls) -> "ToleranceProfile":
        return cls(0.0, 0.0, 0.0, 0.0)


@dataclass(frozen=True)
class MetzlerViolation:
    """Negative off-diagonal entry; ``t`` is ``None`` for constant bodies (all t)."""

    t: float | None
    i: int
    j: int
    value: float


@dataclass(frozen=True)
class CooperativityReport:
    cooperative: bool
    violations: tuple[MetzlerViolation, ...]

    def __bool__(self) -> bool:
        return self.cooperative


def _probe_instants(A: CoefficientMatrix, probes: int) -> list[tuple[float | None, np.ndarray]]:
    body, w = A.body, A.window
    if isinstance(body, Constant):
        return [(None, body.matrix)]
    if isinstance(body, PiecewiseConstant):
        starts = np.concatenate([[w.a], body.breakpoints])
        return [(float(s), p) for s, p in zip(starts, body.pieces)]
    if isinstance(body, SampledGrid):
        # interpolation is linear, so the extremes sit at nodes or window ends
        inner = body.times[(body.times > w.a) & (body.times < w.b)]
        ts = np.concatenate([[w.a], inner, [w.b]])
        return [(float(t), body.at(t)) for t in ts]
    ts = np.linspace(w.a, w.b, probes + 2)
    return [(float(t), body.at(t)) for t in ts]


def is_cooperative(
    A: CoefficientMatrix,
    probes: int = DEFAULT_PROBES,
    tol: ToleranceProfile | None = None,
) -> CooperativityReport:
    """Check that every off-diagonal entry stays ``>= -metzler_tol``.

    Exact for constant, piecewise-constant and sampled-grid bodies. Polynomial
    bodies are sampled at ``probes`` interior points plus both window ends, so a
    sign dip narrower than the probe spacing can be missed.
    """
    tol = tol or ToleranceProfile()
    n = A.n
    off = ~np.eye(n, dtype=bool)
    violations = []
    for t, m in _probe_instants(A, probes):
        bad = off & (m < -tol.metzler_tol)
        for i, j in zip(*np.nonzero(bad)):
            violations.append(MetzlerViolation(t, int(i), int(j), float(m[i, j])))
    return CooperativityReport(not violations, tuple(violations))


class OrthantTag(str, enum.Enum):
    INTERIOR = "Interior"
    BOUNDARY = "BoundaryNonnegative"
    OUTSIDE = "Outside"


@dataclass(frozen=True)
class OrthantStatus:
    tag: OrthantTag
    witness_index: int | None = None


def classify_orthant(x, tol: ToleranceProfile | None = None) -> OrthantStatus:
    """Place ``x`` in the open orthant, on its boundary, or outside it."""
    tol = tol or ToleranceProfile()
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise DimensionMismatch(f"expected a nonempty vector, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise NonFiniteInput("state vector contains NaN or inf")
    k = int(np.argmin(x))
    lo = x[k]
    if lo > tol.strict_tol:
        return OrthantStatus(OrthantTag.INTERIOR)
    if lo < -tol.abs_tol:
        return OrthantStatus(OrthantTag.OUTSIDE, k)
    return OrthantStatus(OrthantTag.BOUNDARY, k)
