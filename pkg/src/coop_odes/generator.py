"""Seeded generation of test systems and initial states.

Random numbers come from a self-contained generator so that a given seed
produces the same systems in any language:

* stream state: ``splitmix64(seed + (stream_id + 1) * 0x9E3779B97F4A7C15)``,
  replaced by ``0x9E3779B97F4A7C15`` if it comes out zero;
* draws: xorshift64* (``x ^= x >> 12; x ^= x << 25; x ^= x >> 27``, output
  ``x * 0x2545F4914F6CDD1D``), all arithmetic mod 2**64;
* floats: ``(u64 >> 11) / 2**53`` in ``[0, 1)``.

The generated window is ``(0, t0 + horizon + margin)`` with ``a = 0`` so that
polynomials with nonnegative coefficients stay nonnegative on it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidConfig
from .model import (
    CoefficientMatrix,
    Constant,
    PiecewiseConstant,
    PolynomialEntries,
    SampledGrid,
    TimeWindow,
)

__all__ = ["splitmix64", "Xorshift64Star", "GeneratorConfig", "stream", "gen_system", "gen_initial"]

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
BODY_KINDS = ("constant", "piecewise_constant", "polynomial", "sampled_grid")

POLY_MAX_DEGREE = 2
GRID_NODES = (3, 8)


def splitmix64(z: int) -> int:
    """The SplitMix64 finalizer applied to ``z + golden`` (one generator step)."""
    z = (z + GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


class Xorshift64Star:
    def __init__(self, state: int):
        state &= MASK64
        self.state = state or GOLDEN

    def next_u64(self) -> int:
        x = self.state
        x ^= x >> 12
        x ^= (x << 25) & MASK64
        x ^= x >> 27
        self.state = x
        return (x * 0x2545F4914F6CDD1D) & MASK64

    def random(self) -> float:
        return (self.next_u64() >> 11) / 9007199254740992.0

    def uniform(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.random()

    def integer(self, lo: int, hi: int) -> int:
        """Uniform integer in the closed range ``[lo, hi]``."""
        return lo + min(int(self.random() * (hi - lo + 1)), hi - lo)

    def weighted(self, weights) -> int:
        total = float(sum(weights))
        u = self.random() * total
        acc = 0.0
        last = 0
        for idx, w in enumerate(weights):
            if w <= 0:
                continue
            last = idx
            acc += w
            if u < acc:
                return idx
        return last


def stream(seed: int, stream_id: int = 0) -> Xorshift64Star:
    """Independent generator for ``(seed, stream_id)``."""
    return Xorshift64Star(splitmix64((seed + (stream_id + 1) * GOLDEN) & MASK64))


@dataclass(frozen=True)
class GeneratorConfig:
    seed: int = 20240229
    n_range: tuple[int, int] = (1, 6)
    body_mix: tuple[float, float, float, float] = (1.0, 1.0, 1.0, 1.0)
    entry_scale: float = 2.0
    cooperative: bool = True
    boundary_fraction: float = 0.25
    pieces_range: tuple[int, int] = (2, 5)
    diagonal: bool = False
    t0: float = 0.5
    horizon: float = 1.0
    window_margin: float = 0.5

    def __post_init__(self):
        if not 0 <= self.seed <= MASK64:
            raise InvalidConfig("seed must be a 64-bit unsigned integer")
        lo, hi = self.n_range
        if not 1 <= lo <= hi:
            raise InvalidConfig(f"bad n_range {self.n_range}")
        if not self.cooperative and hi < 2:
            raise InvalidConfig("non-cooperative systems need n >= 2")
        if self.diagonal and not self.cooperative:
            raise InvalidConfig("diagonal systems are always cooperative")
        if len(self.body_mix) != len(BODY_KINDS):
            raise InvalidConfig("body_mix needs one weight per body kind")
        if any(w < 0 or not math.isfinite(w) for w in self.body_mix) or sum(self.body_mix) <= 0:
            raise InvalidConfig("body_mix weights must be nonnegative and not all zero")
        if not (math.isfinite(self.entry_scale) and self.entry_scale >= 0.1):
            raise InvalidConfig("entry_scale must be finite and at least 0.1")
        if not 0.0 <= self.boundary_fraction <= 1.0:
            raise InvalidConfig("boundary_fraction must lie in [0, 1]")
        plo, phi = self.pieces_range
        if not 1 <= plo <= phi:
            raise InvalidConfig(f"bad pieces_range {self.pieces_range}")
        for name in ("t0", "horizon", "window_margin"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise InvalidConfig(f"{name} must be positive and finite")

    @property
    def t_end(self) -> float:
        return self.t0 + self.horizon

    @property
    def window(self) -> TimeWindow:
        return TimeWindow(0.0, self.t_end + self.window_margin, self.t0)


def _matrix(rng: Xorshift64Star, n: int, cfg: GeneratorConfig, scale: float = 1.0) -> np.ndarray:
    """Diagonal in [-s, s]; off-diagonal in [0, s] (cooperative) or [-s, s]."""
    s = cfg.entry_scale * scale
    m = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i == j:
                m[i, j] = rng.uniform(-s, s)
            elif cfg.diagonal:
                continue
            elif cfg.cooperative:
                m[i, j] = rng.uniform(0.0, s)
            else:
                m[i, j] = rng.uniform(-s, s)
    return m


def _force_negative(
    rng: Xorshift64Star, matrices: list[np.ndarray], n: int, cfg: GeneratorConfig
) -> tuple[int, int]:
    """Make one off-diagonal slot strictly negative in every stored matrix."""
    i = rng.integer(0, n - 1)
    j = rng.integer(0, n - 2)
    if j >= i:
        j += 1
    for m in matrices:
        m[i, j] = -cfg.entry_scale * (1.0 - rng.random())
    return i, j


def gen_system(cfg: GeneratorConfig, rng: Xorshift64Star | None = None) -> CoefficientMatrix:
    """Draw one coefficient matrix; ``rng`` defaults to stream 0 of ``cfg.seed``."""
    rng = rng or stream(cfg.seed)
    lo, hi = cfg.n_range
    if not cfg.cooperative:
        lo = max(lo, 2)
    n = rng.integer(lo, hi)
    kind = BODY_KINDS[rng.weighted(cfg.body_mix)]
    window = cfg.window

    if kind == "constant":
        m = _matrix(rng, n, cfg)
        if not cfg.cooperative:
            _force_negative(rng, [m], n, cfg)
        body = Constant(m)
    elif kind == "piecewise_constant":
        count = rng.integer(*cfg.pieces_range)
        breaks: list[float] = []
        while len(breaks) < count - 1:
            b = rng.uniform(cfg.t0, cfg.t_end)
            if cfg.t0 < b < cfg.t_end and b not in breaks:
                breaks.append(b)
        pieces = [_matrix(rng, n, cfg) for _ in range(count)]
        if not cfg.cooperative:
            _force_negative(rng, pieces, n, cfg)
        body = PiecewiseConstant(sorted(breaks), pieces)
    elif kind == "polynomial":
        degree = rng.integer(0, POLY_MAX_DEGREE)
        # t^d coefficient scaled by 1 / ((degree + 1) b^d): |entry| <= entry_scale on (0, b)
        coeffs = np.zeros((n, n, degree + 1))
        for d in range(degree + 1):
            coeffs[:, :, d] = _matrix(rng, n, cfg, 1.0 / ((degree + 1) * window.b**d))
        if not cfg.cooperative:
            i, j = _force_negative(rng, [coeffs[:, :, 0]], n, cfg)
            coeffs[i, j, 1:] = -np.abs(coeffs[i, j, 1:])
        body = PolynomialEntries(coeffs)
    else:
        nodes = rng.integer(*GRID_NODES)
        times = np.linspace(window.a, window.b, nodes)
        values = [_matrix(rng, n, cfg) for _ in range(nodes)]
        if not cfg.cooperative:
            _force_negative(rng, values, n, cfg)
        body = SampledGrid(times, values)
    return CoefficientMatrix(window, body)


def gen_initial(cfg: GeneratorConfig, n: int, rng: Xorshift64Star | None = None) -> np.ndarray:
    """Interior point with coordinates in [0.1, entry_scale], or a boundary point.

    Boundary points (chosen with probability ``boundary_fraction``) carry
    between 1 and n exact zeros; the other coordinates lie in (0, entry_scale].
    """
    if n < 1:
        raise InvalidConfig("dimension must be positive")
    rng = rng or stream(cfg.seed, 1)
    s = cfg.entry_scale
    if rng.random() < cfg.boundary_fraction:
        zeros = rng.integer(1, n)
        idx = list(range(n))
        for k in range(n - 1, 0, -1):  # Fisher-Yates
            r = rng.integer(0, k)
            idx[k], idx[r] = idx[r], idx[k]
        x = np.array([s * (1.0 - rng.random()) for _ in range(n)])
        x[idx[:zeros]] = 0.0
        return x
    return np.array([rng.uniform(0.1, s) for _ in range(n)])
