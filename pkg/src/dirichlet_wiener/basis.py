"""Haar and Schauder functions on [0, 1], dyadic arithmetic and the
Levy-Ciesielski correspondence between paths and Wiener coordinates.

Flat indices follow ``g_{d(r-1)+j} = H_r e_j``: index ``i`` carries the Haar
rank ``r = (i - 1) // d + 1`` in direction ``j = (i - 1) % d + 1``.  A rank
``r >= 2`` decomposes as ``r = 2**m + k`` with ``1 <= k <= 2**m``; its Haar
function is constant on cells of width ``2**-(m + 1)``, which is the grid
level needed to integrate against it exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from numbers import Rational

import numpy as np

from .errors import ResolutionError

#: Finest level at which a time is still treated as a dyadic point.
MAX_DYADIC_LEVEL = 40


@dataclass(frozen=True)
class DyadicRational:
    """The number ``numerator * 2**-level`` in (0, 1], kept in reduced form."""

    numerator: int
    level: int

    def __post_init__(self):
        if self.level < 0:
            raise ValueError("level must be nonnegative")
        if self.numerator <= 0 or self.numerator > (1 << self.level):
            raise ValueError(f"{self.numerator}/2^{self.level} is not in (0, 1]")
        if self.level > 0 and self.numerator % 2 == 0:
            raise ValueError("dyadic rational is not reduced")

    @classmethod
    def from_value(cls, x) -> "DyadicRational":
        """Exact conversion from an int, Fraction, float or ``"p/q"`` string.

        Raises ``TypeError`` if ``x`` is not a dyadic rational of level at
        most :data:`MAX_DYADIC_LEVEL`.
        """
        if isinstance(x, DyadicRational):
            return x
        if isinstance(x, str):
            frac = Fraction(x)
        elif isinstance(x, (float, np.floating)):
            frac = Fraction(float(x))
        elif isinstance(x, np.integer):
            frac = Fraction(int(x))
        elif isinstance(x, Rational):
            frac = Fraction(x)
        else:
            raise TypeError(f"cannot interpret {x!r} as a dyadic rational")
        den = frac.denominator
        if den & (den - 1):
            raise TypeError(f"{x!r} is not dyadic")
        level = den.bit_length() - 1
        if level > MAX_DYADIC_LEVEL:
            raise TypeError(f"{x!r} is finer than level {MAX_DYADIC_LEVEL}")
        return cls(frac.numerator, level)

    @property
    def fraction(self) -> Fraction:
        return Fraction(self.numerator, 1 << self.level)

    @property
    def value(self) -> float:
        return self.numerator / (1 << self.level)

    @property
    def digits(self) -> tuple[int, ...]:
        """Binary digits ``c_1..c_r`` with ``c_r = 1``; empty for ``s = 1``."""
        if self.level == 0:
            return ()
        return tuple(int(c) for c in format(self.numerator, f"0{self.level}b"))

    def __float__(self):
        return self.value

    def __str__(self):
        return f"{self.numerator}/{1 << self.level}"


def as_dyadic(s) -> DyadicRational | None:
    """Return ``s`` as a :class:`DyadicRational`, or None when it is not one."""
    try:
        return DyadicRational.from_value(s)
    except (TypeError, ValueError):
        return None


def dyadic_digits(s) -> tuple[int, ...]:
    """Binary digits of a dyadic point; raises ``TypeError`` for other input."""
    return DyadicRational.from_value(s).digits


@dataclass(frozen=True)
class BasisIndex:
    """Flat basis index ``i`` in dimension ``d`` with its Haar decomposition."""

    i: int
    d: int = 1

    def __post_init__(self):
        if self.i < 1 or self.d < 1:
            raise ValueError("index and dimension must be positive")

    @classmethod
    def from_rank(cls, r: int, j: int, d: int = 1) -> "BasisIndex":
        if not 1 <= j <= d:
            raise ValueError(f"direction {j} outside 1..{d}")
        return cls(d * (r - 1) + j, d)

    @property
    def r(self) -> int:
        return (self.i - 1) // self.d + 1

    @property
    def j(self) -> int:
        return (self.i - 1) % self.d + 1

    @property
    def mk(self) -> tuple[int, int] | None:
        return rank_mk(self.r)

    @property
    def level(self) -> int:
        return haar_level(self.r)


def rank_mk(r: int) -> tuple[int, int] | None:
    """``(m, k)`` with ``r = 2**m + k``; None for the constant function."""
    if r < 1:
        raise ValueError("Haar rank must be positive")
    if r == 1:
        return None
    m = (r - 1).bit_length() - 1
    return m, r - (1 << m)


def haar_level(r: int) -> int:
    """Grid level on which ``H_r`` is constant cell by cell."""
    mk = rank_mk(r)
    return 0 if mk is None else mk[0] + 1


def _check_times(t):
    t = np.asarray(t, dtype=float)
    if np.any((t < 0.0) | (t > 1.0)) or np.any(np.isnan(t)):
        raise ValueError("time outside [0, 1]")
    return t


def haar_eval(r: int, t):
    """Haar function ``H_r`` at ``t`` (scalar or array), right-continuous,
    with the left limit taken at ``t = 1``."""
    t = _check_times(t)
    mk = rank_mk(r)
    if mk is None:
        out = np.ones_like(t)
    else:
        m, k = mk
        n_cells = 1 << (m + 1)
        cell = np.minimum(np.floor(t * n_cells), n_cells - 1).astype(np.int64)
        out = np.where(cell == 2 * k - 2, 1.0, np.where(cell == 2 * k - 1, -1.0, 0.0))
        out = out * 2.0 ** (m / 2)
    return float(out) if out.ndim == 0 else out


def schauder_1d(r: int, s):
    """Scalar Schauder function ``int_0^s H_r`` in closed form."""
    s = _check_times(s)
    mk = rank_mk(r)
    if mk is None:
        out = s.copy()
    else:
        m, k = mk
        half = 2.0 ** -(m + 1)
        mid = (2 * k - 1) * half
        out = 2.0 ** (m / 2) * np.maximum(0.0, half - np.abs(s - mid))
    return float(out) if out.ndim == 0 else out


def schauder_eval(i, s, d: int = 1):
    """Vector Schauder function ``S_i(s)`` in R^d; trailing axis is the direction."""
    idx = i if isinstance(i, BasisIndex) else BasisIndex(int(i), d)
    s = np.asarray(s, dtype=float)
    out = np.zeros(s.shape + (idx.d,))
    out[..., idx.j - 1] = schauder_1d(idx.r, s)
    return out


def support_ranks(s, max_level: int | None = None) -> list[int]:
    """Haar ranks ``r`` with ``S_r(s) != 0``.

    For a dyadic ``s`` the list is finite and ``max_level`` may be omitted;
    otherwise it is truncated at ``max_level``.
    """
    dy = as_dyadic(s)
    x = dy.value if dy is not None else float(s)
    if not 0.0 < x <= 1.0:
        raise ValueError("time must lie in (0, 1]")
    top = dy.level if dy is not None else None
    if max_level is not None:
        top = max_level if top is None else min(top, max_level)
    if top is None:
        raise ValueError("non-dyadic time needs a max_level")
    ranks = [1]
    for p in range(1, top + 1):
        scale = 1 << (p - 1)
        if dy is not None:
            cell = (dy.numerator * scale) >> dy.level
            exact_edge = (dy.numerator * scale) % (1 << dy.level) == 0
        else:
            cell = math.floor(x * scale)
            exact_edge = False
        if exact_edge or cell >= scale:
            continue
        ranks.append(scale + 1 + cell)
    return ranks


def n_ranks(grid_level: int) -> int:
    return 1 << grid_level


@lru_cache(maxsize=64)
def schauder_grid(grid_level: int) -> np.ndarray:
    """``S_r`` at the grid points ``l 2**-L``, shape ``(2**L, 2**L + 1)``."""
    t = np.linspace(0.0, 1.0, (1 << grid_level) + 1)
    mat = np.stack([schauder_1d(r, t) for r in range(1, n_ranks(grid_level) + 1)])
    mat.setflags(write=False)
    return mat


@lru_cache(maxsize=64)
def haar_cells(grid_level: int) -> np.ndarray:
    """Cell values of ``H_r``, shape ``(2**L, 2**L)``; exact for ranks up to
    ``2**L`` because those Haar functions are constant on every cell."""
    n = 1 << grid_level
    mid = (np.arange(n) + 0.5) / n
    mat = np.stack([haar_eval(r, mid) for r in range(1, n + 1)])
    mat.setflags(write=False)
    return mat


def _ranks_for(n: int, d: int, grid_level: int) -> int:
    rmax = -(-n // d)
    if n > d * n_ranks(grid_level):
        raise ResolutionError(
            f"index {n} needs Haar rank {rmax} (level {haar_level(rmax)}) "
            f"but the grid has level {grid_level}"
        )
    return rmax


@dataclass(frozen=True, eq=False)
class PathSample:
    """Piecewise linear path in R^d on the uniform grid of level ``grid_level``.

    ``values`` has shape ``(2**grid_level + 1, d)`` and starts at the origin.
    """

    values: np.ndarray
    grid_level: int

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        if vals.shape[0] != (1 << self.grid_level) + 1:
            raise ValueError(
                f"expected {(1 << self.grid_level) + 1} grid values, got {vals.shape[0]}"
            )
        if np.any(vals[0] != 0.0):
            raise ValueError("paths must start at the origin")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def zero(cls, grid_level: int, d: int = 1) -> "PathSample":
        return cls(np.zeros(((1 << grid_level) + 1, d)), grid_level)

    @property
    def d(self) -> int:
        return self.values.shape[1]

    @property
    def grid(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, (1 << self.grid_level) + 1)

    def __call__(self, t):
        return evaluate_paths(self.values, self.grid_level, t)


def evaluate_paths(values: np.ndarray, grid_level: int, t):
    """Linear interpolation of grid values at times ``t``.

    ``values`` is ``(..., G, d)``; the result is ``(..., *t.shape, d)``.
    """
    t = _check_times(t)
    n = 1 << grid_level
    pos = t * n
    left = np.minimum(np.floor(pos).astype(np.int64), n - 1)
    w = (pos - left)[..., None]
    lo = np.take(values, left, axis=-2)
    hi = np.take(values, left + 1, axis=-2)
    return lo + w * (hi - lo)


def wiener_coefficients_batch(values: np.ndarray, n: int, grid_level: int) -> np.ndarray:
    """``int <g_i, dgamma>`` for ``i = 1..n`` on a stack of paths ``(..., G, d)``."""
    d = values.shape[-1]
    rmax = _ranks_for(n, d, grid_level)
    incr = np.diff(values, axis=-2)
    coeffs = np.einsum("rc,...cj->...rj", haar_cells(grid_level)[:rmax], incr)
    return coeffs.reshape(coeffs.shape[:-2] + (rmax * d,))[..., :n]


def wiener_coefficients(path: PathSample, n: int) -> np.ndarray:
    """Wiener coordinates of a path; exact for piecewise linear paths.

    Raises :class:`ResolutionError` if index ``n`` is finer than the grid.
    """
    return wiener_coefficients_batch(path.values, n, path.grid_level)


def synthesize_values(coeffs: np.ndarray, grid_level: int, d: int = 1) -> np.ndarray:
    """Grid values of ``sum_i c_i S_i`` for coefficient arrays ``(..., n)``."""
    coeffs = np.asarray(coeffs, dtype=float)
    n = coeffs.shape[-1]
    rmax = _ranks_for(n, d, grid_level)
    pad = rmax * d - n
    if pad:
        coeffs = np.concatenate([coeffs, np.zeros(coeffs.shape[:-1] + (pad,))], axis=-1)
    c = coeffs.reshape(coeffs.shape[:-1] + (rmax, d))
    return np.einsum("rg,...rj->...gj", schauder_grid(grid_level)[:rmax], c)


def synthesize_path(coeffs, grid_level: int, d: int = 1) -> PathSample:
    """Levy-Ciesielski synthesis; inverse of :func:`wiener_coefficients`."""
    return PathSample(synthesize_values(coeffs, grid_level, d), grid_level)
