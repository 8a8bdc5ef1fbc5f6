"""Cylindrical functions ``F(gamma) = f(gamma(s_1), ..., gamma(s_k))``, their
derivatives along Schauder directions, the Dirichlet energy and the carre du
champ.

Variables of ``f`` are ordered time-major: variable ``(i' - 1) d + (j - 1)``
is coordinate ``j`` of ``gamma(s_i')``.
"""

from __future__ import annotations

import re
from fractions import Fraction
from dataclasses import dataclass
from itertools import product

import numpy as np

from .basis import (
    BasisIndex,
    PathSample,
    as_dyadic,
    evaluate_paths,
    schauder_1d,
    support_ranks,
)
from .errors import ClassError, DivergentSeriesError
from .montecarlo import Estimate, block_rng, brownian_values, map_blocks
from .spectral import CONVERGES, EigenvalueSequence, closability_report, tail_envelope
from .weight import WeightModel, ZeroWeight, log_phi_values


class Polynomial:
    """Multivariate polynomial with exact derivatives.

    ``terms`` maps exponent tuples of length ``nvars`` to coefficients.
    """

    def __init__(self, terms: dict, nvars: int):
        self.nvars = nvars
        clean = {}
        for exps, coef in terms.items():
            exps = tuple(int(e) for e in exps)
            if len(exps) != nvars or any(e < 0 for e in exps):
                raise ValueError(f"bad exponent tuple {exps}")
            if coef != 0:
                clean[exps] = clean.get(exps, 0.0) + float(coef)
        self.terms = {e: c for e, c in clean.items() if c != 0}

    @classmethod
    def constant(cls, c: float, nvars: int) -> "Polynomial":
        return cls({(0,) * nvars: c}, nvars)

    @classmethod
    def variable(cls, k: int, nvars: int) -> "Polynomial":
        exps = [0] * nvars
        exps[k] = 1
        return cls({tuple(exps): 1.0}, nvars)

    @property
    def degree(self) -> int:
        return max((sum(e) for e in self.terms), default=0)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1])
        for exps, coef in self.terms.items():
            term = np.full(x.shape[:-1], coef)
            for k, e in enumerate(exps):
                if e:
                    term = term * x[..., k] ** e
            out = out + term
        return out

    def derivative(self, k: int) -> "Polynomial":
        terms = {}
        for exps, coef in self.terms.items():
            if exps[k]:
                new = list(exps)
                new[k] -= 1
                terms[tuple(new)] = terms.get(tuple(new), 0.0) + coef * exps[k]
        return Polynomial(terms, self.nvars)

    def gradient(self, x):
        return np.stack([self.derivative(k)(x) for k in range(self.nvars)], axis=-1)

    def hessian(self, x):
        rows = []
        for a in range(self.nvars):
            da = self.derivative(a)
            rows.append(np.stack([da.derivative(b)(x) for b in range(self.nvars)], axis=-1))
        return np.stack(rows, axis=-2)

    def __add__(self, other):
        if not isinstance(other, Polynomial):
            other = Polynomial.constant(float(other), self.nvars)
        terms = dict(self.terms)
        for e, c in other.terms.items():
            terms[e] = terms.get(e, 0.0) + c
        return Polynomial(terms, self.nvars)

    __radd__ = __add__

    def __mul__(self, other):
        if not isinstance(other, Polynomial):
            return Polynomial({e: c * float(other) for e, c in self.terms.items()}, self.nvars)
        terms = {}
        for (e1, c1), (e2, c2) in product(self.terms.items(), other.terms.items()):
            e = tuple(a + b for a, b in zip(e1, e2))
            terms[e] = terms.get(e, 0.0) + c1 * c2
        return Polynomial(terms, self.nvars)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-other if isinstance(other, Polynomial) else -float(other))

    def __repr__(self):
        return f"Polynomial({self.terms!r}, nvars={self.nvars})"


class CallbackBase:
    """``f`` given as callables for value, gradient and Hessian."""

    def __init__(self, f, grad, hess, nvars: int):
        self.f, self.grad, self.hess, self.nvars = f, grad, hess, nvars

    def __call__(self, x):
        return self.f(np.asarray(x, dtype=float))

    def gradient(self, x):
        return self.grad(np.asarray(x, dtype=float))

    def hessian(self, x):
        return self.hess(np.asarray(x, dtype=float))


@dataclass(frozen=True, eq=False)
class CylindricalFunction:
    """``F(gamma) = f(gamma(s_1), ..., gamma(s_k))``.

    Class ``Y`` when every time is dyadic, ``Z`` otherwise.  A final time
    ``s_k < 1`` is allowed; appending 1 with no dependence gives the same
    function.
    """

    times: tuple
    base: object
    d: int = 1

    def __post_init__(self):
        times = tuple(float(Fraction(t)) if isinstance(t, str) else float(t) for t in self.times)
        if not times:
            raise ValueError("need at least one time")
        if any(not 0.0 < t <= 1.0 for t in times) or any(a >= b for a, b in zip(times, times[1:])):
            raise ValueError("times must be increasing in (0, 1]")
        object.__setattr__(self, "times", times)
        if self.base.nvars != len(times) * self.d:
            raise ValueError("base function arity does not match times * d")

    @classmethod
    def coordinate(cls, s, v: int = 1, d: int = 1) -> "CylindricalFunction":
        """``x^v(gamma(s))``."""
        return cls((s,), Polynomial.variable(v - 1, d), d)

    @classmethod
    def constant(cls, c: float, s=1.0, d: int = 1) -> "CylindricalFunction":
        return cls((s,), Polynomial.constant(c, d), d)

    @classmethod
    def parse(cls, text: str, d: int = 1) -> "CylindricalFunction":
        """Polynomial in point evaluations, e.g. ``"2*x1(1/2)^2 - x1(1) + 3"``."""
        return parse_cylindrical(text, d)

    @property
    def k(self) -> int:
        return len(self.times)

    @property
    def class_tag(self) -> str:
        return "Y" if all(as_dyadic(t) is not None for t in self.times) else "Z"

    @property
    def polynomial(self) -> bool:
        return isinstance(self.base, Polynomial)

    def _compatible(self, other):
        if not isinstance(other, CylindricalFunction):
            return False
        if other.times != self.times or other.d != self.d:
            raise ValueError("arithmetic needs identical times and dimension")
        if not (self.polynomial and other.polynomial):
            raise TypeError("arithmetic is only defined for polynomial bases")
        return True

    def __add__(self, other):
        if self._compatible(other):
            return CylindricalFunction(self.times, self.base + other.base, self.d)
        return CylindricalFunction(self.times, self.base + float(other), self.d)

    __radd__ = __add__

    def __mul__(self, other):
        if self._compatible(other):
            return CylindricalFunction(self.times, self.base * other.base, self.d)
        return CylindricalFunction(self.times, self.base * float(other), self.d)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def points(self, values: np.ndarray, grid_level: int) -> np.ndarray:
        """Arguments of ``f`` on a stack of paths: ``(..., k d)``."""
        pts = evaluate_paths(values, grid_level, np.asarray(self.times))
        return pts.reshape(pts.shape[:-2] + (self.k * self.d,))

    def __call__(self, path: PathSample) -> float:
        return float(self.base(self.points(path.values, path.grid_level)))

    def values_on(self, values: np.ndarray, grid_level: int) -> np.ndarray:
        return self.base(self.points(values, grid_level))

    def support(self, depth: int | None = None) -> list[int]:
        """Flat indices ``i`` whose Schauder function is nonzero at some time.

        Finite for class Y; for class Z it is cut at Haar level ``depth``.
        """
        ranks = set()
        for t in self.times:
            if as_dyadic(t) is None and depth is None:
                raise ClassError("class Z function needs a truncation depth")
            ranks.update(support_ranks(t, depth))
        return sorted(self.d * (r - 1) + j for r in ranks for j in range(1, self.d + 1))

    def pairing_vectors(self, indices) -> np.ndarray:
        """Row ``n``: the vector ``(<S_i(s_i'), e_j>)`` for the ``n``-th index."""
        t = np.asarray(self.times)
        out = np.zeros((len(indices), self.k * self.d))
        for n, i in enumerate(indices):
            idx = i if isinstance(i, BasisIndex) else BasisIndex(int(i), self.d)
            out[n, idx.j - 1 :: self.d] = schauder_1d(idx.r, t)
        return out

    def pairings(self, values: np.ndarray, grid_level: int, indices) -> np.ndarray:
        """``<S_i, DF>_H`` for each index on a stack of paths, ``(..., n)``."""
        grad = self.base.gradient(self.points(values, grid_level))
        return grad @ self.pairing_vectors(indices).T

    def second_derivatives(self, values: np.ndarray, grid_level: int, indices) -> np.ndarray:
        """``partial_{S_i}^2 F`` for each index, ``(..., n)``."""
        hess = self.base.hessian(self.points(values, grid_level))
        vec = self.pairing_vectors(indices)
        return np.einsum("...ab,na,nb->...n", hess, vec, vec)


_TERM = re.compile(r"\s*([+-]?)\s*([^+-]+)")
_FACTOR = re.compile(r"^x(\d+)\(([^)]+)\)(?:\^(\d+))?$")


def parse_cylindrical(text: str, d: int = 1) -> CylindricalFunction:
    """Parse sums of products such as ``"x1(1/2)^2*x1(1) - 0.5*x2(1)"``."""
    src = text.replace(" ", "")
    if not src:
        raise ValueError("empty function")
    terms = []
    times = set()
    for sign, body in _TERM.findall(src):
        coef = -1.0 if sign == "-" else 1.0
        factors = []
        for tok in body.split("*"):
            m = _FACTOR.match(tok)
            if m:
                v, s, e = int(m.group(1)), m.group(2), int(m.group(3) or 1)
                if not 1 <= v <= d:
                    raise ValueError(f"coordinate x{v} outside dimension {d}")
                t = float(Fraction(s))
                times.add(t)
                factors.append((v, t, e))
            else:
                try:
                    coef *= float(tok)
                except ValueError:
                    raise ValueError(f"cannot parse factor {tok!r} in {text!r}") from None
        terms.append((coef, factors))
    tlist = sorted(times) or [1.0]
    nvars = len(tlist) * d
    poly = Polynomial.constant(0.0, nvars)
    for coef, factors in terms:
        mono = Polynomial.constant(coef, nvars)
        for v, t, e in factors:
            var = Polynomial.variable(tlist.index(t) * d + v - 1, nvars)
            for _ in range(e):
                mono = mono * var
        poly = poly + mono
    return CylindricalFunction(tuple(tlist), poly, d)


def gradient_pairing(F: CylindricalFunction, path: PathSample, i) -> float:
    """``<S_i, DF(gamma)>_H``."""
    return float(F.pairings(path.values, path.grid_level, [i])[0])


def directional_derivatives(F: CylindricalFunction, path: PathSample, i) -> tuple[float, float]:
    """``(partial_{S_i} F, partial_{S_i}^2 F)`` at ``gamma``."""
    first = F.pairings(path.values, path.grid_level, [i])[0]
    second = F.second_derivatives(path.values, path.grid_level, [i])[0]
    return float(first), float(second)


def _ensure_closable(lam: EigenvalueSequence, d: int, *functions):
    if all(F.class_tag == "Y" for F in functions):
        return
    verdict = closability_report(lam, d, depth=16).first.verdict
    if verdict != CONVERGES:
        raise DivergentSeriesError(
            f"class Z input needs sum_p lambda_(i_p)/2^p < inf; verdict for {lam.describe()} is {verdict}"
        )


def _tail_factor(F: CylindricalFunction, lam: EigenvalueSequence, depth: int) -> float:
    """Multiplier of ``|grad f|**2`` bounding the energy beyond Haar level
    ``depth``: (number of times finer than ``depth``) * 1/2 * worst tail."""
    fine = sum(
        1 for t in F.times if (as_dyadic(t) is None or as_dyadic(t).level > depth)
    )
    if not fine:
        return 0.0
    env = max(tail_envelope(lam, j, F.d, depth) for j in range(1, F.d + 1))
    return fine * 0.5 * env


@dataclass(frozen=True)
class EnergyEstimate:
    value: float
    stderr: float
    n_samples: int
    n_indices: int
    tail_bound: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def dirichlet_energy(
    F: CylindricalFunction,
    G: CylindricalFunction,
    lam: EigenvalueSequence,
    weight: WeightModel | None = None,
    *,
    level: int = 8,
    samples: int = 10_000,
    seed: int = 0,
    depth: int | None = None,
    threads: int = 1,
) -> EnergyEstimate:
    """Monte Carlo estimate of ``sum_i lambda_i E_nu[<S_i,DF><S_i,DG> phi]``.

    Wiener paths are synthesized on the grid of ``level``; ``phi`` enters as
    an importance weight.  Class Z inputs are truncated at Haar level
    ``depth`` (default ``level``) and require a converging closability
    verdict; the reported ``tail_bound`` covers the neglected levels.
    """
    if F.d != G.d:
        raise ValueError("F and G live in different dimensions")
    d = F.d
    weight = weight or ZeroWeight(d)
    _ensure_closable(lam, d, F, G)
    depth = level if depth is None else depth
    indices = sorted(set(F.support(depth)) | set(G.support(depth)))
    lam_v = lam(np.asarray(indices))
    tf, tg = _tail_factor(F, lam, depth), _tail_factor(G, lam, depth)

    def block(b, size):
        vals = brownian_values(block_rng(seed, b), size, level, d)
        phi = np.exp(log_phi_values(weight, vals, level))
        pf = F.pairings(vals, level, indices)
        pg = G.pairings(vals, level, indices)
        per = (pf * pg) @ lam_v * phi
        tail = 0.0
        if tf or tg:
            gf = np.sum(F.base.gradient(F.points(vals, level)) ** 2, axis=-1)
            gg = np.sum(G.base.gradient(G.points(vals, level)) ** 2, axis=-1)
            tail = float(np.max(np.sqrt(tf * gf * tg * gg) * phi))
        return per, tail

    parts = map_blocks(block, samples, threads)
    est = Estimate.from_samples(np.concatenate([p for p, _ in parts]))
    tail = max(t for _, t in parts)
    return EnergyEstimate(est.value, est.stderr, est.n, len(indices), tail)


def carre_du_champ(
    F: CylindricalFunction, path: PathSample, lam: EigenvalueSequence, depth: int | None = None
) -> float:
    """``Gamma(F, F) = 2 sum_i lambda_i (partial_{S_i} F)**2`` at ``gamma``."""
    _ensure_closable(lam, F.d, F)
    idx = F.support(path.grid_level if depth is None else depth)
    pf = F.pairings(path.values, path.grid_level, idx)
    return float(2.0 * np.sum(lam(np.asarray(idx)) * pf**2))
