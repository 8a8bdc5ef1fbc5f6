"""The diagonal diffusion operator, index chains through the Schauder levels,
the closed-form eigen-sum and closability verdicts."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numpy as np

from .basis import DyadicRational, schauder_1d

RULES = ("constant", "power", "logarithmic", "geometric", "table")

CONVERGES = "converges"
DIVERGES = "diverges"
INCONCLUSIVE = "inconclusive"

_PROBE = 4096


@dataclass(frozen=True)
class EigenvalueSequence:
    """Positive nondecreasing eigenvalues ``lambda_1, lambda_2, ...``.

    Rules: ``constant`` (value ``scale``), ``power`` (``scale * i**alpha``),
    ``logarithmic`` (``scale * log(1 + i)``), ``geometric``
    (``scale * 2**(beta * m)`` with ``m`` the Haar level of ``i`` in
    dimension ``d``) and ``table`` (explicit values, then ``tail``, or the
    last value held when no tail is given).
    """

    rule: str
    param: float = 0.0
    scale: float = 1.0
    d: int = 1
    table: tuple[float, ...] = ()
    tail: "EigenvalueSequence | None" = None

    def __post_init__(self):
        if self.rule not in RULES:
            raise ValueError(f"unknown eigenvalue rule {self.rule!r}")
        if self.scale <= 0:
            raise ValueError("scale must be positive")
        if self.rule in ("power", "geometric") and self.param < 0:
            raise ValueError(f"{self.rule} exponent must be nonnegative")
        if self.rule == "table":
            if not self.table:
                raise ValueError("table rule needs at least one value")
            object.__setattr__(self, "table", tuple(float(v) for v in self.table))
        probe = self(np.arange(1, _PROBE + 1))
        if np.any(probe <= 0) or not np.all(np.isfinite(probe)):
            raise ValueError("eigenvalues must be positive and finite")
        if np.any(np.diff(probe) < 0):
            raise ValueError("eigenvalues must be nondecreasing")

    @classmethod
    def constant(cls, value: float = 1.0) -> "EigenvalueSequence":
        return cls("constant", scale=value)

    @classmethod
    def power(cls, alpha: float, scale: float = 1.0) -> "EigenvalueSequence":
        return cls("power", param=alpha, scale=scale)

    @classmethod
    def logarithmic(cls, scale: float = 1.0) -> "EigenvalueSequence":
        return cls("logarithmic", scale=scale)

    @classmethod
    def geometric(cls, beta: float, d: int = 1, scale: float = 1.0) -> "EigenvalueSequence":
        return cls("geometric", param=beta, scale=scale, d=d)

    @classmethod
    def from_table(cls, values, tail: "EigenvalueSequence | None" = None) -> "EigenvalueSequence":
        return cls("table", table=tuple(values), tail=tail)

    @classmethod
    def parse(cls, text: str, d: int = 1) -> "EigenvalueSequence":
        """Parse ``constant[:c]``, ``power:alpha``, ``log``, ``geometric:beta``
        or ``table:v1,v2,...``."""
        name, _, arg = text.strip().partition(":")
        name = name.lower()
        try:
            if name == "constant":
                return cls.constant(float(arg) if arg else 1.0)
            if name == "power":
                return cls.power(float(arg))
            if name in ("log", "logarithmic"):
                return cls.logarithmic(float(arg) if arg else 1.0)
            if name == "geometric":
                return cls.geometric(float(arg), d=d)
            if name == "table":
                return cls.from_table([float(v) for v in arg.split(",")])
        except ValueError as exc:
            raise ValueError(f"bad eigenvalue spec {text!r}: {exc}") from None
        raise ValueError(f"unknown eigenvalue rule in {text!r}")

    def describe(self) -> str:
        if self.rule == "constant":
            return f"constant:{self.scale:g}"
        if self.rule == "power":
            return f"power:{self.param:g}" + ("" if self.scale == 1 else f"*{self.scale:g}")
        if self.rule == "logarithmic":
            return "log" if self.scale == 1 else f"log*{self.scale:g}"
        if self.rule == "geometric":
            return f"geometric:{self.param:g}(d={self.d})"
        tail = f"+{self.tail.describe()}" if self.tail else ""
        return "table:" + ",".join(f"{v:g}" for v in self.table) + tail

    def __call__(self, i):
        """``lambda_i`` for a positive integer or an integer array."""
        scalar = np.ndim(i) == 0
        idx = np.asarray(i, dtype=float)
        if np.any(idx < 1):
            raise ValueError("eigenvalue index must be positive")
        if self.rule == "constant":
            out = np.full(idx.shape, self.scale)
        elif self.rule == "power":
            out = self.scale * idx**self.param
        elif self.rule == "logarithmic":
            out = self.scale * np.log1p(idx)
        elif self.rule == "geometric":
            rank = np.floor((idx - 1) / self.d) + 1
            m = np.where(rank <= 1, 0.0, np.floor(np.log2(np.maximum(rank - 1, 1))))
            out = self.scale * 2.0 ** (self.param * m)
        else:
            n = len(self.table)
            inside = idx <= n
            pos = np.clip(idx, 1, n).astype(np.int64) - 1
            held = np.asarray(self.table)[pos]
            if self.tail is not None:
                out = np.where(inside, held, self.tail(np.maximum(idx, 1)))
            else:
                out = held
        return float(out) if scalar else out

    def values(self, n: int) -> np.ndarray:
        return self(np.arange(1, n + 1))


def spectral_apply(h, lam: EigenvalueSequence, mode: str = "A") -> np.ndarray:
    """Multiply Schauder coefficient ``i`` by ``lambda_i`` (``"A"``),
    ``lambda_i**0.5`` (``"sqrtA"``) or ``lambda_i**-0.5`` (``"J"``)."""
    h = np.asarray(h, dtype=float)
    lv = lam.values(h.shape[-1])
    if mode == "A":
        return h * lv
    if mode == "sqrtA":
        return h * np.sqrt(lv)
    if mode == "J":
        return h / np.sqrt(lv)
    raise ValueError(f"unknown mode {mode!r}")


@dataclass(frozen=True)
class IndexChain:
    """Indices ``i_{p,j}``, one per Haar level ``p = 1..r``, whose Schauder
    functions are nonzero at the dyadic point with the given digits."""

    digits: tuple[int, ...]
    j: int
    d: int
    indices: tuple[int, ...]


def chain_index(digits, p: int, j: int, d: int) -> int:
    """Index at Haar level ``p`` straddling the point with binary ``digits``.

    The level-``p`` rank is ``2**(p-1) + 1 + sum_{q<p} c_q 2**(p-1-q)``; the
    flat index is ``d (rank - 1) + j``.
    """
    cell = 0
    for q in range(1, p):
        cell = 2 * cell + (digits[q - 1] if q <= len(digits) else 0)
    rank = (1 << (p - 1)) + 1 + cell
    return d * (rank - 1) + j


def worst_chain_index(p: int, j: int, d: int) -> int:
    """Largest possible level-``p`` index, reached when every digit is one."""
    return d * ((1 << p) - 1) + j


def index_chain(s, j: int, d: int = 1) -> IndexChain:
    if not 1 <= j <= d:
        raise ValueError(f"direction {j} outside 1..{d}")
    digits = DyadicRational.from_value(s).digits
    idx = tuple(chain_index(digits, p, j, d) for p in range(1, len(digits) + 1))
    return IndexChain(digits, j, d, idx)


def _bracket(digits, p: int) -> Fraction:
    # c_p 2^-p + (-1)^c_p sum_{q>p} c_q 2^-q, with c_{r+1} = 0
    rest = sum(Fraction(c, 1 << q) for q, c in enumerate(digits[p:], start=p + 1))
    c_p = digits[p - 1]
    return Fraction(c_p, 1 << p) + (-rest if c_p else rest)


def correction_sum(digits, j: int, lam: EigenvalueSequence, d: int = 1) -> float:
    """``sum_p lambda_{i_{p,j}} 2**(p-1) bracket_p**2`` for a digit pattern."""
    total = 0.0
    for p in range(1, len(digits) + 1):
        b = _bracket(digits, p)
        total += lam(chain_index(digits, p, j, d)) * float((1 << (p - 1)) * b * b)
    return total


def eigen_sum_closed_form(s, j: int, lam: EigenvalueSequence, d: int = 1) -> float:
    """``sum_i lambda_i <S_i(s), e_j>**2`` through the level-by-level formula."""
    dy = DyadicRational.from_value(s)
    return lam(j) * float(dy.fraction**2) + correction_sum(dy.digits, j, lam, d)


def eigen_sum_brute_force(s, j: int, lam: EigenvalueSequence, d: int = 1) -> float:
    """The same sum evaluated term by term over ``i <= d 2**r``."""
    dy = DyadicRational.from_value(s)
    n_rank = 1 << dy.level
    ranks = np.arange(1, n_rank + 1)
    vals = np.array([schauder_1d(int(r), dy.value) for r in ranks])
    idx = d * (ranks - 1) + j
    return float(np.sum(lam(idx) * vals**2))


def _symbolic(lam: EigenvalueSequence, power: int) -> str:
    """Convergence of ``sum_p lambda_{i_p}**power / 2**p`` from the rule."""
    rule = lam.rule
    if rule == "table":
        return _symbolic(lam.tail, power) if lam.tail is not None else INCONCLUSIVE
    if rule in ("constant", "logarithmic"):
        return CONVERGES
    # power: terms ~ 2**(p (power alpha - 1)); geometric: 2**(p (power beta - 1))
    return CONVERGES if power * lam.param < 1 else DIVERGES


def _numeric(terms: np.ndarray, tol: float = 1e-2) -> str:
    ratio = terms[-1] / terms[-2]
    if ratio <= 1.0 - tol:
        return CONVERGES
    if ratio >= 1.0 - 1e-12:
        return DIVERGES
    return INCONCLUSIVE


@dataclass
class ConditionVerdict:
    series: str
    symbolic: str
    numeric: str
    verdict: str
    partial_sums: dict[int, list[float]] = field(default_factory=dict)
    last_term_ratio: dict[int, float] = field(default_factory=dict)


@dataclass
class ClosabilityReport:
    rule: str
    d: int
    depth: int
    first: ConditionVerdict
    second: ConditionVerdict
    closability: str
    sandwich: list[dict]
    note: str

    @property
    def verdict(self) -> str:
        return self.first.verdict

    def to_dict(self) -> dict:
        return asdict(self)


def worst_case_terms(lam: EigenvalueSequence, j: int, d: int, depth: int, power: int = 1) -> np.ndarray:
    """Terms ``lambda_{i_p}**power / 2**p`` along the all-ones digit chain."""
    idx = np.array([float(worst_chain_index(p, j, d)) for p in range(1, depth + 1)])
    return lam(idx) ** power / 2.0 ** np.arange(1, depth + 1)


def sandwich_rows(lam: EigenvalueSequence, j: int, d: int, max_r: int) -> list[dict]:
    """Finite check of the two-sided bound between the supremum of the
    correction sums and ``sum_p lambda_{i_p} / 2**p``.

    The lower factor 1/8 is attained along the pattern ``1,0,1,0,...`` closed
    by ``c_r = 1``; the upper factor 1/2 holds for every digit pattern.
    """
    rows = []
    for r in range(2, max_r + 1):
        alt = tuple(1 if (q % 2 == 1 or q == r) else 0 for q in range(1, r + 1))
        alt_weighted = sum(lam(chain_index(alt, p, j, d)) / 2**p for p in range(1, r + 1))
        alt_sum = correction_sum(alt, j, lam, d)
        upper_ok = True
        sup_corr = 0.0
        for n in range(1 << (r - 1)):
            digits = tuple(int(c) for c in format(n, f"0{r - 1}b")) + (1,)
            corr = correction_sum(digits, j, lam, d)
            weighted = sum(lam(chain_index(digits, p, j, d)) / 2**p for p in range(1, r + 1))
            sup_corr = max(sup_corr, corr)
            upper_ok &= corr <= 0.5 * weighted * (1 + 1e-12)
        rows.append(
            {
                "r": r,
                "sup_correction": sup_corr,
                "alternating_correction": alt_sum,
                "alternating_weighted_sum": alt_weighted,
                "lower_ok": alt_sum >= alt_weighted / 8 * (1 - 1e-12),
                "upper_ok": bool(upper_ok),
            }
        )
    return rows


def closability_report(
    lam: EigenvalueSequence, d: int = 1, depth: int = 32, sandwich_depth: int = 8
) -> ClosabilityReport:
    """Closability verdict from the rule, with worst-case partial sums as evidence."""
    if depth < 8:
        raise ValueError("probe depth must be at least 8")
    verdicts = []
    for power, name in ((1, "sum_p lambda_{i_p,j} / 2^p"), (2, "sum_p lambda_{i_p,j}^2 / 2^p")):
        sums, ratios, numerics = {}, {}, []
        for j in range(1, d + 1):
            terms = worst_case_terms(lam, j, d, depth, power)
            sums[j] = np.cumsum(terms).tolist()
            ratios[j] = float(terms[-1] / terms[-2])
            numerics.append(_numeric(terms))
        numeric = numerics[0] if len(set(numerics)) == 1 else INCONCLUSIVE
        symbolic = _symbolic(lam, power)
        verdicts.append(ConditionVerdict(name, symbolic, numeric, symbolic, sums, ratios))
    first, second = verdicts
    if first.verdict == CONVERGES:
        closability = "Z-closable; D_Z = D_Y"
    elif first.verdict == DIVERGES:
        closability = "Y-closable only"
    else:
        closability = INCONCLUSIVE
    sandwich = [
        dict(row, j=j) for j in range(1, d + 1) for row in sandwich_rows(lam, j, d, sandwich_depth)
    ]
    note = (
        "partial sums use the all-ones digit chain, the largest index at every "
        "level; for nondecreasing eigenvalues it bounds every other chain"
    )
    return ClosabilityReport(lam.describe(), d, depth, first, second, closability, sandwich, note)


def tail_envelope(lam: EigenvalueSequence, j: int, d: int, depth: int, power: int = 1, max_depth: int = 1000) -> float:
    """``sum_{p > depth} lambda_{i_p}**power / 2**p`` along the worst chain.

    Returns ``inf`` when the terms have not died out by ``max_depth``.
    """
    total = 0.0
    for p in range(depth + 1, max_depth + 1):
        with np.errstate(over="ignore"):
            term = lam(float(worst_chain_index(p, j, d))) ** power / 2.0**p
        if not math.isfinite(term):
            return math.inf
        total += term
        if term <= 1e-17 * total:
            return total
    return math.inf
