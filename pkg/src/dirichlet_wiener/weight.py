"""Girsanov-type weights ``phi`` built from a bounded potential ``f``.

Along a path the weight is evaluated in the form obtained from Ito's formula,

    log phi = f(gamma(1)) - f(0) - 1/2 int_0^1 (Laplacian f + |grad f|^2)(gamma_s) ds,

so no stochastic integral is discretised.  Time integrals are taken cell by
cell with Gauss-Legendre quadrature along the linear segments.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

from .basis import BasisIndex, PathSample, haar_cells, haar_level, schauder_1d
from .errors import CertificateUnavailable, ResolutionError

QUAD_ORDER = 4


class WeightModel:
    """Potential ``f: R^d -> R`` with derivatives up to order three.

    Subclasses implement ``value``, ``grad``, ``hess`` and ``third`` on
    arrays whose trailing axis has length ``d``.  ``sup_abs_f``,
    ``sup_abs_laplacian`` and ``sup_grad_sq`` are declared bounds (None when
    unknown).
    """

    name = "callback"
    d: int = 1
    sup_abs_f: float | None = None
    sup_abs_laplacian: float | None = None
    sup_grad_sq: float | None = None
    sup_grad_v: float | None = None

    def value(self, x):
        raise NotImplementedError

    def grad(self, x):
        raise NotImplementedError

    def hess(self, x):
        raise NotImplementedError

    def third(self, x):
        raise NotImplementedError

    @property
    def trivial(self) -> bool:
        return False

    def params(self) -> dict:
        return {}

    def laplacian(self, x):
        return np.trace(self.hess(x), axis1=-2, axis2=-1)

    def v_field(self, x):
        """``Laplacian f + |grad f|**2``."""
        g = self.grad(x)
        return self.laplacian(x) + np.sum(g * g, axis=-1)

    def grad_v(self, x):
        """Gradient of :meth:`v_field`."""
        g = self.grad(x)
        h = self.hess(x)
        t = self.third(x)
        return np.einsum("...kjj->...k", t) + 2.0 * np.einsum("...km,...m->...k", h, g)


class ZeroWeight(WeightModel):
    """``f = 0``, hence ``phi = 1``."""

    name = "zero"
    sup_abs_f = 0.0
    sup_abs_laplacian = 0.0
    sup_grad_sq = 0.0
    sup_grad_v = 0.0

    def __init__(self, d: int = 1):
        self.d = d

    @property
    def trivial(self) -> bool:
        return True

    def value(self, x):
        return np.zeros(np.shape(x)[:-1])

    def grad(self, x):
        return np.zeros(np.shape(x))

    def hess(self, x):
        return np.zeros(np.shape(x) + (self.d,))

    def third(self, x):
        return np.zeros(np.shape(x) + (self.d, self.d))


class TrigWeight(WeightModel):
    """``f(x) = c sin(<a, x>)``."""

    name = "trig"

    def __init__(self, a=None, c: float = 1.0, d: int = 1):
        self.a = np.ones(d) if a is None else np.asarray(a, dtype=float).reshape(-1)
        self.d = self.a.size
        self.c = float(c)
        a2 = float(self.a @ self.a)
        self.sup_abs_f = abs(self.c)
        self.sup_abs_laplacian = abs(self.c) * a2
        self.sup_grad_sq = self.c**2 * a2
        self.sup_grad_v = (abs(self.c) * a2 + self.c**2 * a2) * math.sqrt(a2)

    def params(self) -> dict:
        return {"a": self.a.tolist(), "c": self.c}

    def _u(self, x):
        return np.asarray(x, dtype=float) @ self.a

    def value(self, x):
        return self.c * np.sin(self._u(x))

    def grad(self, x):
        return (self.c * np.cos(self._u(x)))[..., None] * self.a

    def hess(self, x):
        return (-self.c * np.sin(self._u(x)))[..., None, None] * np.multiply.outer(self.a, self.a)

    def third(self, x):
        aaa = np.multiply.outer(np.multiply.outer(self.a, self.a), self.a)
        return (-self.c * np.cos(self._u(x)))[..., None, None, None] * aaa


class BumpQuadraticWeight(WeightModel):
    """``f(x) = kappa R**2 / 2 * (1 - exp(-|x|**2 / R**2))``.

    Quadratic ``kappa |x|**2 / 2`` near the origin, flattening to the
    constant ``kappa R**2 / 2`` beyond radius ``R``.
    """

    name = "bump"

    def __init__(self, kappa: float = 1.0, radius: float = 1.0, d: int = 1):
        if radius <= 0:
            raise ValueError("radius must be positive")
        self.kappa = float(kappa)
        self.radius = float(radius)
        self.d = d
        self.sup_abs_f = abs(self.kappa) * self.radius**2 / 2
        self.sup_abs_laplacian = abs(self.kappa) * d
        self.sup_grad_sq = self.kappa**2 * self.radius**2 / (2 * math.e)
        # sup_y e^-y sqrt(y) < 0.43, e^-y y^1.5 < 0.42, e^-2y sqrt(y) < 0.31, 2 e^-2y y^1.5 < 0.30
        k = abs(self.kappa)
        self.sup_grad_v = k * 2 / self.radius * ((d + 2) * 0.43 + 2 * 0.42) + 2 * k**2 * self.radius * (0.31 + 0.30)

    def params(self) -> dict:
        return {"kappa": self.kappa, "radius": self.radius}

    def _e(self, x):
        x = np.asarray(x, dtype=float)
        return x, np.exp(-np.sum(x * x, axis=-1) / self.radius**2)

    def value(self, x):
        _, e = self._e(x)
        return 0.5 * self.kappa * self.radius**2 * (1.0 - e)

    def grad(self, x):
        x, e = self._e(x)
        return self.kappa * e[..., None] * x

    def hess(self, x):
        x, e = self._e(x)
        eye = np.eye(self.d)
        outer = x[..., :, None] * x[..., None, :]
        return self.kappa * e[..., None, None] * (eye - 2.0 / self.radius**2 * outer)

    def third(self, x):
        x, e = self._e(x)
        eye = np.eye(self.d)
        r2 = self.radius**2
        # sym[k, j, m] = x_k d_jm + x_j d_km + x_m d_kj
        sym = (
            np.einsum("...k,jm->...kjm", x, eye)
            + np.einsum("...j,km->...kjm", x, eye)
            + np.einsum("...m,kj->...kjm", x, eye)
        )
        xxx = np.einsum("...k,...j,...m->...kjm", x, x, x)
        return self.kappa * e[..., None, None, None] * (-2.0 / r2 * sym + 4.0 / r2**2 * xxx)


class CallbackWeight(WeightModel):
    """Potential given by user callables; bounds are optional declarations."""

    name = "callback"

    def __init__(self, value, grad, hess, third, d: int = 1, sup_abs_f=None,
                 sup_abs_laplacian=None, sup_grad_sq=None, sup_grad_v=None):
        self._value, self._grad, self._hess, self._third = value, grad, hess, third
        self.d = d
        self.sup_abs_f = sup_abs_f
        self.sup_abs_laplacian = sup_abs_laplacian
        self.sup_grad_sq = sup_grad_sq
        self.sup_grad_v = sup_grad_v

    def value(self, x):
        return self._value(x)

    def grad(self, x):
        return self._grad(x)

    def hess(self, x):
        return self._hess(x)

    def third(self, x):
        return self._third(x)


def make_weight(name: str, d: int = 1, **params) -> WeightModel:
    """Build a built-in weight model by name (``zero``, ``trig``, ``bump``)."""
    if name == "zero":
        return ZeroWeight(d)
    if name == "trig":
        a = params.get("a")
        if a is None:
            a = np.full(d, float(params.get("freq", 1.0)))
        return TrigWeight(a=a, c=params.get("c", 1.0), d=d)
    if name in ("bump", "bump_quadratic"):
        return BumpQuadraticWeight(params.get("kappa", 1.0), params.get("radius", 1.0), d=d)
    raise ValueError(f"unknown weight model {name!r}")


@lru_cache(maxsize=8)
def _gauss(order: int):
    u, w = np.polynomial.legendre.leggauss(order)
    return (u + 1) / 2, w / 2


@lru_cache(maxsize=64)
def node_times(grid_level: int) -> np.ndarray:
    """Quadrature times, shape ``(cells, QUAD_ORDER)``."""
    u, _ = _gauss(QUAD_ORDER)
    n = 1 << grid_level
    return (np.arange(n)[:, None] + u[None, :]) / n


def node_weights(grid_level: int) -> np.ndarray:
    _, w = _gauss(QUAD_ORDER)
    return w / (1 << grid_level)


def node_points(values: np.ndarray) -> np.ndarray:
    """Path positions at the quadrature nodes, shape ``(..., cells, Q, d)``."""
    u, _ = _gauss(QUAD_ORDER)
    lo = values[..., :-1, None, :]
    inc = np.diff(values, axis=-2)[..., :, None, :]
    return lo + u[:, None] * inc


@lru_cache(maxsize=256)
def _schauder_at_nodes(r: int, grid_level: int) -> np.ndarray:
    out = schauder_1d(r, node_times(grid_level)) * node_weights(grid_level)
    out.setflags(write=False)
    return out


def _check_resolved(idx: BasisIndex, grid_level: int):
    if haar_level(idx.r) > grid_level:
        raise ResolutionError(
            f"index {idx.i} lives on Haar level {haar_level(idx.r)}, grid level is {grid_level}"
        )


def log_phi_values(w: WeightModel, values: np.ndarray, grid_level: int) -> np.ndarray:
    """``log phi`` for a stack of paths ``(..., G, d)``."""
    if w.trivial:
        return np.zeros(values.shape[:-2])
    pts = node_points(values)
    integral = np.einsum("...cq,q->...", w.v_field(pts), node_weights(grid_level))
    f0 = float(w.value(np.zeros(w.d)))
    return w.value(values[..., -1, :]) - f0 - 0.5 * integral


def log_phi(w: WeightModel, path: PathSample) -> float:
    return float(log_phi_values(w, path.values, path.grid_level))


def log_phi_directional_values(w: WeightModel, values: np.ndarray, grid_level: int, indices) -> np.ndarray:
    """``d/dt log phi(gamma + t S_i)`` at ``t = 0`` for every index, shape
    ``(..., len(indices))``.

    Uses ``<b(gamma(1)), S_i(1)> - 1/2 int <grad V(gamma_s), S_i(s)> ds``
    with ``V = Laplacian f + |grad f|**2``.
    """
    d = values.shape[-1]
    idxs = [i if isinstance(i, BasisIndex) else BasisIndex(int(i), d) for i in indices]
    out = np.zeros(values.shape[:-2] + (len(idxs),))
    if w.trivial or not idxs:
        return out
    for idx in idxs:
        _check_resolved(idx, grid_level)
    gv = w.grad_v(node_points(values))
    b1 = w.grad(values[..., -1, :])
    cache = {}
    for n, idx in enumerate(idxs):
        if idx.r not in cache:
            cache[idx.r] = np.einsum("...cqk,cq->...k", gv, _schauder_at_nodes(idx.r, grid_level))
        s1 = 1.0 if idx.r == 1 else 0.0
        out[..., n] = b1[..., idx.j - 1] * s1 - 0.5 * cache[idx.r][..., idx.j - 1]
    return out


def log_phi_directional(w: WeightModel, path: PathSample, i) -> float:
    """``partial_{S_i} phi / phi`` on one path."""
    return float(log_phi_directional_values(w, path.values, path.grid_level, [i])[0])


def log_phi_directional_stochastic(w: WeightModel, path: PathSample, i, scheme: str = "ito") -> float:
    """Cross-check evaluator that keeps the stochastic integral

        sum_j int <grad b_j(gamma_s), S_i(s)> d gamma_j
          + int <b(gamma_s), g_i(s)> ds - int <sum_j b_j grad b_j (gamma_s), S_i(s)> ds.

    ``scheme="ito"`` integrates the first term with left-point increments
    plus the second-order correction ``1/2 D h (dgamma dgamma^T - dt I)``,
    which converges to the Ito integral at first order for Brownian grid
    values.  ``scheme="segment"`` integrates along the linear segments (the
    Riemann-Stieltjes value of the interpolated path), which converges to
    the Stratonovich integral instead.
    """
    L = path.grid_level
    idx = i if isinstance(i, BasisIndex) else BasisIndex(int(i), path.d)
    _check_resolved(idx, L)
    if w.trivial:
        return 0.0
    jj = idx.j - 1
    vals = path.values
    inc = np.diff(vals, axis=0)
    dt = 1.0 / (1 << L)
    pts = node_points(vals)
    weights = _schauder_at_nodes(idx.r, L)
    # int <b, g_i> ds with g_i constant per cell
    haar = haar_cells(L)[idx.r - 1]
    b_nodes = w.grad(pts)[..., jj]
    drift_term = float(np.sum(haar[:, None] * b_nodes * node_weights(L)))
    hb = np.einsum("...km,...m->...k", w.hess(pts), w.grad(pts))[..., jj]
    quad_term = float(np.sum(hb * weights))
    if scheme == "segment":
        # Hessian column j contracted with the increment, averaged over the segment
        h_nodes = w.hess(pts)[..., :, jj] * schauder_1d(idx.r, node_times(L))[..., None]
        u_avg = np.einsum("cqm,q->cm", h_nodes, _gauss(QUAD_ORDER)[1])
        stoch = float(np.sum(u_avg * inc))
    elif scheme == "ito":
        left = vals[:-1]
        s_left = schauder_1d(idx.r, np.arange(1 << L) / (1 << L))
        h_left = w.hess(left)[:, :, jj] * s_left[:, None]
        dh = w.third(left)[:, :, jj, :] * s_left[:, None, None]
        quad = inc[:, :, None] * inc[:, None, :] - dt * np.eye(path.d)
        stoch = float(np.sum(h_left * inc) + 0.5 * np.sum(dh * quad))
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    return stoch + drift_term - quad_term


def bounds_certificate(w: WeightModel) -> tuple[float, float]:
    """Interval that contains ``phi(gamma)`` for every path.

    Follows from ``|f(gamma(1))| <= sup|f|`` and
    ``-sup|Laplacian f| <= V <= sup|Laplacian f| + sup|grad f|**2``.
    """
    bounds = (w.sup_abs_f, w.sup_abs_laplacian, w.sup_grad_sq)
    if any(b is None for b in bounds):
        raise CertificateUnavailable(f"weight model {w.name!r} declares no bounds")
    sup_f, sup_lap, sup_g2 = bounds
    f0 = float(w.value(np.zeros(w.d)))
    lower = math.exp(-sup_f - f0 - 0.5 * (sup_lap + sup_g2))
    upper = math.exp(sup_f - f0 + 0.5 * sup_lap)
    return lower, upper
