"""Adaptive tensor Gauss-Legendre cubature of the raw covariance integrands.

Every integrand here is written directly from its double-integral
definition over ``[0, t] x [0, tp]`` and depends on ``s = s1 + s2``.  This
module deliberately imports nothing from :mod:`spde_powvar.kernels`, so it
can serve as an independent reference for the closed forms.

The rectangle is first cut into dyadic L-shaped shells that shrink toward
the corner ``s1 = s2 = 0``, where the integrands may be singular.  Each cell
carries a pair of Gauss-Legendre estimates of different order and the cell
with the largest disagreement is split into four until the summed
disagreement meets the tolerance.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from ..errors import AccuracyError, DomainError

INTEGRAND_IDS = (
    "A1", "A2", "A3", "A3_incr", "F_raw",
    "half_power", "three_half_power", "fifth_power",
)

_LO = np.polynomial.legendre.leggauss(8)
_HI = np.polynomial.legendre.leggauss(16)
_SHELLS = 100
_BATCH = 16


@dataclass(frozen=True)
class QuadratureSpec:
    """One double integral to evaluate.

    Parameters
    ----------
    integrand_id : str
        One of :data:`INTEGRAND_IDS`.
    t, tp : float
        Rectangle ``[0, t] x [0, tp]``.
    x, y : float
        Spatial points; only ``x - y`` matters.
    h : float
        Step inside the stencil quotient (``A1``, ``A2``, ``F_raw``).
    a, b : float
        Stencil weights.
    theta, sigma : float
        Model parameters.
    grid_step : float
        Grid spacing for the increment integrands ``A3_incr`` and ``F_raw``.
    c : float
        Decay constant for the bare power integrands.
    rel_tol : float
        Target relative accuracy, between 1e-12 and 1e-4.
    abs_tol : float
        Absolute accuracy that is also accepted.
    max_subdivisions : int
        Cap on cell refinements.
    """

    integrand_id: str
    t: float
    tp: float
    x: float = 0.0
    y: float = 0.0
    h: float = 0.0
    a: float = 1.0
    b: float = 0.0
    theta: float = 1.0
    sigma: float = 1.0
    grid_step: float = 0.0
    c: float = 0.0
    rel_tol: float = 1e-10
    abs_tol: float = 0.0
    max_subdivisions: int = 4000

    def __post_init__(self):
        if self.integrand_id not in INTEGRAND_IDS:
            raise DomainError(f"unknown integrand {self.integrand_id!r}")
        for name in ("t", "tp", "theta"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise DomainError(f"{name} must be positive and finite")
        if not 1e-12 <= self.rel_tol <= 1e-4:
            raise DomainError("rel_tol must lie in [1e-12, 1e-4]")
        if self.integrand_id in ("A1", "A2", "F_raw") and not self.h > 0:
            raise DomainError("stencil integrands need h > 0")
        if self.integrand_id in ("A3_incr", "F_raw") and not self.grid_step > 0:
            raise DomainError("increment integrands need grid_step > 0")
        if self.integrand_id in ("A1", "A2", "F_raw") and self.a + self.b <= 0:
            raise DomainError("a + b must be positive")
        if self.c < 0:
            raise DomainError("c must be nonnegative")


@dataclass(frozen=True)
class QuadResult:
    value: float
    est_error: float
    cells: int


def _gauss(s, sq):
    # exp(-sq / s) with s > 0
    return np.exp(-sq / s)


def _a1(spec, s, d):
    pref = spec.sigma**2 / (2 * math.sqrt(math.pi * spec.theta) * (spec.a + spec.b) ** 2 * spec.h**2)
    w = (spec.a + spec.b) * spec.h
    four = 4 * spec.theta * s
    return pref * s**-0.5 * (2 * _gauss(four, d * d) - _gauss(four, (d + w) ** 2) - _gauss(four, (d - w) ** 2))


def _a3(spec, s, d):
    pref = spec.sigma**2 / (4 * math.sqrt(math.pi) * spec.theta**1.5)
    return pref * s**-1.5 * _gauss(4 * spec.theta * s, d * d) * (1 - d * d / (2 * spec.theta * s))


def _integrand(spec):
    d = spec.x - spec.y
    g = spec.grid_step
    kind = spec.integrand_id
    if kind == "A1":
        return lambda s: _a1(spec, s, d)
    if kind == "A2":
        pref = spec.sigma**2 / (4 * math.sqrt(math.pi) * spec.theta**1.5 * (spec.a + spec.b))
        return lambda s: pref * s**-1.5 * (
            spec.a * _gauss(4 * spec.theta * s, (spec.a * spec.h) ** 2)
            + spec.b * _gauss(4 * spec.theta * s, (spec.b * spec.h) ** 2))
    if kind == "A3":
        return lambda s: _a3(spec, s, d)
    if kind == "A3_incr":
        return lambda s: 2 * _a3(spec, s, d) - _a3(spec, s, d + g) - _a3(spec, s, d - g)
    if kind == "F_raw":
        return lambda s: 2 * _a1(spec, s, d) - _a1(spec, s, d + g) - _a1(spec, s, d - g)
    power = {"half_power": 0.5, "three_half_power": 1.5, "fifth_power": 2.5}[kind]
    return lambda s: s**-power * np.exp(-spec.c / s)


def _estimate(f, cells):
    """Low and high order estimates on a batch of cells ``(x0, x1, y0, y1)``."""
    cells = np.asarray(cells, dtype=float)
    out = []
    for nodes, weights in (_LO, _HI):
        hx = 0.5 * (cells[:, 1] - cells[:, 0])
        hy = 0.5 * (cells[:, 3] - cells[:, 2])
        xs = cells[:, 0, None] + hx[:, None] * (nodes + 1)
        ys = cells[:, 2, None] + hy[:, None] * (nodes + 1)
        vals = f(xs[:, :, None] + ys[:, None, :])
        out.append(np.einsum("cij,i,j->c", vals, weights, weights) * hx * hy)
    return out[1], np.abs(out[1] - out[0])


def _initial_cells(t, tp):
    cells = []
    for k in range(_SHELLS):
        r = 0.5**k
        cells.append((0.5 * t * r, t * r, 0.0, tp * r))
        cells.append((0.0, 0.5 * t * r, 0.5 * tp * r, tp * r))
    r = 0.5**_SHELLS
    cells.append((0.0, t * r, 0.0, tp * r))
    return cells


def quad_cov(spec):
    """Evaluate the double integral described by ``spec``.

    Returns
    -------
    QuadResult
        ``est_error <= max(rel_tol*|value|, abs_tol)`` on success.

    Raises
    ------
    AccuracyError
        If the subdivision budget runs out first; the exception carries the
        best value and its error estimate.
    """
    f = _integrand(spec)
    cells = _initial_cells(spec.t, spec.tp)
    vals, errs = _estimate(f, cells)
    heap = [(-e, i) for i, e in enumerate(errs)]
    heapq.heapify(heap)
    store = {i: (cells[i], vals[i], errs[i]) for i in range(len(cells))}
    next_id = len(cells)
    total = float(np.sum(vals))
    err = float(np.sum(errs))
    splits = 0
    while err > max(spec.rel_tol * abs(total), spec.abs_tol):
        if splits >= spec.max_subdivisions:
            raise AccuracyError(
                f"{spec.integrand_id}: tolerance not met after {splits} subdivisions",
                total, err)
        batch = [heapq.heappop(heap)[1] for _ in range(min(_BATCH, len(heap)))]
        children = []
        for idx in batch:
            (x0, x1, y0, y1), v, e = store.pop(idx)
            total -= v
            err -= e
            xm, ym = 0.5 * (x0 + x1), 0.5 * (y0 + y1)
            children += [(x0, xm, y0, ym), (xm, x1, y0, ym), (x0, xm, ym, y1), (xm, x1, ym, y1)]
        splits += len(batch)
        cv, ce = _estimate(f, children)
        for cell, v, e in zip(children, cv, ce):
            store[next_id] = (cell, v, e)
            heapq.heappush(heap, (-e, next_id))
            next_id += 1
        # re-sum to avoid drift from repeated subtraction
        total = math.fsum(v for _, v, _ in store.values())
        err = math.fsum(e for _, _, e in store.values())
    return QuadResult(total, err, len(store))


def quad_gamma_half(x, rel_tol=1e-12):
    """Integral of ``s**-1.5 exp(-1/s)`` over ``(0, x)`` by 1-D adaptive quadrature."""
    if not (math.isfinite(x) and x > 0):
        raise DomainError("x must be positive and finite")
    f = lambda s: s**-1.5 * math.exp(-1.0 / s) if s > 0 else 0.0
    # the integrand peaks at s = 2/3; split there and at decades beyond
    points = [p for p in (2.0 / 3.0, 10.0, 1e3, 1e5) if p < x]
    edges = [0.0] + points + [x]
    value, error = 0.0, 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        v, e = integrate.quad(f, lo, hi, epsabs=0.0, epsrel=rel_tol, limit=200)
        value += v
        error += e
    return QuadResult(value, error, len(edges) - 1)
