"""Power-variation estimators of ``theta**2`` and ``sigma**2``.

All estimators share one quadratic sum ``S`` of spatial increments.  With
``sigma`` known the diffusivity estimate is ``sigma^2 (B-A) M / S``; with
``theta`` known the volatility estimate is ``theta^2 S / ((B-A) M)``.  The
three families differ only in which increments enter ``S``:

* ``*_ux``: increments of the derivative ``u_x`` over ``i = 1..N``;
* ``*_check``: second differences of ``u`` divided by ``h``, ``i = 1..N-1``;
* ``*_tilde``: increments of the stencil quotient, ``i = 2..N-1``.

The finite-difference families are biased by the factor ``mu`` from
:func:`spde_powvar.kernels.mu_factor`.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import kernels
from ._io import fmt
from .errors import DegenerateSampleError, DomainError

ESTIMATOR_IDS = (
    "theta2_ux", "sigma2_ux",
    "theta2_check", "sigma2_check",
    "theta2_tilde", "sigma2_tilde",
)

FIELD_KIND_FOR = {"ux": "ux_increments", "check": "u_values", "tilde": "delta_u_increments"}


def estimator_family(estimator_id):
    """Split an id into ``(target, family)``, e.g. ``("sigma", "check")``."""
    if estimator_id not in ESTIMATOR_IDS:
        raise DomainError(f"unknown estimator {estimator_id!r}")
    target, family = estimator_id.split("_")
    return target[:-1], family


@dataclass(frozen=True)
class EstimateReport:
    """Result of one estimator applied to one field.

    ``bias_corrected_value`` is ``raw_value * mu`` for theta-type and
    ``raw_value / mu`` for sigma-type estimates.
    """

    estimator_id: str
    raw_value: float
    bias_corrected_value: float
    mu: float
    n_space: int
    n_time: int
    normalized_stat: float | None = None

    CSV_HEADER = ("estimator_id", "raw_value", "bias_corrected_value", "mu",
                  "n_space", "n_time", "normalized_stat")

    def to_dict(self):
        return asdict(self)

    def to_csv_line(self):
        row = [self.estimator_id, fmt(self.raw_value), fmt(self.bias_corrected_value),
               fmt(self.mu), str(self.n_space), str(self.n_time),
               "" if self.normalized_stat is None else fmt(self.normalized_stat)]
        return ",".join(row)


def quadratic_variation(increments):
    """Sum of squares of all entries."""
    arr = np.asarray(increments, dtype=float)
    if arr.size == 0:
        raise DomainError("quadratic variation of an empty sequence")
    return float(np.sum(arr * arr))


def delta_h_apply(u_y, u_z, a, b, h):
    """Stencil quotient ``(u(y_i) - u(z_i)) / ((a + b) h)``.

    Parameters
    ----------
    u_y, u_z : array_like
        Values at ``y_i = x_i + a h`` and ``z_i = x_i - b h``.
    a, b : float
        Stencil weights with ``a + b > 0``.
    h : float
        Offset step.
    """
    if not a + b > 0:
        raise DomainError("a + b must be positive")
    if not h > 0:
        raise DomainError("h must be positive")
    u_y = np.asarray(u_y, dtype=float)
    u_z = np.asarray(u_z, dtype=float)
    if u_y.shape != u_z.shape:
        raise DomainError("y and z samples must have the same shape")
    return (u_y - u_z) / ((a + b) * h)


def delta_u_increments_from_values(u_y, u_z, scheme):
    """Stencil increments ``Du(x_i) - Du(x_{i-1})`` from values at ``y_i, z_i``.

    ``u_y`` and ``u_z`` have shape ``M x (N+1)``; the result has shape
    ``M x N`` in the layout of a ``delta_u_increments`` field.
    """
    q = delta_h_apply(u_y, u_z, scheme.stencil_a, scheme.stencil_b, scheme.h_gamma)
    return np.diff(np.atleast_2d(q), axis=1)


def _require(field, kind):
    if field.kind != kind:
        raise DomainError(f"estimator needs a {kind} field, got {field.kind}")
    if field.scheme is None:
        raise DomainError("estimators need a field on a uniform scheme")
    return field.scheme


def _finish(target, family, qsum, known, value, scheme, mu):
    m, length = scheme.n_time, scheme.length
    if known == target or known not in ("sigma", "theta"):
        raise DomainError(f"known must be the other parameter ({'theta' if target == 'sigma' else 'sigma'})")
    value = float(value)
    if not math.isfinite(value):
        raise DomainError("known parameter must be finite")
    if target == "theta":
        if qsum <= 0:
            raise DegenerateSampleError("zero quadratic sum: theta estimate undefined")
        if value == 0:
            raise DomainError("known sigma must be nonzero")
        raw = value**2 * length * m / qsum
        corrected = raw * mu
    else:
        if value <= 0:
            raise DomainError("known theta must be positive")
        raw = value**2 * qsum / (length * m)
        corrected = raw / mu
    return EstimateReport(f"{target}2_{family}", raw, corrected, mu, scheme.n_space, m)


def estimate_from_ux(field, known, value):
    """Estimate from increments of ``u_x``.

    Parameters
    ----------
    field : FieldSample
        Kind ``"ux_increments"``.
    known : {"sigma", "theta"}
        The parameter supplied in ``value``; the other one is estimated.
    value : float

    Returns
    -------
    EstimateReport
        ``mu`` is always 1 for this family.
    """
    scheme = _require(field, "ux_increments")
    target = "theta" if known == "sigma" else "sigma"
    return _finish(target, "ux", quadratic_variation(field.values), known, value, scheme, 1.0)


def second_differences(values):
    """``u_{i+1} - 2 u_i + u_{i-1}`` along the last axis, ``i = 1..N-1``."""
    values = np.asarray(values, dtype=float)
    return values[..., 2:] - 2 * values[..., 1:-1] + values[..., :-2]


def estimate_from_u_seconddiff(field, known, value, correct_bias=True):
    """Estimate from second differences of ``u`` on the plain grid.

    The second difference divided by ``h`` is the forward stencil increment
    with ``a = 1, b = 0, gamma = 1``, so the bias factor is ``2/3``.

    Parameters
    ----------
    field : FieldSample
        Kind ``"u_values"`` with ``N >= 3``.
    known : {"sigma", "theta"}
    value : float
    correct_bias : bool
    """
    scheme = _require(field, "u_values")
    if scheme.n_space < 3:
        raise DomainError("second differences need N >= 3")
    target = "theta" if known == "sigma" else "sigma"
    h = scheme.h
    qsum = quadratic_variation(second_differences(field.values)) / (h * h)
    mu = kernels.mu_factor(1.0, 0.0, 1.0).mu if correct_bias else 1.0
    return _finish(target, "check", qsum, known, value, scheme, mu)


def estimate_from_delta_u(field, known, value, correct_bias=True):
    """Estimate from increments of the stencil quotient.

    Uses columns ``i = 2..N-1`` of the field, so the two increments that
    touch the end points are left out.

    Parameters
    ----------
    field : FieldSample
        Kind ``"delta_u_increments"``.  The stencil is read from its scheme.
    known : {"sigma", "theta"}
    value : float
    correct_bias : bool
    """
    scheme = _require(field, "delta_u_increments")
    if scheme.n_space < 3:
        raise DomainError("stencil estimator needs N >= 3")
    target = "theta" if known == "sigma" else "sigma"
    qsum = quadratic_variation(field.values[:, 1:-1])
    mu = kernels.mu_factor(scheme.stencil_a, scheme.stencil_b, scheme.gamma).mu if correct_bias else 1.0
    return _finish(target, "tilde", qsum, known, value, scheme, mu)


def estimate(field, estimator_id, known_value, correct_bias=True):
    """Dispatch on ``estimator_id``; ``known_value`` is the other parameter."""
    target, family = estimator_family(estimator_id)
    known = "theta" if target == "sigma" else "sigma"
    if family == "ux":
        return estimate_from_ux(field, known, known_value)
    if family == "check":
        return estimate_from_u_seconddiff(field, known, known_value, correct_bias)
    return estimate_from_delta_u(field, known, known_value, correct_bias)


def normalized_stat(report, true_value, level="squared"):
    """Centred and scaled estimate, asymptotically standard normal.

    Parameters
    ----------
    report : EstimateReport
    true_value : float
        True parameter (``sigma`` or ``theta``, not its square).
    level : {"squared", "parameter"}
        ``"squared"`` gives ``sqrt(NM) (est - true^2) / (sqrt(2) true^2)``
        on the bias-corrected squared estimate.  ``"parameter"`` gives
        ``sqrt(2NM) (sqrt(est) - true) / true``, its delta-method form.
    """
    true_value = float(true_value)
    if not true_value > 0:
        raise DomainError("true_value must be positive")
    nm = report.n_space * report.n_time
    est = report.bias_corrected_value
    t2 = true_value**2
    if level == "squared":
        return math.sqrt(nm) * (est - t2) / (math.sqrt(2.0) * t2)
    if level == "parameter":
        return math.sqrt(2.0 * nm) * (math.sqrt(est) - true_value) / true_value
    raise DomainError(f"unknown level {level!r}")


def q_statistic(field, params):
    """Renormalised centred quadratic variation ``sqrt(M/(2n)) Q``.

    ``Q = (1/M) sum_j sum_i (U_j(x_i)/E U_j - 1)`` where ``U_j(x_i)`` are
    squared increments and ``E U_j`` their exact expectation.  For stencil
    fields only columns ``i = 2..N-1`` are used, and ``n = N - 2``.
    """
    scheme = field.scheme
    if scheme is None:
        raise DomainError("q_statistic needs a field on a uniform scheme")
    if field.kind == "ux_increments":
        incr = field.values
        expected = [kernels.ux_increment_variance(t, scheme.h, params) for t in scheme.times]
    elif field.kind == "delta_u_increments":
        incr = field.values[:, 1:-1]
        expected = [kernels.delta_u_increment_variance(t, params, scheme) for t in scheme.times]
    else:
        raise DomainError("q_statistic needs an increment field")
    m, n = incr.shape
    ratios = incr**2 / np.asarray(expected)[:, None] - 1.0
    q = float(np.sum(ratios)) / m
    return math.sqrt(m / (2.0 * n)) * q
