"""Closed-form covariances for the heat equation driven by space-only noise.

The model is ``u_t = theta * u_xx + sigma * dW(x)`` with ``u(0, x) = 0``.  On
the whole line every second moment of ``u``, ``u_x`` and their finite
differences reduces to rectangle integrals

    J_p(t, t', c) = int_0^t int_0^t' (s1 + s2)^(-p) exp(-c / (s1 + s2)) ds1 ds2

with ``p`` in ``{1/2, 3/2, 5/2}``.  The routines below evaluate them through
error functions and incomplete gamma functions.

Increment covariances of ``u_x`` and of the stencil ``Delta u`` are
differences of nearly equal terms.  For large ``N`` they are evaluated by
splitting the spatial covariance into an exact ``|d|^3`` polynomial and a
smooth remainder whose repeated differences are computed as integrals of a
Gaussian against hat kernels, which loses no precision.  The printed
erf-based groupings are kept as a second code path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Literal

import numpy as np
from scipy import special

from .errors import DomainError

SQRT_PI = math.sqrt(math.pi)

__all__ = [
    "ModelParams",
    "SamplingScheme",
    "StencilRegime",
    "QExpectations",
    "gamma_half_integral",
    "rect_integral_half",
    "rect_integral_3half",
    "rect_integral_5half",
    "phi_c",
    "phi_pair",
    "ux_increment_cov",
    "ux_increment_variance",
    "ux_pointwise_cov",
    "delta_u_increment_cov",
    "delta_u_increment_variance",
    "delta_u_variance_blocks",
    "mu_factor",
    "q_expectations",
    "bounded_domain_cov",
]


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


def _finite(name, value):
    value = float(value)
    if not math.isfinite(value):
        raise DomainError(f"{name} must be finite, got {value!r}")
    return value


def _positive(name, value):
    value = _finite(name, value)
    if value <= 0.0:
        raise DomainError(f"{name} must be positive, got {value!r}")
    return value


@dataclass(frozen=True)
class ModelParams:
    """Drift and volatility of the equation.

    Parameters
    ----------
    theta : float
        Diffusivity, strictly positive.
    sigma : float
        Noise amplitude.  Only ``sigma**2`` enters the law of the solution.
    """

    theta: float
    sigma: float

    def __post_init__(self):
        object.__setattr__(self, "theta", _positive("theta", self.theta))
        object.__setattr__(self, "sigma", _finite("sigma", self.sigma))

    @property
    def tau(self):
        """``sigma**2 / (theta**1.5 * sqrt(pi))``."""
        return self.sigma**2 / (self.theta**1.5 * SQRT_PI)

    def with_sigma(self, sigma):
        return replace(self, sigma=sigma)


@dataclass(frozen=True)
class SamplingScheme:
    """Space-time sampling grid.

    The spatial grid is ``x_i = A + i*h`` for ``i = 0..N`` with
    ``h = (B - A)/N``.  Stencil estimators also use the offset points
    ``y_i = x_i + a*h_gamma`` and ``z_i = x_i - b*h_gamma`` where
    ``h_gamma = (B - A)/N**gamma``.

    Parameters
    ----------
    a_end, b_end : float
        Interval end points ``A < B``.
    n_space : int
        Number of spatial cells ``N >= 2``.
    times : sequence of float
        Strictly increasing positive observation times.
    gamma : float
        Offset exponent, ``gamma >= 1``.
    stencil_a, stencil_b : float
        Stencil weights in ``[0, 1]`` with positive sum.
    """

    a_end: float = 0.0
    b_end: float = 1.0
    n_space: int = 100
    times: tuple = (1.0,)
    gamma: float = 1.0
    stencil_a: float = 1.0
    stencil_b: float = 0.0

    def __post_init__(self):
        a_end = _finite("a_end", self.a_end)
        b_end = _finite("b_end", self.b_end)
        if not a_end < b_end:
            raise DomainError(f"need A < B, got A={a_end}, B={b_end}")
        n = self.n_space
        if isinstance(n, float) and n.is_integer():
            n = int(n)
        if not isinstance(n, (int, np.integer)) or isinstance(n, bool) or n < 2:
            raise DomainError(f"n_space must be an integer >= 2, got {self.n_space!r}")
        times = tuple(_positive("time", t) for t in np.atleast_1d(self.times))
        if not times:
            raise DomainError("at least one observation time is required")
        if any(t2 <= t1 for t1, t2 in zip(times, times[1:])):
            raise DomainError("times must be strictly increasing")
        gamma = _finite("gamma", self.gamma)
        if gamma < 1.0:
            raise DomainError(f"gamma must be >= 1, got {gamma}")
        sa = _finite("stencil_a", self.stencil_a)
        sb = _finite("stencil_b", self.stencil_b)
        if not (0.0 <= sa <= 1.0 and 0.0 <= sb <= 1.0) or sa + sb <= 0.0:
            raise DomainError(f"stencil weights must lie in [0, 1] with positive sum, got a={sa}, b={sb}")
        for name, value in (("a_end", a_end), ("b_end", b_end), ("n_space", int(n)),
                            ("times", times), ("gamma", gamma),
                            ("stencil_a", sa), ("stencil_b", sb)):
            object.__setattr__(self, name, value)

    @classmethod
    def uniform(cls, n_space, horizon, n_time, **kwargs):
        """Scheme with times ``horizon * j / n_time`` for ``j = 1..n_time``."""
        horizon = _positive("horizon", horizon)
        if int(n_time) < 1:
            raise DomainError("n_time must be at least 1")
        times = tuple(horizon * j / n_time for j in range(1, int(n_time) + 1))
        return cls(n_space=n_space, times=times, **kwargs)

    @property
    def length(self):
        return self.b_end - self.a_end

    @property
    def h(self):
        return self.length / self.n_space

    @property
    def h_gamma(self):
        return self.length / self.n_space**self.gamma

    @property
    def stencil_width(self):
        """Distance ``(a + b) * h_gamma`` between the two stencil points."""
        return (self.stencil_a + self.stencil_b) * self.h_gamma

    @property
    def n_time(self):
        return len(self.times)

    def grid(self):
        """Points ``x_0..x_N``."""
        return self.a_end + self.h * np.arange(self.n_space + 1)

    def offset_points(self):
        """Stencil points ``(y_i, z_i)`` for ``i = 0..N``."""
        x = self.grid()
        return x + self.stencil_a * self.h_gamma, x - self.stencil_b * self.h_gamma

    def with_n(self, n_space):
        return replace(self, n_space=int(n_space))


@dataclass(frozen=True)
class StencilRegime:
    """Finite-difference bias factor and the case that produced it."""

    mu: float
    regime: Literal["gamma_gt_one", "sum_ge_one", "sum_lt_one"]


@dataclass(frozen=True)
class QExpectations:
    """Second moment of the centred quadratic variation.

    Attributes
    ----------
    q_diag : float
        Contribution of squared terms, ``2n/M``.
    q_nd : float
        All remaining pairs, including equal-time spatial pairs and
        cross-time pairs at equal location.
    q_nd_restricted : float
        The cross-time, strictly off-diagonal part only.  It is the sum
        ``8/M^2 sum_{l>k} sum_i (n - i) Phi^2(i) / (EU_k EU_l)``.
    n_terms : int
        Number of increments per time, ``N`` or ``N - 2``.
    """

    q_diag: float
    q_nd: float
    q_nd_restricted: float
    n_terms: int
    variant: str

    @property
    def total(self):
        return self.q_diag + self.q_nd


# ---------------------------------------------------------------------------
# Special functions
# ---------------------------------------------------------------------------


def gamma_half_integral(x):
    """Integral of ``s**-1.5 * exp(-1/s)`` over ``(0, x)``.

    Equal to ``sqrt(pi) * erfc(x**-0.5)`` after the substitution ``u = 1/s``.

    Parameters
    ----------
    x : float or ndarray
        Upper limit, positive and finite.

    Returns
    -------
    float or ndarray
    """
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
        raise DomainError("gamma_half_integral needs positive finite arguments")
    out = SQRT_PI * special.erfc(arr**-0.5)
    return float(out) if out.ndim == 0 else out


def _check_rect_args(t1, t2, c, allow_zero_c):
    t1 = _positive("t1", t1)
    t2 = _positive("t2", t2)
    c = _finite("c", c)
    if c < 0 or (c == 0 and not allow_zero_c):
        raise DomainError(f"c must be {'nonnegative' if allow_zero_c else 'positive'}, got {c}")
    # fixed argument order keeps the symmetric integrals bitwise symmetric
    return min(t1, t2), max(t1, t2), c


def rect_integral_5half(t1, t2, c):
    """Rectangle integral of ``(s1+s2)**-2.5 * exp(-c/(s1+s2))``.

    Integrating along the diagonals ``w = s1 + s2`` the cross-section has
    length ``min(w, t1, t2, t1 + t2 - w)`` and each piece is an incomplete
    gamma function.  Terms linear in ``w`` cancel between the three corners,
    which allows the lower incomplete gamma to be used when ``c`` is small
    compared with the rectangle.

    Parameters
    ----------
    t1, t2, c : float
        Positive side lengths and decay constant.

    Returns
    -------
    float
    """
    t1, t2, c = _check_rect_args(t1, t2, c, allow_zero_c=False)
    corners = (t1 + t2, t1, t2)
    g32 = special.gamma(1.5)
    if c / (t1 + t2) < 1.0:
        def psi(T):
            x = c / T
            return -T * c**-1.5 * g32 * special.gammainc(1.5, x) - c**-0.5 * SQRT_PI * special.erfc(math.sqrt(x))
    else:
        def psi(T):
            x = c / T
            return T * c**-1.5 * g32 * special.gammaincc(1.5, x) - c**-0.5 * SQRT_PI * special.erfc(math.sqrt(x))
    a, b, d = (psi(T) for T in corners)
    return float((a - b) - d)


def rect_integral_half(t1, t2, c):
    """Rectangle integral of ``(s1+s2)**-0.5 * exp(-c/(s1+s2))``.

    Uses the integration-by-parts identity that expresses it through
    :func:`gamma_half_integral` and :func:`rect_integral_5half`.  The
    identity subtracts terms of similar size, so relative accuracy degrades
    when ``c`` is tiny but positive; ``c = 0`` is handled exactly.
    """
    t1, t2, c = _check_rect_args(t1, t2, c, allow_zero_c=True)
    s = t1 + t2
    if c == 0.0:
        return 4.0 / 3.0 * ((s**1.5 - t1**1.5) - t2**1.5)
    e = math.exp
    part1 = 4.0 / 3.0 * (s**1.5 * e(-c / s) - t2**1.5 * e(-c / t2) - t1**1.5 * e(-c / t1))
    part2 = 16.0 * c / 3.0 * (s**0.5 * e(-c / s) - t2**0.5 * e(-c / t2) - t1**0.5 * e(-c / t1))
    g = gamma_half_integral
    part3 = -16.0 * c**1.5 / 3.0 * ((g(s / c) - g(t1 / c)) - g(t2 / c))
    part4 = -4.0 * c**1.5 * rect_integral_5half(t1 / c, t2 / c, 1.0)
    return part1 + part2 + part3 + part4


def rect_integral_3half(t1, t2, c):
    """Rectangle integral of ``(s1+s2)**-1.5 * exp(-c/(s1+s2))``.

    Evaluated as ``sum_T s_T psi(T)`` with a grouping that stays accurate as
    ``c -> 0``; at ``c = 0`` it is ``4 (sqrt(t1) + sqrt(t2) - sqrt(t1+t2))``.
    """
    t1, t2, c = _check_rect_args(t1, t2, c, allow_zero_c=True)
    if c == 0.0:
        return 4.0 * (math.sqrt(t1) + math.sqrt(t2) - math.sqrt(t1 + t2))

    def psi(T):
        y = math.sqrt(c / T)
        return math.sqrt(T) * (-SQRT_PI * math.erf(y) / y - 2.0 * math.exp(-y * y)) \
            + 2.0 * SQRT_PI * math.sqrt(c) * math.erfc(y)

    return psi(t1 + t2) - psi(t1) - psi(t2)


# ---------------------------------------------------------------------------
# Printed building blocks of the u_x increment covariance
# ---------------------------------------------------------------------------


def phi_c(c, z, x):
    """Second difference ``2e^{-cx^2} - e^{-c(x+z)^2} - e^{-c(x-z)^2}``.

    Written with ``expm1`` so that small ``z`` keeps full relative accuracy.
    Broadcasts over array arguments.
    """
    c = np.asarray(c, dtype=float)
    z = np.asarray(z, dtype=float)
    x = np.asarray(x, dtype=float)
    if np.any(c <= 0):
        raise DomainError("phi_c needs c > 0")
    with np.errstate(over="ignore", invalid="ignore"):
        base = np.exp(-c * x**2)
        stable = -base * (np.expm1(-c * (z * z + 2 * x * z)) + np.expm1(-c * (z * z - 2 * x * z)))
        direct = 2 * base - np.exp(-c * (x + z) ** 2) - np.exp(-c * (x - z) ** 2)
        out = np.where(c * x**2 > 600.0, direct, stable)
    return float(out) if out.ndim == 0 else out


def _erf_group(w, c1, c2):
    return (special.erf(w / np.sqrt(c1)) + special.erf(w / np.sqrt(c2))
            - special.erf(w / np.sqrt(c1 + c2)))


def phi_pair(c1, c2, z, x):
    """The erf combination paired with :func:`phi_c` in the increment covariance.

    ``2x E(x) - (x+z) E(x+z) - (x-z) E(x-z)`` with
    ``E(w) = erf(w/sqrt(c1)) + erf(w/sqrt(c2)) - erf(w/sqrt(c1+c2)) - 1``.
    This is the form valid for ``x >= z``; see :func:`ux_increment_cov` for
    its extension to ``x < z``.
    """
    c1 = np.asarray(c1, dtype=float)
    c2 = np.asarray(c2, dtype=float)
    if np.any(c1 <= 0) or np.any(c2 <= 0):
        raise DomainError("phi_pair needs c1, c2 > 0")
    z = np.asarray(z, dtype=float)
    x = np.asarray(x, dtype=float)

    def term(w):
        return w * (_erf_group(w, c1, c2) - 1.0)

    out = 2 * term(x) - term(x + z) - term(x - z)
    return float(out) if out.ndim == 0 else out


def _phi_pair_abs(c1, c2, z, x):
    # Same combination with the "-1" replaced by "-|w|/w".  It coincides
    # with phi_pair whenever x >= z and is the correct covariance kernel
    # at x = 0, where the increments overlap.
    def term(w):
        return w * _erf_group(w, c1, c2) - np.abs(w)

    return 2 * term(x) - term(x + z) - term(x - z)


# ---------------------------------------------------------------------------
# Stable evaluation of repeated differences
# ---------------------------------------------------------------------------

_GL_X, _GL_W = np.polynomial.legendre.leggauss(12)
_PANEL = 0.5
_CHUNK = 2048


def _hat_rule(eta):
    """Nodes and weights for ``int f(u) * max(eta - |u|, 0) du``."""
    npan = max(1, int(math.ceil(eta / _PANEL)))
    edges = np.linspace(0.0, eta, npan + 1)
    lo, hi = edges[:-1, None], edges[1:, None]
    u = (lo + 0.5 * (hi - lo) * (_GL_X + 1.0)).ravel()
    w = (0.5 * (hi - lo) * _GL_W).ravel() * (eta - u)
    return np.concatenate([u, -u]), np.concatenate([w, w])


def _gauss_against(y, nodes, weights):
    """``sum_j weights_j * 16 exp(-(y + nodes_j)^2)`` for every entry of ``y``."""
    y = np.asarray(y, dtype=float)
    out = np.empty_like(y)
    flat_y, flat_out = y.ravel(), out.ravel()
    for start in range(0, flat_y.size, _CHUNK):
        block = flat_y[start:start + _CHUNK, None] + nodes[None, :]
        flat_out[start:start + _CHUNK] = 16.0 * (np.exp(-block * block) @ weights)
    return flat_out.reshape(y.shape)


def _second_diff_smooth(y, eta):
    """``Delta^2_eta g''(y)`` for the smooth profile ``g`` below."""
    nodes, weights = _hat_rule(eta)
    return _gauss_against(y, nodes, weights)


def _fourth_diff_smooth(y, eta1, eta2):
    """``Delta^2_eta1 Delta^2_eta2 g(y)``.

    ``g(y) = 4/3 (1+y^2) e^{-y^2} + sqrt(pi) erf(y) (2y + 4/3 y^3)`` is the
    smooth part of the rectangle integral with ``p = 1/2``; its fourth
    derivative is ``16 exp(-y^2)``.
    """
    n1, w1 = _hat_rule(eta1)
    n2, w2 = _hat_rule(eta2)
    nodes = (n1[:, None] + n2[None, :]).ravel()
    weights = (w1[:, None] * w2[None, :]).ravel()
    return _gauss_against(y, nodes, weights)


def _cubic_fourth_diff(lags, rho):
    """``Delta^2_1 Delta^2_rho |x|^3 / rho^2`` at integer ``lags`` (unit step)."""
    def p(x):
        ax = np.abs(x)
        return np.where(ax >= rho, 6.0 * ax * rho * rho, 2.0 * rho**3 + 6.0 * rho * x * x - 2.0 * ax**3)

    lags = np.asarray(lags, dtype=float)
    out = (p(lags + 1) + p(lags - 1) - 2.0 * p(lags)) / (rho * rho)
    return np.where(lags - 1.0 >= rho, 0.0, out)


def _time_corners(t_k, t_l):
    t_k, t_l = min(t_k, t_l), max(t_k, t_l)
    return ((t_k + t_l, 1.0), (t_k, -1.0), (t_l, -1.0))


def _ux_cov_split(lags, t_k, t_l, params, h):
    lags = np.asarray(lags, dtype=float)
    theta, s2 = params.theta, params.sigma**2
    pref = s2 / (2.0 * math.sqrt(math.pi * theta))
    out = np.zeros_like(lags)
    for T, sgn in _time_corners(t_k, t_l):
        scale = 2.0 * math.sqrt(theta * T)
        out += sgn * math.sqrt(T) / (4.0 * theta) * _second_diff_smooth(lags * h / scale, h / scale)
    out *= pref
    return out + np.where(lags == 0, s2 * h / theta**2, 0.0)


def _delta_cov_split(lags, t_k, t_l, params, scheme):
    lags = np.asarray(lags, dtype=float)
    theta, s2 = params.theta, params.sigma**2
    h, delta = scheme.h, scheme.stencil_width
    pref = s2 / (2.0 * math.sqrt(math.pi * theta))
    smooth = np.zeros_like(lags)
    for T, sgn in _time_corners(t_k, t_l):
        scale = 2.0 * math.sqrt(theta * T)
        smooth += sgn * T**1.5 * _fourth_diff_smooth(lags * h / scale, h / scale, delta / scale)
    smooth *= pref / delta**2
    kappa = s2 / (12.0 * theta**2)
    return smooth + kappa * h * _cubic_fourth_diff(lags, delta / h)


# ---------------------------------------------------------------------------
# Public covariance kernels
# ---------------------------------------------------------------------------


def _check_lag(lag, n, lo=0):
    arr = np.asarray(lag)
    if arr.dtype.kind not in "iu":
        if not np.all(np.equal(np.mod(arr, 1), 0)):
            raise DomainError("lags must be integers")
        arr = arr.astype(np.int64)
    if np.any(arr < lo) or np.any(arr > n):
        raise DomainError(f"lag must lie in [{lo}, {n}]")
    return arr


def ux_increment_cov(lag, t_k, t_l, params, scheme, method="phi"):
    """Covariance of ``u_x`` increments at spatial lag ``lag`` and times ``t_k, t_l``.

    ``E[(u_x(t_k,x_i) - u_x(t_k,x_{i-1})) (u_x(t_l,x_j) - u_x(t_l,x_{j-1}))]``
    with ``|i - j| = lag`` on the grid of ``scheme``.

    Parameters
    ----------
    lag : int or array of int
        Spatial lag in ``[0, N]``.
    t_k, t_l : float
        Positive times.
    params : ModelParams
    scheme : SamplingScheme
        Only the step ``h`` is used.
    method : {"phi", "split"}
        ``"phi"`` evaluates the erf/exponential grouping directly.
        ``"split"`` separates the exact kink at the origin from a smooth
        remainder and is accurate to rounding for any ``N``.

    Returns
    -------
    float or ndarray
    """
    lags = _check_lag(lag, scheme.n_space)
    t_k, t_l = _positive("t_k", t_k), _positive("t_l", t_l)
    h = scheme.h
    if method == "split":
        out = _ux_cov_split(lags, t_k, t_l, params, h)
    elif method == "phi":
        theta, tau = params.theta, params.tau
        x = lags * h
        out = (tau * math.sqrt(t_l) * phi_c(1.0 / (4 * theta * t_l), h, x)
               + tau * math.sqrt(t_k) * phi_c(1.0 / (4 * theta * t_k), h, x)
               - tau * math.sqrt(t_l + t_k) * phi_c(1.0 / (4 * theta * (t_l + t_k)), h, x)
               + tau * SQRT_PI / (2 * math.sqrt(theta))
               * _phi_pair_abs(4 * theta * t_l, 4 * theta * t_k, h, x))
        out = np.asarray(out, dtype=float)
    else:
        raise DomainError(f"unknown method {method!r}")
    return float(out) if np.ndim(out) == 0 else out


def ux_increment_variance(t, h, params):
    """Variance of ``u_x(t, x + h) - u_x(t, x)``.

    Four-term closed form: two exponential terms and two values of
    :func:`gamma_half_integral`.  Independent of ``x``.
    """
    t, h = _positive("t", t), _positive("h", h)
    theta, tau = params.theta, params.tau
    r1 = h * h / (8 * theta * t)
    r2 = h * h / (4 * theta * t)
    g1 = gamma_half_integral(4 * theta * t / h**2)
    g2 = gamma_half_integral(8 * theta * t / h**2)
    return float(
        -2 * math.sqrt(2 * t) * tau * -math.expm1(-r1)
        + 4 * math.sqrt(t) * tau * -math.expm1(-r2)
        + tau * h / math.sqrt(theta) * (g1 - (g2 - g1))
    )


def ux_pointwise_cov(t, tp, x, y, params):
    """``E[u_x(t, x) u_x(tp, y)]`` on the whole line.

    Reduces to the ``p = 3/2`` and ``p = 5/2`` rectangle integrals with
    ``c = (x - y)^2 / (4 theta)``; written in erfc form so the value is
    continuous at ``x = y``.
    """
    t, tp = _positive("t", t), _positive("tp", tp)
    d = abs(_finite("x", x) - _finite("y", y))
    theta, tau = params.theta, params.tau
    total = 0.0
    tail = 0.0
    for T, sgn in ((t, 1.0), (tp, 1.0), (t + tp, -1.0)):
        total += sgn * math.sqrt(T) * math.exp(-d * d / (4 * theta * T))
        tail += sgn * math.erfc(d / math.sqrt(4 * theta * T))
    return tau * total - tau * SQRT_PI / (2 * math.sqrt(theta)) * d * tail


def _stencil_F(i, t_k, t_l, theta, h, delta):
    # 2 J(ih) - J(ih + delta) - J(ih - delta) with J(d) = J_{1/2}(t_k, t_l, d^2/(4 theta))
    J = lambda d: rect_integral_half(t_k, t_l, d * d / (4 * theta))
    return 2 * J(i * h) - J(i * h + delta) - J(i * h - delta)


def delta_u_increment_cov(lag, t_k, t_l, params, scheme, method="split"):
    """Covariance of increments of the stencil quotient ``Delta u``.

    ``E[(Du(t_k,x_i) - Du(t_k,x_{i-1})) (Du(t_l,x_j) - Du(t_l,x_{j-1}))]``
    with ``|i - j| = lag >= 1`` and ``Du`` the quotient over the points
    ``y, z`` of the scheme.

    Parameters
    ----------
    lag : int or array of int
        Spatial lag in ``[1, N]``.
    t_k, t_l : float
    params : ModelParams
    scheme : SamplingScheme
    method : {"split", "closed_form"}
        ``"closed_form"`` assembles the second difference of the rectangle
        integrals from :func:`rect_integral_half`.  It is exact algebra but
        cancels roughly ``N**(2 gamma + 2)``-fold, so it is only usable for
        small ``N``.  ``"split"`` is accurate for all ``N``.
    """
    lags = _check_lag(lag, scheme.n_space, lo=1)
    return _delta_cov(lags, t_k, t_l, params, scheme, method)


def _delta_cov(lags, t_k, t_l, params, scheme, method):
    t_k, t_l = _positive("t_k", t_k), _positive("t_l", t_l)
    if method == "split":
        out = _delta_cov_split(lags, t_k, t_l, params, scheme)
    elif method == "closed_form":
        theta, h, delta = params.theta, scheme.h, scheme.stencil_width
        pref = params.tau * theta / (2 * delta**2)
        F = lambda i: _stencil_F(i, t_k, t_l, theta, h, delta)
        out = np.array([pref * (2 * F(i) - F(i + 1) - F(i - 1)) for i in np.ravel(lags)])
        out = out.reshape(np.shape(lags))
    else:
        raise DomainError(f"unknown method {method!r}")
    return float(out) if np.ndim(out) == 0 else out


def delta_u_increment_variance(t, params, scheme, method="split"):
    """Variance of ``Du(t, x + h) - Du(t, x)``, independent of ``x``.

    ``method="blocks"`` sums :func:`delta_u_variance_blocks` instead.
    """
    t = _positive("t", t)
    if method == "blocks":
        return float(sum(delta_u_variance_blocks(t, params, scheme)))
    return _delta_cov(np.int64(0), t, t, params, scheme, method)


def delta_u_variance_blocks(t, params, scheme):
    """The three closed-form blocks whose sum is the stencil increment variance.

    Returns
    -------
    tuple of float
        Own-offset block, and the blocks at distances ``h + delta`` and
        ``|h - delta|``, where ``delta`` is the stencil width.  Computed from
        :func:`rect_integral_half`, so only accurate for moderate ``N``.
    """
    t = _positive("t", t)
    theta, tau, h, delta = params.theta, params.tau, scheme.h, scheme.stencil_width
    J = lambda d: rect_integral_half(t, t, d * d / (4 * theta))
    j0, jd, jh = J(0.0), J(delta), J(h)
    a1 = 2 * tau * theta / delta**2 * (j0 - jd)
    a2 = tau * theta / delta**2 * (J(h + delta) - jh)
    a3 = tau * theta / delta**2 * (J(h - delta) - jh)
    return a1, a2, a3


def mu_factor(a, b, gamma):
    """Bias factor of the stencil quadratic variation.

    Parameters
    ----------
    a, b : float
        Stencil weights in ``[0, 1]`` with ``a + b > 0``.
    gamma : float
        Offset exponent, ``>= 1``.

    Returns
    -------
    StencilRegime
    """
    a, b, gamma = _finite("a", a), _finite("b", b), _finite("gamma", gamma)
    if not (0 <= a <= 1 and 0 <= b <= 1):
        raise DomainError("stencil weights must lie in [0, 1]")
    if a + b <= 0:
        raise DomainError("a + b must be positive")
    if gamma < 1:
        raise DomainError("gamma must be >= 1")
    s = a + b
    if gamma > 1:
        return StencilRegime(1.0, "gamma_gt_one")
    if s >= 1:
        return StencilRegime((3 * s - 1) / (3 * s * s), "sum_ge_one")
    return StencilRegime((3 - s) / 3, "sum_lt_one")


def q_expectations(params, scheme, variant="ux"):
    """Second moment of the normalised quadratic variation.

    For ``U_j(x_i)`` the squared increments at time ``t_j``, the statistic is
    ``Q = (1/M) sum_j sum_i (U_j(x_i)/E U_j - 1)`` and
    ``E Q^2 = (2/M^2) sum_{k,l} sum_{i,i'} Phi^2(|i-i'|, t_k, t_l) / (E U_k E U_l)``.

    Parameters
    ----------
    params : ModelParams
    scheme : SamplingScheme
    variant : {"ux", "delta_u"}
        ``"ux"`` uses the ``N`` increments of ``u_x``; ``"delta_u"`` the
        ``N - 2`` interior stencil increments ``i = 2..N-1``.

    Returns
    -------
    QExpectations
    """
    if variant == "ux":
        n = scheme.n_space
        cov = lambda lags, tk, tl: _ux_cov_split(lags, tk, tl, params, scheme.h)
        first_restricted = 1
    elif variant == "delta_u":
        n = scheme.n_space - 2
        cov = lambda lags, tk, tl: _delta_cov_split(lags, tk, tl, params, scheme)
        first_restricted = 2
    else:
        raise DomainError(f"unknown variant {variant!r}")
    if n < 1:
        raise DomainError("not enough interior increments")
    if params.sigma == 0:
        raise DomainError("sigma = 0 gives a degenerate statistic")
    times = scheme.times
    m = len(times)
    lags = np.arange(n, dtype=float)
    mult = np.where(lags == 0, n, 2.0 * (n - lags))
    variances = [float(cov(np.zeros(1), t, t)[0]) for t in times]
    same, cross, restricted = 0.0, 0.0, 0.0
    for k in range(m):
        for l in range(k, m):
            phi2 = cov(lags, times[k], times[l]) ** 2 / (variances[k] * variances[l])
            if k == l:
                same += float(np.sum(mult[1:] * phi2[1:]))
            else:
                cross += 2.0 * float(np.sum(mult * phi2))
                sel = slice(first_restricted, n)
                restricted += float(np.sum((n - lags[sel]) * phi2[sel]))
    q_diag = 2.0 * n / m
    q_nd = 2.0 / m**2 * (same + cross)
    return QExpectations(q_diag, q_nd, 8.0 / m**2 * restricted, n, variant)


def bounded_domain_cov(t, tp, x, y, params, n_modes):
    """``E[u(t,x) u(tp,y)]`` for the Dirichlet problem on ``(0, pi)``.

    Truncated sine series with ``n_modes`` terms.  End points are admitted as
    limits and give zero.
    """
    t, tp = _positive("t", t), _positive("tp", tp)
    x, y = _finite("x", x), _finite("y", y)
    if not (0 <= x <= math.pi and 0 <= y <= math.pi):
        raise DomainError("x and y must lie in [0, pi]")
    if int(n_modes) < 1:
        raise DomainError("n_modes must be positive")
    k = np.arange(1, int(n_modes) + 1, dtype=float)
    theta = params.theta
    terms = (np.expm1(-k * k * theta * t) * np.expm1(-k * k * theta * tp)
             * np.sin(k * x) * np.sin(k * y) / k**4)
    return float(2 * params.sigma**2 / (math.pi * theta**2) * np.sum(terms[::-1]))
