"""Randomised comparison of the closed forms against the cubature oracle."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .. import kernels as K
from ..errors import AccuracyError
from .quadrature import QuadratureSpec, quad_cov, quad_gamma_half

DOUBLE_TOL = 1e-6
SINGLE_TOL = 1e-8
IDENTITY_TOL = 1e-10
# off-diagonal covariances can pass through zero, so their error is measured
# against this fraction of the matching variance as well as their own size
SCALE_FLOOR = 1e-4


@dataclass
class FormulaCheck:
    formula_id: str
    trials: int
    max_rel_error: float
    tolerance: float
    passed: bool
    worst_input: dict = field(default_factory=dict)


@dataclass
class VerificationReport:
    seed: int
    trials: int
    checks: list

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def to_dict(self):
        return {"seed": self.seed, "trials": self.trials, "passed": self.passed,
                "checks": [asdict(c) for c in self.checks]}


def _loguniform(rng, lo, hi):
    return float(math.exp(rng.uniform(math.log(lo), math.log(hi))))


def _oracle(spec, scale):
    # accept a stalled refinement when its error is far below the comparison floor
    try:
        return quad_cov(spec).value
    except AccuracyError as exc:
        if exc.est_error <= 1e-3 * DOUBLE_TOL * max(abs(exc.value), SCALE_FLOOR * scale):
            return exc.value
        raise


class _Draw:
    """Random admissible model and grid."""

    def __init__(self, rng, first, small_n=False):
        self.theta = _loguniform(rng, 0.05, 2.0)
        self.sigma = float(rng.uniform(0.1, 2.0))
        self.t = _loguniform(rng, 0.05, 2.0)
        self.tp = self.t if first else _loguniform(rng, 0.05, 2.0)
        self.n = int(rng.integers(4, 13 if small_n else 41))
        self.length = float(rng.uniform(0.5, math.pi))
        self.gamma = 1.0 if first else float(rng.choice([1.0, 1.0, 1.25, 1.5]))
        a = 1.0 if first else float(rng.uniform(0.0, 1.0))
        b = 0.0 if first else float(rng.uniform(0.0, 1.0))
        if a + b < 0.05:
            a = 0.5
        self.a, self.b = a, b
        self.lag = 0 if first else int(rng.integers(1, min(self.n, 6) + 1))

    @property
    def params(self):
        return K.ModelParams(self.theta, self.sigma)

    def scheme(self):
        return K.SamplingScheme(0.0, self.length, self.n, (self.t,), self.gamma, self.a, self.b)

    def describe(self):
        return dict(vars(self))


def _rel(a, b, floor=0.0):
    return abs(a - b) / max(abs(b), floor, 1e-300)


def _run(formula_id, trials, rng, tol, fn):
    worst, worst_in = 0.0, {}
    for i in range(trials):
        err, info = fn(rng, i == 0)
        if not err <= worst:
            worst, worst_in = err, info
    return FormulaCheck(formula_id, trials, worst, tol, bool(worst <= tol), worst_in)


def _gamma_half(rng, first):
    x = 1.0 if first else _loguniform(rng, 1e-2, 1e4)
    return _rel(K.gamma_half_integral(x), quad_gamma_half(x).value), {"x": x}


def _rect(kind, fn):
    def check(rng, first):
        t1 = 1.0 if first else _loguniform(rng, 0.05, 5.0)
        t2 = 1.0 if first else _loguniform(rng, 0.05, 5.0)
        c = 1.0 if first else _loguniform(rng, 0.05, 5.0)
        ref = quad_cov(QuadratureSpec(kind, t1, t2, c=c)).value
        return _rel(fn(t1, t2, c), ref), {"t1": t1, "t2": t2, "c": c}
    return check


def _pointwise(rng, first):
    d = _Draw(rng, first)
    x, y = 0.0, (0.0 if first else float(rng.uniform(-1.0, 1.0)))
    ref = quad_cov(QuadratureSpec("A3", d.t, d.tp, x=x, y=y, theta=d.theta, sigma=d.sigma)).value
    return _rel(K.ux_pointwise_cov(d.t, d.tp, x, y, d.params), ref), {**d.describe(), "y": y}


def _ux_variance(rng, first):
    d = _Draw(rng, True)
    h = d.length / d.n
    ref = quad_cov(QuadratureSpec("A3_incr", d.t, d.t, grid_step=h, theta=d.theta, sigma=d.sigma)).value
    return _rel(K.ux_increment_variance(d.t, h, d.params), ref), d.describe()


def _ux_cov(method):
    def check(rng, first):
        d = _Draw(rng, first)
        s = d.scheme()
        scale = K.ux_increment_variance(min(d.t, d.tp), s.h, d.params)
        spec = QuadratureSpec("A3_incr", d.t, d.tp, x=d.lag * s.h, grid_step=s.h,
                              theta=d.theta, sigma=d.sigma, abs_tol=1e-9 * scale)
        value = K.ux_increment_cov(d.lag, d.t, d.tp, d.params, s, method=method)
        return _rel(value, _oracle(spec, scale), SCALE_FLOOR * scale), d.describe()
    return check


def _ux_identity(rng, first):
    d = _Draw(rng, True)
    s = d.scheme()
    a = K.ux_increment_cov(0, d.t, d.t, d.params, s, method="phi")
    return _rel(a, K.ux_increment_variance(d.t, s.h, d.params)), d.describe()


def _delta_cov(method, small_n):
    def check(rng, first):
        d = _Draw(rng, False, small_n=small_n)
        if first:
            d.tp = d.t
        s = d.scheme()
        scale = K.delta_u_increment_variance(min(d.t, d.tp), d.params, s)
        spec = QuadratureSpec("F_raw", d.t, d.tp, x=d.lag * s.h, h=s.h_gamma, a=d.a, b=d.b,
                              grid_step=s.h, theta=d.theta, sigma=d.sigma,
                              rel_tol=1e-9, abs_tol=1e-9 * scale)
        value = K.delta_u_increment_cov(d.lag, d.t, d.tp, d.params, s, method=method)
        return _rel(value, _oracle(spec, scale), SCALE_FLOOR * scale), d.describe()
    return check


def _delta_variance(method, small_n):
    def check(rng, first):
        d = _Draw(rng, first, small_n=small_n)
        d.tp = d.t
        s = d.scheme()
        spec = QuadratureSpec("F_raw", d.t, d.t, h=s.h_gamma, a=d.a, b=d.b, grid_step=s.h,
                              theta=d.theta, sigma=d.sigma, rel_tol=1e-9)
        ref = _oracle(spec, 0.0)
        return _rel(K.delta_u_increment_variance(d.t, d.params, s, method=method), ref), d.describe()
    return check


def verify_closed_forms(trials=100, seed=0, tolerance=None):
    """Compare every closed form with the oracle on random admissible inputs.

    The first trial of each family is a degenerate case (equal times, zero
    lag or equal points where meaningful).

    Parameters
    ----------
    trials : int
        Random inputs per formula.
    seed : int
        Seed of the input generator.
    tolerance : float, optional
        Replaces the default relative tolerance of the double-integral
        families.

    Returns
    -------
    VerificationReport
    """
    rng = np.random.default_rng(seed)
    families = [
        ("gamma_half_integral", SINGLE_TOL, _gamma_half),
        ("rect_integral_half", DOUBLE_TOL, _rect("half_power", K.rect_integral_half)),
        ("rect_integral_3half", DOUBLE_TOL, _rect("three_half_power", K.rect_integral_3half)),
        ("rect_integral_5half", DOUBLE_TOL, _rect("fifth_power", K.rect_integral_5half)),
        ("ux_pointwise_cov", DOUBLE_TOL, _pointwise),
        ("ux_increment_variance", DOUBLE_TOL, _ux_variance),
        ("ux_increment_cov/phi", DOUBLE_TOL, _ux_cov("phi")),
        ("ux_increment_cov/split", DOUBLE_TOL, _ux_cov("split")),
        ("ux_increment_cov_lag0_equals_variance", IDENTITY_TOL, _ux_identity),
        ("delta_u_increment_cov/split", DOUBLE_TOL, _delta_cov("split", False)),
        ("delta_u_increment_cov/closed_form", DOUBLE_TOL, _delta_cov("closed_form", True)),
        ("delta_u_increment_variance/split", DOUBLE_TOL, _delta_variance("split", False)),
        ("delta_u_increment_variance/blocks", DOUBLE_TOL, _delta_variance("blocks", True)),
    ]
    if tolerance is not None:
        families = [(n, tolerance if tol == DOUBLE_TOL else tol, fn) for n, tol, fn in families]
    checks = [_run(name, trials, rng, tol, fn) for name, tol, fn in families]
    return VerificationReport(seed, trials, checks)
