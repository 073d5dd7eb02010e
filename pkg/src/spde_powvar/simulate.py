"""Exact Gaussian sampling of the solution and of its spatial increments.

Two routes are provided.

* On ``(0, pi)`` with Dirichlet conditions the solution is a sine series
  with independent standard normal coefficients, so one draw of the
  coefficients gives the whole space-time field.
* On the whole line the increments of ``u_x`` or of the stencil quotient
  form a stationary Gaussian vector with known covariance, sampled by a
  dense Cholesky factor.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.linalg import lapack, toeplitz

from . import kernels
from ._io import atomic_write_json, atomic_write_text, fmt, make_rng
from .errors import DomainError, NumericalError, SizeError
from .kernels import ModelParams, SamplingScheme

FIELD_KINDS = ("u_values", "ux_increments", "delta_u_increments")
DEFAULT_MAX_DIM = 4096
JITTER_LEVELS = (1e-14, 1e-12, 1e-10)


@dataclass(frozen=True, eq=False)
class FieldSample:
    """One simulated field on a space-time grid.

    Attributes
    ----------
    scheme : SamplingScheme or None
        Grid that produced the sample.  ``None`` only for spectral samples
        on an irregular set of points.
    kind : str
        ``"u_values"`` (``M x (N+1)``), ``"ux_increments"`` or
        ``"delta_u_increments"`` (``M x N``).  Column ``i - 1`` of an
        increment field holds the increment between ``x_{i-1}`` and ``x_i``.
    values : ndarray
    seed : int
    params : ModelParams
        Parameters the sample was drawn with.
    n_modes : int or None
        Number of sine modes for spectral samples.
    points : ndarray or None
        Spatial points of ``u_values`` samples.
    domain : str
        ``"line"`` or ``"bounded"``.
    times : tuple
        Observation times; taken from ``scheme`` when it is present.
    """

    scheme: SamplingScheme | None
    kind: str
    values: np.ndarray
    seed: int
    params: ModelParams
    n_modes: int | None = None
    points: np.ndarray | None = None
    domain: str = "line"
    times: tuple | None = None

    def __post_init__(self):
        if self.kind not in FIELD_KINDS:
            raise DomainError(f"unknown field kind {self.kind!r}")
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            raise DomainError("values must be a 2-D array")
        if not np.all(np.isfinite(values)):
            raise NumericalError("field contains non-finite values")
        if self.scheme is not None:
            cols = self.scheme.n_space + (1 if self.kind == "u_values" else 0)
            if values.shape != (self.scheme.n_time, cols):
                raise DomainError(
                    f"{self.kind} on this scheme needs shape {(self.scheme.n_time, cols)}, got {values.shape}")
            object.__setattr__(self, "times", self.scheme.times)
        elif self.points is None or self.times is None:
            raise DomainError("a field without a scheme needs explicit points and times")
        else:
            object.__setattr__(self, "times", tuple(float(t) for t in self.times))
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        if self.points is not None:
            object.__setattr__(self, "points", np.asarray(self.points, dtype=float))

    # -- serialisation ---------------------------------------------------

    def to_dict(self):
        s = self.scheme
        return {
            "kind": self.kind,
            "domain": self.domain,
            "theta": fmt(self.params.theta),
            "sigma": fmt(self.params.sigma),
            "seed": int(self.seed),
            "n_modes": self.n_modes,
            "scheme": None if s is None else {
                "a_end": fmt(s.a_end), "b_end": fmt(s.b_end), "n_space": s.n_space,
                "times": [fmt(t) for t in s.times], "gamma": fmt(s.gamma),
                "stencil_a": fmt(s.stencil_a), "stencil_b": fmt(s.stencil_b),
            },
            "points": None if self.points is None else [fmt(x) for x in self.points],
            "times": [fmt(t) for t in self.times],
            "values": [[fmt(v) for v in row] for row in self.values],
        }

    @classmethod
    def from_dict(cls, d):
        s = d.get("scheme")
        scheme = None if s is None else SamplingScheme(
            float(s["a_end"]), float(s["b_end"]), int(s["n_space"]),
            tuple(float(t) for t in s["times"]), float(s["gamma"]),
            float(s["stencil_a"]), float(s["stencil_b"]))
        pts = d.get("points")
        return cls(
            scheme=scheme,
            kind=d["kind"],
            values=np.array([[float(v) for v in row] for row in d["values"]]),
            seed=int(d["seed"]),
            params=ModelParams(float(d["theta"]), float(d["sigma"])),
            n_modes=d.get("n_modes"),
            points=None if pts is None else np.array([float(x) for x in pts]),
            domain=d.get("domain", "line"),
            times=tuple(float(t) for t in d["times"]),
        )

    def to_csv(self):
        """CSV text: ``#`` header lines with metadata, then one row per time."""
        meta = self.to_dict()
        head = [f"# kind={self.kind}", f"# domain={self.domain}",
                f"# theta={meta['theta']}", f"# sigma={meta['sigma']}",
                f"# seed={self.seed}", f"# n_modes={self.n_modes}"]
        if self.scheme is not None:
            s = meta["scheme"]
            head.append(f"# grid=A:{s['a_end']};B:{s['b_end']};N:{s['n_space']};gamma:{s['gamma']};"
                        f"a:{s['stencil_a']};b:{s['stencil_b']}")
            times = self.scheme.times
        else:
            head.append("# points=" + ";".join(meta["points"]))
            times = self.times
        ncol = self.values.shape[1]
        lines = head + ["time_index,time," + ",".join(f"v{i}" for i in range(ncol))]
        for j, (t, row) in enumerate(zip(times, self.values)):
            lines.append(f"{j},{fmt(t)}," + ",".join(fmt(v) for v in row))
        return "\n".join(lines) + "\n"

    def save(self, directory, stem="field"):
        """Write ``<stem>.json`` and ``<stem>.csv`` into ``directory``."""
        directory = Path(directory)
        atomic_write_json(directory / f"{stem}.json", self.to_dict())
        atomic_write_text(directory / f"{stem}.csv", self.to_csv())


def load_field(path):
    """Read a :class:`FieldSample` from its JSON envelope."""
    with open(path) as fh:
        return FieldSample.from_dict(json.load(fh))


@dataclass(frozen=True, eq=False)
class CovarianceMatrix:
    """Symmetric covariance with an optional lower Cholesky factor."""

    entries: np.ndarray
    factor: np.ndarray | None = None
    jitter_used: float = 0.0

    def __post_init__(self):
        a = np.asarray(self.entries, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
            raise DomainError("covariance must be a nonempty square matrix")
        scale = max(float(np.max(np.abs(a))), 1e-300)
        if np.max(np.abs(a - a.T)) > 1e-12 * scale:
            raise DomainError("covariance must be symmetric")
        object.__setattr__(self, "entries", a)

    @property
    def dim(self):
        return self.entries.shape[0]


def factorize(cov):
    """Lower Cholesky factor, adding jitter ``eps * trace / dim`` if needed.

    Parameters
    ----------
    cov : CovarianceMatrix

    Returns
    -------
    CovarianceMatrix
        Same entries with ``factor`` and ``jitter_used`` filled in.

    Raises
    ------
    NumericalError
        If factorization fails at the largest jitter; the message names the
        first non-positive leading minor.
    """
    a = cov.entries
    dim = cov.dim
    scale = float(np.trace(a)) / dim
    if scale == 0.0 and not np.any(a):
        return CovarianceMatrix(a, np.zeros_like(a), 0.0)
    info = 0
    for eps in (0.0,) + JITTER_LEVELS:
        jitter = eps * scale
        c, info = lapack.dpotrf(a + jitter * np.eye(dim), lower=1, clean=1)
        if info == 0:
            return CovarianceMatrix(a, c, jitter)
        if info < 0:
            raise NumericalError(f"dpotrf rejected argument {-info}")
    raise NumericalError(
        f"Cholesky failed at jitter {JITTER_LEVELS[-1]:g}*trace/dim: leading minor {info} not positive")


# ---------------------------------------------------------------------------
# Whole-line increment fields
# ---------------------------------------------------------------------------


def increment_covariance(params, scheme, kind="ux_increments"):
    """Joint covariance of all increments, ordered time-major.

    Entry ``(k*N + i, l*N + j)`` is the covariance between the increments
    ending at ``x_{i+1}`` at time ``t_k`` and at ``x_{j+1}`` at time ``t_l``.
    """
    if kind == "ux_increments":
        row = lambda tk, tl: kernels.ux_increment_cov(
            np.arange(scheme.n_space), tk, tl, params, scheme, method="split")
    elif kind == "delta_u_increments":
        row = lambda tk, tl: kernels._delta_cov(
            np.arange(scheme.n_space), tk, tl, params, scheme, "split")
    else:
        raise DomainError(f"no line covariance for kind {kind!r}")
    n, m = scheme.n_space, scheme.n_time
    out = np.empty((m * n, m * n))
    for k in range(m):
        for l in range(k, m):
            block = toeplitz(np.atleast_1d(row(scheme.times[k], scheme.times[l])))
            out[k * n:(k + 1) * n, l * n:(l + 1) * n] = block
            out[l * n:(l + 1) * n, k * n:(k + 1) * n] = block
    return CovarianceMatrix(out)


@lru_cache(maxsize=2)
def _unit_factor(theta, scheme, kind):
    return factorize(increment_covariance(ModelParams(theta, 1.0), scheme, kind))


def unit_factor(params, scheme, kind):
    """Cached factorization of the covariance for ``sigma = 1``."""
    return _unit_factor(params.theta, scheme, kind)


def _simulate_line(params, scheme, seed, kind, max_dim):
    dim = scheme.n_space * scheme.n_time
    if dim > max_dim:
        raise SizeError(f"M*N = {dim} exceeds the dense factorization cap {max_dim}")
    z = make_rng(seed).standard_normal(dim)
    if params.sigma == 0:
        values = np.zeros(dim)
    else:
        values = abs(params.sigma) * (unit_factor(params, scheme, kind).factor @ z)
    return FieldSample(scheme, kind, values.reshape(scheme.n_time, scheme.n_space),
                       int(seed), params, domain="line")


def simulate_ux_increments(params, scheme, seed, max_dim=DEFAULT_MAX_DIM):
    """Sample the increments ``u_x(t_k, x_i) - u_x(t_k, x_{i-1})`` on the line.

    Parameters
    ----------
    params : ModelParams
    scheme : SamplingScheme
    seed : int
    max_dim : int
        Cap on ``M * N``.

    Returns
    -------
    FieldSample
        Kind ``"ux_increments"``, shape ``M x N``.
    """
    return _simulate_line(params, scheme, seed, "ux_increments", max_dim)


def simulate_delta_u_increments(params, scheme, seed, max_dim=DEFAULT_MAX_DIM):
    """Sample increments of the stencil quotient on the line.

    Column ``i - 1`` holds ``Du(t_k, x_i) - Du(t_k, x_{i-1})`` for
    ``i = 1..N``.  Estimators use the interior columns ``i = 2..N-1``.
    """
    return _simulate_line(params, scheme, seed, "delta_u_increments", max_dim)


# ---------------------------------------------------------------------------
# Dirichlet problem on (0, pi)
# ---------------------------------------------------------------------------


@lru_cache(maxsize=4)
def _sine_table(points, n_modes, derivative):
    k = np.arange(1, n_modes + 1, dtype=float)
    x = np.asarray(points)
    if derivative:
        return np.cos(np.outer(k, x)) / k[:, None]
    return np.sin(np.outer(k, x)) / (k * k)[:, None]


def _spectral(params, times, points, n_modes, seed, derivative=False):
    n_modes = int(n_modes)
    if n_modes < 1:
        raise DomainError("n_modes must be positive")
    pts = np.asarray(points, dtype=float)
    times = np.asarray(times, dtype=float)
    if np.any(times <= 0) or not np.all(np.isfinite(times)):
        raise DomainError("times must be positive")
    xi = make_rng(seed).standard_normal(n_modes)
    k2 = np.arange(1, n_modes + 1, dtype=float) ** 2
    growth = -np.expm1(-np.outer(times, k2) * params.theta)
    table = _sine_table(tuple(pts.tolist()), n_modes, derivative)
    return math.sqrt(2 / math.pi) * (params.sigma / params.theta) * ((growth * xi) @ table)


def _check_interval(points):
    pts = np.asarray(points, dtype=float)
    if pts.size == 0 or np.any(pts < 0) or np.any(pts > math.pi) or not np.all(np.isfinite(pts)):
        raise DomainError("spectral points must lie in [0, pi]")
    return pts


def simulate_spectral_bounded(params, times, xs, n_modes, seed):
    """Sample ``u(t, x)`` on ``(0, pi)`` from the truncated sine series.

    One set of ``n_modes`` standard normal coefficients is drawn and shared by
    every time and point, so the output is a single realisation of the field.
    The end points ``0`` and ``pi`` are admitted and give zero.

    Parameters
    ----------
    params : ModelParams
    times : sequence of float
        Increasing positive times.
    xs : sequence of float
        Points in ``[0, pi]``.
    n_modes : int
    seed : int

    Returns
    -------
    FieldSample
        Kind ``"u_values"`` with shape ``len(times) x len(xs)``.  When ``xs``
        is an evenly spaced grid the sample carries the matching scheme.
    """
    pts = _check_interval(xs)
    values = _spectral(params, times, pts, n_modes, seed)
    scheme = None
    if pts.size >= 3:
        n = pts.size - 1
        try:
            candidate = SamplingScheme(float(pts[0]), float(pts[-1]), n, tuple(times))
        except DomainError:
            candidate = None
        if candidate is not None and np.allclose(candidate.grid(), pts, rtol=0, atol=1e-12 * math.pi):
            scheme = candidate
    return FieldSample(scheme, "u_values", values, int(seed), params, int(n_modes), pts,
                       "bounded", tuple(float(t) for t in times))


def simulate_spectral_field(params, scheme, n_modes, seed, kind="u_values"):
    """Spectral sample on the grid of ``scheme`` in any of the field kinds.

    Every kind built from the same seed comes from the same coefficients, so
    they describe one realisation.  Stencil points that fall outside
    ``[0, pi]`` are evaluated through the odd periodic extension of the
    series; the estimator only uses interior columns, which stay inside.
    """
    if not (0 <= scheme.a_end and scheme.b_end <= math.pi):
        raise DomainError("the spectral grid must lie in [0, pi]")
    x = scheme.grid()
    if kind == "u_values":
        values = _spectral(params, scheme.times, x, n_modes, seed)
    elif kind == "ux_increments":
        values = np.diff(_spectral(params, scheme.times, x, n_modes, seed, derivative=True), axis=1)
    elif kind == "delta_u_increments":
        y, z = scheme.offset_points()
        both = _spectral(params, scheme.times, np.concatenate([y, z]), n_modes, seed)
        n1 = x.size
        quotient = (both[:, :n1] - both[:, n1:]) / scheme.stencil_width
        values = np.diff(quotient, axis=1)
    else:
        raise DomainError(f"unknown field kind {kind!r}")
    return FieldSample(scheme, kind, values, int(seed), params, int(n_modes), None, "bounded")
