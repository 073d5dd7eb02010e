"""Seeded Monte Carlo replications of the estimators.

Replication ``r`` of an experiment with master seed ``s`` draws its field
from the seed :func:`replication_seed` ``(s, r)``, so results do not depend on
how replications are scheduled across threads.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import stats

from . import estimators, simulate
from ._io import atomic_write_json, atomic_write_text, csv_text, fmt
from .errors import DegenerateSampleError, DomainError, NumericalError
from .kernels import ModelParams, SamplingScheme

SIMULATORS = ("spectral_bounded", "cov_line")
STATISTICS = ("parameter", "squared", "q")
HIST_BINS = 30
HIST_RANGE = (-4.0, 4.0)


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything that determines a replication experiment.

    Parameters
    ----------
    params : ModelParams
        True parameters used to simulate.
    scheme : SamplingScheme
        Grid template; ``n_space`` is replaced by each entry of ``n_values``
        in a consistency sweep.
    estimator_id : str
        One of :data:`spde_powvar.estimators.ESTIMATOR_IDS`.
    replications : int
    master_seed : int
    n_modes : int
        Sine modes for the spectral simulator.
    simulator : {"spectral_bounded", "cov_line"}
    n_values : tuple of int
        Grid sizes of a consistency sweep.  Empty means ``(scheme.n_space,)``.
    correct_bias : bool
        Apply the finite-difference factor ``mu``.
    statistic : {"parameter", "squared", "q"}
        Normalised statistic used by :func:`run_normality`.
    """

    params: ModelParams
    scheme: SamplingScheme
    estimator_id: str = "sigma2_check"
    replications: int = 20
    master_seed: int = 0
    n_modes: int = 10_000
    simulator: str = "spectral_bounded"
    n_values: tuple = ()
    correct_bias: bool = True
    statistic: str = "parameter"

    def __post_init__(self):
        if int(self.replications) < 1:
            raise DomainError("replications must be at least 1")
        if self.simulator not in SIMULATORS:
            raise DomainError(f"simulator must be one of {SIMULATORS}")
        if self.statistic not in STATISTICS:
            raise DomainError(f"statistic must be one of {STATISTICS}")
        target, family = estimators.estimator_family(self.estimator_id)
        if self.simulator == "cov_line" and family == "check":
            raise DomainError("the line simulator produces increments only; use a *_tilde or *_ux estimator")
        if self.statistic == "q" and family == "check":
            raise DomainError("the q statistic needs an increment field")
        n_values = tuple(int(n) for n in self.n_values)
        if any(n < 3 for n in n_values) or self.scheme.n_space < 3:
            raise DomainError("grid sizes must be at least 3")
        if int(self.n_modes) < 1:
            raise DomainError("n_modes must be positive")
        object.__setattr__(self, "n_values", n_values)
        object.__setattr__(self, "replications", int(self.replications))
        object.__setattr__(self, "n_modes", int(self.n_modes))

    @property
    def sweep(self):
        return self.n_values or (self.scheme.n_space,)

    @property
    def target(self):
        return estimators.estimator_family(self.estimator_id)[0]

    @property
    def family(self):
        return estimators.estimator_family(self.estimator_id)[1]

    def to_dict(self):
        s = self.scheme
        return {
            "theta": self.params.theta, "sigma": self.params.sigma,
            "A": s.a_end, "B": s.b_end, "N": s.n_space, "times": list(s.times),
            "gamma": s.gamma, "a": s.stencil_a, "b": s.stencil_b,
            "estimator": self.estimator_id, "reps": self.replications,
            "seed": self.master_seed, "modes": self.n_modes,
            "simulator": self.simulator, "n_values": list(self.n_values),
            "correct_bias": self.correct_bias, "statistic": self.statistic,
        }

    @classmethod
    def from_dict(cls, d):
        """Inverse of :meth:`to_dict`."""
        scheme = SamplingScheme(float(d["A"]), float(d["B"]), int(d["N"]),
                                tuple(float(t) for t in d["times"]), float(d["gamma"]),
                                float(d["a"]), float(d["b"]))
        return cls(ModelParams(float(d["theta"]), float(d["sigma"])), scheme, d["estimator"],
                   int(d["reps"]), int(d["seed"]), int(d["modes"]), d["simulator"],
                   tuple(int(n) for n in d.get("n_values") or ()), bool(d["correct_bias"]),
                   d["statistic"])


@dataclass
class McSummary:
    """Normality diagnostics of one experiment."""

    estimates: list
    normalized_stats: list
    ks_stat: float
    hist_edges: list
    hist_counts: list
    qq_pairs: list
    mean: float
    stderr: float
    failures: int
    config: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


@dataclass
class ConsistencyRow:
    n_space: int
    mean: float
    stderr: float
    failures: int
    estimates: list


def replication_seed(master_seed, r):
    """64-bit seed of replication ``r``."""
    ss = np.random.SeedSequence([int(master_seed) & (2**64 - 1), int(r)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def resolve_threads(threads=None):
    """Worker count: explicit value, else ``SPDE_POWVAR_THREADS``, else 1; 0 means all cores."""
    if threads is None:
        threads = int(os.environ.get("SPDE_POWVAR_THREADS", "1"))
    threads = int(threads)
    if threads < 0:
        raise DomainError("threads must be nonnegative")
    return threads or (os.cpu_count() or 1)


def simulate_field(config, scheme, seed):
    """Draw the field consumed by ``config.estimator_id`` on ``scheme``."""
    kind = estimators.FIELD_KIND_FOR[config.family]
    if config.simulator == "spectral_bounded":
        return simulate.simulate_spectral_field(config.params, scheme, config.n_modes, seed, kind)
    if kind == "ux_increments":
        return simulate.simulate_ux_increments(config.params, scheme, seed)
    return simulate.simulate_delta_u_increments(config.params, scheme, seed)


def _known_value(config):
    return config.params.theta if config.target == "sigma" else config.params.sigma


def _replicate(config, scheme, r):
    """One replication: ``(report, q)`` or ``None`` on a degenerate sample."""
    f = simulate_field(config, scheme, replication_seed(config.master_seed, r))
    try:
        report = estimators.estimate(f, config.estimator_id, _known_value(config), config.correct_bias)
    except DegenerateSampleError:
        return None
    q = estimators.q_statistic(f, config.params) if config.statistic == "q" else None
    return report, q


def _map(fn, items, threads):
    threads = resolve_threads(threads)
    if threads == 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _level_value(config, report):
    # consistency curves are reported at parameter level (sigma, not sigma^2)
    return math.sqrt(report.bias_corrected_value)


def _mean_stderr(values):
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        return float("nan"), float("nan")
    if arr.size == 1:
        return float(arr[0]), float("nan")
    return float(np.mean(arr)), float(np.std(arr, ddof=1) / math.sqrt(arr.size))


def run_consistency(config, threads=None):
    """Estimates across a sweep of grid sizes.

    Returns
    -------
    list of ConsistencyRow
        One row per entry of ``config.sweep`` with the mean and standard
        error of the bias-corrected parameter-level estimate.
    """
    rows = []
    for n in config.sweep:
        scheme = config.scheme.with_n(n)
        results = _map(lambda r: _replicate(config, scheme, r), range(config.replications), threads)
        values = [_level_value(config, res[0]) for res in results if res is not None]
        mean, err = _mean_stderr(values)
        rows.append(ConsistencyRow(n, mean, err, sum(res is None for res in results), values))
    return rows


def ks_statistic(sample):
    """Kolmogorov-Smirnov distance between the sample and ``N(0, 1)``."""
    arr = np.asarray(sample, dtype=float)
    if arr.size == 0:
        raise DomainError("KS statistic of an empty sample")
    return float(stats.kstest(arr, "norm").statistic)


def summarize(estimates, normalized, failures=0, config=None):
    """Histogram, Q-Q pairs and KS statistic of normalised statistics."""
    z = np.asarray(normalized, dtype=float)
    if z.size == 0:
        raise NumericalError("no successful replications")
    edges = np.linspace(*HIST_RANGE, HIST_BINS + 1)
    counts, _ = np.histogram(np.clip(z, edges[0], edges[-1]), bins=edges)
    probs = np.arange(1, 100) / 100.0
    qq = list(zip(stats.norm.ppf(probs).tolist(), np.quantile(z, probs).tolist()))
    mean, err = _mean_stderr(estimates)
    return McSummary(
        estimates=[float(v) for v in estimates],
        normalized_stats=z.tolist(),
        ks_stat=ks_statistic(z),
        hist_edges=edges.tolist(),
        hist_counts=[int(c) for c in counts],
        qq_pairs=[[float(a), float(b)] for a, b in qq],
        mean=mean,
        stderr=err,
        failures=int(failures),
        config=config or {},
    )


def run_normality(config, threads=None):
    """Normalised statistics over replications at ``config.scheme``.

    The statistic is chosen by ``config.statistic``: the parameter-level
    or squared-level estimator statistic, or the renormalised quadratic
    variation ``q``.
    """
    scheme = config.scheme
    results = _map(lambda r: _replicate(config, scheme, r), range(config.replications), threads)
    ok = [res for res in results if res is not None]
    true = config.params.sigma if config.target == "sigma" else config.params.theta
    if config.statistic == "q":
        z = [q for _, q in ok]
    else:
        z = [estimators.normalized_stat(rep, true, config.statistic) for rep, _ in ok]
    level = [_level_value(config, rep) for rep, _ in ok]
    return summarize(level, z, len(results) - len(ok), config.to_dict())


# ---------------------------------------------------------------------------
# Output files
# ---------------------------------------------------------------------------


def write_consistency(rows, out_dir):
    header = ["N", "mean", "stderr", "failures"]
    body = [[r.n_space, float(r.mean), float(r.stderr), r.failures] for r in rows]
    atomic_write_text(Path(out_dir) / "consistency.csv", csv_text(header, body))


def write_normality(summary, out_dir):
    out = Path(out_dir)
    atomic_write_text(out / "normality.csv", csv_text(
        ["replication", "estimate", "normalized_stat"],
        [[i, e, z] for i, (e, z) in enumerate(zip(summary.estimates, summary.normalized_stats))]))
    e = summary.hist_edges
    atomic_write_text(out / "histogram.csv", csv_text(
        ["bin_left", "bin_right", "count"],
        [[e[i], e[i + 1], c] for i, c in enumerate(summary.hist_counts)]))
    atomic_write_text(out / "qq.csv", csv_text(
        ["theoretical", "sample"], [[a, b] for a, b in summary.qq_pairs]))
    atomic_write_json(out / "summary.json", _exact(summary.to_dict()))


def _exact(obj):
    # floats in JSON as 17-digit strings would change types; keep numbers but
    # route them through the same formatting for byte-stable output
    if isinstance(obj, float):
        return float(fmt(obj))
    if isinstance(obj, dict):
        return {k: _exact(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_exact(v) for v in obj]
    return obj


# ---------------------------------------------------------------------------
# Presets
# ---------------------------------------------------------------------------


def preset_fig1(**overrides):
    """Consistency sweep: 50 uniform times on ``(0, 1]``, grid on ``[0, pi]``."""
    scheme = SamplingScheme.uniform(1024, 1.0, 50, a_end=0.0, b_end=math.pi)
    cfg = ExperimentConfig(ModelParams(0.1, 0.1), scheme, "sigma2_check", 20, 0, 10_000,
                           "spectral_bounded", (64, 128, 256, 512, 1024), True, "parameter")
    return replace(cfg, **overrides)


def preset_fig2(**overrides):
    """Normality study: one time ``t = 0.2``, ``N = 1000`` on ``[0, pi]``."""
    scheme = SamplingScheme(0.0, math.pi, 1000, (0.2,))
    cfg = ExperimentConfig(ModelParams(0.1, 0.1), scheme, "sigma2_check", 1000, 0, 10_000,
                           "spectral_bounded", (), True, "parameter")
    return replace(cfg, **overrides)


PRESETS = {"paper-fig1": preset_fig1, "paper-fig2": preset_fig2}
