import csv
import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spde_powvar import montecarlo as mc
from spde_powvar.errors import DomainError, NumericalError
from spde_powvar.kernels import ModelParams, SamplingScheme

P = ModelParams(0.1, 0.1)


def _line_config(**kw):
    base = dict(params=P, scheme=SamplingScheme(0.0, 1.0, 32, (0.5,)), estimator_id="sigma2_ux",
                replications=12, master_seed=5, simulator="cov_line")
    base.update(kw)
    return mc.ExperimentConfig(**base)


def test_zero_sigma_gives_zero_estimates():
    cfg = _line_config(params=ModelParams(0.1, 0.0), n_values=(8, 16))
    for row in mc.run_consistency(cfg):
        assert row.mean == 0.0 and row.stderr == 0.0 and row.failures == 0


def test_zero_sigma_theta_estimator_records_failures():
    cfg = _line_config(params=ModelParams(0.1, 0.0), estimator_id="theta2_ux", replications=4)
    row = mc.run_consistency(cfg)[0]
    assert row.failures == 4 and math.isnan(row.mean)


def test_exact_normals_pass_ks():
    z = np.random.default_rng(2024).standard_normal(1000)
    s = mc.summarize(z, z)
    assert s.ks_stat <= 0.043
    assert sum(s.hist_counts) == 1000
    assert len(s.qq_pairs) == 99
    assert all(a[1] <= b[1] for a, b in zip(s.qq_pairs, s.qq_pairs[1:]))


def test_ks_examples():
    assert mc.ks_statistic([0.0]) == 0.5
    from scipy import stats
    n = 100
    q = stats.norm.ppf((np.arange(1, n + 1) - 0.5) / n)
    assert mc.ks_statistic(q) == pytest.approx(0.005, abs=1e-12)
    assert mc.ks_statistic(np.random.default_rng(0).uniform(5, 6, 50)) >= 0.3
    with pytest.raises(DomainError):
        mc.ks_statistic([])
    with pytest.raises(NumericalError):
        mc.summarize([], [])


def test_histogram_clips_outliers():
    s = mc.summarize([1.0, 2.0], [-10.0, 10.0])
    assert s.hist_counts[0] == 1 and s.hist_counts[-1] == 1


def test_deterministic_and_thread_independent():
    cfg = _line_config(n_values=(16, 32))
    a = mc.run_consistency(cfg, threads=1)
    b = mc.run_consistency(cfg, threads=1)
    c = mc.run_consistency(cfg, threads=4)
    for x, y, z in zip(a, b, c):
        assert x.estimates == y.estimates == z.estimates
        assert x.mean == z.mean and x.stderr == z.stderr


def test_threads_from_environment(monkeypatch):
    monkeypatch.setenv("SPDE_POWVAR_THREADS", "3")
    assert mc.resolve_threads() == 3
    assert mc.resolve_threads(2) == 2
    assert mc.resolve_threads(0) >= 1
    with pytest.raises(DomainError):
        mc.resolve_threads(-1)


def test_stderr_matches_estimates():
    row = mc.run_consistency(_line_config())[0]
    e = np.array(row.estimates)
    assert row.mean == pytest.approx(e.mean(), rel=1e-12)
    assert row.stderr == pytest.approx(e.std(ddof=1) / math.sqrt(e.size), rel=1e-12)


def test_replication_seeds_distinct():
    seeds = {mc.replication_seed(0, r) for r in range(1000)}
    assert len(seeds) == 1000
    assert mc.replication_seed(1, 0) != mc.replication_seed(0, 1)
    assert mc.replication_seed(7, 3) == mc.replication_seed(7, 3)


def test_consistency_small_sweep_converges():
    cfg = _line_config(n_values=(64, 256), replications=20)
    rows = mc.run_consistency(cfg)
    for row in rows:
        assert abs(row.mean - 0.1) <= 4 * row.stderr + 1e-3


def test_normality_q_statistic_single_time():
    cfg = _line_config(scheme=SamplingScheme(0.0, 1.0, 256, (0.5,)), replications=400, statistic="q")
    s = mc.run_normality(cfg)
    # 1% critical value of the KS distance at n = 400
    assert s.ks_stat <= 1.63 / math.sqrt(400)
    assert s.failures == 0


def test_writers(tmp_path):
    cfg = _line_config(replications=30)
    s = mc.run_normality(cfg)
    mc.write_normality(s, tmp_path)
    mc.write_consistency(mc.run_consistency(_line_config(n_values=(8, 16))), tmp_path)
    rows = list(csv.reader((tmp_path / "normality.csv").open()))
    assert rows[0] == ["replication", "estimate", "normalized_stat"] and len(rows) == 31
    hist = list(csv.reader((tmp_path / "histogram.csv").open()))
    assert hist[0] == ["bin_left", "bin_right", "count"]
    assert sum(int(r[2]) for r in hist[1:]) == 30
    qq = list(csv.reader((tmp_path / "qq.csv").open()))
    assert qq[0] == ["theoretical", "sample"] and len(qq) == 100
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["config"]["estimator"] == "sigma2_ux"
    assert summary["ks_stat"] == pytest.approx(s.ks_stat, rel=1e-15)
    cons = list(csv.reader((tmp_path / "consistency.csv").open()))
    assert cons[0] == ["N", "mean", "stderr", "failures"] and [r[0] for r in cons[1:]] == ["8", "16"]


def test_written_files_are_byte_stable(tmp_path):
    for sub in ("a", "b"):
        mc.write_normality(mc.run_normality(_line_config(replications=10)), tmp_path / sub)
    for name in ("normality.csv", "histogram.csv", "qq.csv", "summary.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


@pytest.mark.parametrize("kw", [
    dict(replications=0), dict(simulator="mcmc"), dict(statistic="cubic"),
    dict(estimator_id="sigma2_check"), dict(n_values=(2, 8)), dict(n_modes=0),
    dict(estimator_id="sigma2_fancy"),
])
def test_config_validation(kw):
    with pytest.raises(DomainError):
        _line_config(**kw)


def test_q_statistic_rejected_for_values_estimator():
    with pytest.raises(DomainError):
        mc.ExperimentConfig(P, SamplingScheme(0.0, math.pi, 16, (0.5,)), "sigma2_check", statistic="q")


@given(st.sampled_from(["sigma2_ux", "theta2_tilde", "sigma2_tilde"]), st.integers(1, 50),
       st.integers(0, 2**63 - 1), st.floats(0, 1), st.floats(0.01, 1), st.booleans())
def test_config_round_trip(eid, reps, seed, a, b, correct):
    scheme = SamplingScheme(0.0, 2.0, 20, (0.25, 0.5), 1.5, a, b)
    cfg = mc.ExperimentConfig(P, scheme, eid, reps, seed, 77, "cov_line", (8, 12), correct, "squared")
    d = json.loads(json.dumps(cfg.to_dict()))
    assert mc.ExperimentConfig.from_dict(d) == cfg


def test_presets():
    f1, f2 = mc.preset_fig1(), mc.preset_fig2(replications=5)
    assert f1.sweep == (64, 128, 256, 512, 1024) and f1.scheme.n_time == 50
    assert f1.scheme.times[-1] == 1.0 and f1.scheme.b_end == math.pi
    assert f2.replications == 5 and f2.scheme.times == (0.2,) and f2.scheme.n_space == 1000
    assert set(mc.PRESETS) == {"paper-fig1", "paper-fig2"}


def test_spectral_normality_small():
    cfg = mc.preset_fig2(replications=20, scheme=SamplingScheme(0.0, math.pi, 128, (0.2,)), n_modes=2000)
    s = mc.run_normality(cfg)
    assert len(s.normalized_stats) == 20 and s.failures == 0
    assert s.config["N"] == 128
