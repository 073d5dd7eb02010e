import ast
import json
import math
import subprocess
import sys
from pathlib import Path

import pytest

from spde_powvar.errors import AccuracyError, DomainError
from spde_powvar.oracle import (
    INTEGRAND_IDS,
    QuadratureSpec,
    quad_cov,
    quad_gamma_half,
    verify_closed_forms,
)
from spde_powvar.oracle import quadrature

THETA, SIGMA = 0.1, 0.1


def test_a3_same_point_same_time():
    t = 0.6
    r = quad_cov(QuadratureSpec("A3", t, t, theta=THETA, sigma=SIGMA))
    expected = 4 * (2 - math.sqrt(2)) * math.sqrt(t) * SIGMA**2 / (4 * math.sqrt(math.pi) * THETA**1.5)
    assert r.value == pytest.approx(expected, rel=1e-9)
    assert r.est_error <= 1e-10 * abs(r.value)


def test_a1_far_apart_vanishes():
    t, h = 0.5, 0.01
    near = quad_cov(QuadratureSpec("A1", t, t, h=h, theta=THETA, sigma=SIGMA)).value
    far_d = 60 * math.sqrt(THETA * t)
    far = quad_cov(QuadratureSpec("A1", t, t, x=far_d, h=h, theta=THETA, sigma=SIGMA,
                                  abs_tol=1e-14 * near)).value
    assert abs(far) <= 1e-12 * near


@pytest.mark.parametrize("a,b", [(1.0, 0.0), (0.7, 0.2), (0.3, 0.9)])
def test_a2_symmetric_in_weights(a, b):
    def scaled(a, b):
        v = quad_cov(QuadratureSpec("A2", 0.4, 0.7, h=0.05, a=a, b=b, theta=THETA, sigma=SIGMA)).value
        return (a + b) * v / SIGMA**2
    assert scaled(a, b) == pytest.approx(scaled(b, a), rel=1e-9)


@pytest.mark.parametrize("kw", [
    dict(integrand_id="nope"), dict(t=0.0), dict(tp=-1.0), dict(theta=0.0),
    dict(rel_tol=1e-13), dict(rel_tol=1e-3), dict(integrand_id="A1", h=0.0),
    dict(integrand_id="F_raw", h=0.1, grid_step=0.0), dict(c=-1.0),
])
def test_spec_validation(kw):
    base = dict(integrand_id="A3", t=1.0, tp=1.0)
    base.update(kw)
    with pytest.raises(DomainError):
        QuadratureSpec(**base)


def test_all_ids_evaluate():
    for iid in INTEGRAND_IDS:
        spec = QuadratureSpec(iid, 0.5, 0.8, x=0.05, h=0.02, grid_step=0.03, c=0.3,
                              theta=THETA, sigma=SIGMA, rel_tol=1e-8, abs_tol=1e-14)
        r = quad_cov(spec)
        assert math.isfinite(r.value) and r.est_error >= 0


def test_budget_exhaustion_carries_estimate():
    spec = QuadratureSpec("A1", 1.0, 1.0, h=1e-4, theta=THETA, sigma=SIGMA, rel_tol=1e-12,
                          max_subdivisions=16)
    with pytest.raises(AccuracyError) as info:
        quad_cov(spec)
    assert math.isfinite(info.value.value)
    assert info.value.est_error > 0


@pytest.mark.parametrize("iid,kw", [
    ("A3", dict(x=0.1)), ("fifth_power", dict(c=0.7)), ("A3_incr", dict(grid_step=0.02)),
    ("F_raw", dict(h=0.01, grid_step=0.01, x=0.02)),
])
def test_error_estimates_are_honest(iid, kw):
    coarse = quad_cov(QuadratureSpec(iid, 0.3, 0.9, theta=THETA, sigma=SIGMA, rel_tol=1e-7, **kw))
    fine = quad_cov(QuadratureSpec(iid, 0.3, 0.9, theta=THETA, sigma=SIGMA, rel_tol=5e-8, **kw))
    assert abs(fine.value - coarse.value) <= coarse.est_error


def test_gamma_half_quadrature():
    assert quad_gamma_half(1e8).value == pytest.approx(math.sqrt(math.pi) - 2e-4, rel=1e-9)
    for x in (0.0, -2.0, math.inf):
        with pytest.raises(DomainError):
            quad_gamma_half(x)


def test_quadrature_module_does_not_import_kernels():
    tree = ast.parse(Path(quadrature.__file__).read_text())
    names = []
    for node in ast.walk(tree):
        if isinstance(node, ast.ImportFrom):
            names.append(node.module or "")
            names.extend(a.name for a in node.names)
        elif isinstance(node, ast.Import):
            names.extend(a.name for a in node.names)
    assert not any("kernels" in n for n in names)


def test_quadrature_loads_without_kernels():
    # importing the package root pulls in everything; load the file by path instead
    code = (
        "import importlib.util, sys, types\n"
        f"root = {str(Path(quadrature.__file__).parents[1])!r}\n"
        "pkg = types.ModuleType('spde_powvar'); pkg.__path__ = [root]; sys.modules['spde_powvar'] = pkg\n"
        "sub = types.ModuleType('spde_powvar.oracle'); sub.__path__ = [root + '/oracle']\n"
        "sys.modules['spde_powvar.oracle'] = sub\n"
        "spec = importlib.util.spec_from_file_location('spde_powvar.oracle.quadrature', root + '/oracle/quadrature.py')\n"
        "m = importlib.util.module_from_spec(spec); sys.modules[spec.name] = m\n"
        "spec.loader.exec_module(m)\n"
        "print('spde_powvar.kernels' in sys.modules)\n"
    )
    out = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "False"


def test_verify_small_run():
    report = verify_closed_forms(trials=3, seed=11)
    d = report.to_dict()
    assert report.passed, json.dumps(d, indent=1)
    ids = [c["formula_id"] for c in d["checks"]]
    assert "ux_increment_cov_lag0_equals_variance" in ids
    lag0 = next(c for c in d["checks"] if c["formula_id"] == "ux_increment_cov_lag0_equals_variance")
    assert lag0["tolerance"] == 1e-10
    assert all(c["trials"] == 3 for c in d["checks"])
    json.dumps(d)


def test_verify_tolerance_override_can_fail():
    report = verify_closed_forms(trials=2, seed=3, tolerance=1e-300)
    assert not report.passed
