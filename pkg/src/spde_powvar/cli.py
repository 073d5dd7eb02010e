"""Command line front end.

Every subcommand builds one flat configuration dictionary from, in order of
increasing precedence, built-in defaults, a ``--preset``, a ``--config`` file,
and inline overrides (``--set key=value`` or the numeric flags).  The
effective configuration is written to ``config_echo.json`` in the output
directory and can be passed back through ``--config`` to reproduce a run.

Exit codes: 0 success, 1 usage error, 2 domain error, 3 numerical error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import replace
from pathlib import Path

from . import estimators, kernels, montecarlo, simulate
from ._io import atomic_write_json, atomic_write_text, csv_text, dumps
from .errors import DomainError, NumericalError
from .oracle import verify_closed_forms

SUBCOMMANDS = ("simulate", "estimate", "mc-consistency", "mc-normality", "kernels-table", "verify")
KERNEL_OPS = ("mu", "tau", "ux_variance", "ux_cov", "delta_variance", "delta_cov", "q_expectations")

DEFAULTS = {
    "theta": 0.1, "sigma": 0.1, "A": None, "B": None, "N": 100, "M": 1, "T": 1.0,
    "t": None, "times": None, "gamma": 1.0, "a": 1.0, "b": 0.0, "modes": 10_000,
    "reps": 20, "estimator": "sigma2_check", "seed": 0, "simulator": "spectral_bounded",
    "domain": "bounded", "kind": "u_values", "n_values": None, "correct_bias": True,
    "statistic": "parameter", "op": "mu", "trials": 100, "input": None,
    "max_dim": simulate.DEFAULT_MAX_DIM,
}
INT_KEYS = {"N", "M", "modes", "reps", "seed", "trials", "max_dim"}
FLOAT_KEYS = {"theta", "sigma", "A", "B", "T", "t", "gamma", "a", "b"}
BOOL_KEYS = {"correct_bias"}
# flags that reshape the time grid or the N sweep invalidate an inherited list
TIME_KEYS = {"M", "T", "t"}

FLAG_KEYS = {
    "theta": float, "sigma": float, "A": float, "B": float, "N": int, "M": int,
    "T": float, "t": float, "gamma": float, "a": float, "b": float, "modes": int,
    "reps": int, "estimator": str, "domain": str, "kind": str, "simulator": str,
    "statistic": str, "op": str, "trials": int, "input": str,
}


class UsageError(Exception):
    """Bad command line or configuration file."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser():
    parser = _Parser(prog="spde-powvar", description="Power-variation estimators for the stochastic heat equation.")
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", help="JSON or key=value configuration file")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="inline override, repeatable")
    parser.add_argument("--output-dir", default=".", help="directory for all outputs (default: current)")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--threads", type=int, help="worker threads, 0 = all cores (env SPDE_POWVAR_THREADS)")
    parser.add_argument("--preset", choices=sorted(montecarlo.PRESETS))
    parser.add_argument("--n-values", help="comma separated N sweep for mc-consistency")
    parser.add_argument("--no-bias-correction", action="store_true")
    for key, typ in FLAG_KEYS.items():
        parser.add_argument(f"--{key}", type=typ, dest=f"flag_{key}")
    return parser


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


def _parse_scalar(text):
    text = text.strip()
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        pass
    if "," in text:
        return [_parse_scalar(part) for part in text.split(",") if part.strip()]
    low = text.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    return text


def parse_key_values(lines):
    """Parse ``key=value`` lines; blank lines and ``#`` comments are skipped."""
    out = {}
    for raw in lines:
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"expected key=value, got {raw.strip()!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = _parse_scalar(value)
    return out


def load_config_file(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
    if text.lstrip().startswith("{"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise UsageError(f"invalid JSON in {path}: {exc}") from None
    else:
        data = parse_key_values(text.splitlines())
    data.pop("subcommand", None)
    return data


def _coerce(key, value):
    if key not in DEFAULTS:
        raise UsageError(f"unknown configuration key {key!r}")
    if value is None:
        return None
    try:
        if key in INT_KEYS:
            if isinstance(value, float) and not value.is_integer():
                raise ValueError
            return int(value)
        if key in FLOAT_KEYS:
            return float(value)
        if key in BOOL_KEYS:
            if isinstance(value, str):
                return _parse_scalar(value) is True
            return bool(value)
        if key == "times":
            return [float(v) for v in (value if isinstance(value, list) else [value])]
        if key == "n_values":
            return [int(v) for v in (value if isinstance(value, list) else [value])]
    except (TypeError, ValueError):
        raise UsageError(f"bad value for {key}: {value!r}") from None
    return str(value)


def _merge(config, layer):
    layer = {k: _coerce(k, v) for k, v in layer.items()}
    if TIME_KEYS & layer.keys() and "times" not in layer:
        config["times"] = None
    if "N" in layer and "n_values" not in layer:
        config["n_values"] = None
    config.update(layer)


def resolve_config(args):
    """Effective configuration for parsed arguments ``args``."""
    config = dict(DEFAULTS)
    if args.preset:
        preset = montecarlo.PRESETS[args.preset]().to_dict()
        preset["M"] = len(preset["times"])
        _merge(config, preset)
    if args.config:
        _merge(config, load_config_file(args.config))
    inline = parse_key_values(args.set)
    for key in FLAG_KEYS:
        value = getattr(args, f"flag_{key}")
        if value is not None:
            inline[key] = value
    if args.seed is not None:
        inline["seed"] = args.seed
    if args.n_values:
        inline["n_values"] = _parse_scalar(args.n_values)
    if args.no_bias_correction:
        inline["correct_bias"] = False
    _merge(config, inline)
    return _finalize(config)


def _finalize(config):
    if config["A"] is None:
        config["A"] = 0.0
    if config["B"] is None:
        config["B"] = math.pi if config["domain"] == "bounded" else 1.0
    if config["times"] is None:
        if config["t"] is not None:
            config["times"] = [config["t"]]
        else:
            m = config["M"]
            if m < 1:
                raise DomainError("M must be at least 1")
            config["times"] = [config["T"] * j / m for j in range(1, m + 1)]
    config["M"] = len(config["times"])
    return config


def _params(config):
    return kernels.ModelParams(config["theta"], config["sigma"])


def _scheme(config, n=None):
    return kernels.SamplingScheme(config["A"], config["B"], n or config["N"], tuple(config["times"]),
                                  config["gamma"], config["a"], config["b"])


def _experiment(config):
    d = dict(config)
    d["n_values"] = config["n_values"] or []
    return montecarlo.ExperimentConfig.from_dict(d)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def _simulate_field(config, kind):
    params, scheme = _params(config), _scheme(config)
    if config["domain"] == "bounded":
        return simulate.simulate_spectral_field(params, scheme, config["modes"], config["seed"], kind)
    if config["domain"] != "line":
        raise DomainError(f"domain must be 'bounded' or 'line', got {config['domain']!r}")
    if kind == "ux_increments":
        return simulate.simulate_ux_increments(params, scheme, config["seed"], config["max_dim"])
    if kind == "delta_u_increments":
        return simulate.simulate_delta_u_increments(params, scheme, config["seed"], config["max_dim"])
    raise DomainError("the line simulator produces increment fields only")


def cmd_simulate(config, out, threads):
    f = _simulate_field(config, config["kind"])
    f.save(out, "field")
    print(out / "field.csv")


def cmd_estimate(config, out, threads):
    target, family = estimators.estimator_family(config["estimator"])
    if config["input"]:
        try:
            f = simulate.load_field(config["input"])
        except OSError as exc:
            raise UsageError(f"cannot read field {config['input']}: {exc.strerror}") from None
        truth = None
    else:
        f = _simulate_field(config, estimators.FIELD_KIND_FOR[family])
        truth = config["sigma"] if target == "sigma" else config["theta"]
    known = config["theta"] if target == "sigma" else config["sigma"]
    report = estimators.estimate(f, config["estimator"], known, config["correct_bias"])
    if truth is not None and truth > 0:
        report = replace(report, normalized_stat=estimators.normalized_stat(report, truth, config["statistic"]))
    atomic_write_json(out / "estimate.json", report.to_dict())
    line = report.to_csv_line()
    atomic_write_text(out / "estimate.csv", ",".join(report.CSV_HEADER) + "\n" + line + "\n")
    print(line)


def cmd_mc_consistency(config, out, threads):
    rows = montecarlo.run_consistency(_experiment(config), threads)
    montecarlo.write_consistency(rows, out)
    sys.stdout.write(csv_text(["N", "mean", "stderr", "failures"],
                              [[r.n_space, r.mean, r.stderr, r.failures] for r in rows]))


def cmd_mc_normality(config, out, threads):
    summary = montecarlo.run_normality(_experiment(config), threads)
    montecarlo.write_normality(summary, out)
    print(f"ks_stat={summary.ks_stat!r} mean={summary.mean!r} stderr={summary.stderr!r} "
          f"failures={summary.failures}")


def _kernel_rows(config):
    op, params = config["op"], _params(config)
    scheme = _scheme(config)
    n = scheme.n_space
    if op == "mu":
        return None, kernels.mu_factor(config["a"], config["b"], config["gamma"]).mu
    if op == "tau":
        return None, params.tau
    if op == "q_expectations":
        variant = "delta_u" if config["kind"] == "delta_u_increments" else "ux"
        q = kernels.q_expectations(params, scheme, variant)
        return (["q_diag", "q_nd", "q_nd_restricted", "total"],
                [[q.q_diag, q.q_nd, q.q_nd_restricted, q.total]])
    if op == "ux_variance":
        rows = [[t, kernels.ux_increment_variance(t, scheme.h, params)] for t in scheme.times]
        return ["t", "variance"], rows
    if op == "delta_variance":
        rows = [[t, kernels.delta_u_increment_variance(t, params, scheme)] for t in scheme.times]
        return ["t", "variance"], rows
    if op in ("ux_cov", "delta_cov"):
        rows = []
        for k, tk in enumerate(scheme.times):
            for tl in scheme.times[k:]:
                if op == "ux_cov":
                    lags = range(0, n)
                    covs = kernels.ux_increment_cov(list(lags), tk, tl, params, scheme, method="split")
                else:
                    lags = range(1, n + 1)
                    covs = kernels.delta_u_increment_cov(list(lags), tk, tl, params, scheme)
                rows.extend([tk, tl, lag, float(c)] for lag, c in zip(lags, covs))
        return ["t_k", "t_l", "lag", "cov"], rows
    raise UsageError(f"--op must be one of {KERNEL_OPS}")


def cmd_kernels_table(config, out, threads):
    header, rows = _kernel_rows(config)
    if header is None:
        atomic_write_text(out / "kernels_table.csv", csv_text([config["op"]], [[float(rows)]]))
        print(repr(float(rows)))
        return
    text = csv_text(header, rows)
    atomic_write_text(out / "kernels_table.csv", text)
    sys.stdout.write(text)


def cmd_verify(config, out, threads):
    report = verify_closed_forms(trials=config["trials"], seed=config["seed"])
    data = report.to_dict()
    atomic_write_json(out / "verify.json", data)
    sys.stdout.write(dumps(data))
    if not report.passed:
        raise NumericalError("closed-form verification failed")


COMMANDS = {
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "mc-consistency": cmd_mc_consistency,
    "mc-normality": cmd_mc_normality,
    "kernels-table": cmd_kernels_table,
    "verify": cmd_verify,
}


def main(argv=None):
    """Run the command line; returns the exit code."""
    try:
        args = build_parser().parse_args(argv)
        config = resolve_config(args)
        threads = montecarlo.resolve_threads(args.threads)
        out = Path(args.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        atomic_write_json(out / "config_echo.json", dict(config, subcommand=args.subcommand))
        COMMANDS[args.subcommand](config, out, threads)
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except UsageError as exc:
        print(f"spde-powvar: usage error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"spde-powvar: numerical error: {exc}", file=sys.stderr)
        return 3
    except (DomainError, ValueError) as exc:
        print(f"spde-powvar: domain error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
