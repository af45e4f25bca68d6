"""Command-line front end: run, sweep, mstar, compare.

Configuration is a single JSON file; unknown keys are rejected so manifests
round-trip exactly (a manifest.json can be fed back in as the config).  Exit
codes: 0 for a decisive run (BOUNDED or BLOWUP), 2 for INCONCLUSIVE, 1 for
configuration errors.  The environment variable RADCHEMO_OUT overrides the
configured output directory.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

import numpy as np

from .harness import (
    ConfigurationError,
    BracketError,
    RunSetup,
    bisect_mstar,
    classify_run,
    compare_formulations,
    sweep,
    write_run_artifacts,
    write_summary_csv,
    _fmt,
)
from .model import (
    BumpProfile,
    ConstantProfile,
    GaussianProfile,
    ModelParams,
    SensitivitySpec,
    TabulatedProfile,
    ValidationError,
)
from .primitive import TimePolicy

__all__ = ["main", "load_config", "ConfigError"]


class ConfigError(ValueError):
    """Malformed or inconsistent configuration file."""


def _check_keys(mapping, path, required, optional=()):
    if not isinstance(mapping, dict):
        raise ConfigError(f"config error at {path or '<root>'}: expected an object")
    allowed = set(required) | set(optional)
    for key in mapping:
        if key not in allowed:
            raise ConfigError(f"config error at {path + '.' if path else ''}{key}: unknown key")
    for key in required:
        if key not in mapping:
            raise ConfigError(f"config error at {path or '<root>'}: missing key {key!r}")


def _number(mapping, path, key, default=None):
    if key not in mapping:
        if default is None:
            raise ConfigError(f"config error at {path}.{key}: missing")
        return default
    value = mapping[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"config error at {path}.{key}: expected a number")
    return value


_PROFILES = {
    "constant": (ConstantProfile, ("c",)),
    "gaussian": (GaussianProfile, ("amplitude", "width")),
    "bump": (BumpProfile, ("amplitude", "radius")),
}


def _parse_initial(section):
    _check_keys(section, "initial", (), ("profile", "params", "file"))
    if "file" in section:
        if "profile" in section or "params" in section:
            raise ConfigError("config error at initial: give either profile or file, not both")
        path = section["file"]
        try:
            table = np.loadtxt(path, delimiter=",", comments="#")
        except OSError as exc:
            raise ConfigError(f"config error at initial.file: cannot read {path}: {exc}")
        if table.ndim != 2 or table.shape[1] != 2:
            raise ConfigError("config error at initial.file: expected two columns r,u0")
        return TabulatedProfile(r=table[:, 0], u0=table[:, 1])
    if "profile" not in section:
        raise ConfigError("config error at initial: need profile or file")
    name = section["profile"]
    if name not in _PROFILES:
        raise ConfigError(f"config error at initial.profile: unknown profile {name!r}")
    cls, fields = _PROFILES[name]
    params = section.get("params", {})
    _check_keys(params, "initial.params", fields)
    return cls(**{f: _number(params, "initial.params", f) for f in fields})


def load_config(path) -> RunSetup:
    """Parse and validate a config file (or a manifest carrying one) into a RunSetup."""
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed config {path}: line {exc.lineno}, column {exc.colno}: {exc.msg}")
    if isinstance(raw, dict) and "config" in raw and "model" not in raw:
        raw = raw["config"]  # manifest.json round-trip
    _check_keys(raw, "", ("model", "sensitivity", "initial"),
                ("grid", "time", "functionals", "output"))

    msec = raw["model"]
    _check_keys(msec, "model", ("n", "R", "tau", "M", "T_end"))
    ssec = raw["sensitivity"]
    _check_keys(ssec, "sensitivity", ("family", "beta", "coeff"))
    family = ssec["family"]
    if family not in ("power_shifted", "power_pure"):
        raise ConfigError(f"config error at sensitivity.family: unknown family {family!r}")
    try:
        sensitivity = SensitivitySpec(
            family=family,
            beta=_number(ssec, "sensitivity", "beta"),
            coeff=_number(ssec, "sensitivity", "coeff"),
        )
        params = ModelParams(
            n=int(_number(msec, "model", "n")),
            R=_number(msec, "model", "R"),
            tau=int(_number(msec, "model", "tau")),
            sensitivity=sensitivity,
            M=_number(msec, "model", "M"),
            T_end=_number(msec, "model", "T_end"),
        )
    except ValidationError as exc:
        raise ConfigError(f"config error: {exc}")
    initial = _parse_initial(raw["initial"])

    gsec = raw.get("grid", {})
    _check_keys(gsec, "grid", (), ("N_r", "N_s"))
    n_r = int(_number(gsec, "grid", "N_r", 512))
    n_s = gsec.get("N_s")
    if n_s is not None:
        n_s = int(_number(gsec, "grid", "N_s"))

    tsec = raw.get("time", {})
    _check_keys(tsec, "time", (), ("dt_init", "dt_min_factor", "sample_dt"))
    time_policy = TimePolicy(
        dt_init=_number(tsec, "time", "dt_init", 1e-6),
        dt_min_factor=_number(tsec, "time", "dt_min_factor", 1e-12),
        sample_dt=_number(tsec, "time", "sample_dt", max(params.T_end / 100.0, 1e-12)),
    )

    fsec = raw.get("functionals", {})
    _check_keys(fsec, "functionals", (), ("gamma", "enable"))
    gamma = fsec.get("gamma")
    if gamma is not None:
        gamma = _number(fsec, "functionals", "gamma")
    enable = fsec.get("enable", True)
    if not isinstance(enable, bool):
        raise ConfigError("config error at functionals.enable: expected a boolean")

    osec = raw.get("output", {})
    _check_keys(osec, "output", (), ("dir",))
    out_dir = os.environ.get("RADCHEMO_OUT") or osec.get("dir") or None

    try:
        return RunSetup(
            params=params, initial=initial, n_r=n_r, n_s=n_s,
            time=time_policy, functionals_enabled=enable, gamma=gamma,
            out_dir=out_dir,
        )
    except (ConfigurationError, ValidationError) as exc:
        raise ConfigError(f"config error: {exc}")


def _floats(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"expected a comma-separated list of numbers, got {text!r}")


def cmd_run(args) -> int:
    setup = load_config(args.config)
    try:
        setup = dataclasses.replace(setup, solver=args.solver)
    except ConfigurationError as exc:
        raise ConfigError(str(exc))
    outcome = classify_run(setup)
    if outcome.classification == "BLOWUP":
        print(f"BLOWUP t≈{outcome.blowup_time_estimate:.6g}")
    else:
        print(f"{outcome.classification} t={outcome.t_final:.6g}")
    if setup.out_dir:
        print(f"artifacts: {setup.out_dir}")
    return 0 if outcome.classification in ("BOUNDED", "BLOWUP") else 2


def cmd_sweep(args) -> int:
    setup = load_config(args.config)
    out_dir = setup.out_dir or "out/sweep"
    rows = sweep(setup, _floats(args.beta), _floats(args.M),
                 parallelism=args.parallel, out_dir=out_dir)
    for row in rows:
        print(f"beta={row.beta:g} M={row.M:g} -> {row.classification}"
              + (f" t≈{row.t_blowup:.6g}" if row.classification == "BLOWUP" else ""))
    print(f"summary: {Path(out_dir) / 'summary.csv'}")
    return 0


def cmd_mstar(args) -> int:
    setup = load_config(args.config)
    result = bisect_mstar(setup, args.lo, args.hi, args.iters)
    print(f"M* ∈ [{_fmt(result.bracket_lo)}, {_fmt(result.bracket_hi)}]"
          f" after {result.iterations} iterations"
          + ("" if result.monotone_audit_ok else " (monotonicity audit FAILED)"))
    if setup.out_dir:
        out = Path(setup.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "mstar.json", "w") as fh:
            json.dump({"bracket_lo": result.bracket_lo, "bracket_hi": result.bracket_hi,
                       "iterations": result.iterations, "runs": result.runs,
                       "monotone_audit_ok": result.monotone_audit_ok}, fh, indent=2)
            fh.write("\n")
    return 0


def cmd_compare(args) -> int:
    setup = load_config(args.config)
    report = compare_formulations(setup)
    print(f"primitive: {report.classification_primitive}, "
          f"masspde: {report.classification_masspde}")
    print(f"max relative discrepancy: {report.max_rel_discrepancy:.3e}")
    if report.blowup_time_rel_diff is not None:
        print(f"blow-up time relative difference: {report.blowup_time_rel_diff:.3e}")
    if setup.out_dir:
        out = Path(setup.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "comparison.csv", "w") as fh:
            fh.write("t,rel_discrepancy\n")
            for t, rel in zip(report.times, report.rel_discrepancy):
                fh.write(f"{_fmt(t)},{_fmt(rel)}\n")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="radchemo",
        description="Repulsion-consumption chemotaxis experiments on a radial grid",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="one classified run")
    p_run.add_argument("config")
    p_run.add_argument("--solver", choices=("primitive", "masspde"), default="primitive")
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="(beta, M) phase-diagram sweep")
    p_sweep.add_argument("config")
    p_sweep.add_argument("--beta", required=True, help="comma-separated beta values")
    p_sweep.add_argument("--M", required=True, help="comma-separated boundary levels")
    p_sweep.add_argument("--parallel", type=int, default=1)
    p_sweep.set_defaults(func=cmd_sweep)

    p_mstar = sub.add_parser("mstar", help="bisect the critical boundary level")
    p_mstar.add_argument("config")
    p_mstar.add_argument("--lo", type=float, required=True)
    p_mstar.add_argument("--hi", type=float, required=True)
    p_mstar.add_argument("--iters", type=int, required=True)
    p_mstar.set_defaults(func=cmd_mstar)

    p_cmp = sub.add_parser("compare", help="cross-check the two formulations")
    p_cmp.add_argument("config")
    p_cmp.set_defaults(func=cmd_compare)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ConfigurationError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except BracketError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
