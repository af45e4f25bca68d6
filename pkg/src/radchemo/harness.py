"""Experiment orchestration: classified runs, critical-level bisection, sweeps.

A run drives one solver (primitive (u, v) stepping or the mass-accumulation
w-equation) to the horizon, sampling the moment functionals and inequality
monitors on the way, and classifies the outcome as BOUNDED, BLOWUP, or
INCONCLUSIVE.  On top of single runs sit the bisection for the critical
boundary level, (beta, M) phase-diagram sweeps with optional process
parallelism, and the cross-formulation comparison of the two solvers.

Persistence layout per experiment directory:

    manifest.json   full configuration echo, constants, tolerances, results
    samples.csv     t, phi, psi, sup_u, mass, vmax, residual_* per sample
    summary.csv     beta, M, classification, t_blowup, grid_N per sweep cell

Numbers are written with 17 significant digits so determinism can be checked
byte for byte.
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from . import __version__, _kernels
from .functionals import FunctionalSample, check_pointwise_bounds
from .masspde import MassState, reconstruct_u, run_until_w, transform_initial
from .model import (
    BumpProfile,
    ConstantProfile,
    GaussianProfile,
    InitialProfile,
    ModelParams,
    SensitivitySpec,
    TabulatedProfile,
    compute_constants,
    make_initial_data,
)
from .primitive import TerminationReason, TimePolicy, make_state, run_until
from .signal import RadialGrid, solve_elliptic

__all__ = [
    "RunSetup",
    "RunOutcome",
    "MStarResult",
    "SweepRow",
    "ComparisonReport",
    "ConfigurationError",
    "BracketError",
    "classify_run",
    "bisect_mstar",
    "sweep",
    "compare_formulations",
    "richardson_blowup_estimate",
    "write_run_artifacts",
    "write_summary_csv",
]

SAMPLE_COLUMNS = (
    "t", "phi", "psi", "sup_u", "mass", "vmax",
    "residual_w_bound", "residual_phi_bound", "residual_vlower",
    "residual_rvr", "residual_wt",
)


class ConfigurationError(ValueError):
    """Inconsistent run configuration (solver/parameter combination)."""


class BracketError(RuntimeError):
    """Bisection endpoints do not bracket the blow-up transition."""


@dataclass(frozen=True)
class RunSetup:
    """Everything needed to reproduce one classified run."""

    params: ModelParams
    initial: InitialProfile
    solver: str = "primitive"
    n_r: int = 512
    n_s: Optional[int] = None
    time: TimePolicy = field(default_factory=TimePolicy)
    functionals_enabled: bool = True
    gamma: Optional[float] = None
    out_dir: Optional[str] = None
    keep_snapshots: bool = False

    def __post_init__(self):
        if self.solver not in ("primitive", "masspde"):
            raise ConfigurationError(f"unknown solver {self.solver!r}")
        if self.solver == "masspde" and (self.params.tau != 0 or self.params.n != 2):
            raise ConfigurationError("masspde requires tau=0, n=2")

    @property
    def ns(self) -> int:
        return self.n_s if self.n_s is not None else self.n_r


@dataclass(eq=False)
class RunOutcome:
    """Classification plus the sampled time series and the full manifest."""

    classification: str
    t_final: float
    sup_u_final: float
    blowup_time_estimate: Optional[float]
    manifest: dict
    samples: list[FunctionalSample]
    snapshots: Optional[list[tuple[float, np.ndarray]]] = None


@dataclass(eq=False)
class MStarResult:
    """Bracket for the critical boundary level after bisection."""

    bracket_lo: float
    bracket_hi: float
    iterations: int
    runs: list[dict]
    monotone_audit_ok: bool


@dataclass(frozen=True)
class SweepRow:
    beta: float
    M: float
    classification: str
    t_blowup: float
    grid_N: int


@dataclass(eq=False)
class ComparisonReport:
    """Cross-formulation agreement between the two solvers."""

    times: list[float]
    rel_discrepancy: list[float]
    max_rel_discrepancy: float
    classification_primitive: str
    classification_masspde: str
    blowup_time_primitive: Optional[float]
    blowup_time_masspde: Optional[float]
    blowup_time_rel_diff: Optional[float]


def _fmt(x) -> str:
    try:
        xf = float(x)
    except (TypeError, ValueError):
        return "nan"
    if math.isnan(xf):
        return "nan"
    return format(xf, ".17g")


def _profile_descriptor(profile: InitialProfile) -> dict:
    if isinstance(profile, ConstantProfile):
        return {"profile": "constant", "params": {"c": profile.c}}
    if isinstance(profile, GaussianProfile):
        return {"profile": "gaussian",
                "params": {"amplitude": profile.amplitude, "width": profile.width}}
    if isinstance(profile, BumpProfile):
        return {"profile": "bump",
                "params": {"amplitude": profile.amplitude, "radius": profile.radius}}
    if isinstance(profile, TabulatedProfile):
        return {"profile": "tabulated",
                "params": {"r": [float(x) for x in profile.r],
                           "u0": [float(x) for x in profile.u0]}}
    raise ConfigurationError(f"unknown profile {profile!r}")


def setup_to_config(setup: RunSetup) -> dict:
    """Config-file-shaped echo of a setup (round-trips through the CLI)."""
    p = setup.params
    return {
        "model": {"n": p.n, "R": p.R, "tau": p.tau, "M": p.M, "T_end": p.T_end},
        "sensitivity": {"family": p.sensitivity.family, "beta": p.sensitivity.beta,
                        "coeff": p.sensitivity.coeff},
        "initial": _profile_descriptor(setup.initial),
        "grid": {"N_r": setup.n_r, "N_s": setup.ns},
        "time": {"dt_init": setup.time.dt_init, "dt_min_factor": setup.time.dt_min_factor,
                 "sample_dt": setup.time.sample_dt},
        "functionals": {"gamma": setup.gamma, "enable": setup.functionals_enabled},
        "output": {"dir": setup.out_dir or ""},
    }


class _Recorder:
    """Observer collecting samples on the sample-time grid."""

    def __init__(self, setup, params, grid, consts, monitors, m0):
        self.setup = setup
        self.params = params
        self.grid = grid
        self.consts = consts
        self.monitors = monitors
        self.m0 = m0
        self.samples: list[FunctionalSample] = []
        self.snapshots: list[tuple[float, np.ndarray]] = []
        self.last_sample_t = -math.inf

    def _due(self, t) -> bool:
        sample_dt = self.setup.time.sample_dt
        return t >= self.last_sample_t + sample_dt * (1.0 - 1e-9)

    def observe(self, state):
        if self._due(state.t):
            self.record(state)

    def record(self, state):
        if self.samples and abs(state.t - self.samples[-1].t) < 1e-14 * max(1.0, state.t):
            return
        self.last_sample_t = state.t
        sample = self._build_sample(state)
        self.samples.append(sample)
        if self.setup.keep_snapshots:
            if isinstance(state, MassState):
                self.snapshots.append((state.t, reconstruct_u(state, self.grid)))
            else:
                self.snapshots.append((state.t, state.u.copy()))

    def _build_sample(self, state) -> FunctionalSample:
        params = self.params
        if isinstance(state, MassState):
            u = np.maximum(reconstruct_u(state, self.grid), 0.0)
            sig = solve_elliptic(u, params.M, self.grid)
            if self.monitors:
                return check_pointwise_bounds(state, sig, self.consts, params)
            return FunctionalSample(
                t=state.t, phi=math.nan, psi=math.nan, sup_u=state.sup_u,
                mass=state.mass, vmax=float(sig.v.max()),
            )
        vmax = float(state.signal.v.max())
        if self.monitors:
            ms = transform_initial(state.u, self.grid, self.setup.ns)
            ms.t = state.t
            sig = solve_elliptic(state.u, params.M, self.grid) if params.tau == 0 else state.signal
            sample = check_pointwise_bounds(ms, sig, self.consts, params)
            sample.sup_u = state.sup_u
            sample.mass = state.mass
            sample.vmax = vmax
            sample.residual_wt = math.nan  # no accepted-step w pair for this solver
            sample.scale_wt = math.nan
            return sample
        return FunctionalSample(
            t=state.t, phi=math.nan, psi=math.nan, sup_u=state.sup_u,
            mass=state.mass, vmax=vmax,
        )


def classify_run(setup: RunSetup) -> RunOutcome:
    """Run to the horizon (or blow-up) and classify.

    BOUNDED: the horizon was reached with the sup-norm below the ceiling.
    BLOWUP: the ceiling was hit or dt collapsed at large amplitude, at or
    before the horizon; the first crossing time is the blow-up estimate.
    INCONCLUSIVE: numerical failure of any kind.
    """
    params = setup.params
    grid = RadialGrid(params.n, params.R, setup.n_r)
    data = make_initial_data(params, setup.initial, grid)

    spec = params.sensitivity
    functionals_apply = (
        spec.family == "power_pure" and spec.beta > 1
        and params.n == 2 and params.tau == 0 and spec.coeff > 0
    )
    monitors = setup.functionals_enabled and functionals_apply
    consts = compute_constants(params, data, setup.gamma) if functionals_apply else None

    # one concentration-core convention for both formulations, so their
    # blow-up estimates are comparable: the coarser of the two grids' scales
    conc_radius = max(_kernels.CONC_CELLS * params.R / setup.n_r,
                      params.R / math.sqrt(setup.ns))

    recorder = _Recorder(setup, params, grid, consts, monitors, data.m0)
    if setup.solver == "masspde":
        state = transform_initial(data.u0, grid, setup.ns)
        state.signal = solve_elliptic(np.maximum(reconstruct_u(state, grid), 0.0),
                                      params.M, grid)
        state.max_v_seen = float(state.signal.v.max())
        recorder.observe(state)
        final, reason = run_until_w(state, params, params.T_end, setup.time,
                                    recorder.observe, conc_radius=conc_radius)
    else:
        state = make_state(grid, params, data.u0, data.v0)
        recorder.observe(state)
        final, reason = run_until(state, params, params.T_end, setup.time,
                                  recorder.observe, conc_radius=conc_radius)
    recorder.record(final)

    if reason.kind == "reached_t_stop":
        classification = "BOUNDED"
        blowup_t = None
    elif reason.kind == "blowup_suspected" and reason.t <= params.T_end * (1 + 1e-12):
        classification = "BLOWUP"
        # the reported estimate is the sharp amplitude-crossing time when the
        # run recorded one; the (later) termination trigger is the fallback
        amp_t = getattr(final, "amp_cross_t", math.nan)
        blowup_t = amp_t if not math.isnan(amp_t) else reason.t
    else:
        classification = "INCONCLUSIVE"
        blowup_t = None

    mass_final = final.mass
    clamped = getattr(final, "clamped_mass", 0.0)
    manifest = {
        "code_version": __version__,
        "solver": setup.solver,
        "config": setup_to_config(setup),
        "grid": {"n": params.n, "R": params.R, "N_r": setup.n_r, "N_s": setup.ns,
                 "h": grid.h},
        "time_policy": dataclasses.asdict(setup.time),
        "thresholds": {
            "blowup_ceiling": 1e6 * max(1.0, float(data.u0.max())),
            "blowup_soft": 1e3 * float(data.u0.max()),
            "dt_min": setup.time.dt_min_factor * params.T_end,
            "concentration_radius": conc_radius,
            "concentration_fraction": _kernels.CONC_FRACTION,
            "concentration_gate": _kernels.CONC_GATE_FACTOR * max(1.0, float(data.u0.max())),
        },
        "initial_mass": data.m0,
        "sup_u0": float(data.u0.max()),
        "v0_policy": "constant_M" if params.tau == 1 else "elliptic_solve",
        "ws_origin": "one_sided",
        "functionals": {
            "enabled": monitors,
            "constants": dataclasses.asdict(consts) if consts is not None else None,
        },
        "result": {
            "classification": classification,
            "t_final": final.t,
            "sup_u_final": reason.sup_u,
            "blowup_time_estimate": blowup_t,
            "amplitude_crossing_time": getattr(final, "amp_cross_t", math.nan),
            "termination": {"kind": reason.kind, "detail": reason.detail, "t": reason.t},
            "max_v_overall": final.max_v_seen,
            "mass_drift_rel": abs(mass_final - data.m0) / data.m0,
            "max_step_mass_drift_rel": getattr(final, "max_step_mass_drift", 0.0),
            "clamped_mass_rel": clamped / data.m0,
            "accepted_steps": final.nsteps,
        },
    }
    outcome = RunOutcome(
        classification=classification,
        t_final=final.t,
        sup_u_final=reason.sup_u,
        blowup_time_estimate=blowup_t,
        manifest=manifest,
        samples=recorder.samples,
        snapshots=recorder.snapshots if setup.keep_snapshots else None,
    )
    if setup.out_dir:
        write_run_artifacts(outcome, setup.out_dir)
    return outcome


def richardson_blowup_estimate(t_coarse: float, t_fine: float, order: int = 1) -> float:
    """First-order Richardson extrapolation of a blow-up time from two grids."""
    return t_fine + (t_fine - t_coarse) / (2 ** order - 1)


def bisect_mstar(
    setup_template: RunSetup,
    lo: float,
    hi: float,
    iters: int,
    classify: Callable[[RunSetup], RunOutcome] = classify_run,
) -> MStarResult:
    """Bisect the boundary level between a non-blow-up lo and a blow-up hi.

    Every midpoint is classified by a full run; INCONCLUSIVE midpoints move
    the lower edge (they are not evidence of blow-up).  The result is a
    bracket, not a claim about the exact critical level.  The trace is
    audited for monotonicity of the classification in M.
    """
    if not 0 < lo < hi:
        raise BracketError("need 0 < lo < hi")

    def _run(M):
        setup = replace(setup_template,
                        params=replace(setup_template.params, M=float(M)),
                        out_dir=None)
        outcome = classify(setup)
        return {"M": float(M), "classification": outcome.classification,
                "t_blowup": outcome.blowup_time_estimate}

    runs = [_run(lo), _run(hi)]
    if runs[0]["classification"] == "BLOWUP":
        raise BracketError(f"lower endpoint M={lo} already blows up")
    if runs[1]["classification"] != "BLOWUP":
        raise BracketError(f"upper endpoint M={hi} did not blow up")
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        rec = _run(mid)
        runs.append(rec)
        if rec["classification"] == "BLOWUP":
            hi = mid
        else:
            lo = mid
    blowup_ms = [r["M"] for r in runs if r["classification"] == "BLOWUP"]
    other_ms = [r["M"] for r in runs if r["classification"] != "BLOWUP"]
    audit_ok = (not blowup_ms or not other_ms) or max(other_ms) < min(blowup_ms)
    return MStarResult(bracket_lo=lo, bracket_hi=hi, iterations=iters,
                       runs=runs, monotone_audit_ok=audit_ok)


def _sweep_cell(args) -> SweepRow:
    setup_template, beta, M = args
    params = setup_template.params
    setup = replace(
        setup_template,
        params=replace(params, M=float(M),
                       sensitivity=replace(params.sensitivity, beta=float(beta))),
        out_dir=None,
    )
    try:
        outcome = classify_run(setup)
        classification = outcome.classification
        t_blowup = outcome.blowup_time_estimate
    except Exception:
        classification, t_blowup = "INCONCLUSIVE", None
    return SweepRow(
        beta=float(beta), M=float(M), classification=classification,
        t_blowup=t_blowup if t_blowup is not None else math.nan,
        grid_N=setup.n_r,
    )


def sweep(
    setup_template: RunSetup,
    betas: Sequence[float],
    Ms: Sequence[float],
    parallelism: int = 1,
    out_dir: Optional[str] = None,
) -> list[SweepRow]:
    """Classify every (beta, M) cell; deterministic ordering by (beta, M).

    Individual failures become INCONCLUSIVE rows and never abort the sweep.
    Serial and parallel execution produce identical tables.
    """
    jobs = [(setup_template, b, M) for b in sorted(set(float(b) for b in betas))
            for M in sorted(set(float(M) for M in Ms))]
    if not jobs:
        rows: list[SweepRow] = []
    elif parallelism <= 1:
        rows = [_sweep_cell(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=min(parallelism, len(jobs))) as pool:
            rows = list(pool.map(_sweep_cell, jobs))
    rows.sort(key=lambda row: (row.beta, row.M))
    if out_dir:
        write_summary_csv(rows, Path(out_dir) / "summary.csv")
    return rows


def compare_formulations(setup: RunSetup) -> ComparisonReport:
    """Run both solvers from the same initial density and compare.

    Reports the time series of the relative sup-norm discrepancy between the
    primitive density and the density reconstructed from the w-solver at the
    shared sample times, plus the relative difference of blow-up times when
    both runs blow up.
    """
    if setup.params.tau != 0 or setup.params.n != 2:
        raise ConfigurationError("formulation comparison requires tau=0, n=2")
    prim = classify_run(replace(setup, solver="primitive", keep_snapshots=True,
                                out_dir=None))
    mass = classify_run(replace(setup, solver="masspde", keep_snapshots=True,
                                out_dir=None))
    by_t = {round(t, 12): u for t, u in mass.snapshots}
    times, rels = [], []
    for t, u_p in prim.snapshots:
        u_m = by_t.get(round(t, 12))
        if u_m is None:
            continue
        denom = float(np.abs(u_p).max())
        if denom == 0:
            continue
        times.append(t)
        rels.append(float(np.abs(u_p - u_m).max()) / denom)
    t_p, t_m = prim.blowup_time_estimate, mass.blowup_time_estimate
    rel_blowup = None
    if t_p is not None and t_m is not None and t_p > 0:
        rel_blowup = abs(t_p - t_m) / t_p
    return ComparisonReport(
        times=times,
        rel_discrepancy=rels,
        max_rel_discrepancy=max(rels) if rels else math.nan,
        classification_primitive=prim.classification,
        classification_masspde=mass.classification,
        blowup_time_primitive=t_p,
        blowup_time_masspde=t_m,
        blowup_time_rel_diff=rel_blowup,
    )


def write_run_artifacts(outcome: RunOutcome, out_dir) -> None:
    """Write manifest.json and samples.csv for one run."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "manifest.json", "w") as fh:
        json.dump(outcome.manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(out / "samples.csv", "w") as fh:
        fh.write(",".join(SAMPLE_COLUMNS) + "\n")
        for s in outcome.samples:
            fh.write(",".join(_fmt(getattr(s, c)) for c in SAMPLE_COLUMNS) + "\n")


def write_summary_csv(rows: Sequence[SweepRow], path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        fh.write("beta,M,classification,t_blowup,grid_N\n")
        for row in rows:
            fh.write(
                f"{_fmt(row.beta)},{_fmt(row.M)},{row.classification},"
                f"{_fmt(row.t_blowup)},{row.grid_N}\n"
            )
