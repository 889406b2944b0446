"""Scenario runners: one function per experiment kind.

Each runner takes a validated :class:`~emmviscowave.scenario.Scenario` and an
output directory, writes its CSV/JSON artifacts there and returns a
:class:`~emmviscowave.report.ScenarioResult` whose checks decide the exit code.
"""
import dataclasses
import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .assembly import assemble_reduced
from .freq import limiting_amplitude_run, solve_lambda
from .identities import IDENTITY_TOL, run_identity_suite
from .idform import run_id
from .mesh import refine
from .report import ScenarioResult, check, emit_report
from .spectral import (build_stationary, check_dissipativity, eps2_hat, h_factor, h_norm,
                       kernel_residual, probe_resolvent)
from .timestep import ad_stepper, fit_decay, reduced_stepper, run_energy

log = logging.getLogger(__name__)

# contract thresholds
BALANCE_TOL = 1e-12
MONOTONE_TOL = 1e-12
DECAY_R2 = 0.99
MESH_RATE_TOL = 0.15
DISSIPATIVITY_TOL = 1e-12
KERNEL_TOL = 1e-10
RATIO_RANGE = (3.5, 4.5)
ADID_TOL = 1e-3
HARMONIC_RES_TOL = 1e-10
LAMP_R2 = 0.98
HARMONIC_TRACK_TOL = 1e-8
DEFAULT_KAPPA_PROBES = (0.5, 1.0, 5.0)


def random_state(ops, rng):
    """Random reduced state (v, psi) normalized to unit energy."""
    x = rng.standard_normal(ops.n_reduced)
    return x / np.sqrt(0.5 * float(x @ (ops.M_H @ x)))


def displacement_field(x, y):
    """Smooth initial displacement, vanishing on the left side."""
    return 0.1 * x * np.sin(np.pi * y), 0.1 * x * x


def boundary_forcing(ops, amplitude, wavenumber):
    """Nodal field (a1 sin(k pi y), a2 cos(k pi y)) whose Dirichlet trace drives the run."""
    a1, a2 = amplitude
    return ops.interpolate(lambda x, y: (a1 * np.sin(wavenumber * np.pi * y),
                                         a2 * np.cos(wavenumber * np.pi * y)))


def _n_steps(T, dt):
    n = int(round(T / dt))
    if not np.isclose(n * dt, T, rtol=1e-9, atol=0):
        raise ValueError(f"T={T} is not an integer multiple of dt={dt}")
    return n


def _result(sc):
    return ScenarioResult(sc.kind, sc.name, sc.seed, sc.config_hash())


# ---- identities ---------------------------------------------------------------

def run_identities(sc, out):
    rep = run_identity_suite(sc.options["trials"], sc.seed)
    res = _result(sc)
    for name, r in rep.max_residual.items():
        res.checks.append(check(f"identity.{name}", r, IDENTITY_TOL))
    res.results = {"trials": rep.trials, "max_residual": rep.max_residual}
    log.info("identity suite: %d trials in %.2f s", rep.trials, rep.seconds)
    return res


# ---- decay ----------------------------------------------------------------------

def decay_series(ops, sc, mesh_tag, out, res):
    """Energy runs from ``n_seeds`` random states; returns the fitted rates."""
    dt, T = sc.time.dt, sc.time.T
    n = _n_steps(T, dt)
    rates, runs = [], []
    for k in range(sc.options["n_seeds"]):
        rng = np.random.default_rng([sc.seed, k])
        traj = run_energy(ops, random_state(ops, rng), dt, n)
        rate, r2 = fit_decay(traj.t, traj.E, sc.options["fit_window"])
        rates.append(rate)
        csv_name = f"energy_{mesh_tag}_seed{k}.csv"
        traj.write_csv(out / csv_name)
        res.artifacts.append(csv_name)
        dE = np.diff(traj.E) / traj.E[:-1]
        dEt = np.diff(traj.Etilde) / np.abs(traj.Etilde[:-1])
        tag = f"{mesh_tag}.seed{k}"
        res.checks += [
            check(f"balance_residual.{tag}", traj.balance_residual.max(), BALANCE_TOL),
            check(f"E_increase.{tag}", dE.max(), MONOTONE_TOL),
            check(f"Etilde_increase.{tag}", dEt.max(), MONOTONE_TOL),
            check(f"r2.{tag}", r2, DECAY_R2, ">="),
            check(f"fitted_rate.{tag}", rate, 0.0, ">"),
        ]
        runs.append({"seed": k, "fitted_rate": rate, "r2": r2,
                     "max_balance_residual": float(traj.balance_residual.max()), "c_f": traj.c_f})
    return rates, runs


def run_decay(sc, out):
    res = _result(sc)
    mesh = sc.build_mesh()
    mat = sc.material.build()
    ops = assemble_reduced(mesh, mat)
    rates, runs = decay_series(ops, sc, "base", out, res)
    res.results = {"n_dofs": ops.n_reduced, "fitted_rate": float(np.mean(rates)), "runs": runs}
    if sc.options["refine_check"]:
        ops_f = assemble_reduced(refine(mesh), mat)
        rates_f, runs_f = decay_series(ops_f, sc, "refined", out, res)
        rel = abs(np.mean(rates_f) - np.mean(rates)) / np.mean(rates)
        res.checks.append(check("mesh_rate_deviation", rel, MESH_RATE_TOL))
        res.results["refined"] = {"n_dofs": ops_f.n_reduced, "fitted_rate": float(np.mean(rates_f)),
                                  "relative_deviation": float(rel), "runs": runs_f}
    return res


# ---- AD vs ID -------------------------------------------------------------------

def ad_id_deviation(ops, dt, T, u0=None):
    """Relative displacement deviation at T between the AD midpoint and ID runs."""
    if u0 is None:
        u0, _ = ops.restrict(ops.interpolate(displacement_field))
    v0 = np.zeros_like(u0)
    n = _n_steps(T, dt)
    U = np.concatenate([u0, v0, np.zeros(ops.dofs.n_phi)])
    st = ad_stepper(ops, dt)
    for _ in range(n):
        U = st.step(U)
    u_ad = U[:ops.dofs.n_free]
    u_id = run_id(ops, u0, v0, dt, T, every=n).u[-1]
    return float(np.linalg.norm(u_ad - u_id) / np.linalg.norm(u_id))


def run_ad_vs_id(sc, out):
    res = _result(sc)
    ops = assemble_reduced(sc.build_mesh(), sc.material.build())
    dts = [sc.time.dt / 2 ** k for k in range(sc.options["levels"])]
    devs = [ad_id_deviation(ops, dt, sc.time.T) for dt in dts]
    ratios = [a / b for a, b in zip(devs[:-1], devs[1:])]
    for k, r in enumerate(ratios):
        res.checks.append(check(f"halving_ratio.{k}.lower", r, RATIO_RANGE[0], ">="))
        res.checks.append(check(f"halving_ratio.{k}.upper", r, RATIO_RANGE[1], "<="))
    res.checks.append(check("deviation_finest", devs[-1], ADID_TOL))
    csv_name = "ad_vs_id.csv"
    with open(out / csv_name, "w", encoding="utf-8", newline="") as fh:
        fh.write("dt,deviation\r\n")
        for dt, d in zip(dts, devs):
            fh.write(f"{dt:.17g},{d:.17g}\r\n")
    res.artifacts.append(csv_name)
    res.results = {"T": sc.time.T, "dt": dts, "deviation": devs, "ratios": ratios}
    return res


def _lam_tag(lam):
    lam = complex(lam)
    return f"{lam.real:g}" if lam.imag == 0 else f"{lam.imag:g}i"


# ---- spectral -------------------------------------------------------------------

def run_spectral(sc, out):
    res = _result(sc)
    ops = assemble_reduced(sc.build_mesh(), sc.material.build())
    diss = check_dissipativity(ops, DISSIPATIVITY_TOL)
    res.checks.append(check("dissipativity_residual", diss, DISSIPATIVITY_TOL))
    e2 = eps2_hat(ops)
    res.checks.append(check("eps2_hat", e2, 0.0, ">"))
    kappas = sc.frequency.kappa if sc.frequency is not None else DEFAULT_KAPPA_PROBES
    h_factor(ops)
    # real probes use the bound sqrt(lam^2 + eps2), valid for every lam > 0
    jobs = [(lam, e2) for lam in sc.options["lambdas"]] + [(1j * k, None) for k in kappas]
    with ThreadPoolExecutor(max_workers=4) as pool:
        probes = list(pool.map(lambda a: probe_resolvent(ops, *a), jobs))
    for p in probes:
        res.checks.append(dataclasses.replace(
            check(f"probe.{_lam_tag(p.lam)}", p.smin_H, p.bound, ">="), passed=p.satisfied))
    res.results = {"n_dofs": ops.n_reduced, "dissipativity_residual": diss, "eps2_hat": e2,
                   "probes": [p.to_dict() for p in probes]}
    if sc.options["stationary"]:
        if len(ops.nondegenerate) == ops.dofs.n_branches:
            rng = np.random.default_rng(sc.seed)
            U = build_stationary(ops, rng.standard_normal(ops.dofs.n_phi))
            kr = kernel_residual(ops, U)
            res.checks.append(check("kernel_residual", kr, KERNEL_TOL))
            res.results["kernel_residual"] = kr
        else:
            log.warning("stationary check skipped: elastic branches present")
            res.results["kernel_residual"] = None
    return res


# ---- limiting amplitude ---------------------------------------------------------

def run_limiting_amplitude(sc, out):
    res = _result(sc)
    ops = assemble_reduced(sc.build_mesh(), sc.material.build())
    opt = sc.options
    f_tilde = boundary_forcing(ops, opt["forcing_amplitude"], opt["forcing_wavenumber"])
    tm = sc.time
    # factor once; the kappa runs below share it read-only
    reduced_stepper(ops, tm.dt)
    if opt["harmonic_check"]:
        reduced_stepper(ops, opt["harmonic_dt"])

    def one(kappa):
        harm = solve_lambda(ops, 0.0, kappa, g_D=f_tilde)
        run = limiting_amplitude_run(ops, kappa, f_tilde, tm.t0, tm.T, tm.dt, every=opt["every"],
                                     fit_window=opt["fit_window"], harmonic=harm)
        track = None
        if opt["harmonic_check"]:
            hr = limiting_amplitude_run(ops, kappa, f_tilde, 0.0, opt["harmonic_T"], opt["harmonic_dt"],
                                        start="harmonic", every=opt["every"], harmonic=harm)
            track = float(hr.mismatch_H.max() / h_norm(ops, harm.x))
        return run, track

    kappas = sc.frequency.kappa
    if len(kappas) > 1:
        with ThreadPoolExecutor(max_workers=min(4, len(kappas))) as pool:
            outs = list(pool.map(one, kappas))
    else:
        outs = [one(kappas[0])]
    summaries = []
    for kappa, (run, track) in zip(kappas, outs):
        tag = f"kappa{kappa:g}"
        csv_name = f"limiting_amplitude_{tag}.csv"
        run.write_csv(out / csv_name)
        res.artifacts.append(csv_name)
        s = run.summary()
        s["harmonic_tracking"] = track
        summaries.append(s)
        res.checks += [
            check(f"residual_harmonic.{tag}", run.harmonic.residual, HARMONIC_RES_TOL),
            check(f"r2.{tag}", run.r2, LAMP_R2, ">="),
            check(f"fitted_rate.{tag}", run.fitted_rate, 0.0, "<"),
        ]
        if track is not None:
            res.checks.append(check(f"harmonic_tracking.{tag}", track, HARMONIC_TRACK_TOL))
    res.results = {"n_dofs": ops.n_reduced, "runs": summaries}
    return res


RUNNERS = {
    "identities": run_identities,
    "decay": run_decay,
    "ad-vs-id": run_ad_vs_id,
    "spectral": run_spectral,
    "limiting-amplitude": run_limiting_amplitude,
}


def run_scenario(sc, out_override=None, seed=None):
    """Run one scenario, write ``report.json`` and return the result."""
    if seed is not None:
        sc = dataclasses.replace(sc, seed=int(seed))
    out = Path(sc.resolve_output(out_override))
    out.mkdir(parents=True, exist_ok=True)
    res = RUNNERS[sc.kind](sc, out)
    res.artifacts.append("report.json")
    emit_report(res, out / "report.json")
    return res
