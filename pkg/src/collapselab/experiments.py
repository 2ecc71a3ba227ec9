"""Named experiments run from scenario files.

Each runner returns an ``ExperimentOutput`` holding JSON-ready results,
plot-ready series and a short report. ``check`` is ``None`` when the
experiment has no pass/fail criterion, otherwise whether every check held.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from . import csl_model, rel_kernels, units
from .collapse_engine import (
    STEP_RULE,
    BatchResult,
    CollapseOperatorSet,
    closed_form_simple,
    evolve_nonmarkovian,
    evolve_nonmarkovian_closed,
    ou_effective_time,
    ou_weighted_noise,
    run_nonlinear_batch,
    sample_linear_ensemble,
)
from .config import Scenario
from .ensemble_analysis import kernel_double_integral, mc_ensemble_density
from .noise_paths import Kernel, TimeGrid, sample_colored
from .quantum_core import HermitianOperator, StateVector


@dataclass
class ExperimentOutput:
    results: dict[str, Any]
    series: dict[str, tuple[list[str], list[list[float]]]] = field(default_factory=dict)
    report: list[str] = field(default_factory=list)
    check: bool | None = None


def default_steps(lam: float, t_final: float, spread: float) -> int:
    """Fewest steps meeting ``dt * lam * spread^2 <= STEP_RULE``."""
    return max(1, math.ceil(lam * t_final * spread**2 / STEP_RULE - 1e-9))


def _toy_setup(p: dict[str, Any]):
    psi = StateVector(np.asarray(p["amplitudes"], dtype=float))
    A = HermitianOperator.diag(p["eigenvalues"])
    if psi.dim != A.dim:
        raise ValueError("amplitudes and eigenvalues must have the same length")
    ops = CollapseOperatorSet.single(A, p["lambda"])
    n_steps = p["n_steps"] or default_steps(p["lambda"], p["t_final"], ops.spread())
    return psi, ops, TimeGrid.spanning(p["t_final"], n_steps)


def _nonlinear_job(args) -> BatchResult:
    psi, ops, grid, seed, lo, hi, kwargs = args
    return run_nonlinear_batch(psi, ops, grid, seed, range(lo, hi), **kwargs)


def run_nonlinear_parallel(psi, ops, grid, seed: int, n: int, jobs: int = 1, **kwargs) -> BatchResult:
    """Nonlinear batch over streams ``0..n-1`` split across ``jobs`` processes.

    Streams fix every trajectory, so the result does not depend on ``jobs``.
    """
    jobs = max(1, min(int(jobs), n))
    bounds = np.linspace(0, n, jobs + 1).astype(int)
    tasks = [(psi, ops, grid, seed, int(lo), int(hi), kwargs) for lo, hi in zip(bounds[:-1], bounds[1:])]
    if jobs == 1:
        return _nonlinear_job(tasks[0])
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        parts = list(pool.map(_nonlinear_job, tasks))
    return BatchResult.concatenate(parts)


def _born(psi: StateVector) -> np.ndarray:
    p = np.abs(psi.amplitudes) ** 2
    return p / p.sum()


def gambler_ruin(sc: Scenario, jobs: int = 1, deep: bool = False) -> ExperimentOutput:
    p = sc.parameters
    psi, ops, grid = _toy_setup(p)
    n = p["trajectories"] * (10 if deep else 1)
    born = _born(psi)
    kw = dict(epsilon=p["epsilon"], dwell_steps=p["dwell_steps"])
    res: dict[str, Any] = {"born": born.tolist(), "n_steps": grid.n_steps, "dt": grid.dt, "trajectories": n}
    series = {}
    ok = True
    report = [f"scenario {sc.name}: gambler_ruin, {n} trajectories, {grid.n_steps} steps"]
    engines = ["nonlinear", "linear"] if p["engine"] == "both" else [p["engine"]]
    fractions = {}
    for eng in engines:
        if eng == "nonlinear":
            batch = run_nonlinear_parallel(psi, ops, grid, sc.seed, n, jobs, **kw)
            stats = mc_ensemble_density(batch)
        else:
            ls = sample_linear_ensemble(psi, ops, grid, sc.seed + 1, range(n),
                                        endpoint_width=p["endpoint_width"], **kw)
            batch = ls.batch
            stats = mc_ensemble_density(batch, weights=ls.weights)
            res[f"{eng}_mean_weight"] = stats.mean_weight
            res[f"{eng}_mean_weight_stderr"] = stats.mean_weight_stderr
            res[f"{eng}_effective_size"] = stats.effective_size
            ok &= abs(stats.mean_weight - 1.0) <= 3 * stats.mean_weight_stderr
        fractions[eng] = (stats.outcome_fraction, stats.outcome_stderr)
        z = (stats.outcome_fraction - born) / np.where(stats.outcome_stderr > 0, stats.outcome_stderr, 1.0)
        ok &= bool(np.all(np.abs(z) <= 3))
        for k, f in enumerate(stats.outcome_fraction):
            res[f"{eng}_fraction_{k}"] = float(f)
        res[f"{eng}_stderr"] = stats.outcome_stderr.tolist()
        res[f"{eng}_ci"] = stats.outcome_ci.tolist()
        res[f"{eng}_undetected"] = 1.0 - stats.detected_fraction
        if eng == p["engine"] or (p["engine"] == "both" and eng == "nonlinear"):
            for k, f in enumerate(stats.outcome_fraction):
                res[f"fraction_{k}"] = float(f)
        t_grid = np.linspace(0.0, grid.duration, 101)
        rows = []
        for t in t_grid:
            done = batch.outcome_times <= t + 1e-12
            rows.append([float(t)] + [float(np.mean(done & (batch.outcomes == k))) for k in range(ops.dim)])
        series[f"detection_{eng}"] = (["time"] + [f"fraction_{k}" for k in range(ops.dim)], rows)
        report.append(f"  {eng}: fractions " + ", ".join(f"{f:.4f}" for f in stats.outcome_fraction)
                      + " (Born " + ", ".join(f"{b:.4f}" for b in born) + ")")
    if len(fractions) == 2:
        (f1, s1), (f2, s2) = fractions.values()
        comb = np.sqrt(s1**2 + s2**2)
        res["engine_difference_sigma"] = (np.abs(f1 - f2) / np.where(comb > 0, comb, 1.0)).tolist()
        ok &= bool(np.all(np.abs(f1 - f2) <= 3 * comb))
    report.append(f"  checks {'passed' if ok else 'FAILED'}")
    return ExperimentOutput(res, series, report, bool(ok))


def offdiag_decay(sc: Scenario, jobs: int = 1, deep: bool = False) -> ExperimentOutput:
    p = sc.parameters
    psi, ops, grid = _toy_setup(p)
    n = p["trajectories"] * (10 if deep else 1)
    steps = np.unique(np.linspace(0, grid.n_steps, p["n_times"] + 1).astype(int))[1:]
    batch = run_nonlinear_parallel(psi, ops, grid, sc.seed, n, jobs, record_steps=steps)
    stats = mc_ensemble_density(batch)
    rho0 = np.outer(psi.amplitudes, psi.amplitudes) / np.sum(psi.amplitudes**2)
    a = ops.eigenvalues[0]
    rows, zs = [], []
    for r, t in enumerate(stats.times):
        for q, (j, k) in enumerate(stats.pairs):
            pred = abs(rho0[j, k]) * math.exp(-0.5 * ops.rate * t * (a[j] - a[k]) ** 2)
            mc = abs(stats.offdiag_series[r, q])
            err = stats.offdiag_stderr[r, q]
            z = (mc - pred) / err if err > 0 else (0.0 if mc == pred else math.inf)
            zs.append(z)
            rows.append([float(t), j, k, mc, float(err), pred, z])
    ok = bool(np.all(np.abs(zs) <= 3))
    res = {"times": stats.times.tolist(), "max_abs_z": float(np.max(np.abs(zs))), "trajectories": n}
    report = [f"scenario {sc.name}: offdiag_decay, max |z| = {res['max_abs_z']:.2f}"]
    return ExperimentOutput(res, {"offdiag": (["time", "j", "k", "mc_abs", "stderr", "analytic", "z"], rows)},
                            report, ok)


def nonmarkov_compare(sc: Scenario, jobs: int = 1, deep: bool = False) -> ExperimentOutput:
    p = sc.parameters
    psi, ops, grid = _toy_setup(p)
    alpha, lam, t = p["alpha"], p["lambda"], p["t_final"]
    A = ops.operators[0]
    kernel = Kernel.ornstein_uhlenbeck(alpha)
    noise = sample_colored(grid, kernel, sc.seed, 0)
    closed = evolve_nonmarkovian_closed(psi, A, lam, alpha, noise)
    tau = ou_effective_time(alpha, t)
    bprime = ou_weighted_noise(noise, alpha)
    markov = closed_form_simple(psi, A, lam, t, bprime)
    discrete = evolve_nonmarkovian(psi, A, lam, noise, kernel).state

    def unit(v):
        x = np.abs(v.amplitudes)
        return x / np.linalg.norm(x)

    u_closed, u_markov, u_disc = unit(closed), unit(markov), unit(discrete)
    rel_markov = float(np.max(np.abs(u_closed - u_markov) / np.maximum(u_closed, 1e-300)))
    rel_disc = float(np.max(np.abs(u_closed - u_disc) / np.maximum(u_closed, 1e-300)))
    quad = kernel_double_integral(kernel, t)
    res = {"effective_time": tau, "double_integral_quadrature": quad,
           "effective_time_rel_error": abs(quad - tau) / tau, "b_prime": bprime,
           "closed_amplitudes": u_closed.tolist(), "markov_amplitudes": u_markov.tolist(),
           "discrete_amplitudes": u_disc.tolist(), "closed_vs_markov_rel": rel_markov,
           "closed_vs_discrete_rel": rel_disc, "alpha_t": alpha * t}
    ok = res["effective_time_rel_error"] <= 1e-8 and (alpha * t < 100 or rel_markov <= 0.02)
    ts = np.linspace(0, t, 101)[1:]
    rows = [[float(x), ou_effective_time(alpha, float(x)), float(x)] for x in ts]
    report = [f"scenario {sc.name}: nonmarkov_compare, alpha t = {alpha * t:g}, "
              f"closed vs Markov {rel_markov:.3g}, closed vs discretized {rel_disc:.3g}"]
    return ExperimentOutput(res, {"effective_time": (["t", "effective_time", "markov_time"], rows)}, report,
                            bool(ok))


def _grw(p) -> csl_model.CslParameters:
    return csl_model.CslParameters(lam=p["lambda"], a=p["a"])


def csl_rates(sc: Scenario, jobs: int = 1, deep: bool = False) -> ExperimentOutput:
    p = sc.parameters
    params = _grw(p)
    a = params.a
    h = p["spacing"] or a / 2
    mass = p["mass"] or units.M_PROTON
    n = p["clump_n"]
    sep = p["separation"]
    lat = csl_model.LatticeMassDistribution.empty((0, 0, 0), (sep, 0, 0), h)
    d1, d2 = lat.with_point((0, 0, 0), n), lat.with_point((sep, 0, 0), n)
    clump_lattice = csl_model.offdiag_decay_rate(d1, d2, params)
    clump_formula = csl_model.clump_rate(n, sep, params)
    side, rho = p["cube_side"], p["density"]
    gap = side + 2 * csl_model.TRUNCATE * a
    lat = csl_model.LatticeMassDistribution.empty((0, 0, 0), (side + gap + side, side, side), h)
    c1 = lat.with_box((0, 0, 0), (side, side, side), rho)
    c2 = lat.with_box((side + gap, 0, 0), (2 * side + gap, side, side), rho)
    cube = csl_model.offdiag_decay_rate(c1, c2, params)
    sharp = csl_model.extended_object_rate(rho, side**3, params)
    energy = csl_model.energy_gain_rate(p["n_particles"], mass, params)
    ge = csl_model.germanium_bound(p["germanium_limit"])
    res = {
        "clump_rate_lattice": {"value": clump_lattice, "unit": "s^-1"},
        "clump_rate_formula": {"value": clump_formula, "unit": "s^-1"},
        "cube_rate_lattice": {"value": cube, "unit": "s^-1"},
        "cube_rate_sharp_edge": {"value": sharp, "unit": "s^-1"},
        "cube_rate_finite_exact": {"value": csl_model.uniform_cube_rate(rho, side, params), "unit": "s^-1"},
        "cube_ratio": cube / sharp,
        "cube_collapse_time": {"value": 1.0 / cube, "unit": "s"},
        "energy_gain": {"value": energy, "unit": "eV/s"},
        "temperature_rise": {"value": csl_model.temperature_rise_rate(p["n_particles"], mass, params),
                             "unit": "K/s"},
        "germanium_bound_ge_over_gp": ge.ratio,
        "germanium_bound_in_me_over_mp": ge.in_mass_ratio,
    }
    seps = np.linspace(0, 10 * a, 101)
    rows = [[float(s), csl_model.clump_rate(n, float(s), params)] for s in seps]
    ok = (abs(clump_lattice / clump_formula - 1) <= 0.02 and abs(cube / sharp - 1) <= 0.10
          and abs(energy / 0.3 - 1) <= 0.2)
    report = [f"scenario {sc.name}: csl_rates",
              f"  clump lattice/formula = {clump_lattice / clump_formula:.6f}",
              f"  cube lattice/sharp-edge = {cube / sharp:.4f}, collapse time {1 / cube:.3g} s",
              f"  energy gain {energy:.4g} eV/s",
              f"  germanium bound {ge.in_mass_ratio:.3f} m_e/m_p"]
    return ExperimentOutput(res, {"clump_rate": (["separation_cm", "rate_per_s"], rows)}, report, bool(ok))


def gravity_compare(sc: Scenario, jobs: int = 1, deep: bool = False) -> ExperimentOutput:
    p = sc.parameters
    a, m, r = p["a"], p["mass"], p["separation"]
    h = p["spacing"] or a / 2
    lat = csl_model.LatticeMassDistribution.empty((0, 0, 0), (r, 0, 0), h, unit="mass")
    d1, d2 = lat.with_point((0, 0, 0), m), lat.with_point((r, 0, 0), m)
    res, ok = {}, True
    analytic = {
        "local_curvature": units.G_NEWTON * m * m / a * -math.expm1(-r * r / (4 * a * a)) / units.HBAR,
        "global_potential": units.G_NEWTON * m * m * (1 / (a * math.sqrt(math.pi)) - math.erf(r / (2 * a)) / r)
        / units.HBAR,
    }
    report = [f"scenario {sc.name}: gravity_compare"]
    for v in csl_model.GravityVariant:
        fast = csl_model.gravity_decay_exponent(d1, d2, v, a)
        brute = csl_model.gravity_pair_sum(d1, d2, v, a)
        res[v.value] = {"lattice": fast, "pair_sum": brute, "analytic": analytic[v.value], "unit": "s^-1"}
        ok &= abs(fast / analytic[v.value] - 1) <= 5e-3 and abs(fast / brute - 1) <= 1e-9
        report.append(f"  {v.value}: {fast:.6g} s^-1 (analytic {analytic[v.value]:.6g})")
    seps = np.linspace(0, 10 * a, 101)[1:]
    rows = [[float(s)] + [float(csl_model.gravity_kernel(s, v, a)) for v in csl_model.GravityVariant]
            for s in seps]
    return ExperimentOutput(res, {"gravity_kernels": (["r_cm", "local", "global"], rows)}, report, bool(ok))


def kernel_scan(sc: Scenario, jobs: int = 1, deep: bool = False) -> ExperimentOutput:
    p = sc.parameters
    x = np.linspace(p["x_min"], p["x_max"], p["n_points"])
    rows = [list(r) for r in rel_kernels.kernel_scan(p["kind"], p["a"], x)]
    vals = np.array([r[1] for r in rows])
    sign = np.nonzero(np.diff(np.sign(vals)) != 0)[0]
    zeros = [float(x[i] - vals[i] * (x[i + 1] - x[i]) / (vals[i + 1] - vals[i])) for i in sign]
    res = {"kind": p["kind"], "a": p["a"], "zeros": zeros, "n_points": int(x.size)}
    return ExperimentOutput(res, {"kernel": (["x", "value"], rows)},
                            [f"scenario {sc.name}: kernel_scan {p['kind']}, {len(zeros)} zero crossings"])


def parameter_report(sc: Scenario, jobs: int = 1, deep: bool = False) -> ExperimentOutput:
    rel = csl_model.parameter_relations(_grw(sc.parameters))
    d = rel.as_dict()
    lines = [f"scenario {sc.name}: parameter_report"] + [f"  {k} = {v['value']:.4g} {v['unit']}" for k, v in d.items()]
    return ExperimentOutput(d, {}, lines)


RUNNERS: dict[str, Callable[..., ExperimentOutput]] = {
    "gambler_ruin": gambler_ruin,
    "offdiag_decay": offdiag_decay,
    "nonmarkov_compare": nonmarkov_compare,
    "csl_rates": csl_rates,
    "gravity_compare": gravity_compare,
    "kernel_scan": kernel_scan,
    "parameter_report": parameter_report,
}

