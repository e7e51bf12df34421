"""Desk-scale convergence experiments: N-body vs BBGKY vs GP vs NLS.

Acceptance here is about trends over the accessible N-list, never rates:
the limits being shadowed are N -> infinity statements with unquantified
constants.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .collision import GaussianProfile, Potential, make_potential
from .errors import (HierakitError, InvalidConfigurationError, InvalidInputError,
                     InvalidParameterError, NonContractiveError)
from .marginals import (MarginalSequence, Trajectory, factorized_marginal, h_alpha_norm_array,
                        k_schedule, spacetime_norm)
from .nbody import WaveFunction, marginal_from_wavefunction, schrodinger_evolve, symmetrize_wavefunction
from .solver import HierarchyProblem, interaction, picard_solve
from .spectral import TorusGrid, fourier_forward, fourier_inverse

log = logging.getLogger(__name__)


# cubic NLS reference ---------------------------------------------------------

@dataclass
class NLSSolution:
    grid: TorusGrid
    times: np.ndarray
    fields: np.ndarray
    mass: np.ndarray
    energy: np.ndarray
    kappa0: float

    def marginal_levels(self, K: int) -> list:
        """Stacks of ``(|phi(t)><phi(t)|)^{tensor k}`` for k = 1..K."""
        return [np.stack([factorized_marginal(f, k, self.grid).data for f in self.fields])
                for k in range(1, K + 1)]

    def trajectory(self, K: int, xi: float = 0.3, alpha: float = 1.0) -> Trajectory:
        return Trajectory(self.grid, self.times, self.marginal_levels(K), xi, alpha, {"solver": "nls"})


def nls_mass(phi: np.ndarray, grid: TorusGrid) -> float:
    return float(grid.cell_volume * np.sum(np.abs(phi) ** 2))


def nls_energy(phi: np.ndarray, grid: TorusGrid, kappa0: float) -> float:
    """``int |grad phi|^2 + (kappa0/2) |phi|^4`` with the gradient taken spectrally."""
    spec = fourier_forward(phi, grid)
    kinetic = grid.cell_volume * np.sum(grid.k2 * np.abs(spec) ** 2)
    return float(kinetic + 0.5 * kappa0 * grid.cell_volume * np.sum(np.abs(phi) ** 4))


def nls_reference_solve(phi0: np.ndarray, grid: TorusGrid, kappa0: float = 1.0, T: float = 0.05,
                        steps: int = 100, sample_every: int = 1, norm_tol: float = 1e-8) -> NLSSolution:
    """Strang split-step for ``i d_t phi = -Delta phi + kappa0 |phi|^2 phi``."""
    phi = np.asarray(phi0, dtype=complex)
    grid.check(phi, 1, "initial field")
    if abs(nls_mass(phi, grid) - 1.0) > norm_tol:
        raise InvalidInputError(f"initial field must have unit L2 norm, got mass {nls_mass(phi, grid):.12g}")
    if steps < 1 or sample_every < 1 or steps % sample_every:
        raise InvalidParameterError("steps must be a positive multiple of sample_every")
    dt = T / steps
    kinetic = np.exp(-1j * dt * grid.k2)
    times, fields = [0.0], [phi]
    for n in range(1, steps + 1):
        phi = phi * np.exp(-0.5j * dt * kappa0 * np.abs(phi) ** 2)
        phi = fourier_inverse(fourier_forward(phi, grid) * kinetic, grid)
        phi = phi * np.exp(-0.5j * dt * kappa0 * np.abs(phi) ** 2)
        if n % sample_every == 0:
            times.append(n * dt)
            fields.append(phi)
    fields = np.array(fields)
    mass = np.array([nls_mass(f, grid) for f in fields])
    energy = np.array([nls_energy(f, grid, kappa0) for f in fields])
    return NLSSolution(grid, np.array(times), fields, mass, energy, kappa0)


# reports -------------------------------------------------------------------------

@dataclass
class ConvergenceReport:
    kind: str
    columns: list
    rows: list
    config: dict
    diagnostics: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows], dtype=float)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow([_cell(r.get(c)) for c in self.columns])
        return buf.getvalue()

    def sidecar(self) -> dict:
        return {"kind": self.kind, "config": self.config, "summary": self.summary,
                "failures": self.failures, "diagnostics": self.diagnostics}

    def plot_script(self, csv_name: str, y_columns=("delta_Gamma_Linf", "delta_B_L2")) -> str:
        """gnuplot script drawing the difference columns against N on log-log axes."""
        cols = [c for c in y_columns if c in self.columns]
        lines = ["set datafile separator ','", "set logscale xy", "set key top right",
                 "set xlabel 'N'", "set ylabel 'difference'", f"set title '{self.kind}'"]
        plots = [f"'{csv_name}' using 1:{self.columns.index(c) + 1} skip 1 with linespoints title '{c}'"
                 for c in cols]
        lines.append("plot " + ", \\\n     ".join(plots))
        return "\n".join(lines) + "\n"


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def trend_summary(Ns, values) -> dict:
    values = np.asarray(values, dtype=float)
    out = {"strictly_decreasing": bool(values.size > 1 and np.all(np.diff(values) < 0))}
    if values.size > 1 and np.all(values > 0):
        out["loglog_slope"] = float(np.polyfit(np.log(Ns), np.log(values), 1)[0])
    else:
        out["loglog_slope"] = None
    return out


def _map_jobs(fn, tasks, jobs: int):
    """Run tasks in order; exceptions are returned, not raised, so finished rows survive."""
    if jobs <= 1 or len(tasks) <= 1:
        out = []
        for t in tasks:
            try:
                out.append(fn(*t))
            except HierakitError as exc:
                out.append(exc)
        return out
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(fn, *t) for t in tasks]
        out = []
        for f in futures:
            try:
                out.append(f.result())
            except HierakitError as exc:
                out.append(exc)
        return out


def _failure(N, exc) -> dict:
    return {"N": N, "error": type(exc).__name__, "message": str(exc)}


def _per_k(traj: Trajectory, alpha: float, K: int) -> list:
    out = []
    for k in range(1, K + 1):
        if k <= traj.K:
            out.append(float(np.max(h_alpha_norm_array(traj.levels[k - 1], traj.grid, k, alpha))))
        else:
            out.append(0.0)
    return out


def _b_trajectory(problem: HierarchyProblem, traj: Trajectory) -> Trajectory:
    levels = interaction(problem, traj.levels, traj.grid.d)
    return Trajectory(traj.grid, traj.times, levels, traj.xi, traj.alpha, {})


# BBGKY vs GP ------------------------------------------------------------------------

def _bbgky_job(N, Gamma0, profile, beta, K, T, steps, alpha, xi, tol, max_iter, include_error,
               gp_traj, gp_b, self_compare):
    if self_compare:
        traj, btraj, diag = gp_traj, gp_b, gp_traj.diagnostics
    else:
        pot = make_potential(profile, beta, N, Gamma0.grid)
        problem = HierarchyProblem("bbgky", K, T, steps, alpha, xi, N=N, potential=pot,
                                   picard_tol=tol, picard_max_iter=max_iter, include_error=include_error)
        try:
            traj = picard_solve(problem, Gamma0)
        except NonContractiveError as exc:
            raise NonContractiveError(f"N={N}: {exc}", exc.ratios, N) from exc
        btraj = _b_trajectory(problem, traj)
        diag = traj.diagnostics
    diff = traj - gp_traj
    bdiff = btraj - gp_b
    return {"N": N, "delta_Gamma": spacetime_norm(diff, alpha, xi, "Linf"),
            "delta_B": spacetime_norm(bdiff, alpha, xi, "L2"), "per_k": _per_k(diff, alpha, K),
            "diagnostics": {"iterations": diag.get("iterations"),
                            "contraction_ratio": diag.get("contraction_ratio")}}


def run_bbgky_vs_gp(Gamma0: MarginalSequence, N_list, beta: float = 0.2, profile=None, K: int | None = None,
                    T: float = 0.1, steps: int = 20, alpha: float = 1.0, xi: float = 0.3,
                    kappa0: float | None = None, picard_tol: float = 1e-10, picard_max_iter: int = 60,
                    include_error: bool = True, self_compare: bool = False, jobs: int = 1) -> ConvergenceReport:
    """Solve the (K,N)-BBGKY and K-truncated GP hierarchies from shared data, per N.

    ``kappa0`` defaults to the profile integral so both hierarchies see the
    same coupling. ``self_compare`` replaces the BBGKY side by GP.
    """
    profile = GaussianProfile() if profile is None else profile
    N_list = sorted(int(n) for n in N_list)
    K = Gamma0.K if K is None else K
    if not N_list:
        raise InvalidConfigurationError("empty N list")
    if K > min(N_list):
        raise InvalidConfigurationError(f"K={K} exceeds the smallest N={min(N_list)}")
    Gamma0 = Gamma0 if Gamma0.K == K else _pad(Gamma0, K)
    if kappa0 is None:
        kappa0 = make_potential(profile, 0.0, 1, Gamma0.grid).integral
    gp_problem = HierarchyProblem("gp", K, T, steps, alpha, xi, kappa0=kappa0,
                                  picard_tol=picard_tol, picard_max_iter=picard_max_iter)
    gp_traj = picard_solve(gp_problem, Gamma0)
    gp_b = _b_trajectory(gp_problem, gp_traj)
    tasks = [(N, Gamma0, profile, beta, K, T, steps, alpha, xi, picard_tol, picard_max_iter,
              include_error, gp_traj, gp_b, self_compare) for N in N_list]
    results = _map_jobs(_bbgky_job, tasks, jobs)
    columns = ["N", "K_of_N", "T", "xi", "delta_Gamma_Linf", "delta_B_L2"] + \
        [f"per_k_H{alpha:g}_{k}" for k in range(1, K + 1)]
    rows, failures, diags = [], [], {}
    for N, res in zip(N_list, results):
        if isinstance(res, Exception):
            failures.append(_failure(N, res))
            continue
        row = {"N": N, "K_of_N": K, "T": T, "xi": xi, "delta_Gamma_Linf": res["delta_Gamma"],
               "delta_B_L2": res["delta_B"]}
        row.update({f"per_k_H{alpha:g}_{k}": v for k, v in enumerate(res["per_k"], start=1)})
        rows.append(row)
        diags[str(N)] = res["diagnostics"]
    diags["gp"] = {"iterations": gp_traj.diagnostics["iterations"],
                   "contraction_ratio": gp_traj.diagnostics["contraction_ratio"]}
    Ns = [r["N"] for r in rows]
    summary = {"delta_Gamma": trend_summary(Ns, [r["delta_Gamma_Linf"] for r in rows]),
               "delta_B": trend_summary(Ns, [r["delta_B_L2"] for r in rows])}
    config = {"K": K, "N_list": N_list, "beta": beta, "profile": profile.to_dict(), "T": T,
              "steps": steps, "alpha": alpha, "xi": xi, "kappa0": kappa0, "include_error": include_error,
              "self_compare": self_compare, "grid": Gamma0.grid.to_dict()}
    return ConvergenceReport("bbgky_vs_gp", columns, rows, config, diags, failures, summary)


def _pad(Gamma0: MarginalSequence, K: int) -> MarginalSequence:
    if Gamma0.K > K:
        return Gamma0.replace(list(Gamma0)[:K])
    raise InvalidInputError(f"initial data has {Gamma0.K} levels, need {K}")


# full derivation pipeline ------------------------------------------------------------

def nbody_envelope(grid: TorusGrid, N: int) -> None:
    """Particle counts allowed for exact evolution: N <= 5 up to M = 16, N = 6 only at M <= 8."""
    limit = 6 if grid.M <= 8 else 5
    if grid.d != 1 or grid.M > 16 or N > limit:
        raise InvalidConfigurationError(
            f"N={N} on d={grid.d}, M={grid.M} is outside the exact N-body envelope "
            "(d=1, M<=16, N<=5; N=6 needs M<=8)")


def _derivation_job(N, phi0, grid, profile, beta, K, K_gp, T, steps, substeps, alpha, xi, xi_prime,
                    gp_traj, gp_b, kappa_zero):
    pot = Potential.zero(grid, N) if kappa_zero else make_potential(profile, beta, N, grid)
    wf = symmetrize_wavefunction(WaveFunction.product([phi0] * N, grid))
    times, states = schrodinger_evolve(wf, pot, T, steps * substeps, sample_every=substeps)
    top = min(K + 1, N)
    levels = [np.stack([marginal_from_wavefunction(s, k).data for s in states]) for k in range(1, top + 1)]
    # n*dt and linspace can disagree in the last ulp
    if not np.allclose(times, gp_traj.times, rtol=0, atol=1e-12 * T):
        raise InvalidInputError("N-body and GP sample times do not match")
    nb = Trajectory(grid, gp_traj.times, levels[:K], xi, alpha, {})
    diff = nb - gp_traj
    # B_N applied to the truncated N-body sequence against B applied to the GP solution
    problem = HierarchyProblem("bbgky", K, T, steps, alpha, xi, N=N, potential=pot)
    nb_b = _b_trajectory(problem, nb)
    bdiff = nb_b - gp_b
    # untruncated (B_N Gamma^Phi)^(K), feeding the truncation-tail bookkeeping
    full = HierarchyProblem("bbgky", top, T, steps, alpha, xi, N=N, potential=pot)
    full_b = interaction(full, levels, grid.d)[K - 1]
    bK = float(np.sqrt(np.dot(nb.quadrature, h_alpha_norm_array(full_b, grid, K, alpha) ** 2)))
    return {"N": N, "K": K, "delta_Gamma": spacetime_norm(diff, alpha, xi, "Linf"),
            "delta_B": spacetime_norm(bdiff, alpha, xi, "L2"), "per_k": _per_k(diff, alpha, K_gp),
            "surrogates": {"xi_K": xi**K, "K_xi_prime_K": K * xi_prime**K,
                           "tail_bound": N ** (4 * beta) * K**2 * xi**K,
                           "comparison_term": xi_prime**K * K * bK, "B_N_Gamma_K_L2H1": bK}}


def run_derivation_experiment(phi0: np.ndarray, grid: TorusGrid, N_list, beta: float = 0.2,
                              profile=None, delta_prime: float | None = None, C0: float = 2.0,
                              xi: float = 0.3, xi_prime: float = 0.6, T: float = 0.05, steps: int = 10,
                              substeps: int = 20, alpha: float = 1.0, kappa0: float | None = None,
                              free: bool = False, jobs: int = 1) -> ConvergenceReport:
    """Exact N-body marginals against the GP hierarchy started from factorized data.

    ``K(N)`` comes from :func:`k_schedule`; the GP side is solved once at
    ``max K(N) + 1`` so every compared level still feels its collision term.
    ``free=True`` switches off both interactions.
    """
    profile = GaussianProfile() if profile is None else profile
    if not 0 < xi < xi_prime < 1:
        raise InvalidParameterError(f"need 0 < xi < xi' < 1, got xi={xi}, xi'={xi_prime}")
    delta_prime = 1 - 4 * beta if delta_prime is None else delta_prime
    N_list = sorted(int(n) for n in N_list)
    if not N_list:
        raise InvalidConfigurationError("empty N list")
    for N in N_list:
        nbody_envelope(grid, N)
    Ks = {N: min(k_schedule(N, delta_prime, C0), N) for N in N_list}
    K_gp = max(Ks.values()) + 1
    phi0 = np.asarray(phi0, dtype=complex)
    if kappa0 is None:
        kappa0 = 0.0 if free else make_potential(profile, 0.0, 1, grid).integral
    Gamma0 = MarginalSequence.factorized(phi0, K_gp, grid, xi, alpha)
    gp_problem = HierarchyProblem("gp", K_gp, T, steps, alpha, xi, kappa0=kappa0)
    gp_traj = picard_solve(gp_problem, Gamma0)
    gp_b = _b_trajectory(gp_problem, gp_traj)
    tasks = [(N, phi0, grid, profile, beta, Ks[N], K_gp, T, steps, substeps, alpha, xi, xi_prime,
              gp_traj, gp_b, free) for N in N_list]
    results = _map_jobs(_derivation_job, tasks, jobs)
    columns = ["N", "K_of_N", "T", "xi", "delta_Gamma_Linf", "delta_B_L2"] + \
        [f"per_k_H{alpha:g}_{k}" for k in range(1, K_gp + 1)] + \
        ["xi_K", "K_xi_prime_K", "tail_bound", "comparison_term"]
    rows, failures, diags = [], [], {}
    for N, res in zip(N_list, results):
        if isinstance(res, Exception):
            failures.append(_failure(N, res))
            continue
        row = {"N": N, "K_of_N": res["K"], "T": T, "xi": xi, "delta_Gamma_Linf": res["delta_Gamma"],
               "delta_B_L2": res["delta_B"]}
        row.update({f"per_k_H{alpha:g}_{k}": v for k, v in enumerate(res["per_k"], start=1)})
        row.update({c: res["surrogates"][c] for c in ("xi_K", "K_xi_prime_K", "tail_bound", "comparison_term")})
        rows.append(row)
        diags[str(N)] = res["surrogates"]
    Ns = [r["N"] for r in rows]
    summary = {"delta_Gamma": trend_summary(Ns, [r["delta_Gamma_Linf"] for r in rows]),
               "gamma1": trend_summary(Ns, [r[f"per_k_H{alpha:g}_1"] for r in rows]),
               "K_gp": K_gp}
    config = {"N_list": N_list, "beta": beta, "profile": profile.to_dict(), "delta_prime": delta_prime,
              "C0": C0, "xi": xi, "xi_prime": xi_prime, "T": T, "steps": steps, "substeps": substeps,
              "alpha": alpha, "kappa0": kappa0, "free": free, "grid": grid.to_dict()}
    return ConvergenceReport("derivation", columns, rows, config, diags, failures, summary)


def report_files(report: ConvergenceReport, stem: str, plot: bool = False) -> dict:
    """File name -> text content for a report (CSV, JSON sidecar, optional gnuplot script)."""
    files = {f"{stem}.csv": report.to_csv(),
             f"{stem}.json": json.dumps(report.sidecar(), indent=2, sort_keys=True, default=_json_default) + "\n"}
    if plot:
        files[f"{stem}.gp"] = report.plot_script(f"{stem}.csv")
    return files


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, float) and math.isnan(obj):
        return None
    raise TypeError(f"cannot serialize {type(obj).__name__}")
