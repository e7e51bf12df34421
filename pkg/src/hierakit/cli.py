"""Command-line entry point: ``hierakit {nls,hierarchy,converge,validate}``.

Exit codes: 0 success, 1 failed invariant (validate), 2 invalid configuration,
3 numerical failure, 4 non-contracting Picard iteration, 5 partial failure
of an N-sweep (completed rows are still written).
"""
from __future__ import annotations

import argparse
import copy
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import io as hio
from .collision import PROFILES, Potential, make_potential, profile_from_dict
from .convergence import (nls_reference_solve, report_files, run_bbgky_vs_gp,
                          run_derivation_experiment)
from .errors import (DegenerateInputError, HierakitError, InvalidConfigurationError, InvalidInputError,
                     InvalidParameterError, NonContractiveError, ResourceError, UnsupportedDepthError)
from .marginals import MarginalSequence, level_norms
from .solver import (MAX_DUHAMEL_DEPTH, HierarchyProblem, duhamel_series_solve, hierarchy_residual,
                     picard_solve)
from .spectral import TorusGrid, fourier_forward, fourier_inverse, set_workers

log = logging.getLogger("hierakit")

EXIT_OK, EXIT_INVARIANT, EXIT_CONFIG, EXIT_NUMERIC, EXIT_NONCONTRACT, EXIT_PARTIAL = 0, 1, 2, 3, 4, 5
CONFIG_VERSION = 1

DEFAULT_CONFIG = {
    "version": CONFIG_VERSION,
    "grid": {"d": 1, "M": 16, "L": 2 * math.pi},
    "potential": {"profile": {"name": "gaussian", "width": 0.6}, "beta": 0.2, "file": None},
    "hierarchy": {"kind": "gp", "K": 2, "N": 64, "kappa0": 1.0, "alpha": 1.0, "xi": 0.3,
                  "include_error": True},
    "solver": {"method": "picard", "T": 0.05, "steps": 20, "picard_tol": 1e-10,
               "picard_max_iter": 60, "J": 1},
    "experiment": {"mode": "bbgky_vs_gp", "N_list": [16, 64, 256], "delta_prime": None, "C0": 2.0,
                   "xi_prime": 0.6, "substeps": 20,
                   "initial": {"type": "default", "modes": 3, "file": None}},
    "output": {"stem": "report", "snapshots": 5},
}

_EXPERIMENT_MODES = ("bbgky_vs_gp", "self", "derivation", "free")


def _error_exit(exc: Exception) -> int:
    if isinstance(exc, NonContractiveError):
        return EXIT_NONCONTRACT
    if isinstance(exc, (InvalidConfigurationError, InvalidParameterError, InvalidInputError,
                        UnsupportedDepthError, DegenerateInputError, ResourceError)):
        return EXIT_CONFIG
    return EXIT_NUMERIC


# configuration ----------------------------------------------------------------------

def _merge(defaults: dict, given: dict, where: str) -> dict:
    out = copy.deepcopy(defaults)
    for key, value in given.items():
        if key not in defaults:
            raise InvalidConfigurationError(f"unknown key {where}{key!r}")
        if isinstance(defaults[key], dict) and key not in ("profile",):
            if not isinstance(value, dict):
                raise InvalidConfigurationError(f"{where}{key!r} must be an object")
            out[key] = _merge(defaults[key], value, f"{where}{key}.")
        else:
            out[key] = value
    return out


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """Parse and validate a JSON config; unknown keys and bad values raise."""
    try:
        given = json.loads(text) if text.strip() else {}
    except json.JSONDecodeError as exc:
        raise InvalidConfigurationError(f"{source}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    if not isinstance(given, dict):
        raise InvalidConfigurationError(f"{source}: top level must be a JSON object")
    version = given.get("version", CONFIG_VERSION)
    if version != CONFIG_VERSION:
        raise InvalidConfigurationError(f"{source}: unsupported config version {version!r}")
    cfg = _merge(DEFAULT_CONFIG, given, "")
    validate_config(cfg)
    return cfg


def load_config(path) -> dict:
    if path is None:
        return parse_config_text("{}")
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InvalidConfigurationError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text, str(path))


def _need(cond: bool, msg: str) -> None:
    if not cond:
        raise InvalidConfigurationError(msg)


def _is_num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def validate_config(cfg: dict) -> None:
    g = cfg["grid"]
    _need(g["d"] in (1, 2, 3), "grid.d must be 1, 2 or 3")
    _need(isinstance(g["M"], int) and g["M"] >= 2 and g["M"] & (g["M"] - 1) == 0, "grid.M must be a power of two")
    _need(_is_num(g["L"]) and g["L"] > 0, "grid.L must be positive")
    p = cfg["potential"]
    _need(_is_num(p["beta"]) and 0 <= p["beta"] < 1, "potential.beta must lie in [0, 1)")
    if p["file"] is None:
        _need(isinstance(p["profile"], dict) and p["profile"].get("name", "gaussian") in PROFILES,
              f"potential.profile.name must be one of {sorted(PROFILES)}")
        try:
            profile_from_dict(p["profile"])
        except TypeError as exc:
            raise InvalidConfigurationError(f"potential.profile: {exc}") from exc
    h = cfg["hierarchy"]
    _need(h["kind"] in ("gp", "bbgky"), "hierarchy.kind must be 'gp' or 'bbgky'")
    _need(isinstance(h["K"], int) and h["K"] >= 1, "hierarchy.K must be a positive integer")
    _need(isinstance(h["N"], int) and h["N"] >= 1, "hierarchy.N must be a positive integer")
    _need(_is_num(h["kappa0"]), "hierarchy.kappa0 must be a number")
    _need(_is_num(h["alpha"]) and h["alpha"] >= 0, "hierarchy.alpha must be >= 0")
    _need(_is_num(h["xi"]) and 0 < h["xi"] < 1, "hierarchy.xi must lie in (0, 1)")
    s = cfg["solver"]
    _need(s["method"] in ("picard", "duhamel"), "solver.method must be 'picard' or 'duhamel'")
    _need(_is_num(s["T"]) and s["T"] > 0, "solver.T must be positive")
    _need(isinstance(s["steps"], int) and s["steps"] >= 2, "solver.steps must be an integer >= 2")
    _need(isinstance(s["J"], int) and 0 <= s["J"], "solver.J must be a non-negative integer")
    _need(s["J"] <= MAX_DUHAMEL_DEPTH, f"solver.J={s['J']} exceeds the supported Duhamel depth {MAX_DUHAMEL_DEPTH}")
    _need(_is_num(s["picard_tol"]) and s["picard_tol"] > 0, "solver.picard_tol must be positive")
    _need(isinstance(s["picard_max_iter"], int) and s["picard_max_iter"] >= 2, "solver.picard_max_iter must be >= 2")
    e = cfg["experiment"]
    _need(e["mode"] in _EXPERIMENT_MODES, f"experiment.mode must be one of {_EXPERIMENT_MODES}")
    _need(isinstance(e["N_list"], list) and e["N_list"] and all(isinstance(n, int) and n >= 2 for n in e["N_list"]),
          "experiment.N_list must be a non-empty list of integers >= 2")
    _need(e["delta_prime"] is None or (_is_num(e["delta_prime"]) and 0 < e["delta_prime"] < 1),
          "experiment.delta_prime must lie in (0, 1) or be null")
    _need(_is_num(e["C0"]) and e["C0"] > 1, "experiment.C0 must exceed 1")
    _need(_is_num(e["xi_prime"]) and h["xi"] < e["xi_prime"] < 1, "experiment.xi_prime must lie in (xi, 1)")
    _need(isinstance(e["substeps"], int) and e["substeps"] >= 1, "experiment.substeps must be >= 1")
    init = e["initial"]
    _need(isinstance(init, dict) and set(init) <= {"type", "modes", "file"}, "experiment.initial has unknown keys")
    _need(init.get("type") in ("default", "random", "file"), "experiment.initial.type must be default, random or file")
    o = cfg["output"]
    _need(isinstance(o["stem"], str) and o["stem"] and "/" not in o["stem"], "output.stem must be a plain file stem")
    _need(isinstance(o["snapshots"], int) and o["snapshots"] >= 0, "output.snapshots must be >= 0")


def build_grid(cfg) -> TorusGrid:
    g = cfg["grid"]
    return TorusGrid(g["d"], g["M"], float(g["L"]))


def build_profile(cfg):
    p = cfg["potential"]
    if p["file"] is not None:
        return hio.load_profile(p["file"])
    return profile_from_dict(p["profile"])


def initial_field(cfg, grid: TorusGrid, rng: np.random.Generator) -> np.ndarray:
    """Unit-norm one-particle field chosen by ``experiment.initial``."""
    init = {**DEFAULT_CONFIG["experiment"]["initial"], **cfg["experiment"]["initial"]}
    xs = np.meshgrid(*([grid.positions] * grid.d), indexing="ij")
    if init["type"] == "file":
        fgrid, phi = hio.load_field(init["file"])
        if fgrid != grid:
            raise InvalidConfigurationError("initial field file lives on a different grid")
    elif init["type"] == "random":
        nmax = int(init["modes"])
        spec = np.zeros(grid.field_shape(1), dtype=complex)
        m = grid.mode_indices
        mm = np.meshgrid(*([m] * grid.d), indexing="ij")
        mask = sum(np.abs(a) for a in mm) <= nmax
        decay = np.exp(-0.5 * sum(a.astype(float) ** 2 for a in mm))
        spec[mask] = (rng.standard_normal(mask.sum()) + 1j * rng.standard_normal(mask.sum())) * decay[mask]
        spec[(0,) * grid.d] += 2.0
        phi = fourier_inverse(spec, grid)
    else:
        phi = 1 + 0.5 * sum(np.cos(x) for x in xs) + 0.4j * sum(np.sin(2 * x) for x in xs)
    phi = np.asarray(phi, dtype=complex)
    norm = math.sqrt(grid.cell_volume * np.sum(np.abs(phi) ** 2))
    if norm == 0:
        raise DegenerateInputError("initial field vanishes")
    return phi / norm


def _potential(cfg, grid: TorusGrid, N: int) -> Potential:
    return make_potential(build_profile(cfg), cfg["potential"]["beta"], N, grid)


def build_problem(cfg, grid: TorusGrid) -> HierarchyProblem:
    h, s = cfg["hierarchy"], cfg["solver"]
    common = dict(alpha=h["alpha"], xi=h["xi"], picard_tol=s["picard_tol"], picard_max_iter=s["picard_max_iter"])
    if h["kind"] == "gp":
        return HierarchyProblem("gp", h["K"], s["T"], s["steps"], kappa0=h["kappa0"], **common)
    return HierarchyProblem("bbgky", h["K"], s["T"], s["steps"], N=h["N"], potential=_potential(cfg, grid, h["N"]),
                            include_error=h["include_error"], **common)


# commands -------------------------------------------------------------------------------

def _snapshot_indices(n_samples: int, count: int) -> list:
    if count <= 0:
        return []
    return sorted(set(np.linspace(0, n_samples - 1, min(count, n_samples)).round().astype(int).tolist()))


def cmd_nls(cfg, out: Path, args) -> int:
    grid = build_grid(cfg)
    rng = np.random.default_rng(args.seed)
    phi0 = initial_field(cfg, grid, rng)
    kappa0, T, steps = cfg["hierarchy"]["kappa0"], cfg["solver"]["T"], cfg["solver"]["steps"]
    sol = nls_reference_solve(phi0, grid, kappa0, T, steps)
    if not np.all(np.isfinite(sol.fields)):
        log.error("non-finite values in the NLS solution")
        return EXIT_NUMERIC
    out.mkdir(parents=True, exist_ok=True)
    lines = ["t,mass,energy"] + [f"{t!r},{m!r},{e!r}" for t, m, e in
                                 zip(sol.times.tolist(), sol.mass.tolist(), sol.energy.tolist())]
    (out / "nls_conserved.csv").write_text("\n".join(lines) + "\n")
    snap = out / "nls_fields"
    snap.mkdir(exist_ok=True)
    for i in _snapshot_indices(sol.times.size, cfg["output"]["snapshots"]):
        hio.save_field(snap / f"field_{i:05d}.hkt", grid, sol.fields[i], t=float(sol.times[i]))
    mass_drift = float(np.max(np.abs(sol.mass - sol.mass[0])))
    energy_drift = float(np.max(np.abs(sol.energy - sol.energy[0])) / max(abs(sol.energy[0]), 1e-300))
    print(f"nls: {steps} steps to T={T}, mass drift {mass_drift:.3e}, relative energy drift {energy_drift:.3e}")
    if args.self_test:
        checks = [("mass conserved to 1e-10", mass_drift < 1e-10)]
        if kappa0 == 0:
            spec = fourier_forward(phi0, grid) * np.exp(-1j * T * grid.k2)
            err = float(np.max(np.abs(fourier_inverse(spec, grid) - sol.fields[-1])))
            checks.append((f"free evolution matches exact phases (max err {err:.2e})", err < 1e-10))
        else:
            checks.append(("energy conserved to 1e-6", energy_drift < 1e-6))
        return _print_checks(checks, numeric_failure=True)
    return EXIT_OK


def cmd_hierarchy(cfg, out: Path, args) -> int:
    grid = build_grid(cfg)
    rng = np.random.default_rng(args.seed)
    problem = build_problem(cfg, grid)
    phi0 = initial_field(cfg, grid, rng)
    Gamma0 = MarginalSequence.factorized(phi0, problem.K, grid, problem.xi, problem.alpha)
    if cfg["solver"]["method"] == "duhamel":
        traj = duhamel_series_solve(problem, Gamma0, cfg["solver"]["J"])
    else:
        traj = picard_solve(problem, Gamma0)
    if not all(np.all(np.isfinite(lvl)) for lvl in traj.levels):
        log.error("non-finite values in the hierarchy trajectory")
        return EXIT_NUMERIC
    res = hierarchy_residual(traj, problem)
    norms = level_norms(traj, 0.0)
    extra = {"residual_H0": res["residual"], "residual_scale_H0": res["scale"],
             "trace_drift": [float(np.max(np.abs(_traces(lvl, grid, k) - _traces(lvl, grid, k)[0])))
                             for k, lvl in enumerate(traj.levels, start=1)],
             "level_H0_norms": norms, "seed": args.seed}
    hio.save_trajectory(out / "trajectory", traj, problem.describe(), extra)
    diag = traj.diagnostics
    print(f"hierarchy: {problem.kind} K={problem.K}, {diag.get('solver')} solver, "
          f"iterations {diag.get('iterations', '-')}, contraction ratio {diag.get('contraction_ratio', 0.0):.3e}, "
          f"max residual {float(np.max(res['residual'])):.3e}")
    if args.self_test:
        checks = [("trace drift < 1e-5", max(extra["trace_drift"]) < 1e-5)]
        return _print_checks(checks, numeric_failure=True)
    return EXIT_OK


def _traces(stack: np.ndarray, grid: TorusGrid, k: int) -> np.ndarray:
    n = grid.M ** (grid.d * k)
    mats = stack.reshape(stack.shape[0], n, n)
    return np.real(np.trace(mats, axis1=1, axis2=2)) * grid.cell_volume**k


def cmd_converge(cfg, out: Path, args) -> int:
    grid = build_grid(cfg)
    rng = np.random.default_rng(args.seed)
    e, h, s = cfg["experiment"], cfg["hierarchy"], cfg["solver"]
    phi0 = initial_field(cfg, grid, rng)
    profile = build_profile(cfg)
    if e["mode"] in ("derivation", "free"):
        report = run_derivation_experiment(
            phi0, grid, e["N_list"], cfg["potential"]["beta"], profile, e["delta_prime"], e["C0"],
            h["xi"], e["xi_prime"], s["T"], s["steps"], e["substeps"], h["alpha"],
            free=e["mode"] == "free", jobs=args.jobs)
    else:
        Gamma0 = MarginalSequence.factorized(phi0, h["K"], grid, h["xi"], h["alpha"])
        report = run_bbgky_vs_gp(Gamma0, e["N_list"], cfg["potential"]["beta"], profile, h["K"], s["T"],
                                 s["steps"], h["alpha"], h["xi"], None, s["picard_tol"], s["picard_max_iter"],
                                 h["include_error"], self_compare=e["mode"] == "self", jobs=args.jobs)
    report.config["seed"] = args.seed
    written = hio.write_text_files(out, report_files(report, cfg["output"]["stem"], plot=args.plot))
    for p in written:
        print(f"wrote {p}")
    for r in report.rows:
        print(f"N={r['N']:>5} K={r['K_of_N']} delta_Gamma={r['delta_Gamma_Linf']:.4e} delta_B={r['delta_B_L2']:.4e}")
    for f in report.failures:
        print(f"N={f['N']} failed: {f['error']}: {f['message']}", file=sys.stderr)
    if report.failures:
        if report.rows:
            return EXIT_PARTIAL
        kinds = {f["error"] for f in report.failures}
        return EXIT_NONCONTRACT if kinds == {"NonContractiveError"} else EXIT_NUMERIC
    return EXIT_OK


def cmd_validate(cfg, out: Path, args) -> int:
    from .validation import run_validation

    results = run_validation(seed=args.seed, inject_fault=args.inject_fault)
    checks = [(name, ok) for name, ok, _ in results]
    width = max(len(n) for n, _ in checks)
    for name, ok, detail in results:
        print(f"{name:<{width}}  {'PASS' if ok else 'FAIL'}  {detail}")
    failed = [n for n, ok in checks if not ok]
    if failed:
        print(f"failing invariants: {', '.join(failed)}", file=sys.stderr)
        return EXIT_INVARIANT
    return EXIT_OK


def _print_checks(checks, numeric_failure: bool = False) -> int:
    for name, ok in checks:
        print(f"self-test {'PASS' if ok else 'FAIL'}: {name}")
    if all(ok for _, ok in checks):
        return EXIT_OK
    return EXIT_NUMERIC if numeric_failure else EXIT_INVARIANT


COMMANDS = {"nls": cmd_nls, "hierarchy": cmd_hierarchy, "converge": cmd_converge, "validate": cmd_validate}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hierakit", description="Spectral BBGKY / GP hierarchy experiments")
    parser.add_argument("command", nargs="?", choices=sorted(COMMANDS))
    parser.add_argument("--config", help="JSON config (defaults apply to missing keys)")
    parser.add_argument("--out", default="hierakit-out", help="output directory")
    parser.add_argument("--jobs", type=int, default=1, help="worker processes for N-sweeps and FFT threads")
    parser.add_argument("--seed", type=int, default=0, help="seed for every random draw")
    parser.add_argument("--plot", action="store_true", help="also emit a gnuplot script")
    parser.add_argument("--self-test", action="store_true", help="run the command's built-in checks")
    parser.add_argument("--inject-fault", default=None, metavar="CHECK",
                        help="validate only: corrupt the named check to confirm it is detected")
    parser.add_argument("--print-defaults", action="store_true", help="print the default config and exit")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.print_defaults:
        print(json.dumps(DEFAULT_CONFIG, indent=2))
        return EXIT_OK
    if args.command is None:
        parser.print_usage(sys.stderr)
        print("error: a command is required", file=sys.stderr)
        return EXIT_CONFIG
    if args.jobs < 1 or not 0 <= args.seed < 2**64:
        print("error: --jobs must be >= 1 and --seed must fit in 64 bits", file=sys.stderr)
        return EXIT_CONFIG
    set_workers(args.jobs)
    try:
        cfg = load_config(args.config)
        return COMMANDS[args.command](cfg, Path(args.out), args)
    except HierakitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _error_exit(exc)
    except (FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
