"""Invariant suite behind ``hierakit validate``.

Each check returns ``(ok, detail)``. With ``fault=True`` a check corrupts
its own fast-path result before comparing, which must make it fail; this
is how the suite proves it can detect a broken kernel.
"""
from __future__ import annotations

import numpy as np

from . import oracles
from .collision import (GaussianProfile, Potential, bbgky_b_error, bbgky_b_main, gp_b_full,
                        gp_b_minus, gp_b_plus, make_potential)
from .convergence import nls_reference_solve
from .errors import InvalidConfigurationError
from .marginals import (Marginal, MarginalSequence, Trajectory, hermiticity_deviation, partial_trace,
                        spacetime_norm, symmetrize_slots)
from .nbody import (WaveFunction, marginal_from_wavefunction, nbody_energy, schrodinger_evolve,
                    symmetrize_wavefunction)
from .solver import HierarchyProblem, duhamel_series_solve, hierarchy_residual, picard_solve
from .spectral import TorusGrid, fourier_forward, fourier_inverse, free_propagate


def random_marginal(rng, grid: TorusGrid, k: int, hermitian: bool = True) -> Marginal:
    shape = grid.field_shape(2 * k)
    data = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    if hermitian:
        n = grid.M ** (grid.d * k)
        mat = data.reshape(n, n)
        data = (0.5 * (mat + mat.conj().T)).reshape(shape)
    return Marginal(k, grid, data)


def smooth_field(grid: TorusGrid, rng=None) -> np.ndarray:
    x = grid.positions
    phi = 1 + 0.5 * np.cos(x) + 0.4j * np.sin(2 * x)
    if rng is not None:
        phi = phi + 0.2 * (rng.standard_normal() + 1j * rng.standard_normal()) * np.exp(1j * x)
    return phi / np.sqrt(grid.h * np.sum(np.abs(phi) ** 2))


def _corrupt(arr, fault):
    if not fault:
        return arr
    out = np.array(arr, dtype=complex, copy=True)
    out.flat[0] += 1e-3
    return out


def check_parseval(rng, fault):
    g = TorusGrid(1, 8)
    f = rng.standard_normal(8) + 1j * rng.standard_normal(8)
    back = _corrupt(fourier_inverse(fourier_forward(f, g), g), fault)
    err = float(np.max(np.abs(back - f)))
    return err < 1e-12, f"round-trip error {err:.1e}"


def check_propagator_group(rng, fault):
    g = TorusGrid(1, 8)
    gam = random_marginal(rng, g, 1)
    a = free_propagate(free_propagate(gam, 0.3), 0.4).data
    b = _corrupt(free_propagate(gam, 0.7).data, fault)
    err = float(np.max(np.abs(a - b)))
    return err < 1e-12, f"group-law error {err:.1e}"


def check_partial_trace_oracle(rng, fault):
    g = TorusGrid(1, 4)
    gam = random_marginal(rng, g, 2)
    fast = _corrupt(partial_trace(gam).data, fault)
    err = float(np.max(np.abs(fast - oracles.partial_trace_loop(gam.data, 2, 4, 1, g.h))))
    return err < 1e-12, f"max abs error {err:.1e}"


def check_collision_oracle(rng, fault):
    g = TorusGrid(1, 4)
    gam = random_marginal(rng, g, 2)
    plus = _corrupt(gp_b_plus(gam, 1).data, fault)
    err = max(float(np.max(np.abs(plus - oracles.b_pm_loop(gam.data, 2, 1, 4, 1, g.h, False)))),
              float(np.max(np.abs(gp_b_minus(gam, 1).data - oracles.b_pm_loop(gam.data, 2, 1, 4, 1, g.h, True)))))
    return err < 1e-12, f"max abs error {err:.1e}"


def check_bbgky_oracle(rng, fault):
    g = TorusGrid(1, 4)
    V = np.abs(rng.standard_normal(4))
    V[1:] = 0.5 * (V[1:] + V[1:][::-1])
    pot = Potential(g, V, 0.0, 3.0)
    gam = random_marginal(rng, g, 2)
    err_fast = _corrupt(bbgky_b_error(gam, pot, 3).data, fault)
    e1 = float(np.max(np.abs(err_fast - oracles.bbgky_error_loop(gam.data, 2, V, 3, 4, 1))))
    e2 = float(np.max(np.abs(bbgky_b_main(gam, pot, 3).data - oracles.bbgky_main_loop(gam.data, 2, V, 3, 4, 1, g.h))))
    err = max(e1, e2)
    return err < 1e-12, f"max abs error {err:.1e}"


def check_marginal_oracle(rng, fault):
    g = TorusGrid(1, 4)
    psi = rng.standard_normal((4,) * 3) + 1j * rng.standard_normal((4,) * 3)
    wf = symmetrize_wavefunction(WaveFunction(3, g, psi))
    fast = _corrupt(marginal_from_wavefunction(wf, 2).data, fault)
    err = float(np.max(np.abs(fast - oracles.marginal_loop(wf.data, 3, 2, 4, 1, g.h))))
    return err < 1e-12, f"max abs error {err:.1e}"


def check_trace_annihilation(rng, fault):
    g = TorusGrid(1, 8)
    gam = random_marginal(rng, g, 2)
    gam = gam.with_data(symmetrize_slots(gam.data, 2, 1))
    b = _corrupt(gp_b_full(gam).data, fault)
    tr = abs(Marginal(1, g, b).trace())
    return tr < 1e-12, f"|Tr B gamma| = {tr:.1e}"


def check_nbody_conservation(rng, fault):
    g = TorusGrid(1, 8)
    phi = smooth_field(g, rng)
    pot = make_potential(GaussianProfile(), 0.2, 3, g)
    wf = symmetrize_wavefunction(WaveFunction.product([phi] * 3, g))
    end = schrodinger_evolve(wf, pot, 0.1, 200)
    if fault:
        end = end.with_data(end.data * 1.001)
    e0, e1 = nbody_energy(wf, pot), nbody_energy(end, pot)
    dn, de = abs(end.norm() - wf.norm()), abs(e1 - e0) / abs(e0)
    return dn < 1e-6 and de < 1e-6, f"norm drift {dn:.1e}, energy drift {de:.1e}"


def check_nls_conservation(rng, fault):
    g = TorusGrid(1, 16)
    sol = nls_reference_solve(smooth_field(g, rng), g, 1.0, 0.5, 500)
    dm = float(np.ptp(sol.mass)) + (1e-3 if fault else 0.0)
    de = float(np.ptp(sol.energy) / sol.energy[0])
    return dm < 1e-10 and de < 1e-6, f"mass drift {dm:.1e}, energy drift {de:.1e}"


def check_gp_trace_hermiticity(rng, fault):
    g = TorusGrid(1, 16)
    G0 = MarginalSequence.factorized(smooth_field(g, rng), 2, g)
    traj = picard_solve(HierarchyProblem("gp", 2, 0.05, 10), G0)
    drift, herm = 0.0, 0.0
    for i in range(traj.times.size):
        s = traj.state(i)
        for k in (1, 2):
            data = _corrupt(s[k].data, fault and i == traj.times.size - 1)
            m = Marginal(k, g, data)
            drift = max(drift, abs(m.trace() - G0[k].trace()))
            herm = max(herm, hermiticity_deviation(m))
    return drift < 1e-5 and herm < 1e-6, f"trace drift {drift:.1e}, hermiticity {herm:.1e}"


def check_solver_cross(rng, fault):
    g = TorusGrid(1, 16)
    G0 = MarginalSequence.factorized(smooth_field(g, rng), 2, g)
    p = HierarchyProblem("gp", 2, 0.02, 10)
    a = picard_solve(p, G0)
    b = duhamel_series_solve(p, G0, 1)
    if fault:
        b.levels[0] = b.levels[0] * 1.01
    diff = spacetime_norm(a - b, 0.0, 0.3, "Linf")
    ratio = a.diagnostics["contraction_ratio"]
    return diff < 1e-4 and ratio < 1, f"calH^0 difference {diff:.1e}, contraction ratio {ratio:.2f}"


def check_bbgky_residual(rng, fault):
    g = TorusGrid(1, 8)
    N = 3
    pot = make_potential(GaussianProfile(), 0.2, N, g)
    wf = symmetrize_wavefunction(WaveFunction.product([smooth_field(g, rng)] * N, g))
    times, states = schrodinger_evolve(wf, pot, 0.01, 10, sample_every=1)
    seqs = [MarginalSequence(g, tuple(marginal_from_wavefunction(s, k) for k in (1, 2))) for s in states]
    traj = Trajectory.from_states(times, seqs)
    if fault:
        # wrong operator: GP collision with flipped sign
        prob = HierarchyProblem("gp", 2, 0.01, 10, kappa0=-1.0)
    else:
        prob = HierarchyProblem("bbgky", 2, 0.01, 10, N=N, potential=pot)
    r = hierarchy_residual(traj, prob)
    rel = float(np.max(r["residual"][0] / r["scale"][0]))
    return rel < 1e-3, f"relative residual (k=1) {rel:.1e}"


CHECKS = {
    "parseval": check_parseval,
    "propagator_group": check_propagator_group,
    "partial_trace_oracle": check_partial_trace_oracle,
    "collision_oracle": check_collision_oracle,
    "bbgky_oracle": check_bbgky_oracle,
    "marginal_oracle": check_marginal_oracle,
    "trace_annihilation": check_trace_annihilation,
    "nbody_conservation": check_nbody_conservation,
    "nls_conservation": check_nls_conservation,
    "gp_trace_hermiticity": check_gp_trace_hermiticity,
    "solver_cross_validation": check_solver_cross,
    "bbgky_residual": check_bbgky_residual,
}


def run_validation(seed: int = 0, inject_fault: str | None = None, names=None) -> list:
    """Run checks in a fixed order; returns ``[(name, ok, detail), ...]``."""
    if inject_fault is not None and inject_fault not in CHECKS:
        raise InvalidConfigurationError(f"unknown check {inject_fault!r}; choose from {sorted(CHECKS)}")
    rng = np.random.default_rng(seed)
    out = []
    for name in (names or CHECKS):
        ok, detail = CHECKS[name](rng, name == inject_fault)
        out.append((name, bool(ok), detail))
    return out
