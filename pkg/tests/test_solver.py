import itertools

import numpy as np
import pytest

from hierakit import (GaussianProfile, HierarchyProblem, Marginal, MarginalSequence, Trajectory, TorusGrid,
                      count_duhamel_summands, duhamel_series_solve, duhamel_term, free_propagate,
                      h_alpha_norm, hierarchy_residual, make_potential, nls_reference_solve, picard_solve,
                      spacetime_norm)
from hierakit.errors import (InvalidConfigurationError, InvalidInputError, InvalidParameterError,
                             NonContractiveError, UnsupportedDepthError)
from hierakit.marginals import h_alpha_norm_array, hermiticity_deviation
from hierakit.solver import (MAX_DUHAMEL_DEPTH, _free_stack, duhamel_integral, duhamel_terms,
                             enumerate_duhamel_strings, interaction)
from hierakit.spectral import fft_trailing, ifft_trailing

from conftest import rand_marginal, unit_field


@pytest.fixture
def gp_setup(grid16):
    phi = unit_field(grid16)
    return grid16, phi, MarginalSequence.factorized(phi, 2, grid16)


def small_sequence(rng, grid, K, scale=0.1):
    return MarginalSequence(grid, tuple(rand_marginal(rng, grid, k) * scale for k in range(1, K + 1)))


def test_problem_validation(grid8):
    pot = make_potential(GaussianProfile(), 0.2, 2, grid8)
    with pytest.raises(InvalidConfigurationError):
        HierarchyProblem("bbgky", 3, 0.1, 10, N=2, potential=pot)
    with pytest.raises(InvalidParameterError):
        HierarchyProblem("gp", 2, -0.1, 10)
    with pytest.raises(InvalidParameterError):
        HierarchyProblem("other", 2, 0.1, 10)
    assert HierarchyProblem("gp", 2, 0.1, 10).times.size == 11


def test_zero_coupling_is_free_evolution(gp_setup):
    g, _, G0 = gp_setup
    traj = picard_solve(HierarchyProblem("gp", 2, 0.1, 8, kappa0=0.0), G0)
    for i, t in enumerate(traj.times):
        for k in (1, 2):
            assert np.max(np.abs(traj.state(i)[k].data - free_propagate(G0[k], t).data)) < 1e-12


def test_gp_matches_nls(gp_setup):
    g, phi, G0 = gp_setup
    traj = picard_solve(HierarchyProblem("gp", 2, 0.05, 20), G0)
    nls = nls_reference_solve(phi, g, 1.0, 0.05, 200, sample_every=10)
    diff = traj.levels[0] - nls.marginal_levels(1)[0]
    assert np.max(h_alpha_norm_array(diff, g, 1, 1.0)) < 5e-3


def test_contraction_ratio_small_data(grid16):
    G0 = small_sequence(np.random.default_rng(7), grid16, 2)
    pot = make_potential(GaussianProfile(), 0.2, 16, grid16)
    traj = picard_solve(HierarchyProblem("bbgky", 2, 0.02, 10, N=16, potential=pot), G0)
    ratios = traj.diagnostics["ratios"]
    assert ratios and max(ratios[1:] or ratios) <= 0.9


def test_gp_truncation_is_nilpotent(gp_setup):
    _, _, G0 = gp_setup
    traj = picard_solve(HierarchyProblem("gp", 2, 0.05, 10), G0)
    assert traj.diagnostics["iterations"] == 2
    assert traj.K == 2


def test_non_contraction_raises(gp_setup, grid16):
    _, _, G0 = gp_setup
    pot = make_potential(GaussianProfile(), 0.2, 16, grid16)
    prob = HierarchyProblem("bbgky", 2, 1.0, 10, N=16, potential=pot, picard_max_iter=2)
    with pytest.raises(NonContractiveError) as err:
        picard_solve(prob, G0)
    assert "reduce T" in str(err.value)


def test_trace_and_hermiticity_along_trajectory(gp_setup):
    _, _, G0 = gp_setup
    traj = picard_solve(HierarchyProblem("gp", 2, 0.05, 10), G0)
    for i in range(traj.times.size):
        for k in (1, 2):
            m = traj.state(i)[k]
            assert abs(m.trace() - G0[k].trace()) < 1e-5
            assert hermiticity_deviation(m) < 1e-6


def _free_traj(G0, times):
    return Trajectory(G0.grid, times, [ifft_trailing(_free_stack(e, times), 2 * e.k * G0.grid.d) for e in G0])


def test_duhamel_term_basics(gp_setup):
    g, _, G0 = gp_setup
    prob = HierarchyProblem("gp", 2, 0.02, 8)
    Xi = _free_traj(G0, prob.times)
    assert np.array_equal(duhamel_term(Xi, 0, 1, 0.01, prob).data, Xi.level(1)[4])
    zero = Trajectory(g, prob.times, [np.zeros_like(a) for a in Xi.levels])
    assert not np.any(duhamel_term(zero, 1, 1, 0.02, prob).data)
    with pytest.raises(InvalidInputError):
        duhamel_term(Xi, 1, 1, 0.013, prob)
    with pytest.raises(UnsupportedDepthError):
        duhamel_term(Xi, MAX_DUHAMEL_DEPTH + 1, 1, 0.02, prob)


def test_duhamel_term_refinement(gp_setup):
    g, _, G0 = gp_setup
    t_end = 0.04

    def term(steps):
        prob = HierarchyProblem("gp", 2, t_end, steps)
        const = Trajectory(g, prob.times, [np.stack([e.data] * (steps + 1)) for e in G0])
        return duhamel_term(const, 1, 1, t_end, prob).data

    fine = term(64)
    e1 = np.max(np.abs(term(4) - fine))
    e2 = np.max(np.abs(term(8) - fine))
    assert e1 < 1e-3
    assert 3.0 < e1 / e2 < 5.0


def test_duhamel_term_matches_series_route():
    g = TorusGrid(1, 8)
    phi = unit_field(g)
    G0 = MarginalSequence.factorized(phi, 3, g)
    prob = HierarchyProblem("gp", 3, 0.03, 6)
    times = prob.times
    free = _free_traj(G0, times)
    forcing = Trajectory(g, times, interaction(prob, free.levels, g.d))
    series = [duhamel_series_solve(prob, G0, J) for J in range(3)]
    for j in (1, 2):
        F_j = series[j].levels[0] - series[j - 1].levels[0]
        inner = duhamel_terms(forcing, j - 1, 1, prob)
        route = -1j * ifft_trailing(duhamel_integral(fft_trailing(inner, 2), g, 1, times), 2)
        assert np.max(np.abs(F_j - route)) < 1e-12


def test_series_cross_validates_picard(gp_setup):
    _, _, G0 = gp_setup
    prob = HierarchyProblem("gp", 2, 0.02, 10)
    a = picard_solve(prob, G0)
    b = duhamel_series_solve(prob, G0, 1)
    assert spacetime_norm(a - b, 0.0, 0.3, "Linf") < 1e-4


def test_series_k1_and_zero_data(gp_setup, grid16):
    _, _, G0 = gp_setup
    one = MarginalSequence(grid16, (G0[1],))
    prob = HierarchyProblem("gp", 1, 0.05, 5)
    a, b = picard_solve(prob, one), duhamel_series_solve(prob, one, 2)
    assert np.max(np.abs(a.levels[0] - b.levels[0])) < 1e-14
    zero = MarginalSequence(grid16, (Marginal.zeros(1, grid16), Marginal.zeros(2, grid16)))
    out = duhamel_series_solve(HierarchyProblem("gp", 2, 0.05, 5), zero, 2)
    assert all(not np.any(lvl) for lvl in out.levels)
    with pytest.raises(UnsupportedDepthError):
        duhamel_series_solve(prob, one, 4)


def test_residual_free_evolution(gp_setup):
    _, _, G0 = gp_setup
    prob = HierarchyProblem("gp", 2, 0.05, 10, kappa0=0.0)
    traj = picard_solve(prob, G0)
    r = hierarchy_residual(traj, prob)
    norms = np.array([h_alpha_norm(e, 0.0) for e in G0])
    # O(dt^2) stencil error on the free phases is below 1e-8 relative only for a tiny step
    fine = HierarchyProblem("gp", 2, 1e-4, 10, kappa0=0.0)
    rf = hierarchy_residual(picard_solve(fine, G0), fine)
    assert np.all(rf["residual"].max(axis=1) < 1e-8 * norms)
    assert np.all(r["residual"] < 1e-2 * norms[:, None])


def test_residual_second_order(gp_setup):
    _, _, G0 = gp_setup
    res = []
    for n in (10, 20):
        prob = HierarchyProblem("gp", 2, 0.05, n)
        res.append(hierarchy_residual(picard_solve(prob, G0), prob)["residual"].max())
    assert 3.0 < res[0] / res[1] < 5.0


def test_residual_detects_wrong_sign(gp_setup):
    _, _, G0 = gp_setup
    prob = HierarchyProblem("gp", 2, 0.05, 10)
    traj = picard_solve(prob, G0)
    good = hierarchy_residual(traj, prob)["residual"].max()
    bad = hierarchy_residual(traj, HierarchyProblem("gp", 2, 0.05, 10, kappa0=-1.0))["residual"].max()
    assert bad > 10 * good


def test_bbgky_trajectory_tends_to_gp(gp_setup, grid16):
    _, _, G0 = gp_setup
    gp = picard_solve(HierarchyProblem("gp", 2, 0.05, 10), G0)
    diffs = []
    for N in (16, 64, 256):
        pot = make_potential(GaussianProfile(), 0.2, N, grid16)
        bb = picard_solve(HierarchyProblem("bbgky", 2, 0.05, 10, N=N, potential=pot), G0)
        diffs.append(spacetime_norm(bb - gp, 1.0, 0.3, "Linf"))
    assert diffs[0] > diffs[1] > diffs[2]


def test_count_duhamel_summands():
    assert count_duhamel_summands(3, 0) == 1
    assert count_duhamel_summands(1, 3) == 6
    for k, j in itertools.product(range(1, 4), range(0, 5)):
        assert count_duhamel_summands(k, j) == sum(1 for _ in enumerate_duhamel_strings(k, j))
    with pytest.raises(InvalidParameterError):
        count_duhamel_summands(0, 1)
