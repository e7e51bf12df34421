import json

import numpy as np
import pytest

from hierakit import (GaussianProfile, HierarchyProblem, MarginalSequence, TorusGrid, nls_reference_solve,
                      picard_solve, run_bbgky_vs_gp, run_derivation_experiment)
from hierakit.convergence import nbody_envelope, report_files, trend_summary
from hierakit.errors import InvalidConfigurationError, InvalidInputError, InvalidParameterError
from hierakit.marginals import h_alpha_norm_array

from conftest import unit_field


def test_nls_free_plane_wave(grid16):
    phi = np.exp(2j * grid16.positions) / np.sqrt(2 * np.pi)
    sol = nls_reference_solve(phi, grid16, 0.0, 0.3, 30)
    assert np.max(np.abs(sol.fields[-1] - phi * np.exp(-4j * 0.3))) < 1e-12


def test_nls_flat_solution(grid16):
    L = grid16.L
    phi = np.full(16, 1 / np.sqrt(L), dtype=complex)
    sol = nls_reference_solve(phi, grid16, 1.0, 0.5, 50)
    expect = phi * np.exp(-1j * 0.5 / L)
    assert np.max(np.abs(sol.fields[-1] - expect)) < 1e-12


def test_nls_conservation(grid16):
    sol = nls_reference_solve(unit_field(grid16), grid16, 1.0, 0.5, 500)
    assert np.ptp(sol.mass) < 1e-10
    assert np.ptp(sol.energy) / sol.energy[0] < 1e-6


def test_nls_input_checks(grid16):
    with pytest.raises(InvalidInputError):
        nls_reference_solve(2 * unit_field(grid16), grid16)
    with pytest.raises(InvalidParameterError):
        nls_reference_solve(unit_field(grid16), grid16, steps=10, sample_every=3)


def test_factorization_chain_level_two(grid16):
    phi = unit_field(grid16)
    traj = picard_solve(HierarchyProblem("gp", 2, 0.05, 20), MarginalSequence.factorized(phi, 2, grid16))
    nls = nls_reference_solve(phi, grid16, 1.0, 0.05, 200, sample_every=10)
    diff = traj.levels[1] - nls.marginal_levels(2)[1]
    # level two carries the truncation error directly
    assert np.max(h_alpha_norm_array(diff, grid16, 2, 0.0)) < 2e-2


def test_self_comparison_is_zero(grid16):
    G0 = MarginalSequence.factorized(unit_field(grid16), 2, grid16)
    rep = run_bbgky_vs_gp(G0, [16, 32], T=0.05, steps=5, self_compare=True)
    for c in rep.columns[4:]:
        assert np.all(rep.column(c) == 0)


def test_short_time_difference_is_small(grid16):
    G0 = MarginalSequence.factorized(unit_field(grid16), 2, grid16)
    long = run_bbgky_vs_gp(G0, [16], T=0.05, steps=5)
    short = run_bbgky_vs_gp(G0, [16], T=1e-4, steps=5)
    assert short.column("delta_Gamma_Linf")[0] < 1e-2 * long.column("delta_Gamma_Linf")[0]


def test_partial_failure_keeps_rows(grid16):
    G0 = MarginalSequence.factorized(unit_field(grid16), 2, grid16)
    rep = run_bbgky_vs_gp(G0, [16, 10**6], T=0.02, steps=4)
    assert [r["N"] for r in rep.rows] == [16]
    assert rep.failures[0]["N"] == 10**6 and rep.failures[0]["error"] == "UnderResolvedPotentialError"


def test_jobs_do_not_change_results(grid16):
    G0 = MarginalSequence.factorized(unit_field(grid16), 2, grid16)
    a = run_bbgky_vs_gp(G0, [16, 64], T=0.02, steps=4, jobs=1)
    b = run_bbgky_vs_gp(G0, [16, 64], T=0.02, steps=4, jobs=2)
    assert a.to_csv() == b.to_csv()


def test_bbgky_vs_gp_rejects_bad_lists(grid16):
    G0 = MarginalSequence.factorized(unit_field(grid16), 2, grid16)
    with pytest.raises(InvalidConfigurationError):
        run_bbgky_vs_gp(G0, [])
    with pytest.raises(InvalidConfigurationError):
        run_bbgky_vs_gp(G0, [1, 16])


def test_derivation_single_row(grid8):
    rep = run_derivation_experiment(unit_field(grid8), grid8, [2], steps=4, substeps=5)
    assert len(rep.rows) == 1 and rep.rows[0]["K_of_N"] == 1
    assert rep.summary["K_gp"] == 2
    assert rep.config["xi"] < rep.config["xi_prime"]


def test_derivation_free_consistency(grid8):
    rep = run_derivation_experiment(unit_field(grid8), grid8, [2, 3], free=True, steps=4, substeps=5)
    assert np.all(rep.column("per_k_H1_1") < 1e-8)


def test_derivation_input_checks(grid8):
    with pytest.raises(InvalidParameterError):
        run_derivation_experiment(unit_field(grid8), grid8, [2], xi=0.7, xi_prime=0.6)
    with pytest.raises(InvalidConfigurationError):
        nbody_envelope(grid8, 7)
    with pytest.raises(InvalidConfigurationError):
        nbody_envelope(TorusGrid(1, 16), 6)
    nbody_envelope(grid8, 6)


def test_report_files_and_plot(grid16):
    G0 = MarginalSequence.factorized(unit_field(grid16), 2, grid16)
    rep = run_bbgky_vs_gp(G0, [16, 64], T=0.02, steps=4)
    files = report_files(rep, "run", plot=True)
    assert sorted(files) == ["run.csv", "run.gp", "run.json"]
    header = files["run.csv"].splitlines()[0].split(",")
    assert header[:6] == ["N", "K_of_N", "T", "xi", "delta_Gamma_Linf", "delta_B_L2"]
    assert "'run.csv'" in files["run.gp"] and files["run.gp"].count(".csv") == 2
    side = json.loads(files["run.json"])
    assert side["config"]["xi"] == 0.3 and side["config"]["N_list"] == [16, 64]


def test_trend_summary():
    assert trend_summary([1, 2, 4], [3.0, 2.0, 1.0])["strictly_decreasing"]
    s = trend_summary([1, 2], [1.0, 1.0])
    assert not s["strictly_decreasing"] and s["loglog_slope"] == pytest.approx(0.0)
    assert trend_summary([1, 2], [0.0, 0.0])["loglog_slope"] is None
