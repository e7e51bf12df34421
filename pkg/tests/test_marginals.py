import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hierakit import (Marginal, MarginalSequence, Trajectory, TorusGrid, calh_xi_norm, factorized_marginal,
                      h_alpha_norm, k_schedule, partial_trace, spacetime_norm, truncate)
from hierakit.errors import DegenerateInputError, InvalidInputError, InvalidParameterError
from hierakit.marginals import hermiticity_deviation, symmetrize_slots, symmetry_deviation
from hierakit.oracles import h_alpha_dense, partial_trace_loop

from conftest import rand_marginal, unit_field


def test_partial_trace_of_product_state(grid16):
    phi = unit_field(grid16)
    red = partial_trace(factorized_marginal(phi, 2, grid16))
    assert np.max(np.abs(red.data - factorized_marginal(phi, 1, grid16).data)) < 1e-12


def test_partial_trace_matches_loop_oracle(rng, grid4):
    gam = rand_marginal(rng, grid4, 2)
    ref = partial_trace_loop(gam.data, 2, 4, 1, grid4.h)
    assert np.max(np.abs(partial_trace(gam).data - ref)) < 1e-12


def test_partial_trace_preserves_trace_and_structure(rng, grid4):
    gam = rand_marginal(rng, grid4, 3)
    gam = gam.with_data(symmetrize_slots(gam.data, 3, 1))
    red = partial_trace(gam)
    assert abs(red.trace() - gam.trace()) < 1e-12 * abs(gam.trace()) + 1e-12
    assert hermiticity_deviation(red) < 1e-12
    assert symmetry_deviation(red) < 1e-12


def test_partial_trace_refuses_one_particle(rng, grid4):
    with pytest.raises(InvalidInputError):
        partial_trace(rand_marginal(rng, grid4, 1))


def test_factorized_outer_product_and_trace(grid8):
    phi = unit_field(grid8)
    g1 = factorized_marginal(phi, 1, grid8)
    assert np.allclose(g1.data, np.outer(phi, phi.conj()))
    g2 = factorized_marginal(phi, 2, grid8)
    assert abs(g2.trace() - 1) < 1e-12
    assert hermiticity_deviation(g2) < 1e-12 and symmetry_deviation(g2) < 1e-12


def test_factorized_chain_is_admissible(grid8):
    phi = unit_field(grid8)
    g3 = factorized_marginal(phi, 3, grid8)
    g2 = factorized_marginal(phi, 2, grid8)
    assert np.max(np.abs(partial_trace(g3).data - g2.data)) < 1e-12
    assert MarginalSequence.factorized(phi, 3, grid8).is_admissible(1e-12)


def test_factorized_rejects_zero_field(grid8):
    with pytest.raises(DegenerateInputError):
        factorized_marginal(np.zeros(8, complex), 1, grid8)


def test_h_alpha_norm_examples(grid16):
    phi = unit_field(grid16)
    assert h_alpha_norm(factorized_marginal(phi, 1, grid16), 0.0) == pytest.approx(1.0, abs=1e-12)
    wave = np.exp(1j * grid16.positions) / np.sqrt(2 * np.pi)
    assert h_alpha_norm(factorized_marginal(wave, 1, grid16), 1.0) == pytest.approx(2.0, abs=1e-12)


def test_h_alpha_norm_matches_dense_weights(rng, grid4):
    gam = rand_marginal(rng, grid4, 2, hermitian=False)
    ref = h_alpha_dense(gam.data, 4, 1, 2, grid4.L, 1.0)
    assert h_alpha_norm(gam, 1.0) == pytest.approx(ref, rel=1e-12)


def test_h0_is_position_space_hilbert_schmidt(rng, grid8):
    gam = rand_marginal(rng, grid8, 2)
    hs = math.sqrt(grid8.h ** 4 * np.sum(np.abs(gam.data) ** 2))
    assert h_alpha_norm(gam, 0.0) == pytest.approx(hs, rel=1e-10)


def _scaled(grid, k, value):
    # a marginal with H^0 norm equal to value
    m = np.zeros(grid.field_shape(2 * k), complex)
    m.flat[0] = value / grid.h ** k
    return Marginal(k, grid, m)


def test_calh_norm_arithmetic(grid4):
    one = MarginalSequence(grid4, (_scaled(grid4, 1, 1.0),))
    assert calh_xi_norm(one, 0.0, 0.5) == pytest.approx(0.5)
    two = MarginalSequence(grid4, (_scaled(grid4, 1, 3.0), _scaled(grid4, 2, 4.0)))
    assert calh_xi_norm(two, 0.0, 0.5) == pytest.approx(0.5 * 3 + 0.25 * 4)
    zero = MarginalSequence(grid4, (Marginal.zeros(1, grid4), Marginal.zeros(2, grid4)))
    assert calh_xi_norm(zero, 1.0, 0.3) == 0.0


@pytest.mark.parametrize("xi", [0.0, 1.0, -0.2, 1.5])
def test_calh_norm_rejects_xi(grid4, xi):
    with pytest.raises(InvalidParameterError):
        calh_xi_norm(MarginalSequence(grid4, (_scaled(grid4, 1, 1.0),)), 1.0, xi)


def test_calh_norm_increasing_in_xi(rng, grid4):
    seq = MarginalSequence(grid4, (rand_marginal(rng, grid4, 1), rand_marginal(rng, grid4, 2)))
    vals = [calh_xi_norm(seq, 1.0, xi) for xi in (0.1, 0.3, 0.5, 0.9)]
    assert all(a < b for a, b in zip(vals, vals[1:]))


def test_truncation(rng, grid4):
    seq = MarginalSequence(grid4, (rand_marginal(rng, grid4, 1), rand_marginal(rng, grid4, 2)))
    assert truncate(seq, 5).K == 2
    assert truncate(seq, 0).K == 0 and calh_xi_norm(truncate(seq, 0), 1.0, 0.3) == 0.0
    assert calh_xi_norm(truncate(seq, 1), 1.0, 0.3) <= calh_xi_norm(seq, 1.0, 0.3)
    with pytest.raises(InvalidParameterError):
        truncate(seq, -1)


def test_sequence_rejects_mismatched_entries(rng, grid4, grid8):
    with pytest.raises(InvalidInputError):
        MarginalSequence(grid4, (rand_marginal(rng, grid4, 2),))
    with pytest.raises(InvalidInputError):
        MarginalSequence(grid4, (rand_marginal(rng, grid8, 1),))


def _constant_traj(grid, times, gam):
    return Trajectory(grid, times, [np.stack([gam.data] * len(times))])


def test_spacetime_norm_constant_trajectory(rng, grid4):
    gam = rand_marginal(rng, grid4, 1)
    c = 0.3 * h_alpha_norm(gam, 1.0)
    times = np.linspace(0, 0.5, 11)
    traj = _constant_traj(grid4, times, gam)
    assert spacetime_norm(traj, 1.0, 0.3, "Linf") == pytest.approx(c)
    assert spacetime_norm(traj, 1.0, 0.3, "L2") == pytest.approx(c * math.sqrt(0.5))
    assert traj.quadrature.sum() == pytest.approx(0.5)


def test_spacetime_norm_single_sample(rng, grid4):
    gam = rand_marginal(rng, grid4, 1)
    traj = _constant_traj(grid4, [0.0], gam)
    assert spacetime_norm(traj, 1.0, 0.3, "Linf") == pytest.approx(0.3 * h_alpha_norm(gam, 1.0))
    assert spacetime_norm(traj, 1.0, 0.3, "L2") == 0.0


def test_spacetime_l2_second_order_in_dt(grid8):
    phi = unit_field(grid8)
    base = factorized_marginal(phi, 1, grid8).data

    def l2(n):
        t = np.linspace(0, 1, n + 1)
        stack = np.stack([(1 + np.sin(3 * s)) * base for s in t])
        return spacetime_norm(Trajectory(grid8, t, [stack]), 1.0, 0.3, "L2")

    exact = l2(4096)
    e1, e2 = abs(l2(16) - exact), abs(l2(32) - exact)
    assert 3.0 < e1 / e2 < 5.0


def test_trajectory_validation(rng, grid4):
    gam = rand_marginal(rng, grid4, 1)
    with pytest.raises(InvalidInputError):
        _constant_traj(grid4, [0.1, 0.2], gam)
    with pytest.raises(InvalidInputError):
        _constant_traj(grid4, [0.0, 0.2, 0.1], gam)
    with pytest.raises(InvalidParameterError):
        spacetime_norm(_constant_traj(grid4, [0.0], gam), 1.0, 0.3, "sup")


def test_k_schedule_examples():
    assert k_schedule(16, 0.5, 2.0) == 1
    Ks = [k_schedule(n, 0.5, 2.0) for n in (2, 10, 100, 10**4, 10**6)]
    assert Ks == sorted(Ks)


def test_k_schedule_bound_scan():
    # the floor of one is a clamp; the strict bound is checked wherever it is active
    dp, C0 = 0.5, 2.0
    for N in np.unique(np.geomspace(2, 10**6, 400).astype(int)):
        K = k_schedule(int(N), dp, C0)
        if dp / (2 * math.log(C0)) * math.log(N) >= 1:
            assert K < dp / math.log(C0) * math.log(N)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_symmetrized_marginal_is_symmetric(seed):
    g = TorusGrid(1, 4)
    gam = rand_marginal(np.random.default_rng(seed), g, 2)
    sym = gam.with_data(symmetrize_slots(gam.data, 2, 1))
    assert symmetry_deviation(sym) < 1e-12
    assert hermiticity_deviation(sym) < 1e-12
