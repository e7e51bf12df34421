"""Exact N-boson dynamics on the torus at desk scale."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .collision import Potential
from .errors import InvalidInputError, InvalidParameterError
from .marginals import Marginal
from .spectral import TorusGrid, check_budget, fft_trailing, ifft_trailing, slot_view

MAX_SYMMETRIZE_N = 6


@dataclass(frozen=True, eq=False)
class WaveFunction:
    N: int
    grid: TorusGrid
    data: np.ndarray

    def __post_init__(self):
        if self.N < 1:
            raise InvalidInputError(f"particle count must be >= 1, got {self.N}")
        check_budget(self.grid.M ** (self.grid.d * self.N), f"{self.N}-body wave function")
        data = np.asarray(self.data, dtype=complex)
        if data.shape != self.grid.field_shape(self.N):
            raise InvalidInputError(f"wave function needs shape {self.grid.field_shape(self.N)}, got {data.shape}")
        object.__setattr__(self, "data", data)

    def with_data(self, data) -> "WaveFunction":
        return WaveFunction(self.N, self.grid, data)

    def norm(self) -> float:
        return float(math.sqrt(self.grid.cell_volume**self.N * np.sum(np.abs(self.data) ** 2)))

    @classmethod
    def product(cls, fields, grid: TorusGrid) -> "WaveFunction":
        """Tensor product ``phi_1(x_1) ... phi_N(x_N)`` of one-particle fields."""
        fields = [np.asarray(f, dtype=complex) for f in fields]
        check_budget(grid.M ** (grid.d * len(fields)), f"{len(fields)}-body wave function")
        data = fields[0]
        for f in fields[1:]:
            data = np.multiply.outer(data, f)
        return cls(len(fields), grid, data)


def _permute_particles(data: np.ndarray, perm, d: int) -> np.ndarray:
    axes = [a for p in perm for a in range(p * d, (p + 1) * d)]
    return np.transpose(data, axes)


def symmetrize_wavefunction(phi: WaveFunction) -> WaveFunction:
    """Average over all particle permutations, then normalize to unit L2 norm."""
    if phi.N > MAX_SYMMETRIZE_N:
        raise InvalidParameterError(f"symmetrization supports N <= {MAX_SYMMETRIZE_N}, got {phi.N}")
    acc = np.zeros_like(phi.data)
    perms = list(itertools.permutations(range(phi.N)))
    for p in perms:
        acc += _permute_particles(phi.data, p, phi.grid.d)
    out = phi.with_data(acc / len(perms))
    n = out.norm()
    if n == 0:
        raise InvalidInputError("symmetrized wave function vanishes")
    return out.with_data(out.data / n)


def interaction_field(grid: TorusGrid, pot: Potential, N: int) -> np.ndarray:
    """``W(x) = (1/N) sum_{j<l} V_N(x_j - x_l)`` as a dense N-slot array."""
    pairs = list(itertools.combinations(range(N), 2))
    W = kernels.pair_field(pot.values, N, grid.d, pairs) / N
    return np.broadcast_to(W, grid.field_shape(N)).copy() if pairs else np.zeros(grid.field_shape(N))


def kinetic_symbol(grid: TorusGrid, N: int) -> np.ndarray:
    out = np.zeros((1,) * (N * grid.d))
    for s in range(N):
        out = out + slot_view(grid.k2, s, N, grid.d)
    return out


class StrangPropagator:
    """Strang split step for ``i d_t Phi = (-sum Delta + W) Phi``."""

    def __init__(self, grid: TorusGrid, pot: Potential, N: int, dt: float):
        self.grid, self.N, self.dt = grid, N, dt
        self.naxes = N * grid.d
        W = interaction_field(grid, pot, N)
        self.half_potential = np.exp(-0.5j * dt * W)
        self.kinetic = np.exp(-1j * dt * kinetic_symbol(grid, N))

    def step(self, data: np.ndarray) -> np.ndarray:
        data = data * self.half_potential
        data = ifft_trailing(fft_trailing(data, self.naxes) * self.kinetic, self.naxes)
        return data * self.half_potential


def schrodinger_evolve(phi: WaveFunction, pot: Potential, T: float, steps: int,
                       sample_every: int | None = None):
    """Evolve ``phi`` to time ``T`` with ``steps`` Strang steps.

    With ``sample_every`` set, returns ``(times, [WaveFunction, ...])`` sampled
    every that many steps (including t=0); otherwise returns the final state.
    """
    if steps < 1:
        raise InvalidParameterError(f"steps must be >= 1, got {steps}")
    prop = StrangPropagator(phi.grid, pot, phi.N, T / steps)
    data = phi.data
    if sample_every is None:
        for _ in range(steps):
            data = prop.step(data)
        return phi.with_data(data)
    times, states = [0.0], [phi]
    for n in range(1, steps + 1):
        data = prop.step(data)
        if n % sample_every == 0:
            times.append(n * T / steps)
            states.append(phi.with_data(data))
    return np.asarray(times), states


def marginal_from_wavefunction(phi: WaveFunction, k: int) -> Marginal:
    """k-particle marginal, tracing out particles ``k+1..N``."""
    if not 1 <= k <= phi.N:
        raise InvalidInputError(f"level k={k} must lie in 1..{phi.N}")
    g = phi.grid
    return Marginal(k, g, kernels.marginal_from_psi_array(phi.data, phi.N, k, g.d, g.h))


def nbody_energy(phi: WaveFunction, pot: Potential, return_residue: bool = False):
    """``<Phi, H_N Phi>`` with spectral kinetic part and pointwise pair potential."""
    g = phi.grid
    vol = g.cell_volume**phi.N
    spec = fft_trailing(phi.data, phi.N * g.d)
    kinetic = vol * np.sum(kinetic_symbol(g, phi.N) * np.abs(spec) ** 2)
    W = interaction_field(g, pot, phi.N)
    potential = vol * np.sum(np.conj(phi.data) * W * phi.data)
    energy = kinetic + potential
    if return_residue:
        return float(np.real(energy)), float(abs(np.imag(energy)))
    return float(np.real(energy))
