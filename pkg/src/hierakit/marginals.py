"""Density-matrix data model, structural checks and the norm machinery."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import DegenerateInputError, InvalidInputError, InvalidParameterError
from .spectral import BracketTable, TorusGrid, check_budget, fft_trailing


@dataclass(frozen=True, eq=False)
class Marginal:
    """A k-particle density matrix on ``grid``.

    ``data`` has ``2k`` particle slots ordered ``x_1..x_k, x'_1..x'_k``,
    each slot holding ``d`` axes of length ``M``.
    """

    k: int
    grid: TorusGrid
    data: np.ndarray

    def __post_init__(self):
        if self.k < 1:
            raise InvalidInputError(f"particle number must be >= 1, got {self.k}")
        check_budget(self.grid.M ** (2 * self.grid.d * self.k), f"level-{self.k} marginal")
        data = np.asarray(self.data, dtype=complex)
        if data.shape != self.grid.field_shape(2 * self.k):
            raise InvalidInputError(
                f"level-{self.k} marginal needs shape {self.grid.field_shape(2 * self.k)}, got {data.shape}"
            )
        object.__setattr__(self, "data", data)

    @classmethod
    def zeros(cls, k: int, grid: TorusGrid) -> "Marginal":
        check_budget(grid.M ** (2 * grid.d * k), f"level-{k} marginal")
        return cls(k, grid, np.zeros(grid.field_shape(2 * k), dtype=complex))

    def with_data(self, data) -> "Marginal":
        return Marginal(self.k, self.grid, data)

    @property
    def matrix(self) -> np.ndarray:
        n = self.grid.M ** (self.grid.d * self.k)
        return self.data.reshape(n, n)

    def trace(self) -> complex:
        return self.grid.cell_volume**self.k * np.trace(self.matrix)

    def adjoint(self) -> "Marginal":
        n = self.k * self.grid.d
        perm = list(range(n, 2 * n)) + list(range(n))
        return self.with_data(np.conj(np.transpose(self.data, perm)))

    def __add__(self, other):
        return self.with_data(self.data + other.data)

    def __sub__(self, other):
        return self.with_data(self.data - other.data)

    def __mul__(self, c):
        return self.with_data(c * self.data)

    __rmul__ = __mul__


def hermiticity_deviation(gamma: Marginal) -> float:
    """Max-abs distance between ``gamma`` and its hermitized version."""
    return float(np.max(np.abs(gamma.data - 0.5 * (gamma.data + gamma.adjoint().data))))


def symmetrize_slots(data: np.ndarray, k: int, d: int) -> np.ndarray:
    """Average over permutations of the unprimed and, separately, primed slots."""
    def average(arr, first):
        acc = np.zeros_like(arr)
        perms = list(itertools.permutations(range(k)))
        for p in perms:
            order = list(range(2 * k))
            order[first:first + k] = [first + q for q in p]
            axes = [a for slot in order for a in range(slot * d, (slot + 1) * d)]
            acc += np.transpose(arr, axes)
        return acc / len(perms)

    return average(average(data, 0), k)


def symmetry_deviation(gamma: Marginal) -> float:
    sym = symmetrize_slots(gamma.data, gamma.k, gamma.grid.d)
    return float(np.max(np.abs(gamma.data - sym)))


def partial_trace(gamma: Marginal) -> Marginal:
    """``Tr_{k+1}``: integrate the last unprimed/primed pair along the diagonal."""
    if gamma.k < 2:
        raise InvalidInputError("cannot trace out the only particle of a one-particle marginal")
    g = gamma.grid
    return Marginal(gamma.k - 1, g, kernels.partial_trace_array(gamma.data, gamma.k, g.d, g.h))


def factorized_marginal(phi: np.ndarray, k: int, grid: TorusGrid) -> Marginal:
    """``prod_j phi(x_j) conj(phi(x'_j))`` for a one-particle field ``phi``."""
    phi = np.asarray(phi, dtype=complex)
    grid.check(phi, 1, "one-particle field")
    if phi.shape != grid.field_shape(1):
        raise InvalidInputError(f"expected unbatched field of shape {grid.field_shape(1)}")
    if not np.any(phi):
        raise DegenerateInputError("factorized marginal of the zero field")
    check_budget(grid.M ** (2 * grid.d * k), f"level-{k} marginal")
    data = phi
    for _ in range(k - 1):
        data = np.multiply.outer(data, phi)
    conj = np.conj(phi)
    for _ in range(k):
        data = np.multiply.outer(data, conj)
    return Marginal(k, grid, data)


def h_alpha_norm_array(arr: np.ndarray, grid: TorusGrid, k: int, alpha: float,
                       spectral: bool = False) -> np.ndarray:
    """``||S^(k,alpha) gamma||_L2`` over the trailing 2k slots; batch axes are kept."""
    naxes = 2 * k * grid.d
    spec = arr if spectral else fft_trailing(arr, naxes)
    weighted = BracketTable(grid, alpha).apply(spec, 2 * k)
    axes = tuple(range(arr.ndim - naxes, arr.ndim))
    return grid.cell_volume**k * np.sqrt(np.sum(np.abs(weighted) ** 2, axis=axes))


def h_alpha_norm(gamma: Marginal, alpha: float) -> float:
    if alpha < 0:
        raise InvalidParameterError(f"alpha must be >= 0, got {alpha}")
    return float(h_alpha_norm_array(gamma.data, gamma.grid, gamma.k, alpha))


def _check_xi(xi: float) -> None:
    if not 0 < xi < 1:
        raise InvalidParameterError(f"xi must lie in (0, 1), got {xi}")


@dataclass(frozen=True, eq=False)
class MarginalSequence:
    """Truncated hierarchy state ``(gamma^(1), ..., gamma^(K))``; higher levels are zero."""

    grid: TorusGrid
    entries: tuple = ()
    xi: float = 0.3
    alpha: float = 1.0

    def __post_init__(self):
        entries = tuple(self.entries)
        for i, e in enumerate(entries, start=1):
            if e.k != i:
                raise InvalidInputError(f"entry {i} has particle number {e.k}")
            if e.grid != self.grid:
                raise InvalidInputError("all entries must share one grid")
        object.__setattr__(self, "entries", entries)

    @property
    def K(self) -> int:
        return len(self.entries)

    def __getitem__(self, k: int) -> Marginal:
        """1-based access; levels above ``K`` are returned as explicit zeros."""
        if k < 1:
            raise IndexError(k)
        if k > self.K:
            return Marginal.zeros(k, self.grid)
        return self.entries[k - 1]

    def __iter__(self):
        return iter(self.entries)

    def replace(self, entries) -> "MarginalSequence":
        return MarginalSequence(self.grid, tuple(entries), self.xi, self.alpha)

    def __sub__(self, other: "MarginalSequence") -> "MarginalSequence":
        K = max(self.K, other.K)
        return self.replace(self[k] - other[k] for k in range(1, K + 1))

    def is_admissible(self, tol: float = 1e-12) -> bool:
        for k in range(1, self.K):
            diff = partial_trace(self.entries[k]).data - self.entries[k - 1].data
            if np.max(np.abs(diff)) > tol:
                return False
        return True

    @classmethod
    def factorized(cls, phi, K: int, grid: TorusGrid, xi: float = 0.3,
                   alpha: float = 1.0) -> "MarginalSequence":
        return cls(grid, tuple(factorized_marginal(phi, k, grid) for k in range(1, K + 1)), xi, alpha)


def calh_xi_norm(Gamma: MarginalSequence, alpha: float | None = None,
                 xi: float | None = None) -> float:
    """``sum_k xi^k ||gamma^(k)||_{H^alpha_k}`` summed in increasing k."""
    alpha = Gamma.alpha if alpha is None else alpha
    xi = Gamma.xi if xi is None else xi
    _check_xi(xi)
    total = 0.0
    for e in Gamma.entries:
        total += xi**e.k * h_alpha_norm(e, alpha)
    return total


def truncate(Gamma: MarginalSequence, K: int) -> MarginalSequence:
    if K < 0:
        raise InvalidParameterError(f"truncation level must be >= 0, got {K}")
    return Gamma.replace(Gamma.entries[:K])


def trapezoid_weights(times: np.ndarray) -> np.ndarray:
    times = np.asarray(times, dtype=float)
    w = np.zeros_like(times)
    if times.size > 1:
        dt = np.diff(times)
        w[:-1] += dt / 2
        w[1:] += dt / 2
    return w


@dataclass(eq=False)
class Trajectory:
    """Time-sampled hierarchy state.

    ``levels[k-1]`` stacks ``gamma^(k)`` over samples (time is axis 0), so
    views of one sample are cheap and whole-trajectory kernels vectorize.
    """

    grid: TorusGrid
    times: np.ndarray
    levels: list
    xi: float = 0.3
    alpha: float = 1.0
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if self.times.ndim != 1 or self.times.size == 0:
            raise InvalidInputError("trajectory needs at least one sample time")
        if self.times[0] != 0:
            raise InvalidInputError("trajectory must start at t = 0")
        if np.any(np.diff(self.times) <= 0):
            raise InvalidInputError("sample times must be strictly increasing")
        for k, arr in enumerate(self.levels, start=1):
            expected = (self.times.size,) + self.grid.field_shape(2 * k)
            if arr.shape != expected:
                raise InvalidInputError(f"level {k} stack has shape {arr.shape}, expected {expected}")

    @classmethod
    def from_states(cls, times, states, **kw) -> "Trajectory":
        states = list(states)
        if not states:
            raise InvalidInputError("empty trajectory")
        grid = states[0].grid
        K = max(s.K for s in states)
        levels = [np.stack([s[k].data for s in states]) for k in range(1, K + 1)]
        kw.setdefault("xi", states[0].xi)
        kw.setdefault("alpha", states[0].alpha)
        return cls(grid, np.asarray(times), levels, **kw)

    @property
    def K(self) -> int:
        return len(self.levels)

    @property
    def T(self) -> float:
        return float(self.times[-1])

    @property
    def quadrature(self) -> np.ndarray:
        return trapezoid_weights(self.times)

    def state(self, i: int) -> MarginalSequence:
        entries = tuple(Marginal(k, self.grid, arr[i]) for k, arr in enumerate(self.levels, start=1))
        return MarginalSequence(self.grid, entries, self.xi, self.alpha)

    @property
    def states(self) -> list:
        return [self.state(i) for i in range(self.times.size)]

    def level(self, k: int) -> np.ndarray:
        if k > self.K:
            return np.zeros((self.times.size,) + self.grid.field_shape(2 * k), dtype=complex)
        return self.levels[k - 1]

    def __sub__(self, other: "Trajectory") -> "Trajectory":
        if not np.array_equal(self.times, other.times):
            raise InvalidInputError("trajectories sampled at different times")
        K = max(self.K, other.K)
        levels = [self.level(k) - other.level(k) for k in range(1, K + 1)]
        return Trajectory(self.grid, self.times, levels, self.xi, self.alpha)


def level_norms(traj: Trajectory, alpha: float) -> np.ndarray:
    """``||gamma^(k)(t_i)||_{H^alpha}`` with shape ``(K, samples)``."""
    if traj.K == 0:
        return np.zeros((0, traj.times.size))
    return np.stack([h_alpha_norm_array(arr, traj.grid, k, alpha)
                     for k, arr in enumerate(traj.levels, start=1)])


def sample_norms(traj: Trajectory, alpha: float, xi: float) -> np.ndarray:
    """Per-sample ``calH^alpha_xi`` norms."""
    _check_xi(xi)
    per_level = level_norms(traj, alpha)
    weights = xi ** np.arange(1, traj.K + 1)
    total = np.zeros(traj.times.size)
    for w, row in zip(weights, per_level):
        total += w * row
    return total


def spacetime_norm(traj: Trajectory, alpha: float, xi: float, mode: str = "Linf") -> float:
    """``L^inf_t`` (max over samples) or ``L^2_t`` (trapezoid) of the calH norm."""
    if traj is None or traj.times.size == 0:
        raise InvalidInputError("empty trajectory")
    values = sample_norms(traj, alpha, xi)
    if mode == "Linf":
        return float(np.max(values))
    if mode == "L2":
        return float(np.sqrt(np.sum(traj.quadrature * values**2)))
    raise InvalidParameterError(f"mode must be 'Linf' or 'L2', got {mode!r}")


def k_schedule(N: int, delta_prime: float, C0: float) -> int:
    """Truncation level ``max(1, floor(delta'/(2 ln C0) * ln N))``."""
    if N < 2:
        raise InvalidParameterError(f"N must be >= 2, got {N}")
    if not 0 < delta_prime < 1:
        raise InvalidParameterError(f"delta' must lie in (0, 1), got {delta_prime}")
    if not C0 > 1:
        raise InvalidParameterError(f"C0 must exceed 1, got {C0}")
    value = delta_prime / (2 * math.log(C0)) * math.log(N)
    # guard exact integers such as C0=2, N=16 against roundoff below
    return max(1, math.floor(value + 1e-9))
