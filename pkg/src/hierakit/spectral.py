"""Periodic grid, unitary FFTs, Japanese-bracket weights and the free propagator.

All dense tensors in hierakit carry one block of ``d`` axes per particle
slot.  A k-particle marginal has ``2k`` slots ordered ``x_1..x_k, x'_1..x'_k``;
an N-body wave function has ``N`` slots.  Batched arrays (e.g. a time axis)
put the batch axes first; every kernel here acts on the trailing axes.
"""
from __future__ import annotations

import os
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.fft

from .errors import InvalidInputError, InvalidParameterError, ResourceError

DEFAULT_BUDGET_BYTES = 2 * 1024**3
BUDGET_ENV = "HIERAKIT_BUDGET_BYTES"

_workers = 1


def set_workers(n: int) -> None:
    """Number of threads used by batched FFTs (output does not depend on it)."""
    global _workers
    _workers = max(1, int(n))


def budget_bytes() -> int:
    value = os.environ.get(BUDGET_ENV)
    if value is None:
        return DEFAULT_BUDGET_BYTES
    try:
        return int(value)
    except ValueError as exc:
        raise InvalidParameterError(f"{BUDGET_ENV} must be an integer, got {value!r}") from exc


def check_budget(n_entries: int, what: str = "tensor") -> None:
    nbytes = 16 * int(n_entries)
    limit = budget_bytes()
    if nbytes > limit:
        raise ResourceError(
            f"{what} needs {nbytes} bytes of complex storage, budget is {limit} "
            f"(set {BUDGET_ENV} to raise it)"
        )


@dataclass(frozen=True)
class TorusGrid:
    """Uniform grid on the periodic box ``[0, L)^d`` with ``M`` points per axis."""

    d: int
    M: int
    L: float = 2 * np.pi

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise InvalidParameterError(f"dimension must be 1, 2 or 3, got {self.d}")
        if self.M < 2 or self.M & (self.M - 1):
            raise InvalidParameterError(f"M must be a power of two >= 2, got {self.M}")
        if not self.L > 0:
            raise InvalidParameterError(f"box length must be positive, got {self.L}")

    @property
    def h(self) -> float:
        return self.L / self.M

    @property
    def cell_volume(self) -> float:
        return self.h ** self.d

    @cached_property
    def positions(self) -> np.ndarray:
        return self.h * np.arange(self.M)

    @cached_property
    def centered_positions(self) -> np.ndarray:
        """Positions mapped to ``[-L/2, L/2)``, aligned with ``positions``."""
        x = self.positions.copy()
        x[x >= self.L / 2] -= self.L
        return x

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        """Per-axis wavenumbers ``2*pi*m/L`` in FFT order, m in [-M/2, M/2)."""
        return 2 * np.pi / self.L * scipy.fft.fftfreq(self.M, 1.0 / self.M)

    @cached_property
    def mode_indices(self) -> np.ndarray:
        return np.rint(scipy.fft.fftfreq(self.M, 1.0 / self.M)).astype(int)

    @cached_property
    def k2(self) -> np.ndarray:
        """``|u|^2`` for one particle, shape ``(M,)*d``."""
        u = self.wavenumbers
        out = np.zeros((self.M,) * self.d)
        for axis in range(self.d):
            shape = [1] * self.d
            shape[axis] = self.M
            out = out + (u**2).reshape(shape)
        return out

    def field_shape(self, slots: int = 1) -> tuple:
        return (self.M,) * (self.d * slots)

    def check(self, arr: np.ndarray, slots: int, what: str = "array") -> None:
        """Raise unless the trailing axes of ``arr`` form ``slots`` particle blocks."""
        n = self.d * slots
        if arr.ndim < n or arr.shape[arr.ndim - n:] != self.field_shape(slots):
            raise InvalidInputError(
                f"{what} has shape {arr.shape}, expected trailing {self.field_shape(slots)}"
            )

    def slots_of(self, arr: np.ndarray) -> int:
        """Particle-slot count of an unbatched array on this grid."""
        if arr.ndim == 0 or arr.ndim % self.d or any(n != self.M for n in arr.shape):
            raise InvalidInputError(f"shape {arr.shape} is not M^(d*m) for M={self.M}, d={self.d}")
        return arr.ndim // self.d

    def to_dict(self) -> dict:
        return {"d": self.d, "M": self.M, "L": self.L}


def slot_view(per_particle: np.ndarray, slot: int, slots: int, d: int) -> np.ndarray:
    """Reshape a ``(M,)*d`` array so it broadcasts against particle ``slot``."""
    M = per_particle.shape[0] if per_particle.ndim else 1
    shape = [1] * (slots * d)
    shape[slot * d:(slot + 1) * d] = [M] * d
    return per_particle.reshape(shape)


def _axes(arr: np.ndarray, naxes: int) -> tuple:
    return tuple(range(arr.ndim - naxes, arr.ndim))


def fft_trailing(arr: np.ndarray, naxes: int) -> np.ndarray:
    return scipy.fft.fftn(arr, axes=_axes(arr, naxes), norm="ortho", workers=_workers)


def ifft_trailing(arr: np.ndarray, naxes: int) -> np.ndarray:
    return scipy.fft.ifftn(arr, axes=_axes(arr, naxes), norm="ortho", workers=_workers)


def fourier_forward(field: np.ndarray, grid: TorusGrid) -> np.ndarray:
    """Unitary DFT over every axis of a field on ``grid^m``."""
    field = np.asarray(field)
    grid.slots_of(field)
    return fft_trailing(field.astype(complex, copy=False), field.ndim)


def fourier_inverse(spec: np.ndarray, grid: TorusGrid) -> np.ndarray:
    spec = np.asarray(spec)
    grid.slots_of(spec)
    return ifft_trailing(spec, spec.ndim)


class BracketTable:
    """Per-particle Japanese-bracket weights ``<u>^alpha = (1+|u|^2)^(alpha/2)``.

    The symbol ``S^(k,alpha)`` is the product of these weights over every
    unprimed and primed slot of a marginal.
    """

    def __init__(self, grid: TorusGrid, alpha: float):
        if alpha < 0:
            raise InvalidParameterError(f"alpha must be >= 0, got {alpha}")
        self.grid = grid
        self.alpha = float(alpha)
        self.weights = (1.0 + grid.k2) ** (self.alpha / 2)

    def apply(self, spec: np.ndarray, slots: int) -> np.ndarray:
        """Multiply trailing-axis Fourier data by the symbol over ``slots`` slots."""
        if self.alpha == 0:
            return spec
        out = spec
        for s in range(slots):
            out = out * slot_view(self.weights, s, slots, self.grid.d)
        return out

    def symbol(self, slots: int) -> np.ndarray:
        """Dense symbol tensor; only meant for small oracles."""
        return self.apply(np.ones(self.grid.field_shape(slots)), slots)


def dispersion(grid: TorusGrid, k: int) -> np.ndarray:
    """``sum_j |u_j|^2 - sum_j |u'_j|^2`` on a 2k-slot tensor (broadcast-reduced)."""
    slots = 2 * k
    out = np.zeros((1,) * (slots * grid.d))
    for s in range(slots):
        sign = 1.0 if s < k else -1.0
        out = out + sign * slot_view(grid.k2, s, slots, grid.d)
    return out


def propagator_phase(grid: TorusGrid, k: int, t: float) -> np.ndarray:
    """Fourier multiplier of ``U(t) = exp(i t Delta_pm)`` on level ``k``."""
    return np.exp(-1j * t * dispersion(grid, k))


def propagate_spectral(spec: np.ndarray, grid: TorusGrid, k: int, t: float) -> np.ndarray:
    if t == 0:
        return spec
    return spec * propagator_phase(grid, k, t)


def propagate_array(arr: np.ndarray, grid: TorusGrid, k: int, t: float) -> np.ndarray:
    """Free evolution of a position-space level-k array (trailing axes)."""
    if t == 0:
        return arr
    naxes = 2 * k * grid.d
    return ifft_trailing(propagate_spectral(fft_trailing(arr, naxes), grid, k, t), naxes)


def free_propagate(gamma, t: float):
    """Return the marginal ``U(t) gamma``; exact on the grid for every ``t``."""
    if t == 0:
        return gamma
    return gamma.with_data(propagate_array(gamma.data, gamma.grid, gamma.k, t))
