"""Pair potentials and the GP / BBGKY collision operators."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special

from . import kernels
from .errors import (InvalidConfigurationError, InvalidInputError,
                     InvalidParameterError, UnderResolvedPotentialError)
from .marginals import Marginal, MarginalSequence
from .spectral import TorusGrid


class Profile:
    """Unscaled, unit-integral, radially symmetric pair-potential profile on R^d."""

    name = "profile"
    #: diameter of the effective support, used for resolution checks
    diameter: float

    def __call__(self, r: np.ndarray, d: int) -> np.ndarray:
        raise NotImplementedError

    def ft(self, q: np.ndarray, d: int) -> np.ndarray:
        """Continuous Fourier transform ``int V(x) exp(-i q.x) dx`` at ``|q|``."""
        raise NotImplementedError

    def to_dict(self) -> dict:
        return {"name": self.name}


@dataclass
class GaussianProfile(Profile):
    width: float = 0.6
    name: str = field(default="gaussian", init=False)

    @property
    def diameter(self) -> float:
        return 4 * self.width

    def __call__(self, r, d):
        s2 = self.width**2
        return (2 * np.pi * s2) ** (-d / 2) * np.exp(-np.asarray(r) ** 2 / (2 * s2))

    def ft(self, q, d):
        return np.exp(-(self.width**2) * np.asarray(q, dtype=float) ** 2 / 2)

    def to_dict(self):
        return {"name": self.name, "width": self.width}


@dataclass
class CosineBumpProfile(Profile):
    """``c * (1 + cos(pi r / a)) / 2`` on ``r < a``, normalized to unit integral."""

    radius: float = 1.2
    name: str = field(default="cosine", init=False)

    @property
    def diameter(self) -> float:
        return 2 * self.radius

    def _norm(self, d):
        a = self.radius
        shell = 2 * np.pi ** (d / 2) / math.gamma(d / 2)
        val, _ = integrate.quad(lambda r: r ** (d - 1) * (1 + np.cos(np.pi * r / a)) / 2, 0, a)
        return 1.0 / (shell * val)

    def __call__(self, r, d):
        r = np.asarray(r, dtype=float)
        a = self.radius
        return np.where(r < a, self._norm(d) * (1 + np.cos(np.pi * r / a)) / 2, 0.0)

    def ft(self, q, d):
        q = np.atleast_1d(np.asarray(q, dtype=float))
        a = self.radius
        c = self._norm(d)
        out = np.empty_like(q)
        for i, qi in enumerate(q.ravel()):
            f = lambda r: c * (1 + np.cos(np.pi * r / a)) / 2
            if qi == 0:
                out.flat[i] = 1.0
            elif d == 1:
                out.flat[i] = 2 * integrate.quad(lambda r: f(r) * np.cos(qi * r), 0, a, limit=200)[0]
            else:
                nu = d / 2 - 1
                val = integrate.quad(lambda r: f(r) * special.jv(nu, qi * r) * r ** (d / 2), 0, a, limit=200)[0]
                out.flat[i] = (2 * np.pi) ** (d / 2) * qi ** (1 - d / 2) * val
        return out

    def to_dict(self):
        return {"name": self.name, "radius": self.radius}


class GridProfile(Profile):
    """Profile given as samples on a grid, centred at index 0 (periodic)."""

    name = "grid"

    def __init__(self, grid: TorusGrid, values: np.ndarray):
        values = np.asarray(values, dtype=float)
        if values.shape != grid.field_shape(1):
            raise InvalidInputError(f"profile needs shape {grid.field_shape(1)}, got {values.shape}")
        self.grid = grid
        self.values = values
        x2 = _centered_r2(grid)
        mass = values.sum()
        sigma = math.sqrt(max((values * x2).sum() / mass / grid.d, 0.0)) if mass > 0 else 0.0
        self.diameter = 4 * sigma

    def ft(self, q, d):
        """Direct non-uniform DFT ``h^d sum_x V(x) exp(-i q.x)`` on centred coordinates."""
        g = self.grid
        q = np.asarray(q, dtype=float)
        xs = np.meshgrid(*([g.centered_positions] * g.d), indexing="ij")
        flat = self.values.ravel()
        qq = q.reshape(-1, g.d)
        phase = sum(np.outer(qq[:, a], xs[a].ravel()) for a in range(g.d))
        return (g.cell_volume * np.exp(-1j * phase) @ flat).real.reshape(q.shape[:-1] if g.d > 1 else q.shape)

    def to_dict(self):
        return {"name": self.name}


def _centered_r2(grid: TorusGrid) -> np.ndarray:
    xs = np.meshgrid(*([grid.centered_positions] * grid.d), indexing="ij")
    return sum(x**2 for x in xs)


PROFILES = {"gaussian": GaussianProfile, "cosine": CosineBumpProfile}


def profile_from_dict(spec: dict) -> Profile:
    spec = dict(spec)
    name = spec.pop("name", "gaussian")
    if name not in PROFILES:
        raise InvalidParameterError(f"unknown potential profile {name!r}")
    return PROFILES[name](**spec)


@dataclass(frozen=True, eq=False)
class Potential:
    """Scaled periodized pair potential ``V_N(x) = N^{d beta} V(N^beta x)``."""

    grid: TorusGrid
    values: np.ndarray
    beta: float
    N: float
    profile: Profile | None = None
    integral: float = 0.0

    @classmethod
    def constant(cls, grid: TorusGrid, value: float = 1.0, N: float = 1) -> "Potential":
        vals = np.full(grid.field_shape(1), float(value))
        return cls(grid, vals, 0.0, N, None, float(vals.sum() * grid.cell_volume))

    @classmethod
    def zero(cls, grid: TorusGrid, N: float = 1) -> "Potential":
        return cls.constant(grid, 0.0, N)

    @property
    def circulant(self) -> np.ndarray:
        c = self.__dict__.get("_circ")
        if c is None:
            c = kernels.circulant(self.values, self.grid.d)
            object.__setattr__(self, "_circ", c)
        return c

    def spectrum(self, modes: np.ndarray) -> np.ndarray:
        """Direct DFT ``h^d sum_x V_N(x) exp(-i q.x)`` at integer mode vectors."""
        g = self.grid
        modes = np.atleast_2d(np.asarray(modes, dtype=float).reshape(-1, g.d))
        q = 2 * np.pi / g.L * modes
        xs = np.meshgrid(*([g.positions] * g.d), indexing="ij")
        phase = sum(np.outer(q[:, a], xs[a].ravel()) for a in range(g.d))
        return g.cell_volume * np.exp(-1j * phase) @ self.values.ravel()


def _periodized(profile: Profile, grid: TorusGrid, scale: float) -> np.ndarray:
    """``scale^d * sum_n V(scale * (x + n L))`` sampled on the grid."""
    xs = np.meshgrid(*([grid.positions] * grid.d), indexing="ij")
    out = np.zeros(grid.field_shape(1))
    reach = max(2, int(math.ceil(profile.diameter / scale / grid.L)) + 1)
    for shift in itertools.product(range(-reach, reach + 1), repeat=grid.d):
        r2 = sum((x + n * grid.L) ** 2 for x, n in zip(xs, shift))
        out += profile(scale * np.sqrt(r2), grid.d)
    return scale**grid.d * out


def make_potential(profile, beta: float, N: float, grid: TorusGrid | None = None) -> Potential:
    """Scale a profile to particle number ``N`` and sample it periodically on ``grid``.

    ``profile`` is a :class:`Profile` (analytic, sampled directly) or a
    :class:`GridProfile`, whose scaled version is built spectrally from
    ``V_N^(q) = V^(N^-beta q)``.
    """
    if not 0 <= beta < 1:
        raise InvalidParameterError(f"beta must lie in [0, 1), got {beta}")
    if N < 1:
        raise InvalidParameterError(f"N must be >= 1, got {N}")
    if isinstance(profile, GridProfile):
        grid = profile.grid if grid is None else grid
        if grid != profile.grid:
            raise InvalidInputError("grid profile sampled on a different grid")
    elif grid is None:
        raise InvalidInputError("analytic profiles need a grid")
    scale = float(N) ** beta
    diameter = profile.diameter / scale
    if diameter < 2 * grid.h:
        raise UnderResolvedPotentialError(
            f"scaled support {diameter:.4g} is narrower than two grid cells ({2 * grid.h:.4g}); "
            f"increase M or lower N^beta = {scale:.4g}"
        )
    if isinstance(profile, GridProfile):
        if beta == 0:
            values = profile.values.copy()
        else:
            modes = np.meshgrid(*([grid.wavenumbers] * grid.d), indexing="ij")
            q = np.stack(modes, axis=-1) / scale
            coeffs = profile.ft(q if grid.d > 1 else q[..., 0], grid.d)
            values = np.real(np.fft.ifftn(coeffs)) * grid.M**grid.d / grid.L**grid.d
    else:
        values = _periodized(profile, grid, scale)
    # spectral rescaling of sampled profiles may ring slightly below zero
    if np.any(values < -1e-6 * np.max(np.abs(values))):
        raise InvalidInputError("scaled potential has negative values")
    return Potential(grid, values, float(beta), float(N), profile,
                     float(values.sum() * grid.cell_volume))


# GP collision operators ---------------------------------------------------

def _check_j(gamma: Marginal, j: int) -> None:
    if gamma.k < 2:
        raise InvalidInputError("collision operators need a marginal with k+1 >= 2")
    if not 1 <= j <= gamma.k - 1:
        raise InvalidInputError(f"index j={j} out of range 1..{gamma.k - 1}")


def gp_b_plus(gamma: Marginal, j: int) -> Marginal:
    """``B^+_{j;k+1}``: contract particle k+1 (both sides) onto ``x_j``."""
    _check_j(gamma, j)
    return Marginal(gamma.k - 1, gamma.grid, kernels.b_plus_array(gamma.data, gamma.k, j, gamma.grid.d))


def gp_b_minus(gamma: Marginal, j: int) -> Marginal:
    """``B^-_{j;k+1}``: contract particle k+1 (both sides) onto ``x'_j``."""
    _check_j(gamma, j)
    return Marginal(gamma.k - 1, gamma.grid, kernels.b_minus_array(gamma.data, gamma.k, j, gamma.grid.d))


def gp_b_array(arr: np.ndarray, k1: int, d: int, kappa0: float = 1.0) -> np.ndarray:
    """``kappa0 * sum_j (B^+_j - B^-_j)`` on a (batched) level-``k1`` array."""
    out = 0
    for j in range(1, k1):
        out = out + kernels.b_plus_array(arr, k1, j, d) - kernels.b_minus_array(arr, k1, j, d)
    return kappa0 * out


def gp_b_full(gamma: Marginal, kappa0: float = 1.0) -> Marginal:
    if gamma.k < 2:
        raise InvalidInputError("collision operators need a marginal with k+1 >= 2")
    return Marginal(gamma.k - 1, gamma.grid, gp_b_array(gamma.data, gamma.k, gamma.grid.d, kappa0))


# BBGKY interaction operators ------------------------------------------------

def bbgky_main_array(arr: np.ndarray, k1: int, pot: Potential, N: float) -> np.ndarray:
    g = pot.grid
    k = k1 - 1
    if N < k:
        raise InvalidConfigurationError(f"N={N} is smaller than k={k}")
    pref = (N - k) / N
    out = 0
    if pref == 0:
        return np.zeros(arr.shape[:arr.ndim - 2 * k1 * g.d] + g.field_shape(2 * k), dtype=complex)
    for j in range(1, k1):
        out = out + kernels.b_main_pm_array(arr, k1, j, g.d, g.h, pot.circulant, primed_side=False)
        out = out - kernels.b_main_pm_array(arr, k1, j, g.d, g.h, pot.circulant, primed_side=True)
    return pref * out


def bbgky_b_main(gamma: Marginal, pot: Potential, N: float) -> Marginal:
    """``((N-k)/N) sum_j int dy [V_N(x_j-y) - V_N(x'_j-y)] gamma(x,y;x',y)``."""
    if gamma.k < 2:
        raise InvalidInputError("main term needs a marginal with k+1 >= 2")
    return Marginal(gamma.k - 1, gamma.grid, bbgky_main_array(gamma.data, gamma.k, pot, N))


def error_multiplier(pot: Potential, k: int, N: float) -> np.ndarray:
    """Broadcastable ``(1/N) sum_{i<j} [V_N(x_i-x_j) - V_N(x'_i-x'_j)]`` for level k."""
    g = pot.grid
    pairs = list(itertools.combinations(range(k), 2))
    if not pairs:
        return np.zeros((1,) * (2 * k * g.d))
    unprimed = kernels.pair_field(pot.values, 2 * k, g.d, pairs)
    primed = kernels.pair_field(pot.values, 2 * k, g.d, [(i + k, j + k) for i, j in pairs])
    return (unprimed - primed) / N


def bbgky_error_array(arr: np.ndarray, k: int, pot: Potential, N: float) -> np.ndarray:
    if k < 2:
        return np.zeros_like(arr)
    return error_multiplier(pot, k, N) * arr


def bbgky_b_error(gamma: Marginal, pot: Potential, N: float) -> Marginal:
    """``(1/N) sum_{i<j} [V_N(x_i-x_j) - V_N(x'_i-x'_j)] gamma`` (pointwise)."""
    if N < 1:
        raise InvalidParameterError(f"N must be >= 1, got {N}")
    return gamma.with_data(bbgky_error_array(gamma.data, gamma.k, pot, N))


def bbgky_b(GammaN: MarginalSequence, pot: Potential, N: float) -> MarginalSequence:
    """Assemble ``(B_N Gamma_N)^(k) = B^main gamma^(k+1) + B^error gamma^(k)`` for k <= K."""
    K = GammaN.K
    if K > N:
        raise InvalidConfigurationError(f"truncation level K={K} exceeds N={N}")
    out = []
    for k in range(1, K + 1):
        data = bbgky_error_array(GammaN[k].data, k, pot, N)
        if k + 1 <= K:
            data = data + bbgky_main_array(GammaN[k + 1].data, k + 1, pot, N)
        out.append(Marginal(k, GammaN.grid, data))
    return GammaN.replace(out)


def gp_b(Gamma: MarginalSequence, kappa0: float = 1.0) -> MarginalSequence:
    """``(B Gamma)^(k) = kappa0 B_{k+1} gamma^(k+1)`` for k <= K (zero at k = K)."""
    out = []
    for k in range(1, Gamma.K + 1):
        if k + 1 <= Gamma.K:
            out.append(gp_b_full(Gamma[k + 1], kappa0))
        else:
            out.append(Marginal.zeros(k, Gamma.grid))
    return Gamma.replace(out)
