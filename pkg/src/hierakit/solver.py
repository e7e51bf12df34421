"""Mild-solution solvers for truncated GP and (K,N)-BBGKY hierarchies.

Sign conventions follow the differential form

    i d_t gamma^(k) = sum_j [-Delta_{x_j}, gamma^(k)] + (B Gamma)^(k),

with ``U(t) = exp(i t Delta_pm)``, so the mild form is
``Gamma(t) = U(t) Gamma_0 - i int_0^t U(t-s) (B Gamma)(s) ds``.
Factorized solutions of this hierarchy are driven by the defocusing NLS
``i d_t phi = -Delta phi + kappa0 |phi|^2 phi``.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass

import numpy as np

from .collision import Potential, bbgky_error_array, bbgky_main_array, gp_b_array
from .errors import (InvalidConfigurationError, InvalidInputError, InvalidParameterError,
                     NonContractiveError, UnsupportedDepthError)
from .marginals import Marginal, MarginalSequence, Trajectory, h_alpha_norm_array
from .spectral import TorusGrid, dispersion, fft_trailing, ifft_trailing

log = logging.getLogger(__name__)

MAX_DUHAMEL_DEPTH = 3


@dataclass
class HierarchyProblem:
    """Truncated hierarchy on ``[0, T]`` sampled at ``steps + 1`` uniform times."""

    kind: str
    K: int
    T: float
    steps: int
    alpha: float = 1.0
    xi: float = 0.3
    kappa0: float = 1.0
    N: float | None = None
    potential: Potential | None = None
    picard_tol: float = 1e-10
    picard_max_iter: int = 60
    include_error: bool = True

    def __post_init__(self):
        if self.kind not in ("gp", "bbgky"):
            raise InvalidParameterError(f"kind must be 'gp' or 'bbgky', got {self.kind!r}")
        if self.K < 1:
            raise InvalidParameterError(f"K must be >= 1, got {self.K}")
        if not self.T > 0:
            raise InvalidParameterError(f"T must be positive, got {self.T}")
        if self.steps < 2:
            raise InvalidParameterError(f"steps must be >= 2, got {self.steps}")
        if self.kind == "bbgky":
            if self.N is None or self.potential is None:
                raise InvalidConfigurationError("BBGKY problems need N and a potential")
            if self.K > self.N:
                raise InvalidConfigurationError(f"truncation level K={self.K} exceeds N={self.N}")

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.steps + 1)

    def describe(self) -> dict:
        out = {"kind": self.kind, "K": self.K, "T": self.T, "steps": self.steps,
               "alpha": self.alpha, "xi": self.xi}
        if self.kind == "gp":
            out["kappa0"] = self.kappa0
        else:
            out.update(N=self.N, beta=self.potential.beta, include_error=self.include_error)
        return out


# operators on stacked (batched) level arrays -----------------------------------

def main_operator(problem: HierarchyProblem, arr: np.ndarray, k1: int, d: int) -> np.ndarray:
    """Level-raising part: ``kappa0 B_{k1}`` (GP) or ``B^main_{N;k1}`` (BBGKY)."""
    if problem.kind == "gp":
        return gp_b_array(arr, k1, d, problem.kappa0)
    return bbgky_main_array(arr, k1, problem.potential, problem.N)


def interaction(problem: HierarchyProblem, levels: list, d: int) -> list:
    """``(B Gamma)^(k)`` for k = 1..K from position-space level stacks."""
    K = len(levels)
    out = []
    for k in range(1, K + 1):
        if k < K:
            term = main_operator(problem, levels[k], k + 1, d)
        else:
            term = np.zeros_like(levels[k - 1])
        if problem.kind == "bbgky" and problem.include_error and k >= 2:
            term = term + bbgky_error_array(levels[k - 1], k, problem.potential, problem.N)
        out.append(term)
    return out


def _phases(grid: TorusGrid, k: int, times: np.ndarray, sign: float = 1.0):
    E = dispersion(grid, k)
    for t in times:
        yield np.exp(-1j * sign * t * E)


def propagate_stack(spec: np.ndarray, grid: TorusGrid, k: int, times: np.ndarray,
                    sign: float = 1.0) -> np.ndarray:
    """Multiply sample ``i`` of a spectral stack by ``U(sign * t_i)``."""
    out = np.empty_like(spec)
    for i, ph in enumerate(_phases(grid, k, times, sign)):
        out[i] = spec[i] * ph
    return out


def duhamel_integral(f_spec: np.ndarray, grid: TorusGrid, k: int, times: np.ndarray) -> np.ndarray:
    """Spectral stack of ``int_0^{t_i} U(t_i - s) f(s) ds`` by composite trapezoid.

    Uses ``U(t - s) = U(t) U(-s)``, so one cumulative sum serves every ``t_i``.
    """
    g = propagate_stack(f_spec, grid, k, times, sign=-1.0)
    out = np.zeros_like(g)
    acc = np.zeros_like(g[0])
    for i in range(1, times.size):
        acc = acc + 0.5 * (times[i] - times[i - 1]) * (g[i - 1] + g[i])
        out[i] = acc
    return propagate_stack(out, grid, k, times, sign=1.0)


def _naxes(grid, k):
    return 2 * k * grid.d


def _free_stack(gamma0: Marginal, times: np.ndarray) -> np.ndarray:
    g, k = gamma0.grid, gamma0.k
    spec0 = fft_trailing(gamma0.data, _naxes(g, k))
    out = np.empty((times.size,) + spec0.shape, dtype=complex)
    for i, ph in enumerate(_phases(g, k, times)):
        out[i] = spec0 * ph
    return out


def _prepare(problem: HierarchyProblem, Gamma0: MarginalSequence):
    if Gamma0.K > problem.K:
        raise InvalidInputError(f"initial data has {Gamma0.K} levels, problem truncates at {problem.K}")
    if problem.potential is not None and problem.potential.grid != Gamma0.grid:
        raise InvalidInputError("potential and initial data live on different grids")
    return Gamma0.grid, problem.times


def _distance(grid, a: list, b: list, alpha: float, xi: float) -> float:
    total = 0.0
    for k, (x, y) in enumerate(zip(a, b), start=1):
        total = total + xi**k * h_alpha_norm_array(x - y, grid, k, alpha, spectral=True)
    return float(np.max(total))


def picard_solve(problem: HierarchyProblem, Gamma0: MarginalSequence) -> Trajectory:
    """Fixed-point iteration of the Duhamel map on the whole sampled trajectory.

    Diagnostics (``traj.diagnostics``) record iteration count, successive
    iterate distances in ``L^inf_t calH^alpha_xi`` and their ratios.
    """
    grid, times = _prepare(problem, Gamma0)
    K = problem.K
    free = [_free_stack(Gamma0[k], times) for k in range(1, K + 1)]
    current = [f.copy() for f in free]
    distances, ratios = [], []
    converged = False
    for it in range(1, problem.picard_max_iter + 1):
        pos = [ifft_trailing(c, _naxes(grid, k)) for k, c in enumerate(current, start=1)]
        forcing = interaction(problem, pos, grid.d)
        del pos
        new = []
        for k, f in enumerate(forcing, start=1):
            integral = duhamel_integral(fft_trailing(f, _naxes(grid, k)), grid, k, times)
            new.append(free[k - 1] - 1j * integral)
        dist = _distance(grid, new, current, problem.alpha, problem.xi)
        current = new
        distances.append(dist)
        if len(distances) > 1:
            prev = distances[-2]
            ratios.append(dist / prev if prev > 0 else 0.0)
        log.debug("picard iterate %d: distance %.3e", it, dist)
        if dist < problem.picard_tol:
            converged = True
            break
        if len(ratios) >= 3 and all(r >= 1 for r in ratios[-3:]):
            raise NonContractiveError(
                f"Picard iteration is not contracting (ratios {ratios[-3:]}); reduce T below {problem.T}",
                ratios, problem.N)
    if not converged:
        raise NonContractiveError(
            f"no convergence within {problem.picard_max_iter} iterations (last distance {distances[-1]:.3e}); "
            f"reduce T below {problem.T}", ratios, problem.N)
    levels = [ifft_trailing(c, _naxes(grid, k)) for k, c in enumerate(current, start=1)]
    diag = {"solver": "picard", "iterations": len(distances), "distances": distances,
            "ratios": ratios, "contraction_ratio": ratios[-1] if ratios else 0.0,
            "max_ratio": max(ratios) if ratios else 0.0}
    return Trajectory(grid, times, levels, problem.xi, problem.alpha, diag)


def _check_depth(j: int) -> None:
    if j < 0:
        raise InvalidParameterError(f"depth must be >= 0, got {j}")
    if j > MAX_DUHAMEL_DEPTH:
        raise UnsupportedDepthError(f"Duhamel depth {j} exceeds the supported maximum {MAX_DUHAMEL_DEPTH}")


def duhamel_terms(Xi: Trajectory, j: int, k: int, problem: HierarchyProblem) -> np.ndarray:
    """Position-space stack of ``Duh_j(Xi)^(k)`` at every sample of ``Xi``.

    ``Duh_j^(k)(t) = -i B_{k+1} int_0^t U(t-s) Duh_{j-1}^(k+1)(s) ds`` with
    ``Duh_0 = Xi``; B is the level-raising operator of ``problem``.
    """
    _check_depth(j)
    if k < 1:
        raise InvalidParameterError(f"level must be >= 1, got {k}")
    if j == 0:
        return Xi.level(k)
    grid, times = Xi.grid, Xi.times
    inner = duhamel_terms(Xi, j - 1, k + 1, problem)
    integral = duhamel_integral(fft_trailing(inner, _naxes(grid, k + 1)), grid, k + 1, times)
    return -1j * main_operator(problem, ifft_trailing(integral, _naxes(grid, k + 1)), k + 1, grid.d)


def _sample_index(times: np.ndarray, t: float) -> int:
    i = int(np.argmin(np.abs(times - t)))
    if abs(times[i] - t) > 1e-12 * max(1.0, abs(times[-1])):
        raise InvalidInputError(f"t={t} is not a sample time of the trajectory")
    return i


def duhamel_term(Xi: Trajectory, j: int, k: int, t: float, problem: HierarchyProblem) -> Marginal:
    """``Duh_j(Xi)^(k)(t)`` for a sample time ``t`` of ``Xi``."""
    _check_depth(j)
    i = _sample_index(Xi.times, t)
    return Marginal(k, Xi.grid, duhamel_terms(Xi, j, k, problem)[i])


def duhamel_series_solve(problem: HierarchyProblem, Gamma0: MarginalSequence, J: int) -> Trajectory:
    """Iterated Duhamel expansion ``Gamma = sum_{j<=J} F_j`` with ``F_0 = U(t) Gamma_0``.

    ``F_j = -i int_0^t U(t-s) (B F_{j-1})(s) ds``.  For the GP hierarchy the
    level-raising B makes ``F_j^(k)`` vanish once ``k + j > K``, so the
    expansion is exact at ``J >= K - 1``; equivalently
    ``F_j^(k) = -i int U(t-s) Duh_{j-1}(B U Gamma_0)^(k)(s) ds``.
    """
    _check_depth(J)
    grid, times = _prepare(problem, Gamma0)
    K = problem.K
    term = [_free_stack(Gamma0[k], times) for k in range(1, K + 1)]
    total = [t.copy() for t in term]
    for _ in range(J):
        pos = [ifft_trailing(c, _naxes(grid, k)) for k, c in enumerate(term, start=1)]
        forcing = interaction(problem, pos, grid.d)
        term = [-1j * duhamel_integral(fft_trailing(f, _naxes(grid, k)), grid, k, times)
                for k, f in enumerate(forcing, start=1)]
        total = [a + b for a, b in zip(total, term)]
    levels = [ifft_trailing(c, _naxes(grid, k)) for k, c in enumerate(total, start=1)]
    diag = {"solver": "duhamel", "depth": J}
    return Trajectory(grid, times, levels, problem.xi, problem.alpha, diag)


def hierarchy_residual(traj: Trajectory, problem: HierarchyProblem) -> dict:
    """Central-difference residual of the differential hierarchy, in ``H^0``.

    Returns ``times`` (interior samples), ``residual`` and ``scale`` with
    shape ``(K, samples - 2)``; ``scale`` holds ``||i d_t gamma^(k)||``.
    """
    if traj.times.size < 3:
        raise InvalidInputError("residual needs at least three samples")
    grid, t = traj.grid, traj.times
    forcing = interaction(problem, [lvl[1:-1] for lvl in traj.levels], grid.d)
    dt2 = (t[2:] - t[:-2])
    res, scale = [], []
    for k, lvl in enumerate(traj.levels, start=1):
        shape = (-1,) + (1,) * (lvl.ndim - 1)
        deriv = 1j * (lvl[2:] - lvl[:-2]) / dt2.reshape(shape)
        spec = fft_trailing(lvl[1:-1], _naxes(grid, k))
        commutator = ifft_trailing(spec * dispersion(grid, k), _naxes(grid, k))
        r = deriv - commutator - forcing[k - 1]
        res.append(h_alpha_norm_array(r, grid, k, 0.0))
        scale.append(h_alpha_norm_array(deriv, grid, k, 0.0))
    return {"times": t[1:-1], "residual": np.array(res), "scale": np.array(scale)}


def count_duhamel_summands(k: int, j: int) -> int:
    """Number of operator strings ``B_{j_1;k+1} ... B_{j_m;k+m}``: ``prod_{i<j} (k+i)``."""
    if k < 1 or j < 0:
        raise InvalidParameterError(f"need k >= 1 and j >= 0, got k={k}, j={j}")
    out = 1
    for i in range(j):
        out *= k + i
    return out


def enumerate_duhamel_strings(k: int, j: int):
    """All index strings ``(j_1, ..., j_m)`` with ``1 <= j_i <= k + i - 1``."""
    return itertools.product(*[range(1, k + i + 1) for i in range(j)])
