"""Empirical probes of the Strichartz-type bounds and potential-convergence rates.

Everything here measures quantities on desk-scale grids. Nothing is a proof, and
the J-integral estimator in particular reports a Monte Carlo lower bound
for a supremum over a noncompact set.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .collision import Potential, bbgky_error_array, gp_b_array
from .errors import DegenerateInputError, InvalidInputError, InvalidParameterError
from .marginals import Marginal, h_alpha_norm, h_alpha_norm_array, trapezoid_weights
from .spectral import fft_trailing, ifft_trailing, propagator_phase

CSV_COLUMNS = ("N", "k", "alpha", "ratio", "stderr", "seed")


def _free_samples(gamma0: Marginal, T: float, samples: int):
    """Yield ``(t, U(t) gamma0)`` one sample at a time (level-3 stacks do not fit in memory)."""
    if samples < 2:
        raise InvalidParameterError(f"need at least 2 time samples, got {samples}")
    if not T > 0:
        raise InvalidParameterError(f"T must be positive, got {T}")
    g, k = gamma0.grid, gamma0.k
    naxes = 2 * k * g.d
    spec = fft_trailing(gamma0.data, naxes)
    for t in np.linspace(0.0, T, samples):
        yield t, ifft_trailing(spec * propagator_phase(g, k, t), naxes)


def _l2_time(values: np.ndarray, times: np.ndarray) -> float:
    return float(np.sqrt(np.dot(trapezoid_weights(times), values**2)))


def strichartz_ratio(gamma0: Marginal, alpha: float, T: float, samples: int = 65,
                     kappa0: float = 1.0) -> float:
    """``||B_{k+1} U(t) gamma0||_{L^2_t H^alpha_k} / ||gamma0||_{H^alpha_{k+1}}``."""
    if gamma0.k < 2:
        raise InvalidInputError("the collision operator needs a marginal with k+1 >= 2")
    denom = h_alpha_norm(gamma0, alpha)
    if denom == 0:
        raise DegenerateInputError("ratio undefined for zero input")
    g = gamma0.grid
    times, norms = [], []
    for t, free in _free_samples(gamma0, T, samples):
        times.append(t)
        norms.append(h_alpha_norm_array(gp_b_array(free, gamma0.k, g.d, kappa0), g, gamma0.k - 1, alpha))
    return _l2_time(np.array(norms), np.array(times)) / denom


def error_operator_ratio(gamma0: Marginal, pot: Potential, alpha: float, T: float,
                         samples: int = 65) -> float:
    """``||B^error_N U(t) gamma0||_{L^2_t H^alpha} / ||gamma0||_{H^alpha}``."""
    denom = h_alpha_norm(gamma0, alpha)
    if denom == 0:
        raise DegenerateInputError("ratio undefined for zero input")
    times, norms = [], []
    for t, free in _free_samples(gamma0, T, samples):
        times.append(t)
        err = bbgky_error_array(free, gamma0.k, pot, pot.N)
        norms.append(h_alpha_norm_array(err, gamma0.grid, gamma0.k, alpha))
    return _l2_time(np.array(norms), np.array(times)) / denom


@dataclass
class ScalingFit:
    N: np.ndarray
    values: np.ndarray
    slope: float
    ci: tuple
    predicted: float | None = None
    extra: dict = field(default_factory=dict)

    def decreasing(self) -> bool:
        return bool(np.all(np.diff(self.values) < 0))


def loglog_slope(x, y) -> float:
    x, y = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    return float(np.polyfit(x, y, 1)[0])


def bootstrap_slope_ci(x, y, n_boot: int = 2000, level: float = 0.95, seed: int = 0) -> tuple:
    """Percentile bootstrap interval for the log-log slope, resampling (x, y) pairs."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    rng = np.random.default_rng(seed)
    lx, ly = np.log(x), np.log(y)
    slopes = []
    for _ in range(n_boot):
        idx = rng.integers(0, x.size, x.size)
        if np.unique(lx[idx]).size < 2:
            continue
        slopes.append(np.polyfit(lx[idx], ly[idx], 1)[0])
    tail = 100 * (1 - level) / 2
    lo, hi = np.percentile(slopes, [tail, 100 - tail])
    return float(lo), float(hi)


def bbgky_error_scaling(gamma0: Marginal, potentials, alpha: float, T: float,
                        samples: int = 33, n_boot: int = 2000, seed: int = 0) -> ScalingFit:
    """Error-operator ratios across a potential family ordered by N, plus a log-log fit.

    If any ratio vanishes (k = 1, constant potential) the slope and its
    interval are NaN.
    """
    potentials = sorted(potentials, key=lambda p: p.N)
    Ns = np.array([p.N for p in potentials], dtype=float)
    ratios = np.array([error_operator_ratio(gamma0, p, alpha, T, samples) for p in potentials])
    d = gamma0.grid.d
    beta = potentials[0].beta if potentials else 0.0
    predicted = beta * (d + 2 * alpha - 1) - 1
    if len(potentials) < 2 or np.any(ratios <= 0):
        return ScalingFit(Ns, ratios, math.nan, (math.nan, math.nan), predicted)
    return ScalingFit(Ns, ratios, loglog_slope(Ns, ratios),
                      bootstrap_slope_ci(Ns, ratios, n_boot, seed=seed), predicted)


def holder_factor(pot: Potential, delta: float, modes=None) -> float:
    """``max_{q != 0} |V_N^(q) - V_N^(0)| / |q|^delta`` over integer mode vectors."""
    if not 0 < delta <= 1:
        raise InvalidParameterError(f"delta must lie in (0, 1], got {delta}")
    g = pot.grid
    if modes is None:
        m = np.arange(-(g.M // 2), g.M // 2)
        modes = np.stack(np.meshgrid(*([m] * g.d), indexing="ij"), axis=-1).reshape(-1, g.d)
    modes = np.asarray(modes, dtype=float).reshape(-1, g.d)
    modes = modes[np.any(modes != 0, axis=1)]
    q = 2 * np.pi / g.L * np.linalg.norm(modes, axis=1)
    vq = pot.spectrum(modes)
    v0 = pot.spectrum(np.zeros(g.d))[0]
    return float(np.max(np.abs(vq - v0) / q**delta))


def potential_difference_rate(potentials, delta: float, modes=None, k: int = 1) -> ScalingFit:
    """Hölder factor per N and its fitted decay; the predicted exponent is ``-delta*beta``.

    ``extra`` carries the inputs of the ``k/N ||V^||_inf`` bound.
    """
    potentials = sorted(potentials, key=lambda p: p.N)
    Ns = np.array([p.N for p in potentials], dtype=float)
    vals = np.array([holder_factor(p, delta, modes) for p in potentials])
    g = potentials[0].grid
    m = np.arange(-(g.M // 2), g.M // 2)
    allm = np.stack(np.meshgrid(*([m] * g.d), indexing="ij"), axis=-1).reshape(-1, g.d)
    sup = np.array([np.max(np.abs(p.spectrum(allm))) for p in potentials])
    extra = {"vhat_sup": sup, "chi2_bound": k / Ns * sup}
    beta = potentials[0].beta
    if len(potentials) < 2 or np.any(vals <= 0):
        slope = math.nan
    else:
        slope = loglog_slope(Ns, vals)
    return ScalingFit(Ns, vals, slope, (math.nan, math.nan), -delta * beta, extra)


# J-integral Monte Carlo -------------------------------------------------------

def _bracket2(v: np.ndarray) -> np.ndarray:
    return 1.0 + np.sum(v * v, axis=-1)


def _t_log_density(z2: np.ndarray, dim: int, nu: float) -> np.ndarray:
    """Log density of a standard multivariate Student-t at squared radius ``z2``."""
    return (gammaln((nu + dim) / 2) - gammaln(nu / 2) - dim / 2 * np.log(nu * np.pi)
            - (nu + dim) / 2 * np.log1p(z2 / nu))


def _t_draws(rng, n: int, dim: int, nu: float):
    z = rng.standard_normal((n, dim))
    w = np.sqrt(rng.chisquare(nu, n) / nu)
    return z / w[:, None]


def _orthonormal_complement(b: np.ndarray) -> np.ndarray:
    """Per-row orthonormal basis of the plane orthogonal to ``b``: shape (n, d-1, d)."""
    n, d = b.shape
    bhat = b / np.linalg.norm(b, axis=1, keepdims=True)
    if d == 2:
        return np.stack([-bhat[:, 1], bhat[:, 0]], axis=-1)[:, None, :]
    helper = np.zeros_like(bhat)
    use_x = np.abs(bhat[:, 0]) < 0.9
    helper[use_x, 0] = 1.0
    helper[~use_x, 1] = 1.0
    e1 = np.cross(bhat, helper)
    e1 /= np.linalg.norm(e1, axis=1, keepdims=True)
    e2 = np.cross(bhat, e1)
    return np.stack([e1, e2], axis=1)


@dataclass
class JDraws:
    """Common random numbers shared across parameter points, alpha and epsilon."""
    q: np.ndarray
    q_logpdf: np.ndarray
    perp: np.ndarray
    perp_logpdf: np.ndarray
    normal: np.ndarray

    @classmethod
    def make(cls, d: int, samples: int, seed: int, nu: float = 1.5):
        rng = np.random.default_rng(seed)
        q = _t_draws(rng, samples, d, nu)
        perp = _t_draws(rng, samples, d - 1, nu)
        return cls(q, _t_log_density(np.sum(q * q, 1), d, nu), perp,
                   _t_log_density(np.sum(perp * perp, 1), d - 1, nu), rng.standard_normal(samples))


def j_integrand_samples(tau: float, u1: np.ndarray, alpha: float, epsilon: float,
                        draws: JDraws) -> np.ndarray:
    """Importance weights whose mean estimates ``J_eps(tau, u1)``.

    The energy delta is linear in ``q'``: ``a - 2 b.q'`` with ``b = u1 + q`` and
    ``a = tau + |b|^2 + |q|^2`` (``tau`` absorbs the remaining momenta). The
    component of ``q'`` along ``b`` is drawn from the Gaussian regularized
    delta, so ``epsilon = 0`` gives the exact hyperplane integral.
    """
    u1 = np.asarray(u1, dtype=float)
    q = draws.q
    b = u1 + q
    bn = np.linalg.norm(b, axis=1)
    a = tau + bn**2 + np.sum(q * q, 1)
    s = (a + epsilon * draws.normal) / (2 * bn)
    basis = _orthonormal_complement(b)
    qp = s[:, None] * (b / bn[:, None]) + np.einsum("nj,njd->nd", draws.perp, basis)
    ratio = _bracket2(u1[None, :]) / (_bracket2(b - qp) * _bracket2(q) * _bracket2(qp))
    logw = -draws.q_logpdf - draws.perp_logpdf - np.log(2 * bn)
    return ratio**alpha * np.exp(logw)


@dataclass
class JEstimate:
    value: float
    stderr: float
    tau: float
    u1: np.ndarray
    alpha: float
    d: int
    epsilon: float
    samples: int
    seed: int


def j_parameter_points(d: int, n_points: int, seed: int, tau_max: float = 20.0,
                       u_max: float = 6.0) -> list:
    rng = np.random.default_rng(seed + 1)
    taus = rng.uniform(-tau_max, tau_max, n_points)
    u = rng.standard_normal((n_points, d))
    u *= (u_max * rng.uniform(0, 1, n_points) ** (1 / d) / np.linalg.norm(u, axis=1))[:, None]
    return list(zip(taus, u))


def estimate_J_constant(alpha: float, d: int, epsilon: float, samples: int = 20000,
                        n_points: int = 48, seed: int = 0, points=None) -> JEstimate:
    """Max over sampled ``(tau, u1)`` of the epsilon-regularized J integral.

    The same draws serve every point, so estimates at different ``alpha``
    or ``epsilon`` are paired comparisons.
    """
    if d not in (2, 3):
        raise InvalidParameterError(f"J estimator supports d in {{2, 3}}, got {d}")
    if epsilon < 0:
        raise InvalidParameterError(f"epsilon must be >= 0, got {epsilon}")
    if samples < 10_000:
        raise InvalidParameterError(f"need at least 10^4 Monte Carlo samples, got {samples}")
    draws = JDraws.make(d, samples, seed)
    points = j_parameter_points(d, n_points, seed) if points is None else points
    best = None
    for tau, u1 in points:
        w = j_integrand_samples(tau, u1, alpha, epsilon, draws)
        mean = float(np.mean(w))
        if best is None or mean > best[0]:
            best = (mean, float(np.std(w, ddof=1) / math.sqrt(samples)), float(tau), np.asarray(u1))
    return JEstimate(best[0], best[1], best[2], best[3], alpha, d, epsilon, samples, seed)


def epsilon_sweep(alpha: float, d: int, epsilons=(0.5, 0.25, 0.125), **kw) -> list:
    return [estimate_J_constant(alpha, d, e, **kw) for e in epsilons]


# CSV emission ----------------------------------------------------------------------

def rows_to_csv(rows) -> str:
    """Render dict rows with the standard columns; floats use ``repr`` for determinism."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in rows:
        writer.writerow([_fmt(r.get(c, "")) for c in CSV_COLUMNS])
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def scaling_rows(fit: ScalingFit, k: int, alpha: float, seed: int = 0) -> list:
    return [{"N": int(n), "k": k, "alpha": alpha, "ratio": float(v), "stderr": "", "seed": seed}
            for n, v in zip(fit.N, fit.values)]
