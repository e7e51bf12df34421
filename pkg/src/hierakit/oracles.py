"""Brute-force nested-loop reference implementations.

These are deliberately naive: explicit loops over grid multi-indices and
literal discrete deltas ``h^-d * Kronecker``. They serve as independent
oracles for the vectorized kernels and are only usable on tiny grids.
"""
from __future__ import annotations

import itertools

import numpy as np


def _sites(M: int, d: int):
    return list(itertools.product(range(M), repeat=d))


def _delta(a, b, h, d) -> float:
    return h**-d if a == b else 0.0


def _get(arr, slots):
    return arr[tuple(i for s in slots for i in s)]


def partial_trace_loop(arr, k1: int, M: int, d: int, h: float) -> np.ndarray:
    k = k1 - 1
    out = np.zeros((M,) * (2 * k * d), dtype=complex)
    sites = _sites(M, d)
    for xs in itertools.product(sites, repeat=k):
        for xps in itertools.product(sites, repeat=k):
            acc = 0j
            for y in sites:
                acc += _get(arr, xs + (y,) + xps + (y,))
            out[tuple(i for s in xs + xps for i in s)] = h**d * acc
    return out


def b_pm_loop(arr, k1: int, j: int, M: int, d: int, h: float, primed: bool) -> np.ndarray:
    """Double integral against ``delta(z - y) delta(z - y')`` with ``z = x_j`` or ``x'_j``."""
    k = k1 - 1
    out = np.zeros((M,) * (2 * k * d), dtype=complex)
    sites = _sites(M, d)
    for xs in itertools.product(sites, repeat=k):
        for xps in itertools.product(sites, repeat=k):
            z = xps[j - 1] if primed else xs[j - 1]
            acc = 0j
            for y in sites:
                for yp in sites:
                    w = _delta(z, y, h, d) * _delta(z, yp, h, d)
                    if w:
                        acc += h ** (2 * d) * w * _get(arr, xs + (y,) + xps + (yp,))
            out[tuple(i for s in xs + xps for i in s)] = acc
    return out


def _vdiff(V, a, b, M):
    return V[tuple((ai - bi) % M for ai, bi in zip(a, b))]


def bbgky_main_loop(arr, k1: int, V, N, M: int, d: int, h: float) -> np.ndarray:
    """``((N-k)/N) sum_j h^d sum_y [V(x_j-y) - V(x'_j-y)] gamma(x, y; x', y)``."""
    k = k1 - 1
    out = np.zeros((M,) * (2 * k * d), dtype=complex)
    sites = _sites(M, d)
    for xs in itertools.product(sites, repeat=k):
        for xps in itertools.product(sites, repeat=k):
            acc = 0j
            for j in range(k):
                for y in sites:
                    g = _get(arr, xs + (y,) + xps + (y,))
                    acc += (_vdiff(V, xs[j], y, M) - _vdiff(V, xps[j], y, M)) * g
            out[tuple(i for s in xs + xps for i in s)] = (N - k) / N * h**d * acc
    return out


def bbgky_error_loop(arr, k: int, V, N, M: int, d: int) -> np.ndarray:
    out = np.zeros((M,) * (2 * k * d), dtype=complex)
    sites = _sites(M, d)
    for xs in itertools.product(sites, repeat=k):
        for xps in itertools.product(sites, repeat=k):
            w = 0.0
            for i, j in itertools.combinations(range(k), 2):
                w += _vdiff(V, xs[i], xs[j], M) - _vdiff(V, xps[i], xps[j], M)
            idx = tuple(c for s in xs + xps for c in s)
            out[idx] = w / N * arr[idx]
    return out


def marginal_loop(psi, N: int, k: int, M: int, d: int, h: float) -> np.ndarray:
    out = np.zeros((M,) * (2 * k * d), dtype=complex)
    sites = _sites(M, d)
    for xs in itertools.product(sites, repeat=k):
        for xps in itertools.product(sites, repeat=k):
            acc = 0j
            for rest in itertools.product(sites, repeat=N - k):
                acc += _get(psi, xs + rest) * np.conj(_get(psi, xps + rest))
            out[tuple(i for s in xs + xps for i in s)] = h ** (d * (N - k)) * acc
    return out


def h_alpha_dense(arr, M: int, d: int, k: int, L: float, alpha: float) -> float:
    """``||S^(k,alpha) gamma||`` from an explicitly materialized weight tensor."""
    spec = np.fft.fftn(arr, norm="ortho")
    u = 2 * np.pi / L * np.fft.fftfreq(M, 1.0 / M)
    weight = np.ones(spec.shape)
    for ax in itertools.product(*[range(M)] * (2 * k * d)):
        w = 1.0
        for s in range(2 * k):
            q2 = sum(u[ax[s * d + a]] ** 2 for a in range(d))
            w *= (1 + q2) ** (alpha / 2)
        weight[ax] = w
    h = L / M
    return float(np.sqrt(h ** (2 * k * d) * np.sum(np.abs(weight * spec) ** 2)))
