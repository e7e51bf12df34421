"""Array-level contraction kernels acting on trailing particle-slot axes.

Each function takes raw numpy arrays (optionally with leading batch axes)
and builds an einsum expression over per-slot index letters.  Repeated
letters on the input side take diagonals, which is exactly how the
discrete delta ``h^-d * Kronecker`` collapses the double integrals.
"""
from __future__ import annotations

import string

import numpy as np

_LETTERS = string.ascii_letters


def _slot_letters(nslots: int, d: int, offset: int = 0) -> list:
    need = offset + nslots * d
    if need > len(_LETTERS):
        raise ValueError(f"too many tensor axes for einsum ({need})")
    return [_LETTERS[offset + s * d: offset + (s + 1) * d] for s in range(nslots)]


def partial_trace_array(arr: np.ndarray, k1: int, d: int, h: float) -> np.ndarray:
    """Trace out particle ``k1`` of a level-``k1`` array; result is level ``k1-1``."""
    k = k1 - 1
    s = _slot_letters(2 * k + 1, d)
    unprimed, primed, traced = s[:k], s[k:2 * k], s[2 * k]
    expr = "..." + "".join(unprimed) + traced + "".join(primed) + traced
    out = "..." + "".join(unprimed + primed)
    return h**d * np.einsum(f"{expr}->{out}", arr)


def b_plus_array(arr: np.ndarray, k1: int, j: int, d: int) -> np.ndarray:
    """``gamma(x_1..x_k, x_j; x'_1..x'_k, x_j)`` with 1-based ``j``."""
    k = k1 - 1
    s = _slot_letters(2 * k, d)
    unprimed, primed = s[:k], s[k:]
    xj = unprimed[j - 1]
    expr = "..." + "".join(unprimed) + xj + "".join(primed) + xj
    return np.einsum(f"{expr}->..." + "".join(unprimed + primed), arr)


def b_minus_array(arr: np.ndarray, k1: int, j: int, d: int) -> np.ndarray:
    """``gamma(x_1..x_k, x'_j; x'_1..x'_k, x'_j)`` with 1-based ``j``."""
    k = k1 - 1
    s = _slot_letters(2 * k, d)
    unprimed, primed = s[:k], s[k:]
    xj = primed[j - 1]
    expr = "..." + "".join(unprimed) + xj + "".join(primed) + xj
    return np.einsum(f"{expr}->..." + "".join(unprimed + primed), arr)


def circulant(values: np.ndarray, d: int) -> np.ndarray:
    """``C[a, b] = V(a - b mod M)`` for a periodic field ``values`` of shape ``(M,)*d``."""
    M = values.shape[0]
    idx = np.arange(M)
    diff = (idx[:, None] - idx[None, :]) % M
    if d == 1:
        return values[diff]
    grids_a = np.meshgrid(*([idx] * d), indexing="ij")
    # gather V((a - b) mod M) for every pair of multi-indices
    a = [g.reshape((M,) * d + (1,) * d) for g in grids_a]
    b = [g.reshape((1,) * d + (M,) * d) for g in grids_a]
    return values[tuple((ai - bi) % M for ai, bi in zip(a, b))]


def b_main_pm_array(arr: np.ndarray, k1: int, j: int, d: int, h: float,
                    circ: np.ndarray, primed_side: bool) -> np.ndarray:
    """``h^d sum_y V(z - y) gamma(x, y; x', y)`` with ``z = x_j`` or ``x'_j``."""
    k = k1 - 1
    s = _slot_letters(2 * k + 1, d)
    unprimed, primed, y = s[:k], s[k:2 * k], s[2 * k]
    target = primed[j - 1] if primed_side else unprimed[j - 1]
    expr = "..." + "".join(unprimed) + y + "".join(primed) + y
    out = "..." + "".join(unprimed + primed)
    res = np.einsum(f"{expr},{target + y}->{out}", arr, circ, optimize=True)
    return h**d * res


def pair_field(values: np.ndarray, nslots: int, d: int, pairs) -> np.ndarray:
    """``sum over slot pairs (i < j) of V(x_i - x_j)`` as a broadcastable ``nslots``-slot array."""
    M = values.shape[0]
    circ = circulant(values, d)
    out = np.zeros((1,) * (nslots * d))
    for i, j in pairs:
        if not i < j:
            raise ValueError("pairs must be ordered i < j")
        shape = [1] * (nslots * d)
        shape[i * d:(i + 1) * d] = [M] * d
        shape[j * d:(j + 1) * d] = [M] * d
        out = out + circ.reshape(shape)
    return out


def marginal_from_psi_array(psi: np.ndarray, N: int, k: int, d: int, h: float) -> np.ndarray:
    """``h^{d(N-k)} sum_rest psi(x, rest) conj(psi(x', rest))``."""
    nk = k * d
    rest = list(range(nk, N * d))
    out = np.tensordot(psi, np.conj(psi), axes=(rest, rest))
    return h ** (d * (N - k)) * out
