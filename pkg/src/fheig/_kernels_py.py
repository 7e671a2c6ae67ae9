"""Pure-numpy implementations of the pairwise kernels.

Same contracts as the compiled core in ``_kernels.pyx``; selected at
import time by ``fheig.kernels`` when the extension is missing or when
FHE_NO_EXT=1.
"""

from __future__ import annotations

import numpy as np

BACKEND = "python"


def _phi_p(z: np.ndarray, p: float) -> np.ndarray:
    """|z|^(p-2) z, written as sign(z)|z|^(p-1) so z = 0 is safe for p > 1."""
    if p == 2.0:
        return z
    return np.sign(z) * np.abs(z) ** (p - 1.0)


def pairwise_energy(K: np.ndarray, c0: np.ndarray, u: np.ndarray, p: float) -> float:
    """sum_{i != j} K_ij |u_i - u_j|^p + sum_i c0_i |u_i|^p (K has zero diagonal)."""
    du = u[:, None] - u[None, :]
    if p == 2.0:
        pair = float(np.sum(K * du * du))
        own = float(np.dot(c0, u * u))
    else:
        pair = float(np.sum(K * np.abs(du) ** p))
        own = float(np.dot(c0, np.abs(u) ** p))
    return pair + own


def pairwise_gradient(K: np.ndarray, c0: np.ndarray, u: np.ndarray, p: float) -> np.ndarray:
    """Gradient of ``pairwise_energy`` in u."""
    du = u[:, None] - u[None, :]
    g = 2.0 * p * np.einsum("ij,ij->i", K, _phi_p(du, p))
    g += p * c0 * _phi_p(u, p)
    return g


def picone_matrix(K: np.ndarray, u: np.ndarray, v: np.ndarray, p: float):
    """Pairwise nonlocal Picone defect.

    L_ij = |u_i - u_j|^p - |v_i - v_j|^(p-2)(v_i - v_j)
           (u_i^p / v_i^(p-1) - u_j^p / v_j^(p-1))

    Returns (L, min entry, sum_ij K_ij L_ij).
    """
    du = u[:, None] - u[None, :]
    dv = v[:, None] - v[None, :]
    ratio = u ** p / v ** (p - 1.0)
    L = np.abs(du) ** p - _phi_p(dv, p) * (ratio[:, None] - ratio[None, :])
    return L, float(np.min(L)), float(np.sum(K * L))
