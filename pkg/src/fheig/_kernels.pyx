# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled pairwise kernels: the O(m^2) hot loops of the nonlocal form.

Mirrors ``_kernels_py`` exactly; rows are accumulated in a fixed order so
results are deterministic run to run.  The common exponents (p and p - 1
for p in {2, 3, 4}) use closed multiplication paths instead of libm pow.
"""

import numpy as np

cimport cython
from libc.math cimport fabs, pow as cpow

BACKEND = "cython"


cdef inline double _powp(double a, double p) noexcept nogil:
    # a >= 0
    if p == 2.0:
        return a * a
    if p == 3.0:
        return a * a * a
    if p == 4.0:
        return (a * a) * (a * a)
    if p == 1.0:
        return a
    return cpow(a, p)


cdef inline double _phi_p(double z, double p) noexcept nogil:
    # |z|^(p-2) z
    if p == 2.0:
        return z
    if p == 3.0:
        return fabs(z) * z
    if p == 4.0:
        return z * z * z
    if z > 0.0:
        return cpow(z, p - 1.0)
    if z < 0.0:
        return -cpow(-z, p - 1.0)
    return 0.0


def pairwise_energy(const double[:, ::1] K, const double[::1] c0, const double[::1] u, double p):
    """sum_{i != j} K_ij |u_i - u_j|^p + sum_i c0_i |u_i|^p (K has zero diagonal)."""
    cdef Py_ssize_t m = u.shape[0]
    cdef Py_ssize_t i, j
    cdef double acc = 0.0
    cdef double row, d, ui
    with nogil:
        if p == 2.0:
            for i in range(m):
                ui = u[i]
                row = 0.0
                for j in range(m):
                    d = ui - u[j]
                    row += K[i, j] * d * d
                acc += row + c0[i] * ui * ui
        elif p == 3.0:
            for i in range(m):
                ui = u[i]
                row = 0.0
                for j in range(m):
                    d = ui - u[j]
                    row += K[i, j] * fabs(d) * d * d
                acc += row + c0[i] * fabs(ui) * ui * ui
        elif p == 4.0:
            for i in range(m):
                ui = u[i]
                row = 0.0
                for j in range(m):
                    d = ui - u[j]
                    d = d * d
                    row += K[i, j] * d * d
                d = ui * ui
                acc += row + c0[i] * d * d
        else:
            for i in range(m):
                ui = u[i]
                row = 0.0
                for j in range(m):
                    d = ui - u[j]
                    if d != 0.0:
                        row += K[i, j] * cpow(fabs(d), p)
                acc += row + c0[i] * cpow(fabs(ui), p)
    return acc


def pairwise_gradient(const double[:, ::1] K, const double[::1] c0, const double[::1] u, double p):
    """Gradient of ``pairwise_energy`` in u."""
    cdef Py_ssize_t m = u.shape[0]
    out = np.empty(m, dtype=np.float64)
    cdef double[::1] g = out
    cdef Py_ssize_t i, j
    cdef double row, ui
    with nogil:
        if p == 2.0:
            for i in range(m):
                ui = u[i]
                row = 0.0
                for j in range(m):
                    row += K[i, j] * (ui - u[j])
                g[i] = 2.0 * p * row + p * c0[i] * ui
        elif p == 3.0:
            for i in range(m):
                ui = u[i]
                row = 0.0
                for j in range(m):
                    row += K[i, j] * _phi_p(ui - u[j], 3.0)
                g[i] = 2.0 * p * row + p * c0[i] * _phi_p(ui, 3.0)
        elif p == 4.0:
            for i in range(m):
                ui = u[i]
                row = 0.0
                for j in range(m):
                    row += K[i, j] * _phi_p(ui - u[j], 4.0)
                g[i] = 2.0 * p * row + p * c0[i] * _phi_p(ui, 4.0)
        else:
            for i in range(m):
                ui = u[i]
                row = 0.0
                for j in range(m):
                    row += K[i, j] * _phi_p(ui - u[j], p)
                g[i] = 2.0 * p * row + p * c0[i] * _phi_p(ui, p)
    return out


def picone_matrix(const double[:, ::1] K, const double[::1] u, const double[::1] v, double p):
    """Pairwise nonlocal Picone defect; returns (L, min entry, sum K*L)."""
    cdef Py_ssize_t m = u.shape[0]
    L_arr = np.empty((m, m), dtype=np.float64)
    ratio_arr = np.empty(m, dtype=np.float64)
    cdef double[:, ::1] L = L_arr
    cdef double[::1] ratio = ratio_arr
    cdef Py_ssize_t i, j
    cdef double lmin = np.inf
    cdef double agg = 0.0
    cdef double dv, entry
    with nogil:
        for i in range(m):
            ratio[i] = _powp(u[i], p) / _powp(v[i], p - 1.0)
        for i in range(m):
            for j in range(m):
                dv = v[i] - v[j]
                entry = _powp(fabs(u[i] - u[j]), p) - _phi_p(dv, p) * (ratio[i] - ratio[j])
                L[i, j] = entry
                agg += K[i, j] * entry
                if entry < lmin:
                    lmin = entry
    return L_arr, lmin, agg
