"""Compiled fixed-step RK4 kernels for the site-basis master equation.

Both kernels integrate d rho/dt = M * rho - i [T, rho] in place, where ``M``
holds the element-wise part (site-energy differences and decoherence) and
``T`` (or the bond vector ``J``) the inter-site couplings divided by hbar.
"""
import numpy as np
from numba import njit


@njit(cache=True)
def _rhs_banded(rho, M, J, out):
    n = rho.shape[0]
    for a in range(n):
        for b in range(n):
            h = 0j
            if a > 0:
                h += J[a - 1] * rho[a - 1, b]
            if a < n - 1:
                h += J[a] * rho[a + 1, b]
            if b > 0:
                h -= rho[a, b - 1] * J[b - 1]
            if b < n - 1:
                h -= rho[a, b + 1] * J[b]
            out[a, b] = M[a, b] * rho[a, b] - 1j * h


@njit(cache=True)
def _rhs_dense(rho, M, T, out):
    n = rho.shape[0]
    for a in range(n):
        for b in range(n):
            h = 0j
            for c in range(n):
                h += T[a, c] * rho[c, b] - rho[a, c] * T[c, b]
            out[a, b] = M[a, b] * rho[a, b] - 1j * h


@njit(cache=True)
def _combine(rho, k, scale, out):
    n = rho.shape[0]
    for a in range(n):
        for b in range(n):
            out[a, b] = rho[a, b] + scale * k[a, b]


@njit(cache=True)
def _finish(rho, k1, k2, k3, k4, dt):
    n = rho.shape[0]
    c = dt / 6.0
    for a in range(n):
        for b in range(n):
            rho[a, b] += c * (k1[a, b] + 2.0 * k2[a, b] + 2.0 * k3[a, b] + k4[a, b])


@njit(cache=True)
def rk4_banded(rho, M, J, dt, steps):
    k1 = np.empty_like(rho)
    k2 = np.empty_like(rho)
    k3 = np.empty_like(rho)
    k4 = np.empty_like(rho)
    tmp = np.empty_like(rho)
    for _ in range(steps):
        _rhs_banded(rho, M, J, k1)
        _combine(rho, k1, 0.5 * dt, tmp)
        _rhs_banded(tmp, M, J, k2)
        _combine(rho, k2, 0.5 * dt, tmp)
        _rhs_banded(tmp, M, J, k3)
        _combine(rho, k3, dt, tmp)
        _rhs_banded(tmp, M, J, k4)
        _finish(rho, k1, k2, k3, k4, dt)


@njit(cache=True)
def rk4_dense(rho, M, T, dt, steps):
    k1 = np.empty_like(rho)
    k2 = np.empty_like(rho)
    k3 = np.empty_like(rho)
    k4 = np.empty_like(rho)
    tmp = np.empty_like(rho)
    for _ in range(steps):
        _rhs_dense(rho, M, T, k1)
        _combine(rho, k1, 0.5 * dt, tmp)
        _rhs_dense(tmp, M, T, k2)
        _combine(rho, k2, 0.5 * dt, tmp)
        _rhs_dense(tmp, M, T, k3)
        _combine(rho, k3, dt, tmp)
        _rhs_dense(tmp, M, T, k4)
        _finish(rho, k1, k2, k3, k4, dt)
