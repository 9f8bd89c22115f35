"""Numba kernels for the per-event collision loops."""

import numpy as np
from numba import njit


@njit(cache=True)
def apply_events_rotation(v, idx_i, idx_j, theta):
    for k in range(idx_i.shape[0]):
        i = idx_i[k]
        j = idx_j[k]
        c = np.cos(theta[k])
        s = np.sin(theta[k])
        vi = v[i]
        vj = v[j]
        v[i] = vi * c - vj * s
        v[j] = vj * c + vi * s


@njit(cache=True)
def apply_events_polar(v, idx_i, idx_j, theta):
    for k in range(idx_i.shape[0]):
        i = idx_i[k]
        j = idx_j[k]
        r = np.sqrt(v[i] * v[i] + v[j] * v[j])
        v[i] = r * np.cos(theta[k])
        v[j] = r * np.sin(theta[k])
