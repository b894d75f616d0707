"""Pure numpy pointwise kernels for the power-law nonlinearity.

Reference implementation and fallback for :mod:`nehari_fs._kernels`.  All
inputs are flat contiguous float64 arrays; ``gamma`` may be ``None`` for
``Gamma == 0``.  Sums are unscaled (no cell volume).
"""
import numpy as np


def power_sums(u, b, gamma, p, q):
    """Return ``(sum b|u|^p, sum gamma|u|^q)``."""
    a = np.abs(u)
    s_p = float(np.dot(b, a**p))
    s_q = 0.0 if gamma is None else float(np.dot(gamma, a**q))
    return s_p, s_q


def power_terms(u, b, gamma, p, q):
    """Return ``(g, sum b|u|^p, sum gamma|u|^q)`` with ``g = b|u|^{p-2}u - gamma|u|^{q-2}u``."""
    a = np.abs(u)
    fp = b * a ** (p - 2.0) * u
    s_p = float(np.dot(fp, u))
    if gamma is None:
        return fp, s_p, 0.0
    gq = gamma * a ** (q - 2.0) * u
    return fp - gq, s_p, float(np.dot(gq, u))


def power_pairing(u, v, b, gamma, p, q):
    """Return ``sum (b|u|^{p-2}u - gamma|u|^{q-2}u) v``."""
    a = np.abs(u)
    g = b * a ** (p - 2.0) * u
    if gamma is not None:
        g = g - gamma * a ** (q - 2.0) * u
    return float(np.dot(g, v))
