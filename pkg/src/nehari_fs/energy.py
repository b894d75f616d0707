"""Energy functional, its derivative and the strong-form residual.

All integrals are lattice sums times the cell volume, which is spectrally
accurate for smooth periodic integrands.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import EnergyOverflow, Problem
from .torus_spectral import Field, apply_multiplier, inverse_transform

__all__ = [
    "EnergyBreakdown",
    "Residual",
    "eval_J",
    "eval_I",
    "energy_norm_sq",
    "energy_norm",
    "energy_inner",
    "pairing_Jprime",
    "pairing_Iprime",
    "nehari_functional",
    "gradient",
    "residual",
    "sup_norm_constant",
    "small_sphere_radius",
]


@dataclass(frozen=True)
class EnergyBreakdown:
    kinetic: float
    potential: float
    F_term: float
    gamma_term: float

    @property
    def I(self) -> float:
        return self.F_term - self.gamma_term

    @property
    def J(self) -> float:
        return self.kinetic + self.potential - self.I

    @property
    def norm_sq(self) -> float:
        return 2.0 * (self.kinetic + self.potential)


def _kinetic2(u: Field, prob: Problem) -> float:
    s = u.spectrum
    return float(np.sum(prob.symbol * (s.real * s.real + s.imag * s.imag))) * u.grid.freq_weight


def _potential2(u: Field, prob: Problem) -> float:
    return float(np.sum(prob.V * u.values * u.values)) * u.grid.cell_volume


def energy_norm_sq(u: Field, prob: Problem) -> float:
    return _kinetic2(u, prob) + _potential2(u, prob)


def energy_norm(u: Field, prob: Problem) -> float:
    return math.sqrt(energy_norm_sq(u, prob))


def energy_inner(u: Field, v: Field, prob: Problem) -> float:
    su, sv = u.spectrum, v.spectrum
    kin = float(np.sum(prob.symbol * (su.real * sv.real + su.imag * sv.imag))) * u.grid.freq_weight
    return kin + float(np.sum(prob.V * u.values * v.values)) * u.grid.cell_volume


def eval_J(u: Field, prob: Problem) -> EnergyBreakdown:
    """Energy split into its four integrals; raises ``EnergyOverflow`` on blow-up."""
    F_int, _, g_int = prob.moments(u.values)
    out = EnergyBreakdown(0.5 * _kinetic2(u, prob), 0.5 * _potential2(u, prob), F_int, g_int / prob.q)
    if not math.isfinite(out.J):
        raise EnergyOverflow("non-finite energy")
    return out


def eval_I(u: Field, prob: Problem) -> float:
    F_int, _, g_int = prob.moments(u.values)
    return F_int - g_int / prob.q


def pairing_Iprime(u: Field, v: Field, prob: Problem) -> float:
    return prob.force_pairing(u.values, v.values)


def pairing_Jprime(u: Field, v: Field, prob: Problem) -> float:
    """``J'(u)(v) = <u, v>_E - int f(x,u) v + int Gamma |u|^{q-2} u v``."""
    return energy_inner(u, v, prob) - prob.force_pairing(u.values, v.values)


def nehari_functional(u: Field, prob: Problem) -> float:
    """``J'(u)(u)``, cheaper than the general pairing."""
    _, fu, gq = prob.moments(u.values)
    return energy_norm_sq(u, prob) - fu + gq


def residual_array(u: Field, prob: Problem) -> np.ndarray:
    lap = inverse_transform(u.spectrum * prob.symbol, u.grid)
    return lap + prob.V * u.values - prob.force(u.values)


def gradient(u: Field, prob: Problem, metric: str = "L2") -> Field:
    """Gradient of ``J`` at ``u``.

    ``metric="L2"`` returns the strong residual ``r(u)``, whose ``L^2``
    pairing with ``v`` equals ``J'(u)(v)``.  ``metric="E"`` applies the
    preconditioner ``(|xi|^alpha + V_0)^{-1}``; this is the exact energy-metric
    gradient when ``V`` is constant.
    """
    r = Field(u.grid, residual_array(u, prob))
    if metric == "L2":
        return r
    if metric == "E":
        return apply_multiplier(r, prob.precond)
    raise ValueError(f"unknown metric {metric!r}")


@dataclass(frozen=True)
class Residual:
    field: Field
    l2: float
    relative: float


def residual(u: Field, prob: Problem) -> Residual:
    """Strong-form residual ``(-Delta)^{alpha/2}u + Vu - f(x,u) + Gamma|u|^{q-2}u``."""
    r = Field(u.grid, residual_array(u, prob))
    l2 = math.sqrt(float(np.sum(r.values**2)) * u.grid.cell_volume)
    nrm = energy_norm(u, prob)
    return Residual(r, l2, l2 / nrm if nrm > 0 else 0.0)


def sup_norm_constant(prob: Problem) -> float:
    """``K`` with ``|u|_inf <= K ||u||`` on the lattice.

    Cauchy-Schwarz on the inverse transform gives
    ``K^2 = (2 pi)^{-d} sum dxi^d / (|xi|^alpha + V_0)``.
    """
    g = prob.grid
    return math.sqrt(float(np.sum(prob.precond)) * g.freq_weight / (2.0 * math.pi) ** g.dim)


def small_sphere_radius(prob: Problem) -> float:
    """Radius ``r`` with ``J(u) >= ||u||^2 / 4`` whenever ``||u|| = r`` (power family).

    From ``int F <= |b|_inf |u|_inf^{p-2} |u|_2^2 / p`` and
    ``|u|_2^2 <= ||u||^2 / V_0``; the ``Gamma`` term only helps.
    """
    if prob.b is None:
        raise NotImplementedError("explicit radius is only derived for the power family")
    K = sup_norm_constant(prob)
    p = prob.p
    bsup = float(np.max(prob.b))
    return (p * prob.V0 / (4.0 * bsup * K ** (p - 2.0))) ** (1.0 / (p - 2.0))
