"""Fibering map ``t -> J(tu)``, the projection ``m(u) = t(u) u`` and its inverse."""
from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .certificates import CheckResult
from .energy import EnergyBreakdown, energy_norm, energy_norm_sq, eval_J, nehari_functional
from .model import Problem
from .torus_spectral import Field

T_MAX = 1e9
MAX_DOUBLINGS = 60


class NoSignChange(RuntimeError):
    """The fiber derivative kept its sign over the whole bracketing range."""


@dataclass(frozen=True)
class FiberProfile:
    t_star: float
    J_at_t_star: float
    bracket: tuple[float, float]
    sign_trace: tuple[tuple[float, int], ...]


@dataclass(frozen=True)
class NehariPoint:
    """A field certified to satisfy ``|J'(u)(u)| <= tol * ||u||^2``."""

    u: Field
    energy: EnergyBreakdown
    norm: float
    pairing: float
    tol: float

    @property
    def J(self) -> float:
        return self.energy.J

    @property
    def certified(self) -> bool:
        return abs(self.pairing) <= self.tol * self.norm**2


def fiber_slope(u: Field, prob: Problem):
    """``h(t) = phi'(t)/t`` with ``phi(t) = J(t u)``; same positive root as ``phi'``."""
    A = energy_norm_sq(u, prob)
    _, _, gq = prob.moments(u.values)
    force = prob.fiber_force(u.values)
    q = prob.q

    def h(t):
        return A - force(t) / t + t ** (q - 2.0) * gq

    return h, A


def _bracket(h):
    trace = []
    t = 1.0
    ht = h(t)
    trace.append((t, int(np.sign(ht))))
    if ht == 0.0:
        return t, t, trace
    if ht > 0:
        for _ in range(MAX_DOUBLINGS):
            lo, t = t, 2.0 * t
            if t > T_MAX:
                break
            ht = h(t)
            trace.append((t, int(np.sign(ht))))
            if ht <= 0:
                return lo, t, trace
        raise NoSignChange(f"fiber derivative positive up to t={T_MAX:g}")
    for _ in range(MAX_DOUBLINGS):
        hi, t = t, 0.5 * t
        ht = h(t)
        trace.append((t, int(np.sign(ht))))
        if ht >= 0:
            return t, hi, trace
    raise NoSignChange(f"fiber derivative negative down to t={t:g}")


def fiber_root(h) -> tuple[float, tuple[float, float], list]:
    """Positive root of ``h`` bracketed from ``t = 1`` by doubling or halving."""
    lo, hi, trace = _bracket(h)
    if lo == hi:
        return lo, (lo, hi), trace
    if h(hi) == 0.0:
        return hi, (lo, hi), trace
    if h(lo) == 0.0:
        return lo, (lo, hi), trace
    t = brentq(h, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=200)
    return t, (lo, hi), trace


def project(u: Field, prob: Problem, tol: float = 1e-10, tracker: "NehariTracker | None" = None):
    """Return ``(NehariPoint, FiberProfile)`` for ``m(u) = t(u) u``."""
    if not np.any(u.values):
        raise ValueError("cannot project the zero field")
    h, _ = fiber_slope(u, prob)
    t, bracket, trace = fiber_root(h)
    w = u * t
    en = eval_J(w, prob)
    point = NehariPoint(w, en, math.sqrt(en.norm_sq), nehari_functional(w, prob), tol)
    if tracker is not None:
        tracker.record(point, prob)
    profile = FiberProfile(t, en.J, bracket, tuple(trace))
    return point, profile


def make_point(u: Field, prob: Problem, tol: float = 1e-10) -> NehariPoint:
    """Wrap a field as a (possibly uncertified) Nehari candidate without rescaling."""
    en = eval_J(u, prob)
    return NehariPoint(u, en, math.sqrt(en.norm_sq), nehari_functional(u, prob), tol)


def inverse_m(u, prob: Problem) -> Field:
    """``m^{-1}(u) = u / ||u||`` onto the unit sphere of the energy norm."""
    field_ = u.u if isinstance(u, NehariPoint) else u
    return field_ / energy_norm(field_, prob)


def fiber_sign_changes(u: Field, prob: Problem, t_lo: float, t_hi: float, n: int = 161) -> int:
    """Number of sign changes of the fiber derivative on a log grid."""
    h, _ = fiber_slope(u, prob)
    ts = np.logspace(math.log10(t_lo), math.log10(t_hi), n)
    signs = np.sign([h(t) for t in ts])
    signs = signs[signs != 0]
    return int(np.count_nonzero(np.diff(signs)))


def _I_of_scaled(u: Field, prob: Problem):
    """Callable ``t -> I(t u)``."""
    if prob.b is not None:
        F_int, _, gq = prob.moments(u.values)
        p, q = prob.p, prob.q
        return lambda t: t**p * F_int - t**q * gq / q
    x, vol = prob.grid.coords, prob.grid.cell_volume
    Fn = prob.nonlinearity.F
    _, _, gq = prob.moments(u.values)

    def fn(t):
        return float(np.sum(Fn(x, t * u.values))) * vol - t**prob.q * gq / prob.q

    return fn


def certify_J3(point: NehariPoint, prob: Problem, ts=None, atol: float = 1e-10) -> CheckResult:
    """``psi(t) = (t^2-1)/2 I'(u)(u) - I(tu) + I(u) < 0`` for ``t != 1``.

    Also checks the slope sign: ``psi' > 0`` on ``(0,1)`` and ``< 0`` beyond 1.
    """
    u = point.u
    if ts is None:
        ts = np.logspace(-2, 2, 41)
    ts = np.asarray([t for t in np.atleast_1d(ts) if t != 1.0], dtype=float)
    _, fu, gq = prob.moments(u.values)
    Ipuu = fu - gq
    I_t = _I_of_scaled(u, prob)
    I1 = I_t(1.0)
    psi1 = 0.5 * (1.0 - 1.0) * Ipuu - I_t(1.0) + I1
    force = prob.fiber_force(u.values)
    q = prob.q
    psi = np.array([0.5 * (t * t - 1.0) * Ipuu - I_t(t) + I1 for t in ts])
    dpsi = np.array([t * Ipuu - (force(t) - t ** (q - 1.0) * gq) for t in ts])
    scale = max(1.0, abs(I1))
    if abs(psi1) > atol * scale:
        return CheckResult("J3", "fail", -abs(psi1), witness={"t": 1.0, "psi": psi1})
    bad = np.flatnonzero(psi >= 0)
    if bad.size:
        j = bad[0]
        return CheckResult("J3", "fail", float(-psi.max()), witness={"t": float(ts[j]), "psi": float(psi[j])})
    slope_ok = np.where(ts < 1.0, dpsi > 0, dpsi < 0)
    if not slope_ok.all():
        j = int(np.flatnonzero(~slope_ok)[0])
        return CheckResult("J3", "fail", None, witness={"t": float(ts[j]), "dpsi": float(dpsi[j])})
    return CheckResult("J3", "pass", float(-psi.max() / scale), details={"psi": psi, "t": ts})


def fiber_value_inequality(point: NehariPoint, prob: Problem, ts=None, atol: float = 1e-12) -> CheckResult:
    """``J(t u) <= J(u)`` on the fiber, strictly for ``|t - 1| > 1e-3``."""
    if ts is None:
        ts = np.concatenate([[1e-3, 0.1, 0.5, 0.9, 0.999], [1.0], [1.001, 1.1, 2.0, 3.0, 10.0]])
    J0 = point.J
    scale = max(1.0, abs(J0))
    worst = math.inf
    for t in np.atleast_1d(ts):
        Jt = eval_J(point.u * float(t), prob).J
        gap = J0 - Jt
        strict = abs(t - 1.0) > 1e-3
        if gap < -atol * scale or (strict and not gap > 0):
            return CheckResult("fiber_max", "fail", gap, witness={"t": float(t), "J_t": Jt, "J": J0})
        if strict:
            worst = min(worst, gap)
    return CheckResult("fiber_max", "pass", worst if math.isfinite(worst) else 0.0)


@dataclass
class NehariTracker:
    """Session statistics over every projected point (thread-safe).

    For each point it checks ``J(u) >= (1/2 - 1/q)||u||^2`` and the identity
    ``J(u) = (1/2 - 1/q)||u||^2 + int (f(x,u)u/q - F(x,u))``.
    """

    identity_rtol: float = 1e-8
    count: int = 0
    certified: int = 0
    beta_sample: float = math.inf
    min_J: float = math.inf
    worst_coercivity: float = math.inf
    worst_identity: float = 0.0
    violations: list = field(default_factory=list)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def record(self, point: NehariPoint, prob: Problem) -> None:
        en = point.energy
        q = prob.q
        _, fu, _ = prob.moments(point.u.values)
        A = en.norm_sq
        c = 0.5 - 1.0 / q
        identity = c * A + fu / q - en.F_term
        scale = max(1.0, abs(en.J))
        id_err = abs(en.J - identity) / scale
        coer = (en.J - c * A) / scale
        with self._lock:
            self.count += 1
            if point.certified:
                self.certified += 1
                self.beta_sample = min(self.beta_sample, point.norm)
                self.min_J = min(self.min_J, en.J)
                self.worst_identity = max(self.worst_identity, id_err)
                self.worst_coercivity = min(self.worst_coercivity, coer)
                if id_err > self.identity_rtol or coer < -1e-10:
                    self.violations.append({"J": en.J, "norm": point.norm, "identity_err": id_err, "coercivity": coer})

    def summary(self) -> dict:
        with self._lock:
            return {
                "points": self.count,
                "certified": self.certified,
                "beta_sample": self.beta_sample,
                "min_J": self.min_J,
                "worst_identity": self.worst_identity,
                "worst_coercivity": self.worst_coercivity,
                "violations": len(self.violations),
            }
