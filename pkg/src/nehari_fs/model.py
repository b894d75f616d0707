"""Potentials, weights and nonlinearities, plus sample-based hypothesis checks.

Callables receive coordinates of shape ``(dim, ...)`` and must broadcast.
Periodic ingredients are evaluated on one unit cell and tiled over the torus,
so integer-cell periodicity holds bit for bit on lattice points.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate

from . import kernels
from .certificates import CheckResult, HypothesisError, combine
from .torus_spectral import TorusGrid, check_alpha

U_CAP = 1e8


class EnergyOverflow(FloatingPointError):
    """Field amplitude above the overflow guard or non-finite values."""


# --------------------------------------------------------------------------
# building blocks


@dataclass(frozen=True)
class PeriodicFunction:
    """A Z^d-periodic closed-form function."""

    name: str
    fn: Callable[[np.ndarray], np.ndarray]
    params: dict = field(default_factory=dict)
    constant: Optional[float] = None

    def cell(self, grid: TorusGrid) -> np.ndarray:
        vals = np.broadcast_to(
            np.asarray(self.fn(grid.cell_coords), dtype=float), grid.cell_coords.shape[1:]
        )
        return np.array(vals)

    def sample(self, grid: TorusGrid) -> np.ndarray:
        return grid.tile_cell(self.cell(grid))

    def __call__(self, x):
        return self.fn(x)


def constant(c: float) -> PeriodicFunction:
    c = float(c)
    return PeriodicFunction(f"const:{c!r}", lambda x: np.full(np.shape(x)[1:], c), {"c": c}, c)


def trig(c: float, a: float, kind: str = "cos") -> PeriodicFunction:
    """``c + a * sum_i trig(2 pi x_i)``."""
    if kind not in ("cos", "sin"):
        raise ValueError("kind must be 'cos' or 'sin'")
    fn1 = np.cos if kind == "cos" else np.sin
    c, a = float(c), float(a)

    def fn(x):
        return c + a * np.sum(fn1(2.0 * np.pi * np.asarray(x)), axis=0)

    return PeriodicFunction(f"{kind}:c={c!r},a={a!r}", fn, {"c": c, "a": a}, c if a == 0 else None)


def gaussian_bump(amp: float, width: float = 1.0):
    """Localized ``amp * exp(-|x - center|^2 / width^2)``."""
    amp, width = float(amp), float(width)

    def fn(x, center):
        d2 = np.sum((np.asarray(x) - center.reshape((-1,) + (1,) * (np.ndim(x) - 1))) ** 2, axis=0)
        return amp * np.exp(-d2 / width**2)

    fn.params = {"amp": amp, "width": width}
    fn.label = f"gauss:amp={amp!r},width={width!r}"
    return fn


def harmonic(c: float = 1.0, k: float = 1.0):
    """Coercive ``c + k |x - center|^2``."""
    c, k = float(c), float(k)

    def fn(x, center):
        d2 = np.sum((np.asarray(x) - center.reshape((-1,) + (1,) * (np.ndim(x) - 1))) ** 2, axis=0)
        return c + k * d2

    fn.params = {"c": c, "k": k}
    fn.label = f"harmonic:c={c!r},k={k!r}"
    return fn


@dataclass(frozen=True)
class Potential:
    """``V = V_per + V_loc`` or a coercive ``V``."""

    kind: str
    periodic: Optional[PeriodicFunction] = None
    localized: Optional[Callable] = None
    coercive: Optional[Callable] = None
    center: Optional[tuple] = None

    def __post_init__(self):
        if self.kind not in ("periodic", "periodic_plus_localized", "coercive"):
            raise ValueError(f"unknown potential kind {self.kind!r}")
        if self.kind == "coercive" and self.coercive is None:
            raise ValueError("coercive potential needs a coercive part")
        if self.kind != "coercive" and self.periodic is None:
            raise ValueError("periodic part missing")
        if self.kind == "periodic_plus_localized" and self.localized is None:
            raise ValueError("localized part missing")

    def _center(self, grid):
        return grid.center if self.center is None else np.asarray(self.center, dtype=float)

    def parts(self, grid: TorusGrid) -> tuple[np.ndarray, np.ndarray]:
        """Lattice samples of the periodic and localized parts."""
        if self.kind == "coercive":
            c = self._center(grid)
            return np.asarray(self.coercive(grid.coords, c), dtype=float), np.zeros(grid.shape)
        per = self.periodic.sample(grid)
        if self.localized is None:
            return per, np.zeros(grid.shape)
        loc = np.asarray(self.localized(grid.coords, self._center(grid)), dtype=float)
        return per, loc

    def sample(self, grid: TorusGrid) -> np.ndarray:
        per, loc = self.parts(grid)
        return per + loc

    def strip_localized(self) -> "Potential":
        if self.kind != "periodic_plus_localized":
            return self
        return Potential("periodic", self.periodic)

    @property
    def label(self) -> str:
        if self.kind == "coercive":
            return getattr(self.coercive, "label", "coercive")
        out = self.periodic.name
        if self.localized is not None:
            out += " + " + getattr(self.localized, "label", "localized")
        return out


@dataclass(frozen=True)
class GammaWeight:
    weight: PeriodicFunction
    q: float

    @property
    def is_zero(self) -> bool:
        return self.weight.constant == 0.0


@dataclass(frozen=True)
class Nonlinearity:
    """``f(x, u)`` with primitive ``F``.

    The built-in ``power`` family is ``f = b(x)|u|^{p-2}u``, ``F = b|u|^p/p``.
    """

    family: str
    p: float
    f: Callable
    F: Callable
    df: Optional[Callable] = None
    weight: Optional[PeriodicFunction] = None
    odd: bool = False


def power_nonlinearity(p: float, b: PeriodicFunction | None = None) -> Nonlinearity:
    p = float(p)
    b = constant(1.0) if b is None else b

    def f(x, u):
        u = np.asarray(u, dtype=float)
        return b(x) * np.abs(u) ** (p - 2.0) * u

    def F(x, u):
        return b(x) * np.abs(np.asarray(u, dtype=float)) ** p / p

    def df(x, u):
        return (p - 1.0) * b(x) * np.abs(np.asarray(u, dtype=float)) ** (p - 2.0)

    return Nonlinearity("power", p, f, F, df, b, odd=True)


# --------------------------------------------------------------------------
# sample-based certifiers


@dataclass(frozen=True)
class SampleSpec:
    """Evaluation points for pointwise hypothesis checks."""

    x: np.ndarray  # shape (dim, n_x)
    u: np.ndarray  # sorted, both signs

    @classmethod
    def default(cls, dim: int = 1, n_x: int = 8, lo: float = 1e-6, hi: float = 1e6, per_decade: int = 10):
        ax = (np.arange(n_x) + 0.5) / n_x
        x = np.stack([m.ravel() for m in np.meshgrid(*([ax] * dim), indexing="ij")])
        mags = np.logspace(math.log10(lo), math.log10(hi), int(per_decade * math.log10(hi / lo)) + 1)
        return cls(x, np.concatenate([-mags[::-1], mags]))

    def mesh(self):
        """Coordinates ``(dim, n_x, 1)`` and values ``(1, n_u)`` for broadcasting."""
        return self.x[:, :, None], self.u[None, :]


def _eval(fn, spec):
    xs, us = spec.mesh()
    return np.broadcast_to(np.asarray(fn(xs, us), dtype=float), (spec.x.shape[1], spec.u.size))


def _witness(spec, ix, iu, **extra):
    return {"x": spec.x[:, ix].tolist(), "u": float(spec.u[iu]), **extra}


def certify_F1_F4(nl: Nonlinearity, q: float, samples: SampleSpec | None = None, f3_growth: float = 2.0) -> CheckResult:
    """Check growth, small-u, superlinearity and monotonicity on samples.

    ``F4`` is checked for ``u -> f(x,u)/|u|^{q-1}``; the variant with
    ``|u|^q`` in the denominator is reported in ``details`` only.
    """
    p = nl.p
    if not q < p:
        raise HypothesisError(f"requires q < p (q={q}, p={p})", {"q": q, "p": p})
    spec = samples or SampleSpec.default(1)
    u = spec.u
    a = np.abs(u)
    f = _eval(nl.f, spec)
    F = _eval(nl.F, spec)
    parts = []

    # F1: |f| / (1 + |u|^{p-1}) bounded
    r1 = np.abs(f) / (1.0 + a ** (p - 1.0))
    top = a >= a.max() / 10.0
    sup_top, sup_low = float(r1[:, top].max()), float(r1[:, ~top].max())
    ok = np.isfinite(r1).all() and sup_top <= 1.01 * sup_low + 1e-300
    if ok:
        parts.append(CheckResult("F1", "pass", 1.01 * sup_low - sup_top, details={"sup": max(sup_top, sup_low)}))
    else:
        ix, iu = np.unravel_index(int(np.nanargmax(np.where(np.isfinite(r1), r1, np.inf))), r1.shape)
        parts.append(CheckResult("F1", "fail", 1.01 * sup_low - sup_top, witness=_witness(spec, ix, iu, ratio=float(r1[ix, iu]))))

    # F2: |f|/|u| decreasing to 0 as |u| -> 0
    for sign, sel in (("+", u > 0), ("-", u < 0)):
        small = sel & (a <= 1e-2)
        idx = np.flatnonzero(small)
        idx = idx[np.argsort(a[idx])]
        r2 = np.max(np.abs(f[:, idx]) / a[idx], axis=0)
        inc = np.diff(r2)
        ok = bool(np.all(inc >= -1e-12 * np.abs(r2[1:]))) and r2[0] < 0.999 * r2[-1]
        name = f"F2{sign}"
        if ok:
            parts.append(CheckResult(name, "pass", float(r2[-1] - r2[0]), details={"ratio_min": float(r2[0])}))
        else:
            j = int(np.argmin(inc)) if inc.size else 0
            parts.append(CheckResult(name, "fail", float(r2[-1] - r2[0]), witness={"u": float(u[idx[j]]), "ratio": float(r2[j])}))

    # F3: F/|u|^q increasing and growing for |u| >= 1
    for sign, sel in (("+", u >= 1.0), ("-", u <= -1.0)):
        idx = np.flatnonzero(sel)
        idx = idx[np.argsort(a[idx])]
        g = np.min(F[:, idx] / a[idx] ** q, axis=0)
        inc = np.diff(g)
        growth = g[-1] / g[0] if g[0] > 0 else -np.inf
        ok = bool(np.all(inc > 0)) and growth > f3_growth
        name = f"F3{sign}"
        if ok:
            parts.append(CheckResult(name, "pass", float(growth - f3_growth), details={"growth": float(growth)}))
        else:
            j = int(np.argmin(inc)) if inc.size else 0
            parts.append(CheckResult(name, "fail", float(growth - f3_growth), witness={"u": float(u[idx[j]]), "F_over_uq": float(g[j]), "growth": float(growth)}))

    # F4: f/|u|^{q-1} strictly increasing on each half-line
    printed = {}
    for sign, sel in (("+", u > 0), ("-", u < 0)):
        idx = np.flatnonzero(sel)
        ratio = f[:, idx] / a[idx] ** (q - 1.0)
        d = np.diff(ratio, axis=1)
        name = f"F4{sign}"
        if np.all(d > 0):
            parts.append(CheckResult(name, "pass", float(d.min())))
        else:
            ix, j = np.unravel_index(int(np.argmin(d)), d.shape)
            parts.append(CheckResult(name, "fail", float(d.min()), witness=_witness(spec, ix, idx[j], step=float(d[ix, j]))))
        d_pr = np.diff(f[:, idx] / a[idx] ** q, axis=1)
        printed[sign] = bool(np.all(d_pr > 0))
    return combine("F1-F4", parts, F4_over_u_pow_q_increasing=printed, analytic=nl.family == "power")


def certify_primitive(nl: Nonlinearity, samples: SampleSpec | None = None, rtol: float = 1e-8, n_u: int = 12) -> CheckResult:
    """``F(x,u) == int_0^u f(x,s) ds`` by adaptive quadrature at sampled points."""
    spec = samples or SampleSpec.default(1, n_x=3)
    us = spec.u[:: max(1, spec.u.size // n_u)]
    worst, wit = 0.0, {}
    for ix in range(spec.x.shape[1]):
        x = spec.x[:, ix]
        for uu in us:
            quad, _ = integrate.quad(lambda s: float(np.asarray(nl.f(x, s)).ravel()[0]), 0.0, uu, epsabs=0.0, epsrel=1e-12, limit=200)
            Fv = float(np.asarray(nl.F(x, uu)).ravel()[0])
            err = abs(Fv - quad) / max(abs(quad), 1e-300)
            if err > worst:
                worst, wit = err, {"x": x.tolist(), "u": float(uu), "F": Fv, "quad": quad}
    if worst <= rtol:
        return CheckResult("primitive", "pass", rtol - worst)
    return CheckResult("primitive", "fail", rtol - worst, witness=wit)


def pointwise_qF_bound(nl: Nonlinearity, q: float, samples: SampleSpec | None = None, atol: float = 1e-12) -> CheckResult:
    """``f(x,u) u - q F(x,u) >= 0`` at all samples (relative slack ``atol``)."""
    spec = samples or SampleSpec.default(1)
    f = _eval(nl.f, spec)
    F = _eval(nl.F, spec)
    fu = f * spec.u[None, :]
    slack = fu - q * F
    rel = slack / np.maximum(1.0, np.abs(fu))
    worst = float(rel.min())
    if worst >= -atol:
        return CheckResult("qF_bound", "pass", worst)
    ix, iu = np.unravel_index(int(np.argmin(rel)), rel.shape)
    return CheckResult("qF_bound", "fail", worst, witness=_witness(spec, ix, iu, slack=float(slack[ix, iu])))


def sign_changing_witness(nl: Nonlinearity, gamma: GammaWeight, samples: SampleSpec | None = None) -> CheckResult:
    """``F - Gamma|u|^q/q`` is negative for small ``|u|`` and positive for large."""
    spec = samples or SampleSpec.default(1)
    F = _eval(nl.F, spec)
    G = _eval(lambda x, u: gamma.weight(x) * np.abs(u) ** gamma.q / gamma.q, spec)
    h = F - G
    a = np.abs(spec.u)
    small, large = a <= 1e-3, a >= 1e3
    neg = bool(np.all(h[:, small] < 0))
    pos = bool(np.all(h[:, large] > 0))
    if neg and pos:
        return CheckResult("sign_changing", "pass", float(min(-h[:, small].max(), h[:, large].min())))
    bad = np.flatnonzero(small)[0] if not neg else np.flatnonzero(large)[0]
    return CheckResult("sign_changing", "fail", None, witness={"u": float(spec.u[bad]), "value": float(h[0, bad])})


def certify_gamma(gamma: GammaWeight, grid: TorusGrid) -> CheckResult:
    vals = gamma.weight.cell(grid)
    full = np.asarray(gamma.weight(grid.coords), dtype=float)
    parts = []
    gmin = float(vals.min())
    if gmin >= 0.0 and np.isfinite(vals).all():
        parts.append(CheckResult("Gamma>=0", "pass", gmin))
    else:
        idx = np.unravel_index(int(np.argmin(vals)), vals.shape)
        x = [float(c[idx]) for c in grid.cell_coords]
        parts.append(CheckResult("Gamma>=0", "fail", gmin, witness={"x": x, "Gamma": gmin}))
    parts.append(_periodicity(gamma.weight, grid, full, "Gamma_periodic"))
    return combine("Gamma", parts, sup=float(np.abs(vals).max()))


def _periodicity(pf: PeriodicFunction, grid, full, name):
    tiled = pf.sample(grid)
    full = np.broadcast_to(full, grid.shape)
    dev = np.abs(full - tiled)
    tol = 1e-10 * max(1.0, float(np.abs(tiled).max()))
    worst = float(dev.max())
    if worst <= tol:
        return CheckResult(name, "pass", tol - worst)
    idx = np.unravel_index(int(np.argmax(dev)), dev.shape)
    return CheckResult(name, "fail", tol - worst, witness={"x": [float(c[idx]) for c in grid.coords], "deviation": worst})


def certify_potential(V: Potential, grid: TorusGrid, kind: str | None = None) -> CheckResult:
    """Positivity, and the localized or coercive structure required by ``kind``."""
    kind = kind or V.kind
    per, loc = V.parts(grid)
    vals = per + loc
    parts = []
    v0, vsup = float(vals.min()), float(vals.max())
    if v0 > 0.0:
        parts.append(CheckResult("V0>0", "pass", v0))
    else:
        idx = np.unravel_index(int(np.argmin(vals)), vals.shape)
        parts.append(CheckResult("V0>0", "fail", v0, witness={"x": [float(c[idx]) for c in grid.coords], "V": v0}))
    if V.periodic is not None:
        parts.append(_periodicity(V.periodic, grid, np.asarray(V.periodic(grid.coords), dtype=float), "Vper_periodic"))
    far = grid.far_zone()
    details = {"V0": v0, "Vinf": vsup if kind != "coercive" else math.inf, "grid_sup": vsup}
    if kind == "periodic_plus_localized":
        far_max = float(np.abs(loc[far]).max()) if far.any() else 0.0
        if far_max < 1e-8:
            parts.append(CheckResult("Vloc_decay", "pass", 1e-8 - far_max))
        else:
            parts.append(CheckResult("Vloc_decay", "fail", 1e-8 - far_max, witness={"far_max": far_max}))
        lmax = float(loc.max())
        if lmax <= 0.0:
            n_neg = int(np.count_nonzero(loc < 0))
            details["Vloc_branch"] = "zero" if n_neg == 0 else "negative"
            details["Vloc_underflow_points"] = int(loc.size - n_neg) if n_neg else 0
            parts.append(CheckResult("Vloc_sign", "pass", -lmax))
        else:
            idx = np.unravel_index(int(np.argmax(loc)), loc.shape)
            parts.append(CheckResult("Vloc_sign", "fail", -lmax, witness={"x": [float(c[idx]) for c in grid.coords], "Vloc": lmax}))
    elif kind == "coercive":
        parts.append(_coercive_rays(vals, grid, V._center(grid)))
        fmin = float(vals[far].min())
        if fmin > 10.0 * v0:
            parts.append(CheckResult("far_zone_growth", "pass", fmin - 10.0 * v0))
        else:
            parts.append(CheckResult("far_zone_growth", "fail", fmin - 10.0 * v0, witness={"far_min": fmin, "V0": v0}))
    return combine("potential", parts, **details)


def _coercive_rays(vals, grid, center):
    """V non-decreasing along lattice rays from the center to the torus edge."""
    c = np.rint(np.asarray(center) / grid.spacing).astype(int)
    n = grid.n
    dirs = [(1,), (-1,)] if grid.dim == 1 else [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (-1, -1), (1, -1), (-1, 1)]
    worst = math.inf
    for d in dirs:
        steps = np.arange(n // 2)
        idx = tuple(np.mod(c[i] + d[i] * steps, n) for i in range(grid.dim))
        ray = vals[idx]
        inc = np.diff(ray)
        m = float(inc.min())
        if m < -1e-12 * float(np.abs(ray).max()):
            j = int(np.argmin(inc))
            return CheckResult("coercive_rays", "fail", m, witness={"direction": list(d), "step": j, "drop": m})
        worst = min(worst, m)
    return CheckResult("coercive_rays", "pass", worst)


# --------------------------------------------------------------------------
# the problem


def critical_exponent(dim: int, alpha: float) -> float:
    return 2.0 * dim / (dim - alpha) if dim > alpha else math.inf


class Problem:
    """Grid, order, potential, weights and nonlinearity defining ``J``.

    Construction certifies the standing hypotheses and raises
    :class:`HypothesisError` with a witness on the first violation.
    """

    def __init__(self, grid: TorusGrid, alpha: float, potential: Potential, gamma: GammaWeight, nonlinearity: Nonlinearity, certify_nonlinearity: bool = True):
        self.grid = grid
        self.alpha = check_alpha(alpha)
        self.potential = potential
        self.gamma = gamma
        self.nonlinearity = nonlinearity
        self.q = float(gamma.q)
        self.p = float(nonlinearity.p)
        crit = critical_exponent(grid.dim, self.alpha)
        if not self.q < self.p:
            raise HypothesisError(f"requires q < p (q={self.q}, p={self.p})", {"q": self.q, "p": self.p})
        if not 2.0 < self.q:
            raise HypothesisError(f"requires q > 2 (q={self.q})", {"q": self.q})
        if not self.p < crit:
            raise HypothesisError(f"requires p < 2N/(N-alpha) = {crit}", {"p": self.p, "critical": crit})

        self.certificates = {}
        cert = certify_gamma(gamma, grid)
        self.certificates["Gamma"] = cert
        if not cert.passed:
            raise HypothesisError("Gamma violates (Gamma)", cert.witness)
        cert = certify_potential(potential, grid)
        self.certificates["potential"] = cert
        if not cert.passed:
            raise HypothesisError(f"potential rejected: {cert.witness.get('failed')}", cert.witness)
        if certify_nonlinearity:
            spec = SampleSpec.default(grid.dim)
            cert = certify_F1_F4(nonlinearity, self.q, spec)
            self.certificates["F1-F4"] = cert
            if not cert.passed:
                raise HypothesisError(f"nonlinearity rejected: {cert.witness.get('failed')}", cert.witness)
            self.certificates["qF_bound"] = pointwise_qF_bound(nonlinearity, self.q, spec)

        per, loc = potential.parts(grid)
        self.V_per, self.V_loc = _ro(per), _ro(loc)
        self.V = _ro(per + loc)
        self.V0 = float(self.V.min())
        self.Vinf = self.certificates["potential"].details["Vinf"]
        self.Gamma = None if gamma.is_zero else _ro(gamma.weight.sample(grid))
        self.b = _ro(nonlinearity.weight.sample(grid)) if nonlinearity.family == "power" else None
        if self.b is not None and not float(self.b.min()) > 0.0:
            idx = np.unravel_index(int(np.argmin(self.b)), grid.shape)
            raise HypothesisError("weight b must be positive", {"x": [float(c[idx]) for c in grid.coords], "b": float(self.b.min())})
        self.symbol = grid.symbol(self.alpha)
        self.precond = _ro(1.0 / (self.symbol + self.V0))

    # ---- structure

    @property
    def is_periodic(self) -> bool:
        """Z^d-invariant functional: no localized or coercive part."""
        return self.potential.kind == "periodic" or not np.any(self.V_loc)

    @property
    def symmetry(self) -> str:
        """``continuous`` when every coefficient is constant, else ``lattice``."""
        if self.potential.kind != "periodic" or self.potential.periodic.constant is None:
            return "lattice"
        if self.gamma.weight.constant is None:
            return "lattice"
        nl = self.nonlinearity
        if nl.family != "power" or nl.weight.constant is None:
            return "lattice"
        return "continuous"

    def with_potential(self, potential: Potential) -> "Problem":
        return Problem(self.grid, self.alpha, potential, self.gamma, self.nonlinearity)

    def strip_localized(self) -> "Problem":
        """The periodic problem ``J_per`` (localized part removed)."""
        return self.with_potential(self.potential.strip_localized())

    def with_grid(self, grid: TorusGrid) -> "Problem":
        return Problem(grid, self.alpha, self.potential, self.gamma, self.nonlinearity)

    # ---- pointwise nonlinear terms (arrays in, cell-volume-scaled sums out)

    def _guard(self, u):
        if not np.all(np.isfinite(u)):
            raise EnergyOverflow("non-finite field values")
        if u.size and float(np.max(np.abs(u))) > U_CAP:
            raise EnergyOverflow(f"|u| exceeds {U_CAP:g}")

    def moments(self, u: np.ndarray) -> tuple[float, float, float]:
        """``(int F(x,u), int f(x,u)u, int Gamma|u|^q)``."""
        self._guard(u)
        vol = self.grid.cell_volume
        if self.b is not None:
            s_p, s_q = kernels.power_sums(u, self.b, self.Gamma, self.p, self.q)
            return s_p * vol / self.p, s_p * vol, s_q * vol
        x = self.grid.coords
        F = float(np.sum(self.nonlinearity.F(x, u))) * vol
        fu = float(np.sum(self.nonlinearity.f(x, u) * u)) * vol
        gq = 0.0 if self.Gamma is None else float(np.sum(self.Gamma * np.abs(u) ** self.q)) * vol
        return F, fu, gq

    def force(self, u: np.ndarray) -> np.ndarray:
        """``f(x,u) - Gamma|u|^{q-2}u`` on the lattice."""
        self._guard(u)
        if self.b is not None:
            return kernels.power_terms(u, self.b, self.Gamma, self.p, self.q)[0]
        g = np.asarray(self.nonlinearity.f(self.grid.coords, u), dtype=float)
        if self.Gamma is not None:
            g = g - self.Gamma * np.abs(u) ** (self.q - 2.0) * u
        return np.broadcast_to(g, self.grid.shape)

    def force_pairing(self, u: np.ndarray, v: np.ndarray) -> float:
        """``int (f(x,u) - Gamma|u|^{q-2}u) v``."""
        self._guard(u)
        if self.b is not None:
            return kernels.power_pairing(u, v, self.b, self.Gamma, self.p, self.q) * self.grid.cell_volume
        return float(np.sum(self.force(u) * v)) * self.grid.cell_volume

    def fiber_force(self, u: np.ndarray):
        """Callable ``t -> int f(x, t u) u`` (closed form for the power family)."""
        if self.b is not None:
            _, fu, _ = self.moments(u)
            p = self.p
            return lambda t: t ** (p - 1.0) * fu
        x, vol, f = self.grid.coords, self.grid.cell_volume, self.nonlinearity.f

        def fn(t):
            tu = t * u
            self._guard(tu)
            return float(np.sum(f(x, tu) * u)) * vol

        return fn

    def describe(self) -> dict:
        return {
            "alpha": self.alpha,
            "dim": self.grid.dim,
            "L": self.grid.side_length,
            "M": self.grid.points_per_cell,
            "potential": self.potential.label,
            "gamma": self.gamma.weight.name,
            "nonlinearity": f"{self.nonlinearity.family}:p={self.p!r}",
            "q": self.q,
            "p": self.p,
        }


def _ro(a):
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


# --------------------------------------------------------------------------
# descriptor-string parsing ("name", "name:value" or "name:k=v,k=v")


def _parse_args(spec: str):
    name, _, rest = spec.strip().partition(":")
    name = name.strip().lower()
    args, kwargs = [], {}
    for tok in filter(None, (t.strip() for t in rest.split(","))):
        if "=" in tok:
            k, v = tok.split("=", 1)
            kwargs[k.strip()] = float(v)
        else:
            args.append(float(tok))
    return name, args, kwargs


def parse_periodic(spec: str) -> PeriodicFunction:
    """``zero``, ``const:c``, ``cos:c=..,a=..`` or ``sin:c=..,a=..``."""
    name, args, kw = _parse_args(spec)
    if name == "zero":
        return constant(0.0)
    if name == "const":
        return constant(args[0] if args else kw.get("c", 1.0))
    if name in ("cos", "sin"):
        return trig(kw.get("c", args[0] if args else 0.0), kw.get("a", args[1] if len(args) > 1 else 0.0), name)
    raise ValueError(f"unknown periodic function {spec!r}")


def parse_potential(spec: str, localized: str | None = None, center=None) -> Potential:
    """Periodic or ``harmonic:c=..,k=..`` base, optional ``gauss:amp=..,width=..``."""
    name, args, kw = _parse_args(spec)
    c = None if center is None else tuple(float(v) for v in center)
    if localized is not None and localized.strip().lower() in ("", "zero"):
        localized = None
    if name == "harmonic":
        if localized:
            raise ValueError("a coercive potential takes no localized part")
        return Potential("coercive", coercive=harmonic(kw.get("c", 1.0), kw.get("k", 1.0)), center=c)
    per = parse_periodic(spec)
    if not localized:
        return Potential("periodic", per)
    lname, largs, lkw = _parse_args(localized)
    if lname != "gauss":
        raise ValueError(f"unknown localized potential {localized!r}")
    bump = gaussian_bump(lkw.get("amp", largs[0] if largs else -0.3), lkw.get("width", 1.0))
    return Potential("periodic_plus_localized", per, bump, center=c)


def parse_nonlinearity(spec: str, b: str | None = None) -> Nonlinearity:
    name, args, kw = _parse_args(spec)
    if name != "power":
        raise ValueError(f"unknown nonlinearity {spec!r}")
    p = kw.get("p", args[0] if args else None)
    if p is None:
        raise ValueError("power nonlinearity needs p")
    weight = parse_periodic(b) if b else None
    if weight is not None and weight.constant is not None and weight.constant <= 0:
        raise HypothesisError("weight b must be positive", {"b": weight.constant})
    return power_nonlinearity(p, weight)
