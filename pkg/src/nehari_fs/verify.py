"""Property checks over randomized fields, each returning a :class:`CheckResult`.

Random fields come from two families: band-limited Gaussian fields on the
lowest quarter of the spectrum and sums of localized Gaussian bumps.
Every check records the seed it was drawn from.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .certificates import CheckResult, combine
from .energy import (
    energy_inner,
    energy_norm,
    eval_I,
    eval_J,
    gradient,
    nehari_functional,
    small_sphere_radius,
)
from .model import GammaWeight, Nonlinearity, Problem, SampleSpec, _eval
from .nehari import NehariTracker, certify_J3, fiber_value_inequality, inverse_m, project
from .torus_spectral import (
    Field,
    TorusGrid,
    frac_laplacian,
    frac_laplacian_pv,
    l2_norm,
    lp_norm,
    norm_H,
    translate,
)

# --------------------------------------------------------------------------
# random ensembles


def band_limited(grid: TorusGrid, rng: np.random.Generator, fraction: float = 0.25) -> Field:
    """Gaussian random field on the lowest ``fraction`` of frequencies."""
    xi = grid.xi_abs
    cut = fraction * np.pi / grid.spacing
    spec = rng.normal(size=grid.shape) + 1j * rng.normal(size=grid.shape)
    spec[xi > cut] = 0.0
    vals = np.fft.ifftn(spec).real
    vals /= max(float(np.abs(vals).max()), 1e-300)
    return Field(grid, vals)


def bumps(grid: TorusGrid, rng: np.random.Generator, max_bumps: int = 3) -> Field:
    """Sum of 1..max_bumps Gaussian bumps with random sign, width and center."""
    L = grid.side_length
    out = np.zeros(grid.shape)
    for _ in range(int(rng.integers(1, max_bumps + 1))):
        c = rng.uniform(0.0, L, grid.dim).reshape((-1,) + (1,) * grid.dim)
        d = (grid.coords - c + L / 2) % L - L / 2
        w = rng.uniform(0.5, 3.0)
        out += rng.choice([-1.0, 1.0]) * rng.uniform(0.5, 1.5) * np.exp(-np.sum(d**2, axis=0) / w**2)
    return Field(grid, out)


def random_field(grid: TorusGrid, rng: np.random.Generator) -> Field:
    return band_limited(grid, rng) if rng.random() < 0.5 else bumps(grid, rng)


def random_shift(grid: TorusGrid, rng: np.random.Generator) -> tuple:
    L = grid.side_length
    return tuple(int(k) for k in rng.integers(-(L // 2), L // 2 + 1, grid.dim))


def _rel(a: float, b: float) -> float:
    return abs(a - b) / max(1.0, abs(a), abs(b))


def _rel_field(a: Field, b: Field) -> float:
    den = max(1e-300, float(np.abs(b.values).max()), float(np.abs(a.values).max()))
    return float(np.abs(a.values - b.values).max()) / den


def _rel_dual(a: Field, b: Field, prob: Problem) -> float:
    """Relative distance of two preconditioned gradients in the energy norm.

    Pointwise comparison of raw residuals amplifies transform roundoff by
    ``|xi|^alpha``; this is the dual norm in which gradients live.
    """
    return energy_norm(a - b, prob) / max(1e-300, energy_norm(b, prob))


class _Worst:
    """Track the worst relative error per named identity."""

    def __init__(self, tols: dict):
        self.tols = tols
        self.worst = {k: 0.0 for k in tols}
        self.witness: dict = {}

    def add(self, name, err, **wit):
        if err > self.worst[name]:
            self.worst[name] = err
            if err > self.tols[name] and name not in self.witness:
                self.witness[name] = {"error": err, **wit}

    def results(self, seed):
        out = []
        for name, tol in self.tols.items():
            if name in self.witness:
                out.append(CheckResult(name, "fail", tol - self.worst[name], witness=self.witness[name], seed=seed))
            else:
                out.append(CheckResult(name, "pass", tol - self.worst[name], seed=seed))
        return out


# --------------------------------------------------------------------------
# checks


def check_norm_equivalence(prob: Problem, n_samples: int = 200, seed: int = 0) -> CheckResult:
    """``min(1,V0)||u||_H^2 <= ||u||_E^2 <= max(1,sup V)||u||_H^2`` (fields scaled to ``||u||_H = 1``)."""
    rng = np.random.default_rng(seed)
    lo_c, hi_c = min(1.0, prob.V0), max(1.0, float(prob.V.max()))
    worst = math.inf
    for i in range(n_samples):
        u = random_field(prob.grid, rng)
        u = u / norm_H(u, prob.alpha)
        E, H = energy_norm(u, prob) ** 2, norm_H(u, prob.alpha) ** 2
        lo, hi = E - (lo_c * H - 1e-12), hi_c * H + 1e-12 - E
        m = min(lo, hi)
        if m < 0:
            return CheckResult("norm_equivalence", "fail", m, witness={"sample": i, "E": E, "H": H, "lower": lo_c, "upper": hi_c}, seed=seed)
        worst = min(worst, m)
    return CheckResult("norm_equivalence", "pass", worst if n_samples else None, details={"lower": lo_c, "upper": hi_c, "n": n_samples}, seed=seed)


def check_translation_package(prob: Problem, n_samples: int = 50, seed: int = 0, tol_exact: float = 1e-12, tol: float = 1e-10) -> CheckResult:
    """Adjoint identity, isometry, invariance of ``J`` and ``N``, and four equivariances.

    The maps compared are ``m``, ``m^{-1}``, the gradient of ``J`` and the
    gradient of ``J o m``, the latter represented as
    ``||m(u)|| grad J(m(u))``.  On problems with a localized or coercive part
    the invariance is expected to fail; the result is then ``skip`` with the
    measured defect.
    """
    rng = np.random.default_rng(seed)
    w = _Worst({
        "adjoint": tol_exact,
        "isometry": tol_exact,
        "J_invariance": tol_exact,
        "N_invariance": tol,
        "equivariance_m": tol,
        "equivariance_m_inv": tol,
        "equivariance_grad": tol_exact,
        "equivariance_grad_Jm": tol,
    })
    for i in range(n_samples):
        u, v = random_field(prob.grid, rng), random_field(prob.grid, rng)
        k = random_shift(prob.grid, rng)
        mk = tuple(-x for x in k)
        tu = translate(u, k)
        w.add("adjoint", _rel(energy_inner(tu, v, prob), energy_inner(u, translate(v, mk), prob)), sample=i, k=k)
        w.add("isometry", _rel(energy_norm(tu, prob), energy_norm(u, prob)), sample=i, k=k)
        w.add("J_invariance", _rel(eval_J(tu, prob).J, eval_J(u, prob).J), sample=i, k=k)
        pt, _ = project(u, prob)
        tpt = translate(pt.u, k)
        scale = energy_norm(tpt, prob) ** 2
        w.add("N_invariance", abs(nehari_functional(tpt, prob)) / scale, sample=i, k=k)
        m_tu, _ = project(tu, prob)
        w.add("equivariance_m", _rel_field(m_tu.u, tpt), sample=i, k=k)
        w.add("equivariance_m_inv", _rel_field(inverse_m(tpt, prob), translate(inverse_m(pt, prob), k)), sample=i, k=k)
        w.add("equivariance_grad", _rel_dual(gradient(tu, prob, "E"), translate(gradient(u, prob, "E"), k), prob), sample=i, k=k)
        gjm = gradient(pt.u, prob, "E") * pt.norm
        gjm_t = gradient(m_tu.u, prob, "E") * m_tu.norm
        w.add("equivariance_grad_Jm", _rel_dual(gjm_t, translate(gjm, k), prob), sample=i, k=k)
    parts = w.results(seed)
    out = combine("translation_package", parts, n=n_samples)
    if not prob.is_periodic:
        return CheckResult("translation_package", "skip", out.margin, details={"expected_failure": out.status == "fail", "parts": parts}, seed=seed)
    return out


def check_inverse_lipschitz(prob: Problem, n_pairs: int = 200, seed: int = 0) -> CheckResult:
    """``||u/||u|| - v/||v|||| <= 2||u - v|| / min(||u||, ||v||)`` on Nehari pairs.

    Half of the pairs are near neighbours (second field a small perturbation
    of the first) so the bound is exercised at short range too.
    """
    rng = np.random.default_rng(seed)
    worst = math.inf
    for i in range(n_pairs):
        a = random_field(prob.grid, rng)
        b = random_field(prob.grid, rng)
        if i % 2:
            b = a + b * 10.0 ** rng.uniform(-6, -1)
        u, _ = project(a, prob)
        v, _ = project(b, prob)
        lhs = energy_norm(u.u / u.norm - v.u / v.norm, prob)
        rhs = 2.0 * energy_norm(u.u - v.u, prob) / min(u.norm, v.norm)
        if lhs > rhs:
            return CheckResult("inverse_lipschitz", "fail", rhs - lhs, witness={"pair": i, "lhs": lhs, "rhs": rhs}, seed=seed)
        if rhs > 0:
            worst = min(worst, (rhs - lhs) / rhs)
    return CheckResult("inverse_lipschitz", "pass", worst if n_pairs else None, details={"violations": 0, "n": n_pairs}, seed=seed)


def check_nehari_structure(prob: Problem, n_samples: int = 100, seed: int = 0, tracker: NehariTracker | None = None) -> CheckResult:
    """Fiber uniqueness structure on random fibers plus tracker identities."""
    rng = np.random.default_rng(seed)
    tracker = tracker if tracker is not None else NehariTracker()
    parts = []
    for i in range(n_samples):
        pt, _ = project(random_field(prob.grid, rng), prob, tracker=tracker)
        r = certify_J3(pt, prob)
        if not r.passed:
            parts.append(CheckResult("J3", "fail", r.margin, witness={"sample": i, **r.witness}, seed=seed))
            break
        r = fiber_value_inequality(pt, prob, ts=(1e-3, 0.5, 0.99, 1.0, 1.01, 2.0, 3.0))
        if not r.passed:
            parts.append(CheckResult("fiber_max", "fail", r.margin, witness={"sample": i, **r.witness}, seed=seed))
            break
    else:
        parts.append(CheckResult("J3", "pass", None, seed=seed))
    summ = tracker.summary()
    if summ["violations"]:
        parts.append(CheckResult("tracker", "fail", -summ["worst_identity"], witness=dict(tracker.violations[0]), seed=seed))
    else:
        parts.append(CheckResult("tracker", "pass", summ["worst_coercivity"], details=summ, seed=seed))
    return combine("nehari_structure", parts, tracker=summ)


def check_small_sphere(prob: Problem, n_dirs: int = 200, seed: int = 0) -> CheckResult:
    """``J(u) >= ||u||^2/4`` on the sphere of the explicit small radius."""
    rng = np.random.default_rng(seed)
    r = small_sphere_radius(prob)
    worst = math.inf
    for i in range(n_dirs):
        d = random_field(prob.grid, rng)
        u = d * (r / energy_norm(d, prob))
        gap = eval_J(u, prob).J - 0.25 * r * r
        if gap < 0:
            return CheckResult("small_sphere", "fail", gap, witness={"direction": i, "r": r}, seed=seed)
        worst = min(worst, gap)
    return CheckResult("small_sphere", "pass", worst, details={"r": r}, seed=seed)


def check_superquadratic_growth(prob: Problem, n_samples: int = 20, seed: int = 0, ts: Sequence[float] = (10.0, 100.0, 1000.0)) -> CheckResult:
    """``I(tu)/t^q`` increases along ``ts`` and at least doubles from first to last."""
    rng = np.random.default_rng(seed)
    ts = list(ts)
    worst = math.inf
    for i in range(n_samples):
        u = random_field(prob.grid, rng)
        u = u / float(np.abs(u.values).max())
        vals = [eval_I(u * t, prob) / t**prob.q for t in ts]
        inc = np.diff(vals)
        if not np.all(inc > 0) or not vals[-1] > 2.0 * max(1e-12, vals[0]):
            return CheckResult("superquadratic", "fail", float(inc.min()), witness={"sample": i, "values": vals}, seed=seed)
        worst = min(worst, vals[-1] / max(1e-12, vals[0]))
    return CheckResult("superquadratic", "pass", worst, seed=seed)


def check_sgn(alpha: float, r: float, n_samples: int = 20, dim: int = 1, L: int = 16, M: int = 16, seed: int = 0, rtol: float = 0.05) -> CheckResult:
    """Empirical constant of ``|u|_{r+1}^{r+1} <= C ||u||_H^a |u|_2^b`` and its grid stability.

    ``a = (r-1)N/alpha`` and ``b = r+1-a`` must be positive.  The same
    continuum fields are sampled at ``M`` and ``2M`` points per cell.
    """
    a = (r - 1.0) * dim / alpha
    b = r + 1.0 - a
    if not b > 0:
        raise ValueError(f"exponent r+1-(r-1)N/alpha = {b:g} must be positive")
    rng = np.random.default_rng(seed)
    coarse, fine = TorusGrid(dim, L, M), TorusGrid(dim, L, 2 * M)
    kmax = max(1, (L * M) // 8)
    funcs = []
    for _ in range(n_samples):
        if rng.random() < 0.5:
            ks = np.stack(np.meshgrid(*([np.arange(-kmax, kmax + 1)] * dim), indexing="ij")).reshape(dim, -1)
            keep = np.sqrt(np.sum(ks**2, axis=0)) <= kmax
            ks = ks[:, keep]
            ca, cb = rng.normal(size=ks.shape[1]), rng.normal(size=ks.shape[1])

            def fn(x, ks=ks, ca=ca, cb=cb):
                ph = 2.0 * np.pi * np.tensordot(ks.T, x, axes=(1, 0)) / L
                return np.tensordot(ca, np.cos(ph), axes=1) + np.tensordot(cb, np.sin(ph), axes=1)
        else:
            c = rng.uniform(0.0, L, dim)
            w = rng.uniform(0.5, 2.0)

            def fn(x, c=c, w=w):
                d = (x - c.reshape((-1,) + (1,) * (x.ndim - 1)) + L / 2) % L - L / 2
                return np.exp(-np.sum(d**2, axis=0) / w**2)

        funcs.append(fn)

    def sup_ratio(grid):
        best = 0.0
        for fn in funcs:
            u = Field.from_function(grid, fn)
            num = lp_norm(u, r + 1.0) ** (r + 1.0)
            den = norm_H(u, alpha) ** a * l2_norm(u) ** b
            best = max(best, num / den)
        return best

    c1, c2 = sup_ratio(coarse), sup_ratio(fine)
    change = abs(c2 - c1) / max(c1, 1e-300)
    details = {"C_M": c1, "C_2M": c2, "relative_change": change, "a": a, "b": b}
    if math.isfinite(c1) and math.isfinite(c2) and change < rtol:
        return CheckResult("sgn", "pass", rtol - change, details=details, seed=seed)
    return CheckResult("sgn", "fail", rtol - change, witness=details, seed=seed)


def check_growth_bound(nl: Nonlinearity, gamma: GammaWeight, q: float, eps_grid: Iterable[float] = (1.0, 0.1, 1e-2, 1e-3), samples: SampleSpec | None = None) -> CheckResult:
    """Empirical ``C_eps = sup (|g| - eps|u|)_+ / |u|^{p-1}`` with ``g = f - Gamma|u|^{q-2}u``."""
    spec = samples or SampleSpec.default(1)
    f = _eval(nl.f, spec)
    G = _eval(lambda x, u: gamma.weight(x) * np.abs(u) ** (q - 2.0) * u, spec)
    gval = np.abs(f - G)
    a = np.abs(spec.u)[None, :]
    eps_list = sorted(float(e) for e in eps_grid)[::-1]
    consts = []
    for eps in eps_list:
        c = float(np.max(np.maximum(gval - eps * a, 0.0) / a ** (nl.p - 1.0)))
        consts.append(c)
    details = {"eps": eps_list, "C_eps": consts}
    if not all(math.isfinite(c) for c in consts):
        return CheckResult("growth_bound", "fail", None, witness=details)
    inc = np.diff(consts)
    if np.any(inc < -1e-12 * np.maximum(1.0, np.abs(consts[1:]))):
        return CheckResult("growth_bound", "fail", float(inc.min()), witness=details)
    return CheckResult("growth_bound", "pass", None, details=details)


def check_interpolation(q: float, p: float, n_samples: int = 100, grid: TorusGrid | None = None, seed: int = 0) -> CheckResult:
    """``|w|_q <= |w|_2^theta |w|_p^(1-theta)`` with ``1/q = theta/2 + (1-theta)/p``."""
    if not 2.0 <= q <= p:
        raise ValueError("need 2 <= q <= p")
    theta = 1.0 if q == p else (1.0 / q - 1.0 / p) / (0.5 - 1.0 / p)
    grid = grid or TorusGrid(1, 16, 16)
    rng = np.random.default_rng(seed)
    worst = math.inf
    for i in range(n_samples):
        w = random_field(grid, rng)
        lhs = lp_norm(w, q)
        rhs = l2_norm(w) ** theta * lp_norm(w, p) ** (1.0 - theta)
        slack = rhs * (1 + 1e-12) - lhs
        if slack < 0:
            return CheckResult("interpolation", "fail", slack, witness={"sample": i, "lhs": lhs, "rhs": rhs, "theta": theta}, seed=seed)
        worst = min(worst, slack)
    return CheckResult("interpolation", "pass", worst if n_samples else None, details={"theta": theta}, seed=seed)


def _gaussian(x):
    return np.exp(-np.sum(np.asarray(x) ** 2, axis=0))


def _lorentzian(x):
    return 1.0 / (1.0 + np.sum(np.asarray(x) ** 2, axis=0))


TEST_FUNCTIONS: dict[str, Callable] = {"gaussian": _gaussian, "lorentzian": _lorentzian}


def check_pv_vs_spectral(alphas: Sequence[float] = (0.5, 1.0, 1.5), functions: Sequence[str] = ("gaussian", "lorentzian"), points: Sequence[float] = (0.0, 0.5, 2.0, 3.0, 4.0), L: int = 4096, M: int = 16, rtol: float = 1e-3) -> CheckResult:
    """Singular-integral quadrature against the Fourier multiplier in 1D.

    The torus is large so periodic images of slowly decaying functions stay
    below tolerance.  Orders outside ``(0, 2)`` are reported as skipped.
    """
    grid = TorusGrid(1, L, M)
    c = grid.center
    parts = []
    for alpha in alphas:
        for name in functions:
            fn = TEST_FUNCTIONS[name] if isinstance(name, str) else name
            label = f"pv[{name if isinstance(name, str) else 'custom'},alpha={alpha:g}]"
            if not 0.0 < alpha < 2.0:
                parts.append(CheckResult(label, "skip", details={"reason": "singular-integral form needs alpha in (0,2)"}))
                continue
            u = Field.from_function(grid, lambda x: fn(x - c.reshape(-1, 1)))
            lap = frac_laplacian(u, alpha).values
            worst, wit = 0.0, {}
            for x in points:
                idx = int(round((c[0] + x) / grid.spacing))
                spec = float(lap[idx])
                pv = frac_laplacian_pv(fn, alpha, [x])
                err = abs(pv - spec) / max(abs(pv), 1e-12)
                if err > worst:
                    worst, wit = err, {"x": x, "pv": pv, "spectral": spec, "error": err}
            if worst < rtol:
                parts.append(CheckResult(label, "pass", rtol - worst))
            else:
                parts.append(CheckResult(label, "fail", rtol - worst, witness=wit))
    return combine("pv_vs_spectral", parts)


# --------------------------------------------------------------------------
# suite


@dataclass
class SuiteReport:
    entries: list = field(default_factory=list)  # (problem label, CheckResult)

    @property
    def passed(self) -> bool:
        return all(r.status != "fail" for _, r in self.entries)

    def lines(self) -> list[str]:
        return [f"{r.line()} [{label}]" for label, r in self.entries]

    def summary(self) -> dict:
        counts = {"pass": 0, "fail": 0, "skip": 0}
        for _, r in self.entries:
            counts[r.status] += 1
        return counts


def _guarded(name, fn, *args, **kwargs) -> CheckResult:
    try:
        return fn(*args, **kwargs)
    except Exception as err:  # a failing check must not abort the suite
        return CheckResult(name, "fail", None, witness={"exception": repr(err)})


def run_all(problems: Sequence[Problem], n_samples: int = 50, seed: int = 0, pv: bool = True) -> SuiteReport:
    """Every check on every problem, plus the construction certificates."""
    report = SuiteReport()
    problems = list(problems)
    for j, prob in enumerate(problems):
        label = f"problem{j}:{prob.potential.label}"
        for cname, cert in prob.certificates.items():
            report.entries.append((label, CheckResult(f"cert:{cname}", cert.status, cert.margin, cert.witness)))
        s = seed + j
        report.entries += [
            (label, _guarded("norm_equivalence", check_norm_equivalence, prob, n_samples, s)),
            (label, _guarded("translation_package", check_translation_package, prob, max(1, n_samples // 5), s)),
            (label, _guarded("inverse_lipschitz", check_inverse_lipschitz, prob, n_samples, s)),
            (label, _guarded("nehari_structure", check_nehari_structure, prob, max(1, n_samples // 5), s)),
            (label, _guarded("small_sphere", check_small_sphere, prob, n_samples, s)),
            (label, _guarded("superquadratic", check_superquadratic_growth, prob, max(1, n_samples // 5), s)),
            (label, _guarded("growth_bound", check_growth_bound, prob.nonlinearity, prob.gamma, prob.q)),
            (label, _guarded("interpolation", check_interpolation, prob.q, prob.p, n_samples, prob.grid, s)),
        ]
        sgn_r = prob.p - 1.0
        if sgn_r + 1.0 - (sgn_r - 1.0) * prob.grid.dim / prob.alpha > 0:
            report.entries.append((label, _guarded("sgn", check_sgn, prob.alpha, sgn_r, max(2, n_samples // 5), prob.grid.dim, seed=s)))
        else:
            report.entries.append((label, CheckResult("sgn", "skip", details={"reason": "exponent not positive"})))
    if problems and pv:
        report.entries.append(("operator", _guarded("pv_vs_spectral", check_pv_vs_spectral)))
    return report
