import numpy as np
import pytest

from nehari_fs.certificates import CheckResult
from nehari_fs.model import GammaWeight, Nonlinearity, constant, power_nonlinearity
from nehari_fs.nehari import NehariTracker
from nehari_fs.torus_spectral import TorusGrid
from nehari_fs.verify import (
    SuiteReport,
    _guarded,
    band_limited,
    bumps,
    check_growth_bound,
    check_interpolation,
    check_inverse_lipschitz,
    check_nehari_structure,
    check_norm_equivalence,
    check_pv_vs_spectral,
    check_sgn,
    check_small_sphere,
    check_superquadratic_growth,
    check_translation_package,
    random_field,
    random_shift,
    run_all,
)


class TestEnsembles:
    def test_band_limited(self, rng):
        g = TorusGrid(1, 8, 16)
        u = band_limited(g, rng)
        assert np.abs(u.values).max() == pytest.approx(1.0)
        assert np.all(np.abs(u.spectrum[g.xi_abs > 0.25 * np.pi / g.spacing]) < 1e-12)

    def test_bumps_and_mix(self, rng):
        g = TorusGrid(2, 4, 8)
        assert bumps(g, rng).values.shape == g.shape
        assert np.any(random_field(g, rng).values)

    def test_shift_range(self, rng):
        g = TorusGrid(1, 8, 4)
        ks = [random_shift(g, rng)[0] for _ in range(200)]
        assert min(ks) >= -4 and max(ks) <= 4


class TestChecks:
    def test_norm_equivalence(self, small_problem):
        res = check_norm_equivalence(small_problem, 50, seed=3)
        assert res.passed and res.seed == 3 and res.margin >= 0

    def test_translation_package_periodic(self, small_problem):
        res = check_translation_package(small_problem, 10, seed=1)
        assert res.passed, res.witness
        names = {p.name for p in res.details["parts"]}
        assert {"adjoint", "isometry", "J_invariance", "N_invariance", "equivariance_m", "equivariance_m_inv", "equivariance_grad", "equivariance_grad_Jm"} <= names

    def test_translation_package_2d(self, plane_problem):
        assert check_translation_package(plane_problem, 5, seed=2).passed

    def test_translation_package_localized_is_expected_failure(self, well_problem):
        res = check_translation_package(well_problem, 5, seed=1)
        assert res.status == "skip"
        assert res.details["expected_failure"]

    def test_inverse_lipschitz(self, small_problem):
        res = check_inverse_lipschitz(small_problem, 40, seed=4)
        assert res.passed and res.details["violations"] == 0

    def test_nehari_structure_feeds_tracker(self, small_problem):
        tr = NehariTracker()
        res = check_nehari_structure(small_problem, 10, seed=5, tracker=tr)
        assert res.passed
        assert tr.summary()["certified"] == 10

    def test_small_sphere(self, well_problem):
        res = check_small_sphere(well_problem, 40)
        assert res.passed and res.details["r"] > 0

    def test_superquadratic(self, small_problem, well_problem):
        assert check_superquadratic_growth(small_problem, 5).passed
        assert check_superquadratic_growth(well_problem, 5).passed

    def test_sgn_stable(self):
        res = check_sgn(1.5, 3.0, n_samples=6)
        assert res.passed
        assert res.details["C_M"] > 0

    def test_sgn_rejects_exponent(self):
        with pytest.raises(ValueError):
            check_sgn(0.5, 4.0)

    def test_growth_bound(self):
        res = check_growth_bound(power_nonlinearity(4.0), GammaWeight(constant(1.0), 3.0), 3.0)
        assert res.passed
        consts = res.details["C_eps"]
        assert consts == sorted(consts)

    def test_growth_bound_flags_blowup(self):
        steep = Nonlinearity("custom", 3.0, lambda x, u: np.sinh(np.asarray(u, dtype=float)) + 0 * x[0], lambda x, u: np.cosh(np.asarray(u, dtype=float)) - 1 + 0 * x[0])
        with np.errstate(over="ignore"):
            res = check_growth_bound(steep, GammaWeight(constant(0.0), 2.5), 2.5)
        assert res.status == "fail"

    def test_interpolation(self):
        assert check_interpolation(3.0, 4.0, 30).passed
        assert check_interpolation(4.0, 4.0, 5).details["theta"] == 1.0
        with pytest.raises(ValueError):
            check_interpolation(5.0, 4.0)

    def test_pv_vs_spectral_subset(self):
        res = check_pv_vs_spectral(alphas=(1.0, 2.0), functions=("gaussian",), points=(0.0, 2.0))
        statuses = {p.name: p.status for p in res.details["parts"]}
        assert statuses["pv[gaussian,alpha=1]"] == "pass"
        assert statuses["pv[gaussian,alpha=2]"] == "skip"
        assert res.passed


class TestSuite:
    def test_guarded_turns_exception_into_fail(self):
        def boom():
            raise RuntimeError("x")

        res = _guarded("boom", boom)
        assert res.status == "fail" and "RuntimeError" in res.witness["exception"]

    def test_report(self):
        rep = SuiteReport([("a", CheckResult("x", "pass", 1.0)), ("a", CheckResult("y", "skip"))])
        assert rep.passed and rep.summary() == {"pass": 1, "fail": 0, "skip": 1}
        assert rep.lines()[0].startswith("PASS x")

    def test_run_all(self, small_problem, well_problem):
        rep = run_all([small_problem, well_problem], n_samples=10, pv=False)
        assert rep.passed, [l for l in rep.lines() if l.startswith("FAIL")]
        counts = rep.summary()
        assert counts["fail"] == 0 and counts["pass"] > 10
