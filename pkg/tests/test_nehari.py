import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nehari_fs.energy import energy_norm, energy_norm_sq, eval_J, nehari_functional, pairing_Jprime
from nehari_fs.nehari import (
    NehariTracker,
    NoSignChange,
    certify_J3,
    fiber_root,
    fiber_sign_changes,
    fiber_slope,
    fiber_value_inequality,
    inverse_m,
    make_point,
    project,
)
from nehari_fs.torus_spectral import Field, seminorm_sq
from nehari_fs.verify import random_field, random_shift
from nehari_fs.torus_spectral import translate

from conftest import make_problem

GOLDEN = (1 + math.sqrt(5)) / 2


def gaussian(grid, width=3.0):
    c = grid.center[0]
    return Field.from_function(grid, lambda x: np.exp(-((x[0] - c) ** 2) / width**2))


def tuned_problem(norm_sq, P, G=None):
    """Constant-coefficient problem and field with prescribed ``||u||^2``, ``|u|_4^4`` and ``int|u|^3``."""
    base = make_problem(L=40, M=32, alpha=1.0)
    w = gaussian(base.grid)
    vol = base.grid.cell_volume
    u = w * (P / (np.sum(w.values**4) * vol)) ** 0.25
    kin = seminorm_sq(u, 1.0)
    l2 = float(np.sum(u.values**2)) * vol
    V0 = (norm_sq - kin) / l2
    assert V0 > 0
    if G is None:
        prob = make_problem(L=40, M=32, alpha=1.0, V=f"const:{V0!r}")
    else:
        g = G / (float(np.sum(np.abs(u.values) ** 3)) * vol)
        prob = make_problem(L=40, M=32, alpha=1.0, V=f"const:{V0!r}", gamma=g, q=3.0, p=4.0)
    return prob, u


class TestClosedForms:
    def test_pure_power_sqrt2(self):
        prob, u = tuned_problem(2.0, 1.0)
        assert energy_norm_sq(u, prob) == pytest.approx(2.0, rel=1e-13)
        point, profile = project(u, prob)
        assert profile.t_star == pytest.approx(math.sqrt(2.0), rel=1e-10)
        assert point.certified

    def test_mixed_golden_ratio(self):
        prob, u = tuned_problem(1.0, 1.0, G=1.0)
        _, profile = project(u, prob)
        assert profile.t_star == pytest.approx(GOLDEN, rel=1e-10)

    @given(st.floats(0.05, 20.0), st.integers(0, 2**31))
    def test_pure_power_formula(self, scale, seed):
        prob = make_problem(L=8, M=16, alpha=1.5, V="cos:c=2,a=1", p=3.5)
        u = random_field(prob.grid, np.random.default_rng(seed)) * scale
        P = float(np.sum(np.abs(u.values) ** 3.5)) * prob.grid.cell_volume
        expected = (energy_norm_sq(u, prob) / P) ** (1 / 1.5)
        assert project(u, prob)[1].t_star == pytest.approx(expected, rel=1e-10)

    def test_bracket_recorded(self):
        prob, u = tuned_problem(2.0, 1.0)
        _, profile = project(u, prob)
        lo, hi = profile.bracket
        assert lo <= profile.t_star <= hi
        assert profile.sign_trace[0][0] == 1.0


class TestProjection:
    def test_idempotent(self, small_problem, rng):
        for _ in range(20):
            u = random_field(small_problem.grid, rng)
            p1, _ = project(u, small_problem)
            p2, prof2 = project(p1.u, small_problem)
            assert abs(prof2.t_star - 1.0) < 1e-10
            assert np.abs(p2.u.values - p1.u.values).max() <= 1e-10 * np.abs(p1.u.values).max()

    def test_on_manifold(self, well_problem, rng):
        for _ in range(10):
            point, _ = project(random_field(well_problem.grid, rng), well_problem)
            assert point.certified
            assert abs(nehari_functional(point.u, well_problem)) <= 1e-10 * point.norm**2

    @given(st.floats(0.01, 100.0), st.integers(0, 2**31))
    def test_scaling_covariance(self, c, seed):
        prob = make_problem(L=8, M=16, alpha=1.5, V="cos:c=2,a=1", gamma=1.0, q=3.0, p=4.0)
        u = random_field(prob.grid, np.random.default_rng(seed))
        t1 = project(u, prob)[1].t_star
        tc = project(u * c, prob)[1].t_star
        assert tc == pytest.approx(t1 / c, rel=1e-10)
        assert np.abs(project(u * -c, prob)[0].u.values + project(u * c, prob)[0].u.values).max() < 1e-10 * t1

    def test_translation_equivariance(self, small_problem, rng):
        for _ in range(10):
            u = random_field(small_problem.grid, rng)
            k = random_shift(small_problem.grid, rng)
            a = project(translate(u, k), small_problem)[0].u
            b = translate(project(u, small_problem)[0].u, k)
            assert np.abs(a.values - b.values).max() <= 1e-10 * np.abs(b.values).max()

    def test_unique_root(self, small_problem, rng):
        for _ in range(100):
            u = random_field(small_problem.grid, rng)
            t = project(u, small_problem)[1].t_star
            assert fiber_sign_changes(u, small_problem, t / 1e3, t * 1e3) == 1

    def test_zero_rejected(self, small_problem):
        with pytest.raises(ValueError):
            project(Field.zeros(small_problem.grid), small_problem)

    def test_no_sign_change(self):
        with pytest.raises(NoSignChange):
            fiber_root(lambda t: 1.0)
        with pytest.raises(NoSignChange):
            fiber_root(lambda t: -1.0)

    def test_inverse(self, small_problem, rng):
        u = random_field(small_problem.grid, rng)
        point, _ = project(u, small_problem)
        v = inverse_m(point, small_problem)
        assert energy_norm(v, small_problem) == pytest.approx(1.0, rel=1e-14)
        assert np.abs(v.values - inverse_m(u, small_problem).values).max() < 1e-12
        back, _ = project(v, small_problem)
        assert np.abs(back.u.values - point.u.values).max() <= 1e-10 * np.abs(point.u.values).max()

    def test_chain_rule_on_sphere(self, small_problem, rng):
        # d/ds J(m(v + s z)) = ||m(v)|| J'(m(v))(z) for z tangent to the sphere at v
        prob = small_problem
        v = inverse_m(random_field(prob.grid, rng), prob)
        z = random_field(prob.grid, rng)
        from nehari_fs.energy import energy_inner

        z = z - v * energy_inner(z, v, prob)
        z = z / energy_norm(z, prob)
        w = project(v, prob)[0]
        exact = w.norm * pairing_Jprime(w.u, z, prob)

        def phi(s):
            return project(inverse_m(v + z * s, prob), prob)[0].J

        def fd(h):
            return (phi(h) - phi(-h)) / (2 * h)

        e1, e2 = abs(fd(1e-3) - exact), abs(fd(1e-4) - exact)
        assert e2 < 1e-6 * abs(exact)
        assert 60 < e1 / e2 < 140


class TestCertificates:
    def test_J3_on_random_fibers(self, small_problem, rng):
        for _ in range(30):
            point, _ = project(random_field(small_problem.grid, rng), small_problem)
            res = certify_J3(point, small_problem)
            assert res.passed, res.witness

    def test_J3_is_a_fiber_property(self, small_problem, rng):
        # for the power family psi < 0 holds along every ray, not only on the manifold
        point = make_point(random_field(small_problem.grid, rng) * 5.0, small_problem)
        assert not point.certified
        assert certify_J3(point, small_problem).passed

    def test_fiber_maximum(self, well_problem, rng):
        point, _ = project(random_field(well_problem.grid, rng), well_problem)
        assert fiber_value_inequality(point, well_problem).passed

    def test_fiber_slope_root(self, small_problem, rng):
        u = random_field(small_problem.grid, rng)
        h, A = fiber_slope(u, small_problem)
        t = project(u, small_problem)[1].t_star
        assert abs(h(t)) < 1e-12 * A
        assert h(0.5 * t) > 0 > h(2 * t)


class TestTracker:
    def test_records_and_summary(self, small_problem, rng):
        tr = NehariTracker()
        for _ in range(15):
            project(random_field(small_problem.grid, rng), small_problem, tracker=tr)
        s = tr.summary()
        assert s["points"] == 15 and s["certified"] == 15
        assert s["violations"] == 0
        assert s["worst_identity"] < 1e-8
        assert s["worst_coercivity"] > 0
        assert s["beta_sample"] > 0 and math.isfinite(s["min_J"])

    def test_uncertified_not_counted(self, small_problem, rng):
        tr = NehariTracker()
        tr.record(make_point(random_field(small_problem.grid, rng) * 7.0, small_problem), small_problem)
        assert tr.summary()["points"] == 1 and tr.summary()["certified"] == 0

    def test_thread_safe(self, small_problem):
        from concurrent.futures import ThreadPoolExecutor

        tr = NehariTracker()
        fields = [random_field(small_problem.grid, np.random.default_rng(i)) for i in range(40)]
        with ThreadPoolExecutor(4) as ex:
            list(ex.map(lambda u: project(u, small_problem, tracker=tr), fields))
        assert tr.summary()["certified"] == 40
