import math

import numpy as np
import pytest

from nehari_fs.energy import energy_norm, eval_J, residual
from nehari_fs.nehari import NehariTracker
from nehari_fs.solve import (
    LineSearchStall,
    MaxItersExceeded,
    SolverConfig,
    boundary_smallness,
    bump,
    canonical,
    coercive_diagnostics,
    compare_c_vs_cper,
    dedup,
    default_starts,
    minimize,
    multi_start,
    orbit_distance,
    prolong,
    random_start,
    resolution_study,
    run_quiet,
    worker_count,
)
from nehari_fs.torus_spectral import Field, TorusGrid, shift_continuous, translate

from conftest import make_problem, sech_soliton

NOISE = 1e-13


@pytest.fixture(scope="module")
def small_soliton():
    return make_problem(L=24, M=16)


class TestConfig:
    @pytest.mark.parametrize("kw", [dict(tol_grad=0), dict(tol_res=-1), dict(armijo_c=0.5), dict(armijo_c=0), dict(armijo_rho=1.0), dict(n_starts=-1), dict(dedup_threshold=0.0)])
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            SolverConfig(**kw)


class TestMinimize:
    def test_from_exact_soliton(self, soliton_problem):
        u = sech_soliton(soliton_problem.grid)
        rep = minimize(u, soliton_problem)
        assert rep.converged and rep.iterations <= 5
        assert abs(rep.J_final - 4.0 / 3.0) < 1e-10

    def test_converges_from_bump(self, small_soliton):
        rep = minimize(bump(small_soliton.grid, [12.0], 2.0), small_soliton)
        assert rep.converged and rep.status == "converged"
        assert rep.J_final == pytest.approx(4.0 / 3.0, abs=1e-6)
        assert rep.residual_final < 1e-8 and rep.grad_final < 1e-8
        assert residual(rep.u, small_soliton).relative < 1e-7

    def test_traces(self, small_problem):
        rep = minimize(default_starts(small_problem, SolverConfig(n_starts=1))[0], small_problem)
        E = np.asarray(rep.energy_trace)
        assert len(E) == rep.iterations + 1 == len(rep.l2_trace) == len(rep.t_star_trace)
        # monotone up to floating-point noise in the Armijo acceptance
        assert np.all(np.diff(E) <= NOISE * np.maximum(1.0, np.abs(E[1:])))
        assert rep.coercive_ok
        assert min(rep.norm_sq_trace) > 0 and min(rep.l2_trace) > 0

    def test_sign_symmetry(self, small_problem):
        start = default_starts(small_problem, SolverConfig(n_starts=1))[0]
        a, b = minimize(start, small_problem), minimize(-start, small_problem)
        assert a.J_final == b.J_final
        assert np.array_equal(a.u.values, -b.u.values)

    def test_translation_covariance(self, small_problem):
        start = default_starts(small_problem, SolverConfig(n_starts=2))[1]
        a = minimize(start, small_problem)
        b = minimize(translate(start, (3,)), small_problem)
        assert b.J_final == pytest.approx(a.J_final, rel=1e-12)
        assert np.abs(b.u.values - translate(a.u, (3,)).values).max() < 1e-8

    def test_max_iters(self, small_problem):
        start = default_starts(small_problem, SolverConfig(n_starts=1))[0]
        with pytest.raises(MaxItersExceeded) as info:
            minimize(start, small_problem, SolverConfig(max_iters=2))
        rep = info.value.report
        assert rep.status == "max_iters" and not rep.converged and rep.iterations == 2
        assert run_quiet(start, small_problem, SolverConfig(max_iters=2), start_index=7).start_index == 7

    def test_stall_reported(self, small_problem, monkeypatch):
        import nehari_fs.solve as solve_mod
        from nehari_fs.nehari import NoSignChange

        original = solve_mod._evaluate
        calls = []

        def flaky(*args):
            calls.append(1)
            if len(calls) > 1:
                raise NoSignChange("forced")
            return original(*args)

        monkeypatch.setattr(solve_mod, "_evaluate", flaky)
        start = default_starts(small_problem, SolverConfig(n_starts=1))[0]
        with pytest.raises(LineSearchStall) as info:
            minimize(start, small_problem, SolverConfig(min_step=1e-3))
        assert info.value.report.status == "stalled"
        assert info.value.report.iterations == 0

    def test_zero_start(self, small_problem):
        with pytest.raises(ValueError):
            minimize(Field.zeros(small_problem.grid), small_problem)


class TestStarts:
    def test_deterministic(self, small_problem):
        cfg = SolverConfig(n_starts=3, seed=11)
        a, b = default_starts(small_problem, cfg), default_starts(small_problem, cfg)
        assert all(np.array_equal(x.values, y.values) for x, y in zip(a, b))
        c = default_starts(small_problem, SolverConfig(n_starts=3, seed=12))
        assert not np.array_equal(a[1].values, c[1].values)

    def test_first_start_at_potential_minimum(self, small_problem):
        u = default_starts(small_problem, SolverConfig(n_starts=1))[0]
        j = int(np.argmax(u.values))
        assert small_problem.V.ravel()[j] == pytest.approx(small_problem.V.min())

    def test_random_start_shape(self, well_problem, rng):
        u = random_start(well_problem, rng)
        assert u.values.shape == well_problem.grid.shape and np.any(u.values)

    def test_worker_count(self, monkeypatch):
        monkeypatch.setenv("NEHARI_FS_THREADS", "2")
        assert worker_count(10) == 2
        assert worker_count(1) == 1
        monkeypatch.delenv("NEHARI_FS_THREADS")
        assert worker_count(3) >= 1


class TestMultiStart:
    def test_empty(self, small_problem):
        res = multi_start(small_problem, SolverConfig(n_starts=0))
        assert res.reports == [] and res.ground is None and math.isnan(res.best_J)

    def test_single_orbit(self, small_problem):
        tr = NehariTracker()
        res = multi_start(small_problem, SolverConfig(n_starts=4), tracker=tr)
        assert len(res.reports) == 4 and not res.failed
        assert len(res.classes) == 1
        assert res.ground.J_final == pytest.approx(min(r.J_final for r in res.reports), rel=1e-12)
        tied = [r for r in res.reports if r.J_final <= res.reports[0].J_final * (1 + 1e-12)]
        assert res.ground.start_index == min(r.start_index for r in tied)
        assert sum(r.distinct for r in res.reports) == 1
        assert tr.summary()["violations"] == 0 and tr.summary()["certified"] > 0

    def test_reproducible(self, small_problem, monkeypatch):
        cfg = SolverConfig(n_starts=3, seed=5)
        a = multi_start(small_problem, cfg)
        monkeypatch.setenv("NEHARI_FS_THREADS", "1")
        b = multi_start(small_problem, cfg)
        assert [r.J_final for r in a.reports] == [r.J_final for r in b.reports]


class TestOrbits:
    def test_lattice_shift_recovered(self, small_problem, rng):
        u = Field(small_problem.grid, rng.normal(size=small_problem.grid.shape))
        m = orbit_distance(u, translate(u, (5,)), small_problem)
        assert m.distance < 1e-10 * energy_norm(u, small_problem)
        assert m.shift == (-5,) or (m.shift[0] - (-5)) % 16 == 0

    def test_sign_aware(self, small_problem, rng):
        u = Field(small_problem.grid, rng.normal(size=small_problem.grid.shape))
        assert orbit_distance(u, -u, small_problem).distance > 1.0
        m = orbit_distance(u, -translate(u, (2,)), small_problem, sign_aware=True)
        assert m.sign == -1 and m.distance < 1e-10 * energy_norm(u, small_problem)

    def test_distance_is_minimum_over_shifts(self, small_problem, rng):
        u = Field(small_problem.grid, rng.normal(size=small_problem.grid.shape))
        v = Field(small_problem.grid, rng.normal(size=small_problem.grid.shape))
        brute = min(energy_norm(u - translate(v, (k,)), small_problem) for k in range(16))
        assert orbit_distance(u, v, small_problem).distance == pytest.approx(brute, rel=1e-12)

    def test_continuous_subgrid(self, soliton_problem):
        u = sech_soliton(soliton_problem.grid)
        v = shift_continuous(u, [3.3 + 0.37 * soliton_problem.grid.spacing])
        m = orbit_distance(u, v, soliton_problem)
        assert m.shift[0] == pytest.approx(-(3.3 + 0.37 * soliton_problem.grid.spacing), abs=1e-3 * soliton_problem.grid.spacing)
        assert m.distance < 1e-5

    def test_unknown_mode(self, small_problem, rng):
        u = Field(small_problem.grid, rng.normal(size=small_problem.grid.shape))
        with pytest.raises(ValueError):
            orbit_distance(u, u, small_problem, mode="rotation")

    def test_dedup(self, small_problem, rng):
        u = Field(small_problem.grid, rng.normal(size=small_problem.grid.shape))
        v = Field(small_problem.grid, rng.normal(size=small_problem.grid.shape))
        items = [u, translate(u, (3,)), v, -u, translate(v, (-1,))]
        assert len(dedup(items, small_problem)) == 3
        classes = dedup(items, small_problem, sign_aware=True)
        assert len(classes) == 2 and any(c.signed_pair for c in classes)
        assert dedup([], small_problem) == []

    def test_canonical(self, small_problem):
        g = small_problem.grid
        u = bump(g, [3.0], 1.0)
        c1, c2 = canonical(u, small_problem), canonical(translate(u, (4,)), small_problem)
        assert np.array_equal(c1.values, c2.values)
        assert abs(g.axis[int(np.argmax(c1.values))] - g.center[0]) <= 0.5


class TestDiagnostics:
    def test_boundary(self, small_soliton):
        u = sech_soliton(small_soliton.grid)
        assert boundary_smallness(u, rel=1e-3).passed
        assert not boundary_smallness(Field(u.grid, np.ones(u.grid.shape))).passed

    def test_coercive_skipped_for_periodic(self, small_problem):
        rep = minimize(default_starts(small_problem, SolverConfig(n_starts=1))[0], small_problem)
        res = coercive_diagnostics(rep, small_problem)
        tail = [p for p in res.details["parts"] if p.name == "tail_mass"][0]
        assert tail.status == "skip"
        assert [p for p in res.details["parts"] if p.name == "no_vanishing"][0].passed

    def test_compare_skips_for_periodic(self, small_soliton):
        res = compare_c_vs_cper(small_soliton, SolverConfig(n_starts=1))
        assert res.status == "skip" and res.details["equal"]

    def test_prolong_exact_for_band_limited(self):
        g, fine = TorusGrid(1, 4, 8), TorusGrid(1, 4, 16)
        f = lambda x: np.cos(2 * np.pi * x[0] / 4) + 0.3 * np.sin(6 * np.pi * x[0] / 4)
        out = prolong(Field.from_function(g, f), fine)
        assert np.abs(out.values - Field.from_function(fine, f).values).max() < 1e-12

    def test_resolution_study(self):
        prob = make_problem(L=16, M=4, alpha=1.5, gamma=1.0)
        study = resolution_study(prob, SolverConfig(), max_doublings=3, rtol=1e-8)
        assert study.stable_M is not None
        Ms = [lvl[0] for lvl in study.levels]
        assert Ms[:2] == [4, 8]
        assert abs(study.levels[-1][1] - study.levels[-2][1]) <= 1e-8 * abs(study.levels[-1][1])
