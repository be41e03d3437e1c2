import math

import numpy as np
import pytest
from scipy import integrate, stats

from rangepolymer import stochproc as sp
from rangepolymer.stochproc import (
    BoundaryMaxError,
    MeanderKernel,
    ProcessPath,
    couple_bessel_excursion,
    decompose_bm_at_max,
    meander_bound_checks,
    meander_from_excursion,
    meander_marginal_density,
    refine_bridge,
    sample_bessel3,
    sample_bm,
    sample_excursion,
    sample_excursion_batch,
    sample_meander,
    sample_meander_batch,
    sample_meander_from,
    sample_two_sided_bessel,
    sample_two_sided_bm,
)


class TestProcessPath:
    def test_invariants(self):
        with pytest.raises(ValueError):
            ProcessPath(np.array([0.0, 1.0]), np.array([0.0, -0.1]), "meander", 1.0)
        with pytest.raises(ValueError):
            ProcessPath(np.array([0.1, 1.0]), np.array([0.0, 1.0]), "bm", 1.0)
        with pytest.raises(ValueError):
            ProcessPath(np.array([0.0, 0.5, 0.5]), np.array([0.0, 1.0, 2.0]), "bm", 0.5)
        with pytest.raises(ValueError):
            ProcessPath(np.array([0.0, 0.5, 1.0]), np.array([0.0, 1.0, 0.5]), "excursion", 1.0)
        with pytest.raises(ValueError):
            ProcessPath(np.array([0.5, 1.0]), np.array([0.1, 0.2]), "two_sided_bessel", 1.5)

    def test_binary_roundtrip(self, tmp_path):
        p = sample_bm(np.linspace(0.1, 2.0, 20), seed=3)
        f = tmp_path / "p.bin"
        p.save(f)
        q = ProcessPath.load(f)
        assert q.kind == "bm"
        assert q.duration == p.duration
        np.testing.assert_array_equal(q.times, p.times)
        np.testing.assert_array_equal(q.values, p.values)

    def test_csv(self, tmp_path):
        p = sample_bm(np.array([0.5, 1.0]), seed=1)
        f = tmp_path / "p.csv"
        p.to_csv(f)
        lines = f.read_text().strip().split("\n")
        assert lines[0] == "t,value"
        assert len(lines) == 4
        assert float(lines[1].split(",")[1]) == 0.0


class TestBrownian:
    def test_starts_at_zero(self):
        p = sample_bm(np.linspace(0.01, 1.0, 100), seed=1)
        assert p.times[0] == 0.0 and p.values[0] == 0.0

    def test_increment_variance_chi2(self):
        n = 10**5
        dt = 1e-3
        p = sample_bm(np.arange(1, n + 1) * dt, seed=2)
        inc = np.diff(p.values)
        stat = np.sum(inc**2) / dt
        # chi2 with n dof, two-sided
        pval = 2 * min(stats.chi2.cdf(stat, n), stats.chi2.sf(stat, n))
        assert pval >= 0.01

    def test_refine_preserves_coarse(self):
        g = np.linspace(0.1, 1.0, 10)
        p = sample_bm(g, seed=5)
        fine = np.linspace(0.31, 0.49, 6)
        q = refine_bridge(p, (0.3, 0.5), fine, seed=8)
        keep = np.isin(q.times, p.times)
        np.testing.assert_array_equal(q.times[keep], p.times)
        np.testing.assert_array_equal(q.values[keep], p.values)
        assert q.times.size == p.times.size + 6

    def test_refine_bridge_variance(self):
        # refined midpoint given both ends is N(mean, h/2) with h the step
        vals = []
        g = np.array([1.0, 2.0])
        p = sample_bm(g, seed=11)
        for s in range(4000):
            q = refine_bridge(p, (1.0, 2.0), np.array([1.5]), seed=s)
            vals.append(q.value_at(1.5) - 0.5 * (p.value_at(1.0) + p.value_at(2.0)))
        v = np.var(vals)
        assert abs(v - 0.25) < 0.03

    def test_refine_errors(self):
        p = sample_bm(np.linspace(0.1, 1.0, 10), seed=5)
        with pytest.raises(ValueError):
            refine_bridge(p, (0.5, 1.5), np.array([0.7]))
        with pytest.raises(ValueError):
            refine_bridge(p, (0.3, 0.5), np.array([0.7]))
        m = sample_meander(np.array([0.5, 1.0]), 1.0, seed=1)
        with pytest.raises(ValueError):
            refine_bridge(m, (0.5, 1.0), np.array([0.7]))

    def test_two_sided(self):
        g = np.concatenate([np.linspace(-2, -0.1, 20), np.linspace(0.1, 3, 30)])
        p = sample_two_sided_bm(g, seed=4)
        assert p.value_at(0.0) == 0.0
        assert p.kind == "bm_two_sided"
        with pytest.raises(ValueError):
            sample_two_sided_bm(np.array([0.1, 0.2]), seed=4)

    def test_deterministic(self):
        a = sample_bm(np.linspace(0.1, 1, 50), seed=9)
        b = sample_bm(np.linspace(0.1, 1, 50), seed=9)
        np.testing.assert_array_equal(a.values, b.values)


class TestMeanderDensity:
    def test_rayleigh_at_endpoint(self):
        y = np.linspace(0.01, 4, 50)
        got = meander_marginal_density(1.0, y, 1.0)
        np.testing.assert_allclose(got, y * np.exp(-(y**2) / 2), rtol=1e-12)

    def test_normalization(self):
        val, _ = integrate.quad(lambda y: meander_marginal_density(0.5, y), 0, 20)
        assert abs(val - 1.0) <= 1e-8
        val2, _ = integrate.quad(lambda y: meander_marginal_density(0.3, y, 2.5), 0, 20)
        assert abs(val2 - 1.0) <= 1e-8

    def test_zero_at_origin(self):
        assert meander_marginal_density(0.4, np.array([0.0]))[0] == 0.0

    def test_domain_errors(self):
        with pytest.raises(ValueError):
            meander_marginal_density(0.0, np.array([1.0]))
        with pytest.raises(ValueError):
            meander_marginal_density(1.2, np.array([1.0]), 1.0)

    def test_cdf_matches_density(self):
        # closed-form CDF differentiates back to the marginal density
        for t in (0.2, 0.5, 0.9):
            y = np.linspace(0.05, 3.0, 30)
            h = 1e-6
            num = (sp._meander_marginal_cdf(t, y + h) - sp._meander_marginal_cdf(t, y - h)) / (2 * h)
            np.testing.assert_allclose(num, meander_marginal_density(t, y), rtol=1e-5,
                                       atol=1e-9)
        assert sp._meander_marginal_cdf(0.5, np.array([50.0]))[0] == pytest.approx(1.0, abs=1e-14)

    def test_kernel_normalizes(self):
        k = MeanderKernel(1.0)
        for s, x, t in ((0.2, 0.7, 0.6), (0.1, 0.05, 0.9), (0.5, 2.0, 1.0)):
            val, _ = integrate.quad(lambda y: k.transition_density(s, x, t, y), 0, 30)
            assert abs(val - 1.0) <= 1e-6, (s, x, t)

    def test_chapman_kolmogorov(self):
        # compose marginal at t1 with the kernel: must give the marginal at t2
        k = MeanderKernel(1.0)
        t1, t2 = 0.3, 0.7
        for y in (0.4, 1.0, 1.8):
            val, _ = integrate.quad(
                lambda x: meander_marginal_density(t1, x) * k.transition_density(t1, x, t2, y),
                0, 25, limit=200)
            assert val == pytest.approx(float(meander_marginal_density(t2, y)), rel=1e-6)

    def test_bvn_oracle(self):
        # bivariate normal rectangle vs scipy's mvn at scattered points
        for h, kk, r in ((0.3, -0.7, -0.5), (-1.2, 2.0, 0.8), (0.0, 0.5, -0.9),
                         (1.5, 1.5, 0.3), (-0.4, -0.4, -0.2)):
            want = stats.multivariate_normal([0, 0], [[1, r], [r, 1]]).cdf([h, kk])
            got = sp._bvn_cdf(np.array([h]), np.array([kk]), r)[0]
            assert got == pytest.approx(want, abs=5e-10)

    def test_step_cdf_slope_is_kernel(self):
        # d/dy of the unnormalized step CDF = kernel numerator
        s, x, t = 0.25, 0.8, 0.55
        y = np.linspace(0.05, 2.5, 20)
        h = 1e-6
        num = (sp._step_cdf_unnormalized(y + h, x, s, t)
               - sp._step_cdf_unnormalized(y - h, x, s, t)) / (2 * h)
        k = MeanderKernel(1.0)
        want = k.transition_density(s, x, t, y) * sp._phi_int(1 - s, np.array([x]))[0]
        np.testing.assert_allclose(num, want, rtol=2e-5)


class TestMeanderSampling:
    def test_endpoint_rayleigh(self):
        T = 2.5
        vals = sample_meander_batch(np.array([0.8 * T, T]), T, seed=31, size=10**5)
        z = vals[:, 1] / math.sqrt(T)
        ks = stats.kstest(z, lambda y: 1 - np.exp(-(y**2) / 2))
        assert ks.statistic <= 0.02

    def test_positive(self):
        vals = sample_meander_batch(np.linspace(0.1, 1.0, 10), 1.0, seed=32, size=2000)
        assert (vals > 0).all()

    def test_marginal_chi2_first_step(self):
        n = 10**5
        vals = sample_meander_batch(np.array([0.3]), 1.0, seed=33, size=n)[:, 0]
        edges = sp._invert_cdf(lambda z: sp._meander_marginal_cdf(0.3, z),
                               np.linspace(0.02, 0.98, 49), np.full(49, 16.0))
        obs = np.histogram(vals, bins=np.concatenate([[0], edges, [np.inf]]))[0]
        probs = np.diff(np.concatenate([[0], np.linspace(0.02, 0.98, 49), [1]]))
        chi2 = ((obs - n * probs) ** 2 / (n * probs)).sum()
        p = stats.chi2.sf(chi2, len(obs) - 1)
        assert p >= 0.01

    def test_marginal_chi2_through_kernel_step(self):
        # the value at 0.3 reached via a kernel step must match the marginal
        n = 4 * 10**4
        vals = sample_meander_batch(np.array([0.15, 0.3]), 1.0, seed=34, size=n)[:, 1]
        qs = np.linspace(0.025, 0.975, 39)
        edges = sp._invert_cdf(lambda z: sp._meander_marginal_cdf(0.3, z), qs,
                               np.full(39, 16.0))
        obs = np.histogram(vals, bins=np.concatenate([[0], edges, [np.inf]]))[0]
        probs = np.diff(np.concatenate([[0], qs, [1]]))
        chi2 = ((obs - n * probs) ** 2 / (n * probs)).sum()
        p = stats.chi2.sf(chi2, len(obs) - 1)
        assert p >= 0.01

    def test_conditional_continuation(self):
        # marginally-drawn start + conditional continuation == joint sampling
        n = 2 * 10**4
        joint = sample_meander_batch(np.array([0.2, 0.5]), 1.0, seed=35, size=n)[:, 1]
        start = sample_meander_batch(np.array([0.2]), 1.0, seed=36, size=n)[:, 0]
        cont = sample_meander_from(np.array([0.5]), 1.0, 0.2, start, seed=37, size=n)[:, 0]
        ks = stats.ks_2samp(joint, cont)
        assert ks.pvalue >= 0.01

    def test_path_api(self):
        p = sample_meander(np.linspace(0.05, 1.0, 20), 1.0, seed=38)
        assert p.kind == "meander"
        assert p.values[0] == 0.0
        assert (p.values[1:] > 0).all()
        p2 = sample_meander(np.linspace(0.05, 1.0, 20), 1.0, seed=38)
        np.testing.assert_array_equal(p.values, p2.values)

    def test_grid_errors(self):
        with pytest.raises(ValueError):
            sample_meander(np.array([0.0, 0.5]), 1.0, seed=1)
        with pytest.raises(ValueError):
            sample_meander(np.array([0.5, 1.5]), 1.0, seed=1)


class TestBessel:
    def test_positive_and_zero_start(self):
        p = sample_bessel3(np.linspace(0.01, 2, 200), seed=41)
        assert p.values[0] == 0.0
        assert (p.values[1:] > 0).all()

    def test_second_moment(self):
        t = 0.7
        vals = sp._bessel3_values(np.array([t]), sp.stream(42, sp.MODULE_STOCHPROC, 2),
                                  10**5)[:, 0]
        assert abs((vals**2).mean() - 3 * t) <= 0.02 * 3 * t

    def test_scaling(self):
        a = 3.0
        v1 = sp._bessel3_values(np.array([a * 0.5]), sp.stream(43, sp.MODULE_STOCHPROC, 2),
                                2 * 10**4)[:, 0] / math.sqrt(a)
        v2 = sp._bessel3_values(np.array([0.5]), sp.stream(44, sp.MODULE_STOCHPROC, 2),
                                2 * 10**4)[:, 0]
        assert stats.ks_2samp(v1, v2).pvalue >= 0.01

    def test_two_sided(self):
        g = np.concatenate([np.linspace(-1, -0.01, 50), np.linspace(0.01, 1, 50)])
        p = sample_two_sided_bessel(g, seed=45)
        assert p.value_at(0.0) == 0.0
        assert (np.delete(p.values, 50) > 0).all()
        # halves independent
        ends = []
        for s in range(400):
            q = sample_two_sided_bessel(np.array([-1.0, 1.0]), seed=s)
            ends.append((q.values[0], q.values[-1]))
        ends = np.array(ends)
        c = np.corrcoef(ends[:, 0], ends[:, 1])[0, 1]
        assert abs(c) <= 0.15


class TestExcursion:
    def test_endpoints_zero(self):
        p = sample_excursion(np.linspace(0, 1, 101), seed=51)
        assert p.values[0] == 0.0
        assert p.values[-1] == 0.0
        assert p.values.max() > 0

    def test_midpoint_law(self):
        v = sample_excursion_batch(np.array([0.5]), seed=52, size=10**5)[:, 0]
        ks = stats.kstest(v, stats.maxwell(scale=0.5).cdf)
        assert ks.statistic <= 0.02

    def test_offcenter_marginal(self):
        # e_t is Maxwell with scale sqrt(t(1-t)); at t=1/2 this is the stated
        # midpoint law, so this cross-validates the bridge construction
        t = 0.35
        v = sample_excursion_batch(np.array([t]), seed=53, size=10**5)[:, 0]
        ks = stats.kstest(v, stats.maxwell(scale=math.sqrt(t * (1 - t))).cdf)
        assert ks.statistic <= 0.02

    def test_grid_errors(self):
        with pytest.raises(ValueError):
            sample_excursion(np.array([0.5, 1.2]), seed=1)


class TestMeanderFromExcursion:
    def test_prefix_bit_exact(self):
        e = sample_excursion(np.linspace(0, 1, 201), seed=61)
        m = meander_from_excursion(e, 0.63)
        keep = e.times <= 0.63
        np.testing.assert_array_equal(m.values[keep], e.values[keep])
        assert m.kind == "meander"

    def test_endpoint_literal_formula(self):
        e = sample_excursion(np.linspace(0, 1, 201), seed=62)
        u = 0.4
        m = meander_from_excursion(e, u)
        want = e.value_at(u) + e.value_at(1.0 - (1.0 - u))
        assert m.values[-1] == want
        assert m.values[-1] == 2 * e.value_at(u)

    def test_marginal_at_interior_time(self):
        # pasted-path value at t=0.7 must follow the meander marginal
        n = 10**5
        grid = np.linspace(0, 1, 1001)
        rng = sp.stream(63, sp.MODULE_STOCHPROC, 5)
        out = np.empty(n)
        done = 0
        while done < n:
            b = min(20000, n - done)
            e = sp._excursion_batch(grid, rng, b)
            u = rng.random(b)
            rr = np.arange(b)
            def interp(tq):
                lo = np.clip(np.searchsorted(grid, tq) - 1, 0, grid.size - 2)
                w = np.clip((tq - grid[lo]) / (grid[lo + 1] - grid[lo]), 0, 1)
                return e[rr, lo] * (1 - w) + e[rr, lo + 1] * w
            tq = 0.7
            vals = np.where(tq <= u, e[:, 700], interp(u) + interp(1 - (tq - u)))
            out[done:done + b] = vals
            done += b
        ks = stats.kstest(out, lambda y: sp._meander_marginal_cdf(0.7, y))
        assert ks.statistic <= 0.02

    def test_matches_inline_formula(self):
        # the ProcessPath operation implements exactly the formula above
        for s in range(20):
            e = sample_excursion(np.linspace(0, 1, 301), seed=100 + s)
            u = (s + 0.5) / 20
            m = meander_from_excursion(e, u)
            tail = e.value_at(u) + e.value_at(1.0 - (e.times - u))
            want = np.where(e.times <= u, e.values, tail)
            np.testing.assert_array_equal(m.values, want)


class TestCoupling:
    def test_equality_window(self):
        grid = np.linspace(0, 1, 10001)
        res = couple_bessel_excursion(grid, seed=71)
        assert res.eps > 0
        t = res.bessel.times
        mask = t <= res.eps
        exc_at = res.excursion.values[np.isin(res.excursion.times, t[mask])]
        np.testing.assert_array_equal(exc_at, res.bessel.values[mask])

    def test_eps_positive_fraction(self):
        grid = np.linspace(0, 1, 10001)
        hits = 0
        for s in range(200):
            res = couple_bessel_excursion(grid, seed=1000 + s)
            if res.resamples == 0:
                hits += 1
            assert res.eps > 0
        assert hits >= 196

    def test_spliced_marginal(self):
        # splicing is a rotation: the excursion marginal is unchanged
        grid = np.linspace(0, 1, 10001)
        vals = np.array([couple_bessel_excursion(grid, seed=2000 + s)
                         .excursion.value_at(0.25) for s in range(400)])
        ref = sample_excursion_batch(np.array([0.25]), seed=77, size=4000)[:, 0]
        assert stats.ks_2samp(vals, ref).pvalue >= 0.01

    def test_resolution_guard(self):
        with pytest.raises(ValueError):
            couple_bessel_excursion(np.linspace(0, 1, 101), seed=1)


class TestDecompose:
    def test_shapes_and_positivity(self):
        g = np.linspace(1e-3, 1.0, 1000)
        p = sample_bm(g, seed=81)
        d = decompose_bm_at_max(p, seed=81)
        assert 0 < d.sigma < 1
        for m in (d.left, d.right):
            assert m.times[0] == 0.0 and m.values[0] == 0.0
            assert (m.values >= 0).all()
            assert m.kind == "meander"
        assert d.left.duration == pytest.approx(d.sigma)
        assert d.right.duration == pytest.approx(1 - d.sigma)

    def test_right_endpoint_rayleigh_and_independence(self):
        n = 10**4
        g = np.arange(1, 10001) * 1e-4
        rng = sp.stream(82, sp.MODULE_STOCHPROC, 0)
        lefts = np.empty(n)
        rights = np.empty(n)
        filled = 0
        boundary = 0
        while filled < n:
            vals = sp._bm_values(g, rng, 50)
            for row in vals:
                if filled >= n:
                    break
                p = ProcessPath(np.concatenate([[0.0], g]),
                                np.concatenate([[0.0], row]), "bm", 1.0)
                try:
                    d = decompose_bm_at_max(p, seed=filled)
                except BoundaryMaxError:
                    boundary += 1
                    continue
                lefts[filled] = d.left.values[-1] / math.sqrt(d.left.duration)
                rights[filled] = d.right.values[-1] / math.sqrt(d.right.duration)
                filled += 1
        ks = stats.kstest(rights, lambda y: 1 - np.exp(-(y**2) / 2))
        assert ks.statistic <= 0.03
        assert abs(np.corrcoef(lefts, rights)[0, 1]) <= 0.05
        assert boundary <= 0.03 * n

    def test_boundary_error(self):
        t = np.array([0.0, 0.5, 1.0])
        with pytest.raises(BoundaryMaxError):
            decompose_bm_at_max(ProcessPath(t, np.array([0.0, -1.0, -2.0]), "bm", 1.0))
        with pytest.raises(ValueError):
            decompose_bm_at_max(sample_meander(np.array([1.0]), 1.0, seed=1))


class TestBounds:
    def test_all_hold(self):
        rows = meander_bound_checks(samples=10**5, seed=91)
        assert len(rows) == 4
        for r in rows:
            assert r.holds, (r.name, r.lhs, r.rhs, r.mc_se)
        byname = {r.name: r for r in rows}
        assert byname["exp_moment"].rhs == pytest.approx(0.8**-1.5, rel=1e-12)
        assert byname["small_value"].mc_se == 0.0

    def test_budget_guard(self):
        with pytest.raises(ValueError):
            meander_bound_checks(samples=100)
