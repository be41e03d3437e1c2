import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rangepolymer import rangelaw as rl


def logeq(a, b, tol=1e-12):
    if a == -math.inf or b == -math.inf:
        return a == b
    return abs(math.exp(a - b) - 1.0) <= tol


class TestStayProbability:
    def test_one_step_cannot_exit_unit_interval(self):
        assert rl.stay_probability(1, 1, 1) == pytest.approx(0.0, abs=1e-15)

    def test_two_steps_in_01(self):
        # 4 paths, only up-down stays in {0,1}
        assert logeq(rl.stay_probability(2, 0, 1), math.log(0.25))

    def test_four_steps_in_sym_unit(self):
        # 16 paths, 4 never leave {-1,0,1}
        assert logeq(rl.stay_probability(4, 1, 1), math.log(0.25))

    def test_degenerate_single_site(self):
        assert rl.stay_probability(1, 0, 0) == -math.inf
        assert rl.stay_probability(0, 0, 0) == 0.0

    @given(
        n=st.integers(0, 60),
        x=st.integers(0, 6),
        y=st.integers(0, 6),
    )
    @settings(max_examples=120, deadline=None)
    def test_matches_dp(self, n, x, y):
        a = rl.stay_probability(n, x, y)
        b = rl.stay_probability_dp(n, x, y)
        assert logeq(a, b, tol=1e-11)

    def test_matches_dp_mid_scale(self):
        for n in (100, 500, 1000):
            for (x, y) in ((5, 7), (20, 20), (0, 30), (25, 34)):
                a = rl.stay_probability(n, x, y)
                b = rl.stay_probability_dp(n, x, y)
                assert logeq(a, b, tol=1e-10), (n, x, y, a, b)

    def test_monotone_decay_in_n(self):
        vals = [rl.stay_probability(n, 2, 3) for n in range(1, 40)]
        assert all(v2 <= v1 + 1e-15 for v1, v2 in zip(vals, vals[1:]))

    def test_symmetry(self):
        for n in (7, 12, 33):
            for x, y in ((1, 4), (2, 5), (0, 3)):
                assert logeq(rl.stay_probability(n, x, y), rl.stay_probability(n, y, x))

    def test_leading_eigenvalue_domination(self):
        # The module's own top eigenvalue controls the decay.
        for n in (10, 100, 400):
            for x, y in ((2, 2), (3, 8), (10, 10)):
                K = x + y + 1
                lead = n * math.log(math.cos(math.pi / (K + 1)))
                cap = math.log(2.0 * (1.0 + math.log(K + 1)))
                assert rl.stay_probability(n, x, y) <= lead + cap + 1e-12


class TestExactRangeLaw:
    def test_unique_alternating_path(self):
        # 0,1,0,1,0 is the only 4-step path with range {0,1}
        assert logeq(rl.exact_range_law(4, 0, 1), math.log(1.0 / 16))

    def test_single_down_step(self):
        assert logeq(rl.exact_range_law(1, 1, 0), math.log(0.5))

    def test_stuck_at_origin_impossible(self):
        assert rl.exact_range_law(2, 0, 0) == -math.inf

    def test_two_step_small_cases(self):
        assert logeq(rl.exact_range_law(2, 0, 1), math.log(0.25))
        # visiting both -1 and 1 takes at least 3 steps
        assert rl.exact_range_law(2, 1, 1) == -math.inf
        assert logeq(rl.exact_range_law(2, 0, 2), math.log(0.25))
        assert logeq(rl.exact_range_law(2, 1, 0), math.log(0.25))

    @pytest.mark.parametrize("n", [1, 2, 3, 5, 8, 10])
    def test_equals_enumeration(self, n):
        law = rl.range_law_enumeration(n)
        total = sum(law.values())
        assert total == Fraction(1)
        for x in range(n + 1):
            for y in range(n + 1 - x):
                want = law.get((x, y))
                got = rl.exact_range_law(n, x, y) if x + y >= 1 else -math.inf
                if want is None:
                    assert got == -math.inf, (x, y, got)
                else:
                    assert logeq(got, math.log(want)), (x, y, got, want)

    def test_feasibility_closed_form_vs_enumeration(self):
        for n in range(1, 11):
            keys = set(rl.range_law_enumeration(n))
            for x in range(n + 2):
                for y in range(n + 2):
                    assert rl.feasible_range(n, x, y) == ((x, y) in keys), (n, x, y)

    def test_feasibility_closed_form_vs_dp(self):
        # reachability from the dp route on a wider box
        for n in (15, 16, 29, 40):
            for x in range(9):
                for y in range(9):
                    if x + y < 1:
                        continue
                    sh = rl._dp_shell(n, x + y)
                    assert (sh[x] > -math.inf) == rl.feasible_range(n, x, y), (n, x, y)

    def test_symmetry(self):
        for n in (9, 14, 101):
            for x, y in ((0, 4), (2, 5), (3, 3)):
                assert logeq(rl.exact_range_law(n, x, y), rl.exact_range_law(n, y, x))

    def test_spectral_vs_dp_mid_scale(self):
        for n in (200, 1000):
            for T in (10, 25, 40, 60):
                sh_sp = rl._range_shell(n, T)
                sh_dp = rl._dp_shell(n, T)
                cap = rl.stay_log_upper_bound(n, T)
                for x in range(T + 1):
                    if sh_dp[x] == -math.inf and sh_sp[x] > -math.inf:
                        # cell beyond the subtractive route's floor; the
                        # direct route must put it under that floor
                        assert sh_sp[x] <= cap + math.log(1e-13)
                        continue
                    assert logeq(sh_sp[x], sh_dp[x], tol=1e-10), (n, T, x)

    def test_flag_dp_is_exact_oracle(self):
        # the endpoint-flag DP agrees with enumeration exactly
        for n in (6, 9, 12):
            law = rl.range_law_enumeration(n)
            for (x, y), p in law.items():
                assert logeq(rl.range_law_flag_dp(n, x, y), math.log(p), tol=1e-15)

    def test_hostile_cell_matches_flag_dp(self):
        # middle of a wide shell at small n: heavy cancellation regime
        n, T = 200, 60
        sh = rl._range_shell(n, T)
        for x in (29, 30, 31):
            direct = rl.range_law_flag_dp(n, x, T - x)
            assert logeq(sh[x], direct, tol=1e-12), (x, sh[x], direct)


class TestHalfline:
    def test_frozen_small_values(self):
        assert logeq(rl.halfline_range_law(1, 1), math.log(0.5))
        assert logeq(rl.halfline_range_law(2, 1), math.log(0.25))
        assert logeq(rl.halfline_range_law(3, 1), math.log(1.0 / 8))

    def test_against_enumeration(self):
        for n in (3, 6, 9):
            m = 1 << n
            bits = ((np.arange(m)[:, None] >> np.arange(n)[None, :]) & 1).astype(np.int8)
            paths = np.cumsum(2 * bits - 1, axis=1)
            stay = (paths >= 0).all(axis=1)
            maxs = np.maximum(paths.max(axis=1), 0)
            for T in range(1, n + 1):
                cnt = int((stay & (maxs == T)).sum())
                got = rl.halfline_range_law(n, T)
                if cnt == 0:
                    assert got == -math.inf
                else:
                    assert logeq(got, math.log(cnt / m)), (n, T)

    def test_infeasible(self):
        assert rl.halfline_range_law(3, 4) == -math.inf


class TestAsymptoticKernel:
    def test_g_at_three(self):
        k = rl.AsymptoticKernel(h=1.0, n=10)
        assert k.g(3.0) == pytest.approx(math.log(2.0), rel=1e-12)

    def test_c1(self):
        k = rl.AsymptoticKernel(h=1.0, n=10)
        assert k.c_h == pytest.approx(2.14503, abs=5e-6)

    def test_phi_stationary_value(self):
        k = rl.AsymptoticKernel(h=1.0, n=10**6)
        ts = k.T_star
        assert k.phi(ts) == pytest.approx(1.5 * 1.0 * ts, rel=1e-9)
        # stationarity: symmetric difference quotient vanishes
        eps = 1e-3
        deriv = (k.phi(ts + eps) - k.phi(ts - eps)) / (2 * eps)
        assert abs(deriv) < 1e-6

    def test_g_dominates_parabola(self):
        k = rl.AsymptoticKernel(h=1.0, n=10)
        for T in range(2, 200):
            assert k.g(float(T)) >= math.pi**2 / (2.0 * T**2) - 1e-15

    def test_psi_h(self):
        k = rl.AsymptoticKernel(h=1.0, n=10)
        want = (4 / math.pi) * math.exp(-1.0) * (math.e - 1.0) ** 2
        assert k.psi_h == pytest.approx(want, rel=1e-12)


class TestTheta:
    def test_matches_printed_form(self):
        n, h, x, y = 50, 0.7, 4, 6
        T = x + y
        bracket = math.exp(h) * math.sin(math.pi * (x + 1) / T) - math.sin(math.pi * x / T)
        want = math.log((4 / math.pi) * (math.exp(h) - 1) * bracket) + n * math.log(
            math.cos(math.pi / T)
        )
        assert rl.theta_asymptotic(n, h, x, y) == pytest.approx(want, rel=1e-12)

    def test_boundary_rejected(self):
        with pytest.raises(ValueError):
            rl.theta_asymptotic(10, 1.0, 0, 5)
        with pytest.raises(ValueError):
            rl.theta_asymptotic(10, 1.0, 9, 0)  # x = T: outside interior


class TestTables:
    def test_full_window_mass(self):
        t = rl.build_table(10, rl.FullWindow())
        assert t.total_mass() == pytest.approx(1.0, abs=1e-12)
        assert t.truncation_error == 0.0

    def test_mass_invariant_with_truncation(self):
        t = rl.build_table(30, rl.ExplicitWindow(1, 8))
        s = t.total_mass()
        assert s <= 1.0 + 1e-12
        assert s + t.truncation_error >= 1.0 - 1e-12

    def test_table_against_enumeration_n12(self):
        t = rl.build_table(12, rl.FullWindow())
        law = rl.range_law_enumeration(12)
        for x, y, v in t.items():
            want = law.get((x, y))
            if want is None:
                assert v == -math.inf
            else:
                assert logeq(v, math.log(want)), (x, y)

    def test_symmetry_in_table(self):
        t = rl.build_table(15, rl.FullWindow())
        for x, y, v in t.items():
            assert logeq(v, t.logp(y, x))

    def test_weighted_window_certified(self):
        n = 10**6
        pol = rl.WeightedWindow(h=1.0, tol=1e-10)
        t = rl.build_table(n, pol)
        assert t.truncation_error <= 1e-10
        t_lo, t_hi = t.window
        ts = rl.AsymptoticKernel(h=1.0, n=n).T_star
        assert t_lo < ts < t_hi
        # widen threefold: the weighted mass the window missed is tiny
        half = (t_hi - t_lo) // 2
        wide = rl.build_table(n, rl.ExplicitWindow(t_lo - 2 * half, t_hi + 2 * half))

        def weighted(tab):
            terms = [v - 1.0 * (x + y + 1) for x, y, v in tab.items() if v > -math.inf]
            return np.logaddexp.reduce(np.array(terms))

        rel = abs(math.exp(weighted(wide) - weighted(t)) - 1.0)
        assert rel <= 1e-10

    def test_csv_roundtrip(self, tmp_path):
        t = rl.build_table(9, rl.FullWindow())
        p = tmp_path / "table.csv"
        t.to_csv(p)
        back = rl.RangeLawTable.from_csv(p, 9)
        for x, y, v in t.items():
            assert back.logp(x, y) == v

    def test_npz_roundtrip(self, tmp_path):
        t = rl.build_table(9, rl.FullWindow())
        p = tmp_path / "table.npz"
        t.save_npz(p)
        back = rl.RangeLawTable.load_npz(p)
        assert back.n == 9
        assert back.window == t.window
        for x, y, v in t.items():
            assert back.logp(x, y) == v
