import math
import warnings

import numpy as np
import pytest
from scipy.stats import poisson

from zeno_lab.bloch import (
    CountResolvedState,
    auto_n_max,
    evolve_counting,
    evolve_traced,
    trace_over_n,
)
from zeno_lab.errors import LadderLeakError, TruncationWarning, UsageError
from zeno_lab.model import RateSet, build_energy_grid


@pytest.fixture(autouse=True)
def _quiet_truncation():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TruncationWarning)
        yield


def grid(n=201, hw=15.0):
    return build_energy_grid(0.0, hw, n)


def poisson_ladder(rates, t, n_max):
    """Independent oracle for the dot-occupied ladder: the loss terms close,
    so s00[n](t) = exp(-(Gamma+D')t) (D't)^n / n!."""
    n = np.arange(n_max + 1)
    return math.exp(-rates.gamma * t) * poisson.pmf(n, rates.d_prime * t)


class TestCountLadder:
    def test_n0_sector_closed_form(self):
        for d, dp in ((0.0, 0.0), (2.0, 0.5), (5.0, 5.0)):
            r = RateSet.from_direct(1.0, d, dp)
            traj = evolve_counting(r, grid(), 2.0, 0.5)
            for t, st in zip(traj.times, traj.states):
                want = math.exp(-(r.gamma + r.d_prime) * t)
                assert st.sigma_00_n[0] == pytest.approx(want, abs=1e-12)

    def test_ladder_is_poisson_shifted(self):
        r = RateSet.from_direct(1.0, 2.0, 0.5)
        traj = evolve_counting(r, grid(), 2.0, 1.0)
        st = traj.final
        np.testing.assert_allclose(st.sigma_00_n, poisson_ladder(r, st.t, st.n_max),
                                   rtol=0, atol=1e-13)
        # frozen spot value: e^-3 * (0.5*2)^1 / 1!
        assert st.sigma_00_n[1] == pytest.approx(math.exp(-3.0), rel=1e-12)

    def test_count_sum_telescopes_to_survival(self):
        r = RateSet.from_direct(1.0, 2.0, 0.5)
        traj = evolve_counting(r, grid(), 10.0, 1.0)
        for t, st in zip(traj.times, traj.states):
            assert abs(float(np.sum(st.sigma_00_n)) - math.exp(-t)) < 1e-8

    def test_auto_n_max_rule(self):
        r = RateSet.from_direct(1.0, 4.0, 2.0)
        assert auto_n_max(r, 10.0) == math.ceil(40.0 + 10 * math.sqrt(40.0)) + 10

    def test_ladder_leak_raises(self):
        r = RateSet.from_direct(1.0, 2.0, 2.0)
        with pytest.raises(LadderLeakError):
            evolve_counting(r, grid(), 10.0, 2.0, n_max=3)

    def test_negative_n_max_rejected(self):
        r = RateSet.from_direct(1.0, 2.0, 0.5)
        with pytest.raises(UsageError):
            evolve_counting(r, grid(), 1.0, 0.5, n_max=-1)


class TestTraceConsistency:
    def test_single_rung_trace_is_identity(self):
        s00 = np.zeros(4)
        s00[0] = 0.3
        saa = np.zeros((4, 5))
        saa[0] = 0.1
        sa0 = np.zeros((4, 5), dtype=complex)
        sa0[0] = 0.01j
        st = CountResolvedState(t=1.0, n_max=3, sigma_00_n=s00, sigma_aa_n=saa,
                                sigma_a0_n=sa0)
        tr = trace_over_n(st)
        assert tr.sigma_00 == 0.3
        np.testing.assert_array_equal(tr.sigma_aa, saa[0])
        np.testing.assert_array_equal(tr.sigma_a0, sa0[0])

    def test_trace_matches_traced_engine(self):
        r = RateSet.from_direct(1.0, 2.0, 0.5)
        g = grid()
        counting = evolve_counting(r, g, 10.0, 1.0)
        traced = evolve_traced(r, g, 10.0, 1.0)
        for cs, ts in zip(counting.states, traced.states):
            tr = trace_over_n(cs)
            assert abs(tr.sigma_00 - ts.sigma_00) < 1e-8
            assert np.max(np.abs(tr.sigma_aa - ts.sigma_aa)) < 1e-8
            assert np.max(np.abs(tr.sigma_a0 - ts.sigma_a0)) < 1e-8

    def test_summed_coherence_decays_at_dephased_rate(self):
        # at zero detuning the late-time envelope of the traced coherence
        # falls off with (gamma + gamma_d)/2
        r = RateSet.from_direct(1.0, 2.0, 0.5)  # gamma_d = 0.5, envelope rate 0.75
        g = grid(n=21, hw=2.0)
        traj = evolve_counting(r, g, 30.0, 1.0)
        center = g.n_points // 2
        ts, vals = [], []
        for t, st in zip(traj.times, traj.states):
            if t >= 20.0:
                ts.append(t)
                vals.append(abs(trace_over_n(st).sigma_a0[center]))
        slope = np.polyfit(ts, np.log(vals), 1)[0]
        assert -slope == pytest.approx(0.5 * (r.gamma + r.gamma_d), rel=0.01)


class TestFactorization:
    def test_equal_rates_factorize_exactly(self):
        # D = D': the ladder decouples from the dot, every component is the
        # traced one times a Poisson weight
        r = RateSet.from_direct(1.0, 2.0, 2.0)
        g = grid()
        counting = evolve_counting(r, g, 5.0, 1.0)
        traced = evolve_traced(r, g, 5.0, 1.0)
        for cs, ts in zip(counting.states[1:], traced.states[1:]):
            weights = poisson.pmf(np.arange(cs.n_max + 1), r.d * cs.t)
            want = weights[:, None] * ts.sigma_aa[None, :]
            assert np.max(np.abs(cs.sigma_aa_n - want)) < 1e-12

    def test_no_detector_keeps_everything_at_n0(self):
        r = RateSet.from_direct(1.0, 0.0, 0.0)
        traj = evolve_counting(r, grid(), 3.0, 1.0)
        st = traj.final
        assert float(np.sum(st.sigma_00_n[1:])) == 0.0
        assert float(np.sum(st.sigma_aa_n[1:])) == pytest.approx(0.0, abs=1e-15)


class TestCountingIntegrators:
    def test_rk4_matches_exact(self):
        r = RateSet.from_direct(1.0, 2.0, 0.5)
        g = grid()
        exact = evolve_counting(r, g, 2.0, 1.0)
        rk4 = evolve_counting(r, g, 2.0, 1.0, integrator="rk4")
        a, b = exact.final, rk4.final
        assert np.max(np.abs(a.sigma_00_n - b.sigma_00_n)) < 1e-9
        assert np.max(np.abs(a.sigma_aa_n - b.sigma_aa_n)) < 1e-8
        assert np.max(np.abs(a.sigma_a0_n - b.sigma_a0_n)) < 1e-6

    def test_thread_count_is_bitwise_irrelevant(self):
        r = RateSet.from_direct(1.0, 2.0, 0.5)
        g = build_energy_grid(0.0, 15.0, 1025)  # spans multiple chunks
        one = evolve_counting(r, g, 2.0, 1.0, n_threads=1)
        many = evolve_counting(r, g, 2.0, 1.0, n_threads=4)
        for a, b in zip(one.states, many.states):
            assert np.array_equal(a.sigma_00_n, b.sigma_00_n)
            assert np.array_equal(a.sigma_aa_n, b.sigma_aa_n)
            assert np.array_equal(a.sigma_a0_n, b.sigma_a0_n)

    def test_invariants_along_run(self):
        r = RateSet.from_direct(1.0, 2.0, 0.5)
        traj = evolve_counting(r, grid(), 5.0, 1.0)
        for st in traj.states:
            st.check_invariants()
