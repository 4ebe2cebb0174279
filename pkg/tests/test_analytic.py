"""Unit tests for the closed-form waiting-time algebra.

Derived expected values come from independent numerical oracles computed
in-test: a truncated birth-death stationary solve for the queueing
probabilities, and adaptive quadrature for densities, convolutions, CDFs
and means.  High-precision frozen constants were produced once with
50-digit arithmetic.
"""

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from fjsync import analytic
from fjsync.analytic import (
    INFINITE,
    ExpMixture,
    NetworkParams,
    branch_sojourn_density,
    cross_convolve,
    erlang_idle_prob,
    fold_to_waiting_density,
    little_occupancy,
    mixture_mean,
    mixture_quantile,
    queue_nonempty_prob,
    waiting_time_density,
    waiting_time_mean,
)

# ---------------------------------------------------------------------------
# oracles


def birth_death_stationary(lam, mu, n, states=10_000):
    """Stationary law of the M/M/n queue-length chain, solved numerically
    from the birth-death detailed-balance recurrence on a truncated ladder."""
    pi = np.empty(states)
    pi[0] = 1.0
    for k in range(states - 1):
        pi[k + 1] = pi[k] * lam / (mu * min(k + 1, n))
    pi /= pi.sum()
    return pi


def branch_density_oracle(lam, mu, n, t):
    """Branch sojourn density by direct probabilistic construction:
    with probability (1 - p_wait) service starts at once, otherwise the
    residual queueing delay is Exp(mu*n - lam) convolved with the service."""
    p_wait = queue_nonempty_prob(lam, mu, n)
    nu = mu * n - lam
    direct = (1.0 - p_wait) * mu * math.exp(-mu * t)

    def integrand(xi):
        return nu * math.exp(-nu * xi) * mu * math.exp(-mu * (t - xi))

    delayed, _ = quad(integrand, 0.0, t, epsabs=1e-13, epsrel=1e-13)
    return direct + p_wait * delayed


def numeric_fold(fa: ExpMixture, fb: ExpMixture, t):
    """|t_a - t_b| density by quadrature: int fb(x) [fa(x+t) + fa(x-t)] dx,
    with fa vanishing on the negative axis."""
    val, _ = quad(
        lambda x: fb.pdf(x) * (fa.pdf(x + t) + (fa.pdf(x - t) if x >= t else 0.0)),
        0.0,
        np.inf,
        epsabs=1e-12,
        epsrel=1e-12,
        limit=400,
    )
    return val


def stable_params(draw_inf=True):
    """Strategy for valid network parameters with moderate utilizations."""
    finite_n = st.sampled_from([1, 2, 3, 4, 5, 8])
    n_values = st.one_of(finite_n, st.just(INFINITE)) if draw_inf else finite_n

    @st.composite
    def build(draw):
        lam = draw(st.floats(0.05, 4.0))
        n_a = draw(n_values)
        n_b = draw(n_values)

        def mu_for(n):
            if n == INFINITE:
                return draw(st.floats(0.1, 5.0))
            # stay away from the exponent collision psi = (n-1)/n, where the
            # two-term representation loses precision to coefficient blow-up
            psi = draw(
                st.floats(0.05, 0.9).filter(lambda x: abs(x - (n - 1) / n) > 1e-3)
            )
            return lam / (n * psi)

        return NetworkParams(lam, n_a, mu_for(n_a), n_b, mu_for(n_b))

    return build()


# ---------------------------------------------------------------------------
# parameters


class TestNetworkParams:
    def test_utilizations(self):
        p = NetworkParams(1.5, 3, 0.6, 5, 0.4)
        assert p.psi_a == pytest.approx(1.5 / 1.8)
        assert p.psi_b == pytest.approx(0.75)

    def test_infinite_branch_has_zero_utilization(self):
        p = NetworkParams(2.0, INFINITE, 0.5, 1, 3.0)
        assert p.psi_a == 0.0

    def test_unstable_branch_rejected(self):
        with pytest.raises(ValueError, match="unstable"):
            NetworkParams(2.0, 1, 1.0, 1, 3.0)

    def test_bad_rates_rejected(self):
        with pytest.raises(ValueError):
            NetworkParams(-1.0, 1, 1.0, 1, 1.0)
        with pytest.raises(ValueError):
            NetworkParams(0.5, 1, 0.0, 1, 1.0)

    def test_fractional_server_count_rejected(self):
        with pytest.raises(ValueError):
            NetworkParams(0.5, 1.5, 2.0, 1, 2.0)

    def test_from_utilization_round_trip(self):
        p = NetworkParams.from_utilization(1.5, 3, 0.83, 5, 0.3)
        assert p.psi_a == pytest.approx(0.83, rel=1e-15)
        assert p.psi_b == pytest.approx(0.3, rel=1e-15)

    def test_swapped(self):
        p = NetworkParams(1.0, 2, 1.0, 3, 0.8)
        q = p.swapped()
        assert (q.n_a, q.mu_a, q.n_b, q.mu_b) == (3, 0.8, 2, 1.0)


# ---------------------------------------------------------------------------
# occupancy probabilities


class TestOccupancyProbabilities:
    def test_mm1_idle_prob(self):
        # single server: p0 = 1 - psi
        assert erlang_idle_prob(0.3, 0.4, 1) == pytest.approx(0.25, rel=1e-14)

    def test_mm1_queue_nonempty(self):
        # single server: P(wait) = psi
        assert queue_nonempty_prob(0.3, 0.4, 1) == pytest.approx(0.75, rel=1e-14)

    def test_frozen_high_precision_values(self):
        # lam=2, mu=0.5, n=8 (offered load 4, psi=0.5); 50-digit arithmetic
        assert erlang_idle_prob(2.0, 0.5, 8) == pytest.approx(
            0.01816294758692267773741567, rel=1e-14
        )
        assert queue_nonempty_prob(2.0, 0.5, 8) == pytest.approx(
            0.05904399469526610159718618, rel=1e-14
        )

    @pytest.mark.parametrize(
        "lam,mu,n",
        [(0.3, 0.4, 1), (1.5, 0.6, 3), (2.0, 0.5, 8), (1.9, 0.1, 20), (0.05, 1.0, 2)],
    )
    def test_against_birth_death_solve(self, lam, mu, n):
        pi = birth_death_stationary(lam, mu, n)
        assert erlang_idle_prob(lam, mu, n) == pytest.approx(pi[0], rel=1e-12)
        assert queue_nonempty_prob(lam, mu, n) == pytest.approx(
            pi[n:].sum(), rel=1e-12
        )

    def test_large_n_no_overflow(self):
        # offered load 400 would overflow naive factorials
        p0 = erlang_idle_prob(400.0, 1.0, 500)
        assert 0.0 < p0 < 1.0

    def test_unstable_rejected(self):
        with pytest.raises(ValueError, match="unstable"):
            erlang_idle_prob(2.0, 1.0, 2)

    def test_infinite_servers_never_queue(self):
        assert queue_nonempty_prob(2.0, 0.5, INFINITE) == 0.0
        with pytest.raises(ValueError):
            erlang_idle_prob(2.0, 0.5, INFINITE)


# ---------------------------------------------------------------------------
# ExpMixture algebra


class TestExpMixture:
    def test_merge_equal_rates(self):
        f = ExpMixture.one_sided([(0.5, 1.0), (0.5, 1.0)])
        assert f.right == ((1.0, 1.0),)

    def test_drop_cancelling_terms(self):
        f = ExpMixture.one_sided([(1.0, 1.0), (-1.0, 1.0), (2.0, 2.0)])
        assert f.right == ((2.0, 2.0),)

    def test_nonpositive_rate_rejected(self):
        with pytest.raises(ValueError):
            ExpMixture.one_sided([(1.0, 0.0)])

    def test_pdf_cdf_mean_unit_exponential(self):
        f = ExpMixture.one_sided([(1.0, 1.0)])
        assert f.pdf(0.0) == pytest.approx(1.0)
        assert f.cdf(math.log(2.0)) == pytest.approx(0.5, rel=1e-14)
        assert f.mean() == pytest.approx(1.0, rel=1e-14)
        assert f.total_mass == pytest.approx(1.0, rel=1e-15)

    def test_two_sided_pdf_and_guards(self):
        f = ExpMixture(right=((0.5, 1.0),), left=((0.5, 1.0),))
        assert f.pdf(1.0) == pytest.approx(0.5 * math.exp(-1.0))
        assert f.pdf(-1.0) == pytest.approx(0.5 * math.exp(-1.0))
        with pytest.raises(ValueError):
            f.cdf(1.0)
        with pytest.raises(ValueError):
            f.mean()

    def test_quantile_unit_exponential(self):
        f = ExpMixture.one_sided([(1.0, 1.0)])
        assert mixture_quantile(f, 0.5) == pytest.approx(math.log(2.0), abs=1e-12)
        assert mixture_quantile(f, 0.0) == 0.0
        with pytest.raises(ValueError):
            mixture_quantile(f, 1.0)

    def test_quantile_round_trip_signed_mixture(self):
        f = waiting_time_density(NetworkParams(1.5, 3, 0.6, 5, 1.0))
        for p in (0.01, 0.3, 0.5, 0.9, 0.999):
            assert f.cdf(mixture_quantile(f, p)) == pytest.approx(p, abs=1e-12)

    def test_json_round_trip(self):
        f = ExpMixture(right=((1.2, 0.7), (-0.3, 2.0)), left=((0.4, 1.1),))
        g = ExpMixture.from_json(f.to_json())
        assert g == f
        assert json.loads(f.to_json())  # valid JSON document

    def test_sampling_matches_cdf(self):
        f = ExpMixture.one_sided([(2.0, 1.0), (-1.0, 2.0)])
        rng = np.random.Generator(np.random.PCG64(7))
        x = f.sample(20_000, rng)
        # empirical CDF at the median should sit near 0.5
        med = mixture_quantile(f, 0.5)
        assert np.mean(x <= med) == pytest.approx(0.5, abs=0.02)


# ---------------------------------------------------------------------------
# branch sojourn densities


class TestBranchDensity:
    def test_mm1_reduces_to_single_exponential(self):
        f = branch_sojourn_density(0.3, 0.4, 1)
        assert f.right == ((pytest.approx(0.1, rel=1e-14), pytest.approx(0.1, rel=1e-14)),)

    def test_infinite_servers_reduces_to_service_law(self):
        f = branch_sojourn_density(2.0, 1.25, INFINITE)
        assert f.right == ((1.25, 1.25),)

    def test_two_term_structure(self):
        f = branch_sojourn_density(1.5, 0.6, 3)
        rates = sorted(r for _, r in f.right)
        assert rates == [pytest.approx(0.3, rel=1e-12), pytest.approx(0.6, rel=1e-12)]
        assert f.total_mass == pytest.approx(1.0, rel=1e-14)

    @pytest.mark.parametrize(
        "lam,mu,n",
        [(1.5, 0.6, 3), (2.0, 0.5, 8), (0.3, 0.2, 2), (1.0, 0.21, 6)],
    )
    def test_against_quadrature_oracle(self, lam, mu, n):
        f = branch_sojourn_density(lam, mu, n)
        for t in (0.05, 0.3, 1.0, 2.7, 8.0):
            assert f.pdf(t) == pytest.approx(
                branch_density_oracle(lam, mu, n, t), rel=1e-10, abs=1e-12
            )

    def test_exponent_collision_is_regular(self):
        # mu*n - lam == mu exactly (lam = mu*(n-1)); the nudged representation
        # carries two huge cancelling coefficients, so normalization is exact
        # only up to the rounding of their difference (~1e-8 here).
        f = branch_sojourn_density(2.0, 1.0, 3)
        assert f.total_mass == pytest.approx(1.0, rel=1e-7)
        for t in (0.1, 1.0, 4.0):
            assert f.pdf(t) == pytest.approx(
                branch_density_oracle(2.0, 1.0, 3, t), rel=1e-6
            )

    def test_near_collision_is_regular(self):
        f = branch_sojourn_density(2.0 + 1e-12, 1.0, 3)
        assert f.total_mass == pytest.approx(1.0, rel=1e-7)
        assert f.pdf(1.0) == pytest.approx(
            branch_density_oracle(2.0 + 1e-12, 1.0, 3, 1.0), rel=1e-6
        )


# ---------------------------------------------------------------------------
# convolution and folding


class TestWaitingTimeDensity:
    def test_cross_convolve_symmetric_laplace(self):
        e = ExpMixture.one_sided([(1.0, 1.0)])
        g = cross_convolve(e, e)
        assert g.right == ((0.5, 1.0),)
        assert g.left == ((0.5, 1.0),)

    def test_fold_laplace_to_exponential(self):
        e = ExpMixture.one_sided([(1.0, 1.0)])
        w = fold_to_waiting_density(cross_convolve(e, e))
        assert w.right == ((1.0, 1.0),)

    def test_two_infinite_branches_closed_form(self):
        # Exp(1) vs Exp(2): |difference| density (2/3)(e^-t + e^-2t), mean 5/6
        p = NetworkParams(1.0, INFINITE, 1.0, INFINITE, 2.0)
        w = waiting_time_density(p)
        assert {r: c for c, r in w.right} == {
            1.0: pytest.approx(2.0 / 3.0, rel=1e-14),
            2.0: pytest.approx(2.0 / 3.0, rel=1e-14),
        }
        assert waiting_time_mean(p) == pytest.approx(5.0 / 6.0, rel=1e-14)

    def test_symmetric_mm1_mean(self):
        # two M/M/1 branches at rate nu = mu - lam: mean wait 1/nu
        p = NetworkParams(0.3, 1, 0.4, 1, 0.4)
        assert waiting_time_mean(p) == pytest.approx(10.0, rel=1e-13)

    def test_general_rate_set(self):
        p = NetworkParams(1.5, 3, 0.6, 5, 1.0)
        w = waiting_time_density(p)
        rates = sorted(r for _, r in w.right)
        # {mu_a, mu_b, mu_a n_a - lam, mu_b n_b - lam}
        assert rates == [
            pytest.approx(0.3, rel=1e-12),
            pytest.approx(0.6, rel=1e-12),
            pytest.approx(1.0, rel=1e-12),
            pytest.approx(3.5, rel=1e-12),
        ]
        assert w.total_mass == pytest.approx(1.0, rel=1e-13)

    def test_swap_symmetry(self):
        p = NetworkParams(1.5, 3, 0.6, 5, 1.0)
        w1 = waiting_time_density(p)
        w2 = waiting_time_density(p.swapped())
        assert w1 == w2

    @pytest.mark.parametrize(
        "params",
        [
            NetworkParams(1.5, 3, 0.6, 5, 1.0),
            NetworkParams(0.3, 1, 0.4, 2, 1.2),
            NetworkParams(2.0, 8, 0.3, INFINITE, 0.7),
        ],
    )
    def test_against_numeric_fold(self, params):
        fa = branch_sojourn_density(params.lam, params.mu_a, params.n_a)
        fb = branch_sojourn_density(params.lam, params.mu_b, params.n_b)
        w = waiting_time_density(params)
        for t in (0.1, 0.7, 2.0, 6.0):
            assert w.pdf(t) == pytest.approx(numeric_fold(fa, fb, t), rel=1e-9)

    def test_mean_against_quadrature(self):
        p = NetworkParams(1.5, 3, 0.6, 5, 1.0)
        w = waiting_time_density(p)
        mean_num, _ = quad(lambda t: t * w.pdf(t), 0.0, np.inf, limit=300)
        assert mixture_mean(w) == pytest.approx(mean_num, rel=1e-9)

    def test_cdf_against_quadrature(self):
        w = waiting_time_density(NetworkParams(1.5, 3, 0.6, 5, 1.0))
        for t in (0.2, 1.0, 5.0):
            num, _ = quad(w.pdf, 0.0, t, epsabs=1e-13)
            assert w.cdf(t) == pytest.approx(num, rel=1e-10)


# ---------------------------------------------------------------------------
# property-based checks


class TestProperties:
    @settings(max_examples=30, deadline=None)
    @given(stable_params())
    def test_normalization_and_mean(self, params):
        w = waiting_time_density(params)
        assert w.total_mass == pytest.approx(1.0, rel=1e-10)
        assert w.mean() > 0.0

    @settings(max_examples=30, deadline=None)
    @given(stable_params())
    def test_density_nonnegative_and_cdf_monotone(self, params):
        w = waiting_time_density(params)
        t = np.geomspace(1e-4, 60.0 / w.min_rate, 80)
        pdf = np.array([w.pdf(x) for x in t])
        assert (pdf >= -1e-12).all()
        cdf = w.cdf(t)
        assert (np.diff(cdf) >= -1e-12).all()
        assert 0.0 <= cdf[0] and cdf[-1] <= 1.0 + 1e-12

    @settings(max_examples=30, deadline=None)
    @given(stable_params())
    def test_swap_invariance(self, params):
        assert waiting_time_density(params) == waiting_time_density(params.swapped())


# ---------------------------------------------------------------------------
# occupancy law


class TestLittleOccupancy:
    def test_trivial(self):
        assert little_occupancy(2.0, 3.0) == 6.0

    def test_guards(self):
        with pytest.raises(ValueError):
            little_occupancy(0.0, 1.0)
        with pytest.raises(ValueError):
            little_occupancy(1.0, -1.0)
