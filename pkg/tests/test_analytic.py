import math

import numpy as np
import pytest

from cellload import analytic
from cellload.analytic import (
    LoadMoments,
    LoadPmf,
    NegBinParams,
    RateConfig,
    SIR_DELTA_AREA_WEIGHTED,
    SIR_DELTA_VALIDATED,
    dft_invert_pgf,
    invert_pgf,
    load_moments,
    load_pgf,
    mean_load,
    nb_fit,
    nb_pmf,
    ppp_baseline_variance,
    rate_coverage,
    second_moment_load,
    select_sir_reading,
    sir_ccdf,
    variance_load,
)
from cellload.analytic import _beta_factor, _ev2_kernel, _pair_excess_integral
from cellload.errors import (
    DomainError,
    InfeasibleModelError,
    TranscriptionAlarmError,
)
from cellload.montecarlo import points_in_typical_cell, sample_ppp, _rng_for
from cellload.ppmodel import Matern, NetworkModel, Thomas, UserModel
from cellload.quadrature import QuadSpec, integrate_nested, integrate_semi_infinite
from cellload.specfun import _union_area_arrays

from helpers import pgf_by_nested_quadrature

TCP_NET = NetworkModel(1.0, UserModel(5.0, 5.0, Thomas(0.05)))
MCP_NET = NetworkModel(1.0, UserModel(5.0, 5.0, Matern(0.1)))


class TestMeanLoad:
    def test_paper_parameters(self):
        assert mean_load(TCP_NET) == 25.0

    def test_unit_case(self):
        net = NetworkModel(2.0, UserModel(2.0, 1.0, Thomas(0.1)))
        assert mean_load(net) == 1.0

    def test_scale_invariance(self):
        net = NetworkModel(7.3, UserModel(5.0, 5.0, Matern(0.1)))
        assert mean_load(net) == pytest.approx(mean_load(net.normalized()))


class TestSecondMoment:
    def test_cell_area_kernel_against_gamma_oracle(self):
        # the exact E[V^2] kernel (~1.280176) sits within 1% of the
        # Gamma(3.5, 1/3.5) second moment 1 + 1/3.5 used by the PGF model
        kernel = _ev2_kernel().value
        assert kernel == pytest.approx(1.0 + 1.0 / 3.5, rel=0.01)
        assert kernel == pytest.approx(1.280176, abs=1e-4)

    def test_cell_area_kernel_against_nested_engine(self):
        def f(theta, x1, x2):
            d = np.sqrt(np.maximum(x1**2 + x2**2 - 2.0 * x1 * x2 * math.cos(theta), 0.0))
            return np.exp(-_union_area_arrays(np.full_like(x2, x1), x2, d)) * x1 * x2

        res = integrate_nested(
            f,
            [(0.0, math.pi), (0.0, 4.2), (0.0, 4.2)],
            QuadSpec(rel_tol=1e-5, abs_tol=1e-9),
        )
        assert 4.0 * math.pi * res.value == pytest.approx(_ev2_kernel().value, rel=1e-4)

    def test_ppp_limit_against_monte_carlo(self):
        # PPP users: second moment = lam_u + lam_u^2 E[V^2] exactly
        lam_u = 10.0
        analytic_val = lam_u + lam_u**2 * _ev2_kernel().value
        window = 9.6
        cut = math.sqrt(math.log(lam_u * 1e7) / math.pi)
        n = 20_000
        sq = np.empty(n)
        for k in range(n):
            rng = _rng_for(99, k)
            stations = sample_ppp(1.0, window, rng)
            users = sample_ppp(lam_u, cut, rng)
            near = stations[np.einsum("ij,ij->i", stations, stations) <= 4 * cut * cut]
            sq[k] = float(np.count_nonzero(points_in_typical_cell(users, near))) ** 2
        stderr = sq.std() / math.sqrt(n)
        assert abs(sq.mean() - analytic_val) <= 4.0 * stderr

    def test_cauchy_schwarz_and_integer_bounds(self):
        m = load_moments(TCP_NET)
        assert m.second_moment >= m.mean**2
        assert m.second_moment >= m.mean

    def test_symmetry_of_distance_argument(self):
        # d(x1, x2, th) is symmetric in (x1, x2) and about th = pi
        rng = np.random.default_rng(5)
        for _ in range(20):
            x1, x2 = rng.uniform(0.1, 3.0, 2)
            th = rng.uniform(0.0, math.pi)
            d = lambda a, b, t: math.sqrt(a**2 + b**2 - 2 * a * b * math.cos(t))
            assert d(x1, x2, th) == pytest.approx(d(x2, x1, th))
            assert d(x1, x2, 2 * math.pi - th) == pytest.approx(d(x1, x2, th))


class TestVariance:
    def test_printed_tcp_equation_cross_check(self):
        # the printed TCP variance integral in normalized units equals the
        # separation-coordinate excess integral
        net = NetworkModel(1.0, UserModel(5.0, 5.0, Thomas(0.2)))
        sigma = 0.2
        lam_p = 5.0

        def f(theta, x1, x2):
            d2 = np.maximum(x1**2 + x2**2 - 2.0 * x1 * x2 * math.cos(theta), 0.0)
            a_u = _union_area_arrays(np.full_like(x2, x1), x2, np.sqrt(d2))
            return np.exp(-a_u - d2 / (4.0 * sigma**2)) * x1 * x2

        j = integrate_nested(
            f,
            [(0.0, math.pi), (0.0, 4.5), (0.0, lambda th, x1: x1)],
            QuadSpec(rel_tol=1e-5, abs_tol=1e-10),
        )
        printed_excess = mean_load(net) ** 2 * (2.0 / (lam_p * sigma**2)) * j.value
        assert printed_excess == pytest.approx(_pair_excess_integral(net).value, rel=2e-3)

    def test_variance_consistency(self):
        m = load_moments(TCP_NET)
        assert variance_load(TCP_NET) == pytest.approx(m.variance)
        assert second_moment_load(TCP_NET) == pytest.approx(m.second_moment)
        assert m.variance == pytest.approx(m.second_moment - m.mean**2, rel=1e-9)

    def test_exceeds_ppp_baseline_and_028_floor(self):
        for net in (TCP_NET, MCP_NET):
            var = variance_load(net)
            mean = mean_load(net)
            assert var > ppp_baseline_variance(net)
            assert var >= 0.28 * mean**2

    def test_ppp_limit_of_baseline(self):
        # excess removed: variance reduces to shot noise + cell-area part
        mean = mean_load(TCP_NET)
        kernel = _ev2_kernel().value
        assert ppp_baseline_variance(TCP_NET) == pytest.approx(
            mean + (kernel - 1.0) * mean**2, rel=1e-12
        )

    def test_normalized_variance_decreasing_in_cluster_size(self):
        sizes = [0.05, 0.2, 1.0]
        nv = []
        for s in sizes:
            net = NetworkModel(1.0, UserModel(5.0, 5.0, Thomas(s)))
            m = load_moments(net)
            nv.append(m.variance / m.mean**2)
        assert nv[0] > nv[1] > nv[2]
        assert nv[-1] > 0.28 + 1.0 / 25.0 - 1e-3  # floor: ppp baseline level

    def test_scale_invariance_of_counts(self):
        a = load_moments(NetworkModel(1.0, UserModel(5.0, 5.0, Thomas(0.1))))
        b = load_moments(NetworkModel(4.0, UserModel(20.0, 5.0, Thomas(0.05))))
        assert a.mean == pytest.approx(b.mean)
        assert a.variance == pytest.approx(b.variance, rel=1e-6)


class TestNegBinFit:
    def test_textbook_case(self):
        fit = nb_fit(LoadMoments(mean=25.0, second_moment=675.0, variance=50.0))
        assert fit.t == pytest.approx(0.5)
        assert fit.r == 25

    def test_poisson_boundary_rejected(self):
        with pytest.raises(InfeasibleModelError):
            nb_fit(LoadMoments(mean=25.0, second_moment=650.0, variance=25.0))

    def test_moment_recovery_with_floor_slack(self):
        # flooring r loses up to one unit of r, worth t/(1-t) of mean and
        # t/(1-t)^2 of variance; the fit cannot be closer than that
        m = load_moments(TCP_NET)
        fit = nb_fit(m)
        nb_mean = fit.r * fit.t / (1.0 - fit.t)
        nb_var = fit.r * fit.t / (1.0 - fit.t) ** 2
        assert fit.r >= 1
        assert 0.0 <= m.mean - nb_mean <= fit.t / (1.0 - fit.t)
        assert 0.0 <= m.variance - nb_var <= fit.t / (1.0 - fit.t) ** 2

    def test_moment_recovery_exact_when_r_is_integral(self):
        fit = nb_fit(LoadMoments(mean=25.0, second_moment=675.0, variance=50.0))
        assert fit.r * fit.t / (1.0 - fit.t) == pytest.approx(25.0)
        assert fit.r * fit.t / (1.0 - fit.t) ** 2 == pytest.approx(50.0)

    def test_pmf_normalization(self):
        fit = NegBinParams(25, 0.5)
        assert nb_pmf(fit, np.arange(400)).sum() == pytest.approx(1.0, abs=1e-12)

    def test_params_validation(self):
        with pytest.raises(DomainError):
            NegBinParams(0, 0.5)
        with pytest.raises(DomainError):
            NegBinParams(3, 0.0)


class TestLoadPgf:
    def test_at_one(self):
        assert load_pgf(TCP_NET, 1.0) == pytest.approx(1.0, abs=1e-9)
        assert load_pgf(MCP_NET, 1.0) == pytest.approx(1.0, abs=1e-9)

    def test_no_users_limit(self):
        net = NetworkModel(1.0, UserModel(5.0, 1e-9, Thomas(0.05)))
        for theta in (0.0, 0.3, 0.9):
            assert load_pgf(net, theta) == pytest.approx(1.0, abs=1e-6)

    def test_against_nested_quadrature_oracle(self):
        for net in (TCP_NET, MCP_NET):
            for theta in (0.0, 0.5):
                oracle = pgf_by_nested_quadrature(net, theta)
                assert complex(load_pgf(net, theta)).real == pytest.approx(oracle, abs=2e-7)

    def test_conjugate_symmetry_and_modulus_bound(self):
        thetas = 0.8 * np.exp(2j * np.pi * np.linspace(0.07, 0.93, 7))
        for net in (TCP_NET,):
            for th in thetas:
                g = load_pgf(net, th)
                g_conj = load_pgf(net, np.conj(th))
                assert g_conj == pytest.approx(np.conj(g), abs=1e-10)
                assert abs(g) <= complex(load_pgf(net, abs(th))).real + 1e-10

    def test_void_probability_bounds(self):
        g0 = complex(load_pgf(TCP_NET, 0.0)).real
        # clustered users leave more cells empty than PPP users of the same
        # intensity (Gamma-mixed Poisson void probability)
        ppp_void = (1.0 + 25.0 / 3.5) ** (-3.5)
        assert ppp_void < g0 < 1.0


class TestInvertPgf:
    def test_negative_binomial_oracle(self):
        nb = NegBinParams(25, 0.5)
        pgf = lambda th: ((1.0 - nb.t) / (1.0 - nb.t * th)) ** nb.r
        pmf = dft_invert_pgf(pgf, 128)
        exact = nb_pmf(nb, np.arange(128))
        assert np.max(np.abs(pmf.probs - exact)) < 1e-10

    def test_negative_binomial_oracle_off_unit_circle(self):
        nb = NegBinParams(4, 0.3)
        pgf = lambda th: ((1.0 - nb.t) / (1.0 - nb.t * th)) ** nb.r
        pmf = dft_invert_pgf(pgf, 128, radius=0.9)
        exact = nb_pmf(nb, np.arange(128))
        assert np.max(np.abs(pmf.probs - exact)) < 1e-9

    def test_power_of_two_required(self):
        with pytest.raises(DomainError):
            dft_invert_pgf(lambda th: th, 100)
        with pytest.raises(DomainError):
            invert_pgf(TCP_NET, 96)

    def test_distribution_sanity(self):
        pmf = invert_pgf(TCP_NET, 128)
        assert abs(pmf.raw_sum - 1.0) <= 1e-4
        assert pmf.min_raw >= -1e-6
        assert np.all(pmf.probs >= 0.0)
        assert pmf.dft_size == 128 and pmf.inversion_radius == 1.0

    def test_degenerate_model_collapses_to_zero(self):
        net = NetworkModel(1.0, UserModel(5.0, 1e-9, Thomas(0.05)))
        pmf = invert_pgf(net, 128)
        assert pmf.probs[0] == pytest.approx(1.0, abs=1e-6)
        assert pmf.probs[1:].max() < 1e-6

    def test_mean_consistency_with_moments(self):
        m = load_moments(TCP_NET)
        pmf = invert_pgf(TCP_NET, 128, moments=m)
        rel = abs(pmf.mean() - m.mean) / m.mean
        assert rel <= 0.10  # 5% empirically; 10% flags a bug
        assert pmf.alias_bound is not None and pmf.alias_bound < 0.05

    def test_default_size_selection(self):
        m = load_moments(TCP_NET)
        pmf = invert_pgf(TCP_NET, moments=m)
        assert pmf.dft_size >= 128 and pmf.dft_size & (pmf.dft_size - 1) == 0
        assert pmf.dft_size >= m.mean + 10.0 * math.sqrt(m.variance)


class TestSirCcdf:
    def test_identity_with_closed_form(self):
        # delta^2 tau^{-2/a} int (delta+beta)^{-2}/(1+t^{a/2}) equals
        # delta/(delta+beta(tau^{2/a})) when delta = 1
        for alpha in (3.0, 4.0, 5.0):
            for tau in (0.1, 1.0, 10.0):
                beta = float(_beta_factor(np.array(tau ** (2.0 / alpha)), alpha, alpha / 2.0))
                closed = 1.0 / (1.0 + beta)
                assert sir_ccdf(alpha, tau) == pytest.approx(closed, abs=1e-8)

    def test_alpha4_frozen_value(self):
        # beta(1) = arctan(1) = pi/4 at alpha = 4
        assert sir_ccdf(4.0, 1.0) == pytest.approx(1.0 / (1.0 + math.pi / 4.0), abs=1e-9)

    def test_monotone_in_tau(self):
        vals = [sir_ccdf(4.0, t) for t in (0.1, 1.0, 10.0, 100.0)]
        assert vals == sorted(vals, reverse=True)
        assert 0.0 <= vals[-1] <= 1.0

    def test_tau_limits(self):
        assert sir_ccdf(4.0, 1e-9) == pytest.approx(1.0, abs=1e-3)
        assert sir_ccdf(4.0, 1e12) < 1e-3
        assert sir_ccdf(4.0, math.inf) == 0.0

    def test_printed_reading_degenerates(self):
        # beta's integrand exponent 2/alpha makes the tail integral diverge
        # for every alpha > 2, so the printed formula collapses to zero
        assert sir_ccdf(4.0, 1.0, reading="printed") == 0.0

    def test_swapped_reading_alarms(self):
        with pytest.raises(TranscriptionAlarmError):
            sir_ccdf(4.0, 1.0, reading="swapped", delta=SIR_DELTA_AREA_WEIGHTED)

    def test_beta_factor_against_quadrature(self):
        spec = QuadSpec(rel_tol=1e-9, abs_tol=1e-12, max_subdivisions=4000)
        for alpha in (3.0, 4.0, 6.0):
            m = alpha / 2.0
            for t in (0.05, 0.7, 1.0, 3.0, 40.0):
                direct = float(_beta_factor(np.array(t), alpha, m))
                tail = integrate_semi_infinite(lambda u: 1.0 / (1.0 + u**m), 1.0 / t, spec).value
                assert direct == pytest.approx(t * tail, rel=1e-7)

    def test_domain_errors(self):
        with pytest.raises(DomainError):
            sir_ccdf(2.0, 1.0)
        with pytest.raises(DomainError):
            sir_ccdf(4.0, 0.0)
        with pytest.raises(ValueError):
            sir_ccdf(4.0, 1.0, reading="folklore")

    def test_arbiter_prefers_matching_candidate(self):
        alpha = 4.0
        taus = (0.1, 1.0, 10.0)
        as_validated = {t: sir_ccdf(alpha, t) for t in taus}
        reading, delta, err = select_sir_reading(as_validated, alpha)
        assert (reading, delta) == ("repaired", SIR_DELTA_VALIDATED) and err < 1e-8
        as_paper = {t: sir_ccdf(alpha, t, delta=SIR_DELTA_AREA_WEIGHTED) for t in taus}
        reading, delta, err = select_sir_reading(as_paper, alpha)
        assert (reading, delta) == ("repaired", SIR_DELTA_AREA_WEIGHTED) and err < 1e-8

    def test_arbiter_rejects_unmatchable_targets(self):
        with pytest.raises(TranscriptionAlarmError):
            select_sir_reading({0.1: 0.2, 1.0: 0.9, 10.0: 0.5}, 4.0)


@pytest.fixture(scope="module")
def tcp_pmf():
    return invert_pgf(TCP_NET, 128)


class TestRateCoverage:
    def test_small_threshold_limit(self, tcp_pmf):
        cfg = RateConfig(alpha=4.0, bandwidth_w=1e6)
        assert rate_coverage(TCP_NET, cfg, tcp_pmf, 1e-3) == pytest.approx(1.0, abs=1e-4)

    def test_zero_beyond_backhaul(self, tcp_pmf):
        cfg = RateConfig(alpha=4.0, bandwidth_w=1e6, backhaul_rb=1e6)
        assert rate_coverage(TCP_NET, cfg, tcp_pmf, 1.5e6) == 0.0

    def test_zero_backhaul(self, tcp_pmf):
        cfg = RateConfig(alpha=4.0, bandwidth_w=1e6, backhaul_rb=0.0)
        assert rate_coverage(TCP_NET, cfg, tcp_pmf, 1e4) == 0.0

    def test_monotone_in_threshold(self, tcp_pmf):
        cfg = RateConfig(alpha=4.0, bandwidth_w=1e6)
        grid = np.geomspace(1e4, 2e6, 10)
        vals = [rate_coverage(TCP_NET, cfg, tcp_pmf, float(r)) for r in grid]
        assert all(a >= b - 1e-12 for a, b in zip(vals, vals[1:]))

    def test_monotone_in_backhaul(self, tcp_pmf):
        rho = 2e5
        capped = rate_coverage(
            TCP_NET, RateConfig(alpha=4.0, bandwidth_w=1e6, backhaul_rb=2e6), tcp_pmf, rho
        )
        open_ended = rate_coverage(
            TCP_NET, RateConfig(alpha=4.0, bandwidth_w=1e6), tcp_pmf, rho
        )
        assert capped <= open_ended + 1e-12

    def test_decreasing_in_cluster_count(self, tcp_pmf):
        lighter = NetworkModel(1.0, UserModel(5.0, 3.0, Thomas(0.05)))
        light_pmf = invert_pgf(lighter, 128)
        cfg = RateConfig(alpha=4.0, bandwidth_w=1e6)
        for rho in (5e4, 2e5, 5e5):
            assert rate_coverage(lighter, cfg, light_pmf, rho) >= rate_coverage(
                TCP_NET, cfg, tcp_pmf, rho
            )

    def test_all_mass_at_zero_rejected(self):
        pmf = LoadPmf(probs=np.array([1.0, 0.0]), inversion_radius=1.0, dft_size=2)
        cfg = RateConfig(alpha=4.0, bandwidth_w=1e6)
        with pytest.raises(InfeasibleModelError):
            rate_coverage(TCP_NET, cfg, pmf, 1e5)

    def test_threshold_validation(self, tcp_pmf):
        cfg = RateConfig(alpha=4.0, bandwidth_w=1e6)
        with pytest.raises(DomainError):
            rate_coverage(TCP_NET, cfg, tcp_pmf, 0.0)


class TestValueTypes:
    def test_load_moments_invariant(self):
        with pytest.raises(DomainError):
            LoadMoments(mean=5.0, second_moment=30.0, variance=20.0)
        with pytest.raises(DomainError):
            LoadMoments(mean=-1.0, second_moment=1.0, variance=0.0)

    def test_rate_config_validation(self):
        with pytest.raises(DomainError):
            RateConfig(alpha=2.0, bandwidth_w=1e6)
        with pytest.raises(DomainError):
            RateConfig(alpha=4.0, bandwidth_w=0.0)
        with pytest.raises(DomainError):
            RateConfig(alpha=4.0, bandwidth_w=1e6, backhaul_rb=-1.0)
        with pytest.raises(DomainError):
            RateConfig(alpha=4.0, bandwidth_w=1e6, thresholds=(0.0,))
        cfg = RateConfig(alpha=4.0, bandwidth_w=1e6, thresholds=(1e4, 1e5))
        assert cfg.thresholds == (1e4, 1e5)

    def test_load_pmf_validation(self):
        with pytest.raises(DomainError):
            LoadPmf(probs=np.array([1.0]), inversion_radius=0.0, dft_size=1)
