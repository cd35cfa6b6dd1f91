"""Shared oracles for the test suite, independent of the library code paths."""

import math

import numpy as np

from cellload.quadrature import QuadSpec, integrate_finite, integrate_semi_infinite


def bessel_i0_scaled_series(x: float, terms: int = 60) -> float:
    """e^{-x} I0(x) from the defining power series sum (x/2)^{2k} / (k!)^2."""
    half = x / 2.0
    contributions = []
    term = 1.0
    for k in range(terms):
        if k > 0:
            term *= (half / k) ** 2
        contributions.append(term)
    return math.exp(-x) * math.fsum(contributions)


def bessel_i0_scaled_asymptotic(x: float) -> float:
    """Scaled large-x expansion: (2 pi x)^{-1/2} (1 + 1/(8x) + 9/(128x^2) + 75/(1024x^3))."""
    inv = 1.0 / x
    series = 1.0 + inv / 8.0 + 9.0 * inv**2 / 128.0 + 75.0 * inv**3 / 1024.0
    return series / math.sqrt(2.0 * math.pi * x)


def marcum_q1_quadrature(a: float, b: float) -> float:
    """Adaptive quadrature of the defining Marcum integral (independent engine)."""
    from cellload.specfun import bessel_i0_scaled

    def integrand(y):
        return y * np.exp(-0.5 * (y - a) ** 2) * bessel_i0_scaled(a * y)

    spec = QuadSpec(rel_tol=1e-12, abs_tol=1e-14, max_subdivisions=4000)
    return integrate_semi_infinite(integrand, b, spec).value


def disc_overlap_hit_or_miss(r1, r2, d, samples, seed):
    """Monte Carlo lens-area oracle: uniform points in the bounding box of the
    first disc, counting those inside both.  Returns (estimate, stderr)."""
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-r1, r1, size=(samples, 2))
    box = (2.0 * r1) ** 2
    inside1 = np.einsum("ij,ij->i", pts, pts) <= r1 * r1
    shifted = pts - np.array([d, 0.0])
    inside2 = np.einsum("ij,ij->i", shifted, shifted) <= r2 * r2
    p = np.mean(inside1 & inside2)
    return box * p, box * math.sqrt(p * (1 - p) / samples)


# (integrand, lower, upper, exact value) with upper possibly inf; the suite
# covers polynomials, Gaussians and power tails per the error-bound contract.
CLOSED_FORM_SUITE = [
    (lambda x: np.ones_like(x), 0.0, 1.0, 1.0),
    (lambda x: x, 0.0, 1.0, 0.5),
    (lambda x: x**2, 0.0, 3.0, 9.0),
    (lambda x: x**5, -1.0, 1.0, 0.0),
    (lambda x: x**7 - 2 * x**3, 0.0, 2.0, 24.0),
    (lambda x: np.polyval([3, 0, -4, 1], x), -2.0, 2.0, 4.0),
    (lambda x: np.exp(x), 0.0, 1.0, math.e - 1.0),
    (lambda x: np.sin(x), 0.0, math.pi, 2.0),
    (lambda x: np.cos(x) ** 2, 0.0, 2.0 * math.pi, math.pi),
    (lambda x: 1.0 / (1.0 + x**2), 0.0, 1.0, math.pi / 4.0),
    (lambda x: np.exp(-0.5 * x**2), -8.0, 8.0, math.sqrt(2.0 * math.pi)),
    (lambda x: x * np.exp(-0.5 * x**2), 0.0, 10.0, 1.0 - math.exp(-50.0)),
    (lambda x: np.exp(-((x - 3.0) ** 2) / 0.02), 0.0, 6.0, math.sqrt(0.02 * math.pi)),
    (lambda x: np.sqrt(np.abs(x)), 0.0, 4.0, 16.0 / 3.0),
    (lambda x: np.log(x), 0.0, 1.0, -1.0),
    (lambda x: np.exp(-x), 0.0, math.inf, 1.0),
    (lambda x: np.exp(-3.0 * x) * x, 0.0, math.inf, 1.0 / 9.0),
    (lambda x: 1.0 / (1.0 + x**2), 1.0, math.inf, math.pi / 4.0),
    (lambda x: x ** (-2.5), 1.0, math.inf, 2.0 / 3.0),
    (lambda x: x * np.exp(-0.5 * x**2), 0.0, math.inf, 1.0),
]


def quad_any(f, lo, hi, spec=None):
    spec = spec or QuadSpec()
    if math.isinf(hi):
        return integrate_semi_infinite(f, lo, spec)
    return integrate_finite(f, lo, hi, spec)


def pgf_by_nested_quadrature(net, theta: float) -> float:
    """Load PGF at a real theta in [0, 1] via the adaptive engine only.

    Independent of the shared-grid evaluator: the outer integral runs over
    the normalized cell radius, the inner over the parent distance, both with
    the generic adaptive rules and the cluster CDF evaluated directly.
    """
    from cellload.montecarlo import cluster_reach
    from cellload.ppmodel import cluster_cdf
    from cellload.specfun import cell_radius_pdf, cell_radius_quantile

    norm = net.normalized()
    users = norm.users
    reach = cluster_reach(users)
    spec = QuadSpec(rel_tol=1e-9, abs_tol=1e-12)

    def outer_integrand(r_arr):
        out = np.empty_like(r_arr)
        for i, r in enumerate(r_arr):
            r_phys = r / math.sqrt(math.pi)

            def inner(v):
                xi = cluster_cdf(users, r_phys, v)
                return (1.0 - np.exp(-users.m_bar * (1.0 - theta) * xi)) * v

            val = integrate_finite(inner, 0.0, r_phys + reach, spec).value
            out[i] = math.exp(-2.0 * math.pi * users.lambda_p * val)
        return out * cell_radius_pdf(r_arr)

    hi = cell_radius_quantile(1e-10)
    return integrate_finite(outer_integrand, 0.0, hi, QuadSpec(rel_tol=1e-8, abs_tol=1e-12)).value
