"""Shared test oracles, kept independent of the package internals."""

import numpy as np
from scipy import stats
from scipy.integrate import trapezoid


def grid_tiny_posterior(biomarkers, responses, *, beta_a=1.0, beta_b=1.0,
                        theta_pool_mean=-2.3, theta_pool_sd=10.0,
                        theta_neg_mean=-2.3, theta_neg_sd=2.0,
                        gap_shape=30.0, gap_rate=21.5,
                        split_mean=0.0, split_sd=3.0,
                        n_theta=2001, n_neg=601, n_gap=601):
    """Quadrature posterior for one indication under fixed split priors.

    Integrates the pooled-model evidence over a truncated logit grid and
    the split-model evidence over a (negative logit, gap) grid, with the
    split-point dimension handled analytically per biomarker region (the
    likelihood is piecewise constant in the split point, so its normal
    prior integrates to region masses and partial means in closed form).

    Returns a dict with prob_split, split posterior means (marginal and
    conditional on the split model), and the two evidences.
    """
    xs = np.sort(np.asarray(biomarkers, dtype=float))
    ys_by_x = np.asarray(responses, dtype=float)[np.argsort(biomarkers, kind="stable")]
    n = xs.size
    s_total = float(ys_by_x.sum())

    def loglik(successes, total, theta):
        return successes * theta - total * np.logaddexp(0.0, theta)

    # pooled-model evidence
    theta = np.linspace(theta_pool_mean - 6 * theta_pool_sd,
                        theta_pool_mean + 6 * theta_pool_sd, n_theta)
    integrand = np.exp(loglik(s_total, n, theta)) * stats.norm.pdf(
        theta, theta_pool_mean, theta_pool_sd)
    m_pooled = float(trapezoid(integrand, theta))

    # split-model evidence, region by region
    gap_mean = gap_shape / gap_rate
    gap_sd = np.sqrt(gap_shape) / gap_rate
    tneg = np.linspace(theta_neg_mean - 6 * theta_neg_sd,
                       theta_neg_mean + 6 * theta_neg_sd, n_neg)
    gap = np.linspace(max(1e-6, gap_mean - 8 * gap_sd), gap_mean + 8 * gap_sd, n_gap)
    prior2 = np.outer(stats.norm.pdf(tneg, theta_neg_mean, theta_neg_sd),
                      stats.gamma.pdf(gap, gap_shape, scale=1 / gap_rate))
    cum = np.concatenate(([0.0], np.cumsum(ys_by_x)))
    edges = np.concatenate(([-np.inf], xs, [np.inf]))
    m_split = 0.0
    xmoment = 0.0
    for k in range(n + 1):
        lo, hi = edges[k], edges[k + 1]
        mass = stats.norm.cdf(hi, split_mean, split_sd) - stats.norm.cdf(
            lo, split_mean, split_sd)
        if mass <= 0.0:
            continue
        # partial first moment of N(split_mean, split_sd^2) over [lo, hi)
        z_lo = (lo - split_mean) / split_sd
        z_hi = (hi - split_mean) / split_sd
        partial_mean = (split_mean * mass
                        + split_sd * (stats.norm.pdf(z_lo) - stats.norm.pdf(z_hi)))
        neg_count, neg_resp = k, float(cum[k])
        ll = (loglik(neg_resp, neg_count, tneg)[:, None]
              + loglik(s_total - neg_resp, n - neg_count, tneg[:, None] + gap[None, :]))
        lik_region = float(trapezoid(trapezoid(np.exp(ll) * prior2, gap, axis=1), tneg))
        m_split += mass * lik_region
        xmoment += partial_mean * lik_region

    prob_split = beta_b * m_split / (beta_a * m_pooled + beta_b * m_split)
    mean_given_split = xmoment / m_split
    return {
        "prob_split": float(prob_split),
        "split_mean_given_split": float(mean_given_split),
        "split_mean_marginal": float(
            (1 - prob_split) * split_mean + prob_split * mean_given_split),
        "evidence_pooled": m_pooled,
        "evidence_split": m_split,
    }
