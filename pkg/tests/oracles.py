"""Independent reference implementations for checking derived values.

Nothing here imports the package under test. Every function takes a
deliberately naive route to the quantity being checked (double loops,
direct formulas, numeric integration, exhaustive enumeration), so
agreement with the package is evidence rather than tautology.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy.integrate import quad
from scipy.special import xlogy
from scipy.stats import invgamma, norm
from scipy.stats import t as student_t


def rdm_double_loop(points, metric="euclidean"):
    """Pairwise dissimilarity matrix by explicit double loop."""
    points = np.asarray(points, dtype=float)
    n = points.shape[0]
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            if metric == "euclidean":
                out[i, j] = math.sqrt(float(((points[i] - points[j]) ** 2).sum()))
            else:
                na = math.sqrt(float((points[i] ** 2).sum()))
                nb = math.sqrt(float((points[j] ** 2).sum()))
                out[i, j] = 1.0 - float(points[i] @ points[j]) / (na * nb)
    return out


def pearson_direct(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    dx = x - x.mean()
    dy = y - y.mean()
    return float((dx @ dy) / math.sqrt((dx @ dx) * (dy @ dy)))


def average_ranks(x):
    """Ranks starting at 1, ties receiving the mean of their positions."""
    x = np.asarray(x, dtype=float)
    order = np.argsort(x, kind="stable")
    ranks = np.empty(len(x))
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and x[order[j + 1]] == x[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman_direct(x, y):
    return pearson_direct(average_ranks(x), average_ranks(y))


def ari_pair_counting(a, b):
    """Adjusted Rand index by classifying every unordered element pair."""
    a = np.asarray(a)
    b = np.asarray(b)
    n11 = n00 = n10 = n01 = 0
    for i, j in itertools.combinations(range(len(a)), 2):
        same_a = a[i] == a[j]
        same_b = b[i] == b[j]
        if same_a and same_b:
            n11 += 1
        elif same_a:
            n10 += 1
        elif same_b:
            n01 += 1
        else:
            n00 += 1
    denom = (n11 + n10) * (n10 + n00) + (n11 + n01) * (n01 + n00)
    if denom == 0:
        # both partitions trivial (all-singletons or all-one-cluster)
        return 1.0
    return 2.0 * (n11 * n00 - n10 * n01) / denom


def kappa_frequency(a, b):
    """Cohen's kappa from observed and chance agreement frequencies."""
    a = np.asarray(a)
    b = np.asarray(b)
    n = len(a)
    po = float(np.mean(a == b))
    labels = set(a.tolist()) | set(b.tolist())
    pe = sum(
        (float(np.sum(a == lab)) / n) * (float(np.sum(b == lab)) / n)
        for lab in labels
    )
    if pe == 1.0:
        return 1.0 if po == 1.0 else 0.0
    return (po - pe) / (1.0 - pe)


def niw_fit_sequential(prior_mean, prior_scale, prior_dof, prior_scatter, data):
    """Fold observations into a NIW prior one at a time via rank-1 updates.

    Returns (mean, scale, dof, scatter) after all rows of data.
    """
    mu = np.asarray(prior_mean, dtype=float).copy()
    kappa = float(prior_scale)
    nu = float(prior_dof)
    psi = np.asarray(prior_scatter, dtype=float).copy()
    for x in np.asarray(data, dtype=float):
        dev = (x - mu).reshape(-1, 1)
        psi = psi + (kappa / (kappa + 1.0)) * (dev @ dev.T)
        mu = (kappa * mu + x) / (kappa + 1.0)
        kappa += 1.0
        nu += 1.0
    return mu, kappa, nu, psi


def t_predictive_logpdf_1d(x, mean, kappa, nu, psi):
    """Closed-form 1-d NIW posterior predictive via scipy's Student-t.

    dof nu - d + 1 = nu, location mean, scale sqrt(psi (kappa+1) / (kappa nu)).
    """
    scale = math.sqrt(psi * (kappa + 1.0) / (kappa * nu))
    return float(student_t.logpdf(x, df=nu, loc=mean, scale=scale))


def predictive_density_quad_1d(x, mu0, kappa0, nu0, psi0):
    """1-d NIW predictive density by nested numeric integration.

    p(x) = integral over sigma^2 of [integral over mu of
    N(x | mu, sigma^2) N(mu | mu0, sigma^2/kappa0) dmu]
    InvGamma(sigma^2 | nu0/2, psi0/2) dsigma^2.
    """

    def over_mu(sigma2):
        inner, _ = quad(
            lambda mu: norm.pdf(x, loc=mu, scale=math.sqrt(sigma2))
            * norm.pdf(mu, loc=mu0, scale=math.sqrt(sigma2 / kappa0)),
            -np.inf,
            np.inf,
        )
        return inner * invgamma.pdf(sigma2, a=nu0 / 2.0, scale=psi0 / 2.0)

    outer, _ = quad(over_mu, 0.0, np.inf, limit=200)
    return outer


def micro_target_joint(params_a, params_b, obs_a, obs_b):
    """Enumerate the listener chain's stationary law on the 2x2 micro world.

    params_a/params_b: per-sign (mean, kappa, nu, psi) tuples at obs_dim 1.
    With unit-temperature proposals from agent A's own predictive and the
    listener ratio test on agent B's, the per-stimulus target is proportional
    to p_A(o_A | w) * p_B(o_B | w); stimuli are independent, so the joint over
    (w_0, w_1) is the outer product, returned flat with state = 2*w_0 + w_1.
    """
    per_stim = []
    for s in range(2):
        logw = np.array(
            [
                t_predictive_logpdf_1d(float(obs_a[s]), *params_a[w])
                + t_predictive_logpdf_1d(float(obs_b[s]), *params_b[w])
                for w in range(len(params_a))
            ]
        )
        pw = np.exp(logw - logw.max())
        per_stim.append(pw / pw.sum())
    return np.outer(per_stim[0], per_stim[1]).ravel()


def random_couplings_uniform(n, n_samples, rng):
    """Random feasible couplings with uniform marginals on an n x n problem.

    Dirichlet-weighted mixtures of the n! permutation matrices scaled by 1/n;
    every sample lies in the transport polytope exactly.
    """
    perms = np.array(
        [np.eye(n)[list(p)] / n for p in itertools.permutations(range(n))]
    )
    weights = rng.dirichlet(np.ones(perms.shape[0]), size=n_samples)
    return np.einsum("sk,kij->sij", weights, perms)


def entropic_objective(cost, plans, epsilon):
    """<cost, T> + epsilon * sum T log T for a stack of plans."""
    plans = np.asarray(plans, dtype=float)
    if plans.ndim == 2:
        plans = plans[None]
    lin = np.einsum("ij,sij->s", np.asarray(cost, dtype=float), plans)
    ent = xlogy(plans, plans).sum(axis=(1, 2))
    return lin + epsilon * ent
