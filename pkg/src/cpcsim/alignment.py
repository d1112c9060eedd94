"""Representational structure and inter-system alignment.

Two comparison regimes over representational dissimilarity matrices (RDMs):

* supervised: stimulus correspondence is known, RDMs are compared by
  correlating their upper triangles (rsa);
* unsupervised: correspondence is unknown and inferred by entropic
  Gromov-Wasserstein optimal transport (gw_align), which matches structure to
  structure and can detect coordinate-scrambled but relation-preserving
  systems that supervised comparison would miss.

The inner solver is a log-domain Sinkhorn; the GW outer loop is iterated
linearization with a monotone safeguard, restarted from several couplings and
carried through an epsilon continuation schedule because the problem is
non-convex and sharp regularization freezes the starting basin.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial.distance import pdist, squareform
from scipy.special import logsumexp, xlogy
from scipy.stats import pearsonr, spearmanr
from sklearn.metrics import adjusted_rand_score, cohen_kappa_score

from .agent import SignAssignment
from .errors import NumericalError, SinkhornConvergenceError

RDM_METRICS = ("euclidean", "cosine")
RSA_METHODS = ("pearson", "spearman")

_SYM_TOL = 1e-12

# marginal residual every coupling handed downstream must satisfy
_COUPLING_TOL = 1e-6


@dataclass
class RDM:
    """Symmetric zero-diagonal dissimilarity matrix with stimulus labels.

    Entries within 1e-12 of the invariants (tiny asymmetry, tiny negative
    values, tiny diagonal) are snapped to validity; larger violations raise.
    """

    labels: list
    matrix: np.ndarray

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=float)
        n = self.matrix.shape[0]
        if self.matrix.shape != (n, n) or n < 1:
            raise ValueError("RDM matrix must be square and nonempty")
        self.labels = [str(l) for l in self.labels]
        if len(self.labels) != n:
            raise ValueError("need one label per row")
        if not np.all(np.isfinite(self.matrix)):
            raise ValueError("RDM entries must be finite")
        asym = np.abs(self.matrix - self.matrix.T).max()
        if asym > _SYM_TOL:
            raise ValueError(f"RDM not symmetric (max asymmetry {asym:.3e})")
        self.matrix = (self.matrix + self.matrix.T) / 2.0
        diag = np.abs(np.diag(self.matrix)).max()
        if diag > _SYM_TOL:
            raise ValueError(f"RDM diagonal not zero (max {diag:.3e})")
        np.fill_diagonal(self.matrix, 0.0)
        neg = self.matrix.min()
        if neg < -_SYM_TOL:
            raise ValueError(f"RDM has negative entries (min {neg:.3e})")
        np.clip(self.matrix, 0.0, None, out=self.matrix)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def upper_triangle(self) -> np.ndarray:
        iu = np.triu_indices(self.n, k=1)
        return self.matrix[iu]


def compute_rdm(points: np.ndarray, metric: str = "euclidean", labels=None) -> RDM:
    """Pairwise-distance RDM over the rows of points."""
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or points.shape[0] < 2:
        raise ValueError("points must be an n x d matrix with n >= 2")
    if not np.all(np.isfinite(points)):
        raise ValueError("points must be finite")
    if metric not in RDM_METRICS:
        raise ValueError(f"metric must be one of {RDM_METRICS}")
    if metric == "cosine":
        norms = np.linalg.norm(points, axis=1)
        if np.any(norms == 0):
            raise NumericalError("cosine metric undefined for zero-norm rows")
    d = squareform(pdist(points, metric=metric))
    # cosine distances of near-identical rows can undershoot zero by an ulp
    np.clip(d, 0.0, None, out=d)
    if labels is None:
        labels = [str(i) for i in range(points.shape[0])]
    return RDM(labels=list(labels), matrix=d)


def rsa(a: RDM, b: RDM, method: str = "pearson") -> float:
    """Correlation of the two strictly-upper triangles (supervised RSA)."""
    if method not in RSA_METHODS:
        raise ValueError(f"method must be one of {RSA_METHODS}")
    if a.n != b.n:
        raise ValueError("RDMs must have the same size")
    if a.labels != b.labels:
        raise ValueError("RDMs must share the same label order")
    ua, ub = a.upper_triangle(), b.upper_triangle()
    if ua.size < 2:
        raise ValueError("need at least 3 stimuli for a correlation")
    if np.ptp(ua) == 0 or np.ptp(ub) == 0:
        raise NumericalError("constant RDM upper triangle: correlation undefined")
    if method == "pearson":
        return float(pearsonr(ua, ub).statistic)
    return float(spearmanr(ua, ub).statistic)


# ---------------------------------------------------------------------------
# Entropic optimal transport
# ---------------------------------------------------------------------------

@dataclass
class TransportPlan:
    """A coupling between two weighted point sets."""

    plan: np.ndarray
    row_marginal: np.ndarray
    col_marginal: np.ndarray

    def __post_init__(self):
        self.plan = np.asarray(self.plan, dtype=float)
        self.row_marginal = np.asarray(self.row_marginal, dtype=float)
        self.col_marginal = np.asarray(self.col_marginal, dtype=float)
        n, m = self.plan.shape
        if self.row_marginal.shape != (n,) or self.col_marginal.shape != (m,):
            raise ValueError("marginal shapes must match plan")
        if self.plan.min() < 0:
            raise ValueError("plan entries must be nonnegative")
        res_r, res_c = self.residuals()
        if max(res_r, res_c) > _COUPLING_TOL:
            raise ValueError(
                f"plan marginals off by {max(res_r, res_c):.3e} "
                f"(> {_COUPLING_TOL:g})"
            )

    def residuals(self) -> tuple:
        res_r = float(np.abs(self.plan.sum(axis=1) - self.row_marginal).max())
        res_c = float(np.abs(self.plan.sum(axis=0) - self.col_marginal).max())
        return res_r, res_c


def _check_marginal(v, size: int, name: str) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape != (size,):
        raise ValueError(f"{name} must have length {size}")
    if v.min() < 0:
        raise ValueError(f"{name} must be nonnegative")
    if abs(v.sum() - 1.0) > 1e-9:
        raise ValueError(f"{name} must sum to 1 within 1e-9")
    return v


# checkpoint spacing for the geometric-tail extrapolation below
_AITKEN_SPACING = 25


def _sinkhorn_log(
    cost, loga, logb, epsilon, max_iter, tol, f0=None, g0=None, best_effort=False
):
    """Potential iterations in log space; returns (logT, f, g, n_iter, residual).

    f0/g0 warm-start the potentials; the Gromov-Wasserstein outer loop reuses
    the previous iteration's potentials, which is what makes small epsilon
    affordable there. best_effort suppresses the convergence error and
    returns the current iterate (used by annealing stages only).

    At epsilon small relative to the cost oscillation the iteration contracts
    linearly with one dominant mode, so the potential sequence is near
    geometric; a safeguarded vector Aitken extrapolation sums that tail from
    three checkpoints and jumps ahead, accepted only when it actually lowers
    the measured residual. Without it, tolerances below ~1e-5 can cost tens
    of thousands of iterations.
    """
    f = np.zeros(cost.shape[0]) if f0 is None else np.asarray(f0, dtype=float)
    g = np.zeros(cost.shape[1]) if g0 is None else np.asarray(g0, dtype=float)
    a = np.exp(loga)
    snaps = []
    for it in range(1, max_iter + 1):
        f = epsilon * (loga - logsumexp((g[None, :] - cost) / epsilon, axis=1))
        g = epsilon * (logb - logsumexp((f[:, None] - cost) / epsilon, axis=0))
        logT = (f[:, None] + g[None, :] - cost) / epsilon
        # after the g-update every entry satisfies exp(logT) <= its column
        # marginal <= 1, so exponentiating is overflow-safe, and convergence
        # is measured on the row marginal alone
        err = float(np.abs(np.exp(logT).sum(axis=1) - a).max())
        if err <= tol:
            return logT, f, g, it, err
        if it % _AITKEN_SPACING == 0:
            snaps.append(f.copy())
            if len(snaps) == 3:
                f_x = _aitken_tail(snaps)
                if f_x is not None:
                    g_x = epsilon * (
                        logb - logsumexp((f_x[:, None] - cost) / epsilon, axis=0)
                    )
                    logT_x = (f_x[:, None] + g_x[None, :] - cost) / epsilon
                    err_x = float(np.abs(np.exp(logT_x).sum(axis=1) - a).max())
                    if err_x < err:
                        f, g, logT, err = f_x, g_x, logT_x, err_x
                        if err <= tol:
                            return logT, f, g, it, err
                snaps = [f.copy()]
    if best_effort:
        return logT, f, g, max_iter, err
    raise SinkhornConvergenceError(
        f"no convergence in {max_iter} iterations (residual {err:.3e}, "
        f"epsilon {epsilon:g})"
    )


def _aitken_tail(snaps):
    """Limit estimate from three equally spaced potential checkpoints.

    If deltas contract geometrically with ratio rho, the remaining tail sums
    to delta * rho / (1 - rho). Returns None when the ratio estimate is
    unusable (expansion, near-1 stall, or zero movement). Coordinates at
    -inf (zero marginals) are fixed points and stay put.
    """
    finite = np.isfinite(snaps[2])
    d1 = np.where(finite, snaps[1] - snaps[0], 0.0)
    d2 = np.where(finite, snaps[2] - snaps[1], 0.0)
    denom = float(d1 @ d1)
    if denom == 0.0 or not np.all(np.isfinite(d1) & np.isfinite(d2)):
        return None
    rho = float(d2 @ d1) / denom
    if not 0.0 < rho < 0.999:
        return None
    return np.where(finite, snaps[2] + d2 * (rho / (1.0 - rho)), snaps[2])


def sinkhorn(
    cost: np.ndarray,
    row_marginal,
    col_marginal,
    epsilon: float,
    max_iter: int = 10_000,
    tol: float = 1e-9,
) -> TransportPlan:
    """Entropic optimal transport plan for the given cost matrix.

    Solves min <cost, T> + epsilon * sum T log T over couplings with the
    given marginals. Log-domain stabilized, so small epsilon is safe as long
    as it converges within max_iter.
    """
    cost = np.asarray(cost, dtype=float)
    if cost.ndim != 2:
        raise ValueError("cost must be a matrix")
    if not np.all(np.isfinite(cost)):
        raise ValueError("cost entries must be finite")
    if epsilon <= 0:
        raise ValueError("epsilon must be > 0")
    if tol <= 0:
        raise ValueError("tol must be > 0")
    n, m = cost.shape
    a = _check_marginal(row_marginal, n, "row_marginal")
    b = _check_marginal(col_marginal, m, "col_marginal")
    loga, logb = _safe_log(a), _safe_log(b)
    logT, _, _, _, _ = _sinkhorn_log(cost, loga, logb, epsilon, max_iter, tol)
    return TransportPlan(plan=np.exp(logT), row_marginal=a, col_marginal=b)


def _safe_log(v: np.ndarray) -> np.ndarray:
    return np.where(v > 0, np.log(np.where(v > 0, v, 1.0)), -np.inf)


def _sinkhorn_annealed(
    cost, loga, logb, epsilon, max_iter, tol, f0=None, g0=None, best_effort=False
):
    """Sinkhorn solve with epsilon scaling for cold starts.

    When epsilon is small relative to the cost oscillation and no potentials
    are supplied, plain iterations contract too slowly to be usable. Solving
    a short schedule of shrinking epsilons, warm-starting each stage, reaches
    the same fixed point orders of magnitude faster. Warm starts bypass the
    schedule.
    """
    if f0 is None or g0 is None:
        osc = float(cost.max() - cost.min())
        eps_stage = osc / 20.0
        while eps_stage > epsilon * 1.0001:
            _, f0, g0, _, _ = _sinkhorn_log(
                cost,
                loga,
                logb,
                eps_stage,
                max_iter=200,
                tol=tol,
                f0=f0,
                g0=g0,
                best_effort=True,
            )
            eps_stage = max(epsilon, eps_stage / 4.0)
    return _sinkhorn_log(
        cost, loga, logb, epsilon, max_iter, tol, f0=f0, g0=g0,
        best_effort=best_effort,
    )


# ---------------------------------------------------------------------------
# Entropic Gromov-Wasserstein
# ---------------------------------------------------------------------------

# continuation schedule: start at the mean-RDM-entry scale, shrink by the
# factor until the target epsilon; per-stage outer-iteration budget
_CONTINUATION_FACTOR = 3.0
_CONTINUATION_OUTER = 100

# a stalled final solve at or below this residual is projected onto the
# coupling polytope instead of failing; beyond it the start is dropped
_RESCUE_TOL = 1e-4


def _gw_cost(A: np.ndarray, T: np.ndarray, B: np.ndarray, constC: np.ndarray):
    """Linearized cost tensor for the square-loss GW functional at T."""
    return constC - 2.0 * (A @ T @ B)


def _gw_energy(A, B, constC, T) -> float:
    """Unregularized transport cost sum_ijkl (A_ij - B_kl)^2 T_ik T_jl."""
    return float(np.sum(_gw_cost(A, T, B, constC) * T))


def _round_to_coupling(T: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Project an almost-coupling onto the transport polytope.

    Scales rows, then columns, down to their marginals and patches the
    missing mass with a rank-1 correction (Altschuler et al. 2017). The
    result's marginals match a and b to machine precision and the L1
    perturbation is of the order of the input's marginal residuals.
    """
    rows = T.sum(axis=1)
    T = T * np.where(rows > 0, np.minimum(1.0, a / np.where(rows > 0, rows, 1.0)), 1.0)[:, None]
    cols = T.sum(axis=0)
    T = T * np.where(cols > 0, np.minimum(1.0, b / np.where(cols > 0, cols, 1.0)), 1.0)[None, :]
    err_a = np.maximum(a - T.sum(axis=1), 0.0)
    err_b = np.maximum(b - T.sum(axis=0), 0.0)
    total = err_a.sum()
    if total > 0:
        T = T + np.outer(err_a, err_b) / total
    return np.maximum(T, 0.0)


def _gw_refine(
    A, B, constC, logp, logq, epsilon, T, f, g,
    max_outer, outer_tol, loose_iter, loose_tol,
):
    """Monotone linearization loop at one epsilon; returns (T, f, g, curve).

    Each step solves the current linearized cost best-effort at the loose
    tolerance, warm-starting the potentials, and is accepted only if the
    regularized objective does not increase; a worsening step ends the loop
    with the previous plan kept. The curve holds the accepted objectives.
    """
    obj = _gw_energy(A, B, constC, T) + epsilon * float(xlogy(T, T).sum())
    curve = [obj]
    for _ in range(max_outer):
        tens = 2.0 * _gw_cost(A, T, B, constC)
        logT, f, g, _, _ = _sinkhorn_annealed(
            tens, logp, logq, epsilon, loose_iter, loose_tol,
            f0=f, g0=g, best_effort=True,
        )
        T_next = np.exp(logT)
        obj_next = _gw_energy(A, B, constC, T_next) + epsilon * float(
            xlogy(T_next, T_next).sum()
        )
        if obj_next > obj + 1e-12 * (1.0 + abs(obj)):
            break
        delta = float(np.abs(T_next - T).max())
        T, obj = T_next, obj_next
        curve.append(obj)
        if delta < outer_tol:
            break
    return T, f, g, curve


def _gw_initial_plans(n: int, m: int, p, q, n_init: int, seed):
    """Feasible starting couplings: identity-biased, anti-identity, random.

    Random inits are positive matrices KL-projected onto the coupling
    polytope (a Sinkhorn solve with unit epsilon). Returns a list of
    (plan, derived_seed) in a fixed order so best-of reduction is
    deterministic.
    """
    outer_pq = np.outer(p, q)
    plans = []
    for idx in range(n_init):
        derived = int(np.random.SeedSequence([int(seed), idx]).generate_state(1)[0])
        if idx == 0:
            if n == m:
                t0 = 0.5 * np.diag(p) + 0.5 * outer_pq
                # mixing keeps rows exact; columns are exact for p == q,
                # otherwise re-project below
            else:
                t0 = outer_pq.copy()
        elif idx == 1:
            if n == m:
                t0 = 0.5 * np.fliplr(np.diag(p)) + 0.5 * outer_pq
            else:
                t0 = outer_pq.copy()
        else:
            rng = np.random.default_rng([int(seed), idx])
            t0 = rng.random((n, m)) + 0.05
        with np.errstate(divide="ignore"):
            kl_cost = -np.log(np.maximum(t0, 1e-300))
        t0 = sinkhorn(kl_cost, p, q, epsilon=1.0, max_iter=10_000, tol=1e-12).plan
        plans.append((t0, derived))
    return plans


def gw_align(
    a: RDM,
    b: RDM,
    epsilon: float = None,
    n_init: int = 3,
    seed: int = 0,
    row_marginal=None,
    col_marginal=None,
    max_outer: int = 1000,
    outer_tol: float = 1e-9,
    inner_max_iter: int = 30_000,
    inner_tol: float = 1e-7,
    return_log: bool = False,
):
    """Entropic Gromov-Wasserstein alignment of two RDMs.

    Minimizes sum_ijkl (a_ij - b_kl)^2 T_ik T_jl + epsilon * sum T log T by
    iterated linearization; each linearized problem is a Sinkhorn solve. A
    monotone safeguard accepts an outer step only if the regularized
    objective does not increase, so the per-iteration objective trace is
    non-increasing by construction; if a step would increase it, the loop
    stops and keeps the current plan.

    The objective is non-convex and sharp regularization freezes whatever
    basin the start happens to sit in, so each start is first carried
    through a continuation schedule: the loop runs at a large epsilon
    (anchored at the mean RDM entry) and the converged plan warm-starts the
    next, smaller epsilon, down to the target. Only the target-epsilon loop
    is reported in the objective curve.

    epsilon defaults to 0.02 times the mean entry of the two RDMs (scale
    adaptive). Marginals default to uniform. Runs n_init starts and keeps
    the plan with the lowest unregularized cost (ties: lowest init seed,
    then lowest init index).

    Inner solves during the outer loops run best-effort at a loose
    tolerance; a final solve on the winning start then drives the marginal
    residuals down to inner_tol for the returned coupling. Degenerate
    instances (near-tied correspondences) can leave that final solve stuck
    above inner_tol: a residual still at or below 1e-6 is accepted as is, a
    residual at or below 1e-4 is projected onto the coupling polytope
    exactly (flagged "rounded" in the log), and anything worse drops the
    start. The convergence error propagates only if every start is dropped.

    Returns (TransportPlan, gw_distance); with return_log=True appends a
    dict with per-init objective curves and the winning init. Per-init
    unregularized costs in the log are measured at the loose fixed points;
    the returned gw_distance is measured on the final coupling and clamped
    at zero (exact self-alignment can cancel to a tiny negative in floats).
    """
    A, B = a.matrix, b.matrix
    n, m = a.n, b.n
    if n_init < 1:
        raise ValueError("n_init must be >= 1")
    p = (
        np.full(n, 1.0 / n)
        if row_marginal is None
        else _check_marginal(row_marginal, n, "row_marginal")
    )
    q = (
        np.full(m, 1.0 / m)
        if col_marginal is None
        else _check_marginal(col_marginal, m, "col_marginal")
    )
    if epsilon is None:
        scale = float(np.concatenate([A.ravel(), B.ravel()]).mean())
        if scale <= 0:
            raise NumericalError(
                "cannot choose a default epsilon for all-zero RDMs"
            )
        epsilon = 0.02 * scale
    if epsilon <= 0:
        raise ValueError("epsilon must be > 0")

    constC = np.outer((A**2) @ p, np.ones(m)) + np.outer(np.ones(n), (B**2) @ q)
    logp, logq = _safe_log(p), _safe_log(q)

    loose_tol = max(1e-4, inner_tol)
    loose_iter = min(5_000, inner_max_iter)
    eps_anchor = float(np.concatenate([A.ravel(), B.ravel()]).mean())
    candidates = []
    log = {"epsilon": float(epsilon), "inits": []}
    for idx, (t0, derived_seed) in enumerate(
        _gw_initial_plans(n, m, p, q, n_init, seed)
    ):
        T = t0
        f = g = None  # Sinkhorn potentials, warm-started across outer steps
        eps_stage = eps_anchor
        while eps_stage > epsilon * 1.0001:
            T, f, g, _ = _gw_refine(
                A, B, constC, logp, logq, eps_stage, T, f, g,
                _CONTINUATION_OUTER, outer_tol, loose_iter, loose_tol,
            )
            eps_stage = max(epsilon, eps_stage / _CONTINUATION_FACTOR)
        T, f, g, curve = _gw_refine(
            A, B, constC, logp, logq, epsilon, T, f, g,
            max_outer, outer_tol, loose_iter, loose_tol,
        )
        entry = {
            "init_index": idx,
            "init_seed": derived_seed,
            "objective_curve": curve,
            "unregularized_cost": _gw_energy(A, B, constC, T),
            "converged": None,
            "rounded": None,
        }
        log["inits"].append(entry)
        candidates.append((entry["unregularized_cost"], derived_seed, idx, T, f, g, entry))

    # drive the winner's coupling to inner_tol; candidates are tried
    # best-first, so losers are usually never polished
    worst_stall = None
    for _, _, idx, T, f, g, entry in sorted(candidates, key=lambda c: c[:3]):
        tens = 2.0 * _gw_cost(A, T, B, constC)
        logT, _, _, _, err = _sinkhorn_log(
            tens, logp, logq, epsilon, inner_max_iter, inner_tol,
            f0=f, g0=g, best_effort=True,
        )
        if err > _RESCUE_TOL:
            entry["converged"] = False
            worst_stall = err if worst_stall is None else min(worst_stall, err)
            continue
        refined = np.exp(logT)
        entry["rounded"] = err > _COUPLING_TOL
        if entry["rounded"]:
            refined = _round_to_coupling(refined, p, q)
        entry["converged"] = True
        energy = max(0.0, _gw_energy(A, B, constC, refined))
        log["best_init_index"] = idx
        log["best_init_seed"] = entry["init_seed"]
        plan = TransportPlan(plan=refined, row_marginal=p, col_marginal=q)
        if return_log:
            return plan, energy, log
        return plan, energy
    raise SinkhornConvergenceError(
        f"every initialization stalled above marginal residual "
        f"{_RESCUE_TOL:g} (best {worst_stall:.3e}, epsilon {epsilon:g})"
    )


def matching_accuracy(plan, true_correspondence, k: int = 1) -> float:
    """Fraction of rows whose top-k plan mass includes the true counterpart.

    Ties in a row are broken toward the lowest column index (stable sort on
    descending mass), which pins down the value for uniform plans.
    """
    P = plan.plan if isinstance(plan, TransportPlan) else np.asarray(plan, dtype=float)
    n, m = P.shape
    if n != m:
        raise ValueError("matching accuracy needs a square plan")
    if not 1 <= k <= m:
        raise ValueError(f"k must be in [1, {m}]")
    perm = np.asarray(true_correspondence, dtype=int)
    if perm.shape != (n,) or not np.array_equal(np.sort(perm), np.arange(n)):
        raise ValueError("true_correspondence must be a permutation of 0..n-1")
    order = np.argsort(-P, axis=1, kind="stable")
    hits = (order[:, :k] == perm[:, None]).any(axis=1)
    return float(hits.mean())


def categorization_agreement(a, b) -> tuple:
    """(adjusted Rand index, Cohen's kappa) between two sign labelings.

    ARI is invariant to relabeling (partition agreement); kappa is not and
    measures convergence on the same literal sign conventions. Element-wise
    identical inputs short-circuit kappa to 1.0, which also covers the
    constant-label case where the generic formula is 0/0.
    """
    sa = a.signs if isinstance(a, SignAssignment) else np.asarray(a, dtype=int)
    sb = b.signs if isinstance(b, SignAssignment) else np.asarray(b, dtype=int)
    if sa.shape != sb.shape or sa.ndim != 1:
        raise ValueError("assignments must be 1-d and the same length")
    if sa.size == 0:
        raise ValueError("assignments must be nonempty")
    ari = float(adjusted_rand_score(sa, sb))
    if np.array_equal(sa, sb):
        kappa = 1.0
    else:
        kappa = float(cohen_kappa_score(sa, sb))
    return ari, kappa


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

@dataclass
class AlignmentReport:
    """Summary of one supervised + unsupervised comparison of two RDMs."""

    rsa_pearson: float
    rsa_spearman: float
    gw_distance: float
    matching_accuracy: float
    top_k_accuracy: dict
    epsilon: float
    n_initializations: int
    best_init_seed: int
    best_init_index: int = 0

    def __post_init__(self):
        for k, v in self.top_k_accuracy.items():
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"top-{k} accuracy {v} outside [0,1]")
        if not 0.0 <= self.matching_accuracy <= 1.0:
            raise ValueError("matching_accuracy outside [0,1]")
        if self.gw_distance < 0:
            raise ValueError("gw_distance must be nonnegative")

    def to_dict(self) -> dict:
        return {
            "rsa_pearson": self.rsa_pearson,
            "rsa_spearman": self.rsa_spearman,
            "gw_distance": self.gw_distance,
            "matching_accuracy": self.matching_accuracy,
            "top_k_accuracy": {str(k): v for k, v in self.top_k_accuracy.items()},
            "epsilon": self.epsilon,
            "n_initializations": self.n_initializations,
            "best_init_seed": self.best_init_seed,
            "best_init_index": self.best_init_index,
        }


def build_alignment_report(
    a: RDM,
    b: RDM,
    epsilon: float = None,
    n_init: int = 3,
    seed: int = 0,
    supervised: bool = False,
    top_ks=(1, 3, 5),
) -> AlignmentReport:
    """Run GW alignment plus RSA and collect everything into one report.

    With supervised=True the RDMs are assumed to share label order, so RSA
    and matching accuracy are evaluated against the identity correspondence
    directly. Without it, RSA is computed after reordering b by the
    correspondence the transport plan itself infers (row argmax), while
    matching accuracy is scored against the label-derived correspondence
    when the two label sets coincide and are unique, falling back to
    identity otherwise (meaningful exactly when the orders do correspond).
    """
    if a.n != b.n:
        raise ValueError("alignment report needs equally sized RDMs")
    plan, gw_distance, log = gw_align(
        a, b, epsilon=epsilon, n_init=n_init, seed=seed, return_log=True
    )
    identity = np.arange(a.n)
    if not supervised and sorted(a.labels) == sorted(b.labels) and len(
        set(a.labels)
    ) == a.n:
        col_of = {lab: j for j, lab in enumerate(b.labels)}
        correspondence = np.array([col_of[lab] for lab in a.labels])
    else:
        correspondence = identity
    ks = sorted({int(k) for k in top_ks if 1 <= int(k) <= b.n})
    if 1 not in ks:
        ks = [1] + ks
    top_k = {k: matching_accuracy(plan, correspondence, k=k) for k in ks}

    if supervised:
        # the flag asserts row order is the correspondence, so labels are
        # normalized rather than compared
        b_cmp = RDM(labels=a.labels, matrix=b.matrix)
    else:
        inferred = np.argmax(plan.plan, axis=1)
        b_cmp = RDM(labels=a.labels, matrix=b.matrix[np.ix_(inferred, inferred)])
    try:
        pear = rsa(a, b_cmp, "pearson")
        spear = rsa(a, b_cmp, "spearman")
    except (ValueError, NumericalError):
        pear, spear = float("nan"), float("nan")

    return AlignmentReport(
        rsa_pearson=pear,
        rsa_spearman=spear,
        gw_distance=gw_distance,
        matching_accuracy=top_k[1],
        top_k_accuracy=top_k,
        epsilon=log["epsilon"],
        n_initializations=n_init,
        best_init_seed=log["best_init_seed"],
        best_init_index=log["best_init_index"],
    )


def save_report_json(report: AlignmentReport, path) -> None:
    Path(path).write_text(
        json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"
    )


# ---------------------------------------------------------------------------
# RDM CSV IO: square matrix with one header row of labels
# ---------------------------------------------------------------------------

def save_rdm_csv(rdm: RDM, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(rdm.labels)
        for row in rdm.matrix:
            # repr of the built-in float round-trips exactly; numpy scalars
            # repr as np.float64(...) and would not parse back
            w.writerow([repr(float(v)) for v in row])


def load_rdm_csv(path) -> RDM:
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        labels = next(reader)
        rows = [[float(v) for v in row] for row in reader if row]
    matrix = np.array(rows, dtype=float)
    if matrix.shape != (len(labels), len(labels)):
        raise ValueError(
            f"RDM CSV must be square with one header row of labels; "
            f"got {matrix.shape} against {len(labels)} labels"
        )
    return RDM(labels=labels, matrix=matrix)
