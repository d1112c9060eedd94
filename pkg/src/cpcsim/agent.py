"""Bayesian perceptual learners.

Each agent keeps one Normal-Inverse-Wishart posterior per sign over its own
observation space. Conjugacy gives closed-form updates and a multivariate
Student-t posterior predictive, so the sign posterior and the naming-game
acceptance ratio are exact rather than approximated.

Conventions. For a sign with assigned data x_1..x_n (each in R^d) and prior
NIW(mu0, kappa0, nu0, psi0):

    kappa_n = kappa0 + n
    nu_n    = nu0 + n
    mu_n    = (kappa0 * mu0 + n * xbar) / kappa_n
    psi_n   = psi0 + S + (kappa0 * n / kappa_n) (xbar - mu0)(xbar - mu0)^T

with xbar the sample mean and S the centered scatter. The predictive for a
new point is Student-t with dof nu_n - d + 1, location mu_n, and scale
psi_n * (kappa_n + 1) / (kappa_n * (nu_n - d + 1)).

All density arithmetic is in log space; SPD structure is handled through
Cholesky factors, and a failed factorization raises NumericalError instead of
being papered over with jitter.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import cholesky, solve_triangular
from scipy.special import gammaln, logsumexp

from .errors import NumericalError
from .world import ObservationSet, as_generator

ASSIGNMENT_OWNERS = ("speaker_view", "listener_view", "shared")

CHECKPOINT_SCHEMA_VERSION = 1


def _spd_cholesky(matrix: np.ndarray, what: str) -> np.ndarray:
    """Lower Cholesky factor, or NumericalError if not SPD."""
    sym_err = np.abs(matrix - matrix.T).max(initial=0.0)
    if sym_err > 1e-9:
        raise NumericalError(f"{what} is not symmetric (max asymmetry {sym_err:.3e})")
    try:
        return cholesky((matrix + matrix.T) / 2.0, lower=True)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"{what} is not positive definite") from exc


@dataclass(frozen=True)
class Hyperparams:
    """NIW prior shared by every sign, plus the sign inventory size."""

    prior_mean: np.ndarray  # (obs_dim,)
    prior_scale: float  # kappa0, pseudo-count for the mean
    prior_dof: float  # nu0, must exceed obs_dim - 1
    prior_scatter: np.ndarray  # psi0, (obs_dim, obs_dim) SPD
    n_signs: int

    def __post_init__(self):
        object.__setattr__(
            self, "prior_mean", np.asarray(self.prior_mean, dtype=float).reshape(-1)
        )
        object.__setattr__(
            self, "prior_scatter", np.asarray(self.prior_scatter, dtype=float)
        )
        d = self.prior_mean.shape[0]
        if not np.all(np.isfinite(self.prior_mean)):
            raise ValueError("prior_mean must be finite")
        if self.prior_scale <= 0:
            raise ValueError("prior_scale (kappa0) must be > 0")
        if self.prior_dof <= d - 1:
            raise ValueError(f"prior_dof (nu0) must exceed obs_dim - 1 = {d - 1}")
        if self.prior_scatter.shape != (d, d):
            raise ValueError("prior_scatter must be obs_dim x obs_dim")
        _spd_cholesky(self.prior_scatter, "prior_scatter")
        if self.n_signs < 1:
            raise ValueError("n_signs must be >= 1")

    @property
    def obs_dim(self) -> int:
        return self.prior_mean.shape[0]

    def to_dict(self) -> dict:
        return {
            "prior_mean": self.prior_mean.tolist(),
            "prior_scale": self.prior_scale,
            "prior_dof": self.prior_dof,
            "prior_scatter": self.prior_scatter.tolist(),
            "n_signs": self.n_signs,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Hyperparams":
        return cls(
            prior_mean=np.array(d["prior_mean"], dtype=float),
            prior_scale=float(d["prior_scale"]),
            prior_dof=float(d["prior_dof"]),
            prior_scatter=np.array(d["prior_scatter"], dtype=float),
            n_signs=int(d["n_signs"]),
        )


@dataclass
class NIWPosterior:
    """Posterior NIW parameters for one sign, with the predictive precomputed.

    The Student-t decomposition (Cholesky of the predictive scale, log
    normalizer) is built once here so that density evaluations inside the
    naming game are cheap triangular solves.
    """

    mean: np.ndarray
    scale: float  # kappa_n
    dof: float  # nu_n
    scatter: np.ndarray  # psi_n
    n_obs: int = 0

    t_dof: float = field(init=False, repr=False)
    _t_chol: np.ndarray = field(init=False, repr=False)
    _t_lognorm: float = field(init=False, repr=False)

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float).reshape(-1)
        self.scatter = np.asarray(self.scatter, dtype=float)
        d = self.mean.shape[0]
        if self.scale <= 0:
            raise NumericalError("posterior scale (kappa) must be > 0")
        if self.dof <= d - 1:
            raise NumericalError("posterior dof (nu) must exceed obs_dim - 1")
        t_dof = self.dof - d + 1.0
        t_scale = self.scatter * (self.scale + 1.0) / (self.scale * t_dof)
        chol = _spd_cholesky(t_scale, "predictive scale")
        logdet = 2.0 * np.sum(np.log(np.diag(chol)))
        self.t_dof = t_dof
        self._t_chol = chol
        self._t_lognorm = (
            gammaln((t_dof + d) / 2.0)
            - gammaln(t_dof / 2.0)
            - 0.5 * d * np.log(t_dof * np.pi)
            - 0.5 * logdet
        )

    @property
    def obs_dim(self) -> int:
        return self.mean.shape[0]

    def predictive_logdensity(self, x: np.ndarray) -> float:
        """Log density of the Student-t posterior predictive at x."""
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.shape[0] != self.obs_dim:
            raise ValueError(
                f"observation dim {x.shape[0]} does not match posterior dim {self.obs_dim}"
            )
        y = solve_triangular(self._t_chol, x - self.mean, lower=True)
        q = float(y @ y)
        d = self.obs_dim
        return float(self._t_lognorm - 0.5 * (self.t_dof + d) * np.log1p(q / self.t_dof))

    @classmethod
    def from_prior(cls, hyper: Hyperparams) -> "NIWPosterior":
        return cls(
            mean=hyper.prior_mean.copy(),
            scale=hyper.prior_scale,
            dof=hyper.prior_dof,
            scatter=hyper.prior_scatter.copy(),
            n_obs=0,
        )

    @classmethod
    def fit(cls, hyper: Hyperparams, data: np.ndarray) -> "NIWPosterior":
        """Batch conjugate update of the prior with the rows of data."""
        data = np.asarray(data, dtype=float)
        if data.ndim == 1:
            data = data.reshape(1, -1)
        if data.size == 0:
            return cls.from_prior(hyper)
        n, d = data.shape
        if d != hyper.obs_dim:
            raise ValueError("data dim does not match prior dim")
        xbar = data.mean(axis=0)
        centered = data - xbar
        scatter_data = centered.T @ centered
        kappa_n = hyper.prior_scale + n
        nu_n = hyper.prior_dof + n
        mu_n = (hyper.prior_scale * hyper.prior_mean + n * xbar) / kappa_n
        dev = (xbar - hyper.prior_mean).reshape(-1, 1)
        psi_n = (
            hyper.prior_scatter
            + scatter_data
            + (hyper.prior_scale * n / kappa_n) * (dev @ dev.T)
        )
        return cls(mean=mu_n, scale=kappa_n, dof=nu_n, scatter=psi_n, n_obs=n)

    def to_dict(self) -> dict:
        return {
            "mean": self.mean.tolist(),
            "scale": self.scale,
            "dof": self.dof,
            "scatter": self.scatter.tolist(),
            "n_obs": self.n_obs,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NIWPosterior":
        return cls(
            mean=np.array(d["mean"], dtype=float),
            scale=float(d["scale"]),
            dof=float(d["dof"]),
            scatter=np.array(d["scatter"], dtype=float),
            n_obs=int(d["n_obs"]),
        )


@dataclass
class SignAssignment:
    """A per-stimulus sign labeling and whose view it represents."""

    signs: np.ndarray
    owner: str = "shared"

    def __post_init__(self):
        self.signs = np.asarray(self.signs, dtype=int)
        if self.signs.ndim != 1:
            raise ValueError("signs must be a 1-d index array")
        if self.signs.size and self.signs.min() < 0:
            raise ValueError("sign indices must be nonnegative")
        if self.owner not in ASSIGNMENT_OWNERS:
            raise ValueError(f"owner must be one of {ASSIGNMENT_OWNERS}")

    def __len__(self) -> int:
        return self.signs.shape[0]


@dataclass
class AgentState:
    """One agent: NIW posterior per sign plus its current sign beliefs."""

    agent_id: int
    hyper: Hyperparams
    posterior_per_sign: list
    assignments: np.ndarray

    def __post_init__(self):
        self.assignments = np.asarray(self.assignments, dtype=int)
        if len(self.posterior_per_sign) != self.hyper.n_signs:
            raise ValueError("need exactly one posterior per sign")
        if self.assignments.size and (
            self.assignments.min() < 0 or self.assignments.max() >= self.hyper.n_signs
        ):
            raise ValueError("assignments must index signs")

    @property
    def n_signs(self) -> int:
        return self.hyper.n_signs

    @property
    def n_stimuli(self) -> int:
        return self.assignments.shape[0]


def _obs_matrix(observations) -> np.ndarray:
    if isinstance(observations, ObservationSet):
        return observations.observations
    return np.asarray(observations, dtype=float)


def _obs_mask(observations, n: int) -> np.ndarray:
    if isinstance(observations, ObservationSet):
        return observations.mask
    return np.ones(n, dtype=bool)


def _fit_per_sign(hyper: Hyperparams, obs, assignments: np.ndarray) -> list:
    data = _obs_matrix(obs)
    mask = _obs_mask(obs, data.shape[0])
    posteriors = []
    for s in range(hyper.n_signs):
        rows = data[mask & (assignments == s)]
        posteriors.append(NIWPosterior.fit(hyper, rows))
    return posteriors


def init_agent(hyper: Hyperparams, observations: ObservationSet, seed) -> AgentState:
    """Uniform random sign assignments, posteriors fit to those assignments."""
    data = _obs_matrix(observations)
    if data.shape[1] != hyper.obs_dim:
        raise ValueError("observation dim does not match prior dim")
    rng = as_generator(seed)
    assignments = rng.integers(0, hyper.n_signs, size=data.shape[0])
    agent_id = observations.agent_id if isinstance(observations, ObservationSet) else 0
    return AgentState(
        agent_id=agent_id,
        hyper=hyper,
        posterior_per_sign=_fit_per_sign(hyper, observations, assignments),
        assignments=assignments,
    )


def posterior_predictive_logdensity(state: AgentState, obs: np.ndarray, sign: int) -> float:
    """Log p(obs | sign) under the agent's NIW posterior for that sign."""
    if not 0 <= sign < state.n_signs:
        raise ValueError(f"sign {sign} out of range for {state.n_signs} signs")
    return state.posterior_per_sign[sign].predictive_logdensity(obs)


def predictive_sign_logweights(
    state: AgentState, obs: np.ndarray, sign_log_prior=None
) -> np.ndarray:
    """Unnormalized log posterior over signs for one observation vector.

    sign_log_prior maps a sign index to a log prior weight; default uniform.
    """
    logw = np.array(
        [
            state.posterior_per_sign[s].predictive_logdensity(obs)
            for s in range(state.n_signs)
        ]
    )
    if sign_log_prior is not None:
        logw = logw + np.array([sign_log_prior(s) for s in range(state.n_signs)])
    return logw


def sample_sign_from_logweights(logw: np.ndarray, temperature: float, rng) -> int:
    """Draw a sign index with probability softmax(logw / temperature).

    temperature=0 means the argmax limit; ties go to the lowest index. A fully
    degenerate weight vector (all -inf) raises NumericalError.
    """
    logw = np.asarray(logw, dtype=float)
    if temperature < 0:
        raise ValueError("temperature must be >= 0")
    if np.all(np.isneginf(logw)):
        raise NumericalError("all sign predictive densities are zero")
    if temperature == 0:
        return int(np.argmax(logw))
    scaled = logw / temperature
    p = np.exp(scaled - logsumexp(scaled))
    p = p / p.sum()
    return int(as_generator(rng).choice(logw.shape[0], p=p))


def sample_sign_posterior(
    state: AgentState,
    observations,
    stimulus: int,
    temperature: float = 1.0,
    rng=None,
    sign_log_prior=None,
) -> int:
    """Sample a sign for one stimulus from the agent's own sign posterior.

    observations is the agent's ObservationSet (or a plain n x d matrix); the
    relevant row is looked up by stimulus index. With the default uniform sign
    prior and temperature 1 this is the exact posterior over signs.
    """
    data = _obs_matrix(observations)
    if not 0 <= stimulus < data.shape[0]:
        raise ValueError(f"stimulus {stimulus} out of range")
    logw = predictive_sign_logweights(state, data[stimulus], sign_log_prior)
    return sample_sign_from_logweights(logw, temperature, rng)


def gibbs_update_params(
    state: AgentState, observations, assignments
) -> AgentState:
    """Conjugate refresh: refit every sign's posterior to its assigned rows.

    Returns a new AgentState carrying the given assignments; the input state
    is not modified.
    """
    if isinstance(assignments, SignAssignment):
        signs = assignments.signs
    else:
        signs = np.asarray(assignments, dtype=int)
    data = _obs_matrix(observations)
    if signs.shape[0] != data.shape[0]:
        raise ValueError("assignment length must match observation rows")
    if signs.size and signs.max() >= state.n_signs:
        raise ValueError("assignment uses a sign outside the inventory")
    return AgentState(
        agent_id=state.agent_id,
        hyper=state.hyper,
        posterior_per_sign=_fit_per_sign(state.hyper, observations, signs),
        assignments=signs.copy(),
    )


# ---------------------------------------------------------------------------
# Checkpoint IO
# ---------------------------------------------------------------------------

def save_agent_json(state: AgentState, path) -> None:
    payload = {
        "schema_version": CHECKPOINT_SCHEMA_VERSION,
        "agent_id": state.agent_id,
        "hyper": state.hyper.to_dict(),
        "posterior_per_sign": [p.to_dict() for p in state.posterior_per_sign],
        "assignments": state.assignments.tolist(),
    }
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def load_agent_json(path) -> AgentState:
    payload = json.loads(Path(path).read_text())
    version = payload.get("schema_version")
    if version != CHECKPOINT_SCHEMA_VERSION:
        raise ValueError(f"unsupported checkpoint schema version {version!r}")
    return AgentState(
        agent_id=int(payload["agent_id"]),
        hyper=Hyperparams.from_dict(payload["hyper"]),
        posterior_per_sign=[
            NIWPosterior.from_dict(d) for d in payload["posterior_per_sign"]
        ],
        assignments=np.array(payload["assignments"], dtype=int),
    )
