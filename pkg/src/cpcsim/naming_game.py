"""Sign coordination protocols between Bayesian agents.

The central mode is a Metropolis-Hastings naming game: the speaker proposes a
sign for a jointly attended stimulus from its own sign posterior, the listener
accepts with probability min(1, ratio of its own predictive densities). With
frozen parameters this chain is a valid independence-proposal MH sampler whose
stationary law is the product of the two agents' sign posteriors; with the
per-pass conjugate parameter refresh it becomes the full coordination dynamic.

Baseline modes share the same loop shape: always_accept removes the rejection
test, no_communication removes the other agent entirely (each agent resamples
from its own posterior), and oracle_gibbs replaces the protocol with
centralized collapsed Gibbs on the pooled model, an upper bound no
decentralized protocol should beat.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .agent import (
    AgentState,
    NIWPosterior,
    SignAssignment,
    gibbs_update_params,
    posterior_predictive_logdensity,
    predictive_sign_logweights,
    sample_sign_from_logweights,
)
from .errors import NumericalError
from .world import ObservationSet, World, as_generator

GAME_MODES = ("mh", "always_accept", "no_communication", "oracle_gibbs")
ROLE_SCHEDULES = ("alternate_each_round", "random")

# speaker_id/listener_id value used for steps without a dyad (self-resampling
# in no_communication, the centralized sampler in oracle_gibbs)
NO_AGENT = -1


@dataclass(frozen=True)
class GameConfig:
    """Protocol settings for one game run.

    update_params=False freezes every agent's per-sign posteriors, which turns
    the mh mode into a plain MH sampler with a fixed target; used by the
    chain-validity tests.
    """

    n_rounds: int
    mode: str = "mh"
    temperature: float = 1.0
    role_schedule: str = "alternate_each_round"
    seed: int = 0
    update_params: bool = True

    def __post_init__(self):
        if self.n_rounds < 1:
            raise ValueError("n_rounds must be >= 1")
        if self.mode not in GAME_MODES:
            raise ValueError(f"mode must be one of {GAME_MODES}")
        if self.temperature <= 0:
            raise ValueError("temperature must be > 0")
        if self.role_schedule not in ROLE_SCHEDULES:
            raise ValueError(f"role_schedule must be one of {ROLE_SCHEDULES}")
        if self.seed < 0:
            raise ValueError("seed must be a nonnegative integer")

    def to_dict(self) -> dict:
        return {
            "n_rounds": self.n_rounds,
            "mode": self.mode,
            "temperature": self.temperature,
            "role_schedule": self.role_schedule,
            "seed": self.seed,
            "update_params": self.update_params,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GameConfig":
        return cls(
            n_rounds=int(d["n_rounds"]),
            mode=str(d.get("mode", "mh")),
            temperature=float(d.get("temperature", 1.0)),
            role_schedule=str(d.get("role_schedule", "alternate_each_round")),
            seed=int(d.get("seed", 0)),
            update_params=bool(d.get("update_params", True)),
        )


@dataclass
class StepRecord:
    """One communicative (or resampling) event."""

    round: int
    speaker_id: int
    listener_id: int
    stimulus: int
    proposed_sign: int
    accepted: bool
    acceptance_prob: float


@dataclass
class GameTrace:
    """Everything observable about one game run."""

    mode: str
    seed: int
    steps: list = field(default_factory=list)
    final_assignments: list = field(default_factory=list)
    acceptance_rate_curve: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def n_steps(self) -> int:
        return len(self.steps)

    def acceptance_rate(self) -> float:
        """Overall fraction of accepted steps; NaN if no steps occurred."""
        if not self.steps:
            return float("nan")
        return float(np.mean([s.accepted for s in self.steps]))


def mh_step(
    speaker: AgentState,
    listener: AgentState,
    obs_speaker: np.ndarray,
    obs_listener: np.ndarray,
    stimulus: int,
    rng,
    temperature: float = 1.0,
    sign_log_prior=None,
) -> tuple:
    """One naming-game exchange about one stimulus.

    The speaker samples a proposal w* from softmax of its own predictive log
    densities at obs_speaker (divided by temperature). The listener compares
    its own predictive density of obs_listener under w* against its currently
    assigned sign and accepts with probability r = min(1, ratio). On
    acceptance the listener's assignment for the stimulus is updated in place;
    this is the one deliberately mutating operation in the package, because
    the chain's correctness depends on later steps seeing the update.

    Returns (accepted, proposed sign, r).
    """
    if speaker.n_signs != listener.n_signs:
        raise ValueError("speaker and listener must share the sign inventory")
    if not 0 <= stimulus < listener.assignments.shape[0]:
        raise ValueError(f"stimulus {stimulus} out of range")
    rng = as_generator(rng)

    logw = predictive_sign_logweights(speaker, obs_speaker, sign_log_prior)
    proposed = sample_sign_from_logweights(logw, temperature, rng)

    current = int(listener.assignments[stimulus])
    log_new = posterior_predictive_logdensity(listener, obs_listener, proposed)
    log_cur = posterior_predictive_logdensity(listener, obs_listener, current)
    if math.isinf(log_new) and math.isinf(log_cur) and log_new < 0 and log_cur < 0:
        raise NumericalError("listener predictive is degenerate for both signs")
    if log_new >= log_cur:
        r = 1.0
    else:
        r = float(np.exp(log_new - log_cur))

    accepted = bool(rng.uniform() < r) if r < 1.0 else True
    if accepted:
        listener.assignments[stimulus] = proposed
    return accepted, proposed, r


def _copy_agent(agent: AgentState) -> AgentState:
    return AgentState(
        agent_id=agent.agent_id,
        hyper=agent.hyper,
        posterior_per_sign=list(agent.posterior_per_sign),
        assignments=agent.assignments.copy(),
    )


def _roles_for_round(round_idx: int, n_agents: int, schedule: str, rng) -> tuple:
    if schedule == "random":
        pair = rng.choice(n_agents, size=2, replace=False)
        return int(pair[0]), int(pair[1])
    # alternate_each_round: the speaker slot cycles through agents, the next
    # agent listens; for two agents this is strict turn-taking.
    speaker = round_idx % n_agents
    listener = (round_idx + 1) % n_agents
    return speaker, listener


def _joint_stimuli(obs_a: ObservationSet, obs_b: ObservationSet) -> np.ndarray:
    return np.flatnonzero(obs_a.mask & obs_b.mask)


def _collapsed_gibbs_pass(
    agents: list,
    observations: list,
    shared: np.ndarray,
    order: np.ndarray,
    rng,
) -> None:
    """One sweep of centralized collapsed Gibbs over the shared assignments.

    For each stimulus, each candidate sign is scored by the sum over agents of
    the leave-one-out posterior predictive of that agent's observation; the
    posterior is refit from scratch per candidate, which is affordable at the
    scales this package targets and keeps the sampler exactly collapsed.
    """
    n_signs = agents[0].n_signs
    for i in order:
        logw = np.zeros(n_signs)
        for k, obs in enumerate(observations):
            if not obs.mask[i]:
                continue
            data = obs.observations
            rest = obs.mask.copy()
            rest[i] = False
            for s in range(n_signs):
                rows = data[rest & (shared == s)]
                post = NIWPosterior.fit(agents[k].hyper, rows)
                logw[s] += post.predictive_logdensity(data[i])
        shared[i] = sample_sign_from_logweights(logw, 1.0, rng)


def run_game(
    world: World,
    agents: list,
    observations: list,
    config: GameConfig,
    on_round=None,
) -> tuple:
    """Run a full game and return (final agents, GameTrace).

    Per round: stimuli are visited in a fresh seeded random order; each visit
    applies the mode's step (an mh exchange, an unconditional adoption, a
    self-resample, or a collapsed-Gibbs draw); after the full pass every agent
    refits its per-sign posteriors to its current assignments (skipped when
    config.update_params is false). Input agents are not modified.

    on_round, if given, is called as on_round(round_index, agents) with
    round_index 0 before any round and then after each completed round; the
    experiment runner uses this to record metrics mid-run.
    """
    if len(agents) != len(observations):
        raise ValueError("need one ObservationSet per agent")
    if not agents:
        raise ValueError("need at least one agent")
    if config.mode in ("mh", "always_accept", "oracle_gibbs") and len(agents) < 2:
        raise ValueError(f"mode {config.mode!r} requires at least 2 agents")
    n_stimuli = observations[0].n_stimuli
    for obs in observations:
        if obs.n_stimuli != n_stimuli:
            raise ValueError("all observation sets must cover the same stimuli")
    for a, obs in zip(agents, observations):
        if a.n_stimuli != n_stimuli:
            raise ValueError("agent assignment length must match stimuli")
        if obs.observations.shape[1] != a.hyper.obs_dim:
            raise ValueError("observation dim must match agent prior dim")

    rng = np.random.default_rng(config.seed)
    agents = [_copy_agent(a) for a in agents]
    trace = GameTrace(mode=config.mode, seed=config.seed)

    if on_round is not None:
        on_round(0, agents)

    shared = agents[0].assignments.copy()  # oracle_gibbs state
    curve = []
    accepted_total = 0

    for rnd in range(1, config.n_rounds + 1):
        if config.mode in ("mh", "always_accept"):
            sp, li = _roles_for_round(rnd - 1, len(agents), config.role_schedule, rng)
            stimuli = _joint_stimuli(observations[sp], observations[li])
            order = rng.permutation(stimuli)
            for i in order:
                if config.mode == "mh":
                    acc, w_star, r = mh_step(
                        agents[sp],
                        agents[li],
                        observations[sp].observations[i],
                        observations[li].observations[i],
                        int(i),
                        rng,
                        temperature=config.temperature,
                    )
                else:
                    logw = predictive_sign_logweights(
                        agents[sp], observations[sp].observations[i]
                    )
                    w_star = sample_sign_from_logweights(logw, config.temperature, rng)
                    agents[li].assignments[i] = w_star
                    acc, r = True, 1.0
                trace.steps.append(
                    StepRecord(rnd, sp, li, int(i), int(w_star), acc, r)
                )
                accepted_total += int(acc)
        elif config.mode == "no_communication":
            for k, agent in enumerate(agents):
                stimuli = np.flatnonzero(observations[k].mask)
                order = rng.permutation(stimuli)
                for i in order:
                    logw = predictive_sign_logweights(
                        agent, observations[k].observations[i]
                    )
                    w_star = sample_sign_from_logweights(logw, config.temperature, rng)
                    agent.assignments[i] = w_star
                    trace.steps.append(
                        StepRecord(rnd, NO_AGENT, k, int(i), int(w_star), True, 1.0)
                    )
                    accepted_total += 1
        else:  # oracle_gibbs
            stimuli = np.flatnonzero(
                np.any([obs.mask for obs in observations], axis=0)
            )
            order = rng.permutation(stimuli)
            _collapsed_gibbs_pass(agents, observations, shared, order, rng)
            for k in range(len(agents)):
                agents[k].assignments = shared.copy()
            for i in order:
                trace.steps.append(
                    StepRecord(rnd, NO_AGENT, NO_AGENT, int(i), int(shared[i]), True, 1.0)
                )
                accepted_total += 1

        if config.update_params:
            for k in range(len(agents)):
                agents[k] = gibbs_update_params(
                    agents[k], observations[k], agents[k].assignments
                )

        curve.append(accepted_total / max(1, len(trace.steps)))
        if on_round is not None:
            on_round(rnd, agents)

    trace.acceptance_rate_curve = np.array(curve)
    if config.mode == "oracle_gibbs":
        trace.final_assignments = [
            SignAssignment(signs=a.assignments.copy(), owner="shared") for a in agents
        ]
    else:
        last_sp, last_li = None, None
        for s in reversed(trace.steps):
            if s.speaker_id != NO_AGENT:
                last_sp, last_li = s.speaker_id, s.listener_id
                break
        trace.final_assignments = [
            SignAssignment(
                signs=a.assignments.copy(),
                owner="speaker_view" if a.agent_id == last_sp else "listener_view",
            )
            for a in agents
        ]
    return agents, trace


# ---------------------------------------------------------------------------
# Trace persistence
# ---------------------------------------------------------------------------

def trace_basename(mode: str, seed: int) -> str:
    return f"trace_{mode}_seed{seed}"


def save_trace_csv(trace: GameTrace, path) -> None:
    """One row per step."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(
            [
                "round",
                "speaker_id",
                "listener_id",
                "stimulus",
                "proposed_sign",
                "accepted",
                "acceptance_prob",
            ]
        )
        for s in trace.steps:
            w.writerow(
                [
                    s.round,
                    s.speaker_id,
                    s.listener_id,
                    s.stimulus,
                    s.proposed_sign,
                    int(s.accepted),
                    repr(float(s.acceptance_prob)),
                ]
            )


def load_trace_csv(path) -> list:
    steps = []
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            steps.append(
                StepRecord(
                    round=int(row["round"]),
                    speaker_id=int(row["speaker_id"]),
                    listener_id=int(row["listener_id"]),
                    stimulus=int(row["stimulus"]),
                    proposed_sign=int(row["proposed_sign"]),
                    accepted=bool(int(row["accepted"])),
                    acceptance_prob=float(row["acceptance_prob"]),
                )
            )
    return steps


def save_trace_json(trace: GameTrace, path) -> None:
    """Summary without per-step detail: finals plus the acceptance curve."""
    payload = {
        "schema_version": 1,
        "mode": trace.mode,
        "seed": trace.seed,
        "n_steps": trace.n_steps,
        "acceptance_rate_curve": [float(v) for v in trace.acceptance_rate_curve],
        "final_assignments": [
            {"owner": a.owner, "signs": a.signs.tolist()}
            for a in trace.final_assignments
        ],
    }
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
