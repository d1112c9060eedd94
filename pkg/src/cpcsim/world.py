"""Synthetic shared environments and per-agent observation channels.

A world is a set of category prototypes plus stimuli pinned exactly to their
prototype (noise lives in the observation channel, not the world). Each agent
sees the stimuli through its own modality transform, restricted to isometries
so that relational structure is preserved while coordinates may differ, plus
independent Gaussian sensor noise.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

ORTHOGONALITY_TOL = 1e-9

TRANSFORM_KINDS = ("identity", "orthogonal_rotation", "coordinate_permutation")


def as_generator(rng) -> np.random.Generator:
    """Coerce an int seed, a seed sequence, or a Generator into a Generator."""
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, (int, np.integer, list, tuple, np.random.SeedSequence)):
        return np.random.default_rng(rng)
    raise TypeError(f"expected a seed or numpy Generator, got {type(rng).__name__}")


@dataclass(frozen=True)
class WorldConfig:
    """Parameters of a synthetic world and its observation channels."""

    n_categories: int
    n_stimuli: int
    obs_dim: int
    prototype_spread: float
    obs_noise: float
    n_agents: int
    seed: int

    def __post_init__(self):
        if self.n_categories < 1:
            raise ValueError("n_categories must be >= 1")
        if self.n_stimuli < self.n_categories:
            raise ValueError("n_stimuli must be >= n_categories")
        if self.obs_dim < 1:
            raise ValueError("obs_dim must be >= 1")
        if self.prototype_spread < 0 or self.obs_noise < 0:
            raise ValueError("spread and noise stds must be >= 0")
        if self.n_agents < 1:
            raise ValueError("n_agents must be >= 1")
        if self.seed < 0:
            raise ValueError("seed must be a nonnegative integer")

    def to_dict(self) -> dict:
        return {
            "n_categories": self.n_categories,
            "n_stimuli": self.n_stimuli,
            "obs_dim": self.obs_dim,
            "prototype_spread": self.prototype_spread,
            "obs_noise": self.obs_noise,
            "n_agents": self.n_agents,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "WorldConfig":
        return cls(
            n_categories=int(d["n_categories"]),
            n_stimuli=int(d["n_stimuli"]),
            obs_dim=int(d["obs_dim"]),
            prototype_spread=float(d["prototype_spread"]),
            obs_noise=float(d["obs_noise"]),
            n_agents=int(d["n_agents"]),
            seed=int(d["seed"]),
        )


@dataclass
class World:
    """Ground truth: category prototypes, stimulus labels, noise-free stimuli."""

    prototypes: np.ndarray  # (n_categories, obs_dim)
    true_labels: np.ndarray  # (n_stimuli,) ints
    stimuli: np.ndarray  # (n_stimuli, obs_dim)

    def __post_init__(self):
        self.prototypes = np.asarray(self.prototypes, dtype=float)
        self.true_labels = np.asarray(self.true_labels, dtype=int)
        self.stimuli = np.asarray(self.stimuli, dtype=float)
        if self.stimuli.shape[0] != self.true_labels.shape[0]:
            raise ValueError("stimuli row count must match true_labels length")
        if self.true_labels.min(initial=0) < 0 or (
            self.true_labels.size
            and self.true_labels.max() >= self.prototypes.shape[0]
        ):
            raise ValueError("every true_label must index a prototype row")

    @property
    def n_stimuli(self) -> int:
        return self.stimuli.shape[0]

    @property
    def obs_dim(self) -> int:
        return self.stimuli.shape[1]


@dataclass
class ObservationSet:
    """One agent's noisy view of all stimuli.

    ``mask`` marks which stimuli the agent actually observed; it defaults to
    all-observe. Downstream consumers (the naming game) only discuss stimuli
    jointly observed by the participants.
    """

    agent_id: int
    observations: np.ndarray  # (n_stimuli, obs_dim)
    mask: np.ndarray = None  # (n_stimuli,) bools

    def __post_init__(self):
        self.observations = np.asarray(self.observations, dtype=float)
        if not np.all(np.isfinite(self.observations)):
            raise ValueError("observations must be finite")
        if self.mask is None:
            self.mask = np.ones(self.observations.shape[0], dtype=bool)
        else:
            self.mask = np.asarray(self.mask, dtype=bool)
            if self.mask.shape != (self.observations.shape[0],):
                raise ValueError("mask length must match observation rows")

    @property
    def n_stimuli(self) -> int:
        return self.observations.shape[0]


@dataclass
class ModalityTransform:
    """A distance-preserving change of observation coordinates."""

    kind: str
    matrix: np.ndarray  # (obs_dim, obs_dim), orthogonal

    def __post_init__(self):
        if self.kind not in TRANSFORM_KINDS:
            raise ValueError(f"kind must be one of {TRANSFORM_KINDS}")
        self.matrix = np.asarray(self.matrix, dtype=float)
        d = self.matrix.shape[0]
        if self.matrix.shape != (d, d):
            raise ValueError("transform matrix must be square")
        err = np.abs(self.matrix @ self.matrix.T - np.eye(d)).max()
        if err > ORTHOGONALITY_TOL:
            raise ValueError(
                f"transform matrix is not orthogonal (max deviation {err:.3e})"
            )

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def identity(cls, dim: int) -> "ModalityTransform":
        return cls("identity", np.eye(dim))

    @classmethod
    def orthogonal_rotation(cls, dim: int, rng) -> "ModalityTransform":
        """Haar-random orthogonal matrix via QR of a Gaussian matrix."""
        g = as_generator(rng)
        a = g.normal(size=(dim, dim))
        q, r = np.linalg.qr(a)
        # Fix the sign convention so the distribution is Haar, not QR-biased.
        q = q * np.sign(np.diag(r))
        return cls("orthogonal_rotation", q)

    @classmethod
    def coordinate_permutation(cls, dim: int, rng) -> "ModalityTransform":
        g = as_generator(rng)
        perm = g.permutation(dim)
        return cls("coordinate_permutation", np.eye(dim)[perm])


def generate_world(config: WorldConfig) -> World:
    """Draw prototypes and place stimuli on them, round-robin over categories.

    Prototypes are i.i.d. zero-mean isotropic Gaussian with std
    ``prototype_spread``. Stimuli carry no noise of their own. Deterministic
    given ``config.seed``.
    """
    rng = np.random.default_rng(config.seed)
    prototypes = config.prototype_spread * rng.normal(
        size=(config.n_categories, config.obs_dim)
    )
    true_labels = np.arange(config.n_stimuli) % config.n_categories
    stimuli = prototypes[true_labels]
    return World(prototypes=prototypes, true_labels=true_labels, stimuli=stimuli.copy())


def observe(
    world: World,
    agent_id: int,
    transform: ModalityTransform,
    noise_std: float,
    seed,
    mask: np.ndarray | None = None,
) -> ObservationSet:
    """Produce one agent's observation channel.

    observations = stimuli @ transform.T + Gaussian(0, noise_std). The noise
    stream is seeded by (seed, agent_id) so different agents see independent
    noise under a shared base seed.
    """
    if transform.dim != world.obs_dim:
        raise ValueError(
            f"transform dim {transform.dim} does not match world obs_dim {world.obs_dim}"
        )
    if noise_std < 0:
        raise ValueError("noise_std must be >= 0")
    if isinstance(seed, np.random.Generator):
        rng = seed
    else:
        rng = np.random.default_rng([int(seed), int(agent_id)])
    obs = world.stimuli @ transform.matrix.T
    if noise_std > 0:
        obs = obs + noise_std * rng.normal(size=obs.shape)
    return ObservationSet(agent_id=agent_id, observations=obs, mask=mask)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def save_world_csv(world: World, path) -> None:
    """Write prototypes and stimuli, one row each, lossless round trip."""
    path = Path(path)
    d = world.obs_dim
    header = ["kind", "label"] + [f"x{i}" for i in range(d)]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        # repr of the built-in float round-trips exactly; numpy scalars would
        # serialize as np.float64(...) and not parse back
        for c in range(world.prototypes.shape[0]):
            w.writerow(
                ["prototype", c] + [repr(float(v)) for v in world.prototypes[c]]
            )
        for s in range(world.n_stimuli):
            w.writerow(
                ["stimulus", int(world.true_labels[s])]
                + [repr(float(v)) for v in world.stimuli[s]]
            )


def load_world_csv(path) -> World:
    path = Path(path)
    protos, labels, stims = [], [], []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        d = len(header) - 2
        for row in reader:
            vec = [float(v) for v in row[2 : 2 + d]]
            if row[0] == "prototype":
                protos.append(vec)
            elif row[0] == "stimulus":
                labels.append(int(row[1]))
                stims.append(vec)
            else:
                raise ValueError(f"unknown row kind {row[0]!r}")
    return World(
        prototypes=np.array(protos, dtype=float),
        true_labels=np.array(labels, dtype=int),
        stimuli=np.array(stims, dtype=float),
    )


def save_observations_csv(obs: ObservationSet, path) -> None:
    path = Path(path)
    d = obs.observations.shape[1]
    header = ["agent_id", "observed"] + [f"x{i}" for i in range(d)]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for s in range(obs.n_stimuli):
            w.writerow(
                [obs.agent_id, int(obs.mask[s])]
                + [repr(float(v)) for v in obs.observations[s]]
            )


def load_observations_csv(path) -> ObservationSet:
    path = Path(path)
    rows, mask, agent_ids = [], [], []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        d = len(header) - 2
        for row in reader:
            agent_ids.append(int(row[0]))
            mask.append(bool(int(row[1])))
            rows.append([float(v) for v in row[2 : 2 + d]])
    if len(set(agent_ids)) > 1:
        raise ValueError("observation CSV mixes agent ids")
    return ObservationSet(
        agent_id=agent_ids[0] if agent_ids else 0,
        observations=np.array(rows, dtype=float),
        mask=np.array(mask, dtype=bool),
    )


def write_run_manifest(path, world_config: WorldConfig, extra: dict | None = None) -> None:
    """JSON manifest embedding the full world configuration."""
    payload = {"schema_version": 1, "world_config": world_config.to_dict()}
    if extra:
        payload.update(extra)
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def read_run_manifest(path) -> dict:
    payload = json.loads(Path(path).read_text())
    payload["world_config"] = WorldConfig.from_dict(payload["world_config"])
    return payload
