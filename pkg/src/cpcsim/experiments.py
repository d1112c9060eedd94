"""Config-driven experiment runner.

One experiment = one world family x a set of game conditions x several seeds.
The design is paired: for a given seed index, every condition sees the exact
same world, the same per-agent observations, and the same initial agents, so
condition contrasts are within-seed comparisons. Metrics are recorded at the
rounds listed in measure_schedule and written as a long-format CSV whose
bytes are a pure function of the config.
"""

from __future__ import annotations

import csv
import itertools
import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.special import logsumexp
from scipy.stats import mannwhitneyu

from ._version import __version__
from .agent import (
    AgentState,
    Hyperparams,
    init_agent,
    predictive_sign_logweights,
)
from .alignment import (
    categorization_agreement,
    compute_rdm,
    gw_align,
    matching_accuracy,
    rsa,
)
from .errors import NumericalError
from .naming_game import (
    GAME_MODES,
    GameConfig,
    run_game,
    save_trace_csv,
    save_trace_json,
    trace_basename,
)
from .world import (
    TRANSFORM_KINDS,
    ModalityTransform,
    WorldConfig,
    generate_world,
    observe,
)

METRIC_NAMES = (
    "ari",
    "kappa",
    "rsa_centroid",
    "rsa_profile",
    "gw_matching_accuracy",
    "gw_distance",
    "acceptance_rate",
)

_GW_METRICS = ("gw_matching_accuracy", "gw_distance")


def derive_seed(entropy) -> int:
    """Deterministic 64-bit child seed from a list of integers."""
    return int(np.random.SeedSequence(entropy).generate_state(1)[0])


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce one experiment byte-for-byte."""

    world: WorldConfig
    hyper: Hyperparams
    game: GameConfig
    conditions: tuple = ("mh",)
    n_seeds: int = 1
    epsilon: float = None  # None = scale-adaptive GW default
    output_dir: str = None
    measure_schedule: tuple = None  # None = final round only
    metrics: tuple = METRIC_NAMES
    transforms: tuple = ("identity",)

    def __post_init__(self):
        object.__setattr__(self, "conditions", tuple(self.conditions))
        object.__setattr__(
            self,
            "measure_schedule",
            tuple(self.measure_schedule)
            if self.measure_schedule is not None
            else (self.game.n_rounds,),
        )
        object.__setattr__(self, "metrics", tuple(self.metrics))
        object.__setattr__(self, "transforms", tuple(self.transforms))
        if self.n_seeds < 1:
            raise ValueError("n_seeds must be >= 1")
        if not self.conditions:
            raise ValueError("conditions must be non-empty")
        for c in self.conditions:
            if c not in GAME_MODES:
                raise ValueError(f"unknown condition {c!r}")
        if self.epsilon is not None and self.epsilon <= 0:
            raise ValueError("epsilon must be > 0")
        ms = self.measure_schedule
        if list(ms) != sorted(ms):
            raise ValueError("measure_schedule must be sorted")
        if ms and (ms[0] < 0 or ms[-1] > self.game.n_rounds):
            raise ValueError("measure_schedule must lie within [0, n_rounds]")
        if not ms:
            raise ValueError("measure_schedule must be non-empty")
        for m in self.metrics:
            if m not in METRIC_NAMES:
                raise ValueError(f"unknown metric {m!r}")
        if len(self.transforms) not in (1, self.world.n_agents):
            raise ValueError("transforms must list 1 kind or one per agent")
        for t in self.transforms:
            if t not in TRANSFORM_KINDS:
                raise ValueError(f"unknown transform kind {t!r}")
        if self.hyper.obs_dim != self.world.obs_dim:
            raise ValueError("hyper prior dim must match world obs_dim")

    def to_dict(self) -> dict:
        return {
            "world": self.world.to_dict(),
            "hyper": self.hyper.to_dict(),
            "game": self.game.to_dict(),
            "conditions": list(self.conditions),
            "n_seeds": self.n_seeds,
            "epsilon": self.epsilon,
            "output_dir": str(self.output_dir) if self.output_dir else None,
            "measure_schedule": list(self.measure_schedule),
            "metrics": list(self.metrics),
            "transforms": list(self.transforms),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        return cls(
            world=WorldConfig.from_dict(d["world"]),
            hyper=Hyperparams.from_dict(d["hyper"]),
            game=GameConfig.from_dict(d["game"]),
            conditions=tuple(d["conditions"]),
            n_seeds=int(d["n_seeds"]),
            epsilon=d.get("epsilon"),
            output_dir=d.get("output_dir"),
            measure_schedule=tuple(d["measure_schedule"]),
            metrics=tuple(d["metrics"]),
            transforms=tuple(d["transforms"]),
        )


def load_experiment_config(path) -> ExperimentConfig:
    """Parse a TOML config file into an ExperimentConfig.

    Sections: [world] (required), [hyper], [game] (required: n_rounds),
    [experiment]. Unspecified hyperparameters default to a unit NIW prior
    centered at the origin with twice as many signs as categories.
    """
    try:
        import tomllib
    except ModuleNotFoundError:  # Python < 3.11
        import tomli as tomllib

    raw = tomllib.loads(Path(path).read_text())
    if "world" not in raw:
        raise ValueError("config must contain a [world] section")
    if "game" not in raw:
        raise ValueError("config must contain a [game] section")

    w = raw["world"]
    world = WorldConfig(
        n_categories=int(w["n_categories"]),
        n_stimuli=int(w["n_stimuli"]),
        obs_dim=int(w["obs_dim"]),
        prototype_spread=float(w["prototype_spread"]),
        obs_noise=float(w["obs_noise"]),
        n_agents=int(w.get("n_agents", 2)),
        seed=int(w.get("seed", 0)),
    )

    h = raw.get("hyper", {})
    d = world.obs_dim
    hyper = Hyperparams(
        prior_mean=np.asarray(h.get("prior_mean", np.zeros(d)), dtype=float),
        prior_scale=float(h.get("prior_scale", 1.0)),
        prior_dof=float(h.get("prior_dof", d + 2)),
        prior_scatter=np.asarray(h.get("prior_scatter", np.eye(d)), dtype=float),
        n_signs=int(h.get("n_signs", 2 * world.n_categories)),
    )

    g = raw["game"]
    game = GameConfig(
        n_rounds=int(g["n_rounds"]),
        mode=str(g.get("mode", "mh")),
        temperature=float(g.get("temperature", 1.0)),
        role_schedule=str(g.get("role_schedule", "alternate_each_round")),
        seed=int(g.get("seed", 0)),
        update_params=bool(g.get("update_params", True)),
    )

    e = raw.get("experiment", {})
    return ExperimentConfig(
        world=world,
        hyper=hyper,
        game=game,
        conditions=tuple(e.get("conditions", [game.mode])),
        n_seeds=int(e.get("n_seeds", 1)),
        epsilon=float(e["epsilon"]) if "epsilon" in e else None,
        output_dir=e.get("output_dir"),
        measure_schedule=tuple(int(r) for r in e["measure_schedule"])
        if "measure_schedule" in e
        else None,
        metrics=tuple(e.get("metrics", METRIC_NAMES)),
        transforms=tuple(e.get("transforms", ["identity"])),
    )


@dataclass
class RunRecord:
    """All measured series of one experiment, plus the config snapshot."""

    config: ExperimentConfig
    series: dict  # (condition, seed_index) -> list of {"round": r, "metrics": {...}}
    wall_clock: float
    version: str = __version__

    def final_metrics(self) -> dict:
        """(condition, seed_index) -> metrics dict at the last measured round."""
        return {key: rows[-1]["metrics"] for key, rows in self.series.items() if rows}

    def to_dict(self) -> dict:
        nested = {}
        for (cond, seed_idx), rows in self.series.items():
            nested.setdefault(cond, {})[str(seed_idx)] = rows
        return {
            "schema_version": 1,
            "config": self.config.to_dict(),
            "series": nested,
            "wall_clock": self.wall_clock,
            "version": self.version,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunRecord":
        series = {}
        for cond, by_seed in d["series"].items():
            for seed_str, rows in by_seed.items():
                series[(cond, int(seed_str))] = rows
        return cls(
            config=ExperimentConfig.from_dict(d["config"]),
            series=series,
            wall_clock=float(d["wall_clock"]),
            version=str(d["version"]),
        )


def save_run_record(record: RunRecord, path) -> None:
    Path(path).write_text(
        json.dumps(record.to_dict(), indent=2, sort_keys=True) + "\n"
    )


def load_run_record(path) -> RunRecord:
    return RunRecord.from_dict(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------------------
# Metric computation
# ---------------------------------------------------------------------------

def _sign_profiles(agent: AgentState, observations) -> np.ndarray:
    """Per-stimulus posterior-over-signs vectors (rows sum to 1)."""
    data = observations.observations
    profiles = np.empty((data.shape[0], agent.n_signs))
    for i in range(data.shape[0]):
        logw = predictive_sign_logweights(agent, data[i])
        profiles[i] = np.exp(logw - logsumexp(logw))
    return profiles


def _centroid_rdm_pair(a: AgentState, b: AgentState):
    """RDMs over per-sign posterior means, restricted to signs both use."""
    shared = sorted(set(a.assignments.tolist()) & set(b.assignments.tolist()))
    if len(shared) < 3:
        return None
    labels = [str(s) for s in shared]
    pts_a = np.stack([a.posterior_per_sign[s].mean for s in shared])
    pts_b = np.stack([b.posterior_per_sign[s].mean for s in shared])
    try:
        return (
            compute_rdm(pts_a, "euclidean", labels),
            compute_rdm(pts_b, "euclidean", labels),
        )
    except (ValueError, NumericalError):
        return None


def _pair_metrics(
    a: AgentState,
    b: AgentState,
    obs_a,
    obs_b,
    wanted: tuple,
    epsilon,
    gw_seed: int,
) -> dict:
    out = {}
    if "ari" in wanted or "kappa" in wanted:
        ari, kappa = categorization_agreement(a.assignments, b.assignments)
        if "ari" in wanted:
            out["ari"] = ari
        if "kappa" in wanted:
            out["kappa"] = kappa
    if "rsa_centroid" in wanted:
        pair = _centroid_rdm_pair(a, b)
        if pair is not None:
            try:
                out["rsa_centroid"] = rsa(pair[0], pair[1], "pearson")
            except (ValueError, NumericalError):
                pass
    need_profiles = ("rsa_profile" in wanted) or any(m in wanted for m in _GW_METRICS)
    if need_profiles:
        prof_a = _sign_profiles(a, obs_a)
        prof_b = _sign_profiles(b, obs_b)
        try:
            rdm_a = compute_rdm(prof_a, "euclidean")
            rdm_b = compute_rdm(prof_b, "euclidean")
        except (ValueError, NumericalError):
            rdm_a = rdm_b = None
        if rdm_a is not None:
            if "rsa_profile" in wanted:
                try:
                    out["rsa_profile"] = rsa(rdm_a, rdm_b, "pearson")
                except (ValueError, NumericalError):
                    pass
            if any(m in wanted for m in _GW_METRICS):
                try:
                    plan, dist = gw_align(
                        rdm_a, rdm_b, epsilon=epsilon, n_init=3, seed=gw_seed
                    )
                    if "gw_distance" in wanted:
                        out["gw_distance"] = dist
                    if "gw_matching_accuracy" in wanted:
                        out["gw_matching_accuracy"] = matching_accuracy(
                            plan, np.arange(rdm_a.n), k=1
                        )
                except NumericalError:
                    pass
    return out


def _inter_agent_metrics(
    agents, observations, wanted, epsilon, gw_seed
) -> dict:
    """Mean over unordered agent pairs of each pairwise metric."""
    pairs = list(itertools.combinations(range(len(agents)), 2))
    if not pairs:
        return {}
    acc = {}
    for i, j in pairs:
        m = _pair_metrics(
            agents[i],
            agents[j],
            observations[i],
            observations[j],
            wanted,
            epsilon,
            gw_seed,
        )
        for k, v in m.items():
            acc.setdefault(k, []).append(v)
    return {k: float(np.mean(v)) for k, v in acc.items()}


# ---------------------------------------------------------------------------
# Runner
# ---------------------------------------------------------------------------

def _build_transform(kind: str, dim: int, entropy) -> ModalityTransform:
    if kind == "identity":
        return ModalityTransform.identity(dim)
    rng = np.random.default_rng(entropy)
    if kind == "orthogonal_rotation":
        return ModalityTransform.orthogonal_rotation(dim, rng)
    return ModalityTransform.coordinate_permutation(dim, rng)


def run_experiment(config: ExperimentConfig, quiet: bool = True) -> RunRecord:
    """Run every condition x seed cell and collect the metric series.

    For seed index i, the world, the per-agent observations, the per-agent
    modality transforms, and the initial agent states are identical across
    conditions; only the game differs. All randomness is derived from the
    config's seeds, so two runs of the same config are identical.
    """
    t_start = time.perf_counter()
    out_dir = Path(config.output_dir) if config.output_dir else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)

    kinds = (
        list(config.transforms) * config.world.n_agents
        if len(config.transforms) == 1
        else list(config.transforms)
    )
    series = {}
    for i in range(config.n_seeds):
        world_seed = derive_seed([config.world.seed, i])
        wcfg = replace(config.world, seed=world_seed)
        world = generate_world(wcfg)
        transforms = [
            _build_transform(kinds[k], wcfg.obs_dim, [world_seed, 71, k])
            for k in range(wcfg.n_agents)
        ]
        observations = [
            observe(world, k, transforms[k], wcfg.obs_noise, seed=world_seed)
            for k in range(wcfg.n_agents)
        ]
        game_seed = derive_seed([config.game.seed, i])
        init_agents = [
            init_agent(config.hyper, observations[k], seed=[game_seed, 13, k])
            for k in range(wcfg.n_agents)
        ]
        for cond in config.conditions:
            gcfg = replace(config.game, mode=cond, seed=game_seed)
            rows = []
            schedule = set(config.measure_schedule)

            def on_round(rnd, agents, _rows=rows, _sched=schedule):
                if rnd not in _sched:
                    return
                metrics = _inter_agent_metrics(
                    agents,
                    observations,
                    config.metrics,
                    config.epsilon,
                    gw_seed=derive_seed([game_seed, 29, rnd]),
                )
                _rows.append({"round": rnd, "metrics": metrics})

            final_agents, trace = run_game(
                world, init_agents, observations, gcfg, on_round=on_round
            )
            if "acceptance_rate" in config.metrics and cond in (
                "mh",
                "always_accept",
            ):
                for row in rows:
                    if row["round"] >= 1:
                        row["metrics"]["acceptance_rate"] = float(
                            trace.acceptance_rate_curve[row["round"] - 1]
                        )
            series[(cond, i)] = rows
            if out_dir is not None:
                base = trace_basename(cond, i)
                save_trace_csv(trace, out_dir / f"{base}.csv")
                save_trace_json(trace, out_dir / f"{base}.json")
            if not quiet:
                print(f"[{cond} seed={i}] {len(trace.steps)} steps")

    record = RunRecord(
        config=config,
        series=series,
        wall_clock=time.perf_counter() - t_start,
    )
    if out_dir is not None:
        save_run_record(record, out_dir / "run_record.json")
        save_metrics_csv(record, out_dir / "metrics.csv")
    return record


def save_metrics_csv(record: RunRecord, path) -> None:
    """Long-format metric table; bytes depend only on the measured values."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["condition", "seed", "round", "metric", "value"])
        for cond in record.config.conditions:
            for i in range(record.config.n_seeds):
                for row in record.series.get((cond, i), []):
                    for name in sorted(row["metrics"]):
                        w.writerow(
                            [cond, i, row["round"], name,
                             repr(float(row["metrics"][name]))]
                        )


# ---------------------------------------------------------------------------
# Summaries
# ---------------------------------------------------------------------------

@dataclass
class SummaryReport:
    """Aggregates over seeds: per-condition stats plus condition contrasts."""

    per_condition: dict  # condition -> metric -> {"mean","std","n"}
    contrasts: list  # {"metric","condition_a","condition_b","u_statistic","p_value"}
    long_table: list = field(default_factory=list)  # final-round rows

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "per_condition": self.per_condition,
            "contrasts": self.contrasts,
        }


def _mannwhitney(x, y) -> tuple:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.ptp(np.concatenate([x, y])) == 0:
        # all values tied: no detectable difference by construction
        return float(len(x) * len(y) / 2.0), 1.0
    res = mannwhitneyu(x, y, alternative="two-sided")
    return float(res.statistic), float(res.pvalue)


def summarize(records) -> SummaryReport:
    """Pool final-round metrics across records and contrast conditions.

    Contrasts (two-sided Mann-Whitney U) are emitted only when both
    conditions carry the same seed set with at least two seeds, keeping the
    comparisons paired and meaningful.
    """
    if isinstance(records, RunRecord):
        records = [records]
    records = list(records)
    if not records:
        raise ValueError("need at least one record")
    conditions = records[0].config.conditions
    for r in records:
        if r.config.conditions != conditions:
            raise ValueError("records disagree on the condition set")

    values = {}  # condition -> metric -> {seed_key: value}
    long_rows = []
    for ridx, rec in enumerate(records):
        for (cond, seed_idx), rows in sorted(rec.series.items()):
            if not rows:
                continue
            final = rows[-1]["metrics"]
            for name, v in sorted(final.items()):
                values.setdefault(cond, {}).setdefault(name, {})[
                    (ridx, seed_idx)
                ] = v
                long_rows.append(
                    {
                        "condition": cond,
                        "record": ridx,
                        "seed": seed_idx,
                        "round": rows[-1]["round"],
                        "metric": name,
                        "value": v,
                    }
                )

    per_condition = {}
    for cond in conditions:
        per_condition[cond] = {}
        for name, by_seed in sorted(values.get(cond, {}).items()):
            vals = np.array([by_seed[k] for k in sorted(by_seed)])
            per_condition[cond][name] = {
                "mean": float(vals.mean()),
                "std": float(vals.std()),
                "n": int(vals.size),
            }

    contrasts = []
    for ca, cb in itertools.combinations(conditions, 2):
        metrics_a = values.get(ca, {})
        metrics_b = values.get(cb, {})
        for name in sorted(set(metrics_a) & set(metrics_b)):
            keys_a, keys_b = metrics_a[name], metrics_b[name]
            if set(keys_a) != set(keys_b) or len(keys_a) < 2:
                continue
            u, p = _mannwhitney(
                [keys_a[k] for k in sorted(keys_a)],
                [keys_b[k] for k in sorted(keys_b)],
            )
            contrasts.append(
                {
                    "metric": name,
                    "condition_a": ca,
                    "condition_b": cb,
                    "u_statistic": u,
                    "p_value": p,
                }
            )
    return SummaryReport(
        per_condition=per_condition, contrasts=contrasts, long_table=long_rows
    )


def save_summary_json(report: SummaryReport, path) -> None:
    Path(path).write_text(
        json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"
    )


def save_summary_csv(report: SummaryReport, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["condition", "record", "seed", "round", "metric", "value"])
        for row in report.long_table:
            w.writerow(
                [
                    row["condition"],
                    row["record"],
                    row["seed"],
                    row["round"],
                    row["metric"],
                    repr(float(row["value"])),
                ]
            )
