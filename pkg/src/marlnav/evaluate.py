"""Deployment-phase evaluation: the N-episodes-per-agent stochastic protocol,
success-rate reporting, trajectory/velocity exports and inference latency.

Evaluation runs a single world single-threaded so a fixed seed reproduces the
report exactly.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .net import PolicyParams, load_checkpoint, sample_action
from .scenario import (
    EpisodeRecord,
    Experiment,
    Outcome,
    World,
    WorldConfig,
    build_observation,
)
from .world import TICK_DT, TICKS_PER_DECISION

AGENT_COLORS = ("red", "green", "blue", "magenta", "orange", "cyan", "purple", "brown")


@dataclass
class EvalReport:
    experiment: str
    n_episodes: int
    per_agent_success_rate: list[float]          # percent
    per_agent_outcomes: list[dict[str, int]]
    average_success_rate: float                  # percent, mean of per-agent rates
    mean_time_to_goal_steps: float               # successful episodes only
    mean_time_to_goal_seconds: float
    records: list[EpisodeRecord] = field(default_factory=list, repr=False)

    def to_json(self) -> dict:
        return {
            "experiment": self.experiment,
            "n_episodes": self.n_episodes,
            "per_agent_success_rate": self.per_agent_success_rate,
            "per_agent_outcomes": self.per_agent_outcomes,
            "average_success_rate": self.average_success_rate,
            "mean_time_to_goal_steps": self.mean_time_to_goal_steps,
            "mean_time_to_goal_seconds": self.mean_time_to_goal_seconds,
        }


def load_policies(checkpoint_path, n_agents: int) -> tuple[list[PolicyParams], dict]:
    """Load one shared checkpoint file, or a directory of per-agent
    policy_agent{i}_final.npz files from an individual-policy run."""
    path = Path(checkpoint_path)
    if path.is_dir():
        params, meta = [], {}
        for i in range(n_agents):
            agent_path = path / f"policy_agent{i}_final.npz"
            if not agent_path.exists():
                raise FileNotFoundError(f"missing per-agent checkpoint {agent_path}")
            p, meta = load_checkpoint(agent_path)
            params.append(p)
        return params, meta
    params, meta = load_checkpoint(path)
    return [params] * n_agents, meta


def evaluate(
    policies: list[PolicyParams],
    experiment: Experiment,
    n_episodes: int = 500,
    seed: int = 0,
    n_agents: int = 4,
    deterministic: bool = False,
    normalize_obs: bool = True,
    max_decision_steps: int = 1000,
) -> EvalReport:
    """Run until every agent completes n_episodes; agents spawn collectively
    at the start and respawn independently afterwards. Actions are sampled
    stochastically unless deterministic is set."""
    if len(policies) not in (1, n_agents):
        raise ValueError("need one shared policy or one per agent")
    if policies[0].obs_dim != 4 + 2 * (n_agents - 1):
        raise ValueError(
            f"checkpoint expects obs_dim {policies[0].obs_dim}, "
            f"but {n_agents} agents produce {4 + 2 * (n_agents - 1)}"
        )
    if len(policies) == 1:
        policies = policies * n_agents

    master = np.random.SeedSequence(seed)
    world_seed, sample_seed = master.spawn(2)
    cfg = WorldConfig(
        n_agents=n_agents,
        experiment=experiment,
        max_decision_steps=max_decision_steps,
        seed=seed,
        normalize_obs=normalize_obs,
    )
    world = World(cfg, rng=np.random.default_rng(world_seed), record_trajectories=True)
    sample_rng = np.random.default_rng(sample_seed)

    counted: list[list[EpisodeRecord]] = [[] for _ in range(n_agents)]
    all_records: list[EpisodeRecord] = []
    observations = world.reset()

    while n_episodes > 0 and any(len(c) < n_episodes for c in counted):
        actions = {}
        for agent_id in range(n_agents):
            s = sample_action(
                policies[agent_id], observations[agent_id], sample_rng,
                deterministic=deterministic,
            )
            actions[agent_id] = s.action
        results = world.step(actions)
        for agent_id, res in results.items():
            if res.done:
                record = world.respawn_if_terminal(agent_id)
                if len(counted[agent_id]) < n_episodes:
                    counted[agent_id].append(record)
                    all_records.append(record)
                observations[agent_id] = world.observe(agent_id)
            else:
                observations[agent_id] = res.observation

    per_rates, per_outcomes = [], []
    goal_steps: list[int] = []
    for agent_records in counted:
        outcomes = {o.value: 0 for o in Outcome}
        for rec in agent_records:
            outcomes[rec.outcome.value] += 1
            if rec.outcome is Outcome.SUCCESS:
                goal_steps.append(rec.decision_steps)
        per_outcomes.append(outcomes)
        per_rates.append(
            100.0 * outcomes[Outcome.SUCCESS.value] / n_episodes if n_episodes else 0.0
        )
    mean_steps = float(np.mean(goal_steps)) if goal_steps else 0.0
    return EvalReport(
        experiment=experiment.value,
        n_episodes=n_episodes,
        per_agent_success_rate=per_rates,
        per_agent_outcomes=per_outcomes,
        average_success_rate=float(np.mean(per_rates)) if per_rates else 0.0,
        mean_time_to_goal_steps=mean_steps,
        mean_time_to_goal_seconds=mean_steps * TICKS_PER_DECISION * TICK_DT,
        records=all_records,
    )


def export_trajectories(records: list[EpisodeRecord], out_dir) -> dict[str, Path]:
    """Write per-agent (tick, px, pz, theta, v, omega) CSVs plus an overhead
    trajectory plot and per-agent velocity plots as SVG."""
    if not records:
        raise ValueError("no episodes to export")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    agent_ids = sorted({r.agent_id for r in records})
    paths: dict[str, Path] = {}

    for agent_id in agent_ids:
        csv_path = out_dir / f"agent{agent_id}_trajectory.csv"
        with open(csv_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["tick", "px", "pz", "theta", "v", "omega"])
            for rec in records:
                if rec.agent_id != agent_id:
                    continue
                for row in rec.trajectory:
                    writer.writerow(row)
        paths[f"agent{agent_id}_csv"] = csv_path

    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 6))
    goal_seen = set()
    for rec in records:
        if not rec.trajectory:
            continue
        color = AGENT_COLORS[rec.agent_id % len(AGENT_COLORS)]
        xs = [row[1] for row in rec.trajectory]
        zs = [row[2] for row in rec.trajectory]
        ax.plot(xs, zs, color=color, alpha=0.6, linewidth=1.0,
                label=f"agent {rec.agent_id}" if rec.agent_id not in goal_seen else None)
        goal_seen.add(rec.agent_id)
    for c, (gx, gz) in zip(AGENT_COLORS, ((4, 4), (-4, 4), (-4, -4), (4, -4))):
        ax.plot(gx, gz, marker="*", markersize=14, color=c, linestyle="none")
    for x in (-5, 5):
        ax.plot([x, x], [-5, 5], color="black", linewidth=2)
        ax.plot([-5, 5], [x, x], color="black", linewidth=2)
    ax.set_xlim(-5.5, 5.5)
    ax.set_ylim(-5.5, 5.5)
    ax.set_aspect("equal")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("z [m]")
    ax.legend(loc="upper left", fontsize=8)
    traj_path = out_dir / "trajectories.svg"
    fig.savefig(traj_path)
    plt.close(fig)
    paths["trajectories"] = traj_path

    fig, axes = plt.subplots(2, 1, figsize=(8, 6), sharex=True)
    for rec in records:
        if not rec.trajectory:
            continue
        color = AGENT_COLORS[rec.agent_id % len(AGENT_COLORS)]
        ticks = [row[0] for row in rec.trajectory]
        axes[0].plot(ticks, [row[4] for row in rec.trajectory], color=color,
                     alpha=0.6, linewidth=0.8)
        axes[1].plot(ticks, [row[5] for row in rec.trajectory], color=color,
                     alpha=0.6, linewidth=0.8)
    axes[0].set_ylabel("v [m/tick]")
    axes[1].set_ylabel("omega [rad/s]")
    axes[1].set_xlabel("tick")
    vel_path = out_dir / "velocities.svg"
    fig.savefig(vel_path)
    plt.close(fig)
    paths["velocities"] = vel_path
    return paths


def measure_latency(
    policy: PolicyParams,
    n_trials: int = 1000,
    seed: int = 0,
    experiment: Experiment = Experiment.G2GCA,
    n_agents: int = 4,
) -> tuple[float, float]:
    """Time one full observation-action cycle (observation assembly, forward
    pass, action sampling); returns (mean, p99) in microseconds."""
    if n_trials < 1000:
        raise ValueError("need at least 1000 trials for a stable estimate")
    cfg = WorldConfig(n_agents=n_agents, experiment=experiment, seed=seed)
    world = World(cfg, rng=np.random.default_rng(seed))
    rng = np.random.default_rng(seed)
    durations = np.empty(n_trials)
    for k in range(n_trials):
        start = time.perf_counter()
        obs = build_observation(world, 0)
        sample_action(policy, obs, rng)
        durations[k] = time.perf_counter() - start
    return float(durations.mean() * 1e6), float(np.percentile(durations, 99) * 1e6)
