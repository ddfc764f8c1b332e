"""Training loop: asynchronous rollout collection over one shared world,
routed into PPO updates under individual- or common-policy learning.

All randomness flows from one master seed through named sub-streams
(world/spawn, action sampling, minibatch shuffling), so runs with equal seeds
produce bitwise-identical metrics.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import RunConfig, TrainingMode
from .net import (
    PolicyParams,
    entropy,
    forward_batch,
    init_params,
    log_prob,
    raw_to_action,
    save_checkpoint,
)
from .ppo import Adam, RolloutBuffer, update
from .scenario import World, WorldConfig
from .world import TICK_DT

METRICS_COLUMNS = (
    "wall_time", "step", "agent_id", "cumulative_reward", "episode_length",
    "entropy", "policy_loss", "value_loss",
)


@dataclass
class TrainResult:
    policies: list[PolicyParams]
    metrics_path: Path
    checkpoint_paths: list[Path]
    total_steps: int
    total_episodes: int
    outcome_counts: dict = field(default_factory=dict)


def _checkpoint_meta(run: RunConfig, step: int) -> dict:
    return {
        "experiment": run.experiment.value,
        "mode": run.mode.value,
        "hidden_layers": run.hidden_layers,
        "hidden_units": run.hidden_units,
        "n_agents": run.n_agents,
        "normalize_obs": run.normalize_obs,
        "seed": run.seed,
        "step": step,
    }


class _Policy:
    """One parameter set with its optimizer, buffer and step accounting."""

    def __init__(self, run: RunConfig, obs_dim: int, rng: np.random.Generator):
        self.params = init_params(
            obs_dim, hidden_layers=run.hidden_layers,
            hidden_units=run.hidden_units, rng=rng,
        )
        self.optimizer = Adam(self.params, run.ppo)
        self.buffer = RolloutBuffer(run.ppo.discount, run.ppo.gae_lambda)
        self.steps = 0
        # before the first update, report the closed-form entropy of the
        # zero-initialized log-std head (sigma = 1 everywhere)
        self.last_stats = {
            "policy_loss": 0.0,
            "value_loss": 0.0,
            "entropy": float(entropy(np.zeros(2))),
        }


def train(run: RunConfig, out_dir: Path, log_every: int = 0) -> TrainResult:
    """Run PPO training to run.ppo.max_steps and write metrics + checkpoints.

    Step accounting follows the training mode: common-policy counts decision
    steps pooled over all agents; individual-policy counts per agent.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ckpt_dir = out_dir / "checkpoints"
    ckpt_dir.mkdir(exist_ok=True)
    metrics_path = out_dir / "metrics.csv"

    master = np.random.SeedSequence(run.seed)
    world_seed, sample_seed, shuffle_seed, init_seed = master.spawn(4)
    world_rng = np.random.default_rng(world_seed)
    sample_rng = np.random.default_rng(sample_seed)
    shuffle_rng = np.random.default_rng(shuffle_seed)
    init_rng = np.random.default_rng(init_seed)

    world_cfg = WorldConfig(
        n_agents=run.n_agents,
        experiment=run.experiment,
        max_decision_steps=run.max_decision_steps,
        seed=run.seed,
        normalize_obs=run.normalize_obs,
        min_spawn_separation=run.min_spawn_separation,
    )
    world = World(world_cfg, rng=world_rng)
    n_agents = run.n_agents
    common = run.mode is TrainingMode.COMMON

    n_policies = 1 if common else n_agents
    policies = [_Policy(run, world_cfg.obs_dim, init_rng) for _ in range(n_policies)]

    def policy_of(agent_id: int) -> _Policy:
        return policies[0] if common else policies[agent_id]

    observations = world.reset()
    total_episodes = 0
    outcome_counts: dict[str, int] = {}
    checkpoint_paths: list[Path] = []
    next_checkpoint = run.checkpoint_interval

    def save(tag: str, step: int) -> None:
        for pi, pol in enumerate(policies):
            name = f"policy_{tag}.npz" if common else f"policy_agent{pi}_{tag}.npz"
            path = ckpt_dir / name
            save_checkpoint(path, pol.params, _checkpoint_meta(run, step))
            checkpoint_paths.append(path)

    with open(metrics_path, "w", newline="") as metrics_file:
        writer = csv.writer(metrics_file)
        writer.writerow(METRICS_COLUMNS)

        def finished() -> bool:
            if common:
                return policies[0].steps >= run.ppo.max_steps
            return all(p.steps >= run.ppo.max_steps for p in policies)

        while not finished():
            active_ids = [a.agent_id for a in world.agents]  # all respawn instantly
            # Sample actions, batched per policy.
            samples: dict[int, tuple[np.ndarray, float, float]] = {}
            actions = {}
            if common:
                groups = [(policies[0], active_ids)]
            else:
                groups = [(policies[i], [i]) for i in active_ids]
            for pol, ids in groups:
                obs_batch = np.stack([observations[i] for i in ids])
                mean, value, log_std, _ = forward_batch(pol.params, obs_batch)
                noise = sample_rng.standard_normal((len(ids), 2))
                raw = mean + np.exp(log_std) * noise
                logp = log_prob(mean, log_std, raw)
                for k, agent_id in enumerate(ids):
                    samples[agent_id] = (raw[k], float(logp[k]), float(value[k]))
                    actions[agent_id] = raw_to_action(raw[k])

            results = world.step(actions)

            for agent_id in active_ids:
                pol = policy_of(agent_id)
                res = results[agent_id]
                raw, logp, value = samples[agent_id]
                true_terminal = res.done and not res.timeout
                pol.buffer.add(
                    agent_id, observations[agent_id], raw, logp, value,
                    res.reward, true_terminal,
                )
                pol.steps += 1
                if res.done:
                    if res.timeout:
                        _, boot, _, _ = forward_batch(pol.params, res.observation[None, :])
                        bootstrap = float(boot[0])
                    else:
                        bootstrap = 0.0
                    pol.buffer.close_segment(agent_id, bootstrap)
                    record = world.respawn_if_terminal(agent_id)
                    total_episodes += 1
                    outcome_counts[record.outcome.value] = (
                        outcome_counts.get(record.outcome.value, 0) + 1
                    )
                    writer.writerow([
                        repr(float(world.tick * TICK_DT)),
                        pol.steps,
                        agent_id,
                        repr(float(record.cumulative_reward)),
                        record.decision_steps,
                        repr(float(pol.last_stats["entropy"])),
                        repr(float(pol.last_stats["policy_loss"])),
                        repr(float(pol.last_stats["value_loss"])),
                    ])
                    observations[agent_id] = world.observe(agent_id)
                else:
                    observations[agent_id] = res.observation

            # Updates: one policy at a time, whenever its buffer fills.
            for pol in policies:
                if pol.buffer.size >= run.ppo.buffer_size and pol.steps < run.ppo.max_steps:
                    boot_values: dict[int, float] = {}
                    open_ids = pol.buffer.open_agent_ids
                    if open_ids:
                        obs_batch = np.stack([observations[i] for i in open_ids])
                        _, values, _, _ = forward_batch(pol.params, obs_batch)
                        boot_values = {
                            i: float(v) for i, v in zip(open_ids, values)
                        }
                    data = pol.buffer.drain(boot_values)
                    stats = update(
                        pol.params, pol.optimizer, data, run.ppo, pol.steps,
                        shuffle_rng,
                    )
                    pol.last_stats = stats
                    if log_every:
                        print(
                            f"step={pol.steps} entropy={stats['entropy']:.3f} "
                            f"policy_loss={stats['policy_loss']:.4f} "
                            f"value_loss={stats['value_loss']:.4f} "
                            f"ev={stats['explained_variance']:.3f}",
                            flush=True,
                        )

            progress = policies[0].steps if common else min(p.steps for p in policies)
            if progress >= next_checkpoint:
                save(f"step{next_checkpoint}", progress)
                next_checkpoint += run.checkpoint_interval

    final_step = policies[0].steps if common else max(p.steps for p in policies)
    save("final", final_step)
    return TrainResult(
        policies=[p.params for p in policies],
        metrics_path=metrics_path,
        checkpoint_paths=checkpoint_paths,
        total_steps=final_step,
        total_episodes=total_episodes,
        outcome_counts=outcome_counts,
    )
