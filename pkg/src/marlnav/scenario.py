"""Experiment scenarios: spawn geometry, observation assembly and the
asynchronous decision-step loop driving N agents through a shared arena.

Episodes are per-agent: a terminal agent is respawned independently while its
peers keep running, so agents generally sit at different episode step counts.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping

import numpy as np

from .world import (
    TICKS_PER_DECISION,
    Action,
    AgentState,
    AgentStatus,
    Arena,
    CollisionKind,
    Pose,
    RewardConfig,
    check_goal,
    compute_reward,
    detect_collision,
    step_kinematics,
    wrap_angle,
)

RECORD_SCHEMA_VERSION = 1


class Experiment(Enum):
    G2GCA = "g2gca"        # spawn at wall midpoints, goal at the diagonally-right corner
    APE = "ape"            # spawn at corners, goal at the antipodal corner
    G2GCARI = "g2gcari"    # random pose in the quadrant opposite the goal


class Outcome(Enum):
    SUCCESS = "success"
    PEER_COLLISION = "peer_collision"
    WALL_COLLISION = "wall_collision"
    TIMEOUT = "timeout"


@dataclass
class WorldConfig:
    n_agents: int = 4
    experiment: Experiment = Experiment.G2GCA
    max_decision_steps: int = 1000
    seed: int = 0
    normalize_obs: bool = True
    # Optional minimum respawn distance from active peers; None matches the
    # original setup (no separation check, close spawns can collide at once).
    min_spawn_separation: float | None = None
    arena: Arena = None
    reward_cfg: RewardConfig = field(default_factory=RewardConfig)

    def __post_init__(self):
        if self.n_agents < 2:
            raise ValueError("need at least 2 agents")
        if self.max_decision_steps <= 0:
            raise ValueError("max_decision_steps must be positive")
        if self.arena is None:
            self.arena = Arena.square(n_agents=self.n_agents)
        if len(self.arena.goal_positions) != self.n_agents:
            raise ValueError("arena must define one goal per agent")

    @property
    def obs_dim(self) -> int:
        return 4 + 2 * (self.n_agents - 1)


# Fixed G2GCA spawn points: wall midpoints, 1 m inward, facing arena center.
# Agent i is paired with wall i in (south, east, north, west) order.
_G2GCA_SPAWNS = (
    (0.0, -4.0, 0.0),
    (4.0, 0.0, -math.pi / 2.0),
    (0.0, 4.0, math.pi),
    (-4.0, 0.0, math.pi / 2.0),
)


def spawn(
    experiment: Experiment,
    agent_id: int,
    rng: np.random.Generator,
    arena: Arena,
) -> Pose:
    """Initial pose for one agent under the given experiment's geometry."""
    goal = arena.goal_positions[agent_id]
    if experiment is Experiment.G2GCA:
        px, pz, theta = _G2GCA_SPAWNS[agent_id % 4]
        return Pose(px, pz, theta)
    if experiment is Experiment.APE:
        px, pz = -goal[0], -goal[1]
        return Pose(px, pz, math.atan2(-px, -pz))  # facing arena center
    if experiment is Experiment.G2GCARI:
        # Uniform over the quadrant diagonally opposite the goal, inset so the
        # spawn clears the wall collision band; heading uniform over (-pi, pi].
        inset = arena.half_extent - arena.robot_radius - arena.wall_width / 2.0
        sx = -math.copysign(1.0, goal[0])
        sz = -math.copysign(1.0, goal[1])
        px = sx * rng.uniform(0.0, inset)
        pz = sz * rng.uniform(0.0, inset)
        theta = wrap_angle(rng.uniform(-math.pi, math.pi))
        return Pose(px, pz, theta)
    raise ValueError(f"unknown experiment: {experiment!r}")


def build_observation(world: "World", agent_id: int) -> np.ndarray:
    """Assemble the length 4 + 2(N-1) observation for one agent.

    Layout: [px, pz, goal delta, then one peer delta per peer in ascending
    agent-index order]. The ego position is in world coordinates; the goal and
    peer deltas are expressed in the ego's body frame (rotated by -theta, so
    +z_local is straight ahead). The body frame makes the heading observable
    through the deltas, which steering needs: a policy fed world-frame deltas
    cannot tell which way it is pointing, and measurably fails to learn. All
    components are divided by the arena half extent when normalization is
    enabled.
    """
    ego = world.agents[agent_id]
    px, pz, theta = ego.pose.px, ego.pose.pz, ego.pose.theta
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    vec = np.empty(4 + 2 * (world.cfg.n_agents - 1))
    vec[0], vec[1] = px, pz
    dx, dz = ego.goal[0] - px, ego.goal[1] - pz
    vec[2] = cos_t * dx - sin_t * dz
    vec[3] = sin_t * dx + cos_t * dz
    k = 4
    for peer in world.agents:
        if peer.agent_id == agent_id:
            continue
        dx, dz = peer.pose.px - px, peer.pose.pz - pz
        vec[k] = cos_t * dx - sin_t * dz
        vec[k + 1] = sin_t * dx + cos_t * dz
        k += 2
    if world.cfg.normalize_obs:
        vec /= world.cfg.arena.half_extent
    return vec


@dataclass
class EpisodeRecord:
    agent_id: int
    outcome: Outcome
    decision_steps: int
    cumulative_reward: float
    # (tick, px, pz, theta, v, omega) per physics tick; empty unless recording.
    trajectory: list[tuple[int, float, float, float, float, float]] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "schema_version": RECORD_SCHEMA_VERSION,
            "agent_id": self.agent_id,
            "outcome": self.outcome.value,
            "decision_steps": self.decision_steps,
            "cumulative_reward": self.cumulative_reward,
            "trajectory": [list(row) for row in self.trajectory],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "EpisodeRecord":
        version = obj.get("schema_version")
        if version != RECORD_SCHEMA_VERSION:
            raise ValueError(
                f"record schema version {version!r} is not supported "
                f"(expected {RECORD_SCHEMA_VERSION})"
            )
        return cls(
            agent_id=obj["agent_id"],
            outcome=Outcome(obj["outcome"]),
            decision_steps=obj["decision_steps"],
            cumulative_reward=obj["cumulative_reward"],
            trajectory=[tuple(row) for row in obj["trajectory"]],
        )


def write_records(records: Iterable[EpisodeRecord], path) -> None:
    """Serialize episode records as newline-delimited JSON."""
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_json()) + "\n")


def read_records(path) -> list[EpisodeRecord]:
    records = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            records.append(EpisodeRecord.from_json(json.loads(line)))
    return records


@dataclass
class StepResult:
    """Per-agent outcome of one decision step."""

    observation: np.ndarray
    reward: float
    done: bool              # episode ended (goal, collision, or timeout)
    timeout: bool           # ended by the step cap rather than an env terminal
    outcome: Outcome | None = None  # set when done


class World:
    """Shared arena driving N asynchronous agents.

    Single-threaded by design; run independent World instances for parallel
    rollout collection. Actions are held for TICKS_PER_DECISION physics ticks,
    then rewards and terminations are evaluated once.
    """

    def __init__(
        self,
        cfg: WorldConfig,
        rng: np.random.Generator | None = None,
        record_trajectories: bool = False,
    ):
        self.cfg = cfg
        self.rng = rng if rng is not None else np.random.default_rng(cfg.seed)
        self.record_trajectories = record_trajectories
        self.tick = 0
        self.agents: list[AgentState] = []
        self._trajectories: list[list] = [[] for _ in range(cfg.n_agents)]
        self._pending_outcomes: dict[int, Outcome] = {}
        self.reset()

    def reset(self) -> list[np.ndarray]:
        """Spawn every agent collectively and return initial observations."""
        self.tick = 0
        self.agents = [
            AgentState(
                agent_id=i,
                pose=self._spawn_pose(i),
                goal=self.cfg.arena.goal_positions[i],
            )
            for i in range(self.cfg.n_agents)
        ]
        self._trajectories = [[] for _ in range(self.cfg.n_agents)]
        self._pending_outcomes = {}
        return [build_observation(self, i) for i in range(self.cfg.n_agents)]

    def observe(self, agent_id: int) -> np.ndarray:
        return build_observation(self, agent_id)

    def _spawn_pose(self, agent_id: int) -> Pose:
        pose = spawn(self.cfg.experiment, agent_id, self.rng, self.cfg.arena)
        if self.cfg.min_spawn_separation is not None:
            for _ in range(1000):
                if all(
                    peer.status is not AgentStatus.ACTIVE
                    or math.hypot(peer.pose.px - pose.px, peer.pose.pz - pose.pz)
                    >= self.cfg.min_spawn_separation
                    for peer in self.agents
                    if peer.agent_id != agent_id
                ):
                    break
                pose = spawn(self.cfg.experiment, agent_id, self.rng, self.cfg.arena)
        return pose

    def step(self, actions: Mapping[int, Action]) -> dict[int, StepResult]:
        """Advance one decision step (5 physics ticks, actions held).

        Expects exactly one action per Active agent; rewards and terminations
        are evaluated once after the ticks.
        """
        for agent_id in actions:
            if self.agents[agent_id].status is not AgentStatus.ACTIVE:
                raise ValueError(f"action supplied for non-active agent {agent_id}")
        active = [a for a in self.agents if a.status is AgentStatus.ACTIVE]
        missing = [a.agent_id for a in active if a.agent_id not in actions]
        if missing:
            raise ValueError(f"missing actions for active agents {missing}")

        for _ in range(TICKS_PER_DECISION):
            self.tick += 1
            for agent in active:
                act = actions[agent.agent_id]
                agent.pose = step_kinematics(agent.pose, act)
                if self.record_trajectories:
                    self._trajectories[agent.agent_id].append(
                        (self.tick, agent.pose.px, agent.pose.pz, agent.pose.theta,
                         act.v, act.omega)
                    )

        results: dict[int, StepResult] = {}
        # Rewards are evaluated against the post-tick snapshot for all agents
        # before any status flips, so collision penalties stay symmetric.
        evaluations = {}
        for agent in active:
            reward, terminal = compute_reward(
                agent, self.agents, self.cfg.arena, self.cfg.reward_cfg
            )
            outcome = None
            if terminal:
                if check_goal(agent, self.cfg.arena.goal_radius):
                    outcome = Outcome.SUCCESS
                else:
                    kind = detect_collision(agent, self.agents, self.cfg.arena)
                    outcome = (
                        Outcome.PEER_COLLISION
                        if kind is CollisionKind.PEER
                        else Outcome.WALL_COLLISION
                    )
            evaluations[agent.agent_id] = (reward, terminal, outcome)

        for agent in active:
            reward, terminal, outcome = evaluations[agent.agent_id]
            agent.decision_step_count += 1
            agent.accumulated_reward += reward
            timeout = False
            if terminal:
                agent.status = (
                    AgentStatus.REACHED_GOAL
                    if outcome is Outcome.SUCCESS
                    else AgentStatus.COLLIDED
                )
            elif agent.decision_step_count >= self.cfg.max_decision_steps:
                agent.status = AgentStatus.TIMED_OUT
                outcome = Outcome.TIMEOUT
                timeout = True
            if outcome is not None:
                self._pending_outcomes[agent.agent_id] = outcome
            results[agent.agent_id] = StepResult(
                observation=build_observation(self, agent.agent_id),
                reward=reward,
                done=agent.status is not AgentStatus.ACTIVE,
                timeout=timeout,
                outcome=outcome,
            )
        return results

    def respawn_if_terminal(self, agent_id: int) -> EpisodeRecord:
        """Close a finished agent episode and respawn it in place.

        Returns the EpisodeRecord of the completed episode; peers' states are
        untouched. Raises if the agent is still Active.
        """
        agent = self.agents[agent_id]
        if agent.status is AgentStatus.ACTIVE:
            raise ValueError(f"agent {agent_id} is still active")
        outcome = self._pending_outcomes.pop(agent_id)
        record = EpisodeRecord(
            agent_id=agent_id,
            outcome=outcome,
            decision_steps=agent.decision_step_count,
            cumulative_reward=agent.accumulated_reward,
            trajectory=list(self._trajectories[agent_id]),
        )
        self.agents[agent_id] = AgentState(
            agent_id=agent_id,
            pose=self._spawn_pose(agent_id),
            goal=self.cfg.arena.goal_positions[agent_id],
        )
        self._trajectories[agent_id] = []
        return record
