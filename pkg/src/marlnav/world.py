"""Kinematic world primitives: poses, actions, arena geometry, collisions, rewards.

Coordinate frame follows the simulator convention: the ground plane is X-Z,
heading theta is measured about the vertical axis with theta = 0 facing +Z,
so the forward direction of a robot is (sin(theta), cos(theta)).

Units:
- positions in meters
- theta in radians, always normalized to (-pi, pi]
- Action.v in meters per physics tick (50 Hz tick => 0.05 m/tick = 2.5 m/s)
- Action.omega in radians per second, integrated as omega * dt per tick
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

TICK_DT = 0.02          # seconds per physics tick (50 Hz)
TICKS_PER_DECISION = 5  # physics ticks between decisions (0.1 s decision period)
V_MAX = 0.05            # meters per tick
OMEGA_MAX = math.pi     # rad/s


def wrap_angle(theta: float) -> float:
    """Normalize an angle to (-pi, pi]."""
    r = theta % math.tau
    return r - math.tau if r > math.pi else r


@dataclass
class Pose:
    """Planar pose (px, pz, theta); theta is normalized on construction."""

    px: float
    pz: float
    theta: float

    def __post_init__(self):
        self.theta = wrap_angle(self.theta)

    def position(self) -> tuple[float, float]:
        return (self.px, self.pz)


@dataclass
class Action:
    """Saturated control command: forward displacement v and yaw rate omega.

    Construction clamps to the actuator limits, so the saturation invariants
    0 <= v <= V_MAX and -pi <= omega <= pi always hold afterwards.
    """

    v: float
    omega: float

    def __post_init__(self):
        self.v = min(max(self.v, 0.0), V_MAX)
        self.omega = min(max(self.omega, -OMEGA_MAX), OMEGA_MAX)


# Wall segments are ((x1, z1), (x2, z2)) centerline endpoints.
Segment = tuple[tuple[float, float], tuple[float, float]]

# Corner goals, in agent-index order (agent i -> _CORNERS[i % 4]).
_CORNERS = ((4.0, 4.0), (-4.0, 4.0), (-4.0, -4.0), (4.0, -4.0))


@dataclass
class Arena:
    """Square arena bounded by four walls, with fixed per-agent corner goals."""

    half_extent: float = 5.0
    wall_width: float = 0.1
    robot_radius: float = 0.25
    goal_radius: float = 1.0
    wall_segments: list[Segment] = field(default_factory=list)
    goal_positions: list[tuple[float, float]] = field(default_factory=list)

    @classmethod
    def square(cls, n_agents: int = 4, half_extent: float = 5.0) -> "Arena":
        h = half_extent
        walls = [
            ((-h, -h), (h, -h)),   # south (z = -h)
            ((h, -h), (h, h)),     # east  (x = +h)
            ((h, h), (-h, h)),     # north (z = +h)
            ((-h, h), (-h, -h)),   # west  (x = -h)
        ]
        goals = [_CORNERS[i % 4] for i in range(n_agents)]
        return cls(half_extent=h, wall_segments=walls, goal_positions=goals)


@dataclass
class RewardConfig:
    r_goal: float = 20.0
    r_collision: float = -20.0
    k_t: float = -0.01  # per square meter of distance-to-goal


class AgentStatus(Enum):
    ACTIVE = "active"
    REACHED_GOAL = "reached_goal"
    COLLIDED = "collided"
    TIMED_OUT = "timed_out"


class CollisionKind(Enum):
    NONE = "none"
    PEER = "peer"
    WALL = "wall"


@dataclass
class AgentState:
    """Per-robot bookkeeping for one episode.

    `goal` is hidden state: it never appears in peers' observations.
    Once status leaves ACTIVE the pose is frozen until respawn.
    """

    agent_id: int
    pose: Pose
    goal: tuple[float, float]
    status: AgentStatus = AgentStatus.ACTIVE
    decision_step_count: int = 0
    accumulated_reward: float = 0.0


def step_kinematics(pose: Pose, action: Action, dt: float = TICK_DT) -> Pose:
    """Advance one physics tick: rotate first, then translate along the new heading.

    No collision handling here; callers resolve contacts separately.
    """
    theta = wrap_angle(pose.theta + action.omega * dt)
    return Pose(
        px=pose.px + action.v * math.sin(theta),
        pz=pose.pz + action.v * math.cos(theta),
        theta=theta,
    )


def point_segment_distance(p: tuple[float, float], seg: Segment) -> float:
    """Euclidean distance from point p to the closed segment seg."""
    (x1, z1), (x2, z2) = seg
    dx, dz = x2 - x1, z2 - z1
    length_sq = dx * dx + dz * dz
    if length_sq == 0.0:
        return math.hypot(p[0] - x1, p[1] - z1)
    t = ((p[0] - x1) * dx + (p[1] - z1) * dz) / length_sq
    t = min(max(t, 0.0), 1.0)
    return math.hypot(p[0] - (x1 + t * dx), p[1] - (z1 + t * dz))


def detect_collision(ego: AgentState, peers: list[AgentState], arena: Arena) -> CollisionKind:
    """Check ego against Active peers (center distance <= 2*rho) and walls
    (centerline distance <= rho + w/2). Peer contact takes precedence when both hold.
    """
    ex, ez = ego.pose.px, ego.pose.pz
    peer_threshold = 2.0 * arena.robot_radius
    for peer in peers:
        if peer.agent_id == ego.agent_id or peer.status is not AgentStatus.ACTIVE:
            continue
        if math.hypot(peer.pose.px - ex, peer.pose.pz - ez) <= peer_threshold:
            return CollisionKind.PEER
    wall_threshold = arena.robot_radius + arena.wall_width / 2.0
    for seg in arena.wall_segments:
        if point_segment_distance((ex, ez), seg) <= wall_threshold:
            return CollisionKind.WALL
    return CollisionKind.NONE


def check_goal(ego: AgentState, goal_radius: float = 1.0) -> bool:
    """True iff the ego center is within goal_radius (inclusive) of its goal."""
    return math.hypot(ego.goal[0] - ego.pose.px, ego.goal[1] - ego.pose.pz) <= goal_radius


def compute_reward(
    ego: AgentState,
    peers: list[AgentState],
    arena: Arena,
    cfg: RewardConfig,
) -> tuple[float, bool]:
    """Evaluate the three-case reward once per decision step.

    Cases fire in order: goal, collision, quadratic distance penalty.
    Returns (reward, terminal).
    """
    if check_goal(ego, arena.goal_radius):
        return cfg.r_goal, True
    if detect_collision(ego, peers, arena) is not CollisionKind.NONE:
        return cfg.r_collision, True
    dx = ego.goal[0] - ego.pose.px
    dz = ego.goal[1] - ego.pose.pz
    return cfg.k_t * (dx * dx + dz * dz), False
