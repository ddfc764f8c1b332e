import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from marlnav.world import (
    OMEGA_MAX,
    V_MAX,
    Action,
    AgentState,
    Arena,
    CollisionKind,
    Pose,
    RewardConfig,
    check_goal,
    compute_reward,
    detect_collision,
    point_segment_distance,
    step_kinematics,
    wrap_angle,
)


def agent(px, pz, goal=(4.0, 4.0), agent_id=0, theta=0.0):
    return AgentState(agent_id=agent_id, pose=Pose(px, pz, theta), goal=goal)


class TestKinematics:
    def test_identity(self):
        pose = step_kinematics(Pose(0, 0, 0), Action(v=0, omega=0), 0.02)
        assert (pose.px, pose.pz, pose.theta) == (0, 0, 0)

    def test_pure_forward_motion(self):
        pose = step_kinematics(Pose(0, 0, 0), Action(v=0.05, omega=0), 0.02)
        assert pose.px == pytest.approx(0.0)
        assert pose.pz == pytest.approx(0.05)
        assert pose.theta == 0.0

    def test_rotate_then_translate(self):
        # scalar-calculator evaluation of the update rule
        pose = step_kinematics(Pose(0, 0, 0), Action(v=0.05, omega=math.pi), 0.02)
        assert pose.theta == pytest.approx(0.0628319, abs=1e-7)
        assert pose.px == pytest.approx(0.05 * math.sin(0.0628319), abs=1e-7)
        assert pose.pz == pytest.approx(0.05 * math.cos(0.0628319), abs=1e-7)

    @given(
        theta=st.floats(-10, 10),
        v=st.floats(0, V_MAX),
        omega=st.floats(-OMEGA_MAX, OMEGA_MAX),
    )
    def test_displacement_bounded_by_vmax(self, theta, v, omega):
        before = Pose(1.0, -2.0, theta)
        after = step_kinematics(before, Action(v=v, omega=omega))
        assert math.hypot(after.px - before.px, after.pz - before.pz) <= V_MAX + 1e-12

    @given(st.floats(-100, 100))
    def test_heading_stays_wrapped(self, theta):
        assert -math.pi < wrap_angle(theta) <= math.pi

    def test_heading_wrapped_after_step_sequence(self):
        pose = Pose(0, 0, 3.0)
        for _ in range(200):
            pose = step_kinematics(pose, Action(v=0.03, omega=2.5))
            assert -math.pi < pose.theta <= math.pi

    def test_action_saturation(self):
        a = Action(v=9.0, omega=-12.0)
        assert a.v == V_MAX
        assert a.omega == -OMEGA_MAX
        a = Action(v=-1.0, omega=12.0)
        assert a.v == 0.0
        assert a.omega == OMEGA_MAX


class TestCollision:
    def setup_method(self):
        self.arena = Arena.square(4)

    def test_peer_boundary_inclusive(self):
        ego = agent(0, 0)
        peer = agent(0.5, 0, agent_id=1)
        assert detect_collision(ego, [ego, peer], self.arena) is CollisionKind.PEER

    def test_far_from_everything(self):
        ego = agent(0, 0)
        peer = agent(3, 3, agent_id=1)
        assert detect_collision(ego, [ego, peer], self.arena) is CollisionKind.NONE

    def test_wall_boundary_inclusive(self):
        ego = agent(4.70, 0)
        assert detect_collision(ego, [ego], self.arena) is CollisionKind.WALL

    def test_just_inside_wall_band(self):
        ego = agent(4.69, 0)
        assert detect_collision(ego, [ego], self.arena) is CollisionKind.NONE

    def test_peer_reported_before_wall(self):
        ego = agent(4.8, 0)
        peer = agent(4.8, 0.3, agent_id=1)
        assert detect_collision(ego, [ego, peer], self.arena) is CollisionKind.PEER

    def test_inactive_peers_ignored(self):
        from marlnav.world import AgentStatus

        ego = agent(0, 0)
        peer = agent(0.1, 0, agent_id=1)
        peer.status = AgentStatus.COLLIDED
        assert detect_collision(ego, [ego, peer], self.arena) is CollisionKind.NONE

    @given(
        x1=st.floats(-4, 4), z1=st.floats(-4, 4),
        x2=st.floats(-4, 4), z2=st.floats(-4, 4),
    )
    def test_peer_collision_symmetric(self, x1, z1, x2, z2):
        a = agent(x1, z1, agent_id=0)
        b = agent(x2, z2, agent_id=1)
        both = [a, b]
        a_hits = detect_collision(a, both, self.arena) is CollisionKind.PEER
        b_hits = detect_collision(b, both, self.arena) is CollisionKind.PEER
        assert a_hits == b_hits

    def test_point_segment_distance_endpoints(self):
        seg = ((0.0, 0.0), (2.0, 0.0))
        assert point_segment_distance((3.0, 0.0), seg) == pytest.approx(1.0)
        assert point_segment_distance((1.0, 2.0), seg) == pytest.approx(2.0)
        assert point_segment_distance((-3.0, 4.0), seg) == pytest.approx(5.0)


class TestGoalAndReward:
    def setup_method(self):
        self.arena = Arena.square(4)
        self.cfg = RewardConfig()

    def test_goal_zero_distance(self):
        assert check_goal(agent(4, 4))

    def test_goal_just_inside(self):
        assert check_goal(agent(3.3, 3.3))  # distance ~0.99

    def test_goal_far(self):
        assert not check_goal(agent(2, 2))  # distance ~2.83

    def test_distance_penalty(self):
        r, terminal = compute_reward(agent(0, 0), [], self.arena, self.cfg)
        assert r == pytest.approx(-0.32)
        assert not terminal

    def test_goal_shadows_collision(self):
        ego = agent(3.6, 3.6)
        peer = agent(3.6, 3.9, agent_id=1)
        r, terminal = compute_reward(ego, [ego, peer], self.arena, self.cfg)
        assert (r, terminal) == (20.0, True)

    def test_peer_collision_penalty(self):
        ego = agent(0, 0)
        peer = agent(0.4, 0, agent_id=1)
        r, terminal = compute_reward(ego, [ego, peer], self.arena, self.cfg)
        assert (r, terminal) == (-20.0, True)

    @given(
        ex=st.floats(-5, 5), ez=st.floats(-5, 5),
        gx=st.floats(-4.5, 4.5), gz=st.floats(-4.5, 4.5),
        px=st.floats(-5, 5), pz=st.floats(-5, 5),
    )
    @settings(max_examples=200)
    def test_exactly_one_case_fires(self, ex, ez, gx, gz, px, pz):
        ego = agent(ex, ez, goal=(gx, gz))
        peer = agent(px, pz, agent_id=1)
        r, terminal = compute_reward(ego, [ego, peer], self.arena, self.cfg)
        if terminal:
            assert r in (self.cfg.r_goal, self.cfg.r_collision)
        else:
            dx, dz = gx - ex, gz - ez
            assert r == self.cfg.k_t * (dx * dx + dz * dz)


class TestArena:
    def test_goals_inside_walls(self):
        arena = Arena.square(4)
        margin = arena.half_extent - arena.robot_radius
        for gx, gz in arena.goal_positions:
            assert abs(gx) < margin and abs(gz) < margin

    def test_four_walls_enclose_square(self):
        arena = Arena.square(4)
        assert len(arena.wall_segments) == 4
        corners = {p for seg in arena.wall_segments for p in seg}
        assert corners == {(-5, -5), (5, -5), (5, 5), (-5, 5)}
