"""A guided tour of the simulator, no learning involved.

Four differential-drive robots live in a 10 m x 10 m walled arena. Each one
starts at the midpoint of a wall and wants the corner diagonally to its
right. Physics ticks at 50 Hz; agents pick a new (speed, yaw-rate) command
every 5 ticks, i.e. every 0.1 s of simulated time.

Here we drive them with a hand-written controller — turn toward the goal,
then floor it — to show the step/respawn API and the reward structure
before any neural network enters the picture.
"""

import math

import numpy as np

from marlnav.scenario import Experiment, World, WorldConfig
from marlnav.world import Action, OMEGA_MAX, V_MAX


def steer_to_goal(agent):
    """Proportional heading controller: slow down while badly misaligned."""
    dx = agent.goal[0] - agent.pose.px
    dz = agent.goal[1] - agent.pose.pz
    desired = math.atan2(dx, dz)           # heading 0 points along +z
    err = (desired - agent.pose.theta + math.pi) % (2 * math.pi) - math.pi
    omega = max(-OMEGA_MAX, min(OMEGA_MAX, 4.0 * err))
    v = V_MAX if abs(err) < 0.5 else 0.2 * V_MAX
    return Action(v=v, omega=omega)


def main():
    cfg = WorldConfig(n_agents=4, experiment=Experiment.G2GCA, seed=0,
                      max_decision_steps=200)
    world = World(cfg, rng=np.random.default_rng(0))

    print("spawn poses (x, z, heading):")
    for a in world.agents:
        print(f"  agent {a.agent_id}: ({a.pose.px:+.1f}, {a.pose.pz:+.1f}, "
              f"{a.pose.theta:+.2f} rad) -> goal {a.goal}")

    finished = 0
    for step in range(200):
        actions = {a.agent_id: steer_to_goal(a) for a in world.agents
                   if a.status.name == "ACTIVE"}
        results = world.step(actions)
        for agent_id, res in results.items():
            if res.done:
                record = world.respawn_if_terminal(agent_id)
                finished += 1
                print(f"step {step:3d}: agent {agent_id} -> {record.outcome.value} "
                      f"after {record.decision_steps} decisions, "
                      f"cumulative reward {record.cumulative_reward:+.2f}")
        if finished >= 8:
            break

    print("\nThe reward per decision is +20 on goal arrival, -20 on any")
    print("collision, and -0.01 * (distance to goal)^2 otherwise — so even a")
    print("successful run accumulates a distance tax on its way in.")


if __name__ == "__main__":
    main()
