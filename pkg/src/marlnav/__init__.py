"""Deterministic multi-robot navigation simulator with from-scratch PPO
training and evaluation for decentralized collision-avoidance policies."""

from .config import PRESETS, RunConfig, TrainingMode, load_run_config
from .evaluate import EvalReport, evaluate, export_trajectories, measure_latency
from .net import PolicyParams, forward, init_params, sample_action
from .ppo import PPOConfig, RolloutBuffer, compute_gae
from .scenario import (
    EpisodeRecord,
    Experiment,
    Outcome,
    World,
    WorldConfig,
    build_observation,
    spawn,
)
from .train import train
from .world import (
    Action,
    AgentState,
    Arena,
    Pose,
    RewardConfig,
    check_goal,
    compute_reward,
    detect_collision,
    step_kinematics,
)

__version__ = "0.1.0"
