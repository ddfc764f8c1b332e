"""Evaluate a policy and draw what it actually did.

Every evaluation episode carries its full trajectory (pose and command per
decision step). `export_trajectories` turns a batch of episode records into:

    trajectories.svg   top-down paths, one panel per agent, goals marked
    velocities.svg     commanded v and omega over time
    agent{i}_trajectory.csv  the raw numbers behind both plots

Run demo 02 first if you want to plot a (slightly) trained policy; this
script trains its own throwaway policy so it works standalone.
"""

import tempfile
from pathlib import Path

from marlnav.config import run_config_from_dict
from marlnav.evaluate import evaluate, export_trajectories, load_policies
from marlnav.train import train


def main():
    run = run_config_from_dict({
        "preset": "g2gca_cp",
        "seed": 5,
        "checkpoint_interval": 30_000,
        "ppo": {"max_steps": 30_000},
    })
    work = Path(tempfile.mkdtemp(prefix="marlnav_traj_"))
    train(run, work)

    policies, meta = load_policies(work / "checkpoints" / "policy_final.npz",
                                   run.n_agents)
    report = evaluate(policies, run.experiment, n_episodes=10, seed=0,
                      normalize_obs=meta.get("normalize_obs", True))

    paths = export_trajectories(report.records, work)
    print(f"average success: {report.average_success_rate:.1f}%")
    print(f"paths plot:      {paths['trajectories']}")
    print(f"commands plot:   {paths['velocities']}")
    print(f"raw CSVs:        {work}/agent*_trajectory.csv")
    print("\nThe same plots can be regenerated later from stored records:")
    print("  marlnav replay --records <eval_out>/records.ndjson --out replay/")


if __name__ == "__main__":
    main()
