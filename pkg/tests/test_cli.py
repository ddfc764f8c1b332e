import json

import pytest
import yaml

from marlnav.cli import EXIT_OK, EXIT_RUNTIME, EXIT_VALIDATION, main
from marlnav.net import init_params, save_checkpoint


SMOKE_CONFIG = {
    "preset": "g2gca_cp",
    "seed": 7,
    "checkpoint_interval": 4000,
    "ppo": {"max_steps": 4000, "buffer_size": 1024, "batch_size": 256},
}


def write_config(tmp_path, overrides=None, name="run.yaml"):
    cfg = dict(SMOKE_CONFIG)
    if overrides:
        cfg.update(overrides)
    path = tmp_path / name
    path.write_text(yaml.safe_dump(cfg))
    return path


class TestTrain:
    def test_smoke_run_produces_artifacts(self, tmp_path):
        cfg = write_config(tmp_path)
        out = tmp_path / "out"
        assert main(["train", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
        assert (out / "metrics.csv").exists()
        assert (out / "checkpoints" / "policy_final.npz").exists()
        assert (out / "config.yaml").exists()

    def test_seed_flag_overrides_config(self, tmp_path):
        cfg = write_config(tmp_path)
        out = tmp_path / "out"
        main(["train", "--config", str(cfg), "--seed", "99", "--out", str(out)])
        echoed = yaml.safe_load((out / "config.yaml").read_text())
        assert echoed["seed"] == 99

    def test_malformed_config_exits_1_without_out_dir(self, tmp_path):
        cfg = write_config(tmp_path, {"no_such_field": 1})
        out = tmp_path / "should_not_exist"
        assert main(["train", "--config", str(cfg), "--out", str(out)]) == EXIT_VALIDATION
        assert not out.exists()

    def test_missing_config_file_exits_1(self, tmp_path):
        assert main(["train", "--config", str(tmp_path / "nope.yaml")]) == EXIT_VALIDATION

    def test_invalid_field_value_exits_1(self, tmp_path):
        cfg = write_config(tmp_path, {"n_agents": 1})
        assert main(["train", "--config", str(cfg)]) == EXIT_VALIDATION


class TestEval:
    def test_train_then_eval_round_trip(self, tmp_path):
        cfg = write_config(tmp_path)
        out = tmp_path / "out"
        main(["train", "--config", str(cfg), "--out", str(out)])
        eval_out = tmp_path / "eval"
        code = main(["eval",
                     "--checkpoint", str(out / "checkpoints" / "policy_final.npz"),
                     "--experiment", "g2gca", "--episodes", "3",
                     "--out", str(eval_out)])
        assert code == EXIT_OK
        report = json.loads((eval_out / "report.json").read_text())
        assert len(report["per_agent_success_rate"]) == 4
        assert (eval_out / "records.ndjson").exists()
        assert (eval_out / "trajectories.svg").exists()

    def test_missing_checkpoint_exits_1(self, tmp_path):
        assert main(["eval", "--checkpoint", str(tmp_path / "nope.npz"),
                     "--experiment", "g2gca"]) == EXIT_VALIDATION

    def test_corrupt_checkpoint_exits_2(self, tmp_path):
        bad = tmp_path / "bad.npz"
        bad.write_bytes(b"not an npz")
        assert main(["eval", "--checkpoint", str(bad),
                     "--experiment", "g2gca"]) == EXIT_RUNTIME

    def test_wrong_agent_count_for_checkpoint_exits_2(self, tmp_path):
        # a 4-agent policy has obs_dim 10; asking for 6 agents must fail loudly
        ckpt = tmp_path / "policy.npz"
        save_checkpoint(ckpt, init_params(10))
        assert main(["eval", "--checkpoint", str(ckpt), "--experiment", "g2gca",
                     "--episodes", "1", "--agents", "6",
                     "--out", str(tmp_path / "e")]) == EXIT_RUNTIME


class TestReplay:
    def test_round_trip_from_eval_records(self, tmp_path):
        ckpt = tmp_path / "policy.npz"
        save_checkpoint(ckpt, init_params(10))
        eval_out = tmp_path / "eval"
        main(["eval", "--checkpoint", str(ckpt), "--experiment", "g2gca",
              "--episodes", "2", "--out", str(eval_out)])
        replay_out = tmp_path / "replay"
        code = main(["replay", "--records", str(eval_out / "records.ndjson"),
                     "--out", str(replay_out)])
        assert code == EXIT_OK
        assert (replay_out / "trajectories.svg").exists()

    def test_missing_records_exits_1(self, tmp_path):
        assert main(["replay", "--records", str(tmp_path / "nope.ndjson")]) \
            == EXIT_VALIDATION

    def test_truncated_records_exit_1(self, tmp_path):
        path = tmp_path / "bad.ndjson"
        path.write_text('{"schema_version": 1, "agent_id"')
        assert main(["replay", "--records", str(path)]) == EXIT_VALIDATION

    def test_empty_records_exit_1(self, tmp_path):
        path = tmp_path / "empty.ndjson"
        path.write_text("")
        assert main(["replay", "--records", str(path)]) == EXIT_VALIDATION


class TestParser:
    def test_no_subcommand_is_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            main([])
        assert exc.value.code == 2

    def test_unknown_experiment_is_usage_error(self, tmp_path):
        with pytest.raises(SystemExit):
            main(["eval", "--checkpoint", str(tmp_path), "--experiment", "bogus"])
