import math

import numpy as np
import pytest

from marlnav.net import (
    DistributionSample,
    PolicyParams,
    backward_batch,
    entropy,
    forward,
    forward_batch,
    init_params,
    load_checkpoint,
    log_prob,
    raw_to_action,
    sample_action,
    save_checkpoint,
)


def zero_params(obs_dim=10, hidden_layers=2):
    p = init_params(obs_dim, hidden_layers=hidden_layers)
    for a in p.arrays():
        a[...] = 0.0
    return p


class TestForward:
    def test_zero_network(self):
        params = zero_params()
        mean, value = forward(params, np.ones(10))
        np.testing.assert_array_equal(mean, [0.0, 0.0])
        assert value == 0.0

    def test_purity(self):
        rng = np.random.default_rng(1)
        params = init_params(10, rng=rng)
        obs = rng.standard_normal(10)
        assert forward(params, obs)[0].tolist() == forward(params, obs)[0].tolist()
        assert forward(params, obs)[1] == forward(params, obs)[1]

    def test_against_matrix_multiply_oracle(self):
        rng = np.random.default_rng(2)
        params = init_params(10, hidden_layers=3, rng=rng)
        obs = rng.standard_normal(10)
        mean, value = forward(params, obs)
        # independently coded chain of matmuls
        h = obs
        for w, b in zip(params.weights, params.biases):
            h = np.tanh(w.T @ h + b)
        exp_mean = 3.0 * np.tanh(params.w_mu.T @ h + params.b_mu)
        exp_log_std = np.clip(params.w_sigma.T @ h + params.b_sigma, -20.0, 2.0)
        _, _, log_std, _ = forward_batch(params, obs[None, :])
        np.testing.assert_allclose(log_std[0], exp_log_std, rtol=1e-12, atol=1e-15)
        h = obs
        for w, b in zip(params.v_weights, params.v_biases):
            h = np.tanh(w.T @ h + b)
        exp_value = float((params.w_v.T @ h + params.b_v)[0])
        np.testing.assert_allclose(mean, exp_mean, rtol=1e-12)
        assert value == pytest.approx(exp_value, rel=1e-12)

    def test_dimension_mismatch_rejected(self):
        params = init_params(10)
        with pytest.raises(ValueError):
            forward(params, np.zeros(8))


class TestBackward:
    def test_linear_net_squared_loss(self):
        # single tanh layer around zero behaves linearly; compare to the
        # hand-derived gradient of 0.5 * mean^2 at small weights
        params = init_params(3, hidden_layers=1, hidden_units=4)
        for a in params.arrays():
            a *= 1e-4
        obs = np.array([[0.3, -0.2, 0.5]])
        mean, value, _, cache = forward_batch(params, obs)
        grads = backward_batch(params, cache, dmean=mean.copy(),
                               dvalue=np.zeros(1))
        # around zero the bounded mean head is linear with slope 3
        h = np.tanh(obs @ params.weights[0] + params.biases[0])
        expected_w_mu = 3.0 * (h.T @ mean)
        np.testing.assert_allclose(grads.w_mu, expected_w_mu, rtol=1e-6)

    def test_matches_finite_differences(self):
        from marlnav.selftest import finite_difference_grads

        rng = np.random.default_rng(3)
        for layers in (2, 3):
            params = init_params(10, hidden_layers=layers, rng=rng)
            obs = rng.standard_normal((8, 10))
            target = rng.standard_normal(8)

            def loss_of(flat):
                p = params.from_flat(flat)
                _, value, _, _ = forward_batch(p, obs)
                return float(np.mean((value - target) ** 2))

            _, value, _, cache = forward_batch(params, obs)
            grads = backward_batch(
                params, cache,
                dmean=np.zeros((8, 2)),
                dvalue=2.0 * (value - target) / 8.0,
            )
            flat = params.to_flat()
            coords = rng.choice(flat.size, size=100, replace=False)
            fd = finite_difference_grads(loss_of, flat, coords)
            analytic = grads.to_flat()[coords]
            # log_std never affects the value head
            mask = np.abs(fd) > 1e-8
            rel = np.abs(analytic[mask] - fd[mask]) / np.abs(fd[mask])
            assert rel.max() < 1e-4

    def test_constant_loss_zero_gradients(self):
        params = init_params(10)
        obs = np.zeros((4, 10))
        _, _, _, cache = forward_batch(params, obs)
        grads = backward_batch(params, cache, np.zeros((4, 2)), np.zeros(4))
        assert all(np.all(a == 0) for a in grads.arrays())


class TestDistribution:
    def test_near_deterministic_at_tiny_std(self):
        rng = np.random.default_rng(4)
        params = init_params(10, rng=rng)
        params.w_sigma[...] = 0.0
        params.b_sigma[...] = -20.0
        obs = rng.standard_normal(10)
        mean, _ = forward(params, obs)
        for _ in range(5):
            s = sample_action(params, obs, rng)
            np.testing.assert_allclose(s.action_raw, mean, atol=1e-7)

    def test_affine_action_map_endpoints(self):
        a = raw_to_action(np.array([3.0, 0.0]))
        assert a.v == pytest.approx(0.05)
        assert a.omega == 0.0
        a = raw_to_action(np.array([-3.0, 3.0]))
        assert a.v == 0.0
        assert a.omega == pytest.approx(math.pi)
        # clamping before the rescale-and-map
        a = raw_to_action(np.array([5.0, -7.0]))
        assert a.v == pytest.approx(0.05)
        assert a.omega == pytest.approx(-math.pi)
        # interior point: one third of the range
        a = raw_to_action(np.array([1.0, 1.0]))
        assert a.v == pytest.approx(0.05 * (1.0 / 3.0 + 1.0) / 2.0)
        assert a.omega == pytest.approx(math.pi / 3.0)

    def test_entropy_closed_form(self):
        assert entropy(np.zeros(2)) == pytest.approx(2.837877, abs=1e-6)

    def test_log_prob_consistency(self):
        # exp of summed per-dim log densities equals the product of densities
        rng = np.random.default_rng(5)
        mean = rng.standard_normal(2)
        log_std = rng.uniform(-1, 1, size=2)
        raw = rng.standard_normal(2)
        joint = math.exp(float(log_prob(mean, log_std, raw)))
        product = 1.0
        for k in range(2):
            sigma = math.exp(log_std[k])
            product *= math.exp(-0.5 * ((raw[k] - mean[k]) / sigma) ** 2) / (
                sigma * math.sqrt(2 * math.pi)
            )
        assert joint == pytest.approx(product, rel=1e-12)

    def test_entropy_matches_monte_carlo(self):
        rng = np.random.default_rng(6)
        log_std = np.array([0.3, -0.5])
        sigma = np.exp(log_std)
        samples = rng.standard_normal((1_000_000, 2)) * sigma
        logps = log_prob(np.zeros(2), log_std, samples)
        mc_entropy = -float(np.mean(logps))
        assert mc_entropy == pytest.approx(entropy(log_std), rel=0.01)

    def test_sample_records_matching_log_prob(self):
        rng = np.random.default_rng(7)
        params = init_params(10, rng=rng)
        obs = rng.standard_normal(10)
        s = sample_action(params, obs, rng)
        mean, _, log_std, _ = forward_batch(params, obs[None, :])
        assert s.log_prob == pytest.approx(
            float(log_prob(mean[0], log_std[0], s.action_raw)), rel=1e-12
        )


class TestCheckpoint:
    def test_round_trip_bitwise(self, tmp_path):
        rng = np.random.default_rng(8)
        params = init_params(10, hidden_layers=3, rng=rng)
        params.b_sigma[...] = [-0.7, 0.3]
        params.w_sigma[...] = rng.standard_normal(params.w_sigma.shape) * 0.01
        path = tmp_path / "ckpt.npz"
        save_checkpoint(path, params, {"experiment": "ape", "step": 123})
        loaded, meta = load_checkpoint(path)
        assert meta == {"experiment": "ape", "step": 123}
        for a, b in zip(params.arrays(), loaded.arrays()):
            np.testing.assert_array_equal(a, b)
        obs = rng.standard_normal(10)
        m1, v1 = forward(params, obs)
        m2, v2 = forward(loaded, obs)
        assert m1.tobytes() == m2.tobytes()
        assert v1 == v2

    def test_version_mismatch_rejected(self, tmp_path):
        import marlnav.net as net

        params = init_params(10)
        path = tmp_path / "ckpt.npz"
        save_checkpoint(path, params)
        data = dict(np.load(path))
        data["version"] = np.array(99)
        np.savez(path, **data)
        with pytest.raises(ValueError, match="version"):
            load_checkpoint(path)
