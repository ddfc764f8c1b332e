"""Twin-trunk MLP with a diagonal-Gaussian policy head and a scalar value
head, plus hand-written reverse-mode gradients.

The policy and value functions each own a trunk of H tanh layers of 128
units (H = 2 or 3 depending on the scenario); sharing one trunk lets the
policy-gradient updates destroy the value fit, which stalls learning. The
policy head emits a 2-d pre-squash mean, bounded to (-3, 3) by a scaled
tanh, and a 2-d observation-conditioned log_std (a linear head off the same
trunk, clamped to [-20, 2]). Sampled raw actions are clamped to [-3, 3],
divided by 3, and mapped affinely onto the actuator ranges;
log-probabilities and entropy are computed on the unclamped Gaussian.

Three choices here are load-bearing for entropy convergence (the smooth
decay of policy randomness over training). The raw action range must be
wider than the Gaussian's initial sigma of 1 (hence clamp at +-3, not +-1):
otherwise exploration noise rarely changes the executed action, the
advantage carries no information about the sampled deviation, and the
gradient pressure that shrinks sigma vanishes. The mean must be bounded at
the clamp range: an unbounded head drifts far past the clamp, which
reproduces the same saturation pathology from the other side. And sigma
must be conditioned on the observation: a single state-independent log_std
coordinate receives only the batch-mean of a very noisy gradient, which
caps its total descent under Adam far above the converged level, while a
linear head can lower sigma through many trunk-correlated weight
directions at once.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .world import OMEGA_MAX, V_MAX, Action

CHECKPOINT_VERSION = 1
RAW_CLAMP = 3.0
LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0
ACTION_DIM = 2
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)
_GAUSSIAN_ENTROPY_CONST = 0.5 * math.log(2.0 * math.pi * math.e)


@dataclass
class PolicyParams:
    """All learnable parameters of one policy (the theta of pi_theta)."""

    weights: list[np.ndarray]   # policy-trunk weight matrices (in_dim, units)
    biases: list[np.ndarray]
    v_weights: list[np.ndarray]  # value-trunk weight matrices
    v_biases: list[np.ndarray]
    w_mu: np.ndarray            # (units, 2) policy-mean head
    b_mu: np.ndarray
    w_sigma: np.ndarray         # (units, 2) log-std head
    b_sigma: np.ndarray
    w_v: np.ndarray             # (units, 1) value head
    b_v: np.ndarray

    @property
    def obs_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def n_hidden_layers(self) -> int:
        return len(self.weights)

    def arrays(self) -> list[np.ndarray]:
        return [*self.weights, *self.biases, *self.v_weights, *self.v_biases,
                self.w_mu, self.b_mu, self.w_sigma, self.b_sigma,
                self.w_v, self.b_v]

    def copy(self) -> "PolicyParams":
        return PolicyParams(
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            v_weights=[w.copy() for w in self.v_weights],
            v_biases=[b.copy() for b in self.v_biases],
            w_mu=self.w_mu.copy(), b_mu=self.b_mu.copy(),
            w_sigma=self.w_sigma.copy(), b_sigma=self.b_sigma.copy(),
            w_v=self.w_v.copy(), b_v=self.b_v.copy(),
        )

    def to_flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def from_flat(self, flat: np.ndarray) -> "PolicyParams":
        """New PolicyParams with the same shapes, values taken from flat."""
        out = self.copy()
        k = 0
        for a in out.arrays():
            a[...] = flat[k:k + a.size].reshape(a.shape)
            k += a.size
        assert k == flat.size
        return out


def _orthogonal(rng: np.random.Generator, shape: tuple[int, int], gain: float) -> np.ndarray:
    a = rng.standard_normal(shape)
    q, r = np.linalg.qr(a if shape[0] >= shape[1] else a.T)
    q = q * np.sign(np.diag(r))
    if shape[0] < shape[1]:
        q = q.T
    return gain * q[: shape[0], : shape[1]]


def init_params(
    obs_dim: int,
    hidden_layers: int = 2,
    hidden_units: int = 128,
    rng: np.random.Generator | None = None,
) -> PolicyParams:
    """Orthogonal trunk init (gain sqrt(2)), small-gain policy-mean head
    (0.01), zero log-std head (unit sigma everywhere at the start, so initial
    actions are near-uniform), unit-gain value head."""
    rng = rng if rng is not None else np.random.default_rng(0)

    def trunk() -> tuple[list[np.ndarray], list[np.ndarray]]:
        ws, bs = [], []
        in_dim = obs_dim
        for _ in range(hidden_layers):
            ws.append(_orthogonal(rng, (in_dim, hidden_units), math.sqrt(2.0)))
            bs.append(np.zeros(hidden_units))
            in_dim = hidden_units
        return ws, bs

    weights, biases = trunk()
    v_weights, v_biases = trunk()
    in_dim = hidden_units if hidden_layers else obs_dim
    return PolicyParams(
        weights=weights,
        biases=biases,
        v_weights=v_weights,
        v_biases=v_biases,
        w_mu=_orthogonal(rng, (in_dim, ACTION_DIM), 0.01),
        b_mu=np.zeros(ACTION_DIM),
        w_sigma=np.zeros((in_dim, ACTION_DIM)),
        b_sigma=np.zeros(ACTION_DIM),
        w_v=_orthogonal(rng, (in_dim, 1), 1.0),
        b_v=np.zeros(1),
    )


def zeros_like_params(params: PolicyParams) -> PolicyParams:
    g = params.copy()
    for a in g.arrays():
        a[...] = 0.0
    return g


def forward_batch(
    params: PolicyParams, obs: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray, tuple]:
    """Batched forward pass. obs is (B, obs_dim); returns (mean (B, 2),
    value (B,), log_std (B, 2), cache) where cache holds the activations
    for backward."""
    if obs.ndim != 2 or obs.shape[1] != params.obs_dim:
        raise ValueError(
            f"observation batch has shape {obs.shape}, expected (*, {params.obs_dim})"
        )
    pol_acts = [obs]
    h = obs
    for w, b in zip(params.weights, params.biases):
        h = np.tanh(h @ w + b)
        pol_acts.append(h)
    mean = RAW_CLAMP * np.tanh(h @ params.w_mu + params.b_mu)
    log_std_pre = h @ params.w_sigma + params.b_sigma
    log_std = np.clip(log_std_pre, LOG_STD_MIN, LOG_STD_MAX)
    val_acts = [obs]
    h = obs
    for w, b in zip(params.v_weights, params.v_biases):
        h = np.tanh(h @ w + b)
        val_acts.append(h)
    value = (h @ params.w_v + params.b_v)[:, 0]
    return mean, value, log_std, (pol_acts, val_acts, mean, log_std_pre)


def forward(params: PolicyParams, obs: np.ndarray) -> tuple[np.ndarray, float]:
    """Single-observation forward pass: (mean (2,), value scalar)."""
    obs = np.asarray(obs, dtype=float)
    if obs.shape != (params.obs_dim,):
        raise ValueError(f"observation has shape {obs.shape}, expected ({params.obs_dim},)")
    mean, value, _, _ = forward_batch(params, obs[None, :])
    return mean[0], float(value[0])


def backward_batch(
    params: PolicyParams,
    cache: tuple,
    dmean: np.ndarray,
    dvalue: np.ndarray,
    dlog_std: np.ndarray | None = None,
) -> PolicyParams:
    """Reverse-mode gradients of sum(dmean * mean) + sum(dvalue * value)
    + sum(dlog_std * log_std) w.r.t. every parameter."""
    pol_acts, val_acts, mean, log_std_pre = cache
    grads = zeros_like_params(params)
    # derivative of the bounded mean head: d(c*tanh(z))/dz = c - mean^2/c
    dz_mu = dmean * (RAW_CLAMP - mean**2 / RAW_CLAMP)
    grads.w_mu[...] = pol_acts[-1].T @ dz_mu
    grads.b_mu[...] = dz_mu.sum(axis=0)
    dh = dz_mu @ params.w_mu.T
    if dlog_std is not None:
        # the clamp on log_std zeroes the gradient outside its range
        dz_sigma = dlog_std * ((log_std_pre > LOG_STD_MIN) & (log_std_pre < LOG_STD_MAX))
        grads.w_sigma[...] = pol_acts[-1].T @ dz_sigma
        grads.b_sigma[...] = dz_sigma.sum(axis=0)
        dh = dh + dz_sigma @ params.w_sigma.T
    for i in range(len(params.weights) - 1, -1, -1):
        dz = dh * (1.0 - pol_acts[i + 1] ** 2)  # tanh'
        grads.weights[i][...] = pol_acts[i].T @ dz
        grads.biases[i][...] = dz.sum(axis=0)
        if i > 0:
            dh = dz @ params.weights[i].T
    dv = dvalue[:, None]
    grads.w_v[...] = val_acts[-1].T @ dv
    grads.b_v[...] = dv.sum(axis=0)
    dh = dv @ params.w_v.T
    for i in range(len(params.v_weights) - 1, -1, -1):
        dz = dh * (1.0 - val_acts[i + 1] ** 2)
        grads.v_weights[i][...] = val_acts[i].T @ dz
        grads.v_biases[i][...] = dz.sum(axis=0)
        if i > 0:
            dh = dz @ params.v_weights[i].T
    return grads


def log_prob(mean: np.ndarray, log_std: np.ndarray, raw: np.ndarray) -> np.ndarray:
    """Diagonal-Gaussian log density of pre-clip raw actions, summed over dims."""
    z = (raw - mean) / np.exp(log_std)
    per_dim = -0.5 * z**2 - log_std - _HALF_LOG_2PI
    return per_dim.sum(axis=-1)


def entropy(log_std: np.ndarray):
    """Closed-form diagonal-Gaussian differential entropy, summed over the
    action dims. Accepts (2,) → float, or a batch (B, 2) → (B,)."""
    out = np.sum(np.asarray(log_std) + _GAUSSIAN_ENTROPY_CONST, axis=-1)
    return float(out) if out.ndim == 0 else out


def raw_to_action(raw: np.ndarray) -> Action:
    """Clamp to [-3, 3], rescale to [-1, 1], then map affinely onto the
    actuator ranges."""
    scaled = np.clip(raw, -RAW_CLAMP, RAW_CLAMP) / RAW_CLAMP
    return Action(v=V_MAX * (scaled[0] + 1.0) / 2.0, omega=OMEGA_MAX * scaled[1])


@dataclass
class DistributionSample:
    action_raw: np.ndarray
    action: Action
    log_prob: float
    entropy: float
    value: float = 0.0
    mean: np.ndarray = field(default=None, repr=False)


def sample_action(
    params: PolicyParams,
    obs: np.ndarray,
    rng: np.random.Generator,
    deterministic: bool = False,
) -> DistributionSample:
    obs = np.asarray(obs, dtype=float)
    if obs.shape != (params.obs_dim,):
        raise ValueError(f"observation has shape {obs.shape}, expected ({params.obs_dim},)")
    mean_b, value_b, log_std_b, _ = forward_batch(params, obs[None, :])
    mean, value, log_std = mean_b[0], float(value_b[0]), log_std_b[0]
    if deterministic:
        raw = mean.copy()
    else:
        raw = mean + np.exp(log_std) * rng.standard_normal(ACTION_DIM)
    return DistributionSample(
        action_raw=raw,
        action=raw_to_action(raw),
        log_prob=float(log_prob(mean, log_std, raw)),
        entropy=float(entropy(log_std)),
        value=value,
        mean=mean,
    )


def save_checkpoint(path, params: PolicyParams, meta: dict | None = None) -> None:
    """Versioned npz tensor dump; reload is bit-exact (float64 throughout)."""
    payload = {
        "version": np.array(CHECKPOINT_VERSION),
        "n_hidden": np.array(len(params.weights)),
        "w_mu": params.w_mu, "b_mu": params.b_mu,
        "w_sigma": params.w_sigma, "b_sigma": params.b_sigma,
        "w_v": params.w_v, "b_v": params.b_v,
        "meta": np.frombuffer(json.dumps(meta or {}).encode(), dtype=np.uint8),
    }
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        payload[f"w{i}"] = w
        payload[f"b{i}"] = b
    for i, (w, b) in enumerate(zip(params.v_weights, params.v_biases)):
        payload[f"vw{i}"] = w
        payload[f"vb{i}"] = b
    np.savez(path, **payload)


def load_checkpoint(path) -> tuple[PolicyParams, dict]:
    with np.load(path) as data:
        version = int(data["version"])
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        n_hidden = int(data["n_hidden"])
        params = PolicyParams(
            weights=[data[f"w{i}"] for i in range(n_hidden)],
            biases=[data[f"b{i}"] for i in range(n_hidden)],
            v_weights=[data[f"vw{i}"] for i in range(n_hidden)],
            v_biases=[data[f"vb{i}"] for i in range(n_hidden)],
            w_mu=data["w_mu"], b_mu=data["b_mu"],
            w_sigma=data["w_sigma"], b_sigma=data["b_sigma"],
            w_v=data["w_v"], b_v=data["b_v"],
        )
        meta = json.loads(data["meta"].tobytes().decode())
    return params, meta
