"""Proximal Policy Optimization with GAE over asynchronous per-agent episodes.

The rollout buffer keeps each agent-episode segment contiguous; advantages are
computed per segment and never leak across a terminal boundary. Truncated
segments (timeouts, buffer cuts) bootstrap with the critic's value of the next
observation; true terminals bootstrap zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .net import (
    PolicyParams,
    backward_batch,
    entropy,
    forward_batch,
    log_prob,
    zeros_like_params,
)


@dataclass
class PPOConfig:
    batch_size: int = 1024
    buffer_size: int = 10240
    epochs: int = 3
    learning_rate: float = 3e-4
    entropy_beta: float = 0.05
    clip_epsilon: float = 0.2
    gae_lambda: float = 0.97
    discount: float = 0.99
    max_steps: int = 2_500_000
    # The clip range anneals linearly over the whole run, like the learning
    # rate. The entropy strength anneals linearly to exactly zero within the
    # first beta_anneal_frac of the run: under Adam any constant nonzero
    # entropy bonus produces a steady upward drift of log_std (the per-
    # coordinate normalization turns even a tiny constant gradient into
    # ~lr-sized steps), so the bonus must vanish, and vanish early enough for
    # the surrogate term to pull the exploration noise down afterwards.
    beta_final: float = 0.0
    beta_anneal_frac: float = 0.1
    clip_epsilon_final: float = 0.1
    value_coef: float = 0.5
    max_grad_norm: float = 0.5
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    normalize_advantages: bool = True

    def __post_init__(self):
        if self.buffer_size % self.batch_size != 0:
            raise ValueError("buffer_size must be a multiple of batch_size")
        if not 0.0 <= self.discount <= 1.0:
            raise ValueError("discount must lie in [0, 1]")
        if not 0.0 < self.clip_epsilon < 1.0:
            raise ValueError("clip_epsilon must lie in (0, 1)")


def compute_gae(
    rewards: np.ndarray,
    values: np.ndarray,
    terminals: np.ndarray,
    gamma: float,
    lam: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Generalized advantage estimation over one contiguous segment.

    values has length T+1: the last entry is the bootstrap value for the step
    after the segment (0 for a true terminal). terminals[t] masks the
    bootstrap and the advantage recursion at environment terminals.
    """
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    terminals = np.asarray(terminals, dtype=bool)
    T = rewards.shape[0]
    if values.shape[0] != T + 1 or terminals.shape[0] != T:
        raise ValueError("length mismatch: need len(values) == T+1, len(terminals) == T")
    advantages = np.empty(T)
    gae = 0.0
    for t in range(T - 1, -1, -1):
        nonterminal = 0.0 if terminals[t] else 1.0
        delta = rewards[t] + gamma * values[t + 1] * nonterminal - values[t]
        gae = delta + gamma * lam * nonterminal * gae
        advantages[t] = gae
    return advantages, advantages + values[:-1]


@dataclass
class _Segment:
    obs: list = field(default_factory=list)
    raw: list = field(default_factory=list)
    log_probs: list = field(default_factory=list)
    values: list = field(default_factory=list)
    rewards: list = field(default_factory=list)
    terminals: list = field(default_factory=list)
    agent_ids: list = field(default_factory=list)


class RolloutBuffer:
    """Per-policy transition store feeding PPO updates.

    One open segment per agent; closing a segment records its bootstrap value.
    """

    def __init__(self, gamma: float, lam: float):
        self.gamma = gamma
        self.lam = lam
        self._open: dict[int, _Segment] = {}
        self._closed: list[tuple[_Segment, float]] = []
        self.size = 0

    def add(
        self,
        agent_id: int,
        obs: np.ndarray,
        raw: np.ndarray,
        log_prob_old: float,
        value_old: float,
        reward: float,
        terminal: bool,
    ) -> None:
        seg = self._open.setdefault(agent_id, _Segment())
        seg.obs.append(obs)
        seg.raw.append(raw)
        seg.log_probs.append(log_prob_old)
        seg.values.append(value_old)
        seg.rewards.append(reward)
        seg.terminals.append(terminal)
        seg.agent_ids.append(agent_id)
        self.size += 1

    @property
    def open_agent_ids(self) -> list[int]:
        return list(self._open)

    def close_segment(self, agent_id: int, bootstrap_value: float) -> None:
        """End the agent's open segment. Pass 0 after a true terminal, or the
        critic's value of the next observation for truncations and cuts."""
        seg = self._open.pop(agent_id, None)
        if seg is not None and seg.rewards:
            self._closed.append((seg, bootstrap_value))

    def drain(self, bootstrap_values: dict[int, float]) -> dict[str, np.ndarray]:
        """Close any remaining open segments and flatten everything into
        training arrays with per-segment GAE. Clears the buffer."""
        for agent_id in list(self._open):
            self.close_segment(agent_id, bootstrap_values.get(agent_id, 0.0))
        parts = {k: [] for k in
                 ("obs", "raw", "log_prob_old", "value_old", "advantage",
                  "return_target", "agent_id")}
        for seg, bootstrap in self._closed:
            values = np.array(seg.values + [bootstrap])
            adv, ret = compute_gae(
                np.array(seg.rewards), values, np.array(seg.terminals),
                self.gamma, self.lam,
            )
            parts["obs"].append(np.array(seg.obs))
            parts["raw"].append(np.array(seg.raw))
            parts["log_prob_old"].append(np.array(seg.log_probs))
            parts["value_old"].append(np.array(seg.values))
            parts["advantage"].append(adv)
            parts["return_target"].append(ret)
            parts["agent_id"].append(np.array(seg.agent_ids))
        self._closed = []
        self._open = {}
        self.size = 0
        return {k: np.concatenate(v) for k, v in parts.items()}


class NonFiniteLossError(RuntimeError):
    """Raised when a PPO update produces a non-finite intermediate."""


def ppo_loss_and_grads(
    params: PolicyParams,
    batch: dict[str, np.ndarray],
    cfg: PPOConfig,
) -> tuple[float, PolicyParams, dict[str, float]]:
    """Composite clipped-surrogate loss and its exact gradients.

    loss = -mean(min(rho * A, clip(rho) * A))
           + value_coef * mean((v - return)^2)
           - entropy_beta * entropy
    where rho = exp(log_prob_new - log_prob_old). Batch advantages are
    expected to be pre-normalized by the caller.
    """
    obs = batch["obs"]
    raw = batch["raw"]
    adv = batch["advantage"]
    logp_old = batch["log_prob_old"]
    returns = batch["return_target"]
    B = obs.shape[0]

    mean, value, log_std, cache = forward_batch(params, obs)
    sigma_sq = np.exp(2.0 * log_std)
    logp_new = log_prob(mean, log_std, raw)
    ratio = np.exp(logp_new - logp_old)
    unclipped = ratio * adv
    clipped = np.clip(ratio, 1.0 - cfg.clip_epsilon, 1.0 + cfg.clip_epsilon) * adv
    surrogate = np.minimum(unclipped, clipped)
    policy_loss = -surrogate.mean()
    value_err = value - returns
    value_loss = np.mean(value_err**2)
    ent = float(np.mean(entropy(log_std)))
    loss = policy_loss + cfg.value_coef * value_loss - cfg.entropy_beta * ent
    if not np.isfinite(loss):
        raise NonFiniteLossError(
            f"non-finite PPO loss (policy={policy_loss}, value={value_loss})"
        )

    # d loss / d logp_new: only where the unclipped branch is the active min.
    active = unclipped <= clipped
    dlogp = np.where(active, -ratio * adv, 0.0) / B
    diff = raw - mean
    dmean = dlogp[:, None] * (diff / sigma_sq)  # chain through logp's mean dependence
    dvalue = 2.0 * cfg.value_coef * value_err / B
    # log_std gradient: density term plus the entropy bonus
    # (d ent / d log_std = 1/B per coordinate under the batch mean).
    dlogp_dlogstd = diff**2 / sigma_sq - 1.0
    dlog_std = dlogp[:, None] * dlogp_dlogstd - cfg.entropy_beta / B

    grads = backward_batch(params, cache, dmean, dvalue, dlog_std)

    stats = {
        "loss": float(loss),
        "policy_loss": float(policy_loss),
        "value_loss": float(value_loss),
        "entropy": ent,
        "clip_fraction": float(np.mean(~active)),
    }
    return float(loss), grads, stats


def ppo_loss(params: PolicyParams, batch: dict[str, np.ndarray], cfg: PPOConfig) -> float:
    loss, _, _ = ppo_loss_and_grads(params, batch, cfg)
    return loss


def clip_grad_norm(grads: PolicyParams, max_norm: float) -> float:
    total = float(np.sqrt(sum(float(np.sum(a**2)) for a in grads.arrays())))
    if total > max_norm and total > 0.0:
        scale = max_norm / total
        for a in grads.arrays():
            a *= scale
    return total


class Adam:
    """Adaptive-moment optimizer over a PolicyParams pytree."""

    def __init__(self, params: PolicyParams, cfg: PPOConfig):
        self.beta1 = cfg.adam_beta1
        self.beta2 = cfg.adam_beta2
        self.eps = cfg.adam_eps
        self.t = 0
        self.m = zeros_like_params(params)
        self.v = zeros_like_params(params)

    def step(self, params: PolicyParams, grads: PolicyParams, lr: float) -> None:
        self.t += 1
        bias1 = 1.0 - self.beta1**self.t
        bias2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(
            params.arrays(), grads.arrays(), self.m.arrays(), self.v.arrays()
        ):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g**2
            p -= lr * (m / bias1) / (np.sqrt(v / bias2) + self.eps)


def learning_rate(cfg: PPOConfig, step_counter: int) -> float:
    """Linear decay from the base rate to zero at max_steps."""
    frac = min(max(step_counter / cfg.max_steps, 0.0), 1.0)
    return cfg.learning_rate * (1.0 - frac)


def annealed(cfg: PPOConfig, step_counter: int) -> PPOConfig:
    """Config with entropy_beta and clip_epsilon linearly annealed: the clip
    range reaches its floor at max_steps, the entropy strength reaches
    beta_final within the first beta_anneal_frac of the run."""
    frac = min(max(step_counter / cfg.max_steps, 0.0), 1.0)
    beta_frac = min(frac / cfg.beta_anneal_frac, 1.0) if cfg.beta_anneal_frac > 0 else 1.0
    return replace(
        cfg,
        entropy_beta=cfg.entropy_beta + beta_frac * (cfg.beta_final - cfg.entropy_beta),
        clip_epsilon=cfg.clip_epsilon
        + frac * (cfg.clip_epsilon_final - cfg.clip_epsilon),
    )


def update(
    params: PolicyParams,
    optimizer: Adam,
    data: dict[str, np.ndarray],
    cfg: PPOConfig,
    step_counter: int,
    rng: np.random.Generator,
) -> dict[str, float]:
    """Run epochs x (buffer/batch) minibatch gradient steps in place.

    data is the drained buffer; advantages are normalized here, once per
    update, before slicing into minibatches.
    """
    n = data["obs"].shape[0]
    if n < cfg.buffer_size:
        raise ValueError(f"buffer underfull: {n} < {cfg.buffer_size}")
    adv = data["advantage"]
    if cfg.normalize_advantages:
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    lr = learning_rate(cfg, step_counter)
    step_cfg = annealed(cfg, step_counter)
    ret_var = float(np.var(data["return_target"]))
    explained_var = (
        1.0 - float(np.var(data["return_target"] - data["value_old"])) / ret_var
        if ret_var > 0 else 0.0
    )
    stats_acc: dict[str, float] = {}
    n_batches = 0
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n - cfg.batch_size + 1, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            batch = {
                "obs": data["obs"][idx],
                "raw": data["raw"][idx],
                "log_prob_old": data["log_prob_old"][idx],
                "advantage": adv[idx],
                "return_target": data["return_target"][idx],
            }
            _, grads, stats = ppo_loss_and_grads(params, batch, step_cfg)
            clip_grad_norm(grads, cfg.max_grad_norm)
            optimizer.step(params, grads, lr)
            for k, v in stats.items():
                stats_acc[k] = stats_acc.get(k, 0.0) + v
            n_batches += 1
    out = {k: v / n_batches for k, v in stats_acc.items()}
    out["learning_rate"] = lr
    out["explained_variance"] = explained_var
    out["n_minibatches"] = float(n_batches)
    return out
