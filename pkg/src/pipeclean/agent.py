"""Policy learning over the cleaning environment.

The main learner is a clipped-surrogate policy-gradient method: tanh MLPs for
policy and value (two hidden layers of 256 units), generalized advantage
estimation, minibatched Adam updates with a global gradient-norm cap, and an
entropy bonus against premature collapse on small action spaces. Everything is
float32 numpy with hand-written backpropagation, so training is deterministic
per seed and checkpoints round-trip bit-exactly.

A tabular epsilon-greedy Q-learner over a quantile-binned observation space is
kept as a sanity reference.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, TrainingDivergence

CHECKPOINT_MAGIC = b"PIPECKPT"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class PolicySpec:
    action_dim: int
    input_dim: int = 9
    hidden: tuple = (256, 256)
    learning_rate: float = 3e-4
    clip_ratio: float = 0.2
    gamma: float = 0.99
    gae_lambda: float = 0.95
    rollout_steps: int = 256
    epochs: int = 4
    minibatch: int = 64
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    max_grad_norm: float = 0.5
    seed: int = 42


class MLP:
    """Tanh feed-forward net with a linear output layer, float32."""

    def __init__(self, sizes, rng: np.random.Generator):
        self.sizes = list(sizes)
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            w = rng.uniform(-limit, limit, size=(fan_in, fan_out)).astype(np.float32)
            self.weights.append(w)
            self.biases.append(np.zeros(fan_out, dtype=np.float32))

    def forward(self, X: np.ndarray):
        """Returns the list of layer activations; last entry is the output."""
        acts = [np.asarray(X, dtype=np.float32)]
        a = acts[0]
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ w + b
            a = z if i == last else np.tanh(z)
            acts.append(a)
        return acts

    def __call__(self, X: np.ndarray) -> np.ndarray:
        return self.forward(X)[-1]

    def backward(self, acts, grad_out: np.ndarray):
        """Gradients of a scalar loss given d loss / d output."""
        grads_w = [None] * len(self.weights)
        grads_b = [None] * len(self.biases)
        g = np.asarray(grad_out, dtype=np.float32)
        for i in range(len(self.weights) - 1, -1, -1):
            a_in = acts[i]
            grads_w[i] = a_in.T @ g
            grads_b[i] = g.sum(axis=0)
            if i > 0:
                g = (g @ self.weights[i].T) * (1.0 - acts[i] ** 2)
        return grads_w, grads_b

    def parameters(self):
        return self.weights + self.biases

    def set_parameters(self, params):
        n = len(self.weights)
        self.weights = [np.asarray(p, dtype=np.float32) for p in params[:n]]
        self.biases = [np.asarray(p, dtype=np.float32) for p in params[n:]]


class Adam:
    def __init__(self, params, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = np.float32(lr)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= (self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)).astype(np.float32)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def clip_global_norm(grads, max_norm: float):
    total = np.sqrt(sum(float((g ** 2).sum()) for g in grads))
    if total > max_norm and total > 0:
        scale = np.float32(max_norm / total)
        grads = [g * scale for g in grads]
    return grads


@dataclass
class TrainLog:
    episode_returns: list = field(default_factory=list)
    episode_end_steps: list = field(default_factory=list)
    total_steps: int = 0
    convergence_step: int | None = None
    rolling_at_2k: float | None = None
    spec: dict = field(default_factory=dict)

    def rolling_mean(self, window: int = 100) -> float:
        if not self.episode_returns:
            return float("nan")
        tail = self.episode_returns[-window:]
        return float(np.mean(tail))

    def rolling_mean_at_step(self, step: int, window: int = 100) -> float:
        done = [r for r, s in zip(self.episode_returns, self.episode_end_steps) if s <= step]
        if not done:
            return float("nan")
        return float(np.mean(done[-window:]))

    def rolling_series(self, window: int = 100) -> list:
        """Per-episode rolling means, one per completed episode."""
        out = []
        for i in range(len(self.episode_returns)):
            lo = max(0, i + 1 - window)
            out.append(float(np.mean(self.episode_returns[lo:i + 1])))
        return out


def convergence_step_from_episodes(returns, end_steps, total_steps: int,
                                   window: int = 100, span: int = 500,
                                   tol: float = 1e-3):
    """Earliest step at which the `window`-episode rolling mean has varied by
    less than `tol` over the previous `span` steps; None if never."""
    if len(returns) < window:
        return None
    # Step-indexed rolling mean, defined from the end of episode `window`.
    ms = np.full(total_steps + 1, np.nan)
    for i in range(window - 1, len(returns)):
        lo = i + 1 - window
        ms[end_steps[i]:] = float(np.mean(returns[lo:i + 1]))
    for step in range(1, total_steps + 1):
        lo = step - span
        if lo < 1:
            continue
        seg = ms[lo:step + 1]
        if np.isnan(seg).any():
            continue
        if seg.max() - seg.min() < tol:
            return step
    return None


@dataclass(frozen=True)
class PolicyCheckpoint:
    spec: PolicySpec
    policy_params: tuple
    value_params: tuple
    train_steps: int
    source: str = ""
    suite: str = ""
    reward_kind: str = ""
    converged: bool = False

    def save(self, path) -> None:
        header = {
            "action_dim": self.spec.action_dim,
            "input_dim": self.spec.input_dim,
            "hidden": list(self.spec.hidden),
            "learning_rate": self.spec.learning_rate,
            "clip_ratio": self.spec.clip_ratio,
            "gamma": self.spec.gamma,
            "gae_lambda": self.spec.gae_lambda,
            "rollout_steps": self.spec.rollout_steps,
            "epochs": self.spec.epochs,
            "minibatch": self.spec.minibatch,
            "entropy_coef": self.spec.entropy_coef,
            "value_coef": self.spec.value_coef,
            "max_grad_norm": self.spec.max_grad_norm,
            "seed": self.spec.seed,
            "train_steps": self.train_steps,
            "source": self.source,
            "suite": self.suite,
            "reward_kind": self.reward_kind,
            "converged": self.converged,
            "policy_shapes": [list(p.shape) for p in self.policy_params],
            "value_shapes": [list(p.shape) for p in self.value_params],
        }
        head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
        blob = b"".join(np.ascontiguousarray(p, dtype="<f4").tobytes()
                        for p in list(self.policy_params) + list(self.value_params))
        with open(path, "wb") as fh:
            fh.write(CHECKPOINT_MAGIC)
            fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(head)))
            fh.write(head)
            fh.write(blob)

    @staticmethod
    def load(path) -> "PolicyCheckpoint":
        with open(path, "rb") as fh:
            magic = fh.read(len(CHECKPOINT_MAGIC))
            if magic != CHECKPOINT_MAGIC:
                raise InputError(f"{path}: not a policy checkpoint")
            version, head_len = struct.unpack("<II", fh.read(8))
            if version != CHECKPOINT_VERSION:
                raise InputError(f"{path}: unsupported checkpoint version {version}")
            header = json.loads(fh.read(head_len).decode())
            blob = fh.read()
        spec = PolicySpec(
            action_dim=header["action_dim"], input_dim=header["input_dim"],
            hidden=tuple(header["hidden"]), learning_rate=header["learning_rate"],
            clip_ratio=header["clip_ratio"], gamma=header["gamma"],
            gae_lambda=header["gae_lambda"], rollout_steps=header["rollout_steps"],
            epochs=header["epochs"], minibatch=header["minibatch"],
            entropy_coef=header["entropy_coef"], value_coef=header["value_coef"],
            max_grad_norm=header["max_grad_norm"], seed=header["seed"])
        params = []
        offset = 0
        for shape in header["policy_shapes"] + header["value_shapes"]:
            size = int(np.prod(shape)) if shape else 1
            arr = np.frombuffer(blob, dtype="<f4", count=size, offset=offset)
            params.append(arr.reshape(shape).copy())
            offset += size * 4
        n_policy = len(header["policy_shapes"])
        return PolicyCheckpoint(
            spec=spec, policy_params=tuple(params[:n_policy]),
            value_params=tuple(params[n_policy:]), train_steps=header["train_steps"],
            source=header["source"], suite=header["suite"],
            reward_kind=header["reward_kind"], converged=header["converged"])


class PolicyGradientAgent:
    """Clipped-surrogate learner over a discrete action space."""

    def __init__(self, spec: PolicySpec):
        self.spec = spec
        rng = np.random.default_rng(spec.seed)
        sizes = [spec.input_dim, *spec.hidden]
        self.policy = MLP(sizes + [spec.action_dim], rng)
        self.value = MLP(sizes + [1], rng)
        self.rng = rng
        self.optimizer = Adam(self.policy.parameters() + self.value.parameters(),
                              spec.learning_rate)

    @staticmethod
    def from_checkpoint(ckpt: PolicyCheckpoint) -> "PolicyGradientAgent":
        agent = PolicyGradientAgent(ckpt.spec)
        agent.policy.set_parameters([p.copy() for p in ckpt.policy_params])
        agent.value.set_parameters([p.copy() for p in ckpt.value_params])
        agent.optimizer = Adam(agent.policy.parameters() + agent.value.parameters(),
                               ckpt.spec.learning_rate)
        return agent

    def checkpoint(self, train_steps: int, source: str = "", suite: str = "",
                   reward_kind: str = "", converged: bool = False) -> PolicyCheckpoint:
        return PolicyCheckpoint(
            spec=self.spec,
            policy_params=tuple(p.copy() for p in self.policy.parameters()),
            value_params=tuple(p.copy() for p in self.value.parameters()),
            train_steps=train_steps, source=source, suite=suite,
            reward_kind=reward_kind, converged=converged)

    def action_distribution(self, obs: np.ndarray) -> np.ndarray:
        logits = self.policy(obs.reshape(1, -1))[0]
        return np.exp(log_softmax(logits))

    def sample_action(self, obs: np.ndarray):
        logits = self.policy(obs.reshape(1, -1))[0]
        if not np.isfinite(logits).all():
            raise TrainingDivergence("non-finite policy logits")
        logp = log_softmax(logits)
        p = np.exp(logp)
        a = int(np.searchsorted(np.cumsum(p), self.rng.random()))
        a = min(a, self.spec.action_dim - 1)
        return a, float(logp[a]), float(self.value(obs.reshape(1, -1))[0, 0])

    def greedy_action(self, obs: np.ndarray) -> int:
        logits = self.policy(obs.reshape(1, -1))[0]
        return int(np.argmax(logits))

    def update(self, batch: dict) -> None:
        spec = self.spec
        obs = batch["obs"].astype(np.float32)
        actions = batch["actions"]
        logp_old = batch["logp"].astype(np.float32)
        adv = batch["advantages"].astype(np.float32)
        returns = batch["returns"].astype(np.float32)
        n = len(obs)
        for _ in range(spec.epochs):
            order = self.rng.permutation(n)
            for lo in range(0, n, spec.minibatch):
                idx = order[lo:lo + spec.minibatch]
                self._minibatch_step(obs[idx], actions[idx], logp_old[idx],
                                     adv[idx], returns[idx])

    def _minibatch_step(self, obs, actions, logp_old, adv, returns):
        spec = self.spec
        b = len(obs)
        rows = np.arange(b)

        acts_p = self.policy.forward(obs)
        logits = acts_p[-1]
        logp_all = log_softmax(logits)
        p = np.exp(logp_all)
        logp_a = logp_all[rows, actions]
        ratio = np.exp(logp_a - logp_old)
        unclipped = ratio * adv
        clipped = np.clip(ratio, 1.0 - spec.clip_ratio, 1.0 + spec.clip_ratio) * adv
        active = (unclipped <= clipped).astype(np.float32)

        # d(-min(surr))/d logp_a; the clipped branch has zero policy gradient
        g_logp = -(active * ratio * adv) / b
        grad_logits = g_logp[:, None] * (np.eye(spec.action_dim, dtype=np.float32)[actions] - p)
        entropy = -(p * logp_all).sum(axis=1)
        grad_logits += (spec.entropy_coef / b) * (p * (logp_all + entropy[:, None]))
        gw_p, gb_p = self.policy.backward(acts_p, grad_logits)

        acts_v = self.value.forward(obs)
        v = acts_v[-1][:, 0]
        grad_v = (2.0 * spec.value_coef * (v - returns) / b)[:, None]
        gw_v, gb_v = self.value.backward(acts_v, grad_v)

        grads = clip_global_norm(gw_p + gb_p + gw_v + gb_v, spec.max_grad_norm)
        self.optimizer.step(self.policy.parameters() + self.value.parameters(), grads)


def _compute_gae(rewards, values, dones, last_value, gamma, lam):
    n = len(rewards)
    adv = np.zeros(n, dtype=np.float32)
    running = 0.0
    for t in range(n - 1, -1, -1):
        next_v = last_value if t == n - 1 else values[t + 1]
        non_terminal = 0.0 if dones[t] else 1.0
        delta = rewards[t] + gamma * next_v * non_terminal - values[t]
        running = delta + gamma * lam * non_terminal * running
        adv[t] = running
    returns = adv + values
    std = adv.std()
    norm_adv = (adv - adv.mean()) / (std + 1e-8)
    return norm_adv, returns


def train(env, spec: PolicySpec, total_steps: int, source: str = "",
          agent: PolicyGradientAgent | None = None) -> tuple:
    """Run clipped-surrogate training for `total_steps` environment steps.

    Returns (PolicyCheckpoint, TrainLog). Deterministic for a fixed spec and
    environment; raises TrainingDivergence naming the episode if the policy
    emits non-finite outputs.
    """
    if total_steps < env.config.horizon:
        raise InputError(
            f"total_steps={total_steps} is less than one episode "
            f"({env.config.horizon} steps)")
    if agent is None:
        agent = PolicyGradientAgent(spec)
    if spec.action_dim != env.action_count:
        raise InputError(f"policy head has {spec.action_dim} actions, "
                         f"environment exposes {env.action_count}")
    log = TrainLog(spec={"rollout_steps": spec.rollout_steps, "epochs": spec.epochs,
                         "minibatch": spec.minibatch, "gae_lambda": spec.gae_lambda,
                         "entropy_coef": spec.entropy_coef, "seed": spec.seed})
    buf = {k: [] for k in ("obs", "actions", "logp", "rewards", "dones", "values")}
    episode_rewards = []
    obs = env.reset().as_array()
    for step in range(1, total_steps + 1):
        try:
            a, logp, value = agent.sample_action(obs)
        except TrainingDivergence as e:
            raise TrainingDivergence(
                f"{e} (episode {len(log.episode_returns) + 1})") from e
        out = env.step(a)
        buf["obs"].append(obs)
        buf["actions"].append(a)
        buf["logp"].append(logp)
        buf["rewards"].append(out.reward)
        buf["dones"].append(out.done)
        buf["values"].append(value)
        episode_rewards.append(out.reward)
        if out.done:
            g = float(sum(r * spec.gamma ** i for i, r in enumerate(episode_rewards)))
            log.episode_returns.append(g)
            log.episode_end_steps.append(step)
            episode_rewards = []
            obs = env.reset().as_array()
        else:
            obs = out.observation.as_array()
        if len(buf["obs"]) >= spec.rollout_steps or step == total_steps:
            last_value = 0.0 if buf["dones"][-1] else float(
                agent.value(obs.reshape(1, -1))[0, 0])
            adv, rets = _compute_gae(
                np.asarray(buf["rewards"], dtype=np.float32),
                np.asarray(buf["values"], dtype=np.float32),
                buf["dones"], last_value, spec.gamma, spec.gae_lambda)
            agent.update({
                "obs": np.asarray(buf["obs"], dtype=np.float32),
                "actions": np.asarray(buf["actions"], dtype=np.int64),
                "logp": np.asarray(buf["logp"], dtype=np.float32),
                "advantages": adv, "returns": rets,
            })
            buf = {k: [] for k in buf}
    log.total_steps = total_steps
    log.convergence_step = convergence_step_from_episodes(
        log.episode_returns, log.episode_end_steps, total_steps)
    if total_steps >= 2000:
        log.rolling_at_2k = log.rolling_mean_at_step(2000)
    ckpt = agent.checkpoint(
        train_steps=total_steps, source=source,
        suite=getattr(getattr(env.config, "suite", None), "name", ""),
        reward_kind=getattr(env.config, "reward_kind", ""),
        converged=log.convergence_step is not None)
    return ckpt, log


def fine_tune(checkpoint: PolicyCheckpoint, env, steps: int, source: str = "") -> tuple:
    """Continue optimization from a checkpoint on a new environment.

    The action head must match the target suite exactly; 0 steps returns the
    checkpoint parameters unchanged with an empty log.
    """
    if checkpoint.spec.action_dim != env.action_count:
        raise InputError(
            f"checkpoint has {checkpoint.spec.action_dim} actions but the target "
            f"environment exposes {env.action_count}; refusing to reinitialize")
    if steps == 0:
        return checkpoint, TrainLog()
    agent = PolicyGradientAgent.from_checkpoint(checkpoint)
    return train(env, checkpoint.spec, steps, source=source, agent=agent)


def transfer_gap(r_scratch: float, r_finetune: float) -> float:
    """(scratch - finetune) / |scratch|; negative means fine-tuning leads."""
    return (r_scratch - r_finetune) / abs(r_scratch)


# ---------------------------------------------------------------------------
# Tabular reference agent


class ObservationBinner:
    """Quantile bins per scalar dimension (the trailing bits pass through)."""

    def __init__(self, samples: np.ndarray, n_scalar: int = 6, bins: int = 4):
        self.n_scalar = n_scalar
        samples = np.asarray(samples, dtype=np.float64)
        qs = np.linspace(0, 1, bins + 1)[1:-1]
        self.edges = [np.quantile(samples[:, j], qs) for j in range(n_scalar)]

    def key(self, obs: np.ndarray) -> tuple:
        obs = np.asarray(obs, dtype=np.float64)
        scalars = tuple(int(np.searchsorted(self.edges[j], obs[j], side="right"))
                        for j in range(self.n_scalar))
        bits = tuple(int(round(v)) for v in obs[self.n_scalar:])
        return scalars + bits


@dataclass
class QPolicy:
    q: dict
    binner: ObservationBinner
    action_count: int

    def greedy_action(self, obs: np.ndarray) -> int:
        key = self.binner.key(obs)
        if key not in self.q:
            return 0
        return int(np.argmax(self.q[key]))

    def greedy_table(self) -> dict:
        return {state: int(np.argmax(vals)) for state, vals in self.q.items()}


def q_learn_reference(env, episodes: int, alpha: float = 0.1, epsilon: float = 0.1,
                      seed: int = 42, warmup_episodes: int = 10) -> QPolicy:
    """Plain epsilon-greedy tabular Q-learning over binned observations."""
    rng = np.random.default_rng(seed)
    gamma = env.config.gamma if hasattr(env, "config") else 0.99
    warm = []
    for _ in range(max(1, warmup_episodes)):
        obs = env.reset().as_array()
        warm.append(obs)
        done = False
        while not done:
            out = env.step(int(rng.integers(env.action_count)))
            warm.append(out.observation.as_array())
            done = out.done
    binner = ObservationBinner(np.asarray(warm))
    q = {}

    def q_row(key):
        if key not in q:
            q[key] = np.zeros(env.action_count, dtype=np.float64)
        return q[key]

    for _ in range(episodes):
        obs = env.reset().as_array()
        done = False
        while not done:
            key = binner.key(obs)
            row = q_row(key)
            if rng.random() < epsilon:
                a = int(rng.integers(env.action_count))
            else:
                a = int(np.argmax(row))
            out = env.step(a)
            next_obs = out.observation.as_array()
            next_key = binner.key(next_obs)
            target = out.reward if out.done else out.reward + gamma * q_row(next_key).max()
            row[a] += alpha * (target - row[a])
            obs = next_obs
            done = out.done
    return QPolicy(q=q, binner=binner, action_count=env.action_count)
