"""Proximal policy optimization with a small numpy actor-critic.

Flat parameter layout (float64 in memory, float32 on disk), in order:

  actor:  W0 (obs, h0), b0 (h0), W1 (h0, h1), b1 (h1), W2 (h1, act), b2 (act)
  log_std (act)
  critic: W0 (obs, h0), b0 (h0), W1 (h0, h1), b1 (h1), W2 (h1, 1), b2 (1)

Weight matrices are row-major with inputs on the first axis (y = x @ W + b).
Hidden layers use tanh; the heads are linear.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import struct
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .policy_io import SPECS, PolicyName
from .simulator import ConfigError, stream_seed

LAYOUT_VERSION = 1
MAGIC = b"RLSW"
LOG_2PI = math.log(2.0 * math.pi)


class NonFiniteLoss(FloatingPointError):
    pass


class WeightsFormatError(ValueError):
    pass


def _shapes(obs_dim: int, act_dim: int, hidden) -> list[tuple[str, tuple[int, ...]]]:
    out = []
    for prefix, head in (("actor", act_dim), (None, None), ("critic", 1)):
        if prefix is None:
            out.append(("log_std", (act_dim,)))
            continue
        sizes = [obs_dim, *hidden, head]
        for k in range(len(sizes) - 1):
            out.append((f"{prefix}.W{k}", (sizes[k], sizes[k + 1])))
            out.append((f"{prefix}.b{k}", (sizes[k + 1],)))
    return out


class MlpPolicy:
    """Gaussian actor with state-independent log-std, plus a value critic."""

    def __init__(self, obs_dim: int, act_dim: int, hidden=(64, 64), params: np.ndarray | None = None,
                 seed: int = 0, log_std_init: float = -0.5, policy_name: str | None = None):
        self.obs_dim = int(obs_dim)
        self.act_dim = int(act_dim)
        self.hidden = tuple(int(h) for h in hidden)
        self.policy_name = policy_name
        self.shapes = _shapes(self.obs_dim, self.act_dim, self.hidden)
        self.size = sum(int(np.prod(s)) for _, s in self.shapes)
        if params is None:
            params = self._init(seed, log_std_init)
        params = np.asarray(params, dtype=np.float64)
        if params.shape != (self.size,):
            raise WeightsFormatError(f"expected {self.size} parameters, got {params.shape}")
        self.params = params.copy()
        self._bind()

    @classmethod
    def for_policy(cls, name, hidden=(64, 64), seed: int = 0, log_std_init: float = -0.5) -> "MlpPolicy":
        spec = SPECS[PolicyName(name)]
        return cls(spec.obs_dim, spec.act_dim, hidden, seed=seed, log_std_init=log_std_init, policy_name=spec.name.value)

    def _init(self, seed: int, log_std_init: float) -> np.ndarray:
        rng = np.random.default_rng(seed)
        chunks = []
        for name, shape in self.shapes:
            if name == "log_std":
                chunks.append(np.full(shape, log_std_init))
            elif ".b" in name:
                chunks.append(np.zeros(shape))
            else:
                gain = 1.0
                last = name.endswith(f"W{len(self.hidden)}")
                if last:
                    gain = 0.01 if name.startswith("actor") else 1.0
                chunks.append(rng.standard_normal(shape) * (gain / math.sqrt(shape[0])))
        return np.concatenate([c.ravel() for c in chunks])

    def _bind(self) -> None:
        """Views into ``self.params`` by name."""
        self.views = {}
        i = 0
        for name, shape in self.shapes:
            n = int(np.prod(shape))
            self.views[name] = self.params[i:i + n].reshape(shape)
            i += n
        n_layers = len(self.hidden) + 1
        self.actor = [(self.views[f"actor.W{k}"], self.views[f"actor.b{k}"]) for k in range(n_layers)]
        self.critic = [(self.views[f"critic.W{k}"], self.views[f"critic.b{k}"]) for k in range(n_layers)]
        self.log_std = self.views["log_std"]

    def copy(self) -> "MlpPolicy":
        return MlpPolicy(self.obs_dim, self.act_dim, self.hidden, self.params, policy_name=self.policy_name)

    def set_params(self, params: np.ndarray) -> None:
        self.params[:] = params

    # --- forward ---------------------------------------------------------
    @staticmethod
    def _mlp(x, layers):
        acts = [x]
        h = x
        last = len(layers) - 1
        for k, (W, b) in enumerate(layers):
            h = h @ W + b
            if k < last:
                h = np.tanh(h)
            acts.append(h)
        return h, acts

    def mean(self, obs: np.ndarray) -> np.ndarray:
        return self._mlp(np.asarray(obs, dtype=np.float64), self.actor)[0]

    def value(self, obs: np.ndarray) -> np.ndarray:
        v = self._mlp(np.asarray(obs, dtype=np.float64), self.critic)[0]
        return v[..., 0]

    def act_mean(self, obs: np.ndarray) -> np.ndarray:
        """Deterministic deployment action, clipped to [-1, 1]."""
        return np.clip(self.mean(obs), -1.0, 1.0)

    def sample(self, obs: np.ndarray, rng: np.random.Generator):
        """One observation -> (raw action, log-prob, value). Clip the raw action before use."""
        mu = self.mean(obs)
        std = np.exp(self.log_std)
        z = rng.standard_normal(self.act_dim)
        a = mu + std * z
        logp = float(-0.5 * np.dot(z, z) - self.log_std.sum() - 0.5 * self.act_dim * LOG_2PI)
        return a, logp, float(self.value(obs))

    def log_prob(self, obs: np.ndarray, actions: np.ndarray) -> np.ndarray:
        mu = self.mean(obs)
        z = (actions - mu) / np.exp(self.log_std)
        return -0.5 * (z * z).sum(-1) - self.log_std.sum() - 0.5 * self.act_dim * LOG_2PI

    def entropy(self) -> float:
        return float(self.log_std.sum() + 0.5 * self.act_dim * (LOG_2PI + 1.0))

    # --- loss and analytic gradient ----------------------------------------
    def loss_and_grad(self, obs, actions, old_logp, advantages, returns, clip_epsilon: float,
                      value_coef: float, entropy_coef: float):
        """PPO loss to minimize and its gradient w.r.t. the flat parameters.

        loss = -mean(min(r A, clip(r, 1-eps, 1+eps) A)) + value_coef * mean(0.5 (V - R)^2)
               - entropy_coef * entropy
        """
        obs = np.asarray(obs, dtype=np.float64)
        n = obs.shape[0]
        mu, a_acts = self._mlp(obs, self.actor)
        v, c_acts = self._mlp(obs, self.critic)
        v = v[:, 0]
        std = np.exp(self.log_std)
        diff = actions - mu
        z = diff / std
        logp = -0.5 * (z * z).sum(1) - self.log_std.sum() - 0.5 * self.act_dim * LOG_2PI
        ratio = np.exp(logp - old_logp)
        clipped = np.clip(ratio, 1.0 - clip_epsilon, 1.0 + clip_epsilon)
        un = ratio * advantages
        cl = clipped * advantages
        surrogate = np.minimum(un, cl)
        v_err = v - returns
        ent = self.entropy()
        policy_loss = -surrogate.mean()
        value_loss = 0.5 * (v_err * v_err).mean()
        loss = policy_loss + value_coef * value_loss - entropy_coef * ent

        # d loss / d logp: only where the unclipped branch is active
        active = un <= cl
        g_logp = np.where(active, -un, 0.0) / n
        g_mu = g_logp[:, None] * (diff / (std * std))
        g_log_std = (g_logp[:, None] * (z * z - 1.0)).sum(0) - entropy_coef
        g_v = (value_coef / n) * v_err

        grad = np.zeros_like(self.params)
        self._backprop(a_acts, self.actor, g_mu, "actor", grad)
        self._backprop(c_acts, self.critic, g_v[:, None], "critic", grad)
        grad[self._slice("log_std")] = g_log_std
        stats = {
            "loss": float(loss), "policy_loss": float(policy_loss), "value_loss": float(value_loss),
            "entropy": ent, "approx_kl": float(np.mean(old_logp - logp)),
            "clip_fraction": float(np.mean(np.abs(ratio - 1.0) > clip_epsilon)),
        }
        return float(loss), grad, stats

    def _slice(self, name: str) -> slice:
        i = 0
        for nm, shape in self.shapes:
            n = int(np.prod(shape))
            if nm == name:
                return slice(i, i + n)
            i += n
        raise KeyError(name)

    def _backprop(self, acts, layers, g_out, prefix, grad) -> None:
        g = g_out
        for k in range(len(layers) - 1, -1, -1):
            W, _ = layers[k]
            x = acts[k]
            grad[self._slice(f"{prefix}.W{k}")] = (x.T @ g).ravel()
            grad[self._slice(f"{prefix}.b{k}")] = g.sum(0)
            if k > 0:
                g = (g @ W.T) * (1.0 - acts[k] * acts[k])

    # --- serialization -----------------------------------------------------
    def header(self) -> dict:
        return {
            "layout_version": LAYOUT_VERSION,
            "policy_name": self.policy_name,
            "obs_dim": self.obs_dim,
            "act_dim": self.act_dim,
            "hidden": list(self.hidden),
            "layers": [{"name": n, "shape": list(s)} for n, s in self.shapes],
            "dtype": "float32-le",
        }

    def to_bytes(self) -> bytes:
        head = json.dumps(self.header(), sort_keys=True).encode()
        body = self.params.astype("<f4").tobytes()
        return MAGIC + struct.pack("<I", len(head)) + head + body

    @classmethod
    def from_bytes(cls, data: bytes) -> "MlpPolicy":
        if data[:4] != MAGIC:
            raise WeightsFormatError("not a weights file (bad magic)")
        (n,) = struct.unpack("<I", data[4:8])
        try:
            head = json.loads(data[8:8 + n])
        except json.JSONDecodeError as e:
            raise WeightsFormatError(f"bad header: {e}") from None
        if head.get("layout_version") != LAYOUT_VERSION:
            raise WeightsFormatError(f"unsupported layout version {head.get('layout_version')}")
        params = np.frombuffer(data[8 + n:], dtype="<f4").astype(np.float64)
        pol = cls(head["obs_dim"], head["act_dim"], tuple(head["hidden"]), params, policy_name=head["policy_name"])
        if [list(s) for _, s in pol.shapes] != [layer["shape"] for layer in head["layers"]]:
            raise WeightsFormatError("layer shapes disagree with header")
        return pol

    def save(self, path) -> str:
        data = self.to_bytes()
        Path(path).write_bytes(data)
        return blob_hash(data)

    @classmethod
    def load(cls, path) -> "MlpPolicy":
        return cls.from_bytes(Path(path).read_bytes())


def blob_hash(data: bytes) -> str:
    """Git-style content hash (SHA-1 of 'blob <len>\\0' + data)."""
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def file_hash(path) -> str:
    return blob_hash(Path(path).read_bytes())


# --- advantage estimation ----------------------------------------------------

def gae(rewards, values, dones, gamma: float, lam: float):
    """Generalized advantage estimation.

    ``rewards`` and ``dones`` have shape (T, ...); ``values`` has shape
    (T + 1, ...) with the bootstrap value last. ``dones[t]`` marks that the
    episode ended after step t. Returns (advantages, returns).
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=np.float64)
    T = rewards.shape[0]
    if dones.shape != rewards.shape or values.shape[0] != T + 1 or values.shape[1:] != rewards.shape[1:]:
        raise ValueError(f"length mismatch: rewards {rewards.shape}, values {values.shape}, dones {dones.shape}")
    adv = np.zeros_like(rewards)
    last = np.zeros_like(rewards[0]) if T else 0.0
    for t in range(T - 1, -1, -1):
        keep = 1.0 - dones[t]
        delta = rewards[t] + gamma * values[t + 1] * keep - values[t]
        last = delta + gamma * lam * keep * last
        adv[t] = last
    return adv, adv + values[:T]


# --- optimizer ---------------------------------------------------------------

@dataclass
class Adam:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: np.ndarray | None = None
    v: np.ndarray | None = None
    t: int = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> None:
        if self.m is None:
            self.m = np.zeros_like(params)
            self.v = np.zeros_like(params)
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        mh = self.m / (1 - self.beta1 ** self.t)
        vh = self.v / (1 - self.beta2 ** self.t)
        params -= self.lr * mh / (np.sqrt(vh) + self.eps)


@dataclass(frozen=True)
class TrainConfig:
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_epsilon: float = 0.2
    epochs_per_update: int = 4
    minibatch_size: int = 256
    rollout_length: int = 2048  # learner steps per update, summed over environments
    n_envs: int = 16
    learning_rate: float = 3e-4
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    max_grad_norm: float = 0.5
    total_steps: int = 1_000_000
    seed: int = 0
    hidden: tuple = (64, 64)
    log_std_init: float = -0.5

    def validate(self, prefix: str = "train") -> None:
        if not 0 < self.gamma <= 1:
            raise ConfigError(f"{prefix}.gamma", "must be in (0, 1]")
        if not 0 <= self.gae_lambda <= 1:
            raise ConfigError(f"{prefix}.gae_lambda", "must be in [0, 1]")
        if not 0 < self.clip_epsilon < 1:
            raise ConfigError(f"{prefix}.clip_epsilon", "must be in (0, 1)")
        for key in ("epochs_per_update", "minibatch_size", "rollout_length", "n_envs", "total_steps"):
            if int(getattr(self, key)) < 1:
                raise ConfigError(f"{prefix}.{key}", "must be >= 1")
        if self.rollout_length % self.n_envs:
            raise ConfigError(f"{prefix}.rollout_length", "must be a multiple of n_envs")
        if self.total_steps < self.rollout_length:
            raise ConfigError(f"{prefix}.total_steps", "must be >= rollout_length")
        for key in ("learning_rate", "max_grad_norm"):
            if not getattr(self, key) > 0:
                raise ConfigError(f"{prefix}.{key}", "must be > 0")
        for key in ("entropy_coef", "value_coef"):
            if not getattr(self, key) >= 0:
                raise ConfigError(f"{prefix}.{key}", "must be >= 0")


def ppo_update(batch: dict, policy: MlpPolicy, config: TrainConfig, optimizer: Adam,
               rng: np.random.Generator) -> dict:
    """Clipped-surrogate update in place. ``batch`` holds obs, actions, logp, advantages, returns."""
    n = batch["obs"].shape[0]
    adv = batch["advantages"]
    adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    mb = min(config.minibatch_size, n)
    totals: dict[str, float] = {}
    count = 0
    for _ in range(config.epochs_per_update):
        order = rng.permutation(n)
        for start in range(0, n - mb + 1, mb):
            idx = order[start:start + mb]
            loss, grad, stats = policy.loss_and_grad(
                batch["obs"][idx], batch["actions"][idx], batch["logp"][idx], adv[idx], batch["returns"][idx],
                config.clip_epsilon, config.value_coef, config.entropy_coef,
            )
            if not (math.isfinite(loss) and np.all(np.isfinite(grad))):
                raise NonFiniteLoss(
                    f"non-finite loss {loss} (stats {stats}, max |param| {np.abs(policy.params).max():.3g})"
                )
            norm = float(np.sqrt(np.dot(grad, grad)))
            if norm > config.max_grad_norm:
                grad = grad * (config.max_grad_norm / norm)
            optimizer.step(policy.params, grad)
            for k, v in stats.items():
                totals[k] = totals.get(k, 0.0) + v
            count += 1
    return {k: v / count for k, v in totals.items()}


# --- rollouts ----------------------------------------------------------------

@dataclass
class EpisodeRecord:
    env: int
    episode: int
    ret: float
    length: int
    terminal: str


@dataclass
class TrainResult:
    policy: MlpPolicy
    curve: list[dict]
    episodes: list[EpisodeRecord]
    weights_path: str | None = None
    weights_hash: str | None = None
    seconds: float = 0.0

    def goal_rate(self, last: int = 100) -> float:
        tail = self.episodes[-last:]
        return sum(e.terminal == "GOAL" for e in tail) / max(1, len(tail))


class RolloutCollector:
    """Steps ``n_envs`` environments with per-environment policy RNG streams."""

    def __init__(self, envs, seed: int):
        self.envs = envs
        self.rngs = [np.random.Generator(np.random.PCG64(stream_seed(seed, 4, e.index))) for e in envs]
        self.obs = [e.reset() for e in envs]

    def collect(self, policy: MlpPolicy, steps_per_env: int, episodes: list | None = None) -> dict:
        E = len(self.envs)
        od = policy.obs_dim
        ad = policy.act_dim
        obs = np.zeros((steps_per_env, E, od))
        acts = np.zeros((steps_per_env, E, ad))
        logp = np.zeros((steps_per_env, E))
        vals = np.zeros((steps_per_env + 1, E))
        rews = np.zeros((steps_per_env, E))
        dones = np.zeros((steps_per_env, E))
        for k, env in enumerate(self.envs):
            rng = self.rngs[k]
            o = self.obs[k]
            for t in range(steps_per_env):
                raw = np.zeros((o.shape[0], ad))
                for i in range(o.shape[0]):
                    a, lp, v = policy.sample(o[i], rng)
                    raw[i] = a
                    if i == 0:
                        obs[t, k] = o[0]
                        acts[t, k] = a
                        logp[t, k] = lp
                        vals[t, k] = v
                res = env.step(np.clip(raw, -1.0, 1.0))
                rews[t, k] = res.reward
                dones[t, k] = res.done
                if res.done and episodes is not None:
                    episodes.append(EpisodeRecord(env.index, env.episode - 1, res.episode_return,
                                                  res.episode_length, res.terminal.value))
                o = res.obs
            self.obs[k] = o
            vals[steps_per_env, k] = policy.value(o[0])
        return {"obs": obs, "actions": acts, "logp": logp, "values": vals, "rewards": rews, "dones": dones}


def _flatten(roll: dict, adv, ret) -> dict:
    T, E = roll["rewards"].shape
    # environment-major so the batch order does not depend on step interleaving
    def f(a):
        return np.ascontiguousarray(np.swapaxes(a[:T], 0, 1)).reshape(T * E, *a.shape[2:])
    return {"obs": f(roll["obs"]), "actions": f(roll["actions"]), "logp": f(roll["logp"]),
            "advantages": f(adv), "returns": f(ret)}


def train(policy_name, scenario_spec, config: TrainConfig, sim_config=None, reward_config=None,
          out_dir=None, log=None, policy: MlpPolicy | None = None, file_stem: str | None = None) -> TrainResult:
    """Train ``policy_name`` on ``scenario_spec``; optionally write weights and a CSV learning curve."""
    from .envs import SoccerEnv

    name = PolicyName(policy_name)
    if scenario_spec.policy is not name:
        raise ConfigError("train.scenario", f"scenario {scenario_spec.name.value} trains {scenario_spec.policy.value}")
    config.validate()
    t0 = time.perf_counter()
    envs = [SoccerEnv(scenario_spec, sim_config, reward_config, seed=config.seed, index=i) for i in range(config.n_envs)]
    if policy is None:
        policy = MlpPolicy.for_policy(name, config.hidden, seed=config.seed, log_std_init=config.log_std_init)
    collector = RolloutCollector(envs, config.seed)
    optimizer = Adam(config.learning_rate)
    update_rng = np.random.Generator(np.random.PCG64(stream_seed(config.seed, 5)))
    steps_per_env = config.rollout_length // config.n_envs
    episodes: list[EpisodeRecord] = []
    curve = []
    steps = 0
    update = 0
    last_mean = float("nan")
    # whole updates only, never past the step budget
    while steps + steps_per_env * config.n_envs <= config.total_steps:
        n_before = len(episodes)
        roll = collector.collect(policy, steps_per_env, episodes)
        adv, ret = gae(roll["rewards"], roll["values"], roll["dones"], config.gamma, config.gae_lambda)
        stats = ppo_update(_flatten(roll, adv, ret), policy, config, optimizer, update_rng)
        steps += steps_per_env * config.n_envs
        update += 1
        fresh = episodes[n_before:]
        if fresh:
            last_mean = float(np.mean([e.ret for e in fresh]))
        row = {"update": update, "steps": steps, "mean_return": last_mean, "entropy": stats["entropy"],
               "episodes": len(episodes),
               "goal_rate": (sum(e.terminal == "GOAL" for e in fresh) / len(fresh)) if fresh else float("nan")}
        curve.append(row)
        if log is not None:
            log(row)
    result = TrainResult(policy, curve, episodes, seconds=time.perf_counter() - t0)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        stem = file_stem or name.value.lower()
        wpath = out / f"{stem}.rlsw"
        result.weights_hash = policy.save(wpath)
        result.weights_path = str(wpath)
        write_curve(curve, out / f"{stem}_curve.csv")
        (out / f"{stem}_train.json").write_text(json.dumps({
            "policy": name.value, "scenario": scenario_spec.name.value,
            "fidelity": scenario_spec.fidelity.value, "train_config": _jsonable(asdict(config)),
            "weights_hash": result.weights_hash, "episodes": len(episodes),
            "final_goal_rate_100": result.goal_rate(100), "seconds": result.seconds,
        }, indent=2))
    return result


def _jsonable(d):
    return json.loads(json.dumps(d, default=list))


def write_curve(curve: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["update", "steps", "mean_return", "entropy", "episodes", "goal_rate"])
        w.writeheader()
        for row in curve:
            w.writerow(row)


def run_episodes(policy: MlpPolicy | None, scenario_spec, n: int, seed: int, sim_config=None, reward_config=None,
                 mode: str = "sample") -> list[EpisodeRecord]:
    """Play ``n`` episodes with ``mode`` in {"sample", "mean", "uniform"} (uniform ignores the policy)."""
    from .envs import SoccerEnv

    env = SoccerEnv(scenario_spec, sim_config, reward_config, seed=seed, index=0)
    rng = np.random.Generator(np.random.PCG64(stream_seed(seed, 4, 0)))
    act_dim = env.pspec.act_dim
    out = []
    o = env.reset()
    while len(out) < n:
        if mode == "uniform":
            raw = rng.uniform(-1.0, 1.0, (o.shape[0], act_dim))
        elif mode == "mean":
            raw = policy.act_mean(o)
        else:
            raw = np.stack([policy.sample(o[i], rng)[0] for i in range(o.shape[0])])
        res = env.step(np.clip(raw, -1.0, 1.0))
        if res.done:
            out.append(EpisodeRecord(0, env.episode - 1, res.episode_return, res.episode_length, res.terminal.value))
        o = res.obs
    return out
