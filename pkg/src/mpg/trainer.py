"""Synchronous advantage actor-critic (A2C) with a pluggable score estimator.

Workers step independent environment instances in lockstep; after
``rollout_len`` steps the n-step returns are formed, and one actor and one
critic SGD step is taken on the pooled batch (worker-index order).
"""

import csv
import logging
from dataclasses import asdict, dataclass, fields

import numpy as np

from mpg import envs as envs_mod
from mpg import nn
from mpg.estimators import EstimatorKind, Policy, make_head

log = logging.getLogger(__name__)

CSV_COLUMNS = ("run_id", "seed", "episode", "steps", "discounted_return", "outcome")


@dataclass
class TrainConfig:
    workers: int = 4
    lr_actor: float = 0.01
    lr_critic: float = 0.01
    gamma: float = 0.99
    sigma: float = 0.1
    estimator: EstimatorKind = EstimatorKind.ANGULAR
    episodes: int = 1000
    seed: int = 0
    rollout_len: int = 20
    hidden: tuple = (32, 32)
    activation: str = "tanh"
    env: str = "platform2d"
    step_size: float = 0.1
    goal_radius: float = 0.1
    max_steps: int = 200
    learn_sigma: bool = False

    def __post_init__(self):
        if isinstance(self.estimator, str):
            self.estimator = EstimatorKind.parse(self.estimator)
        self.hidden = tuple(int(h) for h in self.hidden)
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.rollout_len < 1:
            raise ValueError("rollout_len must be >= 1")
        if self.episodes < 0:
            raise ValueError("episodes must be >= 0")
        if self.lr_actor <= 0 or self.lr_critic <= 0:
            raise ValueError("learning rates must be positive")

    def to_dict(self):
        out = asdict(self)
        out["estimator"] = self.estimator.value
        out["hidden"] = list(self.hidden)
        return out

    @classmethod
    def field_types(cls):
        return {f.name: f.type for f in fields(cls)}

    def make_env(self):
        if self.env == "platform2d":
            return envs_mod.Platform2D(self.step_size, self.goal_radius, self.max_steps)
        if self.env == "toy_param":
            return envs_mod.ToyParamEnv(self.step_size)
        raise ValueError(f"unknown environment {self.env!r}")


@dataclass
class EpisodeRecord:
    episode_index: int
    discounted_return: float
    outcome: str
    steps: int
    seed: int


@dataclass
class Batch:
    """One rollout segment, arrays shaped (rollout_len, workers, ...)."""

    obs: np.ndarray
    actor_cache: np.ndarray
    critic_cache: np.ndarray
    samples: list
    rewards: np.ndarray
    dones: np.ndarray
    cut_values: np.ndarray
    bootstrap: np.ndarray

    @property
    def size(self):
        return self.rewards.size


def compute_returns(rewards, dones, gamma, bootstrap_value, cut_values=None):
    """n-step returns ``R_t = r_t + gamma R_{t+1}``, restarted at episode ends.

    ``dones[t]`` marks that the transition at ``t`` ended an episode; the
    continuation value then is ``cut_values[t]`` (0 at a true terminal, the
    critic's value of the last state on truncation). Works on (T,) or
    (T, workers) arrays.
    """
    rewards = np.asarray(rewards, dtype=float)
    dones = np.asarray(dones, dtype=bool)
    if rewards.shape != dones.shape:
        raise ValueError("rewards and dones must have the same shape")
    cut = np.zeros_like(rewards) if cut_values is None else np.asarray(cut_values, dtype=float)
    out = np.empty_like(rewards)
    R = np.asarray(bootstrap_value, dtype=float) * np.ones(rewards.shape[1:])
    for t in range(rewards.shape[0] - 1, -1, -1):
        R = rewards[t] + gamma * np.where(dones[t], cut[t], R)
        out[t] = R
    return out


def _concat_samples(samples):
    """Stack per-step ActionSamples (recursing into tuples/lists)."""
    def cat(parts):
        first = parts[0]
        if isinstance(first, tuple):
            return tuple(cat([p[i] for p in parts]) for i in range(len(first)))
        if isinstance(first, list):
            return [cat([p[i] for p in parts]) for i in range(len(first))]
        return np.concatenate(parts, axis=0)
    from mpg.estimators import ActionSample
    return ActionSample(cat([s.raw for s in samples]), cat([s.executed for s in samples]))


def _executed_rows(sample, n):
    ex = sample.executed
    if isinstance(ex, tuple):
        k, params = ex
        return [(int(k[i]), [p[i] for p in params][int(k[i])]) for i in range(n)]
    return [ex[i] for i in range(n)]


class A2C:
    """Actor, critic and worker environments for one training run."""

    def __init__(self, cfg, env_factory=None):
        self.cfg = cfg
        self.env_factory = env_factory or cfg.make_env
        self.envs = [self.env_factory() for _ in range(cfg.workers)]
        probe = self.envs[0]
        self.head = make_head(cfg.estimator, probe.action_kind)
        ss = np.random.SeedSequence(cfg.seed)
        actor_seed, critic_seed, sample_seed = ss.generate_state(3)
        self.actor_spec = nn.MlpSpec((probe.obs_dim, *cfg.hidden, self.head.out_dim),
                                     cfg.activation, int(actor_seed))
        self.critic_spec = nn.MlpSpec((probe.obs_dim, *cfg.hidden, 1), cfg.activation,
                                      int(critic_seed))
        self.actor = nn.init_params(self.actor_spec).values
        self.critic = nn.init_params(self.critic_spec).values
        self.sigma = float(cfg.sigma)
        self.rng = np.random.default_rng(sample_seed)
        self.obs = np.stack([e.reset() for e in self.envs])
        self.ep_return = np.zeros(cfg.workers)
        self.ep_steps = np.zeros(cfg.workers, dtype=int)
        self.records = []
        self.pretrained_episodes = 0

    @property
    def episodes_trained(self):
        return self.pretrained_episodes + len(self.records)

    @property
    def policy(self):
        return Policy(self.head, self.actor, self.sigma, self.actor_spec, self.cfg.learn_sigma)

    def value(self, states):
        return nn.forward(self.critic_spec, self.critic, states)[..., 0]

    def collect_rollout(self, rollout_len, max_records=None):
        """Run every worker for ``rollout_len`` steps (fewer if the episode
        budget is hit); finished episodes are appended to ``self.records``."""
        cfg = self.cfg
        W = cfg.workers
        out_dim = self.head.out_dim
        obs_l, acache, samples, rewards, dones, cut_states = [], [], [], [], [], []
        for _ in range(rollout_len):
            Ha = nn.forward_cache(self.actor_spec, self.actor, self.obs)
            sample = self.head.sample(Ha[:, -out_dim:], self.sigma, self.rng)
            r = np.empty(W)
            done = np.zeros(W, dtype=bool)
            cut = np.full((W, self.obs.shape[1]), np.nan)
            next_obs = np.empty_like(self.obs)
            for w, (env, action) in enumerate(zip(self.envs, _executed_rows(sample, W))):
                res = env.step(action)
                r[w] = res.reward
                self.ep_return[w] += cfg.gamma ** int(self.ep_steps[w]) * res.reward
                self.ep_steps[w] += 1
                if res.terminal.done:
                    done[w] = True
                    if res.terminal is envs_mod.Outcome.TRUNCATED:
                        cut[w] = res.next_state
                    self.records.append(EpisodeRecord(len(self.records), float(self.ep_return[w]),
                                                      res.terminal.value, int(self.ep_steps[w]),
                                                      cfg.seed))
                    self.ep_return[w] = 0.0
                    self.ep_steps[w] = 0
                    next_obs[w] = env.reset()
                else:
                    next_obs[w] = res.next_state
            obs_l.append(self.obs)
            acache.append(Ha)
            samples.append(sample)
            rewards.append(r)
            dones.append(done)
            cut_states.append(cut)
            self.obs = next_obs
            if max_records is not None and len(self.records) >= max_records:
                break
        obs = np.stack(obs_l)
        T = obs.shape[0]
        cut_states = np.stack(cut_states)
        has_cut = ~np.isnan(cut_states[..., 0])
        # one critic pass for the batch, the bootstrap states and truncation states
        extra = np.concatenate([self.obs, cut_states[has_cut]])
        Hc = nn.forward_cache(self.critic_spec, self.critic,
                              np.concatenate([obs.reshape(T * W, -1), extra]))
        values = Hc[:, -1]
        cut_values = np.zeros((T, W))
        cut_values[has_cut] = values[T * W + W :]
        return Batch(obs, np.concatenate(acache), Hc[: T * W], samples, np.stack(rewards),
                     np.stack(dones), cut_values, values[T * W : T * W + W])

    def update(self, batch):
        """One synchronous actor/critic step; returns diagnostics."""
        cfg = self.cfg
        T, W = batch.rewards.shape
        n = T * W
        returns = compute_returns(batch.rewards, batch.dones, cfg.gamma, batch.bootstrap,
                                  batch.cut_values).reshape(n)
        values = batch.critic_cache[:, -1]
        adv = returns - values
        out = batch.actor_cache[:, -self.head.out_dim :]
        score = self.head.score(out, self.sigma, _concat_samples(batch.samples))
        G = adv[:, None] * score.d_mean / n
        g_actor = nn.backward(self.actor_spec, self.actor, batch.obs.reshape(n, -1), G,
                              cache=batch.actor_cache)
        g_critic = nn.backward(self.critic_spec, self.critic, batch.obs.reshape(n, -1),
                               ((values - returns) / n)[:, None], cache=batch.critic_cache)
        self.actor = nn.sgd_step(self.actor, g_actor, cfg.lr_actor)
        self.critic = nn.sgd_step(self.critic, -g_critic, cfg.lr_critic)
        if cfg.learn_sigma:
            from mpg.distributions import SIGMA_FLOOR
            g_sigma = float(np.mean(adv * score.d_sigma))
            self.sigma = max(SIGMA_FLOOR, self.sigma + cfg.lr_actor * g_sigma)
        return {"critic_loss": float(0.5 * np.mean((values - returns) ** 2)),
                "mean_advantage": float(adv.mean())}

    def run(self, episodes=None):
        target = self.cfg.episodes if episodes is None else episodes
        while len(self.records) < target:
            batch = self.collect_rollout(self.cfg.rollout_len, max_records=target)
            if len(self.records) >= target:
                break
            self.update(batch)
        del self.records[target:]
        return self.records

    def save(self, path):
        nn.save_checkpoint(path, {"actor": (self.actor_spec, self.actor),
                                  "critic": (self.critic_spec, self.critic)},
                           extra={"sigma": self.sigma, "config": self.cfg.to_dict(),
                                  "episodes_trained": self.episodes_trained})

    @classmethod
    def load(cls, path, env_factory=None):
        """Rebuild an agent from :meth:`save` output (fresh envs and rng)."""
        nets, extra = nn.load_checkpoint(path)
        if "actor" not in nets or "critic" not in nets or "config" not in extra:
            raise ValueError(f"{path} is not an A2C checkpoint")
        agent = cls(TrainConfig(**extra["config"]), env_factory)
        (agent.actor_spec, a), (agent.critic_spec, c) = nets["actor"], nets["critic"]
        agent.actor, agent.critic = a.values, c.values
        agent.sigma = float(extra["sigma"])
        agent.pretrained_episodes = int(extra.get("episodes_trained", 0))
        return agent


def collect_rollout(agent, rollout_len):
    return agent.collect_rollout(rollout_len)


def a2c_update(agent, batch):
    return agent.update(batch)


def train(cfg, env_factory=None, agent_out=None):
    """Full run; returns one EpisodeRecord per completed episode.

    Deterministic given ``cfg``. If ``agent_out`` is a list, the trained
    agent is appended to it.
    """
    agent = A2C(cfg, env_factory)
    records = agent.run()
    if agent_out is not None:
        agent_out.append(agent)
    return records


def write_episode_csv(path, records, run_id):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for r in records:
            w.writerow([run_id, r.seed, r.episode_index, r.steps, repr(r.discounted_return),
                        r.outcome])


def rolling_mean(values, window=100):
    values = np.asarray(values, dtype=float)
    if values.size < window:
        return np.array([])
    c = np.cumsum(np.concatenate([[0.0], values]))
    return (c[window:] - c[:-window]) / window


def episodes_to_reach(records, threshold, window=100):
    """First episode count at which the rolling mean return reaches ``threshold``."""
    rm = rolling_mean([r.discounted_return for r in records], window)
    hit = np.nonzero(rm >= threshold)[0]
    return int(hit[0] + window) if hit.size else None


def final_mean(records, window=100):
    vals = [r.discounted_return for r in records[-window:]]
    return float(np.mean(vals)) if vals else float("nan")
