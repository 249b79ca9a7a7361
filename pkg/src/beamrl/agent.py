"""Wolpertinger-style DDPG agent (k = 1) that learns a quantized beam from gain feedback.

The state is the current phase vector, the action is the next phase vector,
and the only feedback is the (average) beamforming gain of the executed beam.
Networks see every phase as the pair (cos, sin); quantization works on the
decoded phases.
"""

from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .array_core import PhaseCodebook, quantize_phases, wrap_phase
from .metrics import phase_gains
from .neural import Adam, NonFiniteError, actor_network, copy_into_target, critic_network

__all__ = [
    "AgentConfig",
    "RewardTracker",
    "compute_reward",
    "OUNoise",
    "NoiseSchedule",
    "ReplayMemory",
    "BeamEnvironment",
    "StepLog",
    "DDPGAgent",
    "encode_phases",
]


@dataclass
class AgentConfig:
    """Agent hyperparameters.

    ``sigma_start`` / ``sigma_end`` are OU volatilities in radians per
    sqrt(step).  ``None`` resolves to pi and to one codebook step, which
    is the literal "any phase" / "adjacent phase" reading; note the OU
    stationary std is about 1.9 sigma at theta = 0.15, so those levels
    are far noisier than the 0.5 / 0.05 defaults.
    """

    iterations: int = 40_000
    gamma: float = 0.5
    batch_size: int = 64
    replay_capacity: int = 100_000
    target_sync_every: int = 100
    actor_lr: float = 1e-4
    critic_lr: float = 1e-3
    hidden_factor: int = 4
    actor_final_init: float = 1e-3
    ou_mu: float = 0.0
    ou_theta: float = 0.15
    sigma_start: Optional[float] = 0.5
    sigma_end: Optional[float] = 0.05
    decay_fraction: float = 0.6
    measurement_noise_std: float = 0.0

    def validate(self):
        from .array_core import ConfigError

        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1")
        if not 0.0 <= self.gamma < 1.0:
            raise ConfigError("gamma must lie in [0, 1)")
        if self.batch_size < 1 or self.replay_capacity < self.batch_size:
            raise ConfigError("need 1 <= batch_size <= replay_capacity")
        if self.target_sync_every < 1:
            raise ConfigError("target_sync_every must be >= 1")
        if not 0.0 < self.decay_fraction <= 1.0:
            raise ConfigError("decay_fraction must lie in (0, 1]")
        for name in ("sigma_start", "sigma_end"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise ConfigError(f"{name} must be non-negative")
        if self.measurement_noise_std < 0:
            raise ConfigError("measurement_noise_std must be non-negative")

    def resolved_sigmas(self, codebook: PhaseCodebook):
        start = np.pi if self.sigma_start is None else self.sigma_start
        end = codebook.step if self.sigma_end is None else self.sigma_end
        return float(start), float(end)


def encode_phases(phases) -> np.ndarray:
    """(..., M) phases -> (..., 2M) as [cos theta, sin theta]."""
    phases = np.asarray(phases, dtype=float)
    return np.concatenate([np.cos(phases), np.sin(phases)], axis=-1)


class RewardTracker:
    """Adaptive threshold (best gain so far), previous gain, and best beam."""

    def __init__(self):
        self.beta = 0.0
        self.prev_gain = 0.0
        self.best_phases = None
        self.best_gain = 0.0

    def update(self, g: float, phases=None) -> int:
        """Ternary reward for gain ``g``; updates threshold and previous gain."""
        if g > self.beta:
            r = 1
            self.beta = g
            self.best_gain = g
            if phases is not None:
                self.best_phases = np.array(phases, dtype=float)
        elif g > self.prev_gain:
            r = 0
        else:
            r = -1
        self.prev_gain = g
        return r

    def state_dict(self) -> dict:
        return {
            "beta": self.beta,
            "prev_gain": self.prev_gain,
            "best_gain": self.best_gain,
            "best_phases": None if self.best_phases is None else self.best_phases.tolist(),
        }


def compute_reward(g: float, tracker: RewardTracker, phases=None) -> int:
    return tracker.update(g, phases)


class OUNoise:
    """Ornstein-Uhlenbeck process with unit time step.

    X <- X + theta (mu - X) + sigma N(0, I).
    """

    def __init__(self, size: int, mu: float = 0.0, theta: float = 0.15,
                 sigma: float = 0.2, rng=None):
        self.size = size
        self.mu = mu
        self.theta = theta
        self.sigma = sigma
        self.rng = np.random.default_rng(rng)
        self.reset()

    def reset(self):
        self.state = np.full(self.size, self.mu, dtype=float)

    def sample(self) -> np.ndarray:
        x = self.state
        self.state = x + self.theta * (self.mu - x) + self.sigma * self.rng.standard_normal(self.size)
        return self.state.copy()


@dataclass
class NoiseSchedule:
    """Linear decay of the OU volatility from ``start`` (t=1) to ``end``.

    The end level is reached at t = decay_fraction * horizon and held after.
    """

    start: float
    end: float
    horizon: int
    decay_fraction: float = 0.6

    def __call__(self, t: int) -> float:
        stop = max(1.0, self.decay_fraction * self.horizon)
        if t >= stop:
            return self.end
        frac = (t - 1) / (stop - 1) if stop > 1 else 1.0
        return self.start + (self.end - self.start) * max(0.0, frac)


class ReplayMemory:
    """Bounded FIFO of (s, a, r, s') transitions with uniform sampling."""

    def __init__(self, capacity: int, dim: int, rng=None):
        self.capacity = capacity
        self.states = np.zeros((capacity, dim))
        self.actions = np.zeros((capacity, dim))
        self.rewards = np.zeros(capacity)
        self.next_states = np.zeros((capacity, dim))
        self.size = 0
        self._pos = 0
        self.rng = np.random.default_rng(rng)

    def __len__(self):
        return self.size

    def push(self, s, a, r, s_next):
        i = self._pos
        self.states[i] = s
        self.actions[i] = a
        self.rewards[i] = r
        self.next_states[i] = s_next
        self._pos = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch_size: int):
        if self.size < batch_size:
            raise ValueError(f"cannot sample {batch_size} from {self.size} transitions")
        idx = self.rng.integers(0, self.size, size=batch_size)
        return self.states[idx], self.actions[idx], self.rewards[idx], self.next_states[idx]


class BeamEnvironment:
    """Returns only the average gain of an executed beam (an RSSI proxy)."""

    def __init__(self, channels, measurement_noise_std: float = 0.0, rng=None):
        self.channels = channels
        self.measurement_noise_std = measurement_noise_std
        self.rng = np.random.default_rng(rng)

    def measure(self, phases) -> float:
        g = float(phase_gains(phases, self.channels))
        if self.measurement_noise_std > 0:
            g = max(0.0, g + self.measurement_noise_std * self.rng.standard_normal())
        return g


@dataclass
class StepLog:
    t: int
    reward: int
    gain: float
    best_gain: float
    beta: float
    critic_loss: Optional[float]
    actor_objective: Optional[float]
    sigma: float

    def to_dict(self) -> dict:
        return asdict(self)


class DDPGAgent:
    """Actor/critic pair with targets, replay memory, OU exploration and reward tracker."""

    def __init__(self, num_antennas: int, codebook: PhaseCodebook,
                 config: Optional[AgentConfig] = None, seed=None):
        self.config = config or AgentConfig()
        self.config.validate()
        self.num_antennas = num_antennas
        self.codebook = codebook
        cfg = self.config
        init_rng, noise_rng, replay_rng, state_rng = (
            np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(4)
        )
        m = num_antennas
        self.actor = actor_network(m, init_rng, cfg.hidden_factor, cfg.actor_final_init)
        self.critic = critic_network(m, init_rng, cfg.hidden_factor)
        self.actor_target = actor_network(m, init_rng, cfg.hidden_factor, cfg.actor_final_init)
        self.critic_target_net = critic_network(m, init_rng, cfg.hidden_factor)
        copy_into_target(self.actor, self.actor_target)
        copy_into_target(self.critic, self.critic_target_net)
        self.actor_opt = Adam(lr=cfg.actor_lr)
        self.critic_opt = Adam(lr=cfg.critic_lr)
        self.replay = ReplayMemory(cfg.replay_capacity, m, replay_rng)
        start, end = cfg.resolved_sigmas(codebook)
        self.schedule = NoiseSchedule(start, end, cfg.iterations, cfg.decay_fraction)
        self.noise = OUNoise(m, cfg.ou_mu, cfg.ou_theta, start, noise_rng)
        self.tracker = RewardTracker()
        self.state = codebook.values[state_rng.integers(0, codebook.size, size=m)]
        self.t = 0

    # -- acting ---------------------------------------------------------

    def predict(self, state) -> np.ndarray:
        return self.actor(encode_phases(state))[0]

    def propose_action(self, state, noise=None) -> np.ndarray:
        """Quantized action for ``state``: nearest codebook phases to mu(s) + noise."""
        proposal = self.predict(state)
        if noise is not None:
            proposal = proposal + noise
        return quantize_phases(wrap_phase(proposal), self.codebook)

    # -- learning -------------------------------------------------------

    def critic_target(self, rewards, next_states) -> np.ndarray:
        """y_b = r_b + gamma Q'(s_{b+1}, mu'(s_{b+1})); the task never terminates."""
        rewards = np.asarray(rewards, dtype=float)
        if self.config.gamma == 0.0:
            return rewards.copy()
        enc = encode_phases(next_states)
        next_action = self.actor_target(enc)
        q = self.critic_target_net(np.concatenate([enc, encode_phases(next_action)], axis=-1))
        return rewards + self.config.gamma * q[:, 0]

    def update_critic(self, states, actions, targets) -> float:
        """One Adam step on the mean squared TD loss; returns the pre-step loss."""
        x = np.concatenate([encode_phases(states), encode_phases(actions)], axis=-1)
        q, cache = self.critic.forward(x)
        diff = q[:, 0] - np.asarray(targets, dtype=float)
        loss = float(np.mean(diff**2))
        if not np.isfinite(loss):
            raise NonFiniteError(f"critic loss is {loss} at step {self.t}")
        grad = (2.0 / len(diff)) * diff[:, None]
        grads, _ = self.critic.backward(cache, grad)
        self.critic_opt.apply(self.critic, grads)
        return loss

    def actor_gradient(self, states):
        """Parameter gradients of -(1/B) sum_b Q(s_b, mu(s_b)) and the objective value."""
        enc_s = encode_phases(states)
        mu, actor_cache = self.actor.forward(enc_s)
        x = np.concatenate([enc_s, encode_phases(mu)], axis=-1)
        q, critic_cache = self.critic.forward(x)
        b = len(states)
        _, dq_dx = self.critic.backward(critic_cache, np.full_like(q, 1.0 / b), param_grads=False)
        m = self.num_antennas
        dq_dcos = dq_dx[:, 2 * m:3 * m]
        dq_dsin = dq_dx[:, 3 * m:]
        dq_dmu = -np.sin(mu) * dq_dcos + np.cos(mu) * dq_dsin
        grads, _ = self.actor.backward(actor_cache, -dq_dmu)
        return grads, float(np.mean(q))

    def update_actor(self, states) -> float:
        """Ascend the critic along the actor; returns the pre-step mean Q."""
        grads, objective = self.actor_gradient(states)
        if not np.isfinite(objective):
            raise NonFiniteError(f"actor objective is {objective} at step {self.t}")
        self.actor_opt.apply(self.actor, grads)
        return objective

    def sync_targets(self):
        copy_into_target(self.actor, self.actor_target)
        copy_into_target(self.critic, self.critic_target_net)

    # -- loop body ------------------------------------------------------

    def step(self, env: BeamEnvironment) -> StepLog:
        """One iteration: propose, execute, reward, store, learn, sync targets."""
        self.t += 1
        t = self.t
        cfg = self.config
        sigma = self.schedule(t)
        self.noise.sigma = sigma
        s = self.state
        a = self.propose_action(s, self.noise.sample())
        g = env.measure(a)
        r = self.tracker.update(g, a)
        self.replay.push(s, a, r, a)
        self.state = a

        critic_loss = actor_obj = None
        if len(self.replay) >= cfg.batch_size:
            bs, ba, br, bn = self.replay.sample(cfg.batch_size)
            y = self.critic_target(br, bn)
            critic_loss = self.update_critic(bs, ba, y)
            actor_obj = self.update_actor(bs)
        if t % cfg.target_sync_every == 0:
            self.sync_targets()
        return StepLog(t, r, g, self.tracker.best_gain, self.tracker.beta,
                       critic_loss, actor_obj, sigma)
