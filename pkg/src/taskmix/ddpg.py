"""Deterministic actor-critic agent with target networks and replay.

The critic maps (state, action) to a scalar value; the actor maps a state
to a tanh-squashed action scaled into the environment bounds. Updates take
a responsibility weight in [0, 1] that scales the gradient, so a mixture
can share the same update code with per-component posterior weights.
"""

from dataclasses import dataclass, field

import numpy as np

from .envs import episode_step
from .errors import NumericError
from .nets import Network, Optimizer, mlp_layers, soft_update


@dataclass
class Transition:
    state: np.ndarray
    action: np.ndarray
    reward: float
    next_state: np.ndarray
    terminal: bool


@dataclass
class Batch:
    """Column-major view of a set of transitions."""

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    terminals: np.ndarray

    def __len__(self):
        return self.states.shape[0]

    def state_actions(self) -> np.ndarray:
        """Concatenated (s, a) rows, cached; critics take this as input."""
        sa = getattr(self, "_sa", None)
        if sa is None:
            sa = np.concatenate([self.states, self.actions], axis=1)
            self._sa = sa
        return sa

    @classmethod
    def from_transitions(cls, transitions):
        return cls(
            states=np.stack([t.state for t in transitions]).astype(np.float64),
            actions=np.stack([t.action for t in transitions]).astype(np.float64),
            rewards=np.array([t.reward for t in transitions], dtype=np.float64),
            next_states=np.stack([t.next_state for t in transitions]).astype(np.float64),
            terminals=np.array([t.terminal for t in transitions], dtype=bool),
        )

    @classmethod
    def concat(cls, a, b):
        return cls(
            states=np.concatenate([a.states, b.states]),
            actions=np.concatenate([a.actions, b.actions]),
            rewards=np.concatenate([a.rewards, b.rewards]),
            next_states=np.concatenate([a.next_states, b.next_states]),
            terminals=np.concatenate([a.terminals, b.terminals]),
        )


class ReplayBuffer:
    """Fixed-capacity transition store, FIFO eviction or reservoir sampling.

    Reservoir mode keeps a uniform sample of the whole stream: once full,
    item k (1-indexed) replaces a random slot with probability capacity/k.
    """

    def __init__(self, capacity, state_dim, action_dim, mode="fifo", rng=None):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        if mode not in ("fifo", "reservoir"):
            raise ValueError(f"unknown buffer mode {mode!r}")
        if mode == "reservoir" and rng is None:
            raise ValueError("reservoir mode needs an rng for slot replacement")
        self.capacity = capacity
        self.mode = mode
        self._rng = rng
        self.seen_count = 0
        self.size = 0
        self._head = 0
        self._states = np.empty((capacity, state_dim))
        self._actions = np.empty((capacity, action_dim))
        self._rewards = np.empty(capacity)
        self._next_states = np.empty((capacity, state_dim))
        self._terminals = np.empty(capacity, dtype=bool)

    def __len__(self):
        return self.size

    def _write(self, idx, t: Transition):
        self._states[idx] = t.state
        self._actions[idx] = t.action
        self._rewards[idx] = t.reward
        self._next_states[idx] = t.next_state
        self._terminals[idx] = t.terminal

    def push(self, t: Transition):
        self.seen_count += 1
        if self.size < self.capacity:
            self._write(self.size, t)
            self.size += 1
            return
        if self.mode == "fifo":
            self._write(self._head, t)
            self._head = (self._head + 1) % self.capacity
        else:
            j = int(self._rng.integers(0, self.seen_count))
            if j < self.capacity:
                self._write(j, t)

    def sample(self, n, rng) -> Batch:
        """Uniform without replacement when n <= size, with replacement otherwise."""
        if n < 1:
            raise ValueError("sample size must be >= 1")
        if self.size == 0:
            raise ValueError("cannot sample from an empty buffer")
        idx = rng.choice(self.size, size=n, replace=n > self.size)
        return self._gather(idx)

    def _gather(self, idx) -> Batch:
        return Batch(
            states=self._states[idx],
            actions=self._actions[idx],
            rewards=self._rewards[idx],
            next_states=self._next_states[idx],
            terminals=self._terminals[idx],
        )

    def newest(self, n) -> Batch:
        """The n most recently pushed transitions (FIFO mode)."""
        if self.mode != "fifo":
            raise ValueError("newest() is only meaningful for FIFO buffers")
        n = min(n, self.size)
        if n == 0:
            raise ValueError("buffer is empty")
        if self.size < self.capacity:
            idx = np.arange(self.size - n, self.size)
        else:
            idx = (self._head - 1 - np.arange(n)) % self.capacity
        return self._gather(idx)

    def stored_order(self):
        """Logical oldest-to-newest contents (testing aid)."""
        if self.size < self.capacity:
            idx = np.arange(self.size)
        else:
            idx = (self._head + np.arange(self.capacity)) % self.capacity
        return self._gather(idx)


class DdpgAgent:
    """DDPG agent: online and target networks plus their optimizer states."""

    def __init__(
        self,
        actor: Network,
        critic: Network,
        action_low,
        action_high,
        gamma=0.99,
        tau=0.2,
        noise_std=None,
        lr=1e-3,
        optimizer="adam",
    ):
        self.actor = actor
        self.critic = critic
        self.actor_target = actor.clone()
        self.critic_target = critic.clone()
        self.action_low = np.asarray(action_low, dtype=np.float64)
        self.action_high = np.asarray(action_high, dtype=np.float64)
        self.action_mid = 0.5 * (self.action_low + self.action_high)
        self.action_half = 0.5 * (self.action_high - self.action_low)
        self.gamma = float(gamma)
        self.tau = float(tau)
        # default behavior noise: 10% of the action half-range
        self.noise_std = float(noise_std) if noise_std is not None else 0.1 * float(np.max(self.action_half))
        self.lr = float(lr)
        self.optimizer_kind = optimizer
        self.actor_opt = Optimizer(actor.num_params, kind=optimizer, lr=lr)
        self.critic_opt = Optimizer(critic.num_params, kind=optimizer, lr=lr)

    @classmethod
    def init(cls, state_dim, action_dim, action_low, action_high, hidden=(64, 64), rng=None, **kw):
        """Fresh agent with fan-in uniform initialization from rng."""
        rng = rng if rng is not None else np.random.default_rng(0)
        actor = Network.random_init(
            mlp_layers(state_dim, list(hidden), action_dim, output_activation="tanh"), rng
        )
        critic = Network.random_init(mlp_layers(state_dim + action_dim, list(hidden), 1), rng)
        return cls(actor, critic, action_low, action_high, **kw)

    def clone(self) -> "DdpgAgent":
        """Independent copy of all four networks with fresh optimizer state."""
        agent = DdpgAgent(
            self.actor.clone(),
            self.critic.clone(),
            self.action_low,
            self.action_high,
            gamma=self.gamma,
            tau=self.tau,
            noise_std=self.noise_std,
            lr=self.lr,
            optimizer=self.optimizer_kind,
        )
        agent.actor_target = self.actor_target.clone()
        agent.critic_target = self.critic_target.clone()
        return agent

    # -- acting ---------------------------------------------------------

    def policy(self, states, use_target=False):
        """Deterministic action(s) scaled into bounds, no noise."""
        net = self.actor_target if use_target else self.actor
        return net.forward(states) * self.action_half + self.action_mid

    def select_action(self, state, rng=None, noise_std=None):
        """Behavior action: policy output plus Gaussian noise, clipped to bounds."""
        a = self.policy(state)
        std = self.noise_std if noise_std is None else noise_std
        if std > 0.0:
            if rng is None:
                raise ValueError("noisy action selection needs an rng")
            a = a + rng.normal(0.0, std, size=a.shape)
        return np.clip(a, self.action_low, self.action_high)

    # -- learning -------------------------------------------------------

    def q_values(self, states, actions, use_target=False):
        net = self.critic_target if use_target else self.critic
        return net.forward(np.concatenate([states, actions], axis=1))[:, 0]

    def bellman_targets(self, batch: Batch, use_target=True, terminal_mask=True):
        """Per-sample targets r + gamma * Q(s', mu(s')).

        With terminal_mask the bootstrap term is dropped at absorbing
        states, which training needs for stable targets; the mixture's
        predictive likelihood scores raw self-consistency instead.
        """
        next_a = self.policy(batch.next_states, use_target=use_target)
        next_q = self.q_values(batch.next_states, next_a, use_target=use_target)
        if terminal_mask:
            next_q = np.where(batch.terminals, 0.0, next_q)
        return batch.rewards + self.gamma * next_q

    def critic_update(self, batch: Batch, responsibility=1.0):
        """One step on the mean squared Bellman residual; returns the pre-update MSE."""
        y = self.bellman_targets(batch)
        xs = batch.state_actions()
        pred, cache = self.critic.forward_full(xs)
        residual = pred[:, 0] - y
        mse = float(np.mean(residual**2))
        if not np.isfinite(mse):
            raise NumericError("non-finite critic loss")
        upstream = (2.0 / len(batch)) * residual[:, None]
        grad, _ = self.critic.backward(xs, upstream, cache=cache)
        self.critic.params = self.critic_opt.step(self.critic.params, grad, scale=responsibility)
        return mse

    def actor_update(self, batch: Batch, responsibility=1.0):
        """One ascent step on mean Q(s, mu(s)); the critic is held fixed."""
        raw, actor_cache = self.actor.forward_full(batch.states)
        actions = raw * self.action_half + self.action_mid
        xs = np.concatenate([batch.states, actions], axis=1)
        # gradient of Q w.r.t. its action input, critic parameters untouched
        ones = np.full((len(batch), 1), 1.0 / len(batch))
        _, xgrad = self.critic.backward(xs, ones)
        dq_da = xgrad[:, batch.states.shape[1]:]
        if not np.all(np.isfinite(dq_da)):
            raise NumericError("non-finite actor objective gradient")
        # minimize -mean Q: push raw actor output along dq/da * half-range
        upstream = -dq_da * self.action_half
        grad, _ = self.actor.backward(batch.states, upstream, cache=actor_cache)
        self.actor.params = self.actor_opt.step(self.actor.params, grad, scale=responsibility)

    def update_targets(self):
        self.actor_target.params = soft_update(self.actor_target.params, self.actor.params, self.tau)
        self.critic_target.params = soft_update(self.critic_target.params, self.critic.params, self.tau)

    def train_step(self, batch: Batch, responsibility=1.0) -> float:
        """Critic then actor update with a shared weight, then target tracking."""
        mse = self.critic_update(batch, responsibility)
        self.actor_update(batch, responsibility)
        self.update_targets()
        return mse


@dataclass
class EpisodeResult:
    ret: float
    steps: int
    final_state: np.ndarray
    critic_losses: list = field(default_factory=list)


def run_episode(domain, goal, agent, buffer, explore_rng, sample_rng, batch_size=64, train=True):
    """One episode on domain/goal: act with noise, push transitions, update per step.

    Updates start once the buffer holds at least batch_size transitions,
    one critic+actor step per environment step.
    """
    state = domain.initial_state()
    total = 0.0
    losses = []
    steps = 0
    for i in range(domain.spec.horizon):
        action = agent.select_action(state, explore_rng)
        result = episode_step(domain, state, action, goal, i + 1)
        buffer.push(Transition(state, action, result.reward, result.next_state, result.terminal))
        total += result.reward
        steps = i + 1
        if train and buffer.size >= batch_size:
            losses.append(agent.train_step(buffer.sample(batch_size, sample_rng)))
        state = result.next_state
        if result.terminal:
            break
    return EpisodeResult(total, steps, state, losses)
