"""Robust initialization via goal randomization.

One DDPG agent is trained with the episode task drawn uniformly from a
fixed pool of pretraining goals, all transitions pooled in a single
replay buffer. The resulting parameters serve as the template every new
mixture component is cloned from.
"""

import os
from dataclasses import dataclass

import numpy as np

from . import rng as rngs
from .ddpg import DdpgAgent, ReplayBuffer, run_episode
from .envs import get_domain
from .errors import CheckpointError, ConfigError
from .nets import Network

PRIOR_FILES = ("prior_actor.bin", "prior_critic.bin", "prior_actor_target.bin", "prior_critic_target.bin")


@dataclass
class PretrainSpec:
    domain: str
    num_tasks: int = 8
    episodes_per_task: int = 50
    seed: int = 0
    hidden_width: int = 64
    lr: float = 1e-3
    gamma: float = 0.99
    tau: float = 0.2
    batch_size: int = 64
    buffer_capacity: int = 50_000
    optimizer: str = "adam"

    def validate(self):
        if self.num_tasks < 1:
            raise ConfigError("pretraining needs at least one task")
        if self.episodes_per_task < 1:
            raise ConfigError("episodes_per_task must be >= 1")
        get_domain(self.domain)


def train_robust_prior(spec: PretrainSpec, progress=None, loss_log=None) -> DdpgAgent:
    """Train the prior template on spec.num_tasks randomized goals.

    The goal pool, network init, exploration noise, replay sampling and
    per-episode task pick each use their own stream from spec.seed, so a
    single-task pool (num_tasks=1) trains exactly like plain DDPG on that
    goal. Per-update critic losses are appended to loss_log when given.
    """
    spec.validate()
    domain = get_domain(spec.domain)
    goal_rng = rngs.stream(spec.seed, rngs.TASKS)
    init_rng = rngs.stream(spec.seed, rngs.INIT, 0)
    explore_rng = rngs.stream(spec.seed, rngs.EXPLORE)
    sample_rng = rngs.stream(spec.seed, rngs.REPLAY)
    pick_rng = rngs.stream(spec.seed, rngs.TASK_PICK)

    goals = [domain.sample_goal(goal_rng) for _ in range(spec.num_tasks)]
    agent = DdpgAgent.init(
        domain.spec.state_dim,
        domain.spec.action_dim,
        domain.spec.action_low,
        domain.spec.action_high,
        hidden=(spec.hidden_width, spec.hidden_width),
        rng=init_rng,
        gamma=spec.gamma,
        tau=spec.tau,
        lr=spec.lr,
        optimizer=spec.optimizer,
    )
    buffer = ReplayBuffer(spec.buffer_capacity, domain.spec.state_dim, domain.spec.action_dim)
    total_episodes = spec.num_tasks * spec.episodes_per_task
    for ep in range(total_episodes):
        goal = goals[int(pick_rng.integers(0, spec.num_tasks))]
        result = run_episode(domain, goal, agent, buffer, explore_rng, sample_rng, batch_size=spec.batch_size)
        if loss_log is not None:
            loss_log.extend(result.critic_losses)
        if progress is not None:
            progress(ep + 1, total_episodes)
    return agent


def save_prior(agent: DdpgAgent, directory):
    os.makedirs(directory, exist_ok=True)
    nets = (agent.actor, agent.critic, agent.actor_target, agent.critic_target)
    for fname, net in zip(PRIOR_FILES, nets):
        net.save(os.path.join(directory, fname))


def load_prior(directory, **agent_kwargs) -> DdpgAgent:
    """Rebuild the prior agent; agent_kwargs carry bounds and hyper-parameters."""
    nets = []
    for fname in PRIOR_FILES:
        path = os.path.join(directory, fname)
        if not os.path.exists(path):
            raise CheckpointError(f"missing prior checkpoint file {path}")
        nets.append(Network.load(path))
    agent = DdpgAgent(nets[0], nets[1], **agent_kwargs)
    agent.actor_target = nets[2]
    agent.critic_target = nets[3]
    return agent
