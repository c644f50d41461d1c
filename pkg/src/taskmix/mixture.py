"""Nonparametric mixture of DDPG task models.

A Chinese restaurant process prior over clusters is combined with a
Gaussian predictive likelihood on per-sample Bellman residuals. Each
incoming batch is softly assigned to components via the posterior; a
candidate component cloned from the prior template can be spawned when it
explains the batch better than every existing component. EM then adapts
all components with responsibility-weighted gradient steps.

Conventions: components are 0-indexed internally and 1-indexed in every
file format. The first task always occupies component 1 (the mixture is
created with one clone of the prior template), so candidate scoring only
applies from the second period on. A component spawned in the current
period keeps the concentration weight as its prior mass until the period's
soft counts are folded in.
"""

import json
import os
from dataclasses import dataclass

import numpy as np

from .ddpg import Batch, DdpgAgent
from .errors import CheckpointError, NumericError
from .nets import Network

_LOG_2PI = float(np.log(2.0 * np.pi))

# Components below this posterior weight are skipped by the M-step, targets
# included. Adam's moment normalization makes a scaled-down gradient step
# nearly full-sized once the scale persists, so the gate has to sit at
# "plausibly shares the task", not at machine precision; anything at or
# below numerical zero (1e-12) is always skipped.
MIN_RESPONSIBILITY = 1e-3

_NET_ROLES = ("actor", "critic", "actor_target", "critic_target")


@dataclass
class MixtureComponent:
    agent: DdpgAgent
    mass: float
    created_at: int
    buffer: object = None  # attached by the harness, unused here


@dataclass
class Responsibilities:
    """Normalized posterior over components, with the raw log-likelihoods."""

    values: np.ndarray
    log_likes: np.ndarray
    includes_candidate: bool = False


def log_predictive_likelihood(agent: DdpgAgent, batch: Batch, sigma: float) -> float:
    """Sum of independent Gaussian log-densities of the Bellman targets.

    Predictions and targets both come from the component's online networks
    so the score reflects its current parameters. The bootstrap term is
    kept at terminal samples: the score measures self-consistency, and an
    absorbing-state discontinuity would swamp the comparison across
    components.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if len(batch) == 0:
        raise ValueError("batch must be non-empty")
    y = agent.bellman_targets(batch, use_target=False, terminal_mask=False)
    pred = agent.critic.forward(batch.state_actions())[:, 0]
    residual = y - pred
    bad = np.flatnonzero(~np.isfinite(residual))
    if bad.size:
        raise NumericError(f"non-finite Bellman residual at sample {int(bad[0])}")
    m = len(batch)
    return float(-0.5 * m * _LOG_2PI - m * np.log(sigma) - np.sum(residual**2) / (2.0 * sigma**2))


def responsibilities_from_log(log_likes, prior_weights) -> np.ndarray:
    """Normalize exp(log_like) * prior via max-shifted exponentiation."""
    log_likes = np.asarray(log_likes, dtype=np.float64)
    prior_weights = np.asarray(prior_weights, dtype=np.float64)
    with np.errstate(divide="ignore"):
        logw = log_likes + np.log(prior_weights)
    finite = np.isfinite(logw)
    if not finite.any():
        raise ValueError("all posterior weights vanished (zero priors everywhere)")
    shifted = np.where(finite, logw - logw[finite].max(), -np.inf)
    w = np.exp(shifted)
    return w / w.sum()


class TaskModelMixture:
    """Dynamic set of task models under a CRP prior.

    The prior template is the parameter set every new component starts
    from; it is never trained after construction.
    """

    def __init__(self, prior_agent: DdpgAgent, xi=1.0, sigma=1.0):
        if xi <= 0:
            raise ValueError("concentration xi must be positive")
        if sigma <= 0:
            raise ValueError("likelihood scale sigma must be positive")
        self.prior_template = prior_agent.clone()
        self.xi = float(xi)
        self.sigma = float(sigma)
        self.period = 1
        self.components = [MixtureComponent(prior_agent.clone(), mass=0.0, created_at=1)]

    @property
    def num_components(self) -> int:
        return len(self.components)

    # -- prior and posterior ---------------------------------------------

    def prior_weights(self, include_candidate: bool) -> np.ndarray:
        """CRP weights: mass_l / (t-1+xi) per component, xi/(t-1+xi) for the candidate.

        A component born this period has no accumulated mass yet and keeps
        the concentration weight it won as a candidate.
        """
        denom = self.period - 1 + self.xi
        weights = [
            (self.xi if c.created_at == self.period and c.mass == 0.0 else c.mass) / denom
            for c in self.components
        ]
        if include_candidate:
            weights.append(self.xi / denom)
        return np.asarray(weights, dtype=np.float64)

    def crp_prior(self, include_candidate: bool = True) -> np.ndarray:
        """Prior over components (plus candidate), normalized before use."""
        w = self.prior_weights(include_candidate)
        total = w.sum()
        if total <= 0:
            raise ValueError("degenerate CRP prior: all weights zero")
        return w / total

    def component_log_likes(self, batch: Batch, include_candidate: bool) -> np.ndarray:
        likes = [log_predictive_likelihood(c.agent, batch, self.sigma) for c in self.components]
        if include_candidate:
            likes.append(log_predictive_likelihood(self.prior_template, batch, self.sigma))
        return np.asarray(likes)

    def posterior(self, batch: Batch, include_candidate: bool = False) -> Responsibilities:
        """Task-to-cluster responsibilities on this batch.

        With include_candidate the prior template is scored as a potential
        new component (it receives no gradient updates here).
        """
        log_likes = self.component_log_likes(batch, include_candidate)
        values = responsibilities_from_log(log_likes, self.prior_weights(include_candidate))
        return Responsibilities(values, log_likes, include_candidate)

    # -- expansion ---------------------------------------------------------

    def maybe_spawn(self, resp: Responsibilities) -> bool:
        """Append a fresh clone of the prior template iff the candidate strictly wins."""
        if not resp.includes_candidate:
            raise ValueError("spawn decision needs responsibilities that include the candidate")
        if resp.values[-1] > np.max(resp.values[:-1]):
            self.components.append(
                MixtureComponent(self.prior_template.clone(), mass=0.0, created_at=self.period)
            )
            return True
        return False

    # -- EM ---------------------------------------------------------------

    def m_step(self, batch: Batch, responsibilities: np.ndarray):
        """Responsibility-weighted critic+actor step on every component.

        Components with numerically zero responsibility are skipped
        entirely, including their target tracking.
        """
        for comp, weight in zip(self.components, responsibilities):
            if weight < MIN_RESPONSIBILITY:
                continue
            comp.agent.critic_update(batch, responsibility=float(weight))
            comp.agent.actor_update(batch, responsibility=float(weight))
            comp.agent.update_targets()

    def em_step(self, batch: Batch) -> Responsibilities:
        """One E-step over the current components followed by one M-step."""
        resp = self.posterior(batch, include_candidate=False)
        self.m_step(batch, resp.values)
        return resp

    def run_em(self, batch: Batch, eps=1e-4, max_iters=5):
        """Alternate E and M until the largest parameter change drops below eps.

        Change is measured as the infinity norm over each component's
        online actor and critic parameters. Returns (responsibilities,
        iterations_used). Log-likelihoods of components the M-step left
        untouched are carried over instead of recomputed.
        """
        if eps <= 0:
            raise ValueError("eps must be positive")
        if max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        priors = self.prior_weights(include_candidate=False)
        log_likes = self.component_log_likes(batch, include_candidate=False)
        resp = None
        for it in range(1, max_iters + 1):
            values = responsibilities_from_log(log_likes, priors)
            resp = Responsibilities(values, log_likes.copy())
            delta = 0.0
            for idx, (comp, weight) in enumerate(zip(self.components, values)):
                if weight < MIN_RESPONSIBILITY:
                    continue
                agent = comp.agent
                actor0, critic0 = agent.actor.params, agent.critic.params
                agent.critic_update(batch, responsibility=float(weight))
                agent.actor_update(batch, responsibility=float(weight))
                agent.update_targets()
                delta = max(
                    delta,
                    float(np.max(np.abs(agent.actor.params - actor0))),
                    float(np.max(np.abs(agent.critic.params - critic0))),
                )
                log_likes[idx] = log_predictive_likelihood(agent, batch, self.sigma)
            if delta < eps:
                return resp, it
        return resp, max_iters

    # -- bookkeeping --------------------------------------------------------

    def update_masses(self, responsibilities):
        """Fold the period's soft counts into the CRP masses and advance the period."""
        responsibilities = np.asarray(responsibilities, dtype=np.float64)
        if responsibilities.shape != (self.num_components,):
            raise ValueError(
                f"expected {self.num_components} responsibilities, got {responsibilities.shape}"
            )
        if abs(responsibilities.sum() - 1.0) > 1e-9:
            raise ValueError("responsibilities must sum to 1")
        for comp, r in zip(self.components, responsibilities):
            comp.mass += float(r)
        self.period += 1

    def map_identify(self, batch: Batch) -> int:
        """Index of the component with the highest predictive likelihood (ties: oldest)."""
        return int(np.argmax(self.component_log_likes(batch, include_candidate=False)))

    def total_mass(self) -> float:
        return sum(c.mass for c in self.components)


# -- checkpointing ----------------------------------------------------------


def save_mixture(mixture: TaskModelMixture, directory):
    """Write mixture.json plus one network checkpoint per component per role."""
    os.makedirs(directory, exist_ok=True)
    meta = {
        "xi": mixture.xi,
        "sigma": mixture.sigma,
        "t": mixture.period,
        "masses": [c.mass for c in mixture.components],
        "created_at": [c.created_at for c in mixture.components],
    }
    with open(os.path.join(directory, "mixture.json"), "w") as f:
        json.dump(meta, f, indent=2)
        f.write("\n")
    for l, comp in enumerate(mixture.components, start=1):
        nets = (comp.agent.actor, comp.agent.critic, comp.agent.actor_target, comp.agent.critic_target)
        for role, net in zip(_NET_ROLES, nets):
            net.save(os.path.join(directory, f"component_{l}_{role}.bin"))
    prior = mixture.prior_template
    for role, net in zip(_NET_ROLES, (prior.actor, prior.critic, prior.actor_target, prior.critic_target)):
        net.save(os.path.join(directory, f"prior_{role}.bin"))


def load_mixture(directory, agent_config) -> TaskModelMixture:
    """Rebuild a mixture from save_mixture output.

    agent_config supplies the non-serialized agent settings (bounds,
    gamma, tau, noise, learning rate, optimizer kind); optimizer moments
    restart from zero.
    """
    meta_path = os.path.join(directory, "mixture.json")
    try:
        with open(meta_path) as f:
            meta = json.load(f)
    except OSError as e:
        raise CheckpointError(f"cannot read {meta_path}: {e}") from None
    except json.JSONDecodeError as e:
        raise CheckpointError(f"malformed mixture.json: {e}") from None
    for key in ("xi", "sigma", "t", "masses", "created_at"):
        if key not in meta:
            raise CheckpointError(f"mixture.json is missing key {key!r}")
    if len(meta["masses"]) != len(meta["created_at"]):
        raise CheckpointError("mixture.json masses and created_at lengths differ")

    def load_agent(prefix):
        nets = {}
        for role in _NET_ROLES:
            path = os.path.join(directory, f"{prefix}_{role}.bin")
            if not os.path.exists(path):
                raise CheckpointError(f"missing checkpoint file {path}")
            nets[role] = Network.load(path)
        agent = DdpgAgent(nets["actor"], nets["critic"], **agent_config)
        agent.actor_target = nets["actor_target"]
        agent.critic_target = nets["critic_target"]
        return agent

    mixture = TaskModelMixture(load_agent("prior"), xi=meta["xi"], sigma=meta["sigma"])
    mixture.period = int(meta["t"])
    mixture.components = [
        MixtureComponent(load_agent(f"component_{l}"), mass=float(m), created_at=int(c))
        for l, (m, c) in enumerate(zip(meta["masses"], meta["created_at"]), start=1)
    ]
    return mixture
