"""Lightweight continuous-control domains and task samplers.

All three domains are pure-value state machines: step(state, action, goal)
has no hidden state, actions are clipped rather than rejected, and the
goal is never part of the observed state, so a learner has to infer the
task from rewards alone.
"""

import json
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class EnvSpec:
    state_dim: int
    action_dim: int
    action_low: tuple
    action_high: tuple
    horizon: int


@dataclass
class StepResult:
    next_state: np.ndarray
    reward: float
    terminal: bool
    truncated: bool = False


class Navigation2D:
    """Point agent in the unit square moving toward a hidden goal.

    Reward is the negative Euclidean distance to the goal after moving,
    minus a small quadratic control cost; an episode ends within 0.01 of
    the goal or at the horizon.
    """

    name = "navigation2d"
    spec = EnvSpec(state_dim=2, action_dim=2, action_low=(-0.1, -0.1), action_high=(0.1, 0.1), horizon=100)
    goal_dim = 2
    success_radius = 0.01
    control_cost = 0.01

    def initial_state(self):
        return np.zeros(2)

    def step(self, state, action, goal) -> StepResult:
        a = np.clip(action, -0.1, 0.1)
        nxt = np.clip(state + a, 0.0, 1.0)
        dist = float(np.linalg.norm(nxt - goal))
        reward = -dist - self.control_cost * float(a @ a)
        return StepResult(nxt, reward, terminal=dist < self.success_radius)

    def sample_goal(self, rng):
        return rng.uniform(0.0, 1.0, size=2)

    def clip_goal(self, goal):
        return np.clip(goal, 0.0, 1.0)


class Reacher2Link:
    """Kinematic two-link arm; state is the pair of joint angles.

    Actions are per-step angle increments. Reward is the negative distance
    from the fingertip to the target plus the usual control cost. The
    success radius defaults to 0.01 for the 0.2-reach arm; pass config
    radius 0.001 for the tight variant.
    """

    name = "reacher2link"
    spec = EnvSpec(state_dim=2, action_dim=2, action_low=(-0.2, -0.2), action_high=(0.2, 0.2), horizon=100)
    goal_dim = 2
    link1 = 0.1
    link2 = 0.1
    control_cost = 0.01

    def __init__(self, success_radius=0.01):
        self.success_radius = success_radius

    def initial_state(self):
        return np.zeros(2)

    def fingertip(self, angles):
        t1, t12 = angles[0], angles[0] + angles[1]
        return np.array(
            [self.link1 * np.cos(t1) + self.link2 * np.cos(t12),
             self.link1 * np.sin(t1) + self.link2 * np.sin(t12)]
        )

    @staticmethod
    def _wrap(angles):
        # wrap into (-pi, pi]
        w = np.remainder(angles + np.pi, 2.0 * np.pi) - np.pi
        return np.where(w == -np.pi, np.pi, w)

    def step(self, state, action, goal) -> StepResult:
        a = np.clip(action, -0.2, 0.2)
        nxt = self._wrap(state + a)
        dist = float(np.linalg.norm(self.fingertip(nxt) - goal))
        reward = -dist - self.control_cost * float(a @ a)
        return StepResult(nxt, reward, terminal=dist < self.success_radius)

    @property
    def max_reach(self):
        return self.link1 + self.link2

    @property
    def min_reach(self):
        return abs(self.link1 - self.link2)

    def sample_goal(self, rng):
        # area-uniform over the reachable annulus
        r = np.sqrt(rng.uniform(self.min_reach**2, self.max_reach**2))
        phi = rng.uniform(0.0, 2.0 * np.pi)
        return np.array([r * np.cos(phi), r * np.sin(phi)])

    def clip_goal(self, goal):
        r = float(np.linalg.norm(goal))
        if r < 1e-12:
            return np.array([self.min_reach, 0.0])
        return goal * np.clip(r, self.min_reach, self.max_reach) / r


class VelocityTracker:
    """One-dimensional velocity regulation with an alive bonus.

    The agent accelerates within [-0.2, 0.2] per step; velocity is kept in
    [-1, 2]. Reward is 1 minus the absolute gap to the goal velocity, so
    the surrogate never terminates before the horizon.
    """

    name = "velocitytracker"
    spec = EnvSpec(state_dim=1, action_dim=1, action_low=(-0.2,), action_high=(0.2,), horizon=100)
    goal_dim = 1
    alive_bonus = 1.0

    def initial_state(self):
        return np.zeros(1)

    def step(self, state, action, goal) -> StepResult:
        a = np.clip(action, -0.2, 0.2)
        v = np.clip(state + a, -1.0, 2.0)
        reward = -abs(float(v[0]) - float(goal[0])) + self.alive_bonus
        return StepResult(v, reward, terminal=False)

    def sample_goal(self, rng):
        return rng.uniform(0.0, 1.0, size=1)

    def clip_goal(self, goal):
        return np.clip(goal, 0.0, 1.0)


def episode_step(domain, state, action, goal, step_index) -> StepResult:
    """domain.step plus horizon bookkeeping; step_index is 1-based.

    truncated is set only at the horizon and only when the success
    condition did not fire on the same step (terminal wins).
    """
    result = domain.step(state, action, goal)
    if not result.terminal and step_index >= domain.spec.horizon:
        result.truncated = True
    return result


DOMAINS = {
    Navigation2D.name: Navigation2D,
    Reacher2Link.name: Reacher2Link,
    VelocityTracker.name: VelocityTracker,
}


def get_domain(name: str):
    try:
        return DOMAINS[name]()
    except KeyError:
        raise ConfigError(f"unknown domain {name!r}, expected one of {sorted(DOMAINS)}") from None


@dataclass
class TaskSequence:
    domain: str
    seed: int
    goals: list  # list of np.ndarray
    centers: list = None  # cluster centers when generated by kclusters
    center_index: list = None  # per-task generating center

    def to_json(self) -> str:
        payload = {"domain": self.domain, "seed": self.seed, "tasks": [[float(x) for x in g] for g in self.goals]}
        return json.dumps(payload, indent=2)

    def save(self, path):
        with open(path, "w") as f:
            f.write(self.to_json())
            f.write("\n")

    @classmethod
    def load(cls, path) -> "TaskSequence":
        try:
            with open(path) as f:
                payload = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read task sequence {path}: {e}") from None
        for key in ("domain", "seed", "tasks"):
            if key not in payload:
                raise ConfigError(f"task sequence {path} is missing key {key!r}")
        goals = [np.asarray(g, dtype=np.float64) for g in payload["tasks"]]
        return cls(domain=payload["domain"], seed=payload["seed"], goals=goals)


def _place_centers(domain, k, spread, rng, attempts=1000):
    """k goal centers with pairwise separation >= 4 * spread."""
    min_sep = 4.0 * spread
    for _ in range(attempts):
        centers = [domain.sample_goal(rng) for _ in range(k)]
        ok = all(
            np.linalg.norm(centers[i] - centers[j]) >= min_sep
            for i in range(k)
            for j in range(i + 1, k)
        )
        if ok:
            return centers
    raise ConfigError(
        f"cannot place {k} cluster centers with separation >= {min_sep:g} in {domain.name}"
    )


def sample_task_sequence(domain_name, count, seed, structure="uniform") -> TaskSequence:
    """Goal sequence of the given length; structure is 'uniform' or ('kclusters', k, spread)."""
    if count < 1:
        raise ConfigError("task count must be >= 1")
    domain = get_domain(domain_name)
    rng = np.random.default_rng(seed)
    if structure == "uniform":
        goals = [domain.sample_goal(rng) for _ in range(count)]
        return TaskSequence(domain_name, seed, goals)
    kind, k, spread = structure
    if kind != "kclusters":
        raise ConfigError(f"unknown task structure {structure!r}")
    if k < 1:
        raise ConfigError("kclusters needs k >= 1")
    if spread < 0:
        raise ConfigError("kclusters spread must be >= 0")
    centers = _place_centers(domain, k, spread, rng)
    goals, which = [], []
    for _ in range(count):
        c = int(rng.integers(0, k))
        goal = centers[c] + rng.uniform(-spread, spread, size=domain.goal_dim)
        goals.append(domain.clip_goal(goal))
        which.append(c)
    return TaskSequence(domain_name, seed, goals, centers=centers, center_index=which)


def parse_structure(text: str):
    """Parse 'uniform', 'kclusters:K:SPREAD', or 'file:PATH' structure strings."""
    if text == "uniform":
        return "uniform"
    if text.startswith("kclusters:"):
        parts = text.split(":")
        if len(parts) != 3:
            raise ConfigError(f"bad structure {text!r}, expected kclusters:K:SPREAD")
        try:
            return ("kclusters", int(parts[1]), float(parts[2]))
        except ValueError:
            raise ConfigError(f"bad structure {text!r}: K must be int, SPREAD float") from None
    if text.startswith("file:"):
        return ("file", text[5:])
    raise ConfigError(f"unknown task structure {text!r}")
