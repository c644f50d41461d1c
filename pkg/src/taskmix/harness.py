"""Lifelong experiment driver.

Runs one (method, seed) lifelong experiment over a task sequence and
emits episodes.csv, clusters.csv (mixture methods), tasks.json,
summary.json and plotdata.csv into the output directory. Files are
streamed append-only so an aborted run keeps every finished episode.
"""

import csv
import dataclasses
import json
import os
from dataclasses import dataclass

import numpy as np

from . import rng as rngs
from .ddpg import Batch, DdpgAgent, EpisodeResult, ReplayBuffer, Transition, run_episode
from .envs import episode_step, get_domain, parse_structure, sample_task_sequence, TaskSequence
from .errors import ConfigError, NumericError
from .mixture import MIN_RESPONSIBILITY, TaskModelMixture, save_mixture
from .pretrain import load_prior

METHODS = ("finetune", "reservoir", "fromscratch", "robust", "dpmm", "dpmm_robust")
MIXTURE_METHODS = ("dpmm", "dpmm_robust")

EPISODES_HEADER = ["task", "episode", "return", "steps", "component", "L", "spawned"]

# average returns reported in the literature for this benchmark family at
# full scale (T=50, J=200, 512-wide networks); kept for context only and
# not comparable to desk-scale runs
PUBLISHED_REFERENCE = {
    "scale": "T=50, J=200, hidden width 512",
    "navigation": {
        "fine_tune": -31.73, "reservoir": -28.78, "consolidation": -22.01,
        "progressive": -15.47, "mixture": -1.23,
    },
    "ablation_navigation": {
        "from_scratch": -49.79, "robust": -9.08, "dpmm": -3.37, "dpmm_robust": -1.23,
    },
}


@dataclass
class RunConfig:
    domain: str = "navigation2d"
    method: str = "dpmm_robust"
    tasks: int = 20
    episodes_per_task: int = 100
    seed: int = 0
    xi: float = 1.0
    sigma: float = 1.0
    hidden_width: int = 64
    lr: float = 1e-3
    gamma: float = 0.99
    tau: float = 0.2
    noise_std: float = None  # default: 10% of the action half-range
    batch_size: int = 64
    buffer_capacity: int = 50_000
    prior_path: str = None
    task_structure: str = "uniform"
    output_dir: str = "out"
    optimizer: str = "adam"
    em_eps: float = 1e-4
    em_max_iters: int = 1
    disable_spawn: bool = False  # single-cluster mode for reduction checks
    save_final_mixture: bool = True

    def validate(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}, expected one of {METHODS}")
        get_domain(self.domain)
        if self.tasks < 1:
            raise ConfigError("tasks must be >= 1")
        if self.episodes_per_task < 1:
            raise ConfigError("episodes_per_task must be >= 1")
        if not 0.0 <= self.gamma < 1.0:
            raise ConfigError("gamma must be in [0, 1)")
        if self.xi <= 0:
            raise ConfigError("xi must be positive")
        if self.sigma <= 0:
            raise ConfigError("sigma must be positive")
        if self.lr <= 0:
            raise ConfigError("learning rate must be positive")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.buffer_capacity < self.batch_size:
            raise ConfigError("buffer_capacity must be >= batch_size")
        if self.optimizer not in ("sgd", "adam"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if self.em_max_iters < 1:
            raise ConfigError("em_max_iters must be >= 1")
        if self.em_eps <= 0:
            raise ConfigError("em_eps must be positive")
        if self.method in ("robust", "dpmm_robust") and not self.prior_path:
            raise ConfigError(f"method {self.method!r} requires prior_path")
        parse_structure(self.task_structure)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        fields = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - fields
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def fmt(x) -> str:
    """Floats with 9 significant digits, everything else as str."""
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.9g}"
    return str(x)


class _CsvWriter:
    """Append-only CSV writer that flushes after every row."""

    def __init__(self, path, header):
        self._file = open(path, "w", newline="")
        self._writer = csv.writer(self._file)
        self._writer.writerow(header)
        self._file.flush()

    def row(self, values):
        self._writer.writerow([fmt(v) for v in values])
        self._file.flush()

    def close(self):
        self._file.close()


def _make_agent(config: RunConfig, domain, init_rng) -> DdpgAgent:
    return DdpgAgent.init(
        domain.spec.state_dim,
        domain.spec.action_dim,
        domain.spec.action_low,
        domain.spec.action_high,
        hidden=(config.hidden_width, config.hidden_width),
        rng=init_rng,
        gamma=config.gamma,
        tau=config.tau,
        noise_std=config.noise_std,
        lr=config.lr,
        optimizer=config.optimizer,
    )


def _agent_kwargs(config: RunConfig, domain) -> dict:
    return dict(
        action_low=domain.spec.action_low,
        action_high=domain.spec.action_high,
        gamma=config.gamma,
        tau=config.tau,
        noise_std=config.noise_std,
        lr=config.lr,
        optimizer=config.optimizer,
    )


def _load_tasks(config: RunConfig) -> TaskSequence:
    structure = parse_structure(config.task_structure)
    if isinstance(structure, tuple) and structure[0] == "file":
        seq = TaskSequence.load(structure[1])
        if seq.domain != config.domain:
            raise ConfigError(
                f"task file domain {seq.domain!r} does not match run domain {config.domain!r}"
            )
        if len(seq.goals) < config.tasks:
            raise ConfigError(
                f"task file holds {len(seq.goals)} tasks, run needs {config.tasks}"
            )
        seq.goals = seq.goals[: config.tasks]
        return seq
    return sample_task_sequence(config.domain, config.tasks, config.seed, structure)


def _new_buffer(config: RunConfig, domain, mode="fifo", rng=None) -> ReplayBuffer:
    return ReplayBuffer(
        config.buffer_capacity, domain.spec.state_dim, domain.spec.action_dim, mode=mode, rng=rng
    )


def run_lifelong(config: RunConfig, progress=None) -> dict:
    """Execute one lifelong run and return the summary dict."""
    config.validate()
    domain = get_domain(config.domain)
    if config.method in ("robust", "dpmm_robust"):
        prior = load_prior(config.prior_path, **_agent_kwargs(config, domain))
    else:
        prior = None

    os.makedirs(config.output_dir, exist_ok=True)
    tasks = _load_tasks(config)
    tasks.save(os.path.join(config.output_dir, "tasks.json"))
    with open(os.path.join(config.output_dir, "config.json"), "w") as f:
        json.dump(config.to_dict(), f, indent=2)
        f.write("\n")

    episodes = _CsvWriter(os.path.join(config.output_dir, "episodes.csv"), EPISODES_HEADER)
    clusters = None
    if config.method in MIXTURE_METHODS:
        goal_cols = [f"goal_{i}" for i in range(domain.goal_dim)]
        clusters = _CsvWriter(
            os.path.join(config.output_dir, "clusters.csv"),
            ["task", *goal_cols, "component", "L", "spawned"],
        )
    try:
        if config.method in MIXTURE_METHODS:
            _run_mixture(config, domain, tasks.goals, prior, episodes, clusters, progress)
        else:
            _run_single_model(config, domain, tasks.goals, prior, episodes, progress)
    except NumericError as e:
        episodes.close()
        if clusters:
            clusters.close()
        _write_summary(config, status="aborted", error=str(e))
        raise
    episodes.close()
    if clusters:
        clusters.close()
    return summarize(config.output_dir)


# -- single-model baselines ---------------------------------------------------


def _run_single_model(config, domain, goals, prior, episodes, progress):
    explore = rngs.stream(config.seed, rngs.EXPLORE)
    sample = rngs.stream(config.seed, rngs.REPLAY)
    method = config.method

    agent = None
    buffer = None
    reservoir = None
    if method == "finetune":
        agent = _make_agent(config, domain, rngs.stream(config.seed, rngs.INIT, 0))
        buffer = _new_buffer(config, domain)
    elif method == "reservoir":
        agent = _make_agent(config, domain, rngs.stream(config.seed, rngs.INIT, 0))
        buffer = _new_buffer(config, domain)
        reservoir = _new_buffer(config, domain, mode="reservoir", rng=rngs.stream(config.seed, rngs.REPLAY, 1))

    for t, goal in enumerate(goals, start=1):
        if method == "fromscratch":
            agent = _make_agent(config, domain, rngs.stream(config.seed, rngs.INIT, t - 1))
            buffer = _new_buffer(config, domain)
        elif method == "robust":
            agent = prior.clone()
            buffer = _new_buffer(config, domain)
        for j in range(1, config.episodes_per_task + 1):
            if method == "reservoir":
                result = _reservoir_episode(config, domain, goal, agent, buffer, reservoir, explore, sample)
            else:
                result = run_episode(
                    domain, goal, agent, buffer, explore, sample, batch_size=config.batch_size
                )
            episodes.row([t, j, result.ret, result.steps, 0, 1, False])
            if progress is not None:
                progress(t, j, config.tasks, config.episodes_per_task)

    # final parameters (last task's agent for the per-task methods)
    for role, net in (
        ("actor", agent.actor), ("critic", agent.critic),
        ("actor_target", agent.actor_target), ("critic_target", agent.critic_target),
    ):
        net.save(os.path.join(config.output_dir, f"agent_{role}.bin"))


def _reservoir_episode(config, domain, goal, agent, recent, reservoir, explore_rng, sample_rng):
    """Episode with dual-batch updates: newest transitions plus a reservoir draw."""
    state = domain.initial_state()
    total, steps = 0.0, 0
    for i in range(domain.spec.horizon):
        action = agent.select_action(state, explore_rng)
        result = episode_step(domain, state, action, goal, i + 1)
        tr = Transition(state, action, result.reward, result.next_state, result.terminal)
        recent.push(tr)
        reservoir.push(tr)
        total += result.reward
        steps = i + 1
        if recent.size >= config.batch_size:
            batch = Batch.concat(
                recent.newest(config.batch_size),
                reservoir.sample(config.batch_size, sample_rng),
            )
            agent.train_step(batch)
        state = result.next_state
        if result.terminal:
            break
    return EpisodeResult(total, steps, state)


# -- mixture methods ----------------------------------------------------------


def _collect_transitions(domain, goal, agent, explore_rng, count):
    """Fresh episodes with the given policy until count transitions exist."""
    collected = []
    while len(collected) < count:
        state = domain.initial_state()
        for i in range(domain.spec.horizon):
            action = agent.select_action(state, explore_rng)
            result = episode_step(domain, state, action, goal, i + 1)
            collected.append(Transition(state, action, result.reward, result.next_state, result.terminal))
            state = result.next_state
            if result.terminal or len(collected) == count:
                break
    return collected


def _collect_identification_batch(config, domain, goal, mixture, explore_rng):
    """The period's opening transitions, driving the spawn/assign posterior.

    One batch_size slice comes from the goal-agnostic prior policy, a
    stationary reference distribution on which a matching past component
    is recognizable after any gap; a second batch_size slice is split
    across the task models' own policies, where each model is sharpest,
    so a genuinely new task mismatches every component exactly where that
    component is most confident.
    """
    collected = _collect_transitions(domain, goal, mixture.prior_template, explore_rng, config.batch_size)
    comps = mixture.components
    base = config.batch_size // len(comps)
    extra = config.batch_size - base * len(comps)
    for i, comp in enumerate(comps):
        count = base + (1 if i < extra else 0)
        if count:
            collected += _collect_transitions(domain, goal, comp.agent, explore_rng, count)
    return collected


def _run_mixture(config, domain, goals, prior, episodes, clusters, progress):
    explore = rngs.stream(config.seed, rngs.EXPLORE)
    sample = rngs.stream(config.seed, rngs.REPLAY)
    if prior is None:
        prior = _make_agent(config, domain, rngs.stream(config.seed, rngs.INIT, 0))
    mixture = TaskModelMixture(prior, xi=config.xi, sigma=config.sigma)
    mixture.components[0].buffer = _new_buffer(config, domain)

    active = 0
    for t, goal in enumerate(goals, start=1):
        spawned = False
        assignment = None  # posterior soft counts for this period
        if t > 1 and not config.disable_spawn:
            transitions = _collect_identification_batch(config, domain, goal, mixture, explore)
            id_batch = Batch.from_transitions(transitions)
            resp = mixture.posterior(id_batch, include_candidate=True)
            spawned = mixture.maybe_spawn(resp)
            if spawned:
                mixture.components[-1].buffer = _new_buffer(config, domain)
                active = mixture.num_components - 1
                assignment = resp.values  # candidate entry is now the newborn's
            else:
                active = int(np.argmax(resp.values[:-1]))
                assignment = resp.values[:-1] / resp.values[:-1].sum()
            for tr in transitions:
                mixture.components[active].buffer.push(tr)

        for j in range(1, config.episodes_per_task + 1):
            agent = mixture.components[active].agent
            buffer = mixture.components[active].buffer
            state = domain.initial_state()
            total, steps = 0.0, 0
            for i in range(domain.spec.horizon):
                action = agent.select_action(state, explore)
                result = episode_step(domain, state, action, goal, i + 1)
                buffer.push(
                    Transition(state, action, result.reward, result.next_state, result.terminal)
                )
                total += result.reward
                steps = i + 1
                if buffer.size >= config.batch_size:
                    batch = buffer.sample(config.batch_size, sample)
                    mixture.run_em(batch, eps=config.em_eps, max_iters=config.em_max_iters)
                state = result.next_state
                if result.terminal:
                    break
            episodes.row([t, j, total, steps, active + 1, mixture.num_components, spawned and j == 1])
            if progress is not None:
                progress(t, j, config.tasks, config.episodes_per_task)

        # the CRP soft count records the assignment made when the task arrived
        if assignment is None:
            assignment = np.zeros(mixture.num_components)
            assignment[active] = 1.0
        mixture.update_masses(assignment)
        clusters.row([t, *goal, active + 1, mixture.num_components, spawned])

    if config.save_final_mixture:
        save_mixture(mixture, os.path.join(config.output_dir, "mixture"))


# -- summaries ----------------------------------------------------------------


def read_episodes(path):
    """episodes.csv rows as a list of dicts with typed fields."""
    rows = []
    with open(path, newline="") as f:
        for rec in csv.DictReader(f):
            rows.append(
                dict(
                    task=int(rec["task"]),
                    episode=int(rec["episode"]),
                    ret=float(rec["return"]),
                    steps=int(rec["steps"]),
                    component=int(rec["component"]),
                    L=int(rec["L"]),
                    spawned=rec["spawned"] == "True",
                )
            )
    return rows


def summarize(run_dir, bootstrap_samples=1000, bootstrap_seed=0) -> dict:
    """Aggregate episodes.csv into summary.json and plotdata.csv.

    plotdata.csv holds the per-episode-index mean return over tasks with a
    bootstrap 95% confidence band (resampling tasks with replacement).
    """
    episodes_path = os.path.join(run_dir, "episodes.csv")
    if not os.path.exists(episodes_path):
        raise ConfigError(f"no episodes.csv under {run_dir}")
    rows = read_episodes(episodes_path)
    if not rows:
        raise ConfigError(f"episodes.csv under {run_dir} is empty")

    by_task = {}
    for r in rows:
        by_task.setdefault(r["task"], []).append(r)
    task_ids = sorted(by_task)
    per_task_means = [float(np.mean([r["ret"] for r in by_task[t]])) for t in task_ids]
    n_tasks = len(task_ids)
    se = float(np.std(per_task_means, ddof=1) / np.sqrt(n_tasks)) if n_tasks > 1 else 0.0

    max_j = max(r["episode"] for r in rows)
    curve = np.full((n_tasks, max_j), np.nan)
    for ti, t in enumerate(task_ids):
        for r in by_task[t]:
            curve[ti, r["episode"] - 1] = r["ret"]

    rng = np.random.default_rng(bootstrap_seed)
    means = np.nanmean(curve, axis=0)
    boots = np.empty((bootstrap_samples, max_j))
    for b in range(bootstrap_samples):
        pick = rng.integers(0, n_tasks, size=n_tasks)
        boots[b] = np.nanmean(curve[pick], axis=0)
    lo = np.percentile(boots, 2.5, axis=0)
    hi = np.percentile(boots, 97.5, axis=0)

    plot = _CsvWriter(
        os.path.join(run_dir, "plotdata.csv"), ["episode", "mean_return", "ci_low", "ci_high"]
    )
    for j in range(max_j):
        plot.row([j + 1, means[j], lo[j], hi[j]])
    plot.close()

    meta = {}
    config_path = os.path.join(run_dir, "config.json")
    if os.path.exists(config_path):
        with open(config_path) as f:
            cfg = json.load(f)
        meta = {k: cfg.get(k) for k in ("domain", "method", "seed", "tasks", "episodes_per_task")}

    summary = {
        "status": "ok",
        **meta,
        "episodes": len(rows),
        "mean_return": float(np.mean([r["ret"] for r in rows])),
        "per_task_means": per_task_means,
        "standard_error": se,
        "final_components": int(rows[-1]["L"]),
        "published_reference": PUBLISHED_REFERENCE,
    }
    with open(os.path.join(run_dir, "summary.json"), "w") as f:
        json.dump(summary, f, indent=2)
        f.write("\n")
    return summary


def _write_summary(config: RunConfig, status, error=None):
    payload = {"status": status, "method": config.method, "domain": config.domain, "seed": config.seed}
    if error:
        payload["error"] = error
    with open(os.path.join(config.output_dir, "summary.json"), "w") as f:
        json.dump(payload, f, indent=2)
        f.write("\n")
