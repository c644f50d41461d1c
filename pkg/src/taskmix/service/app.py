"""HTTP service exposing task generation, pretraining, lifelong runs and summaries.

Training endpoints submit background jobs and return a job id to poll;
task generation and summarizing answer synchronously. Config mistakes
surface as 400 responses with error_kind "config".
"""

from fastapi import FastAPI, HTTPException

from ..envs import parse_structure, sample_task_sequence, TaskSequence
from ..errors import ConfigError
from ..harness import RunConfig, run_lifelong, summarize
from ..pretrain import PretrainSpec, save_prior, train_robust_prior
from .jobs import JobManager
from .schemas import (
    JobStatus,
    JobSubmitted,
    PretrainRequest,
    RunRequest,
    SummarizeRequest,
    TaskGenRequest,
    TaskGenResponse,
)


def _config_error(e):
    return HTTPException(status_code=400, detail={"error_kind": "config", "message": str(e)})


def run_config_from_request(req: RunRequest) -> RunConfig:
    return RunConfig(
        domain=req.domain,
        method=req.method,
        tasks=req.tasks,
        episodes_per_task=req.episodes_per_task,
        seed=req.seed,
        xi=req.xi,
        sigma=req.sigma,
        hidden_width=req.hidden_width,
        lr=req.lr,
        gamma=req.gamma,
        tau=req.tau,
        noise_std=req.noise_std,
        batch_size=req.batch_size,
        buffer_capacity=req.buffer_capacity,
        prior_path=req.prior_path,
        task_structure=req.structure,
        output_dir=req.out_dir,
        optimizer=req.optimizer,
        em_eps=req.em_eps,
        em_max_iters=req.em_max_iters,
        disable_spawn=req.disable_spawn,
    )


def create_app() -> FastAPI:
    app = FastAPI(title="taskmix", version="0.1.0")
    jobs = JobManager()

    @app.get("/health")
    def health():
        return {"status": "ok"}

    @app.post("/tasks/generate", response_model=TaskGenResponse)
    def generate_tasks(req: TaskGenRequest):
        try:
            structure = parse_structure(req.structure)
            if isinstance(structure, tuple) and structure[0] == "file":
                seq = TaskSequence.load(structure[1])
            else:
                seq = sample_task_sequence(req.domain, req.tasks, req.seed, structure)
        except ConfigError as e:
            raise _config_error(e)
        return TaskGenResponse(
            domain=seq.domain, seed=seq.seed, tasks=[[float(x) for x in g] for g in seq.goals]
        )

    @app.post("/pretrain", response_model=JobSubmitted, status_code=202)
    def pretrain(req: PretrainRequest):
        spec = PretrainSpec(
            domain=req.domain,
            num_tasks=req.num_tasks,
            episodes_per_task=req.episodes_per_task,
            seed=req.seed,
            hidden_width=req.hidden_width,
            lr=req.lr,
            gamma=req.gamma,
            tau=req.tau,
            batch_size=req.batch_size,
            buffer_capacity=req.buffer_capacity,
            optimizer=req.optimizer,
        )
        try:
            spec.validate()
        except ConfigError as e:
            raise _config_error(e)

        def work(job):
            def progress(ep, total):
                jobs.update_progress(job, task=0, episode=ep, total_tasks=0, episodes_per_task=total)

            agent = train_robust_prior(spec, progress=progress)
            save_prior(agent, req.out_dir)
            return {"out_dir": req.out_dir, "episodes": spec.num_tasks * spec.episodes_per_task}

        return JobSubmitted(job_id=jobs.submit("pretrain", work))

    @app.post("/runs", response_model=JobSubmitted, status_code=202)
    def submit_run(req: RunRequest):
        config = run_config_from_request(req)
        try:
            config.validate()
        except ConfigError as e:
            raise _config_error(e)

        def work(job):
            def progress(t, j, total_t, total_j):
                jobs.update_progress(
                    job, task=t, episode=j, total_tasks=total_t, episodes_per_task=total_j
                )

            return run_lifelong(config, progress=progress)

        return JobSubmitted(job_id=jobs.submit("run", work))

    @app.get("/jobs/{job_id}", response_model=JobStatus)
    def job_status(job_id: str):
        job = jobs.get(job_id)
        if job is None:
            raise HTTPException(status_code=404, detail={"error_kind": "config", "message": f"no such job {job_id}"})
        return JobStatus(**job.snapshot())

    @app.post("/summaries")
    def summarize_run(req: SummarizeRequest):
        try:
            return summarize(req.run_dir)
        except ConfigError as e:
            raise _config_error(e)

    return app
