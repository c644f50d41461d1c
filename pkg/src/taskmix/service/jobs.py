"""Background job execution for long-running training work.

Each job runs in a daemon thread; state transitions are
queued -> running -> succeeded | failed. Failures keep the error kind so
clients can map config mistakes and numeric blowups to distinct exit
codes.
"""

import threading
import uuid
from dataclasses import dataclass, field

from ..errors import ConfigError, NumericError


@dataclass
class Job:
    job_id: str
    kind: str
    state: str = "queued"
    error_kind: str = None
    error: str = None
    progress: dict = None
    result: dict = None
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def snapshot(self) -> dict:
        with self._lock:
            return {
                "job_id": self.job_id,
                "kind": self.kind,
                "state": self.state,
                "error_kind": self.error_kind,
                "error": self.error,
                "progress": dict(self.progress) if self.progress else None,
                "result": self.result,
            }


class JobManager:
    def __init__(self):
        self._jobs = {}
        self._lock = threading.Lock()

    def submit(self, kind, fn) -> str:
        """Run fn(job) in a background thread; returns the job id."""
        job = Job(job_id=uuid.uuid4().hex[:12], kind=kind)
        with self._lock:
            self._jobs[job.job_id] = job

        def runner():
            with job._lock:
                job.state = "running"
            try:
                result = fn(job)
            except ConfigError as e:
                with job._lock:
                    job.state, job.error_kind, job.error = "failed", "config", str(e)
            except NumericError as e:
                with job._lock:
                    job.state, job.error_kind, job.error = "failed", "numeric", str(e)
            except Exception as e:  # pragma: no cover - defensive
                with job._lock:
                    job.state, job.error_kind, job.error = "failed", "internal", f"{type(e).__name__}: {e}"
            else:
                with job._lock:
                    job.state, job.result = "succeeded", result

        threading.Thread(target=runner, daemon=True).start()
        return job.job_id

    def get(self, job_id) -> Job:
        with self._lock:
            return self._jobs.get(job_id)

    def update_progress(self, job, **kw):
        with job._lock:
            job.progress = kw
