"""Command-line client for the experiment service.

Every subcommand speaks HTTP. With --server it targets a running service;
otherwise the app is mounted in-process so the commands work standalone.
Exit codes: 0 success, 2 configuration error, 3 numeric failure during
training.
"""

import argparse
import json
import sys
import time

import httpx

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

POLL_SECONDS = 0.3


class ServiceClient:
    """Minimal HTTP wrapper; in-process unless a server URL is given."""

    def __init__(self, server=None):
        if server:
            self._client = httpx.Client(base_url=server.rstrip("/"), timeout=None)
        else:
            from fastapi.testclient import TestClient

            from .service import create_app

            self._client = TestClient(create_app())

    def post(self, path, payload):
        return self._client.post(path, json=payload)

    def get(self, path):
        return self._client.get(path)

    def close(self):
        self._client.close()


def _fail_http(resp):
    try:
        detail = resp.json().get("detail")
    except Exception:
        detail = resp.text
    if isinstance(detail, dict):
        kind = detail.get("error_kind", "config")
        message = detail.get("message", str(detail))
    else:
        kind, message = "config", str(detail)
    print(f"error ({kind}): {message}", file=sys.stderr)
    return EXIT_NUMERIC if kind == "numeric" else EXIT_CONFIG


def _watch_job(client, job_id, quiet=False):
    last = None
    while True:
        resp = client.get(f"/jobs/{job_id}")
        if resp.status_code != 200:
            return _fail_http(resp), None
        status = resp.json()
        state = status["state"]
        progress = status.get("progress")
        if not quiet and progress and progress != last:
            last = progress
            if progress.get("total_tasks"):
                print(
                    f"\rtask {progress['task']}/{progress['total_tasks']} "
                    f"episode {progress['episode']}/{progress['episodes_per_task']}   ",
                    end="",
                    flush=True,
                )
            else:
                print(f"\repisode {progress['episode']}/{progress['episodes_per_task']}   ", end="", flush=True)
        if state in ("succeeded", "failed"):
            if not quiet and last:
                print()
            if state == "failed":
                kind = status.get("error_kind") or "internal"
                print(f"error ({kind}): {status.get('error')}", file=sys.stderr)
                return (EXIT_NUMERIC if kind == "numeric" else EXIT_CONFIG if kind == "config" else 1), None
            return EXIT_OK, status.get("result")
        time.sleep(POLL_SECONDS)


def _submit_and_wait(client, path, payload, quiet=False):
    resp = client.post(path, payload)
    if resp.status_code not in (200, 202):
        return _fail_http(resp), None
    return _watch_job(client, resp.json()["job_id"], quiet=quiet)


def cmd_taskgen(args, client):
    payload = {"domain": args.domain, "tasks": args.tasks, "seed": args.seed, "structure": args.structure}
    resp = client.post("/tasks/generate", payload)
    if resp.status_code != 200:
        return _fail_http(resp)
    with open(args.out, "w") as f:
        json.dump(resp.json(), f, indent=2)
        f.write("\n")
    print(f"wrote {args.tasks} tasks to {args.out}")
    return EXIT_OK


def cmd_pretrain(args, client):
    payload = {
        "domain": args.domain,
        "num_tasks": args.m,
        "episodes_per_task": args.episodes,
        "seed": args.seed,
        "out_dir": args.out,
    }
    for key in ("hidden_width", "lr", "gamma", "tau", "batch_size", "buffer_capacity", "optimizer"):
        value = getattr(args, key)
        if value is not None:
            payload[key] = value
    code, result = _submit_and_wait(client, "/pretrain", payload, quiet=args.quiet)
    if code == EXIT_OK:
        print(f"prior saved to {result['out_dir']} ({result['episodes']} episodes)")
    return code


RUN_KEYS = (
    "domain", "method", "tasks", "episodes_per_task", "seed", "xi", "sigma", "hidden_width",
    "lr", "gamma", "tau", "noise_std", "batch_size", "buffer_capacity", "prior_path",
    "structure", "out_dir", "optimizer", "em_eps", "em_max_iters", "disable_spawn",
)


def cmd_run(args, client):
    payload = {}
    if args.config:
        try:
            with open(args.config) as f:
                payload.update(json.load(f))
        except (OSError, json.JSONDecodeError) as e:
            print(f"error (config): cannot read {args.config}: {e}", file=sys.stderr)
            return EXIT_CONFIG
        unknown = set(payload) - set(RUN_KEYS)
        if unknown:
            print(f"error (config): unknown config keys {sorted(unknown)}", file=sys.stderr)
            return EXIT_CONFIG
    overrides = {
        "domain": args.domain, "method": args.method, "tasks": args.tasks,
        "episodes_per_task": args.episodes, "seed": args.seed, "xi": args.xi,
        "sigma": args.sigma, "hidden_width": args.hidden_width, "lr": args.lr,
        "gamma": args.gamma, "tau": args.tau, "noise_std": args.noise_std,
        "batch_size": args.batch_size, "buffer_capacity": args.buffer_capacity,
        "prior_path": args.prior, "structure": args.structure, "out_dir": args.out,
        "optimizer": args.optimizer, "em_eps": args.em_eps, "em_max_iters": args.em_max_iters,
        "disable_spawn": args.disable_spawn or None,
    }
    payload.update({k: v for k, v in overrides.items() if v is not None})
    if "out_dir" not in payload:
        print("error (config): --out (or out_dir in --config) is required", file=sys.stderr)
        return EXIT_CONFIG
    code, result = _submit_and_wait(client, "/runs", payload, quiet=args.quiet)
    if code == EXIT_OK:
        print(
            f"run complete: mean return {result['mean_return']:.6g} "
            f"(+/- {result['standard_error']:.3g} SE), components {result['final_components']}, "
            f"outputs in {payload['out_dir']}"
        )
    return code


def cmd_summarize(args, client):
    resp = client.post("/summaries", {"run_dir": args.in_dir})
    if resp.status_code != 200:
        return _fail_http(resp)
    summary = resp.json()
    print(json.dumps(summary, indent=2))
    return EXIT_OK


def cmd_serve(args, client=None):
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port)
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="taskmix", description=__doc__)
    parser.add_argument("--server", default=None, help="service URL; in-process when omitted")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("taskgen", help="generate a task sequence file")
    p.add_argument("--domain", default="navigation2d")
    p.add_argument("--tasks", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--structure", default="uniform")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_taskgen)

    p = sub.add_parser("pretrain", help="train a robust prior by goal randomization")
    p.add_argument("--domain", default="navigation2d")
    p.add_argument("--m", type=int, default=8, help="number of pretraining tasks")
    p.add_argument("--episodes", type=int, default=50, help="episodes per pretraining task")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--hidden-width", dest="hidden_width", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    p.add_argument("--buffer-capacity", dest="buffer_capacity", type=int, default=None)
    p.add_argument("--optimizer", choices=("sgd", "adam"), default=None)
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(fn=cmd_pretrain)

    p = sub.add_parser("run", help="run one lifelong experiment")
    p.add_argument("--config", default=None, help="JSON config file; flags override")
    p.add_argument("--domain", default=None)
    p.add_argument("--method", default=None)
    p.add_argument("--tasks", type=int, default=None)
    p.add_argument("--episodes", type=int, default=None, help="episodes per task")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--xi", type=float, default=None)
    p.add_argument("--sigma", type=float, default=None)
    p.add_argument("--prior", default=None, help="robust prior directory")
    p.add_argument("--structure", default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--hidden-width", dest="hidden_width", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--noise-std", dest="noise_std", type=float, default=None)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    p.add_argument("--buffer-capacity", dest="buffer_capacity", type=int, default=None)
    p.add_argument("--optimizer", choices=("sgd", "adam"), default=None)
    p.add_argument("--em-eps", dest="em_eps", type=float, default=None)
    p.add_argument("--em-max-iters", dest="em_max_iters", type=int, default=None)
    p.add_argument("--disable-spawn", dest="disable_spawn", action="store_true")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("summarize", help="aggregate a run directory into summary.json")
    p.add_argument("--in", dest="in_dir", required=True)
    p.set_defaults(fn=cmd_summarize)

    p = sub.add_parser("serve", help="start the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(fn=cmd_serve)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "serve":
        return cmd_serve(args)
    client = ServiceClient(args.server)
    try:
        return args.fn(args, client)
    finally:
        client.close()


if __name__ == "__main__":
    sys.exit(main())
