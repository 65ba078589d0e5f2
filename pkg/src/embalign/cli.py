"""Command-line client for the pipeline service.

The CLI is a thin HTTP client: it posts a StageRequest to the service and
prints the returned output paths. By default it mounts the FastAPI app
in-process (no server needed); --server targets a running instance instead.

Exit codes: 0 success, 2 config error, 3 data/format error, 4 numerical
failure, 1 anything unexpected.
"""

from __future__ import annotations

import argparse
import sys

import httpx

STAGE_NAMES = ("synth", "featurize", "pca", "align", "evaluate", "sweep", "baseline")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="embalign",
        description="Joint embedding alignment pipelines: generate data, "
                    "featurize reports, reduce, align, evaluate, sweep.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in STAGE_NAMES:
        p = sub.add_parser(name, help=f"run the {name} stage")
        p.add_argument("--config", required=True, help="experiment config file")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config's base seed")
        p.add_argument("--out", default=None, help="override the output directory")
        p.add_argument("--quiet", action="store_true", help="suppress normal output")
        p.add_argument("--server", default=None,
                       help="base URL of a running service (default: in-process)")
    serve = sub.add_parser("serve", help="start the HTTP service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    return parser


def _post(server: str | None, stage: str, payload: dict) -> httpx.Response:
    if server:
        with httpx.Client(base_url=server.rstrip("/"), timeout=None) as client:
            return client.post(f"/v1/{stage}", json=payload)

    # default: mount the service in-process over an ASGI transport
    import asyncio

    from .service.app import create_app

    async def go():
        transport = httpx.ASGITransport(app=create_app())
        async with httpx.AsyncClient(transport=transport, timeout=None,
                                     base_url="http://embalign.local") as client:
            return await client.post(f"/v1/{stage}", json=payload)

    return asyncio.run(go())


def run_stage_command(args) -> int:
    payload = {"config_path": args.config, "seed": args.seed, "out_dir": args.out}
    try:
        resp = _post(args.server, args.command, payload)
    except httpx.HTTPError as exc:
        print(f"error: cannot reach service: {exc}", file=sys.stderr)
        return 1
    if resp.status_code == 200:
        body = resp.json()
        if not args.quiet:
            for path in body["outputs"]:
                print(path)
            print(f"manifest: {body['manifest_path']}")
        return 0
    try:
        body = resp.json()
    except ValueError:
        print(f"error: service returned HTTP {resp.status_code}", file=sys.stderr)
        return 1
    if "message" in body and "exit_code" in body:
        print(f"error: {body['message']}", file=sys.stderr)
        return int(body["exit_code"])
    # pydantic request validation failures count as config errors
    if resp.status_code == 422:
        print(f"error: invalid request: {body.get('detail')}", file=sys.stderr)
        return 2
    print(f"error: service returned HTTP {resp.status_code}: {body}", file=sys.stderr)
    return 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "serve":
        import uvicorn
        uvicorn.run("embalign.service.app:app", host=args.host, port=args.port)
        return 0
    return run_stage_command(args)


if __name__ == "__main__":
    sys.exit(main())
