"""Thin command-line client for the HTTP API.

Every subcommand is one POST against the service. By default the app is
driven in-process over its ASGI interface (no socket, same routing and
validation); pass --server or set DACN_SERVER to talk to a running
instance instead. DACN_SEED overrides any seed flag or config seed.

Exit codes: 0 success, 1 runtime error, 2 usage/config error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys


def _request(server: str | None, endpoint: str, payload: dict):
    server = server or os.environ.get("DACN_SERVER")
    import httpx

    if server:
        with httpx.Client(base_url=server, timeout=None) as client:
            return client.post(endpoint, json=payload)

    # no server configured: drive the app in-process over its ASGI interface
    import anyio

    from .service.app import create_app

    async def go():
        transport = httpx.ASGITransport(app=create_app())
        async with httpx.AsyncClient(
            transport=transport, base_url="http://dacn.local", timeout=None
        ) as client:
            return await client.post(endpoint, json=payload)

    return anyio.run(go)


def _seed_override(value: int | None) -> int | None:
    env = os.environ.get("DACN_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            print(f"error: DACN_SEED must be an integer, got {env!r}", file=sys.stderr)
            raise SystemExit(2)
    return value


def _post(args, endpoint: str, payload: dict) -> dict:
    response = _request(args.server, endpoint, payload)
    if response.status_code == 200:
        return response.json()
    try:
        detail = response.json().get("detail")
    except Exception:
        detail = response.text
    print(f"error: {detail}", file=sys.stderr)
    raise SystemExit(2 if response.status_code == 422 else 1)


def cmd_synth(args):
    payload = {
        "out": args.out,
        "height": args.height,
        "width": args.width,
        "bands": args.bands,
        "rank": args.rank,
        "noise": args.noise,
        "seed": _seed_override(args.seed),
    }
    body = _post(args, "/v1/synth", payload)
    cube = body["cube"]
    print(f"wrote {cube['path']} ({cube['height']}x{cube['width']}x{cube['bands']})")


def cmd_degrade(args):
    body = _post(args, "/v1/degrade", {"in": args.in_path, "out": args.out, "scale": args.scale})
    cube = body["cube"]
    print(f"wrote {cube['path']} ({cube['height']}x{cube['width']}x{cube['bands']})")


def cmd_train(args):
    payload = {
        "data_dir": args.data_dir,
        "config": args.config,
        "out_checkpoint": args.out_checkpoint,
        "history": args.history,
        "seed": _seed_override(None),
    }
    body = _post(args, "/v1/train", payload)
    print(
        f"trained {body['epochs']} epochs; best val loss {body['best_val_loss']:.6g}; "
        f"checkpoint {body['checkpoint']}; history {body['history']}"
    )


def cmd_eval(args):
    body = _post(args, "/v1/eval", {"ref": args.ref, "test": args.test, "report": args.report})
    print(
        f"mpsnr {body['mpsnr']:.4f} dB; mssim {body['mssim']:.6f}; sam {body['sam']:.4f} deg; "
        f"report {body['report']}"
    )


def cmd_sr(args):
    body = _post(args, "/v1/sr", {"in": args.in_path, "checkpoint": args.checkpoint, "out": args.out})
    cube = body["cube"]
    print(f"wrote {cube['path']} ({cube['height']}x{cube['width']}x{cube['bands']})")


def cmd_gradcheck(args):
    payload = {
        "tolerance": args.tolerance,
        "seed": _seed_override(args.seed),
        "report": args.report,
    }
    body = _post(args, "/v1/gradcheck", payload)
    for check in body["checks"]:
        status = "pass" if check["passed"] else "FAIL"
        print(f"{status}  {check['name']:<22} max_rel_error={check['max_rel_error']:.3g}")
    if not body["passed"]:
        print("gradient check FAILED", file=sys.stderr)
        raise SystemExit(1)
    print("gradient check passed")


def cmd_serve(args):
    import uvicorn

    from .service.app import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dacn", description="Hyperspectral super-resolution pipeline client."
    )
    parser.add_argument("--server", help="base URL of a running service (default: in-process)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic hyperspectral cube")
    p.add_argument("--out", required=True)
    p.add_argument("--height", type=int, default=96)
    p.add_argument("--width", type=int, default=96)
    p.add_argument("--bands", type=int, default=24)
    p.add_argument("--rank", type=int, default=4)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("degrade", help="area-downsample a cube by 2/4/8")
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--scale", type=int, required=True)
    p.set_defaults(func=cmd_degrade)

    p = sub.add_parser("train", help="train on cubes in a directory")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out-checkpoint", required=True)
    p.add_argument("--history", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="MPSNR/MSSIM/SAM between two cubes")
    p.add_argument("--ref", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--report", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sr", help="super-resolve a cube with a checkpoint")
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sr)

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--report", help="optional CSV report path")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except SystemExit:
        raise
    except Exception as exc:  # transport failures and other surprises
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
