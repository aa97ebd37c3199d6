"""Command-line client for the trajgate service.

Every subcommand talks to the service API; by default an in-process instance
handles the request (no network), and ``--server`` targets a running one.
Exit codes: 0 success, 1 validation error, 2 I/O error.
"""

from __future__ import annotations

import argparse
import asyncio
import csv as _csv
import json
import sys
from pathlib import Path

import httpx

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2


class ClientError(RuntimeError):
    def __init__(self, status: int, detail: str):
        super().__init__(f"service returned {status}: {detail}")
        self.status = status


def _call(server: str | None, path: str, payload: dict) -> dict:
    async def go() -> dict:
        if server:
            client = httpx.AsyncClient(base_url=server, timeout=600.0)
        else:
            from .service import app

            client = httpx.AsyncClient(
                transport=httpx.ASGITransport(app=app), base_url="http://trajgate", timeout=600.0
            )
        async with client:
            resp = await client.post(path, json=payload)
            if resp.status_code >= 400:
                try:
                    detail = resp.json().get("detail", resp.text)
                except ValueError:
                    detail = resp.text
                raise ClientError(resp.status_code, str(detail))
            return resp.json()

    return asyncio.run(go())


def _read_json(path) -> dict:
    text = Path(path).read_text(encoding="utf-8")
    return json.loads(text)


def _write_json(path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _read_set_payload(csv_path) -> dict:
    csv_path = Path(csv_path)
    meta = _read_json(csv_path.with_suffix(".meta.json"))
    rows: dict[int, list[tuple[int, float, float]]] = {}
    with csv_path.open(encoding="utf-8", newline="") as fh:
        for rec in _csv.DictReader(fh):
            rows.setdefault(int(rec["traj_id"]), []).append(
                (int(rec["step"]), float(rec["x"]), float(rec["y"]))
            )
    trajectories = [
        [[x, y] for _, x, y in sorted(rows[tid])] for tid in sorted(rows)
    ]
    return {"epsilon": meta["epsilon"], "trajectories": trajectories, "limits": meta["limits"]}


def _scene_payload(path) -> dict:
    scene = _read_json(path)
    return {
        "target": scene["target"],
        "actors": scene["actors"],
        "ground_truth": scene.get("ground_truth"),
    }


def _options_payload(args) -> dict:
    opts = {
        "algo": args.algo,
        "workers": args.workers,
        "use_local_buffer": not getattr(args, "no_local_buffer", False),
    }
    if args.window is not None:
        opts["window_radius"] = args.window
    return opts


def cmd_make_fixture(args) -> None:
    out = _call(args.server, "/v1/fixture", {"spec": args.spec, "seed": args.seed})
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    map_name = f"{args.spec}_{args.seed}_map.json"
    scene_name = f"{args.spec}_{args.seed}_scene.json"
    scene = out["scene"]
    scene["map"] = map_name
    _write_json(out_dir / map_name, out["map"])
    _write_json(out_dir / scene_name, scene)
    print(f"wrote {out_dir / map_name} and {out_dir / scene_name}")


def cmd_gen_set(args) -> None:
    payload = {"epsilon": args.epsilon, "seed": args.seed}
    for key, val in (("n_speeds", args.speeds), ("n_accels", args.accels),
                     ("n_curvatures", args.curvatures)):
        if val is not None:
            payload[key] = val
    out = _call(args.server, "/v1/set/generate", payload)
    csv_path = Path(args.out)
    csv_path.write_text(out["csv"], encoding="utf-8")
    _write_json(csv_path.with_suffix(".meta.json"), out["metadata"])
    print(
        f"set size {out['size']} (pool {out['pool_size']}), "
        f"max nearest-neighbor distance {out['max_nn_dist']:.6f} m -> {csv_path}"
    )


def cmd_refine(args) -> None:
    payload = {
        "map": _read_json(args.map),
        "scene": _scene_payload(args.scene),
        "set": _read_set_payload(args.set),
        "options": _options_payload(args),
    }
    out = _call(args.server, "/v1/refine", payload)
    stats = out.pop("stats")
    _write_json(args.out, out)
    print(
        f"survivors {stats['survivors']} fallback={stats['fallback']} "
        f"goal_lanes={stats['goal_lanes']} wall_time={stats['wall_time_ms']:.2f} ms -> {args.out}"
    )


def cmd_eval(args) -> None:
    payload = {
        "map": _read_json(args.map),
        "scenes": [_scene_payload(p) for p in args.scene],
        "scene_names": [str(p) for p in args.scene],
        "set": _read_set_payload(args.set),
        "tau": args.tau,
        "k_top": args.k_top,
        "k_eval": args.k_eval,
        "stub_seed": args.seed,
        "options": _options_payload(args),
    }
    out = _call(args.server, "/v1/eval", payload)
    _write_json(args.out, out)
    agg = out["aggregate"]
    key = f"k{args.k_eval}"
    print(
        f"{agg['scenes']} scenes | lower bound minADE {agg['lower_bound']['minADE']:.4f} "
        f"minFDE {agg['lower_bound']['minFDE']:.4f} | oracle {key} "
        f"minADE {agg['oracle'][key]['minADE']:.4f} MR {agg['oracle'][key]['MR']:.3f} "
        f"DAC {agg['oracle'][key]['DAC']:.3f} -> {args.out}"
    )


def cmd_bench(args) -> None:
    payload = {
        "n_points": args.points,
        "n_polys": args.polys,
        "seed": args.seed,
        "set_size": args.set_size,
        "repeats": args.repeats,
    }
    out = _call(args.server, "/v1/bench", payload)
    if args.csv:
        Path(args.csv).write_text(out["csv"], encoding="utf-8")
    _write_json(args.out, {k: out[k] for k in ("rows", "environment", "checks_verified")})
    for row in out["rows"]:
        print(
            f"{row['algorithm']:22s} points={row['n_points']:>8d} polys={row['n_polys']} "
            f"total={row['total_ns'] / 1e6:.2f} ms per_check={row['per_check_ns']:.1f} ns"
        )


def cmd_serve(args) -> None:
    import uvicorn

    uvicorn.run("trajgate.service:app", host=args.host, port=args.port)


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--server", default=None, help="service URL (default: in-process)")
    parser.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="trajgate", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-fixture", help="write a synthetic map and scene")
    p.add_argument("--spec", required=True,
                   choices=("straight", "curve", "t_intersection", "fork"))
    p.add_argument("--out", required=True, help="output directory")
    _add_common(p)
    p.set_defaults(func=cmd_make_fixture)

    p = sub.add_parser("gen-set", help="generate a coverage-reduced trajectory set")
    p.add_argument("--epsilon", type=float, default=2.0)
    p.add_argument("--out", required=True, help="output CSV path (sidecar: .meta.json)")
    p.add_argument("--speeds", type=int, default=None, help="override speed grid size")
    p.add_argument("--accels", type=int, default=None, help="override accel grid size")
    p.add_argument("--curvatures", type=int, default=None, help="override curvature grid size")
    _add_common(p)
    p.set_defaults(func=cmd_gen_set)

    p = sub.add_parser("refine", help="refine a trajectory set against one scene")
    p.add_argument("--map", required=True)
    p.add_argument("--scene", required=True)
    p.add_argument("--set", required=True)
    p.add_argument("--window", type=float, default=None, help="query window radius (m)")
    p.add_argument("--algo", choices=("ray_cast", "winding"), default="ray_cast")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--no-local-buffer", action="store_true")
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("eval", help="refine and score a batch of scenes")
    p.add_argument("--map", required=True)
    p.add_argument("--scene", required=True, action="append",
                   help="scene JSON path (repeatable)")
    p.add_argument("--set", required=True)
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--k-top", type=int, default=6, dest="k_top")
    p.add_argument("--k-eval", type=int, default=6, dest="k_eval")
    p.add_argument("--window", type=float, default=None)
    p.add_argument("--algo", choices=("ray_cast", "winding"), default="ray_cast")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="point-in-polygon benchmark")
    p.add_argument("--points", type=int, default=1_000_000)
    p.add_argument("--polys", type=int, default=4)
    p.add_argument("--set-size", type=int, default=2800, dest="set_size")
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--out", required=True, help="report JSON path")
    p.add_argument("--csv", default=None, help="plot-data CSV path")
    _add_common(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("serve", help="run the service with uvicorn")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except ClientError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION if exc.status in (400, 422) else EXIT_IO
    except FileNotFoundError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except httpx.HTTPError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (json.JSONDecodeError, KeyError, ValueError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
