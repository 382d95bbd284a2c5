"""Command-line client for the simulation service.

Every subcommand is a thin wrapper over one service endpoint. By default the
service runs in-process; point --server at a running `tacsim serve` instance
to execute on a remote host instead (output paths are then interpreted on
the server).

Exit codes: 0 success, 2 simulation/service error (machine-readable JSON on
stderr), 3 transport failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import httpx


def _client(server: str | None):
    if server:
        return httpx.Client(base_url=server, timeout=3600.0)
    import warnings
    with warnings.catch_warnings():
        # starlette's in-process client warns about httpx pending httpx2
        warnings.simplefilter("ignore")
        from starlette.testclient import TestClient

    from .service import create_app
    return TestClient(create_app(), raise_server_exceptions=False)


def _load_config(path: str | None) -> dict | None:
    if path is None:
        return None
    with open(path) as fh:
        return json.load(fh)


def _parse_grasp_config(text: str) -> dict:
    parts = [float(v) for v in text.split(",")]
    if len(parts) != 4:
        raise argparse.ArgumentTypeError("grasp config must be F,X,Y,Z")
    return {"force": parts[0], "x": parts[1], "y": parts[2], "z": parts[3]}


def _object_ref(text: str):
    """Builtin name, or a JSON object-spec file describing a custom mesh."""
    if text.endswith(".json"):
        with open(text) as fh:
            return json.load(fh)
    return text


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tacsim", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--server", help="service URL; default runs in-process")
    parser.add_argument("--config", help="JSON config file (sensor/contact/thresholds)")
    parser.add_argument("--seed", type=int, help="override the sweep seed")
    parser.add_argument("--threads", type=int, default=1, help="parallel episodes")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("press", help="single press: contact map + tactile image")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--mesh", help="OBJ/STL file to press onto the sensor")
    group.add_argument("--object", help="builtin object name")
    p.add_argument("--force", type=float, required=True)
    p.add_argument("--knorm", type=float, help="k_n override, mm^3/N")
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("grasp", help="run one grasp episode")
    p.add_argument("--object", required=True, type=_object_ref)
    p.add_argument("--config", dest="grasp_config", required=True,
                   type=_parse_grasp_config, metavar="F,X,Y,Z",
                   help="grasp descriptor (the global --config stays the settings file)")
    p.add_argument("--mu", type=float)
    p.add_argument("--added-mass", type=float)
    p.add_argument("--out", required=True)

    p = sub.add_parser("sweep", help="generate a labeled grasp dataset")
    p.add_argument("--spec", required=True, help="SweepSpec JSON file")
    p.add_argument("--object", type=_object_ref, help="override the spec's object")
    p.add_argument("--no-frames", action="store_true", help="labels only, no images")
    p.add_argument("--out", required=True)

    p = sub.add_parser("calibrate-contact", help="fit k from press measurements")
    p.add_argument("--presses", required=True, help="CSV of force,measurement rows")
    p.add_argument("--out", required=True)

    p = sub.add_parser("calibrate-friction", help="friction search against a reference grid")
    p.add_argument("--reference", required=True, help="outcome grid CSV")
    p.add_argument("--object", required=True, type=_object_ref)
    p.add_argument("--out", required=True)

    p = sub.add_parser("ablate", help="ablation sweeps over one axis")
    p.add_argument("--kind", required=True,
                   choices=["dataset_size", "friction", "center_of_mass"])
    p.add_argument("--values", required=True,
                   help="comma-separated values, e.g. 50,100,200")
    p.add_argument("--spec", required=True)
    p.add_argument("--object", type=_object_ref)
    p.add_argument("--no-frames", action="store_true")
    p.add_argument("--out", required=True)

    p = sub.add_parser("render", help="render a tactile image from a height map")
    p.add_argument("--heightmap", required=True)
    p.add_argument("--table", help="lookup table sidecar; default recalibrates")
    p.add_argument("--out", required=True)

    p = sub.add_parser("export-table", help="write the calibrated lookup table sidecar")
    p.add_argument("--out", required=True)

    p = sub.add_parser("simulate-grid", help="simulate an outcome grid (reference data)")
    p.add_argument("--object", required=True, type=_object_ref)
    p.add_argument("--heights", required=True)
    p.add_argument("--forces", required=True)
    p.add_argument("--mu", type=float, required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8420)
    return parser


def _request(args) -> tuple[str, str, dict]:
    cfg = _load_config(args.config)
    if args.command == "press":
        return "POST", "/press", {
            "mesh": args.mesh, "object": args.object, "force": args.force,
            "knorm": args.knorm, "scale": args.scale, "out_dir": args.out,
            "config": cfg,
        }
    if args.command == "grasp":
        return "POST", "/grasp", {
            "object": args.object, "config": args.grasp_config, "out_dir": args.out,
            "mu": args.mu, "added_mass": args.added_mass, "sim_config": cfg,
        }
    if args.command == "sweep":
        with open(args.spec) as fh:
            spec = json.load(fh)
        return "POST", "/sweep", {
            "spec": spec, "out_dir": args.out, "object": args.object,
            "threads": args.threads, "record_frames": not args.no_frames,
            "seed": args.seed, "sim_config": cfg,
        }
    if args.command == "calibrate-contact":
        return "POST", "/calibrate-contact", {
            "presses_csv": args.presses, "out_path": args.out,
        }
    if args.command == "calibrate-friction":
        return "POST", "/calibrate-friction", {
            "object": args.object, "reference_csv": args.reference,
            "out_path": args.out, "sim_config": cfg,
        }
    if args.command == "ablate":
        with open(args.spec) as fh:
            spec = json.load(fh)
        return "POST", "/ablate", {
            "kind": args.kind, "values": [float(v) for v in args.values.split(",")],
            "spec": spec, "out_dir": args.out, "object": args.object,
            "threads": args.threads, "record_frames": not args.no_frames,
            "sim_config": cfg,
        }
    if args.command == "render":
        return "POST", "/render", {
            "heightmap_png": args.heightmap, "table_path": args.table,
            "out_png": args.out, "sim_config": cfg,
        }
    if args.command == "export-table":
        return "POST", "/export-table", {"out_path": args.out, "sim_config": cfg}
    if args.command == "simulate-grid":
        return "POST", "/simulate-grid", {
            "object": args.object, "mu": args.mu, "out_path": args.out,
            "heights": [float(v) for v in args.heights.split(",")],
            "forces": [float(v) for v in args.forces.split(",")],
            "sim_config": cfg,
        }
    raise AssertionError(f"unhandled command {args.command}")


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)

    if args.command == "serve":
        import uvicorn

        from .service import app
        uvicorn.run(app, host=args.host, port=args.port)
        return 0

    method, url, payload = _request(args)
    try:
        with _client(args.server) as client:
            response = client.request(method, url, json=payload)
    except httpx.HTTPError as exc:
        print(json.dumps({"error": "TransportError", "message": str(exc)}),
              file=sys.stderr)
        return 3
    if response.status_code >= 400:
        try:
            body = response.json()
        except json.JSONDecodeError:
            body = {"error": f"HTTP{response.status_code}", "message": response.text}
        print(json.dumps(body, sort_keys=True), file=sys.stderr)
        return 2
    print(json.dumps(response.json(), indent=2, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
