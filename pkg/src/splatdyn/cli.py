"""Command line entry points for the offline pipeline and the service.

Exit codes: 0 success, 2 script error, 3 asset error, 4 runtime error.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .assets import AssetError
from .embedding import build_embedding, load_embedding, save_embedding
from .meshgen import TetMesh, build_cage
from .pipeline import PipelineError, run_headless
from .render import Camera, Light, render, save_png
from .script import ScriptError, parse, validate
from .splats import covariances, load_splats, opacity
from .service import serve_forever
from .xpbd import SimulationError

EXIT_OK = 0
EXIT_SCRIPT = 2
EXIT_ASSET = 3
EXIT_RUNTIME = 4


def _apply_thread_cap():
    value = os.environ.get("SPLATDYN_THREADS")
    if not value:
        return
    try:
        n = int(value)
        if n < 1:
            raise ValueError
    except ValueError:
        print(f"splatdyn: ignoring SPLATDYN_THREADS={value!r} "
              f"(want a positive integer)", file=sys.stderr)
        return
    import numba
    numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


def _read_bytes(path: str) -> bytes:
    try:
        with open(path, "rb") as fh:
            return fh.read()
    except OSError as exc:
        raise AssetError(f"cannot read {path}: {exc}") from None


def _load_ply(path: str):
    try:
        return load_splats(_read_bytes(path))
    except AssetError:
        raise
    except ValueError as exc:
        raise AssetError(f"{path}: {exc}") from None


def _load_tetmesh(path: str) -> TetMesh:
    try:
        return TetMesh.load_text(_read_bytes(path).decode("utf-8"))
    except AssetError:
        raise
    except (ValueError, UnicodeDecodeError) as exc:
        raise AssetError(f"{path}: {exc}") from None


def _load_script(path: str):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ScriptError(f"cannot read script {path}: {exc}") from None
    script = parse(text)
    return script, os.path.dirname(os.path.abspath(path))


def cmd_meshgen(args) -> int:
    scene = _load_ply(args.ply)
    lo, hi = args.cell_band
    cage, _, cell = build_cage(scene.means, vertex_band=(lo, hi))
    with open(args.output, "w") as fh:
        fh.write(cage.save_text())
    print(f"{args.output}: {len(cage.vertices)} vertices, "
          f"{len(cage.tets)} tets, cell {cell:.6g}")
    return EXIT_OK


def cmd_embed(args) -> int:
    scene = _load_ply(args.ply)
    cage = _load_tetmesh(args.tetmesh)
    table = build_embedding(scene, cage, k=args.ksigma)
    with open(args.output, "wb") as fh:
        fh.write(save_embedding(table))
    print(f"{args.output}: {len(table)} splats bound to "
          f"{table.n_cage_vertices} cage vertices")
    return EXIT_OK


def cmd_simulate(args) -> int:
    script, base_dir = _load_script(args.script)
    report = run_headless(script, args.output, base_dir=base_dir,
                          write_ply=args.ply, fps=args.fps)
    print(f"{report['frames']} frames -> {report['out_dir']} "
          f"({report['splats']} splats, {report['cage_vertices']} cage vertices)")
    return EXIT_OK


def cmd_render(args) -> int:
    scene = _load_ply(args.ply)
    camera = Camera(position=tuple(args.camera), look_at=tuple(args.lookat),
                    up=tuple(args.up), fov_y=float(np.deg2rad(args.fov)),
                    width=args.width, height=args.height)
    light = None
    if args.light is not None:
        light = Light(direction=tuple(args.light),
                      strength=args.light_strength)
    image = render(scene.means.astype(np.float64), covariances(scene),
                   scene.sh, opacity(scene.opacity_logits), camera,
                   light=light)
    save_png(image, args.output)
    print(f"{args.output}: {args.width}x{args.height}, {len(scene)} splats")
    return EXIT_OK


def cmd_serve(args) -> int:
    script, base_dir = _load_script(args.script)
    diags = validate(script, resolver=lambda p: True)
    if diags:
        raise ScriptError("", diagnostics=diags)

    def ready(server):
        print(f"listening on {server.host}:{server.port}", flush=True)

    serve_forever(script, base_dir=base_dir, host=args.host, port=args.port,
                  ready=ready)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="splatdyn",
        description="Deformable Gaussian-splat simulation toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("meshgen", help="build a simulation cage from splats")
    p.add_argument("ply")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--cell-band", nargs=2, type=int, default=(10_000, 30_000),
                   metavar=("LO", "HI"))
    p.set_defaults(func=cmd_meshgen)

    p = sub.add_parser("embed", help="bind splats into a cage")
    p.add_argument("ply")
    p.add_argument("tetmesh")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--ksigma", type=float, default=2.0)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("simulate", help="run a script offline")
    p.add_argument("script")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--fps", type=float, default=None)
    p.add_argument("--ply", action="store_true",
                   help="also write per-frame deformed PLYs")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("render", help="render a splat scene to PNG")
    p.add_argument("ply")
    p.add_argument("-o", "--output", default="render.png")
    p.add_argument("--camera", nargs=3, type=float, required=True,
                   metavar=("X", "Y", "Z"))
    p.add_argument("--lookat", nargs=3, type=float, default=(0.0, 0.0, 0.0),
                   metavar=("X", "Y", "Z"))
    p.add_argument("--up", nargs=3, type=float, default=(0.0, 1.0, 0.0),
                   metavar=("X", "Y", "Z"))
    p.add_argument("--fov", type=float, default=50.0, help="vertical, degrees")
    p.add_argument("--width", type=int, default=640)
    p.add_argument("--height", type=int, default=480)
    p.add_argument("--light", nargs=3, type=float, default=None,
                   metavar=("X", "Y", "Z"))
    p.add_argument("--light-strength", type=float, default=0.35)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("serve", help="stream frames to viewers")
    p.add_argument("script")
    p.add_argument("--port", type=int, required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _apply_thread_cap()
    try:
        return args.func(args)
    except ScriptError as exc:
        print(f"splatdyn: script error: {exc}", file=sys.stderr)
        return EXIT_SCRIPT
    except AssetError as exc:
        print(f"splatdyn: asset error: {exc}", file=sys.stderr)
        return EXIT_ASSET
    except (SimulationError, PipelineError, ValueError, RuntimeError,
            OSError, MemoryError) as exc:
        print(f"splatdyn: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
