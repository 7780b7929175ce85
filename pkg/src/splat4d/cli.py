"""Command-line entry points: serve, render, bench."""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .export import (ExportJob, SinkFailure, external_encoder_sink,
                     image_sequence_sink, run_export)
from .foveation import FoveationConfig
from .metrics import benchmark_foveation
from .rasterizer import RenderConfig
from .sceneio import load_scene_path
from .synthetic import benchmark_scene, frame_cloud_pose
from .trajectory import Keyframe, Trajectory, trajectory_from_json


def _add_scene_arg(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--scene", required=False,
                        help="scene path: .ply file, manifest .json, or directory")
    parser.add_argument("--synthetic", type=int, metavar="N",
                        help="use a synthetic N-splat benchmark scene instead")


def _load_scene(args):
    if args.synthetic:
        cloud = benchmark_scene(args.synthetic)
        from .splats import uniform_manifest
        return uniform_manifest(["synthetic"]), [cloud]
    if not args.scene:
        raise SystemExit("either --scene or --synthetic is required")
    data = load_scene_path(args.scene)
    return data.manifest, data.clouds


def cmd_serve(args) -> int:
    import uvicorn

    from .service.app import create_app
    from .service.scenes import SceneStore

    store = SceneStore(args.scenes_dir)
    frontend = Path(args.frontend) if args.frontend else \
        Path(__file__).resolve().parents[2] / "frontend"
    app = create_app(store, export_root=args.export_dir,
                     default_width=args.width, default_height=args.height,
                     frontend_dir=frontend if frontend.exists() else None)
    print(f"serving on http://{args.host}:{args.port} "
          f"(scenes: {', '.join(store.ids()) or 'none yet'})")
    log_level = os.environ.get("LOG_LEVEL", "warning").lower()
    uvicorn.run(app, host=args.host, port=args.port, log_level=log_level)
    return 0


def cmd_render(args) -> int:
    manifest, clouds = _load_scene(args)

    if args.trajectory:
        trajectory = trajectory_from_json(Path(args.trajectory).read_text())
    else:
        # default one-second orbit-less dolly: hold the framing pose
        pose = frame_cloud_pose(clouds[0])
        trajectory = Trajectory(keyframes=(
            Keyframe(pose=pose, time=0.0),
            Keyframe(pose=pose, time=max(manifest.duration, 1.0)),
        ), mode="linear")

    if args.output:
        sink = external_encoder_sink(args.output, args.encoder_cmd)
    else:
        sink = image_sequence_sink(args.out_dir or "render_out")

    fcfg = FoveationConfig(threshold=args.tau, enabled=not args.no_foveation)
    job = ExportJob(
        trajectory=trajectory, manifest=manifest, clouds=clouds,
        width=args.width, height=args.height, fps=args.fps, sink=sink,
        foveation=fcfg, smoothing_alpha=args.smoothing_alpha)

    def progress(k: int) -> None:
        if k % 10 == 0:
            print(f"  frame {k}", file=sys.stderr)

    try:
        result = run_export(job, progress)
    except SinkFailure as exc:
        print(f"export failed: {exc}", file=sys.stderr)
        return 1
    print(f"exported {result.frame_count} frames -> {result.output}")
    return 0


def cmd_bench(args) -> int:
    manifest, clouds = _load_scene(args)
    cloud = clouds[0]
    pose = frame_cloud_pose(cloud)
    cfg = RenderConfig(width=args.width, height=args.height)
    taus = [float(t) for t in args.taus.split(",")]
    rows = benchmark_foveation(cloud, pose, cfg, taus,
                               reps=args.reps, warmup=args.warmup)
    header = f"{'tau':>6} {'foveal_frac':>12} {'ms/frame':>10} {'samples':>12}"
    print(header)
    for row in rows:
        print(f"{row['tau']:6.2f} {row['foveal_fraction']:12.4f} "
              f"{row['ms_per_frame']:10.2f} {row['composite_samples']:12d}")
    if args.out:
        Path(args.out).write_text(json.dumps({
            "width": args.width, "height": args.height,
            "splats": len(cloud), "rows": rows}, indent=2))
        print(f"report written to {args.out}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="splat4d",
        description="4D Gaussian-splat engine: serve, render, benchmark")
    sub = parser.add_subparsers(dest="command", required=True)

    p_serve = sub.add_parser("serve", help="run the streaming viewer service")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8080)
    p_serve.add_argument("--scenes-dir", default="./scenes")
    p_serve.add_argument("--export-dir", default="./exports")
    p_serve.add_argument("--width", type=int, default=640)
    p_serve.add_argument("--height", type=int, default=360)
    p_serve.add_argument("--frontend",
                         help="viewer directory to serve at / "
                              "(defaults to the repo's frontend/)")
    p_serve.set_defaults(func=cmd_serve)

    p_render = sub.add_parser("render", help="headless video export")
    _add_scene_arg(p_render)
    p_render.add_argument("--trajectory", help="trajectory JSON file")
    p_render.add_argument("--width", type=int, default=640)
    p_render.add_argument("--height", type=int, default=360)
    p_render.add_argument("--fps", type=float, default=30.0)
    p_render.add_argument("--out-dir", help="image-sequence output directory")
    p_render.add_argument("--output", help="container file (uses --encoder-cmd)")
    p_render.add_argument("--encoder-cmd",
                          help="external encoder command template "
                               "({width},{height},{fps},{output})")
    p_render.add_argument("--tau", type=float, default=0.5)
    p_render.add_argument("--no-foveation", action="store_true")
    p_render.add_argument("--smoothing-alpha", type=float, default=0.8)
    p_render.set_defaults(func=cmd_render)

    p_bench = sub.add_parser("bench", help="foveation cost/timing benchmark")
    _add_scene_arg(p_bench)
    p_bench.add_argument("--width", type=int, default=1280)
    p_bench.add_argument("--height", type=int, default=720)
    p_bench.add_argument("--taus", default="0,0.25,0.5,0.75,1.0")
    p_bench.add_argument("--reps", type=int, default=20)
    p_bench.add_argument("--warmup", type=int, default=3)
    p_bench.add_argument("--out", help="write a JSON report here")
    p_bench.set_defaults(func=cmd_bench)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
