"""Command-line surface: project-env, bake, render, validate, metrics.

Exit codes: 0 on success, 1 on a usage problem (unknown flags, missing
input files), 2 on a runtime failure inside a valid invocation. All
randomness is seed-controlled, so identical argv and input files give
byte-identical outputs regardless of thread count.
"""

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import envlight, field, imageio, metrics, oracle, render, transport

BAKE_CHUNK = 32  # points per bake batch; fixed so threads cannot reorder math


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _require_file(path):
    if not os.path.isfile(path):
        raise _UsageError(f"file not found: {path}")
    return path


def _load_light(path, degree):
    """ShLight from a coefficient JSON, or project a PFM environment map."""
    _require_file(path)
    if path.endswith(".json"):
        return envlight.load_sh_light(path)
    env = envlight.load_envmap(path)
    return envlight.project_to_sh(env, degree=degree)


def _cmd_project_env(args):
    _require_file(args.envmap)
    env = envlight.load_envmap(args.envmap, exposure=args.exposure)
    resolution = tuple(args.resolution) if args.resolution else None
    light = envlight.project_to_sh(env, degree=args.degree, resolution=resolution)
    envlight.save_sh_light(args.output, light)
    print(f"wrote {args.output}: degree {light.degree}, "
          f"{light.coeffs.shape[0]} coefficients per channel")


def _cmd_bake(args):
    scene = field.load_scene(_require_file(args.scene))
    points, _ = transport.sample_surface_points(scene, args.points, seed=args.seed)
    positions = np.array([p.position for p in points])
    normals = np.array([p.normal for p in points])
    jobs = [(lo, min(lo + BAKE_CHUNK, len(points)))
            for lo in range(0, len(points), BAKE_CHUNK)]
    out = [None] * len(jobs)

    def run(j):
        lo, hi = jobs[j]
        out[j] = transport.bake_transfer_batch(
            scene, positions[lo:hi], normals[lo:hi], degree=args.degree,
            resolution=tuple(args.resolution), steps=args.secondary_steps)

    if args.threads <= 1 or len(jobs) == 1:
        for j in range(len(jobs)):
            run(j)
    else:
        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            list(pool.map(run, range(len(jobs))))
    coeffs = np.vstack(out)
    samples = [transport.TransferSample(point=p, transfer=c)
               for p, c in zip(points, coeffs)]
    transport.save_transfer_cache(args.output, scene, samples, degree=args.degree)
    print(f"baked {len(samples)} points at degree {args.degree} -> {args.output}")


def _camera_from(args, embedded):
    def pick(flag, key, fallback=None):
        if flag is not None:
            return flag
        return embedded.get(key, fallback)

    position = pick(args.camera_pos, "position")
    look_at = pick(args.look_at, "look_at")
    if position is None or look_at is None:
        raise _UsageError(
            "no camera: scene embeds none, so --camera-pos and --look-at are required")
    return render.Camera(
        position=np.asarray(position, dtype=np.float64),
        look_at=np.asarray(look_at, dtype=np.float64),
        up=tuple(pick(args.up, "up", (0.0, 0.0, 1.0))),
        fov_y_deg=float(pick(args.fov, "fov_y_deg", 45.0)),
        width=int(pick(args.width, "width", render.DEFAULT_RESOLUTION)),
        height=int(pick(args.height, "height", render.DEFAULT_RESOLUTION)))


def _cmd_render(args):
    with open(_require_file(args.scene)) as f:
        data = json.load(f)
    scene = field.scene_from_dict(data)
    camera = _camera_from(args, data.get("camera", {}))
    if not (args.output or args.srgb or args.alpha):
        raise _UsageError("no output requested; pass -o, --srgb, or --alpha")
    needs_light = args.mode in ("lit", "diffuse", "specular", "irradiance")
    if needs_light and not args.env:
        raise _UsageError(f"mode {args.mode} requires --env")
    light = _load_light(args.env, args.degree) if args.env else None
    cache = None
    if args.cache:
        cache = transport.load_transfer_cache(_require_file(args.cache), scene=scene)
    settings = render.RenderSettings(
        steps=args.steps, secondary_steps=args.secondary_steps,
        transfer_grid=tuple(args.transfer_grid), anchors_per_ray=args.anchors,
        transfer_cache=cache)
    img = render.render_image(scene, light, camera, mode=args.mode,
                              settings=settings, threads=args.threads)
    if args.output:
        imageio.write_pfm(args.output, img.pixels)
        print(f"wrote {args.output}")
    if args.srgb:
        imageio.write_ppm(args.srgb, render.srgb_u8(img.pixels, exposure=args.exposure))
        print(f"wrote {args.srgb}")
    if args.alpha:
        imageio.write_ppm(args.alpha, render.alpha_u8(img.alpha))
        print(f"wrote {args.alpha}")


def _cmd_validate(args):
    scene = field.load_scene(_require_file(args.scene))
    light = _load_light(args.env, args.degree)
    config = oracle.ValidationConfig(
        count=args.points, mc_samples=args.mc_samples, degree=args.degree,
        resolution=tuple(args.grid), secondary_steps=args.secondary_steps,
        seed=args.seed, threads=args.threads)
    report = oracle.compare_prt_vs_mc(scene, light, config=config)
    print(oracle.format_table(report))
    payload = json.dumps(report.to_dict(), indent=2)
    if args.output:
        with open(args.output, "w") as f:
            f.write(payload)
            f.write("\n")
        print(f"wrote {args.output}")
    else:
        print(payload)


def _cmd_metrics(args):
    a = metrics.load_normal_map(_require_file(args.map_a),
                                _require_file(args.mask_a) if args.mask_a else None)
    b = metrics.load_normal_map(_require_file(args.map_b),
                                _require_file(args.mask_b) if args.mask_b else None)
    if args.crop:
        a = metrics.face_crop(a, args.crop, size=args.resize)
        b = metrics.face_crop(b, args.crop, size=args.resize)
    result = {
        "cosine_similarity": metrics.normal_cosine_similarity(
            a, b, mask_normalized=args.mask_normalized),
        "laplacian_l1": metrics.laplacian_l1(
            a, b, blur_sigma=args.sigma, mask_normalized=args.mask_normalized),
        "blur_sigma": args.sigma,
        "mask_normalized": args.mask_normalized,
    }
    print(json.dumps(result, indent=2))


def build_parser():
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = _Parser(prog="prtvol",
                     description="SH radiance-transfer lighting for density fields")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("project-env", formatter_class=fmt,
                       help="project an environment map onto SH coefficients")
    p.add_argument("envmap", help="equirectangular PFM environment map")
    p.add_argument("--degree", type=int, default=4, help="SH truncation degree")
    p.add_argument("--exposure", type=float, default=1.0,
                   help="linear multiplier applied on load")
    p.add_argument("--resolution", type=int, nargs=2, metavar=("H", "W"), default=None,
                   help="projection grid; defaults to the map's own texel grid")
    p.add_argument("-o", "--output", required=True, help="output coefficient JSON")
    p.set_defaults(func=_cmd_project_env)

    p = sub.add_parser("bake", formatter_class=fmt,
                       help="bake a transfer cache at sampled surface points")
    p.add_argument("scene", help="scene JSON")
    p.add_argument("--points", type=int, default=500, help="surface points to bake")
    p.add_argument("--degree", type=int, default=4, help="SH truncation degree")
    p.add_argument("--seed", type=int, default=0, help="probe-ray RNG seed")
    p.add_argument("--resolution", type=int, nargs=2, metavar=("H", "W"),
                   default=list(transport.BAKE_GRID), help="bake direction grid")
    p.add_argument("--secondary-steps", type=int, default=None,
                   help="visibility march steps; scene value if omitted")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                   help="worker threads")
    p.add_argument("-o", "--output", required=True, help="output cache file")
    p.set_defaults(func=_cmd_bake)

    p = sub.add_parser("render", formatter_class=fmt,
                       help="render a scene to PFM/PPM images")
    p.add_argument("scene", help="scene JSON, camera block optional")
    p.add_argument("--env", default=None,
                   help="SH light JSON, or a PFM map projected at --degree")
    p.add_argument("--degree", type=int, default=4,
                   help="projection degree when --env is a PFM map")
    p.add_argument("--mode", choices=render.MODES, default="lit", help="output channel")
    p.add_argument("--steps", type=int, default=None,
                   help="primary march steps; scene value if omitted")
    p.add_argument("--secondary-steps", type=int, default=None,
                   help="visibility march steps; scene value if omitted")
    p.add_argument("--transfer-grid", type=int, nargs=2, metavar=("H", "W"),
                   default=[16, 32], help="per-anchor bake grid")
    p.add_argument("--anchors", type=int, default=4,
                   help="transfer anchors per primary ray")
    p.add_argument("--cache", default=None,
                   help="transfer cache file; anchors look up instead of baking")
    p.add_argument("--exposure", type=float, default=1.0,
                   help="linear multiplier before sRGB")
    p.add_argument("--camera-pos", type=float, nargs=3, metavar=("X", "Y", "Z"),
                   default=None, help="camera position override")
    p.add_argument("--look-at", type=float, nargs=3, metavar=("X", "Y", "Z"),
                   default=None, help="camera target override")
    p.add_argument("--up", type=float, nargs=3, metavar=("X", "Y", "Z"),
                   default=None, help="camera up override")
    p.add_argument("--fov", type=float, default=None, help="vertical field of view")
    p.add_argument("--width", type=int, default=None, help="image width")
    p.add_argument("--height", type=int, default=None, help="image height")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                   help="worker threads")
    p.add_argument("-o", "--output", default=None, help="linear PFM output")
    p.add_argument("--srgb", default=None, help="8-bit sRGB PPM output")
    p.add_argument("--alpha", default=None, help="grayscale alpha PPM output")
    p.set_defaults(func=_cmd_render)

    p = sub.add_parser("validate", formatter_class=fmt,
                       help="score baked transfer against the Monte Carlo oracle")
    p.add_argument("scene", help="scene JSON")
    p.add_argument("--env", required=True,
                   help="SH light JSON, or a PFM map projected at --degree")
    p.add_argument("--points", type=int, default=100, help="surface points to validate")
    p.add_argument("--mc-samples", type=int, default=10000,
                   help="Monte Carlo directions per point")
    p.add_argument("--degree", type=int, default=4, help="SH truncation degree")
    p.add_argument("--grid", type=int, nargs=2, metavar=("H", "W"), default=[64, 128],
                   help="bake and visibility-map grid")
    p.add_argument("--secondary-steps", type=int, default=None,
                   help="visibility march steps; scene value if omitted")
    p.add_argument("--seed", type=int, default=0, help="RNG seed")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                   help="worker threads")
    p.add_argument("-o", "--output", default=None,
                   help="report JSON path; printed to stdout if omitted")
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("metrics", formatter_class=fmt,
                       help="normal-map cosine and Laplacian L1 metrics")
    p.add_argument("map_a", help="first normal map PFM")
    p.add_argument("map_b", help="second normal map PFM")
    p.add_argument("--mask-a", default=None, help="grayscale mask for map_a")
    p.add_argument("--mask-b", default=None, help="grayscale mask for map_b")
    p.add_argument("--sigma", type=float, default=metrics.DEFAULT_BLUR_SIGMA,
                   help="Gaussian blur sigma for the Laplacian")
    p.add_argument("--mask-normalized", action="store_true",
                   help="divide by mask mass instead of pixel count")
    p.add_argument("--crop", type=int, nargs=4, metavar=("X0", "Y0", "X1", "Y1"),
                   default=None, help="crop box applied to both maps")
    p.add_argument("--resize", type=int, default=256,
                   help="square output size after --crop")
    p.set_defaults(func=_cmd_metrics)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        args.func(args)
        return 0
    except _UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 1
    except SystemExit as e:
        return int(e.code or 0)
    except (ValueError, OSError, imageio.PfmError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
