"""Command-line front end: simulate phantoms, reconstruct, render, verify.

Subcommands: ``simulate``, ``reconstruct``, ``render``, ``prox-test``.
Experiments are driven by a JSON config validated against the schema in
``docs/experiment_config.schema.json`` (unknown keys are rejected); command
line flags override config keys.  Exit codes: 0 success, 1 runtime or
convergence failure, 2 usage or config error.

The environment variable ``PROXMAG_THREADS`` caps worker threads
(0 or unset = automatic).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .cimg import read_cimg, write_cimg
from .core import ComplexImage, ConvergenceError
from .render import DEFAULT_DB_WINDOW, magnitude_db_u8, phase_rgb, write_image, write_pgm
from .sar import (
    MultiChannelOperator,
    PhantomSpec,
    SarFrequencyOperator,
    SarGeometry,
    SarTimeOperator,
    Scene,
    SceneGrid,
    circular_geometry,
    default_phantom,
    forward_freq,
    linear_geometry,
    make_phantom,
    read_geometry_json,
    write_geometry_json,
)
from .solvers import ReconstructionProblem, SolverConfig, reconstruct
from .suites import SUITE_NAMES, run_suite

_SCHEMA_PATH = Path(__file__).resolve().parents[2] / "docs" / "experiment_config.schema.json"


class ConfigError(ValueError):
    """Invalid experiment configuration."""


def _apply_thread_cap() -> None:
    raw = os.environ.get("PROXMAG_THREADS", "")
    if not raw:
        return
    try:
        n = int(raw)
    except ValueError as exc:
        raise ConfigError(f"PROXMAG_THREADS must be an integer, got {raw!r}") from exc
    if n < 0:
        raise ConfigError("PROXMAG_THREADS must be >= 0")
    if n == 0:
        return
    try:
        import threadpoolctl

        threadpoolctl.threadpool_limits(limits=n)
    except ImportError:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(n)


def load_config(path=None, overrides=None) -> dict:
    """Load, validate, and flag-override an experiment config."""
    config = {}
    if path is not None:
        with open(path) as f:
            config = json.load(f)
    for keys, value in (overrides or []):
        if value is None:
            continue
        node = config
        for key in keys[:-1]:
            node = node.setdefault(key, {})
        node[keys[-1]] = value
    import jsonschema

    schema = json.loads(_SCHEMA_PATH.read_text())
    try:
        jsonschema.validate(config, schema)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"config validation failed: {exc.message}") from exc
    return config


def _build_geometry(config: dict) -> SarGeometry:
    g = config.get("geometry", {})
    kind = g.get("trajectory", "linear")
    common = dict(
        n_pulses=int(g.get("pulses", 32)),
        n_freqs=int(g.get("frequencies", 64)),
        center_freq=float(g.get("center_frequency", 10e9)),
        bandwidth=float(g.get("bandwidth", 500e6)),
        altitude=float(g.get("altitude", 400.0)),
    )
    if kind == "linear":
        return linear_geometry(
            standoff=float(g.get("standoff", 1000.0)),
            aperture=float(g.get("aperture", 60.0)),
            **common,
        )
    return circular_geometry(
        radius=float(g.get("standoff", 1000.0)),
        arc_degrees=float(g.get("arc_degrees", 8.0)),
        **common,
    )


def _build_phantom(config: dict) -> PhantomSpec:
    s = config.get("scene", {})
    shape = tuple(s.get("size", (64, 64)))
    kind = s.get("phantom", "default")
    if kind == "default":
        return default_phantom(shape)
    if kind == "zero":
        return PhantomSpec(shape=shape, base_level=0.0, features=())
    return PhantomSpec(
        shape=shape,
        base_level=float(s.get("base_level", 0.0)),
        features=tuple(s.get("features", ())),
    )


def _scene_grid(config: dict) -> SceneGrid:
    s = config.get("scene", {})
    shape = tuple(s.get("size", (64, 64)))
    return SceneGrid.centered(shape, float(s.get("spacing", 0.25)))


def _split_channels(geom: SarGeometry, channels: int):
    """Contiguous subaperture geometries, one per image channel."""
    n = geom.n_pulses
    if channels > n:
        raise ConfigError("more channels than pulses")
    bounds = np.linspace(0, n, channels + 1).astype(int)
    subs = []
    for k in range(channels):
        lo, hi = bounds[k], bounds[k + 1]
        subs.append(
            SarGeometry(
                geom.tx[lo:hi],
                geom.rx[lo:hi],
                geom.omegas,
                geom.x_ref,
                geom.wave_speed,
                geom.amplitude,
            )
        )
    return subs


def cmd_simulate(args) -> int:
    config = load_config(
        args.config,
        overrides=[
            (("seed",), args.seed),
            (("output_dir",), args.output),
            (("channels",), args.channels),
        ],
    )
    out_dir = Path(config.get("output_dir", "out"))
    out_dir.mkdir(parents=True, exist_ok=True)
    seed = int(config.get("seed", 0))
    channels = int(config.get("channels", 1))
    geom = _build_geometry(config)
    grid = _scene_grid(config)
    spec = _build_phantom(config)
    noise_cfg = config.get("noise", {})
    sigma = float(noise_cfg.get("sigma", 0.0))
    snr_db = noise_cfg.get("snr_db")

    sub_geoms = _split_channels(geom, channels)
    mag = make_phantom(spec)
    rng = np.random.default_rng(seed)
    truth = np.empty((channels,) + grid.shape, dtype=np.complex128)
    data_rows = []
    for k, sub in enumerate(sub_geoms):
        phase = np.exp(1j * rng.uniform(0.0, 2.0 * np.pi, size=mag.shape))
        truth[k] = mag * phase
        data_rows.append(forward_freq(sub, grid, truth[k]).data)
    data = np.concatenate(data_rows, axis=0)
    if snr_db is not None:
        rms = float(np.sqrt(np.mean(np.abs(data) ** 2)))
        sigma = rms / (10.0 ** (float(snr_db) / 20.0))
    if sigma > 0:
        noise = rng.normal(0.0, sigma / np.sqrt(2.0), size=(2,) + data.shape)
        data = data + noise[0] + 1j * noise[1]

    write_cimg(out_dir / "truth.cimg", ComplexImage(truth))
    write_cimg(out_dir / "data.cimg", ComplexImage(data[:, None, :]))
    write_geometry_json(out_dir / "geometry.json", geom, grid)
    meta = {"channels": channels, "noise_sigma": sigma, "seed": seed}
    (out_dir / "simulate.json").write_text(json.dumps(meta, sort_keys=True) + "\n")
    window = tuple(config.get("render_window", DEFAULT_DB_WINDOW))
    write_pgm(out_dir / "truth_db.pgm", magnitude_db_u8(mag, window))
    print(f"wrote truth.cimg, data.cimg, geometry.json, truth_db.pgm to {out_dir}")
    return 0


def _build_operator(config: dict, geom: SarGeometry, grid: SceneGrid, channels: int):
    solver_cfg = config.get("solver", {})
    kind = solver_cfg.get("operator", "freq")
    subs = _split_channels(geom, channels)
    if kind == "time":
        upsample = int(solver_cfg.get("upsample", 16))
        ops = [SarTimeOperator(g, grid, upsample) for g in subs]
    else:
        ops = [SarFrequencyOperator(g, grid) for g in subs]
    return MultiChannelOperator(ops)


def _psnr(x: np.ndarray, ref: np.ndarray) -> float:
    mse = float(np.mean((np.asarray(x) - np.asarray(ref)) ** 2))
    if mse == 0.0:
        return float("inf")
    peak = float(np.max(ref))
    return 10.0 * np.log10(peak * peak / mse)


def cmd_reconstruct(args) -> int:
    config = load_config(
        args.config,
        overrides=[
            (("regularizer", "name"), args.regularizer),
            (("regularizer", "lambda"), args.lam),
            (("solver", "max_iters"), args.iters),
            (("channels",), args.channels),
            (("output_dir",), args.output),
            (("seed",), args.seed),
        ],
    )
    in_dir = Path(args.input or config.get("output_dir", "out"))
    out_dir = Path(config.get("output_dir", str(in_dir)))
    out_dir.mkdir(parents=True, exist_ok=True)
    data_path = in_dir / "data.cimg"
    geom_path = in_dir / "geometry.json"
    for p in (data_path, geom_path):
        if not p.exists():
            raise FileNotFoundError(f"missing input: {p}")
    geom, grid = read_geometry_json(geom_path)
    if grid is None:
        raise ConfigError("geometry sidecar lacks the scene grid")
    data_img = read_cimg(data_path)
    data = data_img.data[:, 0, :]
    channels = int(config.get("channels", 1))

    a_op = _build_operator(config, geom, grid, channels)
    if data.shape[0] != geom.n_pulses:
        raise ConfigError(
            f"data has {data.shape[0]} pulses but geometry expects {geom.n_pulses}"
        )
    bounds = np.linspace(0, geom.n_pulses, channels + 1).astype(int)
    stacked = np.stack(
        [data[bounds[k] : bounds[k + 1]] for k in range(channels)]
    )

    reg_cfg = config.get("regularizer", {})
    solver_cfg = config.get("solver", {})
    problem = ReconstructionProblem(
        operator=a_op,
        data=stacked,
        regularizer=reg_cfg.get("name", "tv-iso"),
        reg_params=reg_cfg.get("params", {}),
        lam=float(reg_cfg.get("lambda", 0.0)),
    )
    settings = SolverConfig(
        max_iters=int(solver_cfg.get("max_iters", 200)),
        tau=solver_cfg.get("tau"),
        sigma=solver_cfg.get("sigma"),
        tol=float(solver_cfg.get("tol", 0.0)),
        trace_stride=int(solver_cfg.get("trace_stride", 1)),
    )
    image, trace = reconstruct(problem, settings)

    write_cimg(out_dir / "recon.cimg", image)
    window = tuple(config.get("render_window", DEFAULT_DB_WINDOW))
    write_pgm(out_dir / "recon_db.pgm", magnitude_db_u8(np.abs(image.data[0]), window))
    write_image(out_dir / "recon_phase.png", phase_rgb(np.angle(image.data[0])))
    trace.to_csv(out_dir / "trace.csv")

    metrics = {
        "iterations": trace.iterations[-1] if trace.iterations else 0,
        "final_objective": trace.objective[-1] if trace.objective else None,
        "final_misfit": trace.misfit[-1] if trace.misfit else None,
        "final_reg": trace.regularizer[-1] if trace.regularizer else None,
    }
    truth_path = in_dir / "truth.cimg"
    if truth_path.exists():
        truth = read_cimg(truth_path)
        if truth.shape == image.shape:
            truth_mag = np.abs(truth.data)
            bp = np.asarray(a_op.adjoint(stacked)) / max(a_op.norm_estimate**2, 1e-30)
            metrics["psnr_db"] = _psnr(np.abs(image.data), truth_mag)
            metrics["psnr_backprojection_db"] = _psnr(np.abs(bp), truth_mag)
    (out_dir / "metrics.json").write_text(
        json.dumps(metrics, sort_keys=True, indent=1) + "\n"
    )
    print(f"wrote recon.cimg, recon_db.pgm, recon_phase.png, trace.csv, metrics.json to {out_dir}")
    if "psnr_db" in metrics:
        print(
            f"psnr {metrics['psnr_db']:.2f} dB "
            f"(backprojection {metrics['psnr_backprojection_db']:.2f} dB)"
        )
    return 0


def cmd_render(args) -> int:
    image = read_cimg(args.input)
    plane = image.data[args.channel]
    if args.mode == "mag-db":
        window = (args.window_lo, args.window_hi)
        out = magnitude_db_u8(np.abs(plane), window)
    elif args.mode == "phase":
        out = phase_rgb(np.angle(plane))
    else:  # phase-diff
        if not args.other:
            raise ConfigError("phase-diff needs --other IMAGE")
        other = read_cimg(args.other)
        if other.shape != image.shape:
            raise ConfigError(
                f"shape mismatch: {image.shape} vs {other.shape}"
            )
        out = phase_rgb(np.angle(plane * np.conj(other.data[args.channel])))
    if args.mode == "mag-db" and str(args.output).endswith(".png"):
        out = np.stack([out] * 3, axis=-1)
    write_image(args.output, out)
    print(f"wrote {args.output}")
    return 0


def cmd_prox_test(args) -> int:
    report = run_suite(args.suite, seed=args.seed)
    print(report.render())
    return 0 if report.passed else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="proxmag",
        description="Magnitude-domain proximal regularization for coherent images",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="simulate a phantom collection")
    p_sim.add_argument("--config", help="experiment config JSON")
    p_sim.add_argument("--output", help="output directory")
    p_sim.add_argument("--seed", type=int)
    p_sim.add_argument("--channels", type=int)
    p_sim.set_defaults(func=cmd_simulate)

    p_rec = sub.add_parser("reconstruct", help="run a regularized reconstruction")
    p_rec.add_argument("--config", help="experiment config JSON")
    p_rec.add_argument("--input", help="directory with data.cimg and geometry.json")
    p_rec.add_argument("--output", help="output directory")
    p_rec.add_argument("--regularizer", help="registry name")
    p_rec.add_argument("--lambda", dest="lam", type=float)
    p_rec.add_argument("--iters", type=int)
    p_rec.add_argument("--channels", type=int)
    p_rec.add_argument("--seed", type=int)
    p_rec.set_defaults(func=cmd_reconstruct)

    p_ren = sub.add_parser("render", help="export images from a CIMG file")
    p_ren.add_argument("input")
    p_ren.add_argument("--mode", choices=("mag-db", "phase", "phase-diff"), default="mag-db")
    p_ren.add_argument("--other", help="second image for phase-diff")
    p_ren.add_argument("--output", required=True)
    p_ren.add_argument("--channel", type=int, default=0)
    p_ren.add_argument("--window-lo", type=float, default=DEFAULT_DB_WINDOW[0])
    p_ren.add_argument("--window-hi", type=float, default=DEFAULT_DB_WINDOW[1])
    p_ren.set_defaults(func=cmd_render)

    p_test = sub.add_parser("prox-test", help="run a named verification suite")
    p_test.add_argument("suite", choices=SUITE_NAMES)
    p_test.add_argument("--seed", type=int, default=0)
    p_test.set_defaults(func=cmd_prox_test)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _apply_thread_cap()
        return args.func(args)
    except (ConfigError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ConvergenceError, FileNotFoundError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
