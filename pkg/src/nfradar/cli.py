"""Command line front end: ``nfradar <subcommand> scene.json --out DIR``."""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .scenario import ConfigurationError, Scene, check_assumptions, load_scene

EXIT_OK, EXIT_INVALID, EXIT_SHORTFALL = 0, 2, 3


def config_hash(scene: Scene) -> str:
    return hashlib.sha256(scene.to_json().encode()).hexdigest()


def _json_default(o):
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, complex):
        return [o.real, o.imag]
    raise TypeError(f"not JSON serializable: {type(o)}")


class Output:
    """Writes result files into ``--out`` and records them in the manifest."""

    def __init__(self, out: str, command: str, scene: Scene, seed, args: dict):
        self.dir = Path(out)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.files = []
        self.manifest = {"command": command, "version": __version__,
                         "config_hash": config_hash(scene), "seed": seed,
                         "arguments": args, "files": self.files}

    def json(self, name: str, obj) -> None:
        with open(self.dir / name, "w") as fh:
            json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        self.files.append(name)

    def csv(self, name: str, rows: list[dict]) -> None:
        with open(self.dir / name, "w", newline="") as fh:
            if rows:
                w = csv.DictWriter(fh, fieldnames=list(rows[0]))
                w.writeheader()
                w.writerows(rows)
        self.files.append(name)

    def npz(self, name: str, **arrays) -> None:
        np.savez_compressed(self.dir / name, **arrays)
        self.files.append(name)

    def close(self) -> None:
        with open(self.dir / "manifest.json", "w") as fh:
            json.dump(self.manifest, fh, indent=2, sort_keys=True, default=_json_default)


def parse_grid(text: str) -> list[float]:
    """``"a:b:n"`` (n points, inclusive) or a comma separated list."""
    try:
        if ":" in text:
            a, b, n = text.split(":")
            return [float(v) for v in np.linspace(float(a), float(b), int(n))]
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigurationError(f"bad grid {text!r}: {exc}") from exc


def parse_pad(text: str) -> tuple[int, int, int]:
    try:
        pad = tuple(int(v) for v in text.split(","))
    except ValueError as exc:
        raise ConfigurationError(f"bad --pad {text!r}") from exc
    if len(pad) != 3 or min(pad) < 1:
        raise ConfigurationError("--pad needs three positive integers r,d,a")
    return pad


def _target_rows(scene: Scene) -> list[dict]:
    return [{"target": m + 1, **t.to_dict()} for m, t in enumerate(scene.targets)]


def _need_target(scene: Scene):
    if not scene.targets:
        raise ConfigurationError("the scenario has no targets")
    return scene.targets[0]


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_check(scene: Scene, args, out: Output) -> int:
    rows = []
    for m, t in enumerate(scene.targets):
        rep = check_assumptions(scene.config, t, scene.targets, margin=args.margin)
        print(f"target {m + 1}\n{rep.table()}")
        rows += [{"target": m + 1, **e} for e in rep.to_dict()]
    out.csv("assumptions.csv", rows)
    out.json("scene.json", scene.to_dict())
    return EXIT_OK


def cmd_synth(scene: Scene, args, out: Output) -> int:
    from .synth import empirical_snr_db, save_cube, signal_cube, synthesize
    cube = synthesize(scene, seed=args.seed, dtype=np.dtype(args.dtype).type)
    save_cube(cube, out.dir / "cube.nfrc")
    out.files.append("cube.nfrc")
    clean = signal_cube(scene, cube.amplitudes, cube.samples.dtype)
    summary = {"shape": list(cube.samples.shape), "noise_var": cube.noise_var,
               "seed": cube.seed, "fidelity": cube.fidelity,
               "empirical_snr_db": empirical_snr_db(cube, clean) if cube.noise_var > 0 else math.inf,
               "amplitudes": cube.amplitudes, "scene": scene.to_dict()}
    out.json("synth.json", summary)
    out.csv("targets.csv", _target_rows(scene))
    return EXIT_OK


CRB_PARAMS = ("r", "v_theta", "theta_deg", "dbar", "snr_db")


def cmd_crb(scene: Scene, args, out: Output) -> int:
    from .bounds import UnboundedCRBError, fim_numeric
    tgt = _need_target(scene)
    rows = []
    for value in parse_grid(args.grid):
        cfg, t, snr = scene.config, tgt, scene.snr_db
        if args.param == "r":
            t = t.replace(range_m=value)
        elif args.param == "v_theta":
            t = t.replace(tangential_velocity_mps=value)
        elif args.param == "theta_deg":
            t = t.replace(doa_rad=math.radians(value))
        elif args.param == "dbar":
            cfg = cfg.replace(subarray_separation_m=value)
        else:
            snr = value
        try:
            rep = fim_numeric(cfg, t, snr_db=snr)
            closed, numeric = rep.crb_vtheta_closed, rep.crb_vtheta_numeric
        except UnboundedCRBError:
            closed, numeric = math.inf, math.inf
        rows.append({"param": value, "closed_form": closed, "numeric": numeric,
                     "ratio": closed / numeric if numeric not in (0, math.inf) else math.nan})
    out.csv("crb.csv", rows)
    out.json("crb.json", {"parameter": args.param, "rows": rows, "scene": scene.to_dict()})
    return EXIT_OK


def cmd_af(scene: Scene, args, out: Output) -> int:
    from . import ambiguity as af
    tgt = _need_target(scene)
    cfg = scene.config
    if args.vtheta_range:
        vt = np.linspace(*args.vtheta_range, args.n_vtheta)
    else:
        vt = af.default_vtheta_grid(tgt.tangential_velocity_mps, args.n_vtheta)
    if args.kind == "vtheta" or not cfg.is_separated:
        surf = af.af_cut_vtheta_ula(cfg.replace(subarray_separation_m=0.0) if cfg.is_separated else cfg,
                                    tgt, vt)
    else:
        vr = None
        if args.vr_halfwidth:
            vr = tgt.radial_velocity_mps + np.linspace(-args.vr_halfwidth, args.vr_halfwidth, args.n_vr)
        surf = af.af_cut_vr_vtheta(cfg, tgt, vr, vt)
    db = surf.db()
    names = [n for n, _ in surf.axes]
    grids = np.meshgrid(*[v for _, v in surf.axes], indexing="ij")
    rows = [dict({n: float(g.flat[i]) for n, g in zip(names, grids)}, magnitude_db=float(db.flat[i]))
            for i in range(db.size)]
    out.csv("af.csv", rows)
    header = {"axes": names, "shape": list(db.shape), "normalization": surf.normalization,
              "floor_db": -60.0, "scene": scene.to_dict()}
    if cfg.is_separated and args.kind != "vtheta":
        header["mirror_point_db"] = af.mirror_point_db(cfg, tgt)
    out.json("af.json", header)
    return EXIT_OK


def _result_row(m, res) -> dict:
    return {"target": m + 1, "r": res.r, "v_r": res.v_r, "v_theta": res.v_theta,
            "theta_deg": math.degrees(res.theta), "iterations": res.iterations,
            "converged": res.converged, "objective": res.objective,
            "flags": ";".join(res.flags)}


def cmd_estimate(scene: Scene, args, out: Output) -> int:
    from .estimate import estimate_multi
    from .synth import load_cube, synthesize
    if args.cube:
        cube = load_cube(args.cube, scene.config)
    else:
        cube = synthesize(scene, seed=args.seed, dtype=np.complex64)
    M = args.targets or max(1, len(scene.targets))
    res = estimate_multi(cube, scene.config, M, args.eps, args.max_iter, parse_pad(args.pad))
    results = [res] if not hasattr(res, "results") else list(res.results)
    shortfall = bool(getattr(res, "shortfall", False))
    out.csv("estimates.csv", [_result_row(m, r) for m, r in enumerate(results)])
    out.json("estimates.json", {"targets": [r.to_dict() for r in results],
                                "shortfall": shortfall, "requested": M,
                                "truth": _target_rows(scene)})
    for row in (_result_row(m, r) for m, r in enumerate(results)):
        print(", ".join(f"{k}={v:.4g}" if isinstance(v, float) else f"{k}={v}"
                        for k, v in row.items()))
    return EXIT_SHORTFALL if shortfall or len(results) < M else EXIT_OK


def cmd_sweep(scene: Scene, args, out: Output) -> int:
    from .harness import SweepSpec, run_sweep, threshold_snr
    opts = {"eps": args.eps, "max_iter": args.max_iter}
    spec = SweepSpec(scene, args.param, parse_grid(args.grid), args.trials, args.seed, opts,
                     args.crn, force=args.force)
    progress = (lambda i, p: print(f"{spec.parameter}={p['value']:g}: "
                                   f"rmse_vtheta={p['rmse_vtheta']:.4g} "
                                   f"sqrt_crb={math.sqrt(p['crb_vtheta']):.4g}", flush=True))
    res = run_sweep(spec, progress)
    payload = res.payload()
    if spec.parameter == "snr_db":
        payload["threshold_snr_db"] = threshold_snr(res)
    out.json("sweep.json", payload)
    out.csv("sweep.csv", res.csv_rows())
    out.manifest["wall_clock_s"] = res.wall_clock_s
    return EXIT_OK


def cmd_demo(scene: Scene, args, out: Output) -> int:
    from .harness import run_multitarget_demo
    b = run_multitarget_demo(scene, M=args.targets, eps=args.eps, max_iter=args.max_iter)
    rows = b.table()
    out.csv("targets.csv", rows)
    out.json("demo.json", {"targets": rows, "smear_before": b.smear_before,
                           "smear_after": b.smear_after, "smear_gain_db": b.smear_gain_db,
                           "shortfall": b.estimates.shortfall, "scene": scene.to_dict()})
    maps = {f"raw_q{q}": img for q, img in enumerate(b.raw_images)}
    maps.update({"axis_v_r": b.raw_axes["v_r"], "axis_r": b.raw_axes["r"]})
    for m, (img, vm) in enumerate(zip(b.compensated_images, b.velocity_maps)):
        if img is not None:
            maps[f"compensated_t{m + 1}"] = img
            maps[f"velocity_t{m + 1}"] = vm["values"]
            maps[f"velocity_t{m + 1}_v_r"] = vm["v_r"]
            maps[f"velocity_t{m + 1}_v_theta"] = vm["v_theta"]
    out.npz("maps.npz", **maps)
    for r in rows:
        print(r)
    return EXIT_SHORTFALL if b.estimates.shortfall else EXIT_OK


COMMANDS = {"check": cmd_check, "synth": cmd_synth, "crb": cmd_crb, "af": cmd_af,
            "estimate": cmd_estimate, "sweep": cmd_sweep, "demo-multitarget": cmd_demo}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nfradar", description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("scene", help="scenario JSON file")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--seed", type=int, default=None, help="overrides the scene seed")
        return sp

    sp = add("check", "validate a scenario and print its assumption report")
    sp.add_argument("--margin", type=float, default=10.0)
    sp = add("synth", "synthesize a data cube")
    sp.add_argument("--dtype", choices=("complex64", "complex128"), default="complex64")
    sp = add("crb", "closed-form and numeric tangential-velocity bounds")
    sp.add_argument("--param", choices=CRB_PARAMS, default="snr_db")
    sp.add_argument("--grid", required=True, help="a:b:n or comma list")
    sp = add("af", "ambiguity-function cuts")
    sp.add_argument("--kind", choices=("vtheta", "vr_vtheta"), default="vr_vtheta")
    sp.add_argument("--vtheta-range", type=float, nargs=2, default=None)
    sp.add_argument("--n-vtheta", type=int, default=512)
    sp.add_argument("--vr-halfwidth", type=float, default=None)
    sp.add_argument("--n-vr", type=int, default=256)
    for name, help_ in (("estimate", "estimate target parameters"),
                        ("sweep", "Monte Carlo sweep"),
                        ("demo-multitarget", "multi-target demonstration")):
        sp = add(name, help_)
        sp.add_argument("--eps", type=float, default=0.05)
        sp.add_argument("--max-iter", type=int, default=10)
        if name == "estimate":
            sp.add_argument("--cube", default=None, help="cube dump from 'synth'")
            sp.add_argument("--pad", default="4,4,8", help="padding r,d,a")
        if name in ("estimate", "demo-multitarget"):
            sp.add_argument("--targets", type=int, default=None)
        if name == "sweep":
            sp.add_argument("--param", choices=("snr_db", "dbar", "v_theta"), default="snr_db")
            sp.add_argument("--grid", required=True, help="a:b:n or comma list")
            sp.add_argument("--trials", type=int, default=100)
            sp.add_argument("--crn", action="store_true", help="common random numbers across points")
            sp.add_argument("--force", action="store_true", help="skip the assumption gate")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        scene = load_scene(args.scene)
        if args.seed is not None:
            scene = scene.replace(seed=args.seed)
        else:
            args.seed = scene.seed
        out = Output(args.out, args.command, scene, args.seed,
                     {k: v for k, v in vars(args).items() if k not in ("command",)})
        code = COMMANDS[args.command](scene, args, out)
        out.close()
        return code
    except (ConfigurationError, FileNotFoundError, ValueError) as exc:
        from .estimate import EstimationError
        if isinstance(exc, EstimationError):
            print(f"estimation failed: {exc}", file=sys.stderr)
            return EXIT_SHORTFALL
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
