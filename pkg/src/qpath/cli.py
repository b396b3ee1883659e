"""Command-line front end: ``qpath {simulate,mlp,figure,reconstruct}``."""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import io, pipelines
from .config import build_config
from .errors import ConfigError, ConvergenceError, OutputError, QPathError
from .simulator import FORMAT_VERSION

# flag -> RunConfig field
FLAG_FIELDS = {
    "seed": "seed", "n": "n", "omega": "omega_hz", "tau": "tau", "gamma": "gamma", "dt": "dt",
    "duration": "duration", "zf": "zf", "xf": "xf", "window": "window",
    "percentile": "percentile", "x0": "x0", "z0": "z0", "scheme": "scheme", "decay": "decay",
    "step": "step", "mode": "selection_mode", "bins": "bins",
}


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", type=Path, help="JSON config or a previous run manifest")
    p.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    p.add_argument("--n", type=int, help="number of trajectories")
    p.add_argument("--omega", type=float, help="drive Omega/2pi in Hz")
    p.add_argument("--tau", type=float, help="measurement time in s")
    p.add_argument("--gamma", type=float, help="ensemble dephasing Gamma in 1/s")
    p.add_argument("--dt", type=float, help="sampling interval in s")
    p.add_argument("--duration", type=float, help="simulated duration in s")
    p.add_argument("--x0", type=float, help="initial x")
    p.add_argument("--z0", type=float, help="initial z")
    p.add_argument("--xf", type=float, help="final x target")
    p.add_argument("--zf", type=float, help="final z target")
    p.add_argument("--window", type=float, help="post-selection half width")
    p.add_argument("--mode", choices=("xz", "z"), help="post-selection on both coordinates or z only")
    p.add_argument("--percentile", type=float, help="top percentile for the empirical path")
    p.add_argument("--T", dest="horizons", type=float, action="append",
                   help="horizon in s (repeatable)")
    p.add_argument("--scheme", choices=("symmetric", "first_order"))
    p.add_argument("--decay", choices=("extra", "ensemble"),
                   help="coherence decay in the path equations: gamma (extra) or Gamma")
    p.add_argument("--step", type=float, help="RK4 step in s")
    p.add_argument("--bins", type=int, help="histogram value bins")
    p.add_argument("--workers", type=int, default=1, help="worker processes (output is independent)")
    p.add_argument("--out", type=Path, help="output directory (default $QPATH_OUT/<command>)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qpath", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("simulate", help="simulate a trajectory ensemble")
    p.add_argument("--preset", help="start from a named preset (default fig2)")
    _common(p)
    p = sub.add_parser("mlp", help="solve the most-likely-path boundary-value problem")
    p.add_argument("--preset")
    p.add_argument("--variational", action="store_true", help="append the delta-grid classification")
    _common(p)
    p = sub.add_parser("figure", help="reproduce a figure's data")
    p.add_argument("name", choices=sorted(pipelines.FIGURES))
    _common(p)
    p = sub.add_parser("reconstruct", help="filter an external readout record")
    p.add_argument("record", type=Path, help="CSV with header t_seconds,r or t_seconds,v_volts")
    p.add_argument("--preset")
    _common(p)
    return ap


def _config(args):
    file_data = None
    if args.config is not None:
        try:
            file_data = json.loads(args.config.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
    overrides = {field: getattr(args, flag) for flag, field in FLAG_FIELDS.items()}
    if args.horizons:
        overrides["horizons"] = args.horizons
    if getattr(args, "variational", False):
        overrides["variational"] = True
    preset = getattr(args, "name", None) or getattr(args, "preset", None)
    if preset is None and args.command == "simulate" and not file_data:
        preset = "fig2"
    return build_config(preset, file_data, overrides)


def _out_dir(args) -> Path:
    if args.out is not None:
        out = args.out
    else:
        leaf = args.name if args.command == "figure" else args.command
        out = Path(os.environ.get("QPATH_OUT", "qpath_out")) / leaf
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise OutputError(f"output directory {out} is not writable: {exc}") from None
    return out


def write_manifest(out: Path, command: str, cfg, files, extra=None) -> Path:
    """Manifest sufficient to rerun: config, seed, format version, hashes."""
    manifest = {
        "format_version": FORMAT_VERSION,
        "command": command,
        "config": cfg.to_dict(),
        "artifacts": {Path(f).name: io.sha256(f) for f in sorted(files, key=lambda f: Path(f).name)},
    }
    if extra:
        manifest.update(extra)
    return io.write_json(out / "manifest.json", manifest)


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.workers < 1:
        raise ConfigError("--workers must be at least 1")
    cfg = _config(args)
    out = _out_dir(args)
    extra = None
    try:
        if args.command == "simulate":
            files = pipelines.run_simulate(cfg, out, args.workers)
        elif args.command == "mlp":
            files = pipelines.run_mlp(cfg, out)
        elif args.command == "figure":
            files = pipelines.FIGURES[args.name](cfg, out, args.workers)
        else:
            files = pipelines.run_reconstruct(args.record, cfg, out)
            extra = {"record": {"file": str(args.record), "sha256": io.sha256(args.record)}}
    except ConvergenceError as exc:
        io.write_json(out / "solver_failure.json", {"message": str(exc), **exc.diagnostics})
        raise
    except OSError as exc:
        raise OutputError(str(exc)) from None
    command = f"figure {args.name}" if args.command == "figure" else args.command
    write_manifest(out, command, cfg, files, extra)
    print(f"wrote {len(files)} files to {out}")
    return 0


def main(argv=None) -> int:
    try:
        return run(argv)
    except QPathError as exc:
        print(f"qpath: error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
