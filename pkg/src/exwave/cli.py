"""Command-line interface.

Subcommands: check-domain, simulate, moments, reconstruct, decay, sweep-rho,
sweep-noise, speed-contrast, end-to-end. Every subcommand reads one TOML
config; --seed and --out override the config, as does the EXWAVE_OUTDIR
environment variable. Exit codes: 0 success, 2 configuration/validation
error, 3 numerical failure; errors also print a machine-readable JSON record.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import config as cfgmod
from . import harness, outputs
from .errors import ExwaveError, NumericalError, ValidationError
from .geometry import validation_report
from .moments import MomentAccumulator, boundary_traces
from .wavesim import EnergyRecorder, SnapshotRecorder, run


def main(argv=None) -> int:
    return run_cli(argv)


def run_cli(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="exwave",
        description="Exterior wave simulation and boundary-data recovery",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("check-domain", "validate the geometry and print a JSON report"),
        ("simulate", "run the wave solver, write energy series and snapshots"),
        ("moments", "accumulate time moments, dump fields and boundary traces"),
        ("reconstruct", "recover the separated data difference"),
        ("decay", "obstacle decay-rate experiment"),
        ("sweep-rho", "reconstruction error versus truncation radius"),
        ("sweep-noise", "reconstruction error versus noise level and radius"),
        ("speed-contrast", "two-speed experiment recovering the contrast"),
        ("end-to-end", "full difference-field recovery experiment"),
    ]:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("config", help="TOML configuration file")
        p.add_argument("--seed", type=int, default=None, help="override the seed")
        p.add_argument("--out", default=None, help="override the output directory")

    args = parser.parse_args(argv)
    try:
        return _dispatch(args)
    except NumericalError as e:
        _error_record(e)
        return 3
    except (ValidationError, ExwaveError) as e:
        _error_record(e)
        return 2
    except FileNotFoundError as e:
        _error_record(e)
        return 2


def _error_record(exc) -> None:
    rec = {"error": type(exc).__name__, "message": str(exc)}
    print(json.dumps(rec, sort_keys=True))


def _out_dir(cfg, args):
    return outputs.resolve_out_dir(cfg.out_dir, args.out)


def _dispatch(args) -> int:
    raw = cfgmod.load_toml(args.config)
    cmd = args.command

    if cmd == "check-domain":
        domain = cfgmod.parse_domain(raw)
        print(json.dumps(outputs._jsonable(validation_report(domain)),
                         sort_keys=True, indent=1))
        return 0

    if cmd == "simulate":
        cfg = cfgmod.decay_config(raw, seed=args.seed)
        energy = EnergyRecorder(cfg.domain)
        recorders = [energy]
        snaps = SnapshotRecorder(cfg.snapshot_times) if cfg.snapshot_times else None
        if snaps:
            recorders.append(snaps)
        data = cfg.initial_data(cfg.domain)
        res = run(cfg.domain, cfg.speed, data, cfg.sim_settings(), recorders)
        series = energy.series()
        report = harness.base_report(cfg)
        report["run"] = {"n_steps": res.n_steps, "t_final": res.t_final, "dt": res.dt}
        report["tables"] = {
            "energy.csv": (("t", "E_Q"),
                           np.stack([series.times, series.values], axis=1))
        }
        out = outputs.write_report_bundle(report, _out_dir(cfg, args))
        if snaps:
            g = cfg.domain.grid
            for i, (t, u) in enumerate(snaps.taken):
                outputs.write_field(out / f"snapshot_{i:03d}.f64", u,
                                    origin=g.origin, spacing=g.h)
        print(str(out / "report.json"))
        return 0

    if cmd == "moments":
        cfg = cfgmod.decay_config(raw, seed=args.seed)
        acc = MomentAccumulator(cfg.domain, t_final=cfg.t_final,
                                taper_width=cfg.taper_width, noise_seed=cfg.seed)
        data = cfg.initial_data(cfg.domain)
        res = run(cfg.domain, cfg.speed, data, cfg.sim_settings(), [acc])
        moments = acc.results()
        report = harness.base_report(cfg)
        report["run"] = {"n_steps": res.n_steps, "t_final": res.t_final, "dt": res.dt}
        report["tail_estimates"] = {str(k): m.tail_estimate for k, m in moments.items()}
        out = outputs.write_report_bundle(report, _out_dir(cfg, args))
        g = cfg.domain.grid
        sl = cfg.domain.sigma_slices
        block_origin = tuple(g.origin[j] + g.h * sl[j].start for j in range(3))
        surfaces = ["sigma", "patch"] + (
            [] if cfg.domain.obstacle.is_empty else ["obstacle"])
        for k, m in moments.items():
            outputs.write_field(out / f"moment_{k}.f64", m.volume,
                                origin=block_origin, spacing=g.h)
            rows = []
            for surf in surfaces:
                mesh = cfg.domain.boundary_mesh(surf)
                tr = boundary_traces(m, cfg.domain, surf)
                tag_id = {"sigma": 0, "patch": 1, "obstacle": 2}[surf]
                for i in range(len(mesh)):
                    rows.append((i, *mesh.points[i], tag_id,
                                 tr.values[i], tr.fluxes[i]))
            outputs.write_csv(
                out / f"moment_{k}_traces.csv",
                ("index", "x", "y", "z", "tag", "value", "flux"),
                np.asarray(rows, dtype=float),
            )
        print(str(out / "report.json"))
        return 0

    if cmd in ("reconstruct", "end-to-end", "sweep-rho", "sweep-noise"):
        cfg = cfgmod.end_to_end_config(raw, seed=args.seed, name=cmd)
        if cmd == "sweep-rho":
            cfg.noise_eps = (0.0,)
        report = harness.experiment_end_to_end(cfg)
        from .reconstruct import window_axes

        w1, w2 = window_axes(cfg.domain)
        out = outputs.write_report_bundle(report, _out_dir(cfg, args),
                                          origin=(w1[0], w2[0]),
                                          spacing=cfg.domain.grid.h)
        print(str(out / "report.json"))
        return 0

    if cmd == "decay":
        cfg = cfgmod.decay_config(raw, seed=args.seed)
        report = harness.experiment_decay(cfg)
        out = outputs.write_report_bundle(report, _out_dir(cfg, args))
        print(str(out / "report.json"))
        return 0

    if cmd == "speed-contrast":
        cfg = cfgmod.speed_contrast_config(raw, seed=args.seed)
        report = harness.experiment_speed(cfg)
        from .reconstruct import window_axes

        w1, w2 = window_axes(cfg.domain)
        out = outputs.write_report_bundle(report, _out_dir(cfg, args),
                                          origin=(w1[0], w2[0]),
                                          spacing=cfg.domain.grid.h)
        print(str(out / "report.json"))
        return 0

    raise ValidationError(f"unknown command {cmd!r}")


if __name__ == "__main__":
    sys.exit(main())
