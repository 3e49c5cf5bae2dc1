"""Command-line scenario runner.

    husimiflow <command> [--config FILE] [--out DIR] [--reference] [--seed-dt DT]

Exit codes: 0 success, 1 configuration error, 2 runtime guard
(blow-up, boundary leak, masked mass, quadrature), 3 failed check.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import grid as _g
from .bopp import bopp_left, bopp_propagate, bopp_right, commutator_residual
from .config import ScenarioConfig, build_state, load_config
from .errors import (BlowUp, BoundaryLeak, ConfigError, HusimiFlowError, MaskDominates, ParcelEscaped,
                     QuadratureNonConvergent)
from .grid import Field, save_snapshot
from .scenarios import evolve, gauge_spec, husimi_trajectory, load_scenario
from .states import expectation, purity_report
from .symbols import PolySymbol

COMMANDS = ("evolve", "flux", "parcels", "action-check", "purity-check", "bopp-check", "verify")
NEEDS_CONFIG = ("evolve", "flux", "parcels", "action-check")
CONTINUITY_TOL = 1e-5
BOPP_TOL = 1e-8
COMMUTATOR_TOL = 1e-10

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_CHECK = 0, 1, 2, 3
_RUNTIME = (BlowUp, BoundaryLeak, MaskDominates, ParcelEscaped, QuadratureNonConvergent)


def _write_json(path: Path, data) -> Path:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
    return path


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out: Path, command: str, files, source) -> Path:
    entries = []
    for f in sorted({Path(f).resolve() for f in files}):
        entries.append({"path": f.relative_to(out.resolve()).as_posix(), "sha256": _sha256(f), "bytes": f.stat().st_size})
    return _write_json(out / "manifest.json", {"command": command, "config": source, "files": entries})


def write_observables(path: Path, traj, observables) -> Path:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", *[text for text, _ in observables]])
        for t, s in zip(traj.times, traj.states):
            w.writerow([repr(float(t)), *[repr(expectation(o, s)) for _, o in observables]])
    return path


# commands ----------------------------------------------------------------------


def cmd_evolve(cfg: ScenarioConfig, out: Path, args) -> tuple[int, list]:
    traj = evolve(cfg)
    files = [write_observables(out / "observables.csv", traj, cfg.observables)]
    files += traj.export(out / "snapshots", [o for _, o in cfg.observables])
    return EXIT_OK, files


def cmd_flux(cfg: ScenarioConfig, out: Path, args) -> tuple[int, list]:
    from .flux import continuity_residual, trajectory_fluxes

    traj = husimi_trajectory(evolve(cfg))
    gauge = gauge_spec(cfg)
    fluxes = trajectory_fluxes(traj, cfg.hamiltonian, gauge)
    files = []
    for i, (t, J) in enumerate(zip(traj.times, fluxes)):
        for a, c in enumerate(J.components):
            files += save_snapshot(out / "flux" / f"flux_{i:05d}_{cfg.grid.axes[a].name}", c, "flux",
                                   {"time": t, "component": cfg.grid.axes[a].name, "gauge": gauge.kind})
    r = continuity_residual(traj, fluxes) if len(traj) >= 3 else None
    ok = r is None or r < CONTINUITY_TOL
    files.append(_write_json(out / "flux.json", {"gauge": gauge.kind, "snapshots": len(traj),
                                                 "continuity_residual": r, "threshold": CONTINUITY_TOL, "pass": ok}))
    return (EXIT_OK if ok else EXIT_CHECK), files


def cmd_parcels(cfg: ScenarioConfig, out: Path, args) -> tuple[int, list]:
    from .flux import trace_parcels

    if cfg.seeds is None:
        raise ConfigError("the parcels command needs [parcels] seeds")
    dt = args.seed_dt or cfg.parcel_dt or cfg.dt
    if not dt > 0:
        raise ConfigError("--seed-dt must be positive")
    traj = husimi_trajectory(evolve(cfg))
    ps = trace_parcels(traj, gauge_spec(cfg), cfg.seeds, dt)
    return EXIT_OK, [ps.write_csv(out / "parcels.csv", cfg.n_dof)]


def cmd_action(cfg: ScenarioConfig, out: Path, args) -> tuple[int, list]:
    from .action import stationarity_scan

    traj = husimi_trajectory(evolve(cfg))
    kw = {}
    if "eps" in cfg.action:
        kw["eps_list"] = tuple(cfg.action["eps"])
    scan = stationarity_scan(traj, gauge_spec(cfg), profile_shape=cfg.action.get("shape", "sine"), **kw)
    files = [scan.write_csv(out / "stationarity.csv")]
    files.append(_write_json(out / "action.json", {"gauge": cfg.gauge["kind"], "fits": scan.fits,
                                                   "mask_share": scan.mask_share,
                                                   "flux_mask_share": scan.flux_mask_share,
                                                   "pass": scan.all_pass}))
    return (EXIT_OK if scan.all_pass else EXIT_CHECK), files


def cmd_purity(cfg: ScenarioConfig, out: Path, args) -> tuple[int, list]:
    s = build_state(cfg)
    rep = dict(purity_report(s))
    rep["representation"] = s.representation.value
    rep["state"] = cfg.state["kind"]
    return (EXIT_OK if rep["converged"] else EXIT_CHECK), [_write_json(out / "purity.json", rep)]


def _commutator_table(grid, hbar) -> dict:
    z = grid.coords()
    n = grid.n_dof
    psi = Field(grid, np.exp(-((z[0] - 0.3) ** 2 + (z[n] + 0.2) ** 2) / 2 + 0.4j * z[0]))
    x, p = PolySymbol.x(0, n), PolySymbol.p(0, n)
    rows = {}
    for name, a, b in (("[x_L,p_L]", bopp_left(x, hbar), bopp_left(p, hbar)),
                       ("[x_R,p_R]", bopp_right(x, hbar), bopp_right(p, hbar)),
                       ("[x_L,p_R]", bopp_left(x, hbar), bopp_right(p, hbar)),
                       ("[p_L,x_R]", bopp_left(p, hbar), bopp_right(x, hbar))):
        rows[name] = commutator_residual(a, b, [psi])
    return rows


def cmd_bopp(cfg: ScenarioConfig, out: Path, args) -> tuple[int, list]:
    """Bopp vs Wigner propagation of the configured pure state; Husimi states use their Wigner function."""
    from .dynamics import propagate

    st = dict(cfg.state)
    if st["kind"] == "coherent_husimi":
        st["kind"] = "coherent_wigner"
    st["representation"] = "Wigner"
    if st["kind"] not in ("coherent_wigner", "fock"):
        raise ConfigError("bopp-check needs a pure quantum state (coherent or fock)")
    s0 = build_state(replace(cfg, state=st))
    g = cfg.grid
    hist = bopp_propagate(cfg.hamiltonian, s0, cfg.t_final, cfg.dt, cfg.save_every)
    tw = propagate(cfg.hamiltonian, s0, cfg.t_final, cfg.dt, cfg.save_every)
    scale = (2 * np.pi * g.hbar) ** (g.n_dof / 2)
    ref = tw.final.values * scale
    mismatch = float(np.abs(hist.final.values - ref).max() / np.abs(ref).max())
    table = _commutator_table(g, g.hbar)
    ok = mismatch < BOPP_TOL and max(table.values()) < COMMUTATOR_TOL
    data = {"propagation_mismatch": mismatch, "threshold": BOPP_TOL, "commutators": table,
            "commutator_threshold": COMMUTATOR_TOL, "imag_residue": max(hist.imag_residue),
            "norm_drift": float(np.abs(hist.norms() - 1.0).max()), "pass": ok}
    return (EXIT_OK if ok else EXIT_CHECK), [_write_json(out / "bopp.json", data)]


def cmd_verify(cfg: ScenarioConfig | None, out: Path, args) -> tuple[int, list]:
    from .verify import run_suite

    checks = run_suite()
    ok = all(c.passed for c in checks)
    data = {"checks": [c.as_dict() for c in checks], "pass": ok}
    return (EXIT_OK if ok else EXIT_CHECK), [_write_json(out / "verify.json", data)]


_HANDLERS = {"evolve": cmd_evolve, "flux": cmd_flux, "parcels": cmd_parcels, "action-check": cmd_action,
             "purity-check": cmd_purity, "bopp-check": cmd_bopp, "verify": cmd_verify}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="husimiflow", description="Phase-space hydrodynamics scenario runner")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="scenario TOML file, or shipped:<name>")
    ap.add_argument("--out", help="output directory (default: [output] dir, else ./out)")
    ap.add_argument("--reference", action="store_true", help="single-threaded, bit-reproducible FFTs")
    ap.add_argument("--seed-dt", type=float, default=None, help="parcel integrator step override")
    return ap


def _load(spec: str) -> ScenarioConfig:
    if spec.startswith("shipped:"):
        try:
            return load_scenario(spec.split(":", 1)[1])
        except KeyError as e:
            raise ConfigError(str(e.args[0])) from None
    return load_config(spec)


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _g.set_workers(1 if args.reference else (os.cpu_count() or 1))
    try:
        cfg = None
        if args.config:
            cfg = _load(args.config)
        elif args.command in NEEDS_CONFIG:
            raise ConfigError(f"{args.command} needs --config")
        elif args.command != "verify":
            cfg = load_scenario("ho_coherent")
        if args.seed_dt is not None and not args.seed_dt > 0:
            raise ConfigError("--seed-dt must be positive")
        out = Path(args.out or (cfg.output_dir if cfg and cfg.output_dir else "out"))
        out.mkdir(parents=True, exist_ok=True)
        code, files = _HANDLERS[args.command](cfg, out, args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except _RUNTIME as e:
        print(f"runtime guard: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except HusimiFlowError as e:
        print(f"config error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_CONFIG
    write_manifest(out, args.command, files, cfg.source if cfg else None)
    return code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
