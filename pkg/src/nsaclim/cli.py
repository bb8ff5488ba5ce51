"""Command line entry point: ``nsaclim <subcommand> [--config FILE] [--out DIR]``."""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from typing import List, Optional

import numpy as np
from loguru import logger

from .harness import (StudyConfig, circle_cA_builder, parse_curve, read_config, run_converge,
                      spectral_sweep, w1_diagnostic)


def _eps_list(text: Optional[str]) -> Optional[List[float]]:
    if not text:
        return None
    return [float(x) for x in text.split(",") if x.strip()]


def _out(args) -> str:
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    return out


def _write_rows(path: str, rows: List[dict], tag: str) -> None:
    if not rows:
        return
    cols = list(rows[0])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"# {tag}"])
        w.writerow(cols)
        for r in rows:
            w.writerow([r[c] if isinstance(r[c], (int, str)) else f"{float(r[c]):.10e}" for c in cols])


def cmd_profile(args, cfg):
    from .profile1d import optimal_profile, spectrum_L
    prof = optimal_profile(L=float(cfg.get("L", 40.0)), n=int(cfg.get("n", 4096)))
    lam, _ = spectrum_L(prof, k=3)
    out = _out(args)
    np.savetxt(os.path.join(out, "profile.dat"), np.column_stack([prof.rho, prof.theta, prof.dtheta]))
    info = {"sigma": prof.sigma, "lambda": [float(v) for v in lam]}
    print(json.dumps(info))


def cmd_sharp(args, cfg):
    from .sharp_sim import SharpConfig, run_sharp
    curve = parse_curve(cfg.get("seed_curve", "circle:0.3:0.5:0.5:64"))
    sc = SharpConfig(curve, t_final=float(cfg.get("t_final", 0.02)), dt=float(cfg.get("dt", 1e-4)),
                     grid_n=int(cfg.get("grid_n", 128)), bc=str(cfg.get("bc", "periodic")),
                     stokes=bool(cfg.get("stokes", True)))
    traj = run_sharp(sc)
    out = _out(args)
    np.savetxt(os.path.join(out, "sharp_radius.dat"), np.column_stack([traj.times, traj.radius()]))
    np.savetxt(os.path.join(out, "sharp_final_curve.dat"), traj.curves[-1].X(0).T)
    print(f"R(T) = {traj.radius()[-1]:.8f}")


def cmd_diffuse(args, cfg):
    from .diffuse_sim import DiffuseConfig, interface_radius, run
    eps = (_eps_list(args.eps) or [float(cfg.get("epsilon", 0.05))])[0]
    n = int(cfg.get("grid_n", int(np.ceil(4.0 / eps))))
    dc = DiffuseConfig(epsilon=eps, grid_n=n, dt=float(cfg.get("dt", 0.1 * eps ** 2)),
                       t_final=float(cfg.get("t_final", 0.02)), bc=str(cfg.get("bc", "periodic")),
                       output_every=float(cfg.get("output_every", 0.005)),
                       seed_curve=parse_curve(cfg.get("seed_curve", "circle:0.3:0.5:0.5:64")),
                       scheme=str(cfg.get("scheme", "strang")))
    res = run(dc)
    out = _out(args)
    grid = dc.grid()
    rad = [interface_radius(c, grid) for c in res.phases]
    np.savetxt(os.path.join(out, "diffuse_radius.dat"), np.column_stack([res.times, rad]))
    np.savetxt(os.path.join(out, "diffuse_energy.dat"), np.asarray(res.report["energies"]))
    np.save(os.path.join(out, "diffuse_final.npy"), res.phases[-1])
    print(f"energy {res.report['energy0']:.6f} -> {res.report['energy_final']:.6f}, "
          f"max|c| = {np.max(res.report['max_abs']):.8f}")


def _study(args, cfg) -> StudyConfig:
    study = StudyConfig.from_dict(cfg)
    if args.eps:
        study.eps = _eps_list(args.eps)
    if args.order is not None:
        study.order_c = args.order
    return study


def cmd_approx(args, cfg):
    from .asymptotics import approx_phase, build_inner_expansion
    from .sharp_sim import SharpConfig, run_sharp
    study = _study(args, cfg)
    traj = run_sharp(SharpConfig(parse_curve(study.seed_curve), t_final=study.t_final, dt=study.sharp_dt,
                                 grid_n=study.sharp_grid, bc=study.bc, keep_fields=True))
    out = _out(args)
    for eps in study.eps:
        exp_ = build_inner_expansion(traj, eps, order=max(2, study.order_c))
        grid = study.grid_for(eps)
        cA = approx_phase(exp_, len(traj.times) - 1, grid, study.delta, study.order_c)
        np.save(os.path.join(out, f"cA_eps{eps:g}.npy"), cA.c)
        print(f"eps = {eps:g}: h2 range [{exp_.h2[-1].values.min():.5g}, {exp_.h2[-1].values.max():.5g}]")


def cmd_spectral(args, cfg):
    eps = _eps_list(args.eps) or cfg.get("eps", [0.1, 0.05, 0.025])
    eps = eps if isinstance(eps, list) else [eps]
    builder = circle_cA_builder(R=float(cfg.get("R", 0.3)), bc=str(cfg.get("bc", "periodic")))
    rows = spectral_sweep(builder, eps)
    _write_rows(os.path.join(_out(args), "spectral.csv"), rows, "spectral v1")
    for r in rows:
        print(f"eps = {r['eps']:g}: lambda_min = {r['lambda1']:.6f}")


def cmd_converge(args, cfg):
    study = _study(args, cfg)
    rep = run_converge(study, _out(args))
    for k in sorted(rep.fits):
        f = rep.fits[k]
        print(f"{k:>11s}: order {f['order']:.3f} +- {f['stderr']:.3f}, monotone {f['monotone']}")


def cmd_w1(args, cfg):
    from .asymptotics import approx_phase, build_inner_expansion
    from .diffuse_sim import DiffuseConfig, run
    from .sharp_sim import SharpConfig, run_sharp
    study = _study(args, cfg)
    traj = run_sharp(SharpConfig(parse_curve(study.seed_curve), t_final=study.t_final, dt=study.sharp_dt,
                                 grid_n=study.sharp_grid, bc=study.bc, keep_fields=True))
    rows = []
    for eps in study.eps:
        grid = study.grid_for(eps)
        res = run(DiffuseConfig(epsilon=eps, grid_n=grid.n, dt=study.dt_factor * eps ** 2, t_final=study.t_final,
                                bc=study.bc, delta=study.delta, output_every=study.t_final,
                                seed_curve=traj.curves[0]))
        i = len(traj.times) - 1
        exp_ = build_inner_expansion(traj, eps, order=2)
        cA0 = approx_phase(exp_, i, grid, study.delta, 0).c
        w = w1_diagnostic(res.phases[-1], cA0, exp_.h2[i].values, eps, traj.curves[i], grid, study.delta,
                          exp_.h1.h[i].values)
        rows.append({"eps": eps, "h1_norm": w.h1_norm, "trace_max": float(np.max(np.abs(w.trace_n)))})
        print(f"eps = {eps:g}: |w1|_H1 = {w.h1_norm:.4e}, max|n.w1| on curve = {rows[-1]['trace_max']:.4e}")
    _write_rows(os.path.join(_out(args), "w1.csv"), rows, "w1 v1")


COMMANDS = {
    "profile": cmd_profile,
    "sharp": cmd_sharp,
    "diffuse": cmd_diffuse,
    "approx": cmd_approx,
    "spectral": cmd_spectral,
    "converge": cmd_converge,
    "w1": cmd_w1,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nsaclim", description="Stokes/Allen-Cahn sharp-interface toolkit")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="key = value configuration file")
        s.add_argument("--out", help="output directory (default: current)")
        s.add_argument("--order", type=int, choices=(0, 2, 3), help="expansion order of c_A")
        s.add_argument("--eps", help="comma separated eps list")
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logger.remove()
    logger.add(sys.stderr, level="INFO" if args.verbose else "WARNING")
    cfg = read_config(args.config)
    COMMANDS[args.command](args, cfg)
    return 0


if __name__ == "__main__":
    sys.exit(main())
