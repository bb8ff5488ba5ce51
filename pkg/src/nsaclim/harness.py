"""
Convergence studies and diagnostics.

* ``error_norms``: sup-L2, exterior, tangential, eps-weighted normal and
  velocity error norms over a time ladder of snapshots.
* ``w1_diagnostic``: the leading velocity error driven by u1 = c_eps - c_A0.
* ``spectral_sweep``: smallest eigenvalues of -Lap + f''(c_A) / eps^2.
* ``rate_fit``: log-log least squares.
* ``run_converge``: the shrinking-circle study across an eps ladder with
  deterministic CSV and plot-series output.
"""

from __future__ import annotations

import copy
import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields as dc_fields
from typing import Callable, Dict, List, NamedTuple, Optional, Sequence

import numpy as np
import scipy.sparse as sp
from loguru import logger
from scipy.sparse.linalg import ArpackNoConvergence, eigsh

from .asymptotics import InnerExpansion, approx_phase, build_inner_expansion, build_vA
from .diffuse_sim import DiffuseConfig, cutoff, grid_distance, interface_radius, run as run_diffuse
from .errors import GridMismatch, InsufficientData, NoConvergence, NonPositiveError
from .geometry import ClosedCurve, SurfaceOperatorSet, circle, ellipse, fourier_eval
from .profile1d import DoubleWell, OptimalProfile, optimal_profile
from .sharp_sim import SharpConfig, SharpTrajectory, run_sharp
from .stokes import (Grid, VelocityField, cell_gradient, dirichlet_energy, interface_trace, pad_cells,
                     stokes_solve, tensor_force)

CSV_VERSION = "converge v1"


# -- norms ----------------------------------------------------------------------

def cell_grad(u: np.ndarray, grid: Grid, wall_value: float = 0.0) -> np.ndarray:
    """Centred gradient at cell centres, shape (2, n, n)."""
    return cell_gradient(pad_cells(u, grid, 1, wall_value), grid.h)


def extended_normal(curve: ClosedCurve, s: np.ndarray) -> np.ndarray:
    """n(S(x)) for footpoint parameters s (any shape), shape (2,) + s.shape."""
    N = curve.n
    nrm = fourier_eval(np.fft.fft(curve.normal, axis=1) / N, s)[0]
    return nrm / np.hypot(nrm[0], nrm[1])


@dataclass
class SnapshotNorms:
    """Squared norms of one snapshot (before time integration)."""

    l2: float
    ext_grad: float
    tan_grad: float
    normal_grad: float
    full_grad_tube: float
    vel_lq: float


def snapshot_norms(u: np.ndarray, grid: Grid, d: np.ndarray, nrm: np.ndarray, delta: float,
                   dv: Optional[np.ndarray] = None, q: float = 1.5) -> SnapshotNorms:
    """Squared L2 norms of u = c_eps - c_A and its gradient pieces.

    Parameters
    ----------
    u : ndarray
        Cell field (n, n) vanishing on Dirichlet walls.
    d : ndarray
        Signed distance at the cells.
    nrm : ndarray
        Extended normal n(S(x)) at the cells, shape (2, n, n).
    dv : ndarray, optional
        Velocity error at the cells, shape (2, n, n).
    """
    h2 = grid.h ** 2
    g = cell_grad(u, grid)
    gn = np.sum(g * nrm, axis=0)
    gt = g - gn * nrm
    tube = np.abs(d) < 2 * delta
    ext = np.abs(d) >= delta
    lq = 0.0
    if dv is not None:
        lq = float((h2 * np.sum(np.hypot(dv[0], dv[1]) ** q)) ** (1.0 / q))
    return SnapshotNorms(
        l2=float(h2 * np.sum(u * u)),
        ext_grad=float(h2 * np.sum(np.sum(g * g, axis=0)[ext])),
        tan_grad=float(h2 * np.sum(np.sum(gt * gt, axis=0)[tube])),
        normal_grad=float(h2 * np.sum((gn * gn)[tube])),
        full_grad_tube=float(h2 * np.sum(np.sum(g * g, axis=0)[tube])),
        vel_lq=lq,
    )


def _time_l2(times: np.ndarray, sq: np.ndarray) -> float:
    """sqrt(int f dt) by the trapezoid rule over the snapshot times."""
    if len(times) < 2:
        return float(np.sqrt(sq[0])) if len(sq) else 0.0
    return float(np.sqrt(np.trapezoid(sq, times)))


def error_norms(times: Sequence[float], c_eps: Sequence[np.ndarray], c_A: Sequence[np.ndarray],
                curves: Sequence[ClosedCurve], grid: Grid, delta: float, eps: float,
                v_eps: Optional[Sequence[VelocityField]] = None, v_A: Optional[Sequence[VelocityField]] = None,
                q: float = 1.5, geometry: Optional[Sequence[tuple]] = None) -> dict:
    """Error-report row over a snapshot ladder.

    Returns
    -------
    dict
        sup_l2, ext_grad, tan_grad, eps_normal, composite, vel_err.

    Raises
    ------
    GridMismatch
        If fields have inconsistent shapes.
    """
    times = np.asarray(times, dtype=float)
    n = grid.n
    per = []
    for k in range(len(times)):
        a, b = np.asarray(c_eps[k]), np.asarray(c_A[k])
        if a.shape != (n, n) or b.shape != (n, n):
            raise GridMismatch("phase fields are not on the report grid")
        if geometry is not None:
            d, nrm = geometry[k]
        else:
            d, s, _, _ = grid_distance(curves[k], grid, delta)
            nrm = extended_normal(curves[k], s)
        dv = None
        if v_eps is not None and v_A is not None:
            if v_eps[k].grid != v_A[k].grid:
                raise GridMismatch("velocity fields live on different grids")
            dv = v_eps[k].cell_velocity() - v_A[k].cell_velocity()
        per.append(snapshot_norms(a - b, grid, d, nrm, delta, dv, q))
    sq = {f.name: np.array([getattr(p, f.name) for p in per]) for f in dc_fields(SnapshotNorms)}
    row = {
        "sup_l2": float(np.sqrt(np.max(sq["l2"]))),
        "ext_grad": _time_l2(times, sq["ext_grad"]),
        "tan_grad": _time_l2(times, sq["tan_grad"]),
        "eps_normal": eps * _time_l2(times, sq["normal_grad"]),
    }
    row["composite"] = row["sup_l2"] + row["ext_grad"] + row["tan_grad"] + row["eps_normal"]
    row["vel_err"] = _time_l2(times, sq["vel_lq"] ** 2) if v_eps is not None else float("nan")
    return row


# -- rate fits --------------------------------------------------------------------

class RateFit(NamedTuple):
    order: float
    intercept: float
    residual: float


def rate_fit(rows: Sequence[tuple]) -> RateFit:
    """Least-squares slope of log(error) against log(eps).

    Raises
    ------
    InsufficientData
        Fewer than three rows or repeated eps.
    NonPositiveError
        Non-positive eps or error.
    """
    rows = list(rows)
    if len(rows) < 3:
        raise InsufficientData(f"need at least 3 rows, got {len(rows)}")
    e = np.array([r[0] for r in rows], dtype=float)
    y = np.array([r[1] for r in rows], dtype=float)
    if np.any(e <= 0) or np.any(y <= 0) or not np.all(np.isfinite(y)):
        raise NonPositiveError("rate fits need positive eps and errors")
    if len(np.unique(e)) != len(e):
        raise InsufficientData("eps values must be distinct")
    A = np.column_stack([np.log(e), np.ones_like(e)])
    coef, *_ = np.linalg.lstsq(A, np.log(y), rcond=None)
    res = np.log(y) - A @ coef
    return RateFit(float(coef[0]), float(coef[1]), float(np.sqrt(np.mean(res ** 2))))


def slope_stderr(rows: Sequence[tuple]) -> float:
    """Standard error of the fitted slope (0 for exact fits, nan for 2 points)."""
    e = np.log([r[0] for r in rows])
    y = np.log([r[1] for r in rows])
    if len(e) < 3:
        return float("nan")
    A = np.column_stack([e, np.ones_like(e)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    r = y - A @ coef
    s2 = float(r @ r) / (len(e) - 2)
    cov = s2 * np.linalg.inv(A.T @ A)
    return float(np.sqrt(cov[0, 0]))


# -- w1 diagnostic ----------------------------------------------------------------

def w1_force(c_eps: np.ndarray, c_A0: np.ndarray, grid: Grid, eps: float, curve: ClosedCurve,
             delta: float, h1: Optional[np.ndarray] = None, h2: Optional[np.ndarray] = None,
             include_g: bool = True, profile: Optional[OptimalProfile] = None):
    """Face force -eps div(G (x) grad u1 + grad u1 (x) G), G = grad c_A0 - g.

    g = -zeta(d) theta0'(rho) eps grad_tau h2 with grad_tau evaluated at the
    point through grad S = tau / (|X0'| (1 - H d)).
    """
    profile = profile or optimal_profile()
    u1 = c_eps - c_A0
    gu = cell_gradient(pad_cells(u1, grid, 2, 0.0), grid.h)
    gc = cell_gradient(pad_cells(c_A0, grid, 2, -1.0), grid.h)
    G = gc.copy()
    if include_g and h2 is not None and np.any(h2):
        N = curve.n
        d, s, _, _ = grid_distance(curve, grid, delta)
        hv = (np.zeros(N) if h1 is None else np.asarray(h1)) + eps * np.asarray(h2)
        coefs = np.fft.fft(np.array([hv, h2]), axis=1) / N
        (hs, _), (_, h2s) = fourier_eval(coefs, s, (0, 1))
        tau = fourier_eval(np.fft.fft(curve.tangent, axis=1) / N, s)[0]
        tau /= np.hypot(tau[0], tau[1])
        sp_ = fourier_eval(np.fft.fft(curve.speed) / N, s)[0]
        H = fourier_eval(np.fft.fft(curve.H) / N, s)[0]
        A = sp_ * (1.0 - H * d)
        rho = d / eps - hs
        g = -cutoff(d, delta) * profile.dtheta_at(rho) * eps * tau * (h2s / A)
        wall = 0.0
        gp = np.array([pad_cells(g[0], grid, 1, wall), pad_cells(g[1], grid, 1, wall)])
        G = gc - gp
    T = np.einsum("a...,b...->ab...", G, gu) + np.einsum("a...,b...->ab...", gu, G)
    return tensor_force(T, grid, eps)


@dataclass
class W1Result:
    field: VelocityField
    trace_n: np.ndarray
    h1_norm: float


def w1_diagnostic(c_eps: np.ndarray, c_A0: np.ndarray, h2: Optional[np.ndarray], eps: float,
                  curve: ClosedCurve, grid: Grid, delta: float, h1: Optional[np.ndarray] = None,
                  include_g: bool = True) -> W1Result:
    """Solve the Stokes problem for w~1 and trace its normal component on the curve."""
    fu, fv = w1_force(c_eps, c_A0, grid, eps, curve, delta, h1, h2, include_g)
    F = stokes_solve(fu, fv, grid, mean_tol=1.0)
    tr = interface_trace(F, curve)
    vn = np.einsum("ij,ij->j", curve.normal, tr)
    cv = F.cell_velocity()
    h1n = math.sqrt(max(dirichlet_energy(F), 0.0) + grid.h ** 2 * float(np.sum(cv * cv)))
    return W1Result(F, vn, h1n)


# -- spectral sweep ----------------------------------------------------------------

def laplacian_matrix(grid: Grid) -> sp.csr_matrix:
    """5-point -Lap on cells (periodic, or homogeneous Dirichlet by reflection)."""
    n, h = grid.n, grid.h
    e = np.ones(n)
    if grid.bc == "periodic":
        D = sp.diags([-e[:-1], 2 * e, -e[:-1]], [-1, 0, 1], format="lil")
        D[0, n - 1] = D[n - 1, 0] = -1.0
    else:
        main = 2 * e
        main[0] = main[-1] = 3.0   # ghost = -interior
        D = sp.diags([-e[:-1], main, -e[:-1]], [-1, 0, 1], format="lil")
    D = sp.csr_matrix(D) / h ** 2
    I = sp.identity(n, format="csr")
    return (sp.kron(D, I) + sp.kron(I, D)).tocsr()


def smallest_eigenvalues(c_A: np.ndarray, eps: float, grid: Grid, k: int = 3,
                         well: Optional[DoubleWell] = None) -> np.ndarray:
    """k smallest eigenvalues of -Lap_h + f''(c_A) / eps^2 by shift-invert Lanczos.

    Raises
    ------
    NoConvergence
        If ARPACK fails.
    """
    well = well or DoubleWell.quartic()
    pot = well.d2f(np.asarray(c_A).ravel()) / eps ** 2
    A = laplacian_matrix(grid) + sp.diags(pot)
    shift = float(np.min(pot)) - 1.0
    try:
        vals = eigsh(A.tocsc(), k=k, sigma=shift, which="LM", return_eigenvectors=False, tol=1e-10)
    except ArpackNoConvergence as exc:
        raise NoConvergence(f"eigsh failed: {exc}") from exc
    return np.sort(vals)


def spectral_sweep(builder: Callable[[float], tuple], eps_list: Sequence[float], k: int = 3) -> List[dict]:
    """Table of the k smallest eigenvalues per eps.

    ``builder(eps)`` returns ``(c_A, grid)``.
    """
    rows = []
    for eps in eps_list:
        cA, grid = builder(eps)
        lam = smallest_eigenvalues(cA, eps, grid, k)
        rows.append({"eps": float(eps), "grid_n": grid.n, **{f"lambda{j + 1}": float(v) for j, v in enumerate(lam)}})
    return rows


def circle_cA_builder(R: float = 0.3, center=(0.5, 0.5), factor: int = 4, box: float = 1.0,
                      bc: str = "periodic", profile: Optional[OptimalProfile] = None):
    """Builder of the order-0 circle phase theta0(d / eps) with h <= eps / factor.

    The exact distance |x - center| - R is used, so no cutoff is needed and
    eps may exceed the usual tube half-width.
    """
    profile = profile or optimal_profile()

    def build(eps):
        n = int(math.ceil(factor * box / eps - 1e-9))
        grid = Grid(n, box, bc)
        X, Y = grid.mesh()
        d = np.hypot(X - center[0], Y - center[1]) - R
        return profile.theta_at(d / eps), grid
    return build


# -- configuration ------------------------------------------------------------------

def parse_value(text: str):
    t = text.strip()
    if "," in t:
        return [parse_value(x) for x in t.split(",") if x.strip()]
    low = t.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    for conv in (int, float):
        try:
            return conv(t)
        except ValueError:
            pass
    return t


def read_config(path: Optional[str]) -> dict:
    """key = value lines; '#' starts a comment; comma lists become lists."""
    out = {}
    if not path:
        return out
    with open(path) as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"bad config line: {raw.rstrip()}")
            k, v = line.split("=", 1)
            out[k.strip()] = parse_value(v)
    return out


def parse_curve(spec) -> ClosedCurve:
    """``circle:R:cx:cy`` or ``ellipse:a:b:cx:cy`` (optional ``:modes``)."""
    if isinstance(spec, ClosedCurve):
        return spec
    parts = str(spec).split(":")
    kind, vals = parts[0], [float(x) for x in parts[1:]]
    if kind == "circle":
        R, cx, cy = (vals + [0.3, 0.5, 0.5][len(vals):])[:3]
        n = int(vals[3]) if len(vals) > 3 else 64
        return circle(R, (cx, cy), n=n)
    if kind == "ellipse":
        a, b, cx, cy = (vals + [0.3, 0.2, 0.5, 0.5][len(vals):])[:4]
        n = int(vals[4]) if len(vals) > 4 else 64
        return ellipse(a, b, (cx, cy), n=n)
    raise ValueError(f"unknown curve {spec!r}")


# -- convergence study ----------------------------------------------------------------

@dataclass
class StudyConfig:
    """Shrinking-interface study across an eps ladder.

    Attributes
    ----------
    eps : list of float
    seed_curve : str
        Curve spec, see ``parse_curve``.
    t_final, output_every : float
    grid_factor : float
        Cells per eps (h <= eps / grid_factor).
    dt_factor : float
        Diffuse dt = dt_factor eps^2.
    sharp_dt, sharp_grid : float, int
        Front-tracking step and Stokes grid.
    order_c, order_v : int
        Expansion orders of c_A and v_A.
    """

    eps: List[float] = field(default_factory=lambda: [0.08, 0.06, 0.04, 0.03])
    seed_curve: str = "circle:0.3:0.5:0.5:64"
    t_final: float = 0.02
    output_every: float = 0.005
    box: float = 1.0
    bc: str = "periodic"
    delta: float = 0.1
    grid_factor: float = 4.0
    dt_factor: float = 0.1
    sharp_dt: float = 1e-4
    sharp_grid: int = 128
    order_c: int = 2
    order_v: int = 1
    q: float = 1.5
    scheme: str = "strang"
    workers: int = 1

    @classmethod
    def from_dict(cls, d: dict) -> "StudyConfig":
        names = {f.name for f in dc_fields(cls)}
        alias = {"epsilon": "eps", "order": "order_c"}
        kw = {}
        for k, v in d.items():
            k = alias.get(k, k)
            if k not in names:
                raise ValueError(f"unknown study key {k!r}")
            kw[k] = v
        if "eps" in kw and not isinstance(kw["eps"], list):
            kw["eps"] = [kw["eps"]]
        return cls(**kw)

    def grid_for(self, eps: float) -> Grid:
        n = int(math.ceil(self.grid_factor * self.box / eps - 1e-9))
        return Grid(n, self.box, self.bc)


@dataclass
class ErrorReport:
    """Per-eps error rows, fitted orders and metadata."""

    rows: List[dict]
    fits: Dict[str, dict]
    metadata: dict
    series: Dict[str, list] = field(default_factory=dict)

    METRICS = ("sup_l2", "ext_grad", "tan_grad", "eps_normal", "composite", "vel_err", "radius_err")

    def monotone(self, key: str) -> bool:
        rows = sorted(self.rows, key=lambda r: -r["eps"])
        vals = [r[key] for r in rows]
        return all(b < a for a, b in zip(vals, vals[1:]))

    def to_csv(self, path: str) -> None:
        cols = ["eps", "grid_n", "dt"] + list(self.METRICS)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([f"# {CSV_VERSION}"])
            w.writerow(cols)
            for r in sorted(self.rows, key=lambda r: -r["eps"]):
                w.writerow([_fmt(r[c]) for c in cols])

    def fits_csv(self, path: str) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([f"# {CSV_VERSION} fits"])
            w.writerow(["metric", "order", "intercept", "residual", "stderr", "monotone"])
            for k in sorted(self.fits):
                f = self.fits[k]
                w.writerow([k, _fmt(f["order"]), _fmt(f["intercept"]), _fmt(f["residual"]), _fmt(f["stderr"]),
                            int(f["monotone"])])


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.10e}"


def _member(args):
    """One eps of the study (top-level for process pools)."""
    cfg, eps, traj, expansion = args
    grid = cfg.grid_for(eps)
    dcfg = DiffuseConfig(epsilon=eps, grid_n=grid.n, dt=cfg.dt_factor * eps ** 2, t_final=cfg.t_final,
                         bc=cfg.bc, delta=cfg.delta, output_every=cfg.output_every,
                         seed_curve=traj.curves[0], box=cfg.box, scheme=cfg.scheme)
    run = run_diffuse(dcfg)
    cA, vA, curves, geom, rad = [], [], [], [], []
    R_sharp = traj.radius()
    for t, c in zip(run.times, run.phases):
        i = traj.index(t)
        curves.append(traj.curves[i])
        cA.append(approx_phase(expansion, i, grid, cfg.delta, cfg.order_c).c)
        vA.append(build_vA(traj, i, eps, grid, cfg.delta, expansion, cfg.order_v, with_pressure=False).v_A)
        d, s, _, _ = grid_distance(traj.curves[i], grid, cfg.delta)
        geom.append((d, extended_normal(traj.curves[i], s)))
        rad.append(abs(interface_radius(c, grid) - R_sharp[i]))
    row = error_norms(run.times, run.phases, cA, curves, grid, cfg.delta, eps, run.velocities, vA, cfg.q, geom)
    row.update({"eps": float(eps), "grid_n": grid.n, "dt": float(run.report["dt"]),
                "radius_err": float(max(rad))})
    mon = {"energy_ok": run.report["energy_ok"], "max_principle_ok": run.report["max_principle_ok"],
           "max_abs": float(np.max(run.report["max_abs"])), "energy0": run.report["energy0"],
           "energy_final": run.report["energy_final"]}
    logger.info("eps = {}: composite {:.4e}, radius {:.4e}, velocity {:.4e}", eps, row["composite"],
                row["radius_err"], row["vel_err"])
    return row, mon


def run_converge(cfg: StudyConfig, out_dir: Optional[str] = None, traj: Optional[SharpTrajectory] = None) -> ErrorReport:
    """Run the study; write CSV and series files when ``out_dir`` is given."""
    curve0 = parse_curve(cfg.seed_curve)
    if traj is None:
        traj = run_sharp(SharpConfig(curve0, t_final=cfg.t_final, dt=cfg.sharp_dt, grid_n=cfg.sharp_grid,
                                     box=cfg.box, bc=cfg.bc, keep_fields=True))
    # h1, h2 and the c2 table do not depend on eps; c3 does
    order = 3 if cfg.order_c >= 3 else 2
    base = build_inner_expansion(traj, cfg.eps[0], order=order)
    jobs = []
    for e in cfg.eps:
        if order == 3 and e != cfg.eps[0]:
            exp_e = build_inner_expansion(traj, e, order=3, h1=base.h1, inner=base.mod.inner)
        else:
            exp_e = copy.copy(base)
            exp_e.eps = e
        jobs.append((cfg, e, traj, exp_e))
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(cfg.workers) as ex:
            results = list(ex.map(_member, jobs))
    else:
        results = [_member(j) for j in jobs]
    rows = [r for r, _ in results]
    monitors = {f"{r['eps']:.6g}": m for r, m in results}
    fits = {}
    if len(rows) >= 3:
        for key in ErrorReport.METRICS:
            pts = [(r["eps"], r[key]) for r in rows]
            try:
                f = rate_fit(pts)
            except (InsufficientData, NonPositiveError):
                continue
            fits[key] = {"order": f.order, "intercept": f.intercept, "residual": f.residual,
                         "stderr": slope_stderr(pts)}
    else:
        logger.warning("ladder has {} member(s); rate fits skipped", len(rows))
    meta = {"config": asdict(cfg), "monitors": monitors}
    report = ErrorReport(rows, fits, meta)
    for k in fits:
        fits[k]["monotone"] = report.monotone(k)
    report.series = {k: [(r["eps"], r[k]) for r in sorted(rows, key=lambda r: -r["eps"])] for k in ErrorReport.METRICS}
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        report.to_csv(os.path.join(out_dir, "converge.csv"))
        report.fits_csv(os.path.join(out_dir, "fits.csv"))
        for k, pts in report.series.items():
            with open(os.path.join(out_dir, f"series_{k}.dat"), "w") as fh:
                for x, y in pts:
                    fh.write(f"{_fmt(x)} {_fmt(y)}\n")
    return report
