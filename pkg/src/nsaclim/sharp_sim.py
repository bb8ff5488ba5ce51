"""
Front tracking for the sharp-interface limit.

The curve moves with normal velocity V = n . v + H where v solves the
two-phase Stokes problem with traction jump -sigma H n.  Markers are
advanced with Heun's method (second order), then respaced to equal
arclength and refitted.  One-sided normal traces of the Stokes fields are
extracted at every ladder time for the asymptotic construction.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from loguru import logger
from scipy.ndimage import map_coordinates

from .errors import CurvatureBlowup, MissingTrace, StabilityViolation
from .geometry import ClosedCurve, SurfaceOperatorSet, build_curve, wavenumbers
from .stokes import Grid, VelocityField, interface_trace, traction_solve


@dataclass
class SharpConfig:
    """Parameters of a front-tracking run.

    Attributes
    ----------
    curve : ClosedCurve
        Initial interface.
    t_final, dt : float
        Horizon and step.
    grid_n : int
        Stokes grid cells per direction (ignored when ``stokes`` is False).
    sigma : float
        Surface tension multiplying the traction jump.
    stokes : bool
        Couple to two-phase Stokes; False gives pure curvature flow.
    semi_implicit : bool
        Treat the leading curvature symbol implicitly (first order).
    traces : bool
        Extract one-sided normal traces at every ladder time.
    keep_fields : bool
        Keep the Stokes field of every ladder time.
    """

    curve: ClosedCurve
    t_final: float = 0.02
    dt: float = 1e-4
    grid_n: int = 128
    box: float = 1.0
    bc: str = "periodic"
    sigma: float = 2.0 / 3.0
    stokes: bool = True
    semi_implicit: bool = False
    traces: bool = True
    keep_fields: bool = False
    curvature_bound: float = 1e4
    c_stab: float = 1.0
    trace_offsets: tuple = (4, 5, 6, 7, 8, 9, 10)


@dataclass
class SharpState:
    curve: ClosedCurve
    time: float
    stokes_field: Optional[VelocityField] = None
    trace: dict = field(default_factory=dict)


@dataclass
class SharpTrajectory:
    """Time ladder of curves with traces.

    ``traces[i]`` holds arrays on the s-grid of ``curves[i]``:
    H, V, vn, vt, v (2, N), pjump and, when extracted, the one-sided data
    v_plus, v_minus, dn_v_plus, dn_v_minus, dn2_v_plus, dn2_v_minus,
    p_plus, p_minus, dn_p_plus, dn_p_minus.
    """

    times: np.ndarray
    curves: List[ClosedCurve]
    traces: List[dict]
    config: SharpConfig
    fields: List[Optional[VelocityField]] = field(default_factory=list)

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0]) if len(self.times) > 1 else self.config.dt

    def index(self, t: float) -> int:
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > 1e-9 * max(1.0, abs(t)):
            raise KeyError(f"time {t} is not on the ladder")
        return i

    def _time_derivative(self, arrays: List[np.ndarray], i: int) -> np.ndarray:
        n, dt = len(arrays), self.dt
        if n == 1:
            return np.zeros_like(arrays[0])
        if n == 2:
            return (arrays[1] - arrays[0]) / dt
        if i == 0:
            return (-3 * arrays[0] + 4 * arrays[1] - arrays[2]) / (2 * dt)
        if i == n - 1:
            return (3 * arrays[-1] - 4 * arrays[-2] + arrays[-3]) / (2 * dt)
        return (arrays[i + 1] - arrays[i - 1]) / (2 * dt)

    def dXdt(self, i: int) -> np.ndarray:
        return self._time_derivative([c.X(0) for c in self.curves], i)

    def dndt(self, i: int) -> np.ndarray:
        return self._time_derivative([c.normal for c in self.curves], i)

    def operators(self, i: int) -> SurfaceOperatorSet:
        return SurfaceOperatorSet(self.curves[i], self.dXdt(i), self.dndt(i))

    def radius(self) -> np.ndarray:
        """Equivalent radius sqrt(area / pi) along the ladder."""
        return np.sqrt(np.array([c.area for c in self.curves]) / np.pi)

    def require(self, *keys) -> None:
        for k in keys:
            if any(k not in tr for tr in self.traces):
                raise MissingTrace(f"trace {k!r} missing from the trajectory")

    def export(self, out_dir: str) -> None:
        """Write one curve file per ladder time and a trace CSV."""
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "traces.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["# traces v1"])
            w.writerow(["t", "s", "H", "V", "vn", "vt", "pjump"])
            for i, (t, c, tr) in enumerate(zip(self.times, self.curves, self.traces)):
                with open(os.path.join(out_dir, f"curve_{i:05d}.txt"), "w") as fc:
                    fc.write(c.to_text())
                for j, s in enumerate(c.s):
                    w.writerow([repr(float(t)), repr(float(s))] + [repr(float(tr[k][j])) for k in ("H", "V", "vn", "vt", "pjump")])


def _stokes_velocity(curve: ClosedCurve, cfg: SharpConfig, grid: Optional[Grid], time: float):
    if not cfg.stokes or cfg.sigma == 0.0:
        return np.zeros((2, curve.n)), None
    F = traction_solve(curve, -cfg.sigma * curve.H * curve.normal, grid, time=time)
    return interface_trace(F, curve), F


def _sample(field_: VelocityField, pts: np.ndarray):
    """Bilinear interpolation of u, v, p at points (2, P).

    Bilinear rather than spline sampling: spline prefilters ring across the
    smeared pressure jump.
    """
    g = field_.grid
    h = g.h
    mode = "grid-wrap" if g.bc == "periodic" else "nearest"
    x, y = pts[0] / h, pts[1] / h
    u = map_coordinates(field_.u, [x, y - 0.5], order=1, mode=mode)
    v = map_coordinates(field_.v, [x - 0.5, y], order=1, mode=mode)
    p = map_coordinates(field_.p, [x - 0.5, y - 0.5], order=1, mode=mode)
    return np.array([u, v]), p


def one_sided_traces(field_: VelocityField, curve: ClosedCurve, offsets=(4, 5, 6, 7, 8, 9, 10)) -> dict:
    """Quadratic least-squares fits of u, v, p along normals on each side.

    Samples at r = +-k h (k in ``offsets``) stay outside the kernel smear;
    the fit gives the value, first and second normal derivatives at r = 0.
    """
    h = field_.grid.h
    X, nrm = curve.X(0), curve.normal
    out = {}
    for side, sgn in (("plus", 1.0), ("minus", -1.0)):
        r = sgn * h * np.asarray(offsets, dtype=float)
        V = np.vander(r, 3, increasing=True)
        pinv = np.linalg.pinv(V)                      # (3, K)
        vel, pr = [], []
        for rk in r:
            vk, pk = _sample(field_, X + rk * nrm)
            vel.append(vk)
            pr.append(pk)
        vel = np.array(vel)                           # (K, 2, N)
        pr = np.array(pr)                             # (K, N)
        cv = np.einsum("ak,kcn->acn", pinv, vel)
        cp = np.einsum("ak,kn->an", pinv, pr)
        out[f"v_{side}"] = cv[0]
        out[f"dn_v_{side}"] = cv[1]
        out[f"dn2_v_{side}"] = 2 * cv[2]
        out[f"p_{side}"] = cp[0]
        out[f"dn_p_{side}"] = cp[1]
    return out


def _trace_record(curve, vgam, F, cfg):
    H = curve.H
    nrm, tau = curve.normal, curve.tangent
    vn = np.einsum("ij,ij->j", nrm, vgam)
    tr = {"H": H, "v": vgam, "vn": vn, "vt": np.einsum("ij,ij->j", tau, vgam), "V": vn + H}
    if F is not None and cfg.traces:
        tr.update(one_sided_traces(F, curve, cfg.trace_offsets))
        tr["pjump"] = tr["p_plus"] - tr["p_minus"]
    else:
        zero = np.zeros(curve.n)
        z2 = np.zeros((2, curve.n))
        tr.update({"v_plus": vgam, "v_minus": vgam, "dn_v_plus": z2, "dn_v_minus": z2,
                   "dn2_v_plus": z2, "dn2_v_minus": z2, "p_plus": zero, "p_minus": zero,
                   "dn_p_plus": zero, "dn_p_minus": zero,
                   "pjump": cfg.sigma * H if cfg.stokes else zero})
    return tr


def _stable_dt(curve: ClosedCurve, c_stab: float) -> float:
    # Heun on u_t = u_ss / L^2 needs dt (2 pi k_max / L)^2 <= 2
    kmax = curve.n // 2 - 1
    return c_stab * 2.0 * (curve.length / (2 * np.pi * kmax)) ** 2


def step_sharp(state: SharpState, dt: float, cfg: SharpConfig, grid: Optional[Grid] = None) -> SharpState:
    """Advance the interface by one step of length dt."""
    curve = state.curve
    if np.max(np.abs(curve.H)) > cfg.curvature_bound:
        raise CurvatureBlowup(f"max|H| = {np.max(np.abs(curve.H)):.3e} at t = {state.time:.6g}")
    if not cfg.semi_implicit and dt > _stable_dt(curve, cfg.c_stab):
        raise StabilityViolation(f"dt = {dt:.3e} exceeds the explicit curvature bound {_stable_dt(curve, cfg.c_stab):.3e}")
    X0 = curve.X(0)
    v0 = state.trace.get("v") if state.trace else None
    if v0 is None:
        v0, _ = _stokes_velocity(curve, cfg, grid, state.time)
    nrm0 = curve.normal
    if cfg.semi_implicit:
        L2 = curve.length ** 2
        k = wavenumbers(curve.n)
        sym = (2 * np.pi * k) ** 2 / L2
        vn = np.einsum("ij,ij->j", nrm0, v0)
        explicit = X0 + dt * (vn * nrm0 + curve.H * nrm0 - curve.X(2) / L2)
        Xn = np.real(np.fft.ifft(np.fft.fft(explicit, axis=1) / (1 + dt * sym), axis=1))
    else:
        W0 = (np.einsum("ij,ij->j", nrm0, v0) + curve.H) * nrm0
        c1 = ClosedCurve.from_points(X0 + dt * W0, state.time + dt, validate=False)
        v1, _ = _stokes_velocity(c1, cfg, grid, state.time + dt)
        W1 = (np.einsum("ij,ij->j", c1.normal, v1) + c1.H) * c1.normal
        Xn = X0 + 0.5 * dt * (W0 + W1)
    moved = build_curve(np.fft.fft(Xn, axis=1) / curve.n, state.time + dt, validate=True)
    return SharpState(moved.respace(anchor=0.0), state.time + dt)


def run_sharp(cfg: SharpConfig) -> SharpTrajectory:
    """Run the front tracker from ``cfg.curve`` to ``cfg.t_final``."""
    n_steps = int(round(cfg.t_final / cfg.dt))
    if abs(n_steps * cfg.dt - cfg.t_final) > 1e-9 * max(cfg.t_final, 1.0):
        raise ValueError("t_final must be a multiple of dt")
    grid = Grid(cfg.grid_n, cfg.box, cfg.bc) if cfg.stokes else None
    curve = cfg.curve.respace(anchor=0.0).with_time(0.0)
    state = SharpState(curve, 0.0)
    times, curves, traces, fields = [], [], [], []
    for k in range(n_steps + 1):
        t = k * cfg.dt
        vgam, F = _stokes_velocity(state.curve, cfg, grid, t)
        tr = _trace_record(state.curve, vgam, F, cfg)
        state.trace = tr
        times.append(t)
        curves.append(state.curve.with_time(t))
        traces.append(tr)
        fields.append(F if cfg.keep_fields else None)
        if k == n_steps:
            break
        try:
            state = step_sharp(state, cfg.dt, cfg, grid)
        except Exception as exc:
            logger.error("sharp step failed at t = {:.6g}: {}", t, exc)
            raise
    return SharpTrajectory(np.array(times), curves, traces, cfg, fields)
