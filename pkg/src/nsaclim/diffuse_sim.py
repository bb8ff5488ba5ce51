"""
Diffuse-interface solver for the coupled Stokes/Allen-Cahn system

    -Lap v + grad p = -eps div(grad c (x) grad c),   div v = 0,
    c_t + v . grad c = Lap c - f'(c) / eps^2.

The phase field lives at cell centres of the MAC grid used by the Stokes
module.  Each step is quasi-static in v: the Stokes problem is solved with
the capillary force of the current c, then c is advanced.

Two time integrators are provided:

* ``"strang"`` (default): advection by SSP-RK2 with a minmod-limited
  upwind flux, then Strang splitting of reaction and diffusion.  The
  reaction is integrated exactly for the quartic well and the diffusion by
  the exact semigroup of the 5-point Laplacian (FFT or sine transform).
* ``"stabilized"``: linearly implicit Euler with the stabilizing term
  ``S (c^{n+1} - c^n) / eps^2``, S = max f'' on [-1.1, 1.1].  Energy stable
  and bound preserving, but its time error scales like S dt / eps^2.

Both integrators keep |c| <= 1 for data in [-1, 1].
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from loguru import logger
from scipy import fft as sfft

from .errors import ResolutionError, StabilityViolation
from .geometry import ClosedCurve, TubularChart, circle
from .profile1d import DoubleWell, OptimalProfile, optimal_profile
from .stokes import Grid, VelocityField, capillary_force, pad_cells, stokes_solve


# -- phase field container --------------------------------------------------

@dataclass
class PhaseField:
    """Cell-centred phase field.

    Attributes
    ----------
    c : ndarray
        Values of shape (n, n).
    grid : Grid
    eps : float
    time : float
    """

    c: np.ndarray
    grid: Grid
    eps: float
    time: float = 0.0

    def copy(self) -> "PhaseField":
        return PhaseField(self.c.copy(), self.grid, self.eps, self.time)

    @property
    def wall_value(self) -> float:
        return -1.0


def smooth_step(x):
    """C-infinity step: 0 for x <= 0, 1 for x >= 1, max slope 2."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    out[x >= 1.0] = 1.0
    mid = (x > 0.0) & (x < 1.0)
    xm = x[mid]
    a = np.exp(-1.0 / xm)
    b = np.exp(-1.0 / (1.0 - xm))
    out[mid] = a / (a + b)
    return out


def cutoff(d, delta: float):
    """zeta(d) = 1 for |d| <= delta, 0 for |d| >= 2 delta."""
    return 1.0 - smooth_step((np.abs(np.asarray(d, dtype=float)) - delta) / delta)


def tube_chart(curve: ClosedCurve, delta: float) -> TubularChart:
    """Chart whose exact zone covers the cutoff support |d| < 2 delta.

    The chart half-width is shrunk below delta when 3 delta max|H| > 1, which
    keeps Newton exact out to 3 * (chart width) > 2 delta.

    Raises
    ------
    ValueError
        If the cutoff support 2 delta reaches the focal distance 1 / max|H|.
    """
    kmax = float(np.max(np.abs(curve.H)))
    if 2.0 * delta * kmax >= 1.0:
        raise ValueError(f"cutoff support 2 delta = {2 * delta:.4g} exceeds the focal distance {1 / kmax:.4g}")
    width = min(delta, (1.0 - 1e-9) / (3.0 * kmax)) if kmax > 0 else delta
    return TubularChart(curve, width)


def grid_distance(curve: ClosedCurve, grid: Grid, delta: float, points: Optional[np.ndarray] = None):
    """Signed distance and footpoint parameter at every cell centre.

    Cells outside the tube carry the (signed) seed distance, which is only
    used through the cutoff where it vanishes.
    """
    chart = tube_chart(curve, delta)
    pts = grid.points() if points is None else points
    co = chart.locate(pts)
    if points is not None:
        return co.d, co.s, co.inside, chart
    n = grid.n
    return co.d.reshape(n, n), co.s.reshape(n, n), co.inside.reshape(n, n), chart


def check_resolution(grid: Grid, eps: float) -> None:
    if grid.h > eps / 4 * (1 + 1e-12):
        raise ResolutionError(f"grid spacing {grid.h:.4g} exceeds eps/4 = {eps / 4:.4g}")


def init_phase(curve0: ClosedCurve, eps: float, profile: Optional[OptimalProfile], delta: float,
               grid: Grid) -> PhaseField:
    """Well-prepared initial phase field.

    ``c0 = zeta(d) theta0(d / eps) + (1 - zeta(d)) sign(d)`` with d the
    signed distance to ``curve0`` (positive outside).

    Raises
    ------
    ResolutionError
        If h > eps / 4.
    """
    check_resolution(grid, eps)
    if not eps < delta:
        raise ValueError("eps must be smaller than delta")
    profile = profile or optimal_profile()
    d, _, _, _ = grid_distance(curve0, grid, delta)
    z = cutoff(d, delta)
    c = z * profile.theta_at(d / eps) + (1.0 - z) * np.where(d >= 0, 1.0, -1.0)
    return PhaseField(c, grid, eps, curve0.time_tag)


# -- discrete operators -----------------------------------------------------

def laplacian(c: np.ndarray, grid: Grid, wall_value: float = -1.0) -> np.ndarray:
    """5-point Laplacian; Dirichlet walls by odd reflection about wall_value."""
    cp = pad_cells(c, grid, 1, wall_value)
    return (cp[2:, 1:-1] + cp[:-2, 1:-1] + cp[1:-1, 2:] + cp[1:-1, :-2] - 4 * c) / grid.h ** 2


def face_gradients(c: np.ndarray, grid: Grid, wall_value: float = -1.0):
    """Forward differences on all faces (x-faces, y-faces), wall faces included."""
    cp = pad_cells(c, grid, 1, wall_value)
    h = grid.h
    if grid.bc == "periodic":
        gx = (cp[2:, 1:-1] - c) / h
        gy = (cp[1:-1, 2:] - c) / h
    else:
        gx = np.diff(cp[:, 1:-1], axis=0) / h
        gy = np.diff(cp[1:-1, :], axis=1) / h
    return gx, gy


def energy(c: np.ndarray, eps: float, grid: Grid, well: Optional[DoubleWell] = None) -> float:
    """Discrete E = sum h^2 (eps |D c|^2 / 2 + f(c) / eps).

    The gradient part pairs with the 5-point Laplacian:
    sum |D c|^2 = -<c - w, Lap c> for Dirichlet wall value w.
    """
    well = well or DoubleWell.quartic()
    gx, gy = face_gradients(c, grid)
    h2 = grid.h ** 2
    return float(h2 * (0.5 * eps * (np.sum(gx ** 2) + np.sum(gy ** 2)) + np.sum(well.f(c)) / eps))


def chemical_potential(c: np.ndarray, eps: float, grid: Grid, well: Optional[DoubleWell] = None) -> np.ndarray:
    """mu = -eps Lap c + f'(c) / eps."""
    well = well or DoubleWell.quartic()
    return -eps * laplacian(c, grid) + well.df(c) / eps


def velocity_gradient_sq(field_: VelocityField) -> float:
    """Discrete int |grad v|^2 (pairs with the Stokes Laplacian)."""
    from .stokes import dirichlet_energy
    return dirichlet_energy(field_)


# -- sub-steps ----------------------------------------------------------------

def quartic_reaction(c: np.ndarray, t: float, eps: float) -> np.ndarray:
    """Exact flow of c' = -f'(c) / eps^2 for f = (1 - c^2)^2 / 8."""
    tau = t / (2 * eps * eps)
    e = math.exp(tau)
    return c * e / np.sqrt(1.0 + c * c * (e * e - 1.0))


def generic_reaction(c: np.ndarray, t: float, eps: float, well: DoubleWell, substeps: Optional[int] = None):
    """RK4 for c' = -f'(c) / eps^2 with steps below 0.1 eps^2 / f''(1)."""
    if substeps is None:
        rate = float(np.max(np.abs(well.d2f(np.linspace(-1.1, 1.1, 221)))))
        substeps = max(1, int(math.ceil(t * rate / (0.1 * eps * eps))))
    k = t / substeps
    g = lambda u: -well.df(u) / (eps * eps)
    for _ in range(substeps):
        a = g(c)
        b = g(c + 0.5 * k * a)
        d = g(c + 0.5 * k * b)
        e = g(c + k * d)
        c = c + k * (a + 2 * b + 2 * d + e) / 6
    return c


def _laplacian_symbol(grid: Grid) -> np.ndarray:
    n, h = grid.n, grid.h
    if grid.bc == "periodic":
        k = np.arange(n)
        lam = -4.0 / h ** 2 * np.sin(np.pi * k / n) ** 2
    else:
        # ghost reflection at the wall: eigenvectors sin(pi k (i + 1/2) / n), k = 1..n
        k = np.arange(1, n + 1)
        lam = -4.0 / h ** 2 * np.sin(0.5 * np.pi * k / n) ** 2
    return lam[:, None] + lam[None, :]


def heat_semigroup(c: np.ndarray, t: float, grid: Grid, wall_value: float = -1.0, shift: float = 0.0) -> np.ndarray:
    """Apply (exp or resolvent of) the discrete Laplacian.

    With ``shift == 0`` returns exp(t Lap_h) c.  Otherwise solves
    ``(1 + shift - t Lap_h) u = c`` (used by the stabilized scheme).
    """
    sym = _laplacian_symbol(grid)
    mult = np.exp(t * sym) if shift == 0.0 else 1.0 / (1.0 + shift - t * sym)
    if grid.bc == "periodic":
        return np.real(np.fft.ifft2(np.fft.fft2(c) * mult))
    u = c - wall_value
    out = sfft.idstn(sfft.dstn(u, type=2) * mult, type=2)
    scale = 1.0 if shift == 0.0 else 1.0 / (1.0 + shift)
    return out + wall_value * scale


def _minmod(a, b):
    return np.where(a * b > 0, np.sign(a) * np.minimum(np.abs(a), np.abs(b)), 0.0)


def _full_faces(field_: VelocityField):
    """Face velocities with the closing periodic face appended: (n+1, n), (n, n+1)."""
    u, v = field_.u, field_.v
    if field_.grid.bc == "periodic":
        u = np.concatenate([u, u[:1]], axis=0)
        v = np.concatenate([v, v[:, :1]], axis=1)
    return u, v


def advection_rhs(c: np.ndarray, uf: np.ndarray, vf: np.ndarray, grid: Grid, wall_value: float = -1.0) -> np.ndarray:
    """-div(v c) with minmod-limited upwind face values."""
    cp = pad_cells(c, grid, 2, wall_value)
    n, h = grid.n, grid.h
    # x direction: cells -1..n, i.e. padded rows 1..n+2
    row = cp[:, 2:-2]
    cx = row[1:n + 3]
    sx = _minmod(row[2:n + 4] - cx, cx - row[0:n + 2])
    left = cx[:-1] + 0.5 * sx[:-1]   # from cell i-1 at face i
    right = cx[1:] - 0.5 * sx[1:]    # from cell i at face i
    Fx = uf * np.where(uf > 0, left, right)
    col = cp[2:-2, :]
    cy = col[:, 1:n + 3]
    sy = _minmod(col[:, 2:n + 4] - cy, cy - col[:, 0:n + 2])
    below = cy[:, :-1] + 0.5 * sy[:, :-1]
    above = cy[:, 1:] - 0.5 * sy[:, 1:]
    Fy = vf * np.where(vf > 0, below, above)
    return -((Fx[1:] - Fx[:-1]) + (Fy[:, 1:] - Fy[:, :-1])) / h


def advect(c: np.ndarray, field_: VelocityField, dt: float, cfl: float = 0.25) -> np.ndarray:
    """SSP-RK2 advection, sub-stepped to keep (|u| + |v|) dt / h <= cfl."""
    grid = field_.grid
    uf, vf = _full_faces(field_)
    speed = float(np.max(np.abs(uf)) + np.max(np.abs(vf)))
    if speed == 0.0:
        return c
    m = max(1, int(math.ceil(dt * speed / (cfl * grid.h))))
    k = dt / m
    for _ in range(m):
        c1 = c + k * advection_rhs(c, uf, vf, grid)
        c = 0.5 * (c + c1 + k * advection_rhs(c1, uf, vf, grid))
    return c


# -- solver -------------------------------------------------------------------

@dataclass
class DiffuseConfig:
    """Parameters of a diffuse-interface run.

    Attributes
    ----------
    epsilon : float
    grid_n : int
        Cells per direction (h = box / grid_n must be <= eps / 4).
    dt : float
        Requested step; reduced so that ``output_every`` is a multiple.
    t_final : float
    bc : str
        ``"periodic"`` or ``"dirichlet"``.
    delta : float
        Cutoff width of the initial data.
    output_every : float
        Snapshot interval in time units.
    seed_curve : ClosedCurve, optional
        Initial interface (default: circle R = 0.3 centred in the box).
    scheme : str
        ``"strang"`` or ``"stabilized"``.
    stokes : bool
        Couple to Stokes; False freezes v = 0.
    """

    epsilon: float = 0.08
    grid_n: int = 64
    dt: float = 1e-4
    t_final: float = 0.02
    bc: str = "periodic"
    delta: float = 0.1
    output_every: float = 0.005
    seed_curve: Optional[ClosedCurve] = None
    box: float = 1.0
    scheme: str = "strang"
    stokes: bool = True
    c_stab: float = 1.0
    growth_bound: float = 10.0
    keep_velocity: bool = True

    def curve(self) -> ClosedCurve:
        if self.seed_curve is not None:
            return self.seed_curve
        return circle(0.3, (0.5 * self.box, 0.5 * self.box), n=128)

    def grid(self) -> Grid:
        return Grid(self.grid_n, self.box, self.bc)

    def step_plan(self):
        """(dt, steps per output, number of outputs)."""
        n_out = max(1, int(round(self.t_final / self.output_every))) if self.t_final > 0 else 0
        interval = self.t_final / n_out if n_out else 0.0
        per = max(1, int(math.ceil(interval / self.dt - 1e-9))) if n_out else 0
        return (interval / per if n_out else self.dt), per, n_out


@dataclass
class DiffuseState:
    """Phase field, velocity and monitor accumulators."""

    phase: PhaseField
    velocity: Optional[VelocityField]
    time: float
    energy0: float
    energies: List[float] = field(default_factory=list)
    dissipated: float = 0.0
    max_abs: List[float] = field(default_factory=list)
    bound: float = 1.0
    last_rate: Optional[float] = None

    @property
    def c(self) -> np.ndarray:
        return self.phase.c

    @property
    def eps(self) -> float:
        return self.phase.eps


def stabilization_constant(well: DoubleWell) -> float:
    return float(np.max(well.d2f(np.linspace(-1.1, 1.1, 2201))))


def solve_velocity(c: np.ndarray, eps: float, grid: Grid, time: float) -> VelocityField:
    fu, fv = capillary_force(c, eps, grid, wall_value=-1.0)
    return stokes_solve(fu, fv, grid, time)


def dissipation_rate(c: np.ndarray, vel: Optional[VelocityField], eps: float, grid: Grid,
                     well: Optional[DoubleWell] = None) -> float:
    """int |grad v|^2 + |mu|^2 / eps."""
    mu = chemical_potential(c, eps, grid, well)
    rate = float(grid.h ** 2 * np.sum(mu ** 2) / eps)
    if vel is not None:
        rate += velocity_gradient_sq(vel)
    return rate


def step(state: DiffuseState, dt: float, cfg: DiffuseConfig, well: Optional[DoubleWell] = None) -> DiffuseState:
    """Advance (c, v) by one step of length dt."""
    well = well or DoubleWell.quartic()
    ph = state.phase
    grid, eps = ph.grid, ph.eps
    c = ph.c
    vel = solve_velocity(c, eps, grid, state.time) if cfg.stokes else None
    if cfg.scheme == "strang":
        if vel is not None:
            c = advect(c, vel, dt)
        react = (lambda u, t: quartic_reaction(u, t, eps)) if well.name == "quartic" else \
            (lambda u, t: generic_reaction(u, t, eps, well))
        c = react(c, 0.5 * dt)
        c = heat_semigroup(c, dt, grid)
        c = react(c, 0.5 * dt)
    elif cfg.scheme == "stabilized":
        if dt > cfg.c_stab * eps ** 2 * 1e6:
            raise StabilityViolation("dt far beyond the configured eps^2 scale")
        S = stabilization_constant(well)
        a = dt / eps ** 2
        rhs = c - a * well.df(c)
        if vel is not None:
            rhs = rhs + dt * advection_rhs(c, *_full_faces(vel), grid)
        c = heat_semigroup(rhs + a * S * c, dt, grid, shift=a * S)
    else:
        raise ValueError(f"unknown scheme {cfg.scheme!r}")
    m = float(np.max(np.abs(c)))
    if not np.isfinite(m) or m > cfg.growth_bound:
        raise StabilityViolation(f"max|c| = {m:.3e} at t = {state.time + dt:.6g}")
    rate0 = state.last_rate if state.last_rate is not None else dissipation_rate(ph.c, vel, eps, grid, well)
    new_phase = PhaseField(c, grid, eps, state.time + dt)
    rate1 = dissipation_rate(c, vel, eps, grid, well)
    out = DiffuseState(new_phase, vel, state.time + dt, state.energy0, state.energies, state.dissipated
                       + 0.5 * dt * (rate0 + rate1), state.max_abs, state.bound, rate1)
    out.energies.append(energy(c, eps, grid, well))
    out.max_abs.append(m)
    return out


@dataclass
class DiffuseRun:
    """Snapshots and monitor report of a diffuse run."""

    times: np.ndarray
    phases: List[np.ndarray]
    velocities: List[Optional[VelocityField]]
    config: DiffuseConfig
    report: dict


def initial_state(cfg: DiffuseConfig, profile: Optional[OptimalProfile] = None,
                  well: Optional[DoubleWell] = None) -> DiffuseState:
    well = well or DoubleWell.quartic()
    grid = cfg.grid()
    ph = init_phase(cfg.curve(), cfg.epsilon, profile, cfg.delta, grid)
    e0 = energy(ph.c, cfg.epsilon, grid, well)
    m0 = float(np.max(np.abs(ph.c)))
    return DiffuseState(ph, None, 0.0, e0, [e0], 0.0, [m0], max(m0, 1.0))


def run(cfg: DiffuseConfig, profile: Optional[OptimalProfile] = None, well: Optional[DoubleWell] = None,
        initial: Optional[np.ndarray] = None) -> DiffuseRun:
    """Integrate to ``cfg.t_final`` recording snapshots every ``output_every``.

    The report holds the energy ledger E(t) + int dissipation, the energy
    and max|c| histories and the max-principle verdict.
    """
    well = well or DoubleWell.quartic()
    state = initial_state(cfg, profile, well)
    if initial is not None:
        state.phase.c = np.array(initial, dtype=float)
        state.energy0 = energy(state.phase.c, cfg.epsilon, cfg.grid(), well)
        state.energies = [state.energy0]
        state.max_abs = [float(np.max(np.abs(initial)))]
        state.bound = max(state.max_abs[0], 1.0)
    dt, per, n_out = cfg.step_plan()
    grid = cfg.grid()

    def snap_velocity(st):
        if not (cfg.stokes and cfg.keep_velocity):
            return None
        return solve_velocity(st.phase.c, cfg.epsilon, grid, st.time)

    times, phases, vels = [0.0], [state.phase.c.copy()], [snap_velocity(state)]
    ledger = [state.energy0]
    k = 0
    for j in range(n_out):
        for _ in range(per):
            try:
                state = step(state, dt, cfg, well)
            except Exception as exc:
                logger.error("diffuse step failed at t = {:.6g}: {}", state.time, exc)
                raise
            k += 1
            ledger.append(state.energies[-1] + state.dissipated)
        t = (j + 1) * per * dt
        state.time = t
        state.phase.time = t
        times.append(t)
        phases.append(state.phase.c.copy())
        vels.append(snap_velocity(state))
    max_hist = np.array(state.max_abs)
    report = {
        "dt": dt,
        "steps": k,
        "energy0": state.energy0,
        "energy_final": state.energies[-1],
        "energies": np.array(state.energies),
        "ledger": np.array(ledger),
        "dissipated": state.dissipated,
        "max_abs": max_hist,
        "bound": state.bound,
        "max_principle_ok": bool(np.max(max_hist) <= state.bound + 1e-6),
        "energy_ok": bool(state.energies[-1] <= state.energy0 * (1 + 1e-6)),
    }
    if not report["max_principle_ok"]:
        logger.warning("maximum principle violated: max|c| = {:.8f}", float(np.max(max_hist)))
    return DiffuseRun(np.array(times), phases, vels, cfg, report)


# -- interface diagnostics ----------------------------------------------------

def zero_level_points(c: np.ndarray, grid: Grid) -> np.ndarray:
    """Sign changes of c along grid lines, located by linear interpolation."""
    x = grid.centers
    pts = []
    a, b = c[:-1, :], c[1:, :]
    i, j = np.nonzero(a * b < 0)
    th = a[i, j] / (a[i, j] - b[i, j])
    pts.append(np.column_stack([x[i] + th * grid.h, x[j]]))
    a, b = c[:, :-1], c[:, 1:]
    i, j = np.nonzero(a * b < 0)
    th = a[i, j] / (a[i, j] - b[i, j])
    pts.append(np.column_stack([x[i], x[j] + th * grid.h]))
    return np.concatenate(pts, axis=0)


def fit_circle(points: np.ndarray):
    """Algebraic least-squares circle fit; returns (center, radius)."""
    P = np.asarray(points, dtype=float)
    if len(P) < 3:
        raise ValueError("need at least three points")
    A = np.column_stack([2 * P[:, 0], 2 * P[:, 1], np.ones(len(P))])
    rhs = np.sum(P ** 2, axis=1)
    (cx, cy, k), *_ = np.linalg.lstsq(A, rhs, rcond=None)
    return np.array([cx, cy]), float(np.sqrt(k + cx * cx + cy * cy))


def fit_radial_fourier(points: np.ndarray, center, modes: int = 4) -> np.ndarray:
    """Least-squares fit r(phi) = a0 + sum (a_k cos k phi + b_k sin k phi)."""
    d = np.asarray(points) - np.asarray(center)[None, :]
    phi = np.arctan2(d[:, 1], d[:, 0])
    r = np.hypot(d[:, 0], d[:, 1])
    cols = [np.ones_like(phi)]
    for k in range(1, modes + 1):
        cols += [np.cos(k * phi), np.sin(k * phi)]
    coef, *_ = np.linalg.lstsq(np.column_stack(cols), r, rcond=None)
    return coef


def interface_radius(c: np.ndarray, grid: Grid) -> float:
    return fit_circle(zero_level_points(c, grid))[1]
