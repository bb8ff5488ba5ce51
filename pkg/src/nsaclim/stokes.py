"""
Steady Stokes solves on a uniform MAC grid.

Layout on [0, L)^2 with n cells per direction and spacing h = L / n.
Arrays are indexed ``[i, j]`` with axis 0 along x:

* pressure and phase fields at cell centres ((i + 1/2) h, (j + 1/2) h);
* u at x-faces (i h, (j + 1/2) h);
* v at y-faces ((i + 1/2) h, j h).

Periodic grids hold n x n arrays for every component.  Dirichlet grids
(no-slip walls) hold u with shape (n + 1, n) and v with shape (n, n + 1)
whose wall entries are zero.

The periodic solve is an exact Fourier projection.  The Dirichlet solve
runs conjugate gradients on the pressure Schur complement with fast
sine-transform velocity solves.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import fft as sfft

from .errors import ClearanceViolation, GridMismatch, NoConvergence, SingularForcing
from .geometry import ClosedCurve, periodic_resample


@dataclass(frozen=True)
class Grid:
    """Uniform square grid.

    Parameters
    ----------
    n : int
        Cells per direction.
    length : float
        Box side length.
    bc : str
        ``"periodic"`` or ``"dirichlet"``.
    """

    n: int
    length: float = 1.0
    bc: str = "periodic"

    def __post_init__(self):
        if self.bc not in ("periodic", "dirichlet"):
            raise ValueError(f"unknown bc {self.bc!r}")

    @property
    def h(self) -> float:
        return self.length / self.n

    @property
    def centers(self) -> np.ndarray:
        return (np.arange(self.n) + 0.5) * self.h

    def mesh(self):
        """Cell-centre coordinates X, Y of shape (n, n)."""
        return np.meshgrid(self.centers, self.centers, indexing="ij")

    def points(self) -> np.ndarray:
        X, Y = self.mesh()
        return np.column_stack([X.ravel(), Y.ravel()])

    @property
    def u_shape(self):
        return (self.n, self.n) if self.bc == "periodic" else (self.n + 1, self.n)

    @property
    def v_shape(self):
        return (self.n, self.n) if self.bc == "periodic" else (self.n, self.n + 1)

    def u_coords(self):
        m = self.u_shape[0]
        return np.meshgrid(np.arange(m) * self.h, self.centers, indexing="ij")

    def v_coords(self):
        m = self.v_shape[1]
        return np.meshgrid(self.centers, np.arange(m) * self.h, indexing="ij")


@dataclass
class VelocityField:
    """Staggered velocity with cell-centred pressure."""

    u: np.ndarray
    v: np.ndarray
    p: np.ndarray
    grid: Grid
    time: float = 0.0
    info: dict = field(default_factory=dict)

    @classmethod
    def zeros(cls, grid: Grid, time: float = 0.0) -> "VelocityField":
        return cls(np.zeros(grid.u_shape), np.zeros(grid.v_shape), np.zeros((grid.n, grid.n)), grid, time)

    def divergence(self) -> np.ndarray:
        return divergence(self.u, self.v, self.grid)

    def cell_velocity(self) -> np.ndarray:
        """Velocity averaged to cell centres, shape (2, n, n)."""
        if self.grid.bc == "periodic":
            uc = 0.5 * (self.u + np.roll(self.u, -1, axis=0))
            vc = 0.5 * (self.v + np.roll(self.v, -1, axis=1))
        else:
            uc = 0.5 * (self.u[:-1] + self.u[1:])
            vc = 0.5 * (self.v[:, :-1] + self.v[:, 1:])
        return np.array([uc, vc])

    def max_norm(self) -> float:
        return float(max(np.max(np.abs(self.u)), np.max(np.abs(self.v))))

    def scaled(self, lam: float) -> "VelocityField":
        return VelocityField(lam * self.u, lam * self.v, lam * self.p, self.grid, self.time, dict(self.info))

    def __add__(self, other: "VelocityField") -> "VelocityField":
        if other.grid != self.grid:
            raise GridMismatch("fields live on different grids")
        return VelocityField(self.u + other.u, self.v + other.v, self.p + other.p, self.grid, self.time)

    def __sub__(self, other: "VelocityField") -> "VelocityField":
        return self + other.scaled(-1.0)


# -- discrete operators -----------------------------------------------------

def divergence(u: np.ndarray, v: np.ndarray, grid: Grid) -> np.ndarray:
    h = grid.h
    if grid.bc == "periodic":
        return (np.roll(u, -1, axis=0) - u + np.roll(v, -1, axis=1) - v) / h
    return (u[1:] - u[:-1] + v[:, 1:] - v[:, :-1]) / h


def gradient_to_faces(p: np.ndarray, grid: Grid):
    """Backward-difference pressure gradient on the faces."""
    h = grid.h
    if grid.bc == "periodic":
        return (p - np.roll(p, 1, axis=0)) / h, (p - np.roll(p, 1, axis=1)) / h
    gx = np.zeros(grid.u_shape)
    gy = np.zeros(grid.v_shape)
    gx[1:-1] = (p[1:] - p[:-1]) / h
    gy[:, 1:-1] = (p[:, 1:] - p[:, :-1]) / h
    return gx, gy


def laplacian_faces(u: np.ndarray, v: np.ndarray, grid: Grid):
    """Five-point Laplacian of the face velocities (no-slip ghosts on walls)."""
    h2 = grid.h ** 2
    if grid.bc == "periodic":
        def lap(a):
            return (np.roll(a, 1, 0) + np.roll(a, -1, 0) + np.roll(a, 1, 1) + np.roll(a, -1, 1) - 4 * a) / h2
        return lap(u), lap(v)
    lu = np.zeros_like(u)
    a = u
    inner = a[1:-1]
    up = np.concatenate([inner[:, 1:], -inner[:, -1:]], axis=1)
    dn = np.concatenate([-inner[:, :1], inner[:, :-1]], axis=1)
    lu[1:-1] = (a[2:] + a[:-2] + up + dn - 4 * inner) / h2
    lv = np.zeros_like(v)
    b = v
    inner = b[:, 1:-1]
    rt = np.concatenate([inner[1:], -inner[-1:]], axis=0)
    lf = np.concatenate([-inner[:1], inner[:-1]], axis=0)
    lv[:, 1:-1] = (b[:, 2:] + b[:, :-2] + rt + lf - 4 * inner) / h2
    return lu, lv


def grid_inner(a: np.ndarray, b: np.ndarray, grid: Grid) -> float:
    return float(np.sum(a * b) * grid.h ** 2)


def dirichlet_energy(field_: VelocityField) -> float:
    """int grad v : grad v by the discrete pairing -<Lap v, v>."""
    lu, lv = laplacian_faces(field_.u, field_.v, field_.grid)
    return -(grid_inner(lu, field_.u, field_.grid) + grid_inner(lv, field_.v, field_.grid))


# -- solvers ----------------------------------------------------------------

def stokes_solve(fu: np.ndarray, fv: np.ndarray, grid: Grid, time: float = 0.0,
                 mean_tol: float = 1e-6, tol: float = 1e-12, maxiter: int = 2000) -> VelocityField:
    """Solve -Lap v + grad p = f, div v = 0 on the MAC grid.

    Parameters
    ----------
    fu, fv : ndarray
        Face force components (shapes ``grid.u_shape``, ``grid.v_shape``).
    grid : Grid
    mean_tol : float
        Periodic case: a force mean larger than ``mean_tol * max|f|`` raises
        SingularForcing; smaller means are removed and recorded in ``info``.
    tol : float
        Dirichlet case: relative residual of the pressure iteration.

    Raises
    ------
    SingularForcing, NoConvergence
    """
    if fu.shape != grid.u_shape or fv.shape != grid.v_shape:
        raise GridMismatch("force shape does not match the grid")
    if grid.n < 32:
        raise ValueError("grid must be at least 32^2")
    if grid.bc == "periodic":
        return _solve_periodic(fu, fv, grid, time, mean_tol)
    return _solve_dirichlet(fu, fv, grid, time, tol, maxiter)


def _symbols(grid: Grid):
    n, h = grid.n, grid.h
    th = 2 * np.pi * np.fft.fftfreq(n)
    ex = np.exp(1j * th)
    dplus = (ex - 1.0) / h
    dminus = (1.0 - np.conj(ex)) / h
    Dpx, Dpy = dplus[:, None], dplus[None, :]
    Dmx, Dmy = dminus[:, None], dminus[None, :]
    lam = -(4.0 / h ** 2) * (np.sin(th / 2)[:, None] ** 2 + np.sin(th / 2)[None, :] ** 2)
    return Dpx, Dpy, Dmx, Dmy, lam


def _solve_periodic(fu, fv, grid, time, mean_tol):
    mean = (float(np.mean(fu)), float(np.mean(fv)))
    scale = max(np.max(np.abs(fu)), np.max(np.abs(fv)), 1e-300)
    if max(abs(mean[0]), abs(mean[1])) > mean_tol * scale:
        raise SingularForcing(mean)
    Fu, Fv = np.fft.fft2(fu), np.fft.fft2(fv)
    Dpx, Dpy, Dmx, Dmy, lam = _symbols(grid)
    lam_safe = lam.copy()
    lam_safe[0, 0] = 1.0
    P = (Dpx * Fu + Dpy * Fv) / lam_safe
    P[0, 0] = 0.0
    U = (Fu - Dmx * P) / (-lam_safe)
    V = (Fv - Dmy * P) / (-lam_safe)
    U[0, 0] = V[0, 0] = 0.0
    out = VelocityField(np.real(np.fft.ifft2(U)), np.real(np.fft.ifft2(V)), np.real(np.fft.ifft2(P)), grid, time)
    out.info["removed_mean"] = mean
    return out


class _DirichletOps:
    """Fast inverse of the no-slip vector Laplacian by sine transforms."""

    def __init__(self, grid: Grid):
        n, h = grid.n, grid.h
        k1 = np.arange(1, n)          # DST-I on nodes 1..n-1
        k2 = np.arange(1, n + 1)      # DST-II on cells 0..n-1
        e1 = (2 - 2 * np.cos(np.pi * k1 / n)) / h ** 2
        e2 = (2 - 2 * np.cos(np.pi * k2 / n)) / h ** 2
        self.eig_u = e1[:, None] + e2[None, :]
        self.eig_v = e2[:, None] + e1[None, :]

    def solve_u(self, f):
        """Solve -Lap u = f for interior u faces (shape (n-1, n))."""
        g = sfft.dst(sfft.dst(f, type=1, axis=0), type=2, axis=1)
        g /= self.eig_u
        return sfft.idst(sfft.idst(g, type=2, axis=1), type=1, axis=0)

    def solve_v(self, f):
        g = sfft.dst(sfft.dst(f, type=2, axis=0), type=1, axis=1)
        g /= self.eig_v
        return sfft.idst(sfft.idst(g, type=1, axis=1), type=2, axis=0)


_OPS_CACHE: dict = {}


def _solve_dirichlet(fu, fv, grid, time, tol, maxiter):
    key = (grid.n, grid.length)
    if key not in _OPS_CACHE:
        _OPS_CACHE[key] = _DirichletOps(grid)
    ops = _OPS_CACHE[key]

    def vel(ru, rv):
        u = np.zeros(grid.u_shape)
        v = np.zeros(grid.v_shape)
        u[1:-1] = ops.solve_u(ru[1:-1])
        v[:, 1:-1] = ops.solve_v(rv[:, 1:-1])
        return u, v

    def schur(p):
        gx, gy = gradient_to_faces(p, grid)
        u, v = vel(gx, gy)
        return divergence(u, v, grid)

    u0, v0 = vel(fu, fv)
    b = divergence(u0, v0, grid)
    b -= b.mean()
    # CG on the (positive semidefinite) Schur complement div A^{-1} grad
    p = np.zeros((grid.n, grid.n))
    r = b.copy()
    d = r.copy()
    rr = float(np.sum(r * r))
    bnorm = math.sqrt(rr) if rr > 0 else 1.0
    it = 0
    while math.sqrt(rr) > tol * bnorm and rr > 0:
        if it >= maxiter:
            raise NoConvergence(f"pressure iteration stalled at residual {math.sqrt(rr) / bnorm:.2e}")
        Sd = schur(d)
        alpha = rr / float(np.sum(d * Sd))
        p += alpha * d
        r -= alpha * Sd
        r -= r.mean()
        rr_new = float(np.sum(r * r))
        d = r + (rr_new / rr) * d
        rr = rr_new
        it += 1
    p -= p.mean()
    gx, gy = gradient_to_faces(p, grid)
    u, v = vel(fu - gx, fv - gy)
    out = VelocityField(u, v, p, grid, time)
    out.info["iterations"] = it
    return out


# -- capillary and tensor forces --------------------------------------------

def pad_cells(c: np.ndarray, grid: Grid, layers: int = 2, wall_value: float = 0.0) -> np.ndarray:
    """Pad a cell field periodically, or by odd reflection about the wall value."""
    if grid.bc == "periodic":
        return np.pad(c, layers, mode="wrap")
    out = np.pad(c, layers, mode="symmetric")
    out = 2.0 * wall_value - out
    out[layers:-layers, layers:-layers] = c
    # corners: reflect twice so they are consistent along both walls
    return out


def cell_gradient(c_pad: np.ndarray, h: float) -> np.ndarray:
    """Centred gradient of a padded cell field; result loses one layer."""
    gx = (c_pad[2:, 1:-1] - c_pad[:-2, 1:-1]) / (2 * h)
    gy = (c_pad[1:-1, 2:] - c_pad[1:-1, :-2]) / (2 * h)
    return np.array([gx, gy])


def tensor_force(T: np.ndarray, grid: Grid, scale: float = 1.0):
    """Face force ``-scale * div T`` for a cell tensor with one ghost layer.

    Parameters
    ----------
    T : ndarray
        Shape (2, 2, n + 2, n + 2); ``T[a, b]`` is the (a, b) entry.
    """
    h = grid.h
    Fx = (T[0, 0, 2:, 1:-1] - T[0, 0, :-2, 1:-1] + T[0, 1, 1:-1, 2:] - T[0, 1, 1:-1, :-2]) / (2 * h)
    Fy = (T[1, 0, 2:, 1:-1] - T[1, 0, :-2, 1:-1] + T[1, 1, 1:-1, 2:] - T[1, 1, 1:-1, :-2]) / (2 * h)
    Fx *= -scale
    Fy *= -scale
    return cells_to_faces(Fx, Fy, grid)


def cells_to_faces(Fx: np.ndarray, Fy: np.ndarray, grid: Grid):
    """Average cell-centred components to the faces (walls stay zero)."""
    if grid.bc == "periodic":
        return 0.5 * (Fx + np.roll(Fx, 1, axis=0)), 0.5 * (Fy + np.roll(Fy, 1, axis=1))
    fu = np.zeros(grid.u_shape)
    fv = np.zeros(grid.v_shape)
    fu[1:-1] = 0.5 * (Fx[1:] + Fx[:-1])
    fv[:, 1:-1] = 0.5 * (Fy[:, 1:] + Fy[:, :-1])
    return fu, fv


def capillary_force(c: np.ndarray, eps: float, grid: Grid, wall_value: float = -1.0):
    """Face discretization of -eps div(grad c (x) grad c).

    Centred differences at cell centres, then averaged to the faces.  On
    Dirichlet grids the phase field is reflected about ``wall_value``.
    """
    cp = pad_cells(c, grid, 2, wall_value)
    g = cell_gradient(cp, grid.h)
    T = np.einsum("a...,b...->ab...", g, g)
    return tensor_force(T, grid, eps)


def face_curl(fu: np.ndarray, fv: np.ndarray, grid: Grid) -> np.ndarray:
    """Discrete curl d_x f_v - d_y f_u at the grid nodes (periodic)."""
    h = grid.h
    return (fv - np.roll(fv, 1, axis=0)) / h - (fu - np.roll(fu, 1, axis=1)) / h


# -- immersed-boundary spreading --------------------------------------------

def delta_weights(x: np.ndarray, origin: float, h: float):
    """Four-point cosine kernel weights.

    Returns the first stencil index (integer array) and weights (M, 4) for
    nodes located at ``origin + i h``.
    """
    xi = (x - origin) / h
    i0 = np.floor(xi).astype(int) - 1
    r = xi[:, None] - (i0[:, None] + np.arange(4)[None, :])
    w = 0.25 * (1.0 + np.cos(0.5 * np.pi * r))
    w[np.abs(r) >= 2.0] = 0.0
    return i0, w


def _stencil(grid: Grid, X: np.ndarray, comp: int):
    """Flat indices and weights of the kernel for one staggered component."""
    h = grid.h
    shape = grid.u_shape if comp == 0 else grid.v_shape
    ox, oy = (0.0, 0.5 * h) if comp == 0 else (0.5 * h, 0.0)
    ix, wx = delta_weights(X[0], ox, h)
    iy, wy = delta_weights(X[1], oy, h)
    I = ix[:, None, None] + np.arange(4)[None, :, None] + 0 * np.arange(4)[None, None, :]
    J = iy[:, None, None] + 0 * np.arange(4)[None, :, None] + np.arange(4)[None, None, :]
    if grid.bc == "periodic":
        I %= shape[0]
        J %= shape[1]
    elif I.min() < 0 or J.min() < 0 or I.max() >= shape[0] or J.max() >= shape[1]:
        raise ClearanceViolation("kernel support leaves the domain")
    W = wx[:, :, None] * wy[:, None, :]
    return np.ravel_multi_index((I, J), shape), W


@dataclass
class Markers:
    """Lagrangian markers on a curve with arclength weights."""

    X: np.ndarray      # (2, M)
    ds: np.ndarray     # (M,)
    s: np.ndarray      # (M,)


def curve_markers(curve: ClosedCurve, h: float, factor: float = 0.5) -> Markers:
    """Markers with spacing at most ``factor * h`` (trigonometric upsampling)."""
    m = max(curve.n, int(2 * math.ceil(curve.length / (factor * h) / 2)))
    s = np.arange(m) / m
    X = curve.dense(m)
    sp = np.hypot(*periodic_resample(curve.X(1), m, axis=1))
    return Markers(X, sp / m, s)


def spread(q: np.ndarray, markers: Markers, grid: Grid):
    """Spread a density q (2, M) per unit length to face force arrays."""
    out = []
    for comp, shape in ((0, grid.u_shape), (1, grid.v_shape)):
        idx, W = _stencil(grid, markers.X, comp)
        vals = (q[comp] * markers.ds)[:, None, None] * W / grid.h ** 2
        f = np.zeros(shape[0] * shape[1])
        np.add.at(f, idx.ravel(), vals.ravel())
        out.append(f.reshape(shape))
    return out[0], out[1]


def interpolate(u: np.ndarray, v: np.ndarray, markers: Markers, grid: Grid) -> np.ndarray:
    """Adjoint of :func:`spread`: velocity at the markers, shape (2, M)."""
    res = []
    for comp, a in ((0, u), (1, v)):
        idx, W = _stencil(grid, markers.X, comp)
        res.append(np.sum(a.ravel()[idx] * W, axis=(1, 2)))
    return np.array(res)


def check_clearance(curve: ClosedCurve, grid: Grid, delta: float) -> None:
    if grid.bc == "periodic":
        return
    x, y = curve.dense(4 * curve.n)
    clear = min(x.min(), y.min(), grid.length - x.max(), grid.length - y.max())
    if clear < 3 * delta:
        raise ClearanceViolation(f"interface clearance {clear:.3g} < 3 delta = {3 * delta:.3g}")


def traction_solve(curve: ClosedCurve, traction: np.ndarray, grid: Grid, delta: Optional[float] = None,
                   time: float = 0.0) -> VelocityField:
    """Two-phase Stokes problem with a prescribed traction jump on the curve.

    Parameters
    ----------
    curve : ClosedCurve
    traction : ndarray
        Jump density (2, N) on the curve's s-grid (force per unit length).
        The jump [2Dv - pI] n = a is realized by the body force -a delta_Gamma.
    grid : Grid
    delta : float, optional
        Tube half-width used for the clearance check (Dirichlet grids).
    """
    if delta is not None:
        check_clearance(curve, grid, delta)
    traction = np.asarray(traction, dtype=float)
    mk = curve_markers(curve, grid.h)
    q = periodic_resample(traction, mk.s.size, axis=1)
    fu, fv = spread(-q, mk, grid)
    if grid.bc == "periodic":
        # the discrete total force of a closed-curve traction is round-off size
        fu -= fu.mean()
        fv -= fv.mean()
    out = stokes_solve(fu, fv, grid, time=time)
    out.info["markers"] = mk.s.size
    return out


def interface_trace(field_: VelocityField, curve: ClosedCurve, m: Optional[int] = None) -> np.ndarray:
    """Velocity on the curve s-grid by kernel interpolation, shape (2, N)."""
    mk = curve_markers(curve, field_.grid.h)
    vals = interpolate(field_.u, field_.v, mk, field_.grid)
    return periodic_resample(vals, curve.n if m is None else m, axis=1)


def pressure_jump(field_: VelocityField, curve: ClosedCurve, band: float = 4.0, width: float = 12.0) -> float:
    """Mean outer minus mean inner pressure, sampled |d| in [band h, width h]."""
    from .geometry import TubularChart

    h = field_.grid.h
    delta = min(width * h, 0.99 / (3 * np.max(np.abs(curve.H))))
    chart = TubularChart(curve, delta)
    c = chart.locate(field_.grid.points())
    d = c.d.reshape(field_.grid.n, field_.grid.n)
    outer = (d > band * h) & (d < width * h)
    inner = (d < -band * h) & (d > -width * h)
    return float(field_.p[outer].mean() - field_.p[inner].mean())
