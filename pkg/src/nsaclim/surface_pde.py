"""
Linear parabolic equations on an evolving closed curve.

All equations are written for functions of the curve parameter s on the
uniform grid of the moving curve,

    D_t h + w . grad_G h - Lap_G h + a h = g,

with D_t h = h_t + (d_t S) h_s, grad_G h = grad S h_s and
Lap_G h = |grad S|^2 h_ss + (Lap S) h_s, all metric data taken at r = 0.
The constant part of |grad S|^2 is treated implicitly in Fourier space;
everything else is explicit.  A two-stage scheme (implicit predictor to
the half step, explicit midpoint corrector) gives second order in time.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np
from scipy.linalg import solve_banded

from .errors import CompatibilityDrift, StabilityViolation
from .geometry import ClosedCurve, SurfaceOperatorSet, spectral_derivative, wavenumbers
from .profile1d import OptimalProfile
from .sharp_sim import one_sided_traces
from .stokes import Grid, interface_trace, traction_solve


@dataclass
class SurfaceField:
    """Real function on the circle stored by its Fourier coefficients."""

    coeffs: np.ndarray
    time: float = 0.0

    @classmethod
    def from_values(cls, values, time: float = 0.0) -> "SurfaceField":
        values = np.asarray(values, dtype=float)
        return cls(np.fft.fft(values) / values.size, float(time))

    @classmethod
    def zeros(cls, n: int, time: float = 0.0) -> "SurfaceField":
        return cls(np.zeros(n, dtype=complex), float(time))

    @property
    def n(self) -> int:
        return self.coeffs.size

    @property
    def values(self) -> np.ndarray:
        return np.real(np.fft.ifft(self.coeffs * self.n))

    def symmetry_defect(self) -> float:
        """max |c_k - conj(c_-k)|, zero for real functions."""
        c = self.coeffs
        return float(np.max(np.abs(c - np.conj(c[(-np.arange(self.n)) % self.n]))))

    def decay(self) -> float:
        """Ratio of the top-quarter spectral mass to the total."""
        a = np.abs(self.coeffs)
        k = np.abs(wavenumbers(self.n))
        tot = a.sum()
        return float(a[k >= self.n // 4].sum() / tot) if tot > 0 else 0.0


def dealiased_product(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pointwise product of periodic samples with 3/2-rule dealiasing."""
    n = a.size
    m = 3 * n // 2
    A = np.fft.rfft(a)
    B = np.fft.rfft(b)
    pa = np.fft.irfft(A, m) * (m / n)
    pb = np.fft.irfft(B, m) * (m / n)
    P = np.fft.rfft(pa * pb)[: n // 2 + 1] * (n / m)
    if n % 2 == 0:
        P[-1] = 0.0
    return np.fft.irfft(P, n)


@dataclass
class SurfaceCoefficients:
    """Coefficient samples at one time.

    The equation reads h_t = g2 h_ss + beta h_s - a h + g.
    """

    g2: np.ndarray
    beta: np.ndarray
    a: np.ndarray
    g: np.ndarray


def coefficients_from_operators(ops: SurfaceOperatorSet, w: Optional[np.ndarray] = None,
                                a=0.0, g=0.0) -> SurfaceCoefficients:
    """Translate (w, a, g) and the metric into the s-form of the equation."""
    n = ops.curve.n
    drift = np.zeros(n) if w is None else np.einsum("ij,ij->j", ops.grad_S(0.0), w)
    beta = ops.lap_S(0.0) - ops.dt_S(0.0) - drift
    return SurfaceCoefficients(ops.grad_S_sq(0.0), beta, np.broadcast_to(np.asarray(a, float), (n,)).copy(),
                               np.broadcast_to(np.asarray(g, float), (n,)).copy())


@dataclass
class SurfaceParabolicProblem:
    """Coefficient provider for D_t h + w . grad_G h - Lap_G h + a h = g.

    Parameters
    ----------
    coefficients : callable
        ``coefficients(t) -> SurfaceCoefficients``.
    extra : callable, optional
        ``extra(h_values, t) -> array``: additional explicit source that may
        depend on the solution (used for the Stokes coupling of h1).
    """

    coefficients: Callable[[float], SurfaceCoefficients]
    extra: Optional[Callable[[np.ndarray, float], np.ndarray]] = None

    @classmethod
    def flat(cls, n: int, k0: float = 1.0, beta=0.0, a=0.0, g=None) -> "SurfaceParabolicProblem":
        """Constant metric |grad S|^2 = k0^2, Lap S = 0."""
        def coef(t):
            gg = np.zeros(n) if g is None else np.asarray(g(t) if callable(g) else g, float)
            return SurfaceCoefficients(np.full(n, k0 ** 2), np.full(n, float(beta)), np.full(n, float(a)), gg)
        return cls(coef)


def _explicit(h, cf: SurfaceCoefficients, c0: float, extra, t):
    hs = spectral_derivative(h)
    hss = spectral_derivative(h, 2)
    out = (cf.g2 - c0) * hss + cf.beta * hs - cf.a * h + cf.g
    if extra is not None:
        out = out + extra(h, t)
    return out


def advance_surface_heat(h: SurfaceField, problem: SurfaceParabolicProblem, dt: float,
                         growth_bound: float = 10.0) -> SurfaceField:
    """One second-order IMEX step of the surface parabolic equation.

    Raises
    ------
    StabilityViolation
        If the step grows the solution beyond ``growth_bound`` times the
        input plus the source contribution, or produces non-finite values.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    t = h.time
    n = h.n
    u = h.values
    cf0 = problem.coefficients(t)
    cfm = problem.coefficients(t + 0.5 * dt)
    c0 = float(np.mean(cfm.g2))
    sym = c0 * (2 * np.pi * wavenumbers(n)) ** 2
    E0 = _explicit(u, cf0, c0, problem.extra, t)
    star = np.real(np.fft.ifft(np.fft.fft(u + 0.5 * dt * E0) / (1.0 + 0.5 * dt * sym)))
    A_star = c0 * spectral_derivative(star, 2)
    Em = _explicit(star, cfm, c0, problem.extra, t + 0.5 * dt)
    new = u + dt * (A_star + Em)
    bound = growth_bound * (np.max(np.abs(u)) + dt * np.max(np.abs(cfm.g))) + 1e-300
    if not np.all(np.isfinite(new)) or np.max(np.abs(new)) > bound and np.max(np.abs(new)) > 1e-14:
        raise StabilityViolation(f"surface step growth exceeded bound at t = {t:.6g}")
    return SurfaceField.from_values(new, t + dt)


def march(problem: SurfaceParabolicProblem, h0: SurfaceField, dt: float, n_steps: int,
          growth_bound: float = 10.0) -> List[SurfaceField]:
    out = [h0]
    h = h0
    for _ in range(n_steps):
        h = advance_surface_heat(h, problem, dt, growth_bound)
        out.append(h)
    return out


# -- trajectory-driven coefficients ----------------------------------------

class LadderGeometry:
    """Geometric and trace data of a sharp trajectory with linear interpolation in t."""

    def __init__(self, traj):
        self.traj = traj
        self.times = traj.times
        self.dt = traj.dt
        self._ops = {}

    def ops(self, i: int) -> SurfaceOperatorSet:
        if i not in self._ops:
            self._ops[i] = self.traj.operators(i)
        return self._ops[i]

    def _bracket(self, t: float):
        x = (t - self.times[0]) / self.dt
        i = int(np.clip(np.floor(x + 1e-9), 0, len(self.times) - 1))
        lam = x - i
        if i == len(self.times) - 1 or abs(lam) < 1e-9:
            return i, i, 0.0
        return i, i + 1, lam

    def lerp(self, fn, t: float):
        i, j, lam = self._bracket(t)
        a = fn(i)
        return a if lam == 0.0 else (1 - lam) * a + lam * fn(j)

    def curve_at(self, t: float) -> ClosedCurve:
        i, j, lam = self._bracket(t)
        if lam == 0.0:
            return self.traj.curves[i]
        X = (1 - lam) * self.traj.curves[i].X(0) + lam * self.traj.curves[j].X(0)
        return ClosedCurve.from_points(X, t, validate=False)

    def trace(self, key: str, t: float):
        return self.lerp(lambda i: self.traj.traces[i][key], t)

    def div_tau_v(self, i: int) -> np.ndarray:
        """Tangential divergence tau . d_s v / |X0'| of the trace v."""
        c = self.traj.curves[i]
        dv = spectral_derivative(self.traj.traces[i]["v"])
        return np.einsum("ij,ij->j", c.tangent, dv) / c.speed

    def kappa1(self, i: int) -> np.ndarray:
        return self.traj.curves[i].H ** 2

    def kappa2(self, i: int) -> np.ndarray:
        return -self.traj.curves[i].H ** 3

    def p0_hat(self, i: int, sigma: float) -> np.ndarray:
        tr = self.traj.traces[i]
        return 0.5 * (tr["dn_p_plus"] - tr["dn_p_minus"] - sigma * self.traj.curves[i].H ** 2)

    def dn_v0_hat(self, i: int) -> np.ndarray:
        tr = self.traj.traces[i]
        return 0.25 * (tr["dn2_v_plus"] - tr["dn2_v_minus"])

    def modulation_coefficients(self, t: float, a_extra=None, g=None) -> SurfaceCoefficients:
        """Coefficients of D_t h - v . grad_G h - Lap_G h - kappa1 h + div_tau v h = g."""
        def at(i):
            ops = self.ops(i)
            a = -self.kappa1(i) + self.div_tau_v(i)
            cf = coefficients_from_operators(ops, w=-self.traj.traces[i]["v"], a=a)
            return np.array([cf.g2, cf.beta, cf.a])
        g2, beta, a = self.lerp(at, t)
        n = g2.size
        gg = np.zeros(n) if g is None else np.asarray(g(t), float)
        return SurfaceCoefficients(g2, beta, a, gg)


@dataclass
class H1Result:
    """h1 ladder with the Stokes responses used on the way."""

    h: List[SurfaceField]
    v1_fields: list = field(default_factory=list)
    v1n: List[np.ndarray] = field(default_factory=list)
    v1: List[np.ndarray] = field(default_factory=list)
    v1_sides: List[Optional[dict]] = field(default_factory=list)


def h1_traction(geo: LadderGeometry, h: np.ndarray, t: float, sigma: float) -> np.ndarray:
    """Traction 2 h (n p0_hat - 2 dn v0_hat) - sigma (Lap_G h) n on the s-grid."""
    curve = geo.curve_at(t)
    nrm = curve.normal
    p0h = geo.lerp(lambda i: geo.p0_hat(i, sigma), t)
    dv0h = geo.lerp(geo.dn_v0_hat, t)
    ops = SurfaceOperatorSet(curve)
    lap = ops.lap(h, 0.0)
    return 2.0 * h * (nrm * p0h - 2.0 * dv0h) - sigma * lap * nrm


def solve_h1(traj, grid: Optional[Grid] = None, sigma: Optional[float] = None,
             h0: Optional[np.ndarray] = None, couple: bool = True, keep_fields: bool = True,
             growth_bound: float = 10.0) -> H1Result:
    """March the h1 equation along the sharp trajectory.

    Parameters
    ----------
    traj : SharpTrajectory
    grid : Grid, optional
        Stokes grid for the v1 response (defaults to the trajectory's).
    sigma : float, optional
        Surface tension (defaults to the trajectory's).
    h0 : ndarray, optional
        Initial data (zero by default).
    couple : bool
        Include the v1 . n source; False gives the uncoupled equation.
    """
    cfg = traj.config
    sigma = cfg.sigma if sigma is None else sigma
    grid = Grid(cfg.grid_n, cfg.box, cfg.bc) if grid is None else grid
    geo = LadderGeometry(traj)
    n = traj.curves[0].n
    last = {}

    def response(h, t):
        key = (float(t), h.tobytes())
        if last.get("key") != key:
            curve = geo.curve_at(t)
            if not couple or not np.any(h):
                F, tr = None, np.zeros((2, n))
            else:
                F = traction_solve(curve, h1_traction(geo, h, t, sigma), grid, time=t)
                tr = interface_trace(F, curve)
            last["key"] = key
            last["val"] = (F, np.einsum("ij,ij->j", curve.normal, tr), tr)
        return last["val"]

    problem = SurfaceParabolicProblem(lambda t: geo.modulation_coefficients(t),
                                      lambda h, t: response(h, t)[1])
    h = SurfaceField.from_values(np.zeros(n) if h0 is None else h0, traj.times[0])
    res = H1Result([h])
    for i in range(len(traj.times)):
        F, vn, tr = response(h.values, traj.times[i])
        res.v1n.append(vn)
        res.v1.append(tr)
        res.v1_sides.append(one_sided_traces(F, traj.curves[i], cfg.trace_offsets) if F is not None else None)
        res.v1_fields.append(F if keep_fields else None)
        if i == len(traj.times) - 1:
            break
        h = advance_surface_heat(h, problem, geo.dt, growth_bound)
        res.h.append(h)
    return res


def solve_h2(traj, h1: List[SurfaceField], B: List[np.ndarray], kappa2: Optional[List[np.ndarray]] = None,
             w1_source: Optional[List[np.ndarray]] = None, growth_bound: float = 10.0) -> List[SurfaceField]:
    """March the h2 equation with source B - kappa2 h1^2 (+ n . w1).

    ``B``, ``kappa2`` and ``w1_source`` are lists of s-samples on the ladder.
    """
    geo = LadderGeometry(traj)
    n_t = len(traj.times)
    k2 = [geo.kappa2(i) for i in range(n_t)] if kappa2 is None else kappa2
    src = []
    for i in range(n_t):
        h1v = h1[i].values
        g = np.asarray(B[i], float) - k2[i] * dealiased_product(h1v, h1v)
        if w1_source is not None:
            g = g + np.asarray(w1_source[i], float)
        src.append(g)
    problem = SurfaceParabolicProblem(lambda t: geo.modulation_coefficients(t, g=lambda tt: geo.lerp(lambda i: src[i], tt)))
    h = SurfaceField.zeros(traj.curves[0].n, traj.times[0])
    return march(problem, h, geo.dt, n_t - 1, growth_bound)


# -- (rho, s) parabolic problem for c3 --------------------------------------

@dataclass
class InnerGrid:
    """Sub-grid of the profile rho-grid used for tensor tabulations."""

    profile: OptimalProfile
    half_width: float = 20.0
    stride: int = 2

    def __post_init__(self):
        rho = self.profile.rho
        idx = np.flatnonzero(np.abs(rho) <= self.half_width + 1e-12)
        # keep rho = 0 on the grid
        mid = rho.size // 2
        idx = idx[(idx - mid) % self.stride == 0]
        self.index = idx
        self.rho = rho[idx]
        self.h = float(self.rho[1] - self.rho[0])
        self.theta = self.profile.theta[idx]
        self.dtheta = self.profile.dtheta[idx]
        self.d2theta = self.profile.d2theta[idx]
        self.eta = self.profile.eta[idx]
        self.potential = self.profile.potential()[idx]
        w = np.full(self.rho.size, self.h)
        w[0] = w[-1] = 0.5 * self.h
        self.weights = w

    def integrate(self, values: np.ndarray) -> np.ndarray:
        return np.tensordot(self.weights, values, axes=([0], [0]))

    def banded_L(self, shift: float = 0.0) -> np.ndarray:
        """Fourth-order -d^2 + f''(theta0) + shift in LAPACK band storage (interior nodes)."""
        m = self.rho.size - 2
        c = np.array([1.0, -16.0, 30.0, -16.0, 1.0]) / (12.0 * self.h ** 2)
        ab = np.zeros((5, m))
        ab[0, 2:] = c[4]
        ab[1, 1:] = c[3]
        ab[2, :] = c[2] + self.potential[1:-1] + shift
        ab[3, :-1] = c[1]
        ab[4, :-2] = c[0]
        ab[2, 0] -= c[0]
        ab[2, -1] -= c[4]
        return ab


def solve_c3(rhs: Callable[[int], np.ndarray], eps: float, inner: InnerGrid, traj,
             drift_tol: float = 1e-2, compat_tol: float = 1e-8) -> List[np.ndarray]:
    """March eps^2 (D_t - Lap_G) c + L c = rhs on the (rho, s) tensor grid.

    Parameters
    ----------
    rhs : callable
        ``rhs(i)`` returns the right side at ladder index i, shape (n_rho, N).
    eps : float
    inner : InnerGrid
    traj : SharpTrajectory
        Supplies the metric along the ladder.

    Returns
    -------
    list of ndarray
        c3 at every ladder time (zero initial data).

    Raises
    ------
    CompatibilityDrift
        If the theta0' component before projection exceeds ``drift_tol``
        (relative), or the right side violates the compatibility condition.
    """
    geo = LadderGeometry(traj)
    n_t = len(traj.times)
    N = traj.curves[0].n
    nr = inner.rho.size
    dt = geo.dt
    phi = inner.dtheta
    phi_norm2 = float(inner.weights @ phi ** 2)
    c = np.zeros((nr, N))
    out = [c.copy()]
    k = np.arange(N // 2 + 1)
    e2 = eps * eps
    for i in range(1, n_t):
        r = np.asarray(rhs(i), dtype=float)
        comp = inner.integrate(r * phi[:, None])
        scale = np.sqrt(inner.integrate(r ** 2)) * np.sqrt(phi_norm2)
        if np.any(np.abs(comp) > compat_tol * np.maximum(scale, 1e-300) + 1e-14):
            raise CompatibilityDrift(f"right side incompatible at t = {traj.times[i]:.6g}: {np.max(np.abs(comp)):.3e}")
        ops = geo.ops(i)
        g2 = ops.grad_S_sq(0.0)
        c0 = float(np.mean(g2))
        beta = ops.lap_S(0.0) - ops.dt_S(0.0)
        cs = spectral_derivative(c, 1, axis=1)
        css = spectral_derivative(c, 2, axis=1)
        expl = e2 * ((g2 - c0)[None, :] * css + beta[None, :] * cs)
        b = e2 * c / dt + expl + r
        B = np.fft.rfft(b, axis=1)
        C = np.zeros_like(B)
        for kk in k:
            ab = inner.banded_L(e2 / dt + e2 * c0 * (2 * np.pi * kk) ** 2)
            rhs_k = np.column_stack([B[1:-1, kk].real, B[1:-1, kk].imag])
            sol = solve_banded((2, 2), ab, rhs_k, check_finite=False)
            C[1:-1, kk] = sol[:, 0] + 1j * sol[:, 1]
        c = np.fft.irfft(C, N, axis=1)
        mass = inner.integrate(c * phi[:, None])
        norm = np.sqrt(inner.integrate(c ** 2)) * np.sqrt(phi_norm2)
        if np.any(np.abs(mass) > drift_tol * np.maximum(norm, 1e-300) + 1e-14):
            raise CompatibilityDrift(f"kernel component drifted to {np.max(np.abs(mass)):.3e} at t = {traj.times[i]:.6g}")
        c = c - np.outer(phi, mass / phi_norm2)
        out.append(c.copy())
    return out


def export_ladder(path: str, times, fields: List[np.ndarray]) -> None:
    """CSV with columns (t, s, value)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["# ladder v1"])
        w.writerow(["t", "s", "value"])
        for t, f in zip(times, fields):
            vals = f.values if isinstance(f, SurfaceField) else np.asarray(f)
            n = vals.size
            for j in range(n):
                w.writerow([repr(float(t)), repr(j / n), repr(float(vals[j]))])
