"""
Matched-asymptotic approximate solutions.

Given a sharp-interface trajectory, this module assembles

* the modulation data along the ladder: b(rho, s), D(rho, s), B(s) and the
  curvature coefficients kappa1 = H^2, kappa2 = -H^3;
* the inner expansion theta0(rho) + eps^2 c2 + eps^3 c3 with
  rho = d / eps - h1(s) - eps h2(s), glued to +-1 by the cutoff zeta(d);
* the velocity and pressure approximations v_A, p_A built from the outer
  fields v_j^+- (one-sided extensions of the sharp Stokes fields) and the
  inner ansatz v_j = v~_j + eta(rho) d v^_j.

Quantities of the form f / d with f = 0 on the curve are replaced by their
normal derivative at the footpoint, so all inner coefficients are taken
constant along normals.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy.integrate import cumulative_simpson
from scipy.interpolate import CubicSpline
from scipy.ndimage import map_coordinates

from .diffuse_sim import PhaseField, check_resolution, cutoff, grid_distance, smooth_step
from .errors import MissingTrace, SeamDiscontinuity
from .geometry import ClosedCurve, SurfaceOperatorSet, fourier_eval, spectral_derivative
from .profile1d import OptimalProfile, optimal_profile, solve_linearized
from .sharp_sim import SharpTrajectory, _sample
from .stokes import Grid, VelocityField
from .surface_pde import H1Result, InnerGrid, LadderGeometry, SurfaceField, solve_c3, solve_h1, solve_h2

TRACE_KEYS = ("v_plus", "v_minus", "dn_v_plus", "dn_v_minus", "dn2_v_plus", "dn2_v_minus",
              "p_plus", "p_minus", "dn_p_plus", "dn_p_minus")


# -- eta moments ------------------------------------------------------------

@dataclass
class EtaMoments:
    """Running integrals of the blending profile on the profile grid.

    ``m0, m1, m2`` are int_{-inf}^rho z^k eta'(z) dz; ``ka`` is the double
    integral of z^2 eta'' + 4 z eta'; ``q`` is int_{-inf}^rho theta0'^2.
    """

    rho: np.ndarray
    m0: np.ndarray
    m1: np.ndarray
    m2: np.ndarray
    ka: np.ndarray
    q: np.ndarray

    @classmethod
    def from_profile(cls, profile: OptimalProfile) -> "EtaMoments":
        rho, sig = profile.rho, profile.sigma
        de = 2.0 * profile.dtheta ** 2 / sig
        d2e = 4.0 * profile.dtheta * profile.d2theta / sig

        def run(y):
            return cumulative_simpson(y, x=rho, initial=0.0)

        m0 = profile.eta + 1.0
        g = run(rho ** 2 * d2e + 4.0 * rho * de)
        return cls(rho, m0, run(rho * de), run(rho ** 2 * de), run(g), 0.5 * sig * m0)

    def at(self, name: str, r) -> np.ndarray:
        """Linear interpolation with constant continuation beyond the grid."""
        return np.interp(r, self.rho, getattr(self, name))

    def J(self, r, h1) -> np.ndarray:
        """int_{-inf}^rho (z + h1)^2 eta'(z) dz."""
        return self.at("m2", r) + 2 * h1 * self.at("m1", r) + h1 ** 2 * self.at("m0", r)

    def K(self, r, h1) -> np.ndarray:
        """int_{-inf}^rho int_{-inf}^y ((z^2 - h1^2) eta'' + 4 z eta') dz dy."""
        return self.at("ka", r) - h1 ** 2 * self.at("m0", r)

    def J_total(self, h1) -> np.ndarray:
        return self.m2[-1] + 2 * h1 * self.m1[-1] + h1 ** 2 * self.m0[-1]

    def K_total(self, h1) -> np.ndarray:
        return self.ka[-1] - h1 ** 2 * self.m0[-1]


# -- modulation coefficients --------------------------------------------------

@dataclass
class Modulation:
    """Ladders of the modulation data on the inner (rho, s) grid."""

    inner: InnerGrid
    b: List[np.ndarray]
    D: List[np.ndarray]
    B: List[np.ndarray]
    kappa1: List[np.ndarray]
    kappa2: List[np.ndarray]
    grad_h1: List[np.ndarray]


def _normal_part(vec: np.ndarray, curve: ClosedCurve) -> np.ndarray:
    return np.einsum("ij,ij->j", curve.normal, vec)


def _tangential_div(vtr: np.ndarray, curve: ClosedCurve) -> np.ndarray:
    return np.einsum("ij,ij->j", curve.tangent, spectral_derivative(vtr)) / curve.speed


def b_coefficient(traj: SharpTrajectory, i: int, h1: np.ndarray, v1: np.ndarray, inner: InnerGrid,
                  moments: EtaMoments) -> np.ndarray:
    """b(rho, s) at ladder index i on the inner grid, shape (n_rho, N)."""
    tr = traj.traces[i]
    curve = traj.curves[i]
    ops = SurfaceOperatorSet(curve)
    rho, eta = inner.rho[:, None], inner.eta[:, None]
    gh = ops.grad(h1)
    a2p = _normal_part(tr["dn2_v_plus"], curve)
    a2m = _normal_part(tr["dn2_v_minus"], curve)
    gp = np.einsum("ij,ij->j", tr["dn_v_plus"], gh)
    gm = np.einsum("ij,ij->j", tr["dn_v_minus"], gh)
    r1 = rho + h1[None, :]
    out = 0.5 * ((a2p + a2m) + (a2p - a2m) * eta) * r1 ** 2
    out += 0.5 * ((gp + gm) + (gp - gm) * eta) * r1
    out += np.einsum("ij,ij->j", v1, gh) - _tangential_div(v1, curve) * h1
    dnv0hat_n = 0.25 * (a2p - a2m)
    out += -dnv0hat_n[None, :] * moments.J(rho, h1[None, :])
    return out


def D_coefficient(traj: SharpTrajectory, i: int, h1: np.ndarray, inner: InnerGrid) -> np.ndarray:
    """D = d_r D1 at r = 0 from the analytic r-derivatives of the chart operators."""
    ops = traj.operators(i)
    gh = ops.grad(h1)
    drg = ops.dr_grad(h1)
    v = traj.traces[i]["v"]
    first = -2.0 * np.einsum("ij,ij->j", gh, drg)
    second = ops.dr_lap(h1) - ops.dr_dt(h1) + np.einsum("ij,ij->j", v, drg)
    return np.outer(inner.d2theta, first) + np.outer(inner.dtheta, second)


def B_coefficient(b: np.ndarray, D: np.ndarray, kappa2: np.ndarray, h1: np.ndarray, inner: InnerGrid,
                  sigma: float) -> np.ndarray:
    """B = (1/sigma) int [(b - kappa2 rho^2) theta0' + (rho + h1) D] theta0' drho."""
    rho = inner.rho[:, None]
    phi = inner.dtheta[:, None]
    integrand = ((b - kappa2[None, :] * rho ** 2) * phi + (rho + h1[None, :]) * D) * phi
    return inner.integrate(integrand) / sigma


def modulation_coefficients(traj: SharpTrajectory, h1: H1Result, profile: Optional[OptimalProfile] = None,
                            inner: Optional[InnerGrid] = None) -> Modulation:
    """b, D, B, kappa1, kappa2 along the ladder.

    Raises
    ------
    MissingTrace
        If the trajectory lacks one-sided normal traces.
    """
    traj.require(*TRACE_KEYS)
    profile = profile or optimal_profile()
    inner = inner or InnerGrid(profile)
    mom = EtaMoments.from_profile(profile)
    out = Modulation(inner, [], [], [], [], [], [])
    for i in range(len(traj.times)):
        c = traj.curves[i]
        hv = h1.h[i].values
        v1 = h1.v1[i] if h1.v1 else np.zeros((2, c.n))
        b = b_coefficient(traj, i, hv, v1, inner, mom)
        D = D_coefficient(traj, i, hv, inner)
        k1, k2 = c.H ** 2, -c.H ** 3
        out.b.append(b)
        out.D.append(D)
        out.kappa1.append(k1)
        out.kappa2.append(k2)
        out.B.append(B_coefficient(b, D, k2, hv, inner, profile.sigma))
        out.grad_h1.append(SurfaceOperatorSet(c).grad(hv))
    return out


def c3_rhs(mod: Modulation, i: int, h1: np.ndarray, h2: np.ndarray, ops: SurfaceOperatorSet) -> np.ndarray:
    """2 grad h1 . grad h2 theta0'' - (b - B - kappa2 (rho^2 + 2 rho h1)) theta0' - (rho + h1) D."""
    inner = mod.inner
    rho = inner.rho[:, None]
    gg = np.einsum("ij,ij->j", mod.grad_h1[i], ops.grad(h2))
    k2 = mod.kappa2[i][None, :]
    out = 2.0 * np.outer(inner.d2theta, gg)
    out -= (mod.b[i] - mod.B[i][None, :] - k2 * (rho ** 2 + 2 * rho * h1[None, :])) * inner.dtheta[:, None]
    out -= (rho + h1[None, :]) * mod.D[i]
    return out


# -- inner expansion ------------------------------------------------------------

@dataclass
class InnerExpansion:
    """Inner expansion data along a sharp trajectory.

    ``c2`` is separable, c2 = u1(rho) |grad h1|^2 + u2(rho) (kappa1 - div_tau v),
    so only the two profiles and the s-coefficients are stored.
    """

    traj: SharpTrajectory
    profile: OptimalProfile
    eps: float
    h1: H1Result
    h2: List[SurfaceField]
    mod: Modulation
    u1: np.ndarray
    u2: np.ndarray
    c2_coef: List[np.ndarray]
    c3: Optional[List[np.ndarray]] = None
    _splines: dict = field(default_factory=dict, repr=False)

    @property
    def times(self) -> np.ndarray:
        return self.traj.times

    @property
    def inner(self) -> InnerGrid:
        return self.mod.inner

    def c2_table(self, i: int) -> np.ndarray:
        a, b = self.c2_coef[i]
        return np.outer(self.u1, a) + np.outer(self.u2, b)

    def c2_at(self, i: int, rho, s) -> np.ndarray:
        if "u" not in self._splines:
            self._splines["u"] = (CubicSpline(self.profile.rho, self.u1), CubicSpline(self.profile.rho, self.u2))
        sp1, sp2 = self._splines["u"]
        r = np.clip(rho, self.profile.rho[0], self.profile.rho[-1])
        a, b = self.c2_coef[i]
        N = a.size
        av, bv = fourier_eval(np.fft.fft(np.array([a, b]), axis=1) / N, s)[0]
        return sp1(r) * av + sp2(r) * bv


def build_inner_expansion(traj: SharpTrajectory, eps: float, profile: Optional[OptimalProfile] = None,
                          order: int = 3, h1: Optional[H1Result] = None, inner: Optional[InnerGrid] = None,
                          w1_source=None) -> InnerExpansion:
    """Run the h1, h2 (and c3) solves and tabulate c2 along the ladder."""
    profile = profile or optimal_profile()
    h1 = h1 if h1 is not None else solve_h1(traj)
    mod = modulation_coefficients(traj, h1, profile, inner)
    h2 = solve_h2(traj, h1.h, mod.B, mod.kappa2, w1_source)
    geo = LadderGeometry(traj)
    u1 = solve_linearized(profile.d2theta, profile)
    u2 = solve_linearized(-profile.rho * profile.dtheta, profile)
    coef = []
    for i in range(len(traj.times)):
        ops = SurfaceOperatorSet(traj.curves[i])
        gh = ops.grad(h1.h[i].values)
        coef.append((np.sum(gh * gh, axis=0), mod.kappa1[i] - geo.div_tau_v(i)))
    exp_ = InnerExpansion(traj, profile, eps, h1, h2, mod, u1, u2, coef)
    if order >= 3:
        def rhs(i):
            return c3_rhs(mod, i, h1.h[i].values, h2[i].values, SurfaceOperatorSet(traj.curves[i]))
        exp_.c3 = solve_c3(rhs, eps, mod.inner, traj)
    return exp_


# -- interpolation helpers ------------------------------------------------------

def _s_interp(values: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Trigonometric interpolation of (..., N) samples at parameters s."""
    N = values.shape[-1]
    return fourier_eval(np.fft.fft(values, axis=-1) / N, s)[0]


def table_eval(rho_grid: np.ndarray, table: np.ndarray, rho, s, pad: int = 8) -> np.ndarray:
    """Cubic-spline evaluation of a (rho, s) table, periodic in s, zero-continued in rho."""
    N = table.shape[1]
    ext = np.concatenate([table[:, -pad:], table, table[:, :pad]], axis=1)
    hr = rho_grid[1] - rho_grid[0]
    ir = (np.asarray(rho) - rho_grid[0]) / hr
    js = np.mod(s, 1.0) * N + pad
    out = map_coordinates(ext, [ir, js], order=3, mode="nearest")
    outside = (ir < 0) | (ir > rho_grid.size - 1)
    return np.where(outside, 0.0, out)


# -- c_A --------------------------------------------------------------------------

def build_cA(curve: ClosedCurve, h1: Optional[np.ndarray], h2: Optional[np.ndarray], eps: float, delta: float,
             grid: Grid, order: int = 2, profile: Optional[OptimalProfile] = None,
             c2=None, c3: Optional[np.ndarray] = None, rho_grid: Optional[np.ndarray] = None,
             check: bool = True) -> PhaseField:
    """Glued approximate phase field on the cell centres.

    Parameters
    ----------
    curve : ClosedCurve
    h1, h2 : ndarray or None
        Samples on the curve's s-grid (None means zero).
    eps, delta : float
    grid : Grid
    order : int
        0: theta0 only; 2: add eps^2 c2; 3: add eps^3 c3.
    c2 : callable or None
        ``c2(rho, s)`` evaluator.
    c3 : ndarray or None
        Table of shape (len(rho_grid), N).

    Notes
    -----
    rho always uses the full h1 + eps h2, whatever the order.
    """
    if check:
        check_resolution(grid, eps)
    profile = profile or optimal_profile()
    d, s, _, _ = grid_distance(curve, grid, delta)
    N = curve.n
    hv = np.zeros(N) if h1 is None else np.asarray(h1, float)
    if h2 is not None:
        hv = hv + eps * np.asarray(h2, float)
    hs = _s_interp(hv, s.ravel()).reshape(s.shape) if np.any(hv) else 0.0
    rho = d / eps - hs
    inner = profile.theta_at(rho)
    if order >= 2 and c2 is not None:
        inner = inner + eps ** 2 * c2(rho, s)
    if order >= 3 and c3 is not None:
        inner = inner + eps ** 3 * table_eval(rho_grid, c3, rho, s)
    z = cutoff(d, delta)
    c = z * inner + (1.0 - z) * np.where(d >= 0, 1.0, -1.0)
    return PhaseField(c, grid, eps, curve.time_tag)


def approx_phase(expansion: InnerExpansion, i: int, grid: Grid, delta: float, order: int = 2) -> PhaseField:
    """c_A at ladder index i from an inner expansion."""
    e = expansion
    c3 = e.c3[i] if (order >= 3 and e.c3 is not None) else None
    return build_cA(e.traj.curves[i], e.h1.h[i].values, e.h2[i].values, e.eps, delta, grid, order,
                    e.profile, c2=lambda r, s: e.c2_at(i, r, s), c3=c3, rho_grid=e.inner.rho)


# -- v_A ----------------------------------------------------------------------------

@dataclass
class ApproxSolution:
    """Approximate solution at one time with its pieces."""

    c_A: Optional[PhaseField]
    v_A: Optional[VelocityField]
    eps: float
    order_c: int
    order_v: int
    components: dict = field(default_factory=dict)


def _side_values(fld: Optional[VelocityField], sides: Optional[dict], pts: np.ndarray, d: np.ndarray,
                 s: np.ndarray, curve: ClosedCurve, band: float):
    """Extensions E^+ and E^- of a one-sided field pair at the points.

    On its own side beyond ``band`` the grid field is sampled; elsewhere the
    quadratic normal Taylor polynomial from the footpoint traces is used.
    Returns dicts with keys ``v`` (2, P) and ``p`` (P,).
    """
    P = pts.shape[1]
    if fld is None or sides is None:
        z = {"v": np.zeros((2, P)), "p": np.zeros(P)}
        return z, dict(z)
    vg, pg = _sample(fld, pts)
    out = []
    for side, sgn in (("plus", 1.0), ("minus", -1.0)):
        v0 = _s_interp(sides[f"v_{side}"], s)
        v1 = _s_interp(sides[f"dn_v_{side}"], s)
        v2 = _s_interp(sides[f"dn2_v_{side}"], s)
        p0 = _s_interp(sides[f"p_{side}"], s)
        p1 = _s_interp(sides[f"dn_p_{side}"], s)
        tv = v0 + d * v1 + 0.5 * d * d * v2
        tp = p0 + d * p1
        own = sgn * d >= band
        out.append({"v": np.where(own, vg, tv), "p": np.where(own, pg, tp)})
    return out[0], out[1]


def assemble_velocity(traj: SharpTrajectory, i: int, pts: np.ndarray, eps: float, delta: float,
                      expansion: Optional[InnerExpansion] = None, order: int = 1,
                      v0_field: Optional[VelocityField] = None, profile: Optional[OptimalProfile] = None,
                      band: Optional[float] = None, with_pressure: bool = False):
    """Glued v_A (and p_A) at points of shape (2, P).

    Returns
    -------
    dict
        ``v`` (2, P), ``p`` (P,) when requested, and the pieces ``inner``,
        ``outer``, ``zeta``, ``d``.
    """
    curve = traj.curves[i]
    profile = profile or (expansion.profile if expansion is not None else optimal_profile())
    mom = EtaMoments.from_profile(profile)
    fld0 = v0_field if v0_field is not None else (traj.fields[i] if traj.fields else None)
    if fld0 is None and traj.config.stokes:
        raise MissingTrace("sharp Stokes field not kept on the trajectory (set keep_fields)")
    if band is None:
        band = 4.0 * (fld0.grid.h if fld0 is not None else 0.0)
    d, s, _, _ = grid_distance(curve, None, delta, points=pts.T)
    tr = traj.traces[i]
    sides0 = {k: tr[k] for k in TRACE_KEYS} if fld0 is not None else None
    E0p, E0m = _side_values(fld0, sides0, pts, d, s, curve, band)
    N = curve.n
    if expansion is not None:
        h1 = expansion.h1.h[i].values
        h2 = expansion.h2[i].values
    else:
        h1 = np.zeros(N)
        h2 = np.zeros(N)
    hv = h1 + eps * h2
    rho = d / eps - _s_interp(hv, s)
    eta = np.interp(rho, profile.rho, profile.eta)
    h1s = _s_interp(h1, s)
    nrm = _s_interp(curve.normal, s)
    nrm /= np.hypot(*nrm)
    tau = np.array([-nrm[1], nrm[0]])
    # order 0
    vin = 0.5 * (E0p["v"] + E0m["v"]) + 0.5 * eta * (E0p["v"] - E0m["v"])
    vout_p, vout_m = E0p["v"].copy(), E0m["v"].copy()
    pieces = {"v0_in": vin.copy()}
    if order >= 1 and expansion is not None and expansion.h1.v1_fields:
        fld1 = expansion.h1.v1_fields[i]
        sides1 = expansion.h1.v1_sides[i] if expansion.h1.v1_sides else None
        E1p, E1m = _side_values(fld1, sides1, pts, d, s, curve, band)
        v1in = 0.5 * (E1p["v"] + E1m["v"]) + 0.5 * eta * (E1p["v"] - E1m["v"])
        vin = vin + eps * v1in
        vout_p += eps * E1p["v"]
        vout_m += eps * E1m["v"]
        pieces["v1_in"] = v1in
    else:
        E1p = E1m = {"v": np.zeros_like(vin), "p": np.zeros(d.size)}
    # footpoint data d_n v0^ = (dn2 v+ - dn2 v-) / 4
    dnv0h = 0.25 * (_s_interp(tr["dn2_v_plus"], s) - _s_interp(tr["dn2_v_minus"], s))
    an = np.sum(dnv0h * nrm, axis=0)
    at = np.sum(dnv0h * tau, axis=0)
    if order >= 2:
        v2in = -an * mom.J(rho, h1s) * nrm - at * mom.K(rho, h1s) * tau
        decay = 1.0 - smooth_step((np.abs(d) - 2 * delta) / (0.5 * delta))
        v2p = (-an * mom.J_total(h1s) * nrm - at * mom.K_total(h1s) * tau) * decay
        vin = vin + eps ** 2 * v2in
        vout_p += eps ** 2 * v2p
        pieces["v2_in"] = v2in
    z = cutoff(d, delta)
    outer = np.where(d >= 0, vout_p, vout_m)
    v = z * vin + (1.0 - z) * outer
    res = {"v": v, "inner": vin, "outer_plus": vout_p, "outer_minus": vout_m, "zeta": z, "d": d, "s": s,
           "rho": rho, **pieces}
    if with_pressure:
        sigma = profile.sigma
        Pp, Pm = E0p["p"], E0m["p"]
        theta_p = profile.dtheta_at(rho)
        pin = -theta_p ** 2 / eps + 0.5 * (1 + eta) * Pp + 0.5 * (1 - eta) * Pm
        pout_p, pout_m = Pp.copy(), Pm.copy()
        if order >= 1:
            geo = LadderGeometry(traj)
            p0h = _s_interp(geo.p0_hat(i, sigma), s)
            ops = SurfaceOperatorSet(curve)
            gh = ops.grad(h1)
            gh2 = _s_interp(np.sum(gh * gh, axis=0), s)
            lap = _s_interp(ops.lap(h1), s)
            coef = -p0h + 2.0 * an
            A_rho = coef * (mom.at("m1", rho) + h1s * mom.at("m0", rho)) - gh2 * theta_p ** 2 \
                + lap * mom.at("q", rho)
            A_tot = coef * 2.0 * h1s + lap * sigma
            P1p, P1m = E1p["p"], E1m["p"]
            p1 = 0.5 * (P1p + P1m - A_tot) + A_rho + 0.5 * eta * (P1p - P1m - A_tot)
            pin = pin + eps * p1
            pout_p += eps * P1p
            pout_m += eps * P1m
        res["p"] = z * pin + (1.0 - z) * np.where(d >= 0, pout_p, pout_m)
        res["p_minus1"] = -theta_p ** 2
    return res


def seam_mismatch(res: dict, delta: float) -> float:
    """max |v_in - v_out| over the glue band delta < |d| < 2 delta."""
    d = res["d"]
    band = (np.abs(d) > delta) & (np.abs(d) < 2 * delta)
    if not np.any(band):
        return 0.0
    outer = np.where(d >= 0, res["outer_plus"], res["outer_minus"])
    return float(np.max(np.abs(res["inner"][:, band] - outer[:, band])))


def build_vA(traj: SharpTrajectory, i: int, eps: float, grid: Grid, delta: float,
             expansion: Optional[InnerExpansion] = None, order: int = 1,
             v0_field: Optional[VelocityField] = None, seam_tol: Optional[float] = None,
             with_pressure: bool = True) -> ApproxSolution:
    """Approximate velocity on the MAC faces of ``grid`` (pressure at centres).

    Raises
    ------
    SeamDiscontinuity
        If inner and outer velocities disagree in the glue band by more than
        ``seam_tol`` (default 0.2 times the outer velocity scale, plus 1e-8).
    """
    Xu, Yu = grid.u_coords()
    Xv, Yv = grid.v_coords()
    ru = assemble_velocity(traj, i, np.array([Xu.ravel(), Yu.ravel()]), eps, delta, expansion, order, v0_field)
    rv = assemble_velocity(traj, i, np.array([Xv.ravel(), Yv.ravel()]), eps, delta, expansion, order, v0_field)
    scale = max(float(np.max(np.abs(ru["outer_plus"]))), float(np.max(np.abs(ru["outer_minus"]))))
    tol = seam_tol if seam_tol is not None else 0.2 * scale + 1e-8
    mis = max(seam_mismatch(ru, delta), seam_mismatch(rv, delta))
    if mis > tol:
        raise SeamDiscontinuity(f"glue-band mismatch {mis:.3e} exceeds {tol:.3e}")
    u = ru["v"][0].reshape(Xu.shape)
    v = rv["v"][1].reshape(Xv.shape)
    if grid.bc == "dirichlet":
        u[0, :] = u[-1, :] = 0.0
        v[:, 0] = v[:, -1] = 0.0
    p = np.zeros((grid.n, grid.n))
    comps = {"seam_mismatch": mis}
    if with_pressure:
        rc = assemble_velocity(traj, i, grid.points().T, eps, delta, expansion, order, v0_field,
                               with_pressure=True)
        p = rc["p"].reshape(grid.n, grid.n)
        p = p - p.mean()
        comps["p_minus1"] = rc["p_minus1"].reshape(grid.n, grid.n)
        comps["rho"] = rc["rho"].reshape(grid.n, grid.n)
    field_ = VelocityField(u, v, p, grid, float(traj.times[i]), {"order": order, "eps": eps})
    return ApproxSolution(None, field_, eps, -1, order, comps)


def approximate_solution(expansion: InnerExpansion, i: int, grid: Grid, delta: float, order_c: int = 2,
                         order_v: int = 1) -> ApproxSolution:
    """c_A and v_A at ladder index i."""
    cA = approx_phase(expansion, i, grid, delta, order_c)
    sol = build_vA(expansion.traj, i, expansion.eps, grid, delta, expansion, order_v)
    sol.c_A = cA
    sol.order_c = order_c
    return sol
