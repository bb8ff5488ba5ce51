"""
One-dimensional layer problem.

Double-well potentials, the optimal (standing-wave) profile ``theta0``
solving ``-theta0'' + f'(theta0) = 0`` with ``theta0(0) = 0`` and
``theta0(+-inf) = +-1``, the blending profile ``eta``, the surface tension
``sigma = int theta0'^2`` and the linearized operator

    L u = -u'' + f''(theta0) u

together with its kernel, low spectrum and the compatibility-conditioned
inverse used by the inner expansion.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline
from scipy.sparse.linalg import eigsh, splu, ArpackNoConvergence

from .errors import IncompatibleRHS, NoConvergence, NonIntegrable, NotADoubleWell

ArrayFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class DoubleWell:
    """Smooth even potential with non-degenerate minima at +-1.

    Parameters
    ----------
    f, df, d2f, d3f : callable
        The potential and its first three derivatives (vectorized).
    name : str
        Label; ``"quartic"`` switches on the closed-form profile.
    params : dict
        Free-form parameters, recorded only.
    """

    f: ArrayFn
    df: ArrayFn
    d2f: ArrayFn
    d3f: ArrayFn
    name: str = "custom"
    params: dict = field(default_factory=dict)

    @classmethod
    def quartic(cls) -> "DoubleWell":
        """The default potential f(s) = (1 - s^2)^2 / 8."""
        return cls(
            f=lambda s: 0.125 * (1.0 - s * s) ** 2,
            df=lambda s: 0.5 * (s ** 3 - s),
            d2f=lambda s: 0.5 * (3.0 * s * s - 1.0),
            d3f=lambda s: 3.0 * s,
            name="quartic",
        )

    @property
    def alpha(self) -> float:
        """Decay rate min(sqrt f''(-1), sqrt f''(1))."""
        return float(min(np.sqrt(self.d2f(np.array(-1.0))), np.sqrt(self.d2f(np.array(1.0)))))

    def validate(self, n_samples: int = 2001, tol: float = 1e-12) -> None:
        """Check the double-well assumptions on a sample grid.

        Raises
        ------
        NotADoubleWell
            If evenness, the well conditions or positivity fail.
        NonIntegrable
            If ``f`` vanishes strictly between the wells.
        """
        s = np.linspace(-1.5, 1.5, n_samples)
        fs = np.asarray(self.f(s), dtype=float)
        if not np.all(np.isfinite(fs)):
            raise NotADoubleWell("potential is not finite on [-1.5, 1.5]")
        scale = max(1.0, float(np.max(np.abs(fs))))
        if np.max(np.abs(fs - np.asarray(self.f(-s)))) > 1e-10 * scale:
            raise NotADoubleWell("potential is not even")
        wells = np.array([-1.0, 1.0])
        if np.max(np.abs(self.df(wells))) > 1e-10 * scale:
            raise NotADoubleWell("f'(+-1) != 0")
        if np.min(self.d2f(wells)) <= 0:
            raise NotADoubleWell("f''(+-1) must be positive")
        if np.max(np.abs(self.f(wells))) > 1e-10 * scale:
            raise NotADoubleWell("wells must be zeros of f")
        inner = np.linspace(-1.0, 1.0, n_samples)[1:-1]
        fi = np.asarray(self.f(inner), dtype=float)
        # stay away from the wells where f is quadratically small anyway
        core = np.abs(inner) < 1.0 - 1e-3
        if np.min(fi) < -tol:
            raise NotADoubleWell("f must be positive between the wells")
        if np.min(fi[core]) <= tol:
            raise NonIntegrable("sqrt(2 f) vanishes between the wells")


@dataclass
class OptimalProfile:
    """Tabulated optimal profile on a symmetric rho-grid.

    Attributes
    ----------
    rho : ndarray
        Uniform grid on [-L, L] with an odd number of points (rho = 0 included).
    theta, dtheta, d2theta : ndarray
        theta0 and its first two derivatives on the grid.
    eta : ndarray
        Blending profile eta = -1 + (2/sigma) int_{-inf}^rho theta0'^2.
    alpha : float
        Exponential decay rate of theta0 -+ 1.
    sigma : float
        Surface tension.
    """

    rho: np.ndarray
    theta: np.ndarray
    dtheta: np.ndarray
    d2theta: np.ndarray
    eta: np.ndarray
    alpha: float
    sigma: float
    well: DoubleWell
    L: float
    _splines: dict = field(default_factory=dict, repr=False)

    @property
    def h(self) -> float:
        return float(self.rho[1] - self.rho[0])

    @property
    def closed_form(self) -> bool:
        return self.well.name == "quartic"

    @property
    def weights(self) -> np.ndarray:
        """Trapezoid weights on the rho-grid."""
        w = np.full(self.rho.size, self.h)
        w[0] = w[-1] = 0.5 * self.h
        return w

    def integrate(self, values: np.ndarray, axis: int = 0) -> np.ndarray:
        """Trapezoid rule along ``axis`` on the profile grid."""
        return np.tensordot(self.weights, values, axes=([0], [axis]))

    # -- evaluation off the grid -------------------------------------------
    def _spline(self, key: str) -> CubicSpline:
        if key not in self._splines:
            self._splines[key] = CubicSpline(self.rho, getattr(self, key))
        return self._splines[key]

    def _eval(self, key: str, r, far_left: float, far_right: float) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        out = self._spline(key)(np.clip(r, -self.L, self.L))
        out = np.where(r <= -self.L, far_left, out)
        return np.where(r >= self.L, far_right, out)

    def theta_at(self, r) -> np.ndarray:
        if self.closed_form:
            return np.tanh(0.5 * np.asarray(r, dtype=float))
        return self._eval("theta", r, -1.0, 1.0)

    def dtheta_at(self, r) -> np.ndarray:
        if self.closed_form:
            t = np.tanh(0.5 * np.asarray(r, dtype=float))
            return 0.5 * (1.0 - t * t)
        return self._eval("dtheta", r, 0.0, 0.0)

    def d2theta_at(self, r) -> np.ndarray:
        if self.closed_form:
            t = np.tanh(0.5 * np.asarray(r, dtype=float))
            return -0.5 * t * (1.0 - t * t)
        return self._eval("d2theta", r, 0.0, 0.0)

    def eta_at(self, r) -> np.ndarray:
        if self.closed_form:
            t = np.tanh(0.5 * np.asarray(r, dtype=float))
            return 0.5 * (3.0 * t - t ** 3)
        return self._eval("eta", r, -1.0, 1.0)

    def potential(self) -> np.ndarray:
        """f''(theta0) on the grid."""
        return np.asarray(self.well.d2f(self.theta), dtype=float)

    def ode_residual(self) -> float:
        """max |-theta0'' + f'(theta0)| with theta0'' by fourth-order differences."""
        u, h = self.theta, self.h
        d2 = (-u[:-4] + 16 * u[1:-3] - 30 * u[2:-2] + 16 * u[3:-1] - u[4:]) / (12 * h * h)
        return float(np.max(np.abs(-d2 + self.well.df(u[2:-2]))))

    def to_csv(self, path) -> None:
        """Write columns (rho, theta0, theta0', theta0'', eta)."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["# profile v1"])
            w.writerow(["rho", "theta0", "dtheta0", "d2theta0", "eta"])
            for row in zip(self.rho, self.theta, self.dtheta, self.d2theta, self.eta):
                w.writerow([repr(float(v)) for v in row])


def optimal_profile(f: Optional[DoubleWell] = None, L: float = 40.0, n: int = 4096) -> OptimalProfile:
    """Tabulate the optimal profile on [-L, L].

    Parameters
    ----------
    f : DoubleWell, optional
        Potential; defaults to the quartic well with its closed form.
    L : float
        Half-width of the truncated line.
    n : int
        Number of grid intervals (rounded up to even so that rho = 0 is a node).

    Returns
    -------
    OptimalProfile
    """
    well = f if f is not None else DoubleWell.quartic()
    well.validate()
    n = int(n) + (int(n) % 2)
    rho = np.linspace(-L, L, n + 1)
    h = rho[1] - rho[0]
    if well.name == "quartic":
        theta = np.tanh(0.5 * rho)
        dtheta = 0.5 * (1.0 - theta ** 2)
        d2theta = -0.5 * theta * (1.0 - theta ** 2)
        eta = 0.5 * (3.0 * theta - theta ** 3)
        w = np.full(rho.size, h)
        w[0] = w[-1] = 0.5 * h
        sigma = float(w @ dtheta ** 2)
    else:
        theta, energy = _first_integral(well, rho[n // 2:])
        theta = np.concatenate([-theta[:0:-1], theta])
        energy = np.concatenate([-energy[:0:-1], energy])
        dtheta = np.sqrt(np.maximum(2.0 * well.f(theta), 0.0))
        d2theta = np.asarray(well.df(theta), dtype=float)
        sigma = float(2.0 * energy[-1])
        eta = 2.0 * energy / sigma
    return OptimalProfile(rho=rho, theta=theta, dtheta=dtheta, d2theta=d2theta, eta=eta,
                          alpha=well.alpha, sigma=sigma, well=well, L=float(L))


def _first_integral(well: DoubleWell, rho_pos: np.ndarray):
    """Integrate theta' = sqrt(2 f(theta)), E' = theta'^2 on rho >= 0."""

    def rhs(_, y):
        q = 2.0 * max(float(well.f(np.array(y[0]))), 0.0)
        return [np.sqrt(q), q]

    sol = solve_ivp(rhs, (0.0, rho_pos[-1]), [0.0, 0.0], method="DOP853",
                    t_eval=rho_pos, rtol=1e-13, atol=1e-15)
    if not sol.success:
        raise NoConvergence(f"profile quadrature failed: {sol.message}")
    return np.minimum(sol.y[0], 1.0), sol.y[1]


# -- linearized operator ----------------------------------------------------

def _stencil_matrix(n: int, h: float, potential: np.ndarray, closure: str):
    """Fourth-order finite-difference matrix of -d^2 + potential.

    ``closure="dirichlet"`` returns the symmetric matrix on the interior
    nodes (odd reflection at the end nodes); ``closure="robin"`` returns the
    full matrix whose first and last rows are left empty for boundary rows.
    """
    c2 = np.array([1.0, -16.0, 30.0, -16.0, 1.0]) / (12.0 * h * h)  # -D2
    if closure == "dirichlet":
        m = n - 2
        diags = [np.full(m - abs(k), c2[k + 2]) for k in range(-2, 3)]
        A = sp.diags(diags, [-2, -1, 0, 1, 2], format="lil")
        A.setdiag(A.diagonal() + potential[1:-1])
        # odd ghost u_{-1} = -u_1 (and mirrored at the right end)
        A[0, 0] = A[0, 0] - c2[0]
        A[m - 1, m - 1] = A[m - 1, m - 1] - c2[4]
        return A.tocsc()
    A = sp.lil_matrix((n, n))
    for i in range(2, n - 2):
        A[i, i - 2:i + 3] = c2
        A[i, i] += potential[i]
    for i in (1, n - 2):
        A[i, i - 1:i + 2] = np.array([-1.0, 2.0, -1.0]) / (h * h)
        A[i, i] += potential[i]
    return A


def _compat_tol(g, prof: OptimalProfile, rel: float) -> float:
    w = prof.weights
    return rel * float(np.sqrt(w @ g ** 2) * np.sqrt(w @ prof.dtheta ** 2))


def solve_linearized(g, profile: OptimalProfile, orthogonal: bool = False,
                     tol_compat: float = 1e-9) -> np.ndarray:
    """Bounded solution of -u'' + f''(theta0) u = g.

    Parameters
    ----------
    g : ndarray or callable
        Right side on ``profile.rho`` (or a function of rho).
    profile : OptimalProfile
    orthogonal : bool
        Return the solution orthogonal to theta0' instead of the one with
        u(0) = 0.
    tol_compat : float
        Relative tolerance of the compatibility test int g theta0' = 0.

    Raises
    ------
    IncompatibleRHS
        If the compatibility integral exceeds ``tol_compat * |g| |theta0'|``.
    """
    rho = profile.rho
    g = np.asarray(g(rho) if callable(g) else g, dtype=float)
    w = profile.weights
    I = float(w @ (g * profile.dtheta))
    tol = _compat_tol(g, profile, tol_compat)
    if abs(I) > tol:
        raise IncompatibleRHS(I, tol)
    if not np.any(g):
        return np.zeros_like(g)
    n, h = rho.size, profile.h
    pot = profile.potential()
    A = _stencil_matrix(n, h, pot, "robin")
    # far-field Robin rows: u' = -+ sqrt(f''(+-1)) (u - g_+-/f''(+-1))
    a_l, a_r = float(profile.well.d2f(np.array(-1.0))), float(profile.well.d2f(np.array(1.0)))
    d1 = np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / (12.0 * h)
    rhs = g.copy()
    A[0, 0:5] = d1
    A[0, 0] -= np.sqrt(a_l)
    rhs[0] = -np.sqrt(a_l) * g[0] / a_l
    A[n - 1, n - 5:n] = -d1[::-1]
    A[n - 1, n - 1] += np.sqrt(a_r)
    rhs[n - 1] = np.sqrt(a_r) * g[-1] / a_r
    # border with the kernel: u orthogonal to theta0', multiplier absorbs residue
    phi = profile.dtheta
    B = sp.bmat([[A.tocsr(), sp.csr_matrix(phi[:, None])],
                 [sp.csr_matrix((w * phi)[None, :]), None]], format="csc")
    sol = splu(B).solve(np.concatenate([rhs, [0.0]]))
    u = sol[:-1]
    if not orthogonal:
        i0 = n // 2
        u = u - (u[i0] / phi[i0]) * phi
    return u


def apply_linearized(u: np.ndarray, profile: OptimalProfile) -> np.ndarray:
    """Apply the fourth-order discrete operator in the interior (ends zero)."""
    h = profile.h
    out = np.zeros_like(u)
    out[2:-2] = (u[:-4] - 16 * u[1:-3] + 30 * u[2:-2] - 16 * u[3:-1] + u[4:]) / (12 * h * h)
    out[2:-2] += profile.potential()[2:-2] * u[2:-2]
    return out


def spectrum_L(profile: OptimalProfile, k: int = 3, potential: Optional[np.ndarray] = None,
               maxiter: int = 5000):
    """Smallest eigenpairs of the discretized linearized operator.

    Parameters
    ----------
    profile : OptimalProfile
    k : int
        Number of eigenpairs (at most 10).
    potential : ndarray, optional
        Replace f''(theta0) by this array (used for control checks).

    Returns
    -------
    (ndarray, ndarray)
        Ascending eigenvalues and eigenvectors (columns) on the full grid,
        normalized in the trapezoid inner product.
    """
    if not 1 <= k <= 10:
        raise ValueError("k must lie in 1..10")
    pot = profile.potential() if potential is None else np.asarray(potential, dtype=float)
    A = _stencil_matrix(profile.rho.size, profile.h, pot, "dirichlet")
    shift = float(np.min(pot)) - 1.0
    try:
        vals, vecs = eigsh(A, k=k, sigma=shift, which="LM", maxiter=maxiter, tol=1e-13)
    except ArpackNoConvergence as exc:
        raise NoConvergence(str(exc)) from exc
    order = np.argsort(vals)
    vals, vecs = vals[order], vecs[:, order]
    full = np.zeros((profile.rho.size, k))
    full[1:-1] = vecs
    norms = np.sqrt(profile.weights @ full ** 2)
    full = full / norms
    # fix sign: positive at the centre
    full *= np.where(full[profile.rho.size // 2] < 0, -1.0, 1.0)
    return vals, full


def c2_hat(grad_h1_sq, kappa1, divtau_v, profile: OptimalProfile, tol_compat: float = 1e-12):
    """Second-order inner correction c2(rho, s).

    Solves ``L c2 = |grad h1|^2 theta0'' - rho theta0' (kappa1 - div_tau v)``
    with ``c2(0, s) = 0`` for every sample s.

    Parameters
    ----------
    grad_h1_sq, kappa1, divtau_v : array_like
        Samples on a common s-grid (scalars broadcast).

    Returns
    -------
    ndarray
        Array of shape (n_rho, n_s).
    """
    a = np.atleast_1d(np.asarray(grad_h1_sq, dtype=float))
    b = np.atleast_1d(np.asarray(kappa1, dtype=float) - np.asarray(divtau_v, dtype=float))
    a, b = np.broadcast_arrays(a, b)
    rho = profile.rho
    rhs = np.outer(profile.d2theta, a) - np.outer(rho * profile.dtheta, b)
    w = profile.weights
    compat = w @ (rhs * profile.dtheta[:, None])
    scale = np.sqrt(w @ rhs ** 2) * np.sqrt(w @ profile.dtheta ** 2)
    bad = np.abs(compat) > tol_compat * np.maximum(scale, 1e-300)
    if np.any(bad):
        j = int(np.argmax(np.abs(compat)))
        raise IncompatibleRHS(compat[j], tol_compat * scale[j])
    # the right side is a combination of two fixed shapes
    u1 = solve_linearized(profile.d2theta, profile)
    u2 = solve_linearized(-rho * profile.dtheta, profile)
    return np.outer(u1, a) + np.outer(u2, b)
