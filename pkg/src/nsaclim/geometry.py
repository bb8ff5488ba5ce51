"""
Closed curves, signed distance and tubular coordinates.

Curves are stored by the Fourier coefficients of X0: T^1 -> R^2 with the
parameter s in [0, 1).  They are always oriented counter-clockwise so that
the bounded region (the inner phase) lies to the left; the normal
``n = (tau_y, -tau_x)`` then points out of the bounded region and the mean
curvature is ``H = -kappa`` with ``kappa`` the signed curvature, so a disk of
radius R has H = -1/R.

A point near the curve is written x = X0(s) + r n(s); r is the signed
distance (positive outside) and s the footpoint parameter.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
from scipy.spatial import cKDTree
from shapely.geometry import LinearRing

from .errors import DegenerateParametrization, NoConvergence, SelfIntersection

CURVE_FORMAT_VERSION = "curve v1"


def wavenumbers(n: int) -> np.ndarray:
    """Integer wavenumbers in numpy FFT order."""
    return np.fft.fftfreq(n, 1.0 / n)


def spectral_derivative(values: np.ndarray, order: int = 1, axis: int = -1) -> np.ndarray:
    """Derivative in s of periodic samples on a uniform grid of [0, 1)."""
    n = values.shape[axis]
    k = wavenumbers(n)
    if order % 2 == 1 and n % 2 == 0:
        k = k.copy()
        k[n // 2] = 0.0
    shape = [1] * values.ndim
    shape[axis] = n
    mult = ((2j * np.pi * k) ** order).reshape(shape)
    return np.real(np.fft.ifft(np.fft.fft(values, axis=axis) * mult, axis=axis))


def periodic_resample(values: np.ndarray, m: int, axis: int = -1) -> np.ndarray:
    """Trigonometric interpolation of periodic samples onto m points."""
    n = values.shape[axis]
    if m == n:
        return np.array(values, dtype=float)
    c = np.fft.rfft(values, axis=axis)
    keep = min(n, m) // 2
    c = np.take(c, np.arange(keep), axis=axis)
    return np.fft.irfft(c, n=m, axis=axis) * (m / n)


def fourier_eval(coeffs: np.ndarray, s, derivs=(0,), chunk: int = 8192):
    """Evaluate a band-limited real periodic function at arbitrary s.

    Parameters
    ----------
    coeffs : ndarray
        ``np.fft.fft(samples) / N`` along the last axis (shape (..., N)).
    s : array_like
        Evaluation parameters.
    derivs : tuple of int
        Derivative orders to return.

    Returns
    -------
    list of ndarray
        One array of shape (..., len(s)) per requested derivative
        (``(...,) + s.shape`` for multi-dimensional s).
    """
    coeffs = np.asarray(coeffs)
    n = coeffs.shape[-1]
    half = n // 2
    k = np.arange(half)
    ck = coeffs[..., :half].copy()
    ck[..., 1:] *= 2.0
    s_in = np.asarray(s, dtype=float)
    s = np.atleast_1d(s_in).ravel()
    lead = coeffs.shape[:-1]
    out = [np.empty(lead + (s.size,)) for _ in derivs]
    for a in range(0, s.size, chunk):
        b = min(a + chunk, s.size)
        E = np.exp(2j * np.pi * np.outer(s[a:b], k))
        for i, d in enumerate(derivs):
            cd = ck * (2j * np.pi * k) ** d
            out[i][..., a:b] = np.real(np.einsum("...k,pk->...p", cd, E))
    if s_in.ndim > 1:
        out = [o.reshape(lead + s_in.shape) for o in out]
    return out


@dataclass(frozen=True)
class ClosedCurve:
    """Spectral representation of a closed plane curve.

    Attributes
    ----------
    modes : ndarray
        Complex array (2, N) with ``np.fft.fft(X_samples, axis=1) / N``; the
        Nyquist mode is zero.
    time_tag : float
        Time the curve belongs to.
    """

    modes: np.ndarray
    time_tag: float = 0.0
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    # -- construction ------------------------------------------------------
    @classmethod
    def from_points(cls, xy: np.ndarray, t: float = 0.0, validate: bool = True) -> "ClosedCurve":
        """Curve through samples xy (2, N) taken at s_j = j / N."""
        xy = np.asarray(xy, dtype=float)
        return build_curve(np.fft.fft(xy, axis=1) / xy.shape[1], t, validate=validate)

    @property
    def n(self) -> int:
        return self.modes.shape[1]

    @property
    def s(self) -> np.ndarray:
        return np.arange(self.n) / self.n

    def _get(self, key, fn):
        if key not in self._cache:
            self._cache[key] = fn()
        return self._cache[key]

    # -- samples on the uniform grid ---------------------------------------
    def X(self, deriv: int = 0) -> np.ndarray:
        """Samples of the deriv-th s-derivative of X0, shape (2, N)."""
        def calc():
            k = wavenumbers(self.n)
            return np.real(np.fft.ifft(self.modes * (2j * np.pi * k) ** deriv, axis=1) * self.n)
        return self._get(("X", deriv), calc)

    @property
    def speed(self) -> np.ndarray:
        """|X0'(s)| on the grid."""
        return self._get("speed", lambda: np.hypot(*self.X(1)))

    @property
    def tangent(self) -> np.ndarray:
        return self.X(1) / self.speed

    @property
    def normal(self) -> np.ndarray:
        """Unit normal pointing out of the bounded region."""
        t = self.tangent
        return np.array([t[1], -t[0]])

    @property
    def kappa(self) -> np.ndarray:
        """Signed curvature (positive for a counter-clockwise circle)."""
        def calc():
            d1, d2 = self.X(1), self.X(2)
            return (d1[0] * d2[1] - d1[1] * d2[0]) / self.speed ** 3
        return self._get("kappa", calc)

    @property
    def H(self) -> np.ndarray:
        """Mean curvature in the convention H = -1/R for a disk."""
        return -self.kappa

    @property
    def length(self) -> float:
        return float(np.mean(self.speed))

    @property
    def area(self) -> float:
        x, y = self.X(0)
        dx, dy = self.X(1)
        return float(0.5 * np.mean(x * dy - y * dx))

    @property
    def centroid(self) -> np.ndarray:
        x, y = self.X(0)
        dx, dy = self.X(1)
        a = self.area
        return np.array([np.mean(0.5 * x * x * dy), -np.mean(0.5 * y * y * dx)]) / a

    def eval(self, s, derivs=(0,)):
        """X0 and derivatives at arbitrary parameters; arrays of shape (2, P)."""
        return fourier_eval(self.modes, s, derivs)

    def frame_at(self, s):
        """Point, unit tangent, unit normal, speed and H at arbitrary s."""
        X, d1, d2 = self.eval(s, (0, 1, 2))
        sp = np.hypot(d1[0], d1[1])
        tau = d1 / sp
        nrm = np.array([tau[1], -tau[0]])
        kap = (d1[0] * d2[1] - d1[1] * d2[0]) / sp ** 3
        return X, tau, nrm, sp, -kap

    def resample(self, m: int) -> "ClosedCurve":
        """Same curve with m modes (zero padding or truncation)."""
        xy = periodic_resample(self.X(0), m, axis=1)
        return build_curve(np.fft.fft(xy, axis=1) / m, self.time_tag, validate=False)

    def with_time(self, t: float) -> "ClosedCurve":
        return ClosedCurve(self.modes, float(t))

    def translate(self, shift) -> "ClosedCurve":
        m = self.modes.copy()
        m[:, 0] += np.asarray(shift, dtype=float)
        return ClosedCurve(m, self.time_tag)

    # -- reparametrization -------------------------------------------------
    def arclength_params(self, m: Optional[int] = None, anchor: float = 0.0,
                         tol: float = 1e-14, maxiter: int = 50) -> np.ndarray:
        """Parameters s_j with arclength from ``anchor`` equal to j L / m."""
        m = self.n if m is None else m
        sp = self.speed
        c = np.fft.fft(sp) / self.n
        L = float(np.real(c[0]))

        def arc(s):
            # int_anchor^s |X0'|, spectrally
            k = wavenumbers(self.n)
            kk = np.where(k == 0, 1.0, k)
            ak = np.where(k == 0, 0.0, c / (2j * np.pi * kk))
            ak[self.n // 2] = 0.0
            prim = fourier_eval(ak * 1.0, np.concatenate([[anchor], s]), (0,))[0]
            return L * (s - anchor) + prim[1:] - prim[0]

        target = L * np.arange(m) / m
        s = anchor + np.arange(m) / m
        for _ in range(maxiter):
            g = arc(s) - target
            dsp = np.hypot(*self.eval(s, (1,))[0])
            step = g / dsp
            s = s - step
            if np.max(np.abs(step)) < tol:
                return s
        raise NoConvergence("arclength reparametrization did not converge")

    def respace(self, anchor: float = 0.0, m: Optional[int] = None) -> "ClosedCurve":
        """Equal-arclength reparametrization starting at parameter ``anchor``."""
        m = self.n if m is None else m
        s = self.arclength_params(m, anchor)
        xy = self.eval(s)[0]
        return build_curve(np.fft.fft(xy, axis=1) / m, self.time_tag, validate=False)

    def dense(self, m: int) -> np.ndarray:
        """Samples at m uniform parameters (trigonometric interpolation)."""
        return periodic_resample(self.X(0), m, axis=1)

    # -- serialization -----------------------------------------------------
    def to_text(self) -> str:
        lines = [CURVE_FORMAT_VERSION, f"time {self.time_tag!r}", f"modes {self.n}"]
        for comp in range(2):
            for z in self.modes[comp]:
                lines.append(f"{z.real!r} {z.imag!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ClosedCurve":
        lines = [ln.strip() for ln in text.strip().splitlines()]
        if lines[0] != CURVE_FORMAT_VERSION:
            raise ValueError(f"unsupported curve format {lines[0]!r}")
        t = float(lines[1].split()[1])
        n = int(lines[2].split()[1])
        vals = np.array([[float(a) for a in ln.split()] for ln in lines[3:3 + 2 * n]])
        modes = (vals[:, 0] + 1j * vals[:, 1]).reshape(2, n)
        return ClosedCurve(modes, t)


def build_curve(modes, t: float = 0.0, validate: bool = True, speed_tol: float = 1e-8) -> ClosedCurve:
    """Build a counter-clockwise curve from Fourier coefficients.

    Parameters
    ----------
    modes : array_like
        Complex coefficients, shape (2, N) in numpy FFT order, normalized by N.
    t : float
        Time tag.
    validate : bool
        Check regularity and simplicity on a dense sample.

    Raises
    ------
    DegenerateParametrization, SelfIntersection
    """
    modes = np.array(modes, dtype=complex)
    if modes.ndim != 2 or modes.shape[0] != 2 or modes.shape[1] < 3:
        raise ValueError("modes must have shape (2, N) with N >= 3")
    n = modes.shape[1]
    if n % 2 == 0:
        modes[:, n // 2] = 0.0
    curve = ClosedCurve(modes, float(t))
    if curve.area < 0:
        # reverse orientation: s -> -s
        idx = (-np.arange(n)) % n
        curve = ClosedCurve(modes[:, idx], float(t))
    if validate:
        check_curve(curve, speed_tol)
    return curve


def check_curve(curve: ClosedCurve, speed_tol: float = 1e-8, oversample: int = 4) -> None:
    """Regularity and simplicity checks on a dense sample."""
    m = oversample * curve.n
    d1 = periodic_resample(curve.X(1), m, axis=1)
    sp = np.hypot(*d1)
    if np.min(sp) < speed_tol * max(np.mean(sp), 1e-300):
        raise DegenerateParametrization(f"min |X0'| = {np.min(sp):.3e}")
    if _has_self_intersection(curve.dense(m)):
        raise SelfIntersection("sampled curve crosses itself")


def _has_self_intersection(xy: np.ndarray) -> bool:
    return not LinearRing(xy.T).is_simple


def circle(R: float = 1.0, center=(0.0, 0.0), n: int = 128, t: float = 0.0) -> ClosedCurve:
    s = np.arange(n) / n
    xy = np.array([center[0] + R * np.cos(2 * np.pi * s), center[1] + R * np.sin(2 * np.pi * s)])
    return ClosedCurve.from_points(xy, t)


def ellipse(a: float, b: float, center=(0.0, 0.0), n: int = 128, t: float = 0.0) -> ClosedCurve:
    s = np.arange(n) / n
    xy = np.array([center[0] + a * np.cos(2 * np.pi * s), center[1] + b * np.sin(2 * np.pi * s)])
    return ClosedCurve.from_points(xy, t)


def ellipse_curvature(a: float, b: float, s) -> np.ndarray:
    """Signed curvature of (a cos 2 pi s, b sin 2 pi s)."""
    s = np.asarray(s, dtype=float)
    th = 2 * np.pi * s
    return a * b / (a * a * np.sin(th) ** 2 + b * b * np.cos(th) ** 2) ** 1.5


# -- tubular coordinates ----------------------------------------------------

@dataclass(frozen=True)
class ClampedOutside:
    """Marker for points farther than 3 delta from the curve."""

    sign: int


@dataclass
class ChartCoords:
    """Tubular coordinates of a batch of points.

    ``d`` is exact inside the tube and the (signed) seed distance outside;
    ``inside`` flags |d| < 3 delta.
    """

    d: np.ndarray
    s: np.ndarray
    inside: np.ndarray


class TubularChart:
    """Tubular neighborhood chart (r, s) -> X0(s) + r n(s) of a curve.

    Parameters
    ----------
    curve : ClosedCurve
    delta : float
        Tube half-width; coordinates are exact for |r| < 3 delta.
    oversample : int
        Seed table density relative to the mode count.
    """

    def __init__(self, curve: ClosedCurve, delta: float, oversample: int = 8):
        self.curve = curve
        self.delta = float(delta)
        m = oversample * curve.n
        self._seed_s = np.arange(m) / m
        X, d1 = curve.eval(self._seed_s, (0, 1))
        self._seed_xy = X.T
        self._seed_n = np.array([d1[1], -d1[0]]).T / np.hypot(*d1)[:, None]
        self._tree = cKDTree(self._seed_xy)
        if np.max(np.abs(curve.H)) * 3 * self.delta > 1.0 + 1e-9:
            raise NoConvergence("tube half-width too large for the curvature")

    def jacobian(self, r, s) -> np.ndarray:
        """J(r, s) = |X0'(s)| (1 - H(s) r)."""
        _, _, _, sp, H = self.curve.frame_at(np.atleast_1d(s))
        return sp * (1.0 - H * np.asarray(r))

    def chart_map(self, r, s) -> np.ndarray:
        X, _, nrm, _, _ = self.curve.frame_at(np.atleast_1d(s))
        return X + np.asarray(r) * nrm

    def locate(self, points: np.ndarray, tol: float = 1e-12, maxiter: int = 50) -> ChartCoords:
        """Signed distance and footpoint parameter for points of shape (P, 2)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        dist0, idx = self._tree.query(pts)
        s = self._seed_s[idx].copy()
        sign = np.sign(np.einsum("ij,ij->i", pts - self._seed_xy[idx], self._seed_n[idx]))
        sign[sign == 0] = 1.0
        near = dist0 < 3.5 * self.delta
        d = sign * dist0
        if np.any(near):
            sn, dn = self._newton(pts[near], s[near], tol, maxiter)
            s[near] = sn
            d[near] = dn
        inside = np.abs(d) < 3 * self.delta
        return ChartCoords(d=d, s=np.mod(s, 1.0), inside=inside)

    def _newton(self, pts, s, tol, maxiter):
        active = np.ones(len(s), dtype=bool)
        for _ in range(maxiter):
            if not np.any(active):
                break
            sa = s[active]
            X, d1, d2 = self.curve.eval(sa, (0, 1, 2))
            diff = X.T - pts[active]
            F = np.einsum("ij,ji->i", diff, d1)
            dF = np.einsum("ij,ij->j", d1, d1) + np.einsum("ij,ji->i", diff, d2)
            bad = dF <= 0
            if np.any(bad):
                dF = np.where(bad, np.einsum("ij,ij->j", d1, d1), dF)
            step = F / dF
            # limit steps to a few seed spacings
            lim = 4.0 / self._seed_s.size
            step = np.clip(step, -lim, lim)
            s[active] = sa - step
            done = np.abs(step) < tol
            ida = np.flatnonzero(active)
            active[ida[done]] = False
        X, d1 = self.curve.eval(s, (0, 1))
        nrm = np.array([d1[1], -d1[0]]) / np.hypot(*d1)
        d = np.einsum("ij,ji->i", pts - X.T, nrm)
        res = np.hypot(*(pts.T - X - d * nrm))
        inside = np.abs(d) < 3 * self.delta
        if np.any(active & inside) or np.any(res[inside] > 1e-10 * max(1.0, np.max(np.abs(pts)))):
            raise NoConvergence("closest-point Newton failed inside the tube")
        return s, d

    def project(self, points) -> np.ndarray:
        """Footpoints P_Gamma(x) for points within the tube."""
        c = self.locate(points)
        return self.curve.eval(c.s)[0].T


def signed_distance(chart: TubularChart, x, check_ties: bool = True):
    """Signed distance and footpoint parameter of a single point.

    Returns
    -------
    (float, float) or ClampedOutside
        ``(d, s)`` when |d| < 3 delta, otherwise a marker carrying the sign.

    Raises
    ------
    NoConvergence
        If Newton fails or two distinct arcs are equally close.
    """
    x = np.asarray(x, dtype=float).reshape(1, 2)
    c = chart.locate(x)
    d, s = float(c.d[0]), float(c.s[0])
    if not c.inside[0]:
        return ClampedOutside(int(np.sign(d)) or 1)
    if check_ties:
        k = min(16, chart._seed_s.size)
        _, idx = chart._tree.query(x, k=k)
        seeds = chart._seed_s[np.atleast_1d(idx[0])]
        far = np.abs(((seeds - s + 0.5) % 1.0) - 0.5) > 0.05
        for s0 in seeds[far][:3]:
            try:
                s1, d1 = chart._newton(x.copy(), np.array([s0]), 1e-12, 50)
            except NoConvergence:
                continue
            gap = abs(((s1[0] - s + 0.5) % 1.0) - 0.5)
            if gap > 1e-6 and abs(abs(d1[0]) - abs(d)) < 1e-9:
                raise NoConvergence("point is equidistant to two arcs")
    return d, s


def choose_delta(curve: ClosedCurve, box=(0.0, 1.0, 0.0, 1.0)) -> float:
    """min(0.3 / max|H|, dist(Gamma, box edge) / 3)."""
    x, y = curve.dense(4 * curve.n)
    clear = min(np.min(x - box[0]), np.min(box[1] - x), np.min(y - box[2]), np.min(box[3] - y))
    return float(min(0.3 / np.max(np.abs(curve.H)), clear / 3.0))


def tubular_quadrature(chart: TubularChart, f: Union[Callable, np.ndarray], half_width: float,
                       n_r: int = 32, n_s: Optional[int] = None) -> float:
    """int_{-w}^{w} int_0^1 f(r, s) J(r, s) ds dr.

    Parameters
    ----------
    f : callable or ndarray
        ``f(r, s)`` broadcasting over r of shape (n_r, 1) and s of shape
        (1, n_s), or samples on the nodes returned by :func:`quadrature_nodes`.
    half_width : float
        Must not exceed 3 delta.
    """
    if half_width > 3 * chart.delta + 1e-15:
        raise ValueError("half_width exceeds 3 delta")
    if half_width == 0:
        return 0.0
    r, wr, s = quadrature_nodes(chart, half_width, n_r, n_s)
    vals = f(r[:, None], s[None, :]) if callable(f) else np.asarray(f)
    _, _, _, sp, H = chart.curve.frame_at(s)
    J = sp[None, :] * (1.0 - H[None, :] * r[:, None])
    return float(wr @ (np.broadcast_to(vals, J.shape) * J).mean(axis=1))


def quadrature_nodes(chart: TubularChart, half_width: float, n_r: int = 32, n_s: Optional[int] = None):
    """Gauss-Legendre nodes in r and uniform nodes in s."""
    n_s = chart.curve.n if n_s is None else n_s
    x, w = np.polynomial.legendre.leggauss(n_r)
    return half_width * x, half_width * w, np.arange(n_s) / n_s


# -- surface operators ------------------------------------------------------

@dataclass
class SurfaceOperatorSet:
    """Surface differential operators in tubular coordinates.

    For a function h(s) lifted to the tube, the operators are

    * grad^Gamma h = grad S h_s,
    * Lap^Gamma h = |grad S|^2 h_ss + (Lap S) h_s,
    * d_t^Gamma h = h_t + (d_t S) h_s,

    evaluated at (r, s) on the s-grid of the curve.  At r = 0 they are the
    restricted operators; the differences L^grad, L^Lap, L^t vanish there.

    Parameters
    ----------
    curve : ClosedCurve
    dXdt : ndarray, optional
        d_t X0 on the s-grid, shape (2, N) (zero if omitted).
    dndt : ndarray, optional
        d_t n on the s-grid.
    """

    curve: ClosedCurve
    dXdt: Optional[np.ndarray] = None
    dndt: Optional[np.ndarray] = None

    def __post_init__(self):
        N = self.curve.n
        if self.dXdt is None:
            self.dXdt = np.zeros((2, N))
        if self.dndt is None:
            self.dndt = np.zeros((2, N))
        self.a = self.curve.speed
        self.a_s = spectral_derivative(self.a)
        self.H = self.curve.H
        self.H_s = spectral_derivative(self.H)
        self.tau = self.curve.tangent

    def _A(self, r):
        return self.a * (1.0 - self.H * r)

    # metric coefficients
    def grad_S(self, r=0.0):
        return self.tau / self._A(r)

    def grad_S_sq(self, r=0.0):
        return 1.0 / self._A(r) ** 2

    def lap_S(self, r=0.0):
        A = self._A(r)
        A_s = self.a_s * (1.0 - self.H * r) - self.a * self.H_s * r
        return -A_s / A ** 3

    def dt_S(self, r=0.0):
        v = self.dXdt + r * self.dndt
        return -np.einsum("ij,ij->j", self.tau, v) / self._A(r)

    # operators
    def grad(self, h, r=0.0):
        return self.grad_S(r) * spectral_derivative(h)

    def lap(self, h, r=0.0):
        return self.grad_S_sq(r) * spectral_derivative(h, 2) + self.lap_S(r) * spectral_derivative(h)

    def dt(self, h, h_t, r=0.0):
        return h_t + self.dt_S(r) * spectral_derivative(h)

    # differences to the restricted operators
    def L_grad(self, h, r):
        return self.grad(h, r) - self.grad(h, 0.0)

    def L_lap(self, h, r):
        return self.lap(h, r) - self.lap(h, 0.0)

    def L_t(self, h, r):
        return (self.dt_S(r) - self.dt_S(0.0)) * spectral_derivative(h)

    # analytic r-derivatives at r = 0
    def dr_grad(self, h):
        return self.tau * self.H * spectral_derivative(h) / self.a

    def dr_lap(self, h):
        g2 = 2.0 * self.H / self.a ** 2
        ls = (self.a * self.H_s - 2.0 * self.H * self.a_s) / self.a ** 3
        return g2 * spectral_derivative(h, 2) + ls * spectral_derivative(h)

    def dr_dt(self, h):
        tn = np.einsum("ij,ij->j", self.tau, self.dndt)
        tx = np.einsum("ij,ij->j", self.tau, self.dXdt)
        return (-tn / self.a - tx * self.H / self.a) * spectral_derivative(h)
