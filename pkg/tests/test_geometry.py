import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nsaclim.geometry import (ClampedOutside, SurfaceOperatorSet, TubularChart, build_curve, circle, ellipse,
                              signed_distance, tubular_quadrature)


def ellipse_H(a, b, s):
    # independent closed form for X = (a cos 2 pi s, b sin 2 pi s)
    t = 2 * np.pi * np.asarray(s)
    return -a * b / (a ** 2 * np.sin(t) ** 2 + b ** 2 * np.cos(t) ** 2) ** 1.5


def test_unit_circle_curvature():
    c = circle(1.0, n=32)
    assert np.allclose(c.H, -1.0, atol=1e-12)


def test_build_curve_from_modes():
    N = 16
    s = np.arange(N) / N
    X = np.array([np.cos(2 * np.pi * s), np.sin(2 * np.pi * s)])
    c = build_curve(np.fft.fft(X, axis=1) / N)
    assert np.allclose(c.H, -1.0, atol=1e-12)


def test_radius_two_speed():
    c = circle(2.0, n=32)
    assert np.allclose(c.speed, 4 * np.pi, rtol=1e-13)


def test_ellipse_curvature_closed_form():
    c = ellipse(2.0, 1.0, n=128)
    s = np.array([0.0, 0.25, 0.5])
    idx = (s * c.n).astype(int)
    assert np.max(np.abs(c.H[idx] - ellipse_H(2.0, 1.0, s))) < 1e-10


def test_signed_distance_examples():
    ch = TubularChart(circle(1.0, n=64), 0.3)
    d, s = signed_distance(ch, (1.5, 0.0))
    assert abs(d - 0.5) < 1e-12 and min(s, 1 - s) < 1e-12
    ch_big = TubularChart(circle(1.0, n=64), 0.33)
    assert signed_distance(ch_big, (0.0, 0.0), check_ties=False) == ClampedOutside(-1)
    # the centre is at distance exactly 1 below the curve
    loc = ch_big.locate(np.array([[0.0, 0.0]]))
    assert abs(loc.d[0] + 1.0) < 1e-12


def test_grad_d_dot_n_on_curve():
    c = ellipse(1.0, 0.7, n=64)
    ch = TubularChart(c, 0.1)
    s = np.linspace(0, 1, 9, endpoint=False)
    X, _, nrm, _, _ = c.frame_at(s)
    h = 1e-5
    for k in range(s.size):
        x = X[:, k]
        g = [(ch.locate(np.array([x + h * e])).d[0] - ch.locate(np.array([x - h * e])).d[0]) / (2 * h)
             for e in np.eye(2)]
        assert abs(ch.locate(np.array([x])).d[0]) < 1e-12
        assert abs(np.dot(g, nrm[:, k]) - 1.0) < 1e-6


def test_annulus_area():
    ch = TubularChart(circle(1.0, n=64), 0.1)
    assert abs(tubular_quadrature(ch, lambda r, s: np.ones_like(r * s), 0.1) - np.pi * (1.1 ** 2 - 0.9 ** 2)) < 1e-8
    assert tubular_quadrature(ch, lambda r, s: r + 0 * s, 0.0) == 0.0


def test_odd_integrand_against_grid_sum():
    # int r J over the tube equals int d dx over the annulus; for the unit
    # circle both equal 4 pi w^3 / 3 (the Jacobian is not even in r)
    w = 0.1
    ch = TubularChart(circle(1.0, n=64), w)
    q = tubular_quadrature(ch, lambda r, s: r + 0 * s, w)
    n = 2000
    x = (np.arange(n) + 0.5) / n * 2.4 - 1.2
    X, Y = np.meshgrid(x, x, indexing="ij")
    d = np.hypot(X, Y) - 1.0
    grid_sum = np.sum(np.where(np.abs(d) < w, d, 0.0)) * (2.4 / n) ** 2
    assert abs(q - 4 * np.pi * w ** 3 / 3) < 1e-10
    assert abs(q - grid_sum) < 2e-5


@settings(max_examples=25, deadline=None)
@given(st.floats(0.0, 1.0), st.floats(-0.09, 0.09))
def test_projection_idempotent(s0, r):
    c = ellipse(1.0, 0.7, n=64)
    ch = TubularChart(c, 0.1)
    X, _, nrm, _, _ = c.frame_at(np.array([s0]))
    p = (X + r * nrm).T
    foot = ch.project(p)
    assert np.allclose(ch.project(foot + r * nrm.T), foot, atol=1e-10)


def test_distance_time_derivative_and_laplacian():
    # moving circle R(t): d_t = -V with V = R'(t) the outward normal speed
    R0, Rdot, dt = 0.8, -0.3, 1e-6
    x = np.array([[0.9, 0.1]])
    d0 = TubularChart(circle(R0, n=64), 0.1).locate(x).d[0]
    d1 = TubularChart(circle(R0 + Rdot * dt, n=64), 0.1).locate(x).d[0]
    assert abs((d1 - d0) / dt + Rdot) < 1e-6
    # Lap d on the curve equals -H
    c = ellipse(1.0, 0.7, n=64)
    ch = TubularChart(c, 0.1)
    h = 1e-4
    for s in (0.0, 0.1, 0.37):
        X, _, _, _, H = c.frame_at(np.array([s]))
        x = X[:, 0]
        pts = np.array([x, x + [h, 0], x - [h, 0], x + [0, h], x - [0, h]])
        d = ch.locate(pts).d
        lap = (d[1:].sum() - 4 * d[0]) / h ** 2
        assert abs(lap + H[0]) < 1e-5


def test_grad_S_normal_orthogonal():
    c = ellipse(1.0, 0.7, n=64)
    ch = TubularChart(c, 0.1)
    rng = np.random.default_rng(1)
    s = rng.random(6)
    r = rng.uniform(-0.08, 0.08, 6)
    X, _, nrm, _, _ = c.frame_at(s)
    h = 1e-5
    for k in range(6):
        x = X[:, k] + r[k] * nrm[:, k]
        gs = []
        for e in np.eye(2):
            sp = ch.locate(np.array([x + h * e])).s[0]
            sm = ch.locate(np.array([x - h * e])).s[0]
            gs.append(((sp - sm + 0.5) % 1.0 - 0.5) / (2 * h))
        assert abs(np.dot(gs, nrm[:, k])) < 1e-8


def test_chain_rule_second_order():
    c = ellipse(1.0, 0.7, n=64)
    ch = TubularChart(c, 0.15)
    ops = SurfaceOperatorSet(c)

    def phi(r, s):
        return r ** 2 + r * np.sin(2 * np.pi * s)

    s0 = np.array([0.13])
    r0 = 0.05
    X, _, nrm, sp, H = c.frame_at(s0)
    tau = np.array([-nrm[1], nrm[0]])
    x = (X + r0 * nrm)[:, 0]
    dphi_dr = 2 * r0 + np.sin(2 * np.pi * s0[0])
    dphi_ds = r0 * 2 * np.pi * np.cos(2 * np.pi * s0[0])
    gradS = tau[:, 0] / (sp[0] * (1 - H[0] * r0))
    exact = dphi_dr * nrm[:, 0] + dphi_ds * gradS
    errs = []
    for h in (2e-2, 1e-2, 5e-3):
        g = []
        for e in np.eye(2):
            lp = ch.locate(np.array([x + h * e]))
            lm = ch.locate(np.array([x - h * e]))
            g.append((phi(lp.d[0], lp.s[0]) - phi(lm.d[0], lm.s[0])) / (2 * h))
        errs.append(np.linalg.norm(np.array(g) - exact))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders > 1.8)
    assert ops.grad_S(0.0).shape == (2, c.n)
