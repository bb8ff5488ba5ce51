import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st
from loguru import logger
from scipy.sparse.linalg import eigsh

from nsaclim.asymptotics import approx_phase, build_inner_expansion
from nsaclim.cli import main as cli_main
from nsaclim.diffuse_sim import DiffuseConfig, grid_distance, run
from nsaclim.errors import GridMismatch, InsufficientData, NonPositiveError
from nsaclim.geometry import circle
from nsaclim.harness import (StudyConfig, circle_cA_builder, error_norms, extended_normal, parse_curve,
                             rate_fit, read_config, run_converge, slope_stderr, smallest_eigenvalues,
                             snapshot_norms, spectral_sweep, w1_diagnostic)
from nsaclim.profile1d import optimal_profile, spectrum_L
from nsaclim.stokes import Grid


def _geom(curve, grid, delta=0.1):
    d, s, _, _ = grid_distance(curve, grid, delta)
    return d, extended_normal(curve, s)


# -- norms ------------------------------------------------------------------------

def test_error_norms_zero():
    g = Grid(32)
    c = circle(0.3, (0.5, 0.5), n=32)
    u = np.tanh(np.random.default_rng(0).normal(size=(32, 32)))
    row = error_norms([0.0, 0.01], [u, u], [u, u], [c, c], g, 0.1, 0.05)
    for k in ("sup_l2", "ext_grad", "tan_grad", "eps_normal", "composite"):
        assert row[k] == 0.0


def test_error_norms_synthetic_rate():
    g = Grid(48)
    c = circle(0.3, (0.5, 0.5), n=32)
    X, Y = g.mesh()
    base = np.sin(2 * np.pi * X) * np.cos(2 * np.pi * Y)
    geo = [_geom(c, g)] * 3
    for k in (1.0, 2.0, 3.0):
        rows = []
        for eps in (0.08, 0.06, 0.04, 0.03):
            u = eps ** k * base
            r = error_norms([0.0, 0.005, 0.01], [u] * 3, [np.zeros_like(u)] * 3, [c] * 3, g, 0.1, eps,
                            geometry=geo)
            rows.append(r)
        for key in ("sup_l2", "ext_grad", "tan_grad"):
            f = rate_fit([(e, r[key]) for e, r in zip((0.08, 0.06, 0.04, 0.03), rows)])
            assert abs(f.order - k) < 0.02
        f = rate_fit([(e, r["eps_normal"]) for e, r in zip((0.08, 0.06, 0.04, 0.03), rows)])
        assert abs(f.order - (k + 1)) < 0.02


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_gradient_splitting_identity(seed):
    g = Grid(32)
    c = circle(0.25, (0.5, 0.5), n=32)
    d, nrm = _geom(c, g)
    u = np.random.default_rng(seed).normal(size=(32, 32))
    n = snapshot_norms(u, g, d, nrm, 0.1)
    assert abs(n.tan_grad + n.normal_grad - n.full_grad_tube) <= 1e-10 * n.full_grad_tube


def test_norms_direct_summation():
    n = 32
    g = Grid(n)
    c = circle(0.3, (0.5, 0.5), n=32)
    d, nrm = _geom(c, g)
    u = np.random.default_rng(3).normal(size=(n, n))
    dv = np.random.default_rng(4).normal(size=(2, n, n))
    got = snapshot_norms(u, g, d, nrm, 0.1, dv, q=1.5)
    h = g.h
    l2 = ext = tan = nor = lq = 0.0
    for i in range(n):
        for j in range(n):
            gx = (u[(i + 1) % n, j] - u[(i - 1) % n, j]) / (2 * h)
            gy = (u[i, (j + 1) % n] - u[i, (j - 1) % n]) / (2 * h)
            l2 += h * h * u[i, j] ** 2
            if abs(d[i, j]) >= 0.1:
                ext += h * h * (gx * gx + gy * gy)
            if abs(d[i, j]) < 0.2:
                gn = gx * nrm[0, i, j] + gy * nrm[1, i, j]
                tx, ty = gx - gn * nrm[0, i, j], gy - gn * nrm[1, i, j]
                tan += h * h * (tx * tx + ty * ty)
                nor += h * h * gn * gn
            lq += h * h * math.hypot(dv[0, i, j], dv[1, i, j]) ** 1.5
    lq = lq ** (1 / 1.5)
    for a, b in ((got.l2, l2), (got.ext_grad, ext), (got.tan_grad, tan), (got.normal_grad, nor), (got.vel_lq, lq)):
        assert abs(a - b) <= 1e-12 * max(1.0, abs(b))


def test_grid_mismatch():
    g = Grid(32)
    c = circle(0.3, (0.5, 0.5), n=32)
    with pytest.raises(GridMismatch):
        error_norms([0.0], [np.zeros((32, 32))], [np.zeros((40, 40))], [c], g, 0.1, 0.05)


# -- rate fits ----------------------------------------------------------------------

def test_rate_fit_exact():
    rows = [(e, 3.0 * e ** 2) for e in (0.08, 0.06, 0.04, 0.03)]
    f = rate_fit(rows)
    assert abs(f.order - 2.0) <= 1e-12
    assert slope_stderr(rows) < 1e-10


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_rate_fit_noisy(seed):
    rng = np.random.default_rng(seed)
    eps = np.array([0.08, 0.06, 0.04, 0.03])
    err = 2.0 * eps ** 1.5 * np.exp(rng.uniform(-0.02, 0.02, size=4))
    assert abs(rate_fit(list(zip(eps, err))).order - 1.5) < 0.1


def test_rate_fit_errors():
    with pytest.raises(InsufficientData):
        rate_fit([(0.1, 1.0), (0.05, 0.5)])
    with pytest.raises(InsufficientData):
        rate_fit([(0.1, 1.0), (0.1, 0.5), (0.05, 0.2)])
    with pytest.raises(NonPositiveError):
        rate_fit([(0.1, 1.0), (0.05, 0.0), (0.02, 0.2)])


# -- spectral -------------------------------------------------------------------------

@pytest.mark.parametrize("bc", ["periodic", "dirichlet"])
def test_spectral_constant_control(bc):
    eps, n = 0.05, 40
    g = Grid(n, 1.0, bc)
    lam = smallest_eigenvalues(np.ones((n, n)), eps, g, k=1)[0]
    ref = 1 / eps ** 2 + (0.0 if bc == "periodic" else 2 * (2 - 2 * math.cos(math.pi / n)) / g.h ** 2)
    assert abs(lam - ref) <= 0.01 * ref
    lam_m = smallest_eigenvalues(-np.ones((n, n)), eps, g, k=1)[0]
    assert abs(lam_m - ref) <= 0.01 * ref


def test_spectral_planar_matches_1d():
    # planar double layer: the 2D spectrum is the 1D one plus y-Laplacian modes
    eps, n = 0.05, 80
    g = Grid(n)
    prof = optimal_profile()
    x = g.centers
    c1 = prof.theta_at((x - 0.25) / eps) * -prof.theta_at((x - 0.75) / eps)
    cA = np.repeat(c1[:, None], n, axis=1)
    lam2 = smallest_eigenvalues(cA, eps, g, k=2)
    e = np.ones(n)
    D = sp.diags([-e[:-1], 2 * e, -e[:-1]], [-1, 0, 1], format="lil")
    D[0, n - 1] = D[n - 1, 0] = -1.0
    A1 = sp.csr_matrix(D) / g.h ** 2 + sp.diags((3 * c1 ** 2 - 1) / 2 / eps ** 2)
    lam1 = np.sort(eigsh(A1.tocsc(), k=2, sigma=-100.0, return_eigenvectors=False))
    assert np.allclose(lam2, lam1, atol=1e-8 * max(1.0, abs(lam1).max()))
    # continuum 1D operator has a zero mode, so eps^2 lambda_1 is small
    vals, _ = spectrum_L(prof, k=1)
    assert abs(vals[0]) < 1e-6
    assert abs(eps ** 2 * lam2[0]) < 0.05


def test_spectral_ladder_bounded():
    rows = spectral_sweep(circle_cA_builder(R=0.3), [0.1, 0.05])
    for r in rows:
        assert r["lambda1"] >= -12.0
        assert r["lambda1"] <= r["lambda2"] <= r["lambda3"]


# -- w1 ---------------------------------------------------------------------------------

def test_w1_zero_for_zero_residual(ellipse_traj):
    eps = 0.08
    g = Grid(50)
    exp_ = build_inner_expansion(ellipse_traj, eps, order=2)
    cA0 = approx_phase(exp_, 10, g, 0.1, 0).c
    w = w1_diagnostic(cA0, cA0, exp_.h2[10].values, eps, ellipse_traj.curves[10], g, 0.1, exp_.h1.h[10].values)
    assert w.h1_norm == 0.0
    assert np.max(np.abs(w.trace_n)) == 0.0


@pytest.fixture(scope="module")
def w1_rows(ellipse_traj):
    i = len(ellipse_traj.times) - 1
    T = float(ellipse_traj.times[-1])
    out = []
    for eps in (0.08, 0.04):
        g = Grid(int(math.ceil(4 / eps)))
        res = run(DiffuseConfig(epsilon=eps, grid_n=g.n, dt=0.1 * eps ** 2, t_final=T, delta=0.1,
                                output_every=T, seed_curve=ellipse_traj.curves[0]))
        exp_ = build_inner_expansion(ellipse_traj, eps, order=2)
        cA0 = approx_phase(exp_, i, g, 0.1, 0).c
        args = (res.phases[-1], cA0, exp_.h2[i].values, eps, ellipse_traj.curves[i], g, 0.1, exp_.h1.h[i].values)
        with_g = w1_diagnostic(*args, include_g=True)
        no_g = w1_diagnostic(*args, include_g=False)
        out.append((eps, with_g, no_g))
    return out


def test_w1_h1_bounded(w1_rows):
    (_, a, _), (_, b, _) = w1_rows
    assert np.isfinite(a.h1_norm) and b.h1_norm <= a.h1_norm


def test_w1_g_term_shrinks(w1_rows):
    diffs = [abs(w.h1_norm - w0.h1_norm) for _, w, w0 in w1_rows]
    # the g contribution is at least O(eps) between the two ladder members
    assert diffs[1] <= 0.5 * diffs[0]


# -- study, config, CLI -------------------------------------------------------------------

def _small(eps):
    return StudyConfig(eps=eps, t_final=0.002, output_every=0.001, sharp_grid=64)


def test_single_member_skips_fits():
    msgs = []
    sink = logger.add(msgs.append, level="WARNING")
    try:
        rep = run_converge(_small([0.08]))
    finally:
        logger.remove(sink)
    assert rep.fits == {}
    assert any("rate fits skipped" in str(m) for m in msgs)
    assert len(rep.rows) == 1


def test_determinism(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    run_converge(_small([0.08, 0.06]), str(a))
    run_converge(_small([0.08, 0.06]), str(b))
    for name in ("converge.csv", "fits.csv", "series_composite.dat"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    assert (a / "converge.csv").read_text().startswith("# converge v1")


def test_config_parsing(tmp_path):
    p = tmp_path / "study.cfg"
    p.write_text("# ladder\neps = 0.08, 0.04\nseed_curve = ellipse:0.3:0.25:0.5:0.5:32  # comment\n"
                 "t_final = 0.01\norder = 3\n")
    cfg = StudyConfig.from_dict(read_config(str(p)))
    assert cfg.eps == [0.08, 0.04] and cfg.order_c == 3 and cfg.t_final == 0.01
    c = parse_curve(cfg.seed_curve)
    assert c.n == 32
    with pytest.raises(ValueError):
        StudyConfig.from_dict({"bogus": 1})


def test_cli_smoke(tmp_path, capsys):
    assert cli_main(["profile", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "profile.dat").exists()
    assert cli_main(["spectral", "--eps", "0.1", "--out", str(tmp_path)]) == 0
    text = (tmp_path / "spectral.csv").read_text()
    assert text.startswith("# spectral v1")
    assert "lambda_min" in capsys.readouterr().out
