import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nsaclim.errors import IncompatibleRHS, NotADoubleWell
from nsaclim.profile1d import (DoubleWell, apply_linearized, c2_hat, optimal_profile, solve_linearized,
                               spectrum_L)


def test_closed_form_profile(profile):
    assert np.max(np.abs(profile.theta - np.tanh(profile.rho / 2))) <= 1e-10
    assert profile.rho[0] == -40.0 and profile.rho[-1] == 40.0


def test_alpha_and_sigma(profile):
    assert profile.alpha == pytest.approx(1.0, abs=1e-14)
    # int sech^4(r/2) / 4 dr = 2/3
    assert abs(profile.sigma - 2.0 / 3.0) <= 1e-8


def test_generic_well_matches_closed_form():
    w = DoubleWell.quartic()
    w = DoubleWell(w.f, w.df, w.d2f, w.d3f, name="numeric")
    p = optimal_profile(w, L=20.0, n=2049)
    assert np.max(np.abs(p.theta - np.tanh(p.rho / 2))) < 1e-8
    assert abs(p.sigma - 2.0 / 3.0) < 1e-6


def test_rejects_non_double_well():
    w = DoubleWell(lambda s: s ** 2, lambda s: 2 * s, lambda s: 2 + 0 * s, lambda s: 0 * s)
    with pytest.raises(NotADoubleWell):
        w.validate()


def test_eta_closed_form_and_oddness(profile):
    t = np.tanh(profile.rho / 2)
    assert np.max(np.abs(profile.eta - (3 * t - t ** 3) / 2)) < 1e-8
    assert np.max(np.abs(profile.theta + profile.theta[::-1])) <= 1e-10
    assert np.max(np.abs(profile.eta + profile.eta[::-1])) <= 1e-10
    assert profile.ode_residual() <= 1e-8


def test_linearized_identity(profile):
    u = solve_linearized(profile.d2theta, profile)
    assert np.max(np.abs(u + profile.rho * profile.dtheta / 2)) <= 1e-6


def test_linearized_zero(profile):
    assert np.max(np.abs(solve_linearized(np.zeros_like(profile.rho), profile))) == 0.0


def test_linearized_incompatible(profile):
    with pytest.raises(IncompatibleRHS) as exc:
        solve_linearized(profile.dtheta, profile)
    assert exc.value.value == pytest.approx(2.0 / 3.0, abs=1e-8)


@settings(max_examples=20, deadline=None)
@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(0.3, 3.0))
def test_linearized_roundtrip_orthogonal(a, b, w):
    p = optimal_profile(L=30.0, n=2049)
    g = (a + b * p.rho) * np.exp(-(p.rho / w) ** 2)
    g = g - (p.weights @ (g * p.dtheta)) / p.sigma * p.dtheta
    u = solve_linearized(g, p, orthogonal=True)
    assert abs(p.weights @ (u * p.dtheta)) <= 1e-8 * max(np.sqrt(p.weights @ u ** 2), 1e-300)
    r = apply_linearized(u, p)
    core = np.abs(p.rho) < 20
    assert np.max(np.abs(r - g)[core]) < 1e-6 * max(1.0, np.max(np.abs(g)))


def test_c2_hat_cases(profile):
    z = c2_hat(np.zeros(4), np.ones(4), np.ones(4), profile)
    assert np.max(np.abs(z)) == 0.0
    c = c2_hat(np.ones(3), np.zeros(3), np.zeros(3), profile)
    assert np.max(np.abs(c - (-profile.rho * profile.dtheta / 2)[:, None])) <= 1e-6


def test_c2_hat_compatibility_random(profile):
    rng = np.random.default_rng(3)
    s = np.arange(32) / 32
    h1 = sum(rng.normal() * np.cos(2 * np.pi * k * s + rng.random()) for k in range(1, 4))
    gh2 = np.gradient(h1, s) ** 2
    kappa = rng.normal(size=32)
    c = c2_hat(gh2, kappa, 0.3 * kappa, profile)
    rhs = np.outer(profile.d2theta, gh2) - np.outer(profile.rho * profile.dtheta, 0.7 * kappa)
    assert np.max(np.abs(profile.weights @ (rhs * profile.dtheta[:, None]))) <= 1e-12
    assert c.shape == (profile.rho.size, 32)


def test_spectrum(profile):
    lam, vec = spectrum_L(profile, k=3)
    assert abs(lam[0]) <= 1e-6
    t = profile.dtheta / np.sqrt(profile.weights @ profile.dtheta ** 2)
    assert abs(profile.weights @ (vec[:, 0] * t)) >= 1 - 1e-6
    # second bound state of the sech^2 well sits at 3/4
    assert lam[1] == pytest.approx(0.75, abs=1e-6)


def test_spectrum_constant_potential(profile):
    lam, _ = spectrum_L(profile, k=1, potential=np.ones_like(profile.rho))
    # Dirichlet box of length 2L adds (pi / 2L)^2
    assert lam[0] == pytest.approx(1.0 + (np.pi / 80.0) ** 2, rel=1e-5)
