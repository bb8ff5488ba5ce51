import numpy as np
import pytest
from scipy.integrate import solve_ivp

from nsaclim.diffuse_sim import (DiffuseConfig, chemical_potential, energy, init_phase, initial_state,
                                 interface_radius, run, step)
from nsaclim.errors import ResolutionError
from nsaclim.geometry import circle
from nsaclim.stokes import Grid


def test_init_phase_values(profile):
    n = 64
    g = Grid(n)
    h = g.h
    cx = cy = 0.5 + h / 2          # a cell centre
    R = 16 * h
    ph = init_phase(circle(R, (cx, cy), n=64), 0.07, profile, 0.1, g)
    X, Y = g.mesh()
    r = np.hypot(X - cx, Y - cy)
    assert np.all(ph.c[r - R < -0.2] == -1.0)
    assert np.all(ph.c[r - R > 0.2] == 1.0)
    i, j = np.argmin(np.abs(g.centers - (cx + R))), np.argmin(np.abs(g.centers - cy))
    assert abs(ph.c[i, j]) < 1e-12
    assert np.max(np.abs(ph.c)) <= 1.0


def test_resolution_guard(profile):
    with pytest.raises(ResolutionError):
        init_phase(circle(0.3, (0.5, 0.5), n=64), 0.05, profile, 0.1, Grid(64))


def test_uniform_state_stationary():
    cfg = DiffuseConfig(epsilon=0.08, grid_n=64, dt=1e-4, t_final=1e-3, output_every=1e-3)
    res = run(cfg, initial=-np.ones((64, 64)))
    assert np.all(res.phases[-1] == -1.0)
    assert res.velocities[-1].max_norm() == 0.0


def _planar(n, eps, x0=0.3, x1=0.75):
    x = (np.arange(n) + 0.5) / n
    c1 = np.tanh((x - x0) / (2 * eps)) * -np.tanh((x - x1) / (2 * eps))
    return np.repeat(c1[:, None], n, axis=1), x


@pytest.mark.parametrize("scheme", ["strang"])
def test_planar_step_matches_1d_reference(scheme):
    eps, n = 0.05, 80
    dt = 0.02 * eps ** 2
    c0, x = _planar(n, eps)
    cfg = DiffuseConfig(epsilon=eps, grid_n=n, dt=dt, t_final=dt, output_every=dt, stokes=False, scheme=scheme)
    res = run(cfg, initial=c0)
    h = 1.0 / n

    def rhs(_, u):
        lap = (np.roll(u, 1) + np.roll(u, -1) - 2 * u) / h ** 2
        return lap - 0.5 * (u ** 3 - u) / eps ** 2

    ref = solve_ivp(rhs, (0, dt), c0[:, 0], method="DOP853", rtol=1e-12, atol=1e-13).y[:, -1]
    assert np.max(np.abs(res.phases[-1] - ref[:, None])) <= 1e-6


def test_energy_decreases_one_step():
    cfg = DiffuseConfig(epsilon=0.08, grid_n=50, dt=6e-4, t_final=6e-4, output_every=6e-4)
    st = initial_state(cfg)
    new = step(st, cfg.dt, cfg)
    assert new.energies[-1] <= st.energy0 * (1 + 1e-6)


def test_zero_time_run():
    cfg = DiffuseConfig(epsilon=0.08, grid_n=50, t_final=0.0)
    res = run(cfg)
    st = initial_state(cfg)
    assert len(res.phases) == 1
    assert np.array_equal(res.phases[0], st.phase.c)
    assert res.report["energy0"] == pytest.approx(energy(st.phase.c, 0.08, cfg.grid()))


def test_shrinking_circle_radius():
    eps, n = 0.08, 50
    cfg = DiffuseConfig(epsilon=eps, grid_n=n, dt=0.1 * eps ** 2, t_final=0.02, output_every=0.005)
    res = run(cfg)
    g = cfg.grid()
    for t, c in zip(res.times, res.phases):
        assert abs(interface_radius(c, g) - np.sqrt(0.09 - 2 * t)) <= 2 * (eps + g.h)
    assert res.report["energy_ok"] and res.report["max_principle_ok"]
    assert max(res.report["max_abs"]) <= 1.0 + 1e-6


def test_temporal_richardson():
    eps, n = 0.08, 50
    finals = []
    for dt in (4e-4, 2e-4, 1e-4):
        cfg = DiffuseConfig(epsilon=eps, grid_n=n, dt=dt, t_final=4e-3, output_every=4e-3)
        finals.append(run(cfg).phases[-1])
    e1 = np.max(np.abs(finals[0] - finals[1]))
    e2 = np.max(np.abs(finals[1] - finals[2]))
    assert np.log2(e1 / e2) >= 0.9


def test_chemical_potential_stencil():
    eps, n = 0.08, 40
    g = Grid(n)
    rng = np.random.default_rng(7)
    c = np.tanh(rng.normal(size=(n, n)))
    mu = chemical_potential(c, eps, g)
    ref = np.empty_like(c)
    for i in range(n):
        for j in range(n):
            lap = (c[(i + 1) % n, j] + c[i - 1, j] + c[i, (j + 1) % n] + c[i, j - 1] - 4 * c[i, j]) / g.h ** 2
            ref[i, j] = -eps * lap + 0.5 * (c[i, j] ** 3 - c[i, j]) / eps
    assert np.max(np.abs(mu - ref)) <= 1e-12 * np.max(np.abs(ref))


def test_dirichlet_box_structure():
    eps = 0.08
    cfg = DiffuseConfig(epsilon=eps, grid_n=50, dt=0.1 * eps ** 2, t_final=0.005, output_every=0.005, bc="dirichlet")
    res = run(cfg)
    assert res.report["energy_ok"] and res.report["max_principle_ok"]
