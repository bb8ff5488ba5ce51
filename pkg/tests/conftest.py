import numpy as np
import pytest

from nsaclim.profile1d import optimal_profile


@pytest.fixture(scope="session")
def profile():
    return optimal_profile()


@pytest.fixture(scope="session")
def circle_traj():
    """Short two-phase run of the default circle with stored Stokes fields."""
    from nsaclim.geometry import circle
    from nsaclim.sharp_sim import SharpConfig, run_sharp
    return run_sharp(SharpConfig(circle(0.3, (0.5, 0.5), n=64), t_final=0.005, dt=1e-4, grid_n=64,
                                 keep_fields=True))


@pytest.fixture(scope="session")
def ellipse_traj():
    from nsaclim.geometry import ellipse
    from nsaclim.sharp_sim import SharpConfig, run_sharp
    return run_sharp(SharpConfig(ellipse(0.3, 0.26, (0.5, 0.5), n=64), t_final=0.005, dt=1e-4, grid_n=64,
                                 keep_fields=True))


def rng(seed=0):
    return np.random.default_rng(seed)


ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE):
        terminalreporter.write_line(line)
