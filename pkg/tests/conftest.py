import numpy as np
import pytest

from twistmap.fields import FieldProfile, build_fig2_profile
from twistmap.mapping import map_state
from twistmap.ode import integrate_ermakov
from twistmap.scenario import FIG2_LAYOUT
from twistmap.states import make_landau_state


@pytest.fixture(scope="session")
def landau():
    return FieldProfile.landau()


@pytest.fixture(scope="session")
def fig2_profile():
    return build_fig2_profile(*FIG2_LAYOUT, lead=0.5, ramp=0.05)


@pytest.fixture(scope="session")
def fig2_trajectory(landau, fig2_profile):
    return integrate_ermakov(landau, fig2_profile, 0.8, 0.0)


@pytest.fixture(scope="session")
def fig2_mapped(fig2_trajectory):
    return map_state(make_landau_state(0, 10), fig2_trajectory)


@pytest.fixture(scope="session")
def lens_trajectory(landau):
    """b0 = 0.8 in the reference field itself over ten periods."""
    return integrate_ermakov(landau, FieldProfile.constant(1.0, duration=20 * np.pi), 0.8, 0.0)


@pytest.fixture(scope="session")
def damped_profile():
    return FieldProfile.constant(1.0, gamma=0.1, duration=10.0)


@pytest.fixture(scope="session")
def damped_mapped(landau, damped_profile):
    tr = integrate_ermakov(landau, damped_profile, 0.8, 0.0)
    return map_state(make_landau_state(0, 10), tr)
