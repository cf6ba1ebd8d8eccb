"""Twisted Landau states in time-dependent and damped magnetic fields.

Stationary Landau states are carried to a target field profile by the
scaling map built on the Ermakov-Pinney envelope ``b(t)``; a radial
Crank-Nicolson solver checks the result independently.
"""

from .current import CurrentField, continuity_residual, current_direct, current_transformed, flux_balance
from .errors import (
    BoundaryError,
    ChargeUndefinedError,
    ConfigError,
    IntegrationError,
    LocalityError,
    ProfileError,
    QuadratureError,
    ScenarioError,
    SingularityError,
    TwistmapError,
)
from .fields import FieldProfile, Segment, build_fig2_profile, dissipation_factor, omega_at, omega_from_field
from .mapping import MappedState, map_state, qat_map_1d, schrodinger_residual
from .observables import (
    ObservableSeries,
    ermakov_lewis,
    hamiltonian_matrix_element,
    lens_averages,
    mean_energy,
    mean_rho2,
    oam_and_charge,
    observable_series,
    radiation_diagnostics,
    twiss,
)
from .ode import ErmakovTrajectory, LinearPair, ermakov_via_pair_ratio, first_integral, integrate_ermakov, integrate_linear_pair
from .oracle import EvolvedState, RadialGrid, compare, evolve
from .scenario import Scenario, load_scenario, match_lens, parse_scenario, preset, run_scenario, validate
from .states import LandauState, Superposition, evaluate_landau, make_landau_state, normalization_constant

__all__ = [name for name in dir() if not name.startswith("_")]
