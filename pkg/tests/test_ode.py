import math

import numpy as np
import pytest

from twistmap.errors import LocalityError, SingularityError
from twistmap.fields import FieldProfile, Segment
from twistmap.ode import (
    ermakov_via_pair_ratio,
    first_integral,
    integrate_ermakov,
    integrate_linear_pair,
)

TOL = 1e-10


def test_undamped_pair_is_cos_sin():
    pair = integrate_linear_pair(FieldProfile.landau(duration=2 * np.pi), (0, 2 * np.pi), TOL)
    t = np.linspace(0, 2 * np.pi, 301)
    assert np.max(np.abs(pair.u1(t) - np.cos(t))) < 1e-8
    assert np.max(np.abs(pair.u2(t) - np.sin(t))) < 1e-8
    assert np.max(np.abs(pair.wronskian(t) - 1)) < 100 * TOL


def test_free_pair_is_one_and_t():
    p = FieldProfile((Segment("free", 5.0),))
    pair = integrate_linear_pair(p, (0, 5), TOL)
    t = np.linspace(0, 5, 51)
    assert np.max(np.abs(pair.u1(t) - 1)) < 1e-12
    assert np.max(np.abs(pair.u2(t) - t)) < 1e-10


def test_damped_wronskian_is_dissipation_factor():
    p = FieldProfile.constant(1.0, gamma=0.1, duration=10.0)
    pair = integrate_linear_pair(p, (0, 10), TOL)
    t = np.linspace(0, 10, 401)
    assert np.max(np.abs(pair.wronskian(t) - np.exp(-0.1 * t))) < 100 * TOL


def test_custom_initial_conditions_and_dependence_check():
    p = FieldProfile.landau(duration=3.0)
    pair = integrate_linear_pair(p, (0, 3), TOL, initial=(0.0, 2.0, 3.0, 0.0))
    assert pair.wronskian(1.3) == pytest.approx(-6.0, abs=1e-8)
    with pytest.raises(ValueError):
        integrate_linear_pair(p, (0, 3), TOL, initial=(1.0, 1.0, 2.0, 2.0))


def test_ermakov_fixed_point(landau):
    tr = integrate_ermakov(landau, FieldProfile.landau(duration=20.0), 1.0, 0.0)
    t = np.linspace(0, 20, 201)
    assert np.max(np.abs(tr.b(t) - 1)) < 1e-12
    assert np.max(np.abs(tr.bdot(t))) < 1e-12


def test_ermakov_free_expansion_closed_form(landau):
    tr = integrate_ermakov(landau, FieldProfile((Segment("free", 5.0),)), 0.8, 0.0)
    t = np.linspace(0, 5, 101)
    assert np.max(np.abs(tr.b(t) - np.sqrt(0.64 + t**2 / 0.64))) < 1e-9


def test_ermakov_lens_turning_points(lens_trajectory):
    t = np.linspace(0, 20 * np.pi, 20001)
    b = lens_trajectory.b(t)
    assert b.min() == pytest.approx(0.8, abs=1e-8)
    assert b.max() == pytest.approx(1.25, abs=1e-6)


def test_ermakov_residual_within_100_tol(fig2_trajectory, lens_trajectory):
    for tr in (fig2_trajectory, lens_trajectory):
        t = np.linspace(*tr.span, 4001)
        assert np.max(np.abs(tr.residual(t))) <= 100 * TOL


def test_ermakov_damped_residual(landau, damped_profile):
    tr = integrate_ermakov(landau, damped_profile, 0.8, 0.0)
    t = np.linspace(0, 10, 2001)
    assert np.max(np.abs(tr.residual(t))) <= 100 * TOL


def test_singularity_error_names_time(landau):
    with pytest.raises(SingularityError) as info:
        integrate_ermakov(landau, FieldProfile.landau(duration=1.0), 1e-7, 0.0)
    assert info.value.time == 0.0
    # strong inward kick in free space: b reaches the floor only for a huge b_floor
    with pytest.raises(SingularityError) as info:
        integrate_ermakov(landau, FieldProfile((Segment("free", 3.0),)), 1.0, -10.0, b_floor=0.2)
    assert 0 < info.value.time < 3
    assert "t=" in str(info.value)


@pytest.mark.parametrize("b, bdot, omega0, expected", [(1.0, 0.0, 1.0, 1.0), (0.8, 0.0, 1.0, 1.10125)])
def test_first_integral_values(b, bdot, omega0, expected):
    assert first_integral(b, bdot, omega0) == pytest.approx(expected, abs=1e-15)


def test_first_integral_conserved(lens_trajectory):
    t = np.linspace(*lens_trajectory.span, 5001)
    c = lens_trajectory.first_integral(t)
    assert np.ptp(c) <= 1e-8


def test_accumulators_for_self_map(landau):
    tr = integrate_ermakov(landau, FieldProfile.landau(duration=5.0), 1.0, 0.0)
    t = np.linspace(0, 5, 11)
    assert np.max(np.abs(tr.t1(t) - t)) < 1e-10
    assert np.max(np.abs(tr.phi2(t) - tr.phi1(t))) < 1e-10


def test_pair_ratio_self_is_one():
    p = FieldProfile.landau(duration=2.0)
    r = integrate_linear_pair(p, (0, 2), TOL)
    tr = ermakov_via_pair_ratio(r, r)
    t = np.linspace(0.05, 2.0, 9)
    assert np.max(np.abs(tr.b(t) - 1)) < 1e-8


def test_pair_ratio_free_target_matches_direct(landau):
    ref = integrate_linear_pair(FieldProfile.landau(duration=3.0), (0, 3), TOL)
    free = FieldProfile((Segment("free", 2.0),))
    tgt = integrate_linear_pair(free, (0, 2), TOL)
    ratio = ermakov_via_pair_ratio(ref, tgt)
    direct = integrate_ermakov(landau, free, 1.0, 0.0)
    t = np.linspace(0.1, 2.0, 9)
    assert np.max(np.abs(ratio.b(t) - np.sqrt(1 + t**2))) < 1e-8
    assert np.max(np.abs(ratio.b(t) - direct.b(t))) < 1e-8
    assert np.max(np.abs(ratio.t1(t) - np.arctan(t))) < 1e-8


def test_pair_ratio_constant_lens_matches_direct(landau):
    # target u2 vanishes after one b period pi/sqrt(2); stop just short of it
    lens = FieldProfile.constant(2.0, duration=2.2)
    ref = integrate_linear_pair(FieldProfile.landau(duration=4.0), (0, 4), TOL)
    tgt = integrate_linear_pair(lens, lens.span, TOL)
    ratio = ermakov_via_pair_ratio(ref, tgt)
    direct = integrate_ermakov(landau, lens, 1.0, 0.0)
    t = np.linspace(0.05, 2.2, 12)
    assert np.max(np.abs(ratio.b(t) - direct.b(t))) < 1e-8


def test_pair_ratio_locality_error():
    ref = integrate_linear_pair(FieldProfile.landau(duration=5.0), (0, 5), TOL)
    tgt = integrate_linear_pair(FieldProfile.landau(duration=4.0), (0, 4), TOL)
    # target u2 = sin t vanishes at pi inside the span
    with pytest.raises(LocalityError):
        ermakov_via_pair_ratio(ref, tgt)


def test_perturbed_scales_b(fig2_trajectory):
    p = fig2_trajectory.perturbed(1.1)
    assert p.b(3.0) == pytest.approx(1.1 * fig2_trajectory.b(3.0), rel=1e-15)
    assert np.max(np.abs(p.residual(np.linspace(1, 9, 50)))) > 1e-2
