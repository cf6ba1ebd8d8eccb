import math

import numpy as np
import pytest

from twistmap.errors import ProfileError
from twistmap.fields import (
    FieldProfile,
    Segment,
    build_fig2_profile,
    dissipation_factor,
    omega_at,
    omega_from_field,
)


def test_solenoid_plateau_gives_omega0():
    p = FieldProfile((Segment("solenoid", 4.0),), omega0=2.0)
    assert omega_at(p, 2.0) == pytest.approx(2.0, abs=1e-14)


def test_free_segment_gives_zero():
    p = FieldProfile((Segment("free", 1.0), Segment("solenoid", 2.0), Segment("free", 3.0)), ramp=0.0)
    assert omega_at(p, 0.3) == pytest.approx(0.0, abs=1e-12)
    assert omega_at(p, 5.0) == pytest.approx(0.0, abs=1e-12)


def test_ramp_midpoint_is_sqrt_half():
    p = FieldProfile((Segment("free", 1.0), Segment("solenoid", 2.0)), ramp=0.05)
    assert omega_at(p, 1.0) == pytest.approx(math.sqrt(0.5), abs=1e-14)


def test_outside_span_raises():
    p = FieldProfile((Segment("solenoid", 1.0),))
    with pytest.raises(ProfileError):
        omega_at(p, 1.5)
    with pytest.raises(ProfileError):
        omega_at(p, -0.1)


def test_undamped_w_is_one():
    p = FieldProfile((Segment("solenoid", 3.0),))
    assert np.all(dissipation_factor(p, np.linspace(0, 3, 7)) == 1.0)
    assert p.is_undamped()


def test_constant_gamma_exponential():
    p = FieldProfile.constant(1.0, gamma=0.2, duration=10.0)
    assert dissipation_factor(p, 5.0) == pytest.approx(math.exp(-1.0), rel=1e-14)
    assert dissipation_factor(p, 5.0) == pytest.approx(0.3678794, abs=1e-7)


def test_piecewise_gamma_multiplies():
    p = FieldProfile((Segment("damped", 2.0, 1.0, 0.3), Segment("solenoid", 1.0), Segment("damped", 2.0, 1.0, 0.1)))
    assert p.w(5.0) == pytest.approx(math.exp(-0.6) * math.exp(-0.2), rel=1e-14)
    assert p.w(2.5) == pytest.approx(math.exp(-0.6), rel=1e-14)


def test_w_nonincreasing():
    p = FieldProfile((Segment("damped", 2.0, 1.0, 0.3), Segment("free", 1.0), Segment("damped", 2.0, 0.5, 0.1)))
    w = p.w(np.linspace(0, 5, 501))
    assert w[0] == 1.0
    assert np.all(np.diff(w) <= 0)
    assert np.all(w > 0)


def test_fig2_all_free_is_free_propagation():
    p = build_fig2_profile(Segment("free", 1.0), 1.0, (1.0, 0.0), 1.0)
    assert np.all(p.omega(np.linspace(0, p.duration, 91)) == 0.0)
    with pytest.raises(ProfileError):
        build_fig2_profile((1.0, -1.0), 1.0, 1.0, 1.0)


def test_fig2_zero_ramp_is_piecewise_constant():
    p = build_fig2_profile(1.0, 1.0, 2.0, 1.0, lead=0.5, ramp=0.0)
    t = np.array([0.25, 1.0, 2.0, 3.5, 5.0])
    assert np.allclose(p.omega(t), [0, 1, 0, 1, 0], atol=0)
    assert len(p.segments) == 5


def test_fig2_ramped_is_continuous_with_finite_slope():
    p = build_fig2_profile(1.55, 1.5, 4.0, 2.45, ramp=0.05)
    t = np.linspace(0, p.duration, 20001)
    om = p.omega(t)
    assert np.max(np.abs(np.diff(om))) < 0.01
    assert np.all(np.isfinite(p.dF(t)))
    assert np.max(np.abs(p.dF(t))) == pytest.approx(1 / (2 * 0.05), rel=1e-3)


def test_ramp_to_zero_converges_pointwise():
    t = np.array([0.3, 0.9, 1.2, 1.8])
    vals = []
    for r in (0.1, 0.01, 0.001):
        p = FieldProfile((Segment("free", 1.0), Segment("solenoid", 1.0)), ramp=r)
        vals.append(np.abs(p.F(t) - np.array([0, 0, 1, 1])).max())
    assert vals[2] < 1e-12 < vals[0]


@pytest.mark.parametrize("kwargs", [
    dict(kind="solenoid", duration=0.0),
    dict(kind="solenoid", duration=1.0, F=-1.0),
    dict(kind="solenoid", duration=1.0, gamma=-0.1),
    dict(kind="free", duration=1.0, F=1.0),
    dict(kind="damped", duration=1.0, F=1.0, gamma=0.0),
    dict(kind="magnet", duration=1.0),
])
def test_segment_validation(kwargs):
    with pytest.raises(ProfileError):
        Segment(**kwargs)


def test_segment_defaults():
    assert Segment("free", 1.0).F == 0.0
    assert Segment("solenoid", 1.0).F == 1.0


def test_omega_from_field_natural_units():
    # |e| B / 2m with e**2 = 4 pi alpha
    assert omega_from_field(2.0, 1.0) == pytest.approx(math.sqrt(4 * math.pi / 137.035999084), rel=1e-15)


def test_with_segment_changes_one_duration():
    p = build_fig2_profile(1.0, 1.0, 2.0, 1.0)
    q = p.with_segment(2, duration=3.0)
    assert q.duration == pytest.approx(p.duration + 2.0)
    assert q.segments[1] == p.segments[1]
