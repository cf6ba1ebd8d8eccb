import numpy as np
import pytest

from twistmap.current import (
    CurrentField,
    continuity_residual,
    current_analytic,
    current_direct,
    current_transformed,
    flux_balance,
    gauge_potential,
)
from twistmap.fields import FieldProfile
from twistmap.mapping import map_state
from twistmap.ode import integrate_ermakov
from twistmap.sampling import polar_angles
from twistmap.states import Superposition, make_landau_state, sample


def _agreement(mapped, t, count=8192, nphi=32):
    s = sample(mapped, t, rho_max=mapped.support_radius(), count=count, grid="uniform", nphi=nphi)
    jd = current_direct(s, mapped.target_profile, t)
    jt = current_transformed(mapped.reference, mapped.trajectory, t, s.rho, jd.phi)
    return jd.sup_difference(jt, np.abs(s.values) ** 2)


def test_stationary_current_is_azimuthal(landau):
    s = make_landau_state(1, 3)
    smp = sample(s, 0.4, count=2048, grid="uniform")
    j = current_direct(smp, landau, 0.4)
    assert np.max(np.abs(j.j_rho)) < 1e-14
    assert np.max(np.ptp(j.j_phi, axis=1)) < 1e-14


def test_ground_state_current_is_diamagnetic(landau):
    s = make_landau_state(0, 0)
    smp = sample(s, 0.0, count=2048, grid="uniform")
    j = current_direct(smp, landau, 0.0)
    expected = smp.rho[:, None] * np.abs(smp.values[:, None]) ** 2
    assert np.allclose(j.j_phi, expected, rtol=1e-12, atol=0)
    assert np.all(j.j_phi >= 0)


def test_flux_balance(fig2_mapped, fig2_profile):
    for t, r in ((2.0, 3.0), (6.0, 5.0)):
        flux, rate = flux_balance(fig2_mapped, fig2_profile, t, r)
        assert abs(flux - rate) <= 1e-6


def test_transformed_identity_reduces_to_reference(landau):
    s = make_landau_state(1, 2)
    tr = integrate_ermakov(landau, FieldProfile.landau(duration=2.0), 1.0, 0.0)
    rho, phi = np.linspace(0.05, 6, 80), polar_angles(16)
    jt = current_transformed(s, tr, 1.0, rho, phi)
    j1 = current_analytic(s, landau, 1.0, rho, phi)
    assert np.allclose(jt.j_rho, j1.j_rho, atol=1e-13)
    assert np.allclose(jt.j_phi, j1.j_phi, atol=1e-13)


def test_transformed_matches_direct_fig2(fig2_mapped):
    for t in (1.0, 2.05, 6.0):
        assert _agreement(fig2_mapped, t) <= 1e-8


def test_transformed_matches_direct_damped(damped_mapped):
    for t in (1.0, 5.0):
        assert _agreement(damped_mapped, t) <= 1e-6


def test_transformed_matches_direct_superposition(lens_trajectory):
    sup = Superposition([(1, make_landau_state(0, 0)), (1, make_landau_state(0, 1)), (0.5, make_landau_state(1, 1))])
    assert _agreement(map_state(sup, lens_trajectory), 1.7) <= 1e-8


def test_current_not_invariant(lens_trajectory, landau):
    s = make_landau_state(0, 10)
    m = map_state(s, lens_trajectory)
    t = 1.0
    rho, phi = np.linspace(1, 8, 30), polar_angles(8)
    j2 = current_analytic(m, landau, t, rho, phi)
    j1 = current_analytic(s, landau, lens_trajectory.t1(t), rho, phi)
    assert np.max(np.abs(j2.j_rho - j1.j_rho)) > 1e-3
    b = lens_trajectory.b(t)
    # density part of the rescaling: |psi2|^2 = |psi1(r/b)|^2 / b^2
    j1s = current_analytic(s, landau, lens_trajectory.t1(t), rho / b, phi)
    expected_rho = j1s.j_rho / b**3 + lens_trajectory.bdot(t) / b * rho[:, None] * np.abs(s.envelope(rho / b)[:, None] / b) ** 2
    assert np.allclose(j2.j_rho, expected_rho, atol=1e-12)


def test_gauge_potential(landau, lens_trajectory):
    tr = integrate_ermakov(landau, FieldProfile.landau(duration=2.0), 1.0, 0.0)
    assert np.all(gauge_potential(tr, 1.0, np.array([1.0, 2.0])) == 0)
    r = np.array([0.5, -1.5])
    g1 = gauge_potential(lens_trajectory, 1.0, r)
    g2 = gauge_potential(lens_trajectory, 1.0, 2 * r)
    assert np.allclose(g2, 2 * g1)
    expected = lens_trajectory.bdot(1.0) / lens_trajectory.b(1.0) * r
    assert np.allclose(g1, expected, rtol=1e-14)


def test_gauge_forms_agree_without_damping(lens_trajectory):
    r = np.array([1.0, 2.0])
    assert np.allclose(gauge_potential(lens_trajectory, 2.0, r), gauge_potential(lens_trajectory, 2.0, r, appendix_form=False))


def test_continuity_undamped(fig2_mapped, fig2_profile):
    for t in (1.0, 2.05, 6.0):
        assert continuity_residual(fig2_mapped, fig2_profile, t).relative <= 1e-4


def test_continuity_damped_needs_conserved_convention(damped_mapped, damped_profile):
    t = 4.0
    verbatim = continuity_residual(damped_mapped, damped_profile, t).relative
    conserved = continuity_residual(damped_mapped, damped_profile, t, convention="conserved").relative
    assert conserved <= 1e-4 < verbatim


def test_current_csv(tmp_path, landau):
    s = sample(make_landau_state(0, 1), count=64, grid="uniform", nphi=4)
    current_direct(s, landau, 0.0).to_csv(tmp_path / "j.csv")
    lines = (tmp_path / "j.csv").read_bytes().split(b"\n")
    assert lines[0] == b"rho,phi,j_rho,j_phi"
    assert len(lines) == 64 * 4 + 2 and b"\r" not in lines[1]


def test_unknown_convention(landau):
    s = sample(make_landau_state(0, 1), count=64, grid="uniform")
    with pytest.raises(ValueError):
        current_direct(s, landau, 0.0, convention="other")
