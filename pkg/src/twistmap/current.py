"""Probability current of mapped states, computed directly and by transformation.

The current in the damped system is taken as

    j = (1/m) [Re(psi* sqrt(w) p psi) - e A |psi|**2],   e A = -(m omega / sqrt(w)) rho e_phi

so ``j_rho = (sqrt(w)/m) Im(psi* d_rho psi)`` and
``j_phi = (sqrt(w)/m) Im(psi* d_phi psi)/rho + (omega rho/sqrt(w)) |psi|**2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fields import FieldProfile
from .observables import fmt
from .sampling import SampledWavefunction, d_phi, d_rho, gauss_legendre_grid, polar_angles, polar_ghost, sector_parity


@dataclass(frozen=True)
class CurrentField:
    """Polar current components on a (rho, phi) grid."""

    rho: np.ndarray
    phi: np.ndarray
    j_rho: np.ndarray
    j_phi: np.ndarray

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write("rho,phi,j_rho,j_phi\n")
            for i, r in enumerate(self.rho):
                for k, p in enumerate(self.phi):
                    fh.write(f"{fmt(r)},{fmt(p)},{fmt(self.j_rho[i, k])},{fmt(self.j_phi[i, k])}\n")

    def sup_difference(self, other: "CurrentField", density=None, floor=1e-8):
        """``max |j - j'| / max |j'|`` over nodes where ``density`` exceeds ``floor``."""
        mask = np.ones(self.j_rho.shape, bool) if density is None else density > floor
        diff = np.hypot(self.j_rho - other.j_rho, self.j_phi - other.j_phi)[mask]
        scale = np.hypot(other.j_rho, other.j_phi)[mask].max()
        return float(diff.max() / scale)


def gauge_potential(trajectory, t2, r1, appendix_form=True):
    """Gauge field ``G = m (sqrt(w1)/w2)(bdot/b) r1``.

    With ``appendix_form=False`` the factor ``sqrt(w1)`` is dropped; the two
    agree whenever the reference is undamped.
    """
    tr = trajectory
    b, bd, t1 = tr.b(t2), tr.bdot(t2), tr.t1(t2)
    w2 = tr.target_profile.w(t2)
    w1 = tr.ref_profile.w(t1) if appendix_form else 1.0
    return tr.target_profile.mass * math.sqrt(w1) / w2 * (bd / b) * np.asarray(r1, dtype=float)


def _polar(samples: SampledWavefunction, nphi=32):
    if samples.is_polar:
        return samples.values, samples.phi, polar_ghost(samples.values)
    phi = polar_angles(nphi)
    e = np.exp(1j * samples.l * phi)[None, :]
    vals = samples.values[:, None] * e
    return vals, phi, None


def _coefficients(profile, t, convention):
    """Prefactors of the kinetic and field parts of the current."""
    w, om, m = profile.w(t), profile.omega(t), profile.mass
    if convention == "verbatim":
        return math.sqrt(w) / m, om / math.sqrt(w)
    if convention == "conserved":
        # the current that satisfies continuity for the damped Hamiltonian
        return w / m, om
    raise ValueError(f"unknown convention {convention!r}")


def current_direct(samples: SampledWavefunction, profile: FieldProfile, t2=None, nphi=32,
                   convention="verbatim"):
    """Current of sampled wavefunction from finite differences.

    Requires uniform half-offset samples (``samples.h``); the radial derivative
    is fourth order, the angular one spectral.

    Parameters
    ----------
    convention : {"verbatim", "conserved"}
        ``verbatim`` uses ``sqrt(w)`` as in the module formula; ``conserved``
        uses the factor ``w`` (and ``omega`` without ``1/sqrt(w)``), which is
        the current obeying continuity when ``w`` varies. Both coincide for
        ``w = 1``.
    """
    if samples.h is None:
        raise ValueError("current_direct needs uniform half-offset samples")
    t2 = samples.time if t2 is None else t2
    psi, phi, ghost = _polar(samples, nphi)
    if ghost is None:
        dr = d_rho(samples.values, samples.h, sector_parity(samples.l))[:, None] * np.exp(1j * samples.l * phi)[None, :]
        dp = 1j * samples.l * psi
    else:
        dr = d_rho(psi, samples.h, ghost=ghost)
        dp = d_phi(psi)
    kin, fld = _coefficients(profile, t2, convention)
    rho = samples.rho[:, None]
    j_rho = kin * np.imag(np.conj(psi) * dr)
    j_phi = kin * np.imag(np.conj(psi) * dp) / rho + fld * rho * np.abs(psi) ** 2
    return CurrentField(samples.rho, phi, j_rho, j_phi)


def _reference_fields(reference, rho1, phi, t1, rotate):
    psi = np.zeros((len(rho1), len(phi)), dtype=complex)
    dr = np.zeros_like(psi)
    dp = np.zeros_like(psi)
    for l in reference.sectors:
        e = np.exp(1j * l * (phi - rotate))[None, :]
        u = reference.radial(l, rho1, t1)[:, None]
        psi += u * e
        dr += reference.radial_derivative(l, rho1, t1)[:, None] * e
        dp += 1j * l * u * e
    return psi, dr, dp


def current_transformed(reference, trajectory, t2, rho, phi=None):
    """Current of the mapped state assembled from reference-frame quantities.

    ``j2 = sqrt(w2/w1) / b**2 {j1/b + [(1/b) eA1/m - (w1/w2) b (B2/B1) eA1/m + (b/m) G] |psi1|**2}``

    evaluated at ``r1 = r/b`` and ``t1(t2)``. ``(B2/B1) eA1/m`` has azimuthal
    component ``-omega2 rho1 / sqrt(w1)``.
    """
    tr = trajectory
    if phi is None:
        phi = polar_angles(32)
    rho = np.asarray(rho, dtype=float)
    b, bd, t1, p1, p2 = tr.state(t2)
    ref_p, tgt = tr.ref_profile, tr.target_profile
    w1, om1 = ref_p.w(t1), ref_p.omega(t1)
    w2, om2 = tgt.w(t2), tgt.omega(t2)
    m = tgt.mass
    rho1 = rho / b
    psi, dr, dp = _reference_fields(reference, rho1, phi, t1, p2 - p1)
    dens = np.abs(psi) ** 2
    r1 = rho1[:, None]
    sw1 = math.sqrt(w1)
    j1_rho = sw1 / m * np.imag(np.conj(psi) * dr)
    j1_phi = sw1 / m * np.imag(np.conj(psi) * dp) / r1 + om1 * r1 / sw1 * dens
    eA1_phi = -om1 * r1 / sw1
    eA12_phi = -om2 * r1 / sw1
    G_rho = gauge_potential(tr, t2, r1)
    pref = math.sqrt(w2 / w1) / b**2
    j_rho = pref * (j1_rho / b + (b / m) * G_rho * dens)
    j_phi = pref * (j1_phi / b + (eA1_phi / b - (w1 / w2) * b * eA12_phi) * dens)
    return CurrentField(rho, np.asarray(phi), j_rho, j_phi)


def current_analytic(state, profile: FieldProfile, t, rho, phi=None, convention="verbatim"):
    """Current of any state object from its analytic radial derivative."""
    if phi is None:
        phi = polar_angles(32)
    rho = np.asarray(rho, dtype=float)
    psi, dr, dp = _reference_fields(state, rho, phi, t, 0.0)
    kin, fld = _coefficients(profile, t, convention)
    r = rho[:, None]
    j_rho = kin * np.imag(np.conj(psi) * dr)
    j_phi = kin * np.imag(np.conj(psi) * dp) / r + fld * r * np.abs(psi) ** 2
    return CurrentField(rho, np.asarray(phi), j_rho, j_phi)


@dataclass(frozen=True)
class ContinuityResult:
    """L2 norms of ``dn/dt + div j``, of ``dn/dt`` and of ``n``.

    ``relative`` divides the residual by ``||dn/dt|| + omega0 ||n||``, a rate
    scale that stays finite for stationary states.
    """

    residual: float
    rate: float
    density: float = 0.0
    omega0: float = 1.0

    @property
    def relative(self):
        scale = self.rate + self.omega0 * self.density
        return self.residual / scale if scale > 0 else self.residual


def continuity_residual(state, profile: FieldProfile, t2, grid=None, dt=None, nphi=32,
                        convention="verbatim"):
    """Check ``d|psi|**2/dt + div j = 0`` on a uniform polar grid.

    ``div j`` uses fourth-order radial and spectral angular differences of
    the direct current; ``d|psi|**2/dt`` a fourth-order centered difference.
    """
    from .states import sample

    if dt is None:
        dt = 1e-3 / profile.omega0
    if grid is None:
        grid = (state.support_radius(), 2048)
    rho_max, count = grid
    s = sample(state, t2, rho_max=rho_max, count=count, grid="uniform", nphi=nphi)
    if not s.is_polar:
        s = s.to_polar(nphi)
    j = current_direct(s, profile, t2, convention=convention)
    rho = s.rho[:, None]
    flux = rho * j.j_rho
    div = d_rho(flux, s.h, ghost=polar_ghost(flux)) / rho + d_phi(j.j_phi) / rho

    def dens(t):
        return np.abs(sample(state, t, rho_max=rho_max, count=count, grid="uniform", nphi=nphi).to_polar(nphi).values) ** 2

    dndt = (dens(t2 - 2 * dt) - 8 * dens(t2 - dt) + 8 * dens(t2 + dt) - dens(t2 + 2 * dt)) / (12 * dt)
    res = np.real(dndt + div)

    def l2(f):
        return math.sqrt(2 * np.pi * float(s.weights @ (f**2).mean(axis=1)))

    return ContinuityResult(l2(res), l2(dndt), l2(np.abs(s.values) ** 2), profile.omega0)


def flux_balance(state, profile: FieldProfile, t, radius, dt=None, count=200, nphi=32,
                 convention="verbatim"):
    """Outward flux through a circle and minus the rate of change of the enclosed probability.

    Returns
    -------
    (flux, -dP/dt) : tuple of float
    """
    if dt is None:
        dt = 1e-3 / profile.omega0
    phi = polar_angles(nphi)
    j = current_analytic(state, profile, t, np.array([radius]), phi, convention)
    flux = float(radius * 2 * np.pi * j.j_rho[0].mean())
    rho, w = gauss_legendre_grid(radius, count)

    def enclosed(tt):
        # sectors are orthogonal on every circle
        return sum(2 * np.pi * np.dot(w, np.abs(state.radial(l, rho, tt)) ** 2) for l in state.sectors)

    dP = (enclosed(t - 2 * dt) - 8 * enclosed(t - dt) + 8 * enclosed(t + dt) - enclosed(t + 2 * dt)) / (12 * dt)
    return flux, -float(dP)
