"""Unitary maps from reference solutions to solutions of a target system.

``qat_map_1d`` is the one-dimensional map onto the free particle built from
a classical solution pair. ``map_state`` is the two-dimensional scaling map

    psi2(rho, phi, t2) = (1/b) psi1(rho/b, phi, t1) exp(i m bdot rho**2 / (2 w2 b))
                         exp(-i l (phi2 - phi1))

applied to each angular sector l of the reference separately.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import LocalityError
from .fields import FieldProfile
from .ode import ErmakovTrajectory, LinearPair
from .sampling import (SampledWavefunction, d2_rho, d_rho, half_offset_grid,
                       sector_parity)
from .states import LandauState, sample


# -- one-dimensional map ---------------------------------------------------------


@dataclass(frozen=True)
class Sampled1D:
    """Samples of a 1D wavefunction on nodes ``x`` at time ``t``."""

    x: np.ndarray
    values: np.ndarray
    t: float
    weights: np.ndarray

    def norm(self):
        return float(np.dot(self.weights, np.abs(self.values) ** 2))


def qat_map_1d(psi, pair: LinearPair, mass=1.0):
    """Map a solution of the oscillator system onto the free particle.

    ``phi(kappa, tau) = psi(x, t) sqrt(u2) exp(-(i/2)(m/w)(du2/u2) x**2)`` with
    ``kappa = x/u2`` and ``tau = -u1/u2``.

    Parameters
    ----------
    psi : Sampled1D or callable
        Samples at one time, or ``psi(x, t)``.
    pair : LinearPair
        Classical solutions of the oscillator system.

    Returns
    -------
    Sampled1D on the mapped nodes ``kappa`` (time ``tau``), or a callable
    ``phi(kappa, tau)`` when ``psi`` is callable.
    """
    profile = pair.profile
    if isinstance(psi, Sampled1D):
        t = psi.t
        u2 = pair.u2(t)
        if not u2 > 0:
            raise LocalityError(f"u2({t:.17g}) = {u2:.3g}; the map needs u2 > 0")
        du2 = pair.du2(t)
        w = profile.w(t)
        kappa = psi.x / u2
        vals = psi.values * math.sqrt(u2) * np.exp(-0.5j * mass / w * du2 / u2 * psi.x**2)
        return Sampled1D(kappa, vals, float(pair.tau(t)), psi.weights / u2)

    zeros = [z for z in pair.u2_zeros() if z > pair.span[0]]
    t_hi = zeros[0] if zeros else pair.span[1]
    t_lo = pair.span[0]

    def time_of(tau):
        f = lambda s: pair.tau(s) - tau
        lo = t_lo + 1e-9 * (t_hi - t_lo)
        hi = t_hi - (1e-9 * (t_hi - t_lo) if zeros else 0.0)
        if f(lo) > 0 or f(hi) < 0:
            raise LocalityError(f"tau={tau:.17g} is not reached while u2 > 0")
        return brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)

    def phi(kappa, tau):
        t = time_of(tau)
        u2 = pair.u2(t)
        x = np.asarray(kappa) * u2
        w = profile.w(t)
        return psi(x, t) * math.sqrt(u2) * np.exp(-0.5j * mass / w * pair.du2(t) / u2 * x**2)

    return phi


# -- two-dimensional scaling map ------------------------------------------------


class MappedState:
    """Image of a reference state under the scaling map.

    Parameters
    ----------
    reference : LandauState, Superposition or MappedState
        Any object exposing ``sectors``, ``radial``, ``radial_derivative``.
    trajectory : ErmakovTrajectory
    target_profile : FieldProfile
    """

    def __init__(self, reference, trajectory: ErmakovTrajectory, target_profile: FieldProfile):
        self.reference = reference
        self.trajectory = trajectory
        self.target_profile = target_profile
        self.mass = target_profile.mass
        self.omega0 = target_profile.omega0
        self._b_max = None

    @property
    def sectors(self):
        return self.reference.sectors

    @property
    def span(self):
        return self.trajectory.span

    @property
    def K(self):
        return self.reference.K

    @property
    def rhoH(self):
        return self.reference.rhoH

    def frame(self, t2):
        """Scalars needed at time t2: b, bdot, t1, w2 and the phase difference phi2 - phi1."""
        tr = self.trajectory
        b, bd, t1, p1, p2 = tr.state(t2)
        return b, bd, t1, self.target_profile.w(t2), p2 - p1

    def radial(self, l, rho, t2):
        b, bd, t1, w2, dphi = self.frame(t2)
        rho = np.asarray(rho, dtype=float)
        chi = np.exp(1j * self.mass * bd * rho**2 / (2 * w2 * b) - 1j * l * dphi)
        return self.reference.radial(l, rho / b, t1) * chi / b

    def radial_derivative(self, l, rho, t2):
        b, bd, t1, w2, dphi = self.frame(t2)
        rho = np.asarray(rho, dtype=float)
        chi = np.exp(1j * self.mass * bd * rho**2 / (2 * w2 * b) - 1j * l * dphi)
        u1 = self.reference.radial(l, rho / b, t1)
        du1 = self.reference.radial_derivative(l, rho / b, t1)
        return chi * (du1 / b**2 + u1 * 1j * self.mass * bd * rho / (w2 * b**2))

    def evaluate(self, rho, phi, t2):
        rho = np.asarray(rho, dtype=float)
        phi = np.asarray(phi, dtype=float)
        out = 0
        for l in self.sectors:
            out = out + self.radial(l, rho, t2) * np.exp(1j * l * phi)
        return out

    def b_max(self):
        if self._b_max is None:
            ts = np.linspace(*self.span, 2001)
            self._b_max = float(np.max(self.trajectory.b(ts)))
        return self._b_max

    def support_radius(self, b_max=1.0):
        return self.reference.support_radius(b_max * self.b_max())

    def sample(self, t2, **kwargs):
        return sample(self, t2, **kwargs)


def map_state(reference, trajectory: ErmakovTrajectory, target: FieldProfile | None = None,
              span=None) -> MappedState:
    """Build the mapped state of ``reference`` along ``trajectory``.

    Raises
    ------
    ValueError
        If the trajectory does not cover ``span``, its target differs from
        ``target``, or the reference does not live in the trajectory's
        reference system.
    """
    if target is None:
        target = trajectory.target_profile
    if target != trajectory.target_profile:
        raise ValueError("trajectory was integrated for a different target profile")
    if span is not None:
        a, b = span
        if a < trajectory.span[0] - 1e-12 or b > trajectory.span[1] + 1e-12:
            raise ValueError(f"trajectory span {trajectory.span} does not cover {span}")
    ref_prof = trajectory.ref_profile
    if isinstance(reference, MappedState):
        if reference.target_profile != ref_prof:
            raise ValueError("reference state lives in a different system than the trajectory reference")
    else:
        if not ref_prof.is_landau():
            raise ValueError("a stationary Landau reference needs a constant Landau reference profile")
        if not (math.isclose(reference.omega0, ref_prof.omega0) and math.isclose(reference.mass, ref_prof.mass)):
            raise ValueError("reference state and reference profile disagree on omega0 or mass")
    if not math.isclose(reference.mass, target.mass):
        raise ValueError("reference and target masses differ")
    return MappedState(reference, trajectory, target)


def momentum_action(mapped: MappedState, samples: SampledWavefunction, t2=None):
    """Momentum operator applied to the mapped state via reference derivatives.

    Uses ``p2 psi2 = chi [(1/b**2) p1 psi1 + (m/w2)(bdot/b) r1 psi1]`` in each
    sector, with ``r1 = rho/b``.

    Returns
    -------
    ndarray, shape (2,) + samples.values.shape
        Polar components (radial, azimuthal) of ``-i grad psi2`` on the sample nodes.
    """
    t2 = samples.time if t2 is None else t2
    b, bd, t1, w2, dphi = mapped.frame(t2)
    m = mapped.mass
    rho = samples.rho
    rho1 = rho / b
    ref = mapped.reference
    out = np.zeros((2,) + samples.values.shape, dtype=complex)
    sectors = [samples.l] if not samples.is_polar else list(mapped.sectors)
    for l in sectors:
        chi = np.exp(1j * m * bd * rho**2 / (2 * w2 * b) - 1j * l * dphi)
        u1 = ref.radial(l, rho1, t1)
        p_rad = -1j * ref.radial_derivative(l, rho1, t1) / b**2 + (m / w2) * (bd / b) * rho1 * u1
        p_az = (l / rho1) * u1 / b**2
        comps = np.stack([chi * p_rad, chi * p_az])
        if samples.is_polar:
            comps = comps[:, :, None] * np.exp(1j * l * samples.phi)[None, None, :]
        out += comps
    return out


# -- Schrodinger residual -------------------------------------------------------------


def apply_hamiltonian_fd(u, rho, h, l, profile: FieldProfile, t):
    """Radial CK Hamiltonian on one sector with fourth-order differences."""
    w = profile.w(t)
    om = profile.omega(t)
    m = profile.mass
    p = sector_parity(l)
    lap = d2_rho(u, h, p) + d_rho(u, h, p) / rho - l * l * u / rho**2
    return -(w / (2 * m)) * lap + (m * om**2 * rho**2 / (2 * w) + om * l) * u


@dataclass(frozen=True)
class ResidualResult:
    """Relative Schrodinger residual and whether the grid resolved the state."""

    value: float
    resolved: bool
    dt: float
    h: float
    samples_per_oscillation: float
    energy: float

    def __float__(self):
        return self.value


def default_residual_grid(state, count=2048):
    rho_max = state.support_radius()
    return half_offset_grid(rho_max, count)


def schrodinger_residual(psi_evaluator, profile: FieldProfile, grid=None, t2=0.0, dt=None) -> ResidualResult:
    """``||i d/dt psi - H psi|| / ||psi||`` at time t2.

    The time derivative is a centered second-order difference taken after
    removing the instantaneous mean-energy phase ``exp(-i E t)``, which is
    exact in the continuum and keeps the difference error set by the energy
    spread rather than by E itself.

    Parameters
    ----------
    psi_evaluator : object with ``sectors`` and ``radial(l, rho, t)``
    profile : FieldProfile
        System whose Hamiltonian is checked.
    grid : (rho, weights, h), optional
        Uniform half-offset grid. Defaults to 2048 nodes over the state's support.
    t2 : float
    dt : float, optional
        Defaults to ``1e-3 / omega0``.
    """
    if grid is None:
        grid = default_residual_grid(psi_evaluator)
    rho, weights, h = grid
    if dt is None:
        dt = 1e-3 / profile.omega0
    lo, hi = getattr(psi_evaluator, "span", (0.0, profile.duration))
    lo = max(lo, 0.0)
    hi = min(hi, profile.duration)

    num = den = hnum = 0.0
    kmax = 0.0
    sectors = list(psi_evaluator.sectors)
    us = {l: psi_evaluator.radial(l, rho, t2) for l in sectors}
    Hus = {l: apply_hamiltonian_fd(us[l], rho, h, l, profile, t2) for l in sectors}
    for l in sectors:
        den += np.dot(weights, np.abs(us[l]) ** 2)
        hnum += np.real(np.dot(weights, np.conj(us[l]) * Hus[l]))
    E = hnum / den
    if t2 - dt < lo:
        offs, coef = (0.0, 1.0, 2.0), (-1.5, 2.0, -0.5)
    elif t2 + dt > hi:
        offs, coef = (0.0, -1.0, -2.0), (1.5, -2.0, 0.5)
    else:
        offs, coef = (-1.0, 1.0), (-0.5, 0.5)
    for l in sectors:
        dudt = 0
        for o, c in zip(offs, coef):
            v = us[l] if o == 0.0 else psi_evaluator.radial(l, rho, t2 + o * dt)
            dudt = dudt + c * v * np.exp(1j * E * o * dt)
        dudt = dudt / dt - 1j * E * us[l]
        r = 1j * dudt - Hus[l]
        num += np.dot(weights, np.abs(r) ** 2)
        # local wavenumber from the phase gradient where the state is not negligible
        amp = np.abs(us[l])
        mask = amp > 1e-6 * amp.max()
        if np.count_nonzero(mask) > 2:
            dphase = np.abs(np.diff(np.unwrap(np.angle(us[l][mask])))) / h
            kmax = max(kmax, float(dphase.max()) if dphase.size else 0.0)
    spread = math.sqrt(max(sum(np.dot(weights, np.abs(Hus[l] - E * us[l]) ** 2) for l in sectors) / den, 0.0))
    omega_eff = max(spread, profile.omega0, 1e-300)
    spo = 2 * math.pi / (omega_eff * dt)
    resolved = spo >= 16 and kmax * h <= 2 * math.pi / 16
    return ResidualResult(math.sqrt(num / den), bool(resolved), dt, h, spo, E)
