"""Expectation values, matrix elements, invariants and envelope diagnostics."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, fields

import numpy as np
from scipy.optimize import brentq

from .errors import ChargeUndefinedError
from .mapping import MappedState
from .ode import ErmakovTrajectory, first_integral
from .sampling import SampledWavefunction, d_phi, d_rho, gauss_legendre_grid, polar_angles, polar_ghost, sector_parity
from .states import LandauState, make_landau_state

QUAD_NODES = 400


# -- polar quadrature on analytic states -----------------------------------------------


@dataclass(frozen=True)
class _PolarFields:
    rho: np.ndarray
    weights: np.ndarray
    phi: np.ndarray
    psi: np.ndarray
    d_rho: np.ndarray
    d_phi: np.ndarray

    def integrate(self, f):
        return 2 * np.pi * (self.weights @ np.asarray(f).mean(axis=1))


def _polar_fields(state, t, count=QUAD_NODES, nphi=None, rotate=0.0, rho_max=None) -> _PolarFields:
    """Values and analytic derivatives of ``state`` on a Gauss-Legendre polar grid.

    ``rotate`` multiplies sector l by ``exp(-i l rotate)``.
    """
    sectors = list(state.sectors)
    if nphi is None:
        nphi = 4 * (max(abs(l) for l in sectors) + 2)
    if rho_max is None:
        rho_max = state.support_radius()
    rho, weights = gauss_legendre_grid(rho_max, count)
    phi = polar_angles(nphi)
    psi = np.zeros((count, nphi), dtype=complex)
    dr = np.zeros_like(psi)
    dp = np.zeros_like(psi)
    for l in sectors:
        e = np.exp(1j * l * (phi - rotate))[None, :]
        u = state.radial(l, rho, t)[:, None]
        psi += u * e
        dr += state.radial_derivative(l, rho, t)[:, None] * e
        dp += 1j * l * u * e
    return _PolarFields(rho, weights, phi, psi, dr, dp)


def _cartesian_gradient(f: _PolarFields):
    c, s = np.cos(f.phi)[None, :], np.sin(f.phi)[None, :]
    r = f.rho[:, None]
    return c * f.d_rho - s / r * f.d_phi, s * f.d_rho + c / r * f.d_phi


# -- series container -------------------------------------------------------------


@dataclass
class ObservableSeries:
    """Observables sampled on one shared time grid."""

    times: np.ndarray
    mean_rho2: np.ndarray
    energy: np.ndarray
    first_integral_value: np.ndarray
    ermakov_lewis: np.ndarray
    emittance_x: np.ndarray
    emittance_y: np.ndarray
    twiss_beta: np.ndarray
    twiss_alpha: np.ndarray
    quadrupole: np.ndarray
    radiation_scaling: np.ndarray

    def __post_init__(self):
        n = len(self.times)
        for f in fields(self):
            arr = np.asarray(getattr(self, f.name), dtype=float)
            if arr.shape != (n,):
                raise ValueError(f"column {f.name} has shape {arr.shape}, expected ({n},)")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"column {f.name} has non-finite entries")
            setattr(self, f.name, arr)

    @classmethod
    def columns(cls):
        return [f.name for f in fields(cls)]

    def rows(self):
        cols = [getattr(self, c) for c in self.columns()]
        return zip(*cols)

    def to_csv(self, path):
        write_csv(path, self.columns(), self.rows())


def fmt(x) -> str:
    """Fixed 17-significant-digit formatting used by every CSV writer."""
    # adding 0.0 folds -0.0 into 0.0
    return f"{float(x) + 0.0:.17g}"


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        for row in rows:
            wr.writerow([fmt(v) for v in row])


# -- radius and energy --------------------------------------------------------------


def _single_landau(mapped):
    ref = mapped.reference
    return ref if isinstance(ref, LandauState) else None


def mean_rho2(mapped: MappedState, t2, method="closed"):
    """Mean squared radius of the mapped state.

    Parameters
    ----------
    method : {"closed", "quadrature"}
        ``closed`` uses ``b**2 (2n+|l|+1)/(m omega0)`` (single Landau reference);
        ``quadrature`` integrates ``rho**2 |psi|**2`` on a Gauss-Legendre grid.
    """
    if method == "closed":
        ref = _single_landau(mapped)
        if ref is None:
            raise ValueError("closed form needs a single Landau reference state")
        b = mapped.trajectory.b(t2)
        return b**2 * ref.K / (ref.mass * ref.omega0)
    if method == "quadrature":
        s = mapped.sample(t2, count=QUAD_NODES, l=mapped.sectors[0]) if len(mapped.sectors) == 1 else mapped.sample(t2, count=QUAD_NODES)
        return float(np.real(s.integrate(s.rho[:, None] ** 2 * s.density if s.is_polar else s.rho**2 * s.density)))
    raise ValueError(f"unknown method {method!r}")


def energy_landau_form(b, bdot, K, l, omega0):
    """``omega0 K/2 [b**2 + bdot**2/omega0**2 + 1/b**2] + l omega0``."""
    return omega0 * K * first_integral(b, bdot, omega0) + l * omega0


def mean_energy(mapped: MappedState, t2, method="auto", dt=None):
    """Mean energy of the mapped state.

    Parameters
    ----------
    method : {"auto", "landau", "general", "quadrature"}
        ``landau``: closed form for a target equal to the reference Landau
        field. ``general``: closed form of ``<H2>`` for any target,
        ``K/2 [w2 omega0/b**2 + bdot**2/(w2 omega0) + omega2**2 b**2/(w2 omega0)] + omega2 l``.
        ``quadrature``: ``Re <psi| i d/dt |psi>`` with a fourth-order centered
        time difference. ``auto`` picks ``landau`` when the target is the
        Landau field, ``general`` otherwise.
    """
    tr = mapped.trajectory
    tgt = mapped.target_profile
    if method == "auto":
        method = "landau" if tgt.is_landau() and tgt.omega0 == mapped.reference.omega0 else "general"
    if method in ("landau", "general"):
        ref = _single_landau(mapped)
        if ref is None:
            raise ValueError("closed forms need a single Landau reference state")
        b, bd = tr.b(t2), tr.bdot(t2)
        if method == "landau":
            return energy_landau_form(b, bd, ref.K, ref.l, ref.omega0)
        w2, om2 = tgt.w(t2), tgt.omega(t2)
        w0 = ref.omega0
        return 0.5 * ref.K * (w2 * w0 / b**2 + bd**2 / (w2 * w0) + om2**2 * b**2 / (w2 * w0)) + om2 * ref.l
    if method == "quadrature":
        if dt is None:
            dt = 2e-4 / mapped.omega0
        lo, hi = mapped.span
        t2c = min(max(t2, lo + 2 * dt), hi - 2 * dt)
        if t2c != t2:
            raise ValueError("quadrature energy needs 2 dt of margin inside the span")
        rho, w = gauss_legendre_grid(mapped.support_radius(), QUAD_NODES)
        num = den = 0.0
        for l in mapped.sectors:
            u = mapped.radial(l, rho, t2)
            du = (mapped.radial(l, rho, t2 - 2 * dt) - 8 * mapped.radial(l, rho, t2 - dt)
                  + 8 * mapped.radial(l, rho, t2 + dt) - mapped.radial(l, rho, t2 + 2 * dt)) / (12 * dt)
            num += np.dot(w, np.conj(u) * 1j * du)
            den += np.dot(w, np.abs(u) ** 2)
        return float(np.real(num / den))
    raise ValueError(f"unknown method {method!r}")


# -- reference brackets and the Hamiltonian matrix ------------------------------------


def reference_brackets(n_prime, n, l, mass=1.0, omega0=1.0, count=QUAD_NODES):
    """``<n'|r**2|n>`` and ``<n'|(p.r + r.p)/2|n>`` between Landau states by quadrature.

    In two dimensions ``(p.r + r.p)/2 = -i (rho d/drho + 1)`` on each sector.
    """
    a = make_landau_state(n_prime, l, mass, omega0)
    c = make_landau_state(n, l, mass, omega0)
    rho, w = gauss_legendre_grid(max(a.support_radius(), c.support_radius()), count)
    ua, uc = a.envelope(rho), c.envelope(rho)
    duc = c.envelope_derivative(rho)
    r2 = 2 * np.pi * np.dot(w, ua * rho**2 * uc)
    pr = -1j * 2 * np.pi * np.dot(w, ua * (rho * duc + uc))
    return float(r2), complex(pr)


def hamiltonian_matrix_element(n_prime, n, l, trajectory: ErmakovTrajectory, t2, mass=None, omega0=None):
    """Matrix element of ``i d/dt2`` between mapped Landau states of one sector.

    ``(bdot/b) <n'|{p,r}/2|n> + (w2/(w1 b**2)) [eps - l omega1] delta + l omega2 delta
    + (m/(2 w2)) [omega2**2 b**2 + bdot**2 - w2**2 omega1**2/(w1**2 b**2)] <n'|r**2|n>``

    with reference quantities at ``t1(t2)``. The symmetrized product is used
    for the ``p.r`` term; the literal ``p`` then ``r`` order adds a spurious
    ``-i bdot/b`` on the diagonal.
    """
    ref_p, tgt = trajectory.ref_profile, trajectory.target_profile
    mass = tgt.mass if mass is None else mass
    omega0 = ref_p.omega0 if omega0 is None else omega0
    b, bd, t1 = trajectory.b(t2), trajectory.bdot(t2), trajectory.t1(t2)
    w2, om2 = tgt.w(t2), tgt.omega(t2)
    w1, om1 = ref_p.w(t1), ref_p.omega(t1)
    r2, pr = reference_brackets(n_prime, n, l, mass, omega0)
    out = (bd / b) * pr + (mass / (2 * w2)) * (om2**2 * b**2 + bd**2 - w2**2 * om1**2 / (w1**2 * b**2)) * r2
    if n_prime == n:
        eps = omega0 * (2 * n + abs(l) + l + 1)
        out += (w2 / (w1 * b**2)) * (eps - l * om1) + l * om2
    return complex(out)


# -- angular momentum -----------------------------------------------------------------


def oam_and_charge(samples: SampledWavefunction, probe_radius=None, amp_floor=1e-12):
    """Mean OAM and the phase winding number on a probe circle.

    Parameters
    ----------
    samples : SampledWavefunction
        Normalized samples. Single-sector samples are expanded to a polar grid.
    probe_radius : float, optional
        Defaults to the largest sampled circle on which ``|psi|`` stays above
        ``amp_floor``.

    Returns
    -------
    (float, int)
    """
    s = samples.to_polar(64) if not samples.is_polar else samples
    psi = s.values
    lz = s.integrate(np.conj(psi) * (-1j) * d_phi(psi)) / s.integrate(np.abs(psi) ** 2)
    amp_min = np.abs(psi).min(axis=1)
    if probe_radius is None:
        ok = np.nonzero(amp_min > amp_floor)[0]
        if not ok.size:
            raise ChargeUndefinedError("no sampled circle has amplitude above the floor")
        k = int(ok[np.argmax(s.rho[ok])])
    else:
        k = int(np.argmin(np.abs(s.rho - probe_radius)))
        if amp_min[k] <= amp_floor:
            raise ChargeUndefinedError(f"|psi| drops below {amp_floor:g} on the circle rho={s.rho[k]:.6g}")
    ring = psi[k]
    ph = np.unwrap(np.angle(np.append(ring, ring[0])))
    winding = (ph[-1] - ph[0]) / (2 * np.pi)
    return float(np.real(lz)), int(round(winding))


# -- Ermakov-Lewis invariant and emittance -----------------------------------------------


@dataclass(frozen=True)
class InvariantResult:
    total: float
    x: float
    y: float
    second_moment: float | None = None

    @property
    def emittance_x(self):
        return 2 * self.x

    @property
    def emittance_y(self):
        return 2 * self.y

    @property
    def emittance(self):
        return 2 * self.total


def ermakov_lewis(obj, b, bdot, *, t2=None, w=1.0, mass=1.0, omega0=1.0, second_moment=False):
    """Expectation of the Ermakov-Lewis invariant in normalized variables.

    ``I_x = (1/2) [x~**2/b**2 + (b p~_x - bdot x~/(omega0 w))**2]`` with
    ``x~ = sqrt(m omega0) x`` and ``p~ = p/sqrt(m omega0)``; ``I = I_x + I_y``.

    Parameters
    ----------
    obj : MappedState or SampledWavefunction
        A mapped state (then ``t2`` is required and derivatives are analytic)
        or uniform half-offset samples (derivatives by finite differences).
    second_moment : bool
        Also return ``<I**2> = ||I psi||**2`` (single-sector uniform samples only).
    """
    s_mo = math.sqrt(mass * omega0)
    c = bdot / (omega0 * w)
    if isinstance(obj, SampledWavefunction):
        fields_ = _sampled_fields(obj)
    else:
        if t2 is None:
            raise ValueError("t2 is required for a mapped state")
        fields_ = _polar_fields(obj, t2)
    f = fields_
    norm = np.real(f.integrate(np.abs(f.psi) ** 2))
    gx, gy = _cartesian_gradient(f)
    x = f.rho[:, None] * np.cos(f.phi)[None, :]
    y = f.rho[:, None] * np.sin(f.phi)[None, :]
    out = []
    for coord, grad in ((x, gx), (y, gy)):
        A = b * (-1j * grad) / s_mo - c * s_mo * coord * f.psi
        val = 0.5 * (mass * omega0 * np.real(f.integrate(coord**2 * np.abs(f.psi) ** 2)) / b**2
                     + np.real(f.integrate(np.abs(A) ** 2)))
        out.append(val / norm)
    m2 = None
    if second_moment:
        if not (isinstance(obj, SampledWavefunction) and not obj.is_polar and obj.h):
            raise ValueError("second moment needs single-sector uniform samples")
        m2 = _invariant_second_moment(obj, b, c, mass, omega0)
    return InvariantResult(out[0] + out[1], out[0], out[1], m2)


def _sampled_fields(s: SampledWavefunction) -> _PolarFields:
    if s.h is None:
        raise ValueError("finite differences need uniform half-offset samples")
    if not s.is_polar:
        psi = s.values
        dr = d_rho(psi, s.h, sector_parity(s.l))
        phi = polar_angles(4 * (abs(s.l) + 2))
        e = np.exp(1j * s.l * phi)[None, :]
        return _PolarFields(s.rho, s.weights, phi, psi[:, None] * e, dr[:, None] * e, 1j * s.l * psi[:, None] * e)
    psi = s.values
    return _PolarFields(s.rho, s.weights, s.phi, psi, d_rho(psi, s.h, ghost=polar_ghost(psi)), d_phi(psi))


def _invariant_second_moment(s: SampledWavefunction, b, c, mass, omega0):
    from .sampling import d2_rho

    u, rho, h, l = s.values, s.rho, s.h, s.l
    p = sector_parity(l)
    du = d_rho(u, h, p)
    lap = d2_rho(u, h, p) + du / rho - l * l * u / rho**2
    Iu = 0.5 * ((1 / b**2 + c**2) * mass * omega0 * rho**2 * u - (b**2 / (mass * omega0)) * lap
                + 1j * b * c * (2 * rho * du + 2 * u))
    return float(np.real(s.integrate(np.abs(Iu) ** 2)) / np.real(s.integrate(np.abs(u) ** 2)))


# -- envelope diagnostics -------------------------------------------------------------


def twiss(trajectory: ErmakovTrajectory, t2):
    """Dimensionless Twiss functions ``(beta, alpha) = (b**2, -b bdot)``."""
    b, bd = trajectory.b(t2), trajectory.bdot(t2)
    return b**2, -b * bd


def radiation_diagnostics(trajectory: ErmakovTrajectory, t2):
    """Quadrupole proxy ``b**2`` and the radiation scaling ``(d^3 b^2/dt^3)**2``.

    ``d^3(b^2)/dt^3 = 6 bdot bddot + 2 b bdddot`` with both higher derivatives
    taken from the equation of motion.
    """
    b, bd = trajectory.b(t2), trajectory.bdot(t2)
    bdd, b3 = trajectory.bddot(t2), trajectory.b_third(t2)
    third = 6 * bd * bdd + 2 * b * b3
    return b**2, third**2


def lens_averages(trajectory: ErmakovTrajectory, window):
    """Time average of ``b**2`` over one oscillation and ``sqrt(max b * min b)``.

    Parameters
    ----------
    window : (float, float)
        Must lie inside one undamped segment of constant frequency and span at
        least one oscillation period ``pi/omega`` of b.
    """
    ta, tb = (float(x) for x in window)
    prof = trajectory.target_profile
    k = int(prof.segment_index(0.5 * (ta + tb)))
    a, e = prof.segment_bounds(k)
    seg = prof.segments[k]
    if ta < a or tb > e:
        raise ValueError(f"window {window} is not inside segment {k} [{a}, {e}]")
    if seg.F <= 0 or seg.gamma != 0:
        raise ValueError("window must lie in an undamped lens segment")
    om = prof.omega0 * math.sqrt(seg.F)
    T = math.pi / om
    if tb - ta < T * (1 - 1e-12):
        raise ValueError(f"window length {tb - ta:.6g} shorter than one oscillation period {T:.6g}")
    x, w = np.polynomial.legendre.leggauss(64)
    pieces = 8
    total = 0.0
    for j in range(pieces):
        lo = ta + j * T / pieces
        hi = lo + T / pieces
        tt = 0.5 * (hi - lo) * x + 0.5 * (hi + lo)
        total += 0.5 * (hi - lo) * np.dot(w, trajectory.b(tt) ** 2)
    avg = total / T
    ts = np.linspace(ta, tb, max(200, int(64 * (tb - ta) / T)))
    bd = trajectory.bdot(ts)
    ext = []
    for i in range(len(ts) - 1):
        if bd[i] == 0:
            ext.append(ts[i])
        elif bd[i] * bd[i + 1] < 0:
            ext.append(brentq(trajectory.bdot, ts[i], ts[i + 1], xtol=1e-14))
    vals = trajectory.b(np.array(ext)) if ext else trajectory.b(ts)
    bmax, bmin = float(np.max(vals)), float(np.min(vals))
    return float(avg), math.sqrt(bmax * bmin)


def turning_points(trajectory: ErmakovTrajectory, window):
    """Extreme values of b in ``window`` located at zeros of bdot."""
    ta, tb = window
    ts = np.linspace(ta, tb, 4000)
    bd = trajectory.bdot(ts)
    ext = [brentq(trajectory.bdot, ts[i], ts[i + 1], xtol=1e-14) for i in range(len(ts) - 1) if bd[i] * bd[i + 1] < 0]
    vals = trajectory.b(np.array(ext))
    return float(vals.min()), float(vals.max())


# -- momentum -----------------------------------------------------------------------


def mean_momentum(mapped: MappedState, t2):
    """``<p2> = <p1>/b + (m/w2) bdot <r1>`` with reference brackets at ``t1``.

    The reference brackets include the relative sector phases
    ``exp(-i l (phi2 - phi1))`` of the map, i.e. a rigid rotation.
    """
    b, bd, t1, w2, dphi = mapped.frame(t2)
    ref = mapped.reference
    f = _polar_fields(ref, t1, rotate=dphi, rho_max=ref.support_radius())
    p1, r1 = _momentum_and_position(f)
    return p1 / b + (mapped.mass / w2) * bd * r1


def mean_momentum_quadrature(state, t):
    """Direct quadrature of ``<-i grad>`` for any state object."""
    p, _ = _momentum_and_position(_polar_fields(state, t))
    return p


def _momentum_and_position(f: _PolarFields):
    gx, gy = _cartesian_gradient(f)
    norm = np.real(f.integrate(np.abs(f.psi) ** 2))
    px = np.real(f.integrate(np.conj(f.psi) * (-1j) * gx)) / norm
    py = np.real(f.integrate(np.conj(f.psi) * (-1j) * gy)) / norm
    x = f.rho[:, None] * np.cos(f.phi)[None, :]
    y = f.rho[:, None] * np.sin(f.phi)[None, :]
    rx = np.real(f.integrate(x * np.abs(f.psi) ** 2)) / norm
    ry = np.real(f.integrate(y * np.abs(f.psi) ** 2)) / norm
    return np.array([px, py]), np.array([rx, ry])


# -- series -------------------------------------------------------------------------


def observable_series(mapped: MappedState, times) -> ObservableSeries:
    """Evaluate every tracked observable of a mapped state at ``times``."""
    tr = mapped.trajectory
    times = np.asarray(times, dtype=float)
    cols = {c: [] for c in ObservableSeries.columns() if c != "times"}
    ref = _single_landau(mapped)
    om0 = mapped.reference.omega0
    for t in times:
        b, bd = tr.b(t), tr.bdot(t)
        cols["mean_rho2"].append(mean_rho2(mapped, t, "closed" if ref else "quadrature"))
        cols["energy"].append(mean_energy(mapped, t) if ref else np.nan)
        cols["first_integral_value"].append(first_integral(b, bd, om0))
        inv = ermakov_lewis(mapped, b, bd, t2=t, w=mapped.target_profile.w(t), mass=mapped.mass, omega0=om0)
        cols["ermakov_lewis"].append(inv.total)
        cols["emittance_x"].append(inv.emittance_x)
        cols["emittance_y"].append(inv.emittance_y)
        beta, alpha = twiss(tr, t)
        cols["twiss_beta"].append(beta)
        cols["twiss_alpha"].append(alpha)
        q, rad = radiation_diagnostics(tr, t)
        cols["quadrupole"].append(q)
        cols["radiation_scaling"].append(rad)
    return ObservableSeries(times, **{k: np.array(v) for k, v in cols.items()})
