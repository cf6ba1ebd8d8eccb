"""Stationary Landau states and superpositions of them.

A state is represented sector by sector: ``psi(rho, phi, t) = sum_l u_l(rho, t) exp(i l phi)``.
Every reference object used by the mapping (a LandauState, a Superposition,
or an already mapped state) exposes the same small interface: ``sectors``,
``radial(l, rho, t)``, ``radial_derivative(l, rho, t)``, ``mass``, ``omega0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.special import gammaln

from .errors import QuadratureError
from .sampling import SampledWavefunction, gauss_legendre_grid, half_offset_grid, polar_angles

NORM_TOL = 1e-10


def laguerre(n, alpha, x):
    """Generalized Laguerre polynomial ``L_n^alpha(x)`` by upward recurrence."""
    if n < 0:
        raise ValueError(f"n must be >= 0, got {n}")
    x = np.asarray(x, dtype=float)
    prev = np.ones_like(x)
    if n == 0:
        return prev if prev.ndim else float(prev)
    cur = 1.0 + alpha - x
    for k in range(1, n):
        prev, cur = cur, ((2 * k + 1 + alpha - x) * cur - (k + alpha) * prev) / (k + 1)
    return cur if np.ndim(cur) else float(cur)


def rho_h(mass, omega0):
    """Characteristic orbit radius ``sqrt(2 / (m omega0))``."""
    return math.sqrt(2.0 / (mass * omega0))


def _log_closed_form_N(n, l, rhoH):
    a = abs(l)
    return 0.5 * (math.log(2.0) * (1 + a) + gammaln(n + 1) - math.log(math.pi) - 2 * math.log(rhoH) - gammaln(n + a + 1))


def normalization_constant(n, l, rhoH, check=True):
    """Normalization so that ``2 pi int |psi|**2 rho drho = 1``.

    Computed by adaptive quadrature in ``x = 2 rho**2 / rhoH**2``. With
    ``check`` the result is compared to the closed form that follows from
    Laguerre orthogonality, ``N**2 = 2**(|l|+1) n! / (pi rhoH**2 (n+|l|)!)``.
    """
    if n < 0 or not rhoH > 0:
        raise ValueError("need n >= 0 and rhoH > 0")
    a = abs(l)
    # density integrand scaled by exp(-log_scale) to stay in range for large |l|
    log_scale = gammaln(n + a + 1) - gammaln(n + 1)
    x_peak = max(a + 2 * n, 1.0)

    def integrand(x):
        if x == 0.0:
            return float(a == 0)
        return math.exp(a * math.log(x) - x - log_scale) * laguerre(n, a, x) ** 2

    pts = [x_peak]
    val, err = quad(integrand, 0.0, x_peak + 40 + 10 * math.sqrt(x_peak), points=pts,
                    epsabs=1e-15, epsrel=1e-13, limit=400)
    if err > 1e-11 * max(val, 1e-300) or not val > 0:
        raise QuadratureError(f"normalization quadrature did not converge (estimate {err:.3g})")
    # 2 pi int (x/2)^a L^2 e^-x (rhoH^2/4) dx
    log_I = math.log(2 * math.pi * rhoH**2 / 4) - a * math.log(2.0) + math.log(val) + log_scale
    N = math.exp(-0.5 * log_I)
    if check:
        Ncf = math.exp(_log_closed_form_N(n, l, rhoH))
        if abs(N / Ncf - 1) > 1e-9:
            raise QuadratureError(f"quadrature N={N!r} disagrees with closed form {Ncf!r}")
    return N


@dataclass(frozen=True)
class LandauState:
    """Stationary Landau state with radial number n and angular momentum l."""

    n: int
    l: int
    mass: float = 1.0
    omega0: float = 1.0
    rhoH: float = field(init=False)
    N: float = field(init=False)
    eps_perp: float = field(init=False)

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 0:
            raise ValueError(f"n must be a nonnegative integer, got {self.n}")
        if int(self.l) != self.l:
            raise ValueError(f"l must be an integer, got {self.l}")
        if not (self.mass > 0 and self.omega0 > 0):
            raise ValueError("mass and omega0 must be > 0")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "l", int(self.l))
        rh = rho_h(self.mass, self.omega0)
        object.__setattr__(self, "rhoH", rh)
        object.__setattr__(self, "N", normalization_constant(self.n, self.l, rh))
        object.__setattr__(self, "eps_perp", self.omega0 * (2 * self.n + abs(self.l) + self.l + 1))

    @property
    def K(self) -> int:
        """Degeneracy factor ``2n + |l| + 1``."""
        return 2 * self.n + abs(self.l) + 1

    @property
    def sectors(self):
        return (self.l,)

    @property
    def components(self):
        return ((1.0 + 0j, self),)

    def energy_phase(self, t):
        return np.exp(-1j * self.eps_perp * np.asarray(t, dtype=float))

    def envelope(self, rho):
        """Real radial profile without the time phase."""
        rho = np.asarray(rho, dtype=float)
        s = rho / self.rhoH
        x = 2 * s**2
        return self.N * s ** abs(self.l) * laguerre(self.n, abs(self.l), x) * np.exp(-(s**2))

    def envelope_derivative(self, rho):
        rho = np.asarray(rho, dtype=float)
        a = abs(self.l)
        s = rho / self.rhoH
        x = 2 * s**2
        L = laguerre(self.n, a, x)
        dL = -laguerre(self.n - 1, a + 1, x) if self.n > 0 else 0.0 * x
        # d/drho of s^a L(2 s^2) e^{-s^2}
        pre = a * s ** (a - 1) if a else 0.0 * s
        ds = pre * L + s**a * (4 * s * dL - 2 * s * L)
        return self.N * ds * np.exp(-(s**2)) / self.rhoH

    def radial(self, l, rho, t=0.0):
        if l != self.l:
            return np.zeros(np.shape(rho), dtype=complex)
        return self.envelope(rho) * self.energy_phase(t)

    def radial_derivative(self, l, rho, t=0.0):
        if l != self.l:
            return np.zeros(np.shape(rho), dtype=complex)
        return self.envelope_derivative(rho) * self.energy_phase(t)

    def evaluate(self, rho, phi, t=0.0):
        return evaluate_landau(self, rho, phi, t)

    def support_radius(self, b_max=1.0):
        return support_radius(self.rhoH, self.K, b_max)


def make_landau_state(n, l, mass=1.0, omega0=1.0) -> LandauState:
    return LandauState(n, l, mass, omega0)


def evaluate_landau(state: LandauState, rho, phi, t=0.0):
    """``N (rho/rhoH)^|l| L_n^|l|(2 rho^2/rhoH^2) exp(-rho^2/rhoH^2 + i l phi - i eps t)``."""
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < 0):
        raise ValueError("rho must be >= 0")
    return state.envelope(rho) * np.exp(1j * state.l * np.asarray(phi) - 1j * state.eps_perp * t)


def mean_rho2_stationary(state: LandauState) -> float:
    """``<rho**2> = (2n + |l| + 1) / (m omega0)``."""
    return state.K / (state.mass * state.omega0)


def support_radius(rhoH, K, b_max=1.0):
    """Radius beyond which the Gaussian tail is below about 1e-12."""
    return rhoH * b_max * (math.sqrt(K) + 8.0)


class Superposition:
    """Normalized linear combination of Landau states sharing m and omega0.

    Parameters
    ----------
    terms : sequence of (complex, LandauState)
    normalize : bool
        Rescale the coefficients to unit norm (states are orthonormal).
    """

    def __init__(self, terms, normalize=True):
        terms = [(complex(c), s) for c, s in terms]
        if not terms:
            raise ValueError("empty superposition")
        m, w = terms[0][1].mass, terms[0][1].omega0
        if any(s.mass != m or s.omega0 != w for _, s in terms):
            raise ValueError("all states must share mass and omega0")
        keys = [(s.n, s.l) for _, s in terms]
        if len(set(keys)) != len(keys):
            raise ValueError("repeated (n, l) in superposition")
        if normalize:
            total = math.sqrt(sum(abs(c) ** 2 for c, _ in terms))
            terms = [(c / total, s) for c, s in terms]
        self.components = tuple(terms)
        self.mass = m
        self.omega0 = w
        self.rhoH = terms[0][1].rhoH

    @property
    def sectors(self):
        return tuple(sorted({s.l for _, s in self.components}))

    @property
    def K(self):
        return max(s.K for _, s in self.components)

    def radial(self, l, rho, t=0.0):
        out = np.zeros(np.shape(rho), dtype=complex)
        for c, s in self.components:
            if s.l == l:
                out = out + c * s.radial(l, rho, t)
        return out

    def radial_derivative(self, l, rho, t=0.0):
        out = np.zeros(np.shape(rho), dtype=complex)
        for c, s in self.components:
            if s.l == l:
                out = out + c * s.radial_derivative(l, rho, t)
        return out

    def evaluate(self, rho, phi, t=0.0):
        rho = np.asarray(rho, dtype=float)
        phi = np.asarray(phi, dtype=float)
        out = 0
        for l in self.sectors:
            out = out + self.radial(l, rho, t) * np.exp(1j * l * phi)
        return out

    def support_radius(self, b_max=1.0):
        return support_radius(self.rhoH, self.K, b_max)


# -- sampling helpers shared by every reference-like object -----------------------


def sample(state, t=0.0, *, rho_max=None, count=400, nphi=None, grid="gauss", l=None, b_max=1.0):
    """Sample a state on a radial or polar grid.

    Parameters
    ----------
    state : object with ``sectors`` and ``radial``
    grid : {"gauss", "uniform"}
        Gauss-Legendre for quadrature, half-offset uniform for finite differences.
    l : int, optional
        Return only this sector as single-sector samples.
    nphi : int, optional
        Number of angles for polar samples. Defaults to a single sector when
        the state has exactly one, else to enough angles to resolve all sectors.
    """
    if rho_max is None:
        rho_max = state.support_radius(b_max)
    if grid == "gauss":
        rho, weights = gauss_legendre_grid(rho_max, count)
        h = None
    elif grid == "uniform":
        rho, weights, h = half_offset_grid(rho_max, count)
    else:
        raise ValueError(f"unknown grid {grid!r}")
    sectors = state.sectors
    if l is not None or (nphi is None and len(sectors) == 1):
        l = sectors[0] if l is None else l
        return SampledWavefunction(rho, weights, state.radial(l, rho, t), l, None, h, t)
    if nphi is None:
        nphi = max(16, 2 * (max(abs(s) for s in sectors) + 1))
        nphi += nphi % 2
    phi = polar_angles(nphi)
    vals = np.zeros((len(rho), nphi), dtype=complex)
    for s in sectors:
        vals += state.radial(s, rho, t)[:, None] * np.exp(1j * s * phi)[None, :]
    return SampledWavefunction(rho, weights, vals, None, phi, h, t)
