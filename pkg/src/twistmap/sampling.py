"""Radial and polar sample grids, quadrature weights and finite differences."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SampledWavefunction:
    """Complex samples of a transverse wavefunction.

    Parameters
    ----------
    rho : ndarray, shape (M,)
        Radial nodes.
    weights : ndarray, shape (M,)
        Weights for ``int f(rho) rho drho`` (the factor rho is included).
    values : ndarray
        Shape ``(M,)`` for a single angular sector ``u(rho)`` with
        ``psi = u(rho) exp(i l phi)``, or ``(M, P)`` on a polar grid.
    l : int or None
        Sector index for single-sector samples.
    phi : ndarray or None
        Uniform angular nodes ``2 pi j / P`` for polar samples.
    h : float or None
        Spacing when ``rho`` is the uniform half-offset grid ``(k + 1/2) h``;
        finite differences are only available then.
    time : float
    """

    rho: np.ndarray
    weights: np.ndarray
    values: np.ndarray
    l: int | None = None
    phi: np.ndarray | None = None
    h: float | None = None
    time: float = 0.0

    @property
    def is_polar(self) -> bool:
        return self.values.ndim == 2

    @property
    def density(self):
        return np.abs(self.values) ** 2

    def integrate(self, f):
        """Integrate ``f`` (same shape as values) over the plane."""
        f = np.asarray(f)
        if f.ndim == 2:
            return self.weights @ f.mean(axis=1) * 2 * np.pi
        return 2 * np.pi * np.dot(self.weights, f)

    def norm(self) -> float:
        return float(np.real(self.integrate(self.density)))

    def inner(self, other: "SampledWavefunction") -> complex:
        """<self|other> on a shared grid."""
        if self.is_polar != other.is_polar:
            a, b = self.to_polar(), other.to_polar(len(self.to_polar().phi))
            return complex(a.integrate(np.conj(a.values) * b.values))
        if not self.is_polar and self.l != other.l:
            return 0.0j
        return complex(self.integrate(np.conj(self.values) * other.values))

    def to_polar(self, nphi=64) -> "SampledWavefunction":
        if self.is_polar:
            return self
        phi = polar_angles(nphi)
        vals = self.values[:, None] * np.exp(1j * self.l * phi)[None, :]
        return SampledWavefunction(self.rho, self.weights, vals, None, phi, self.h, self.time)

    def sectors(self) -> dict[int, np.ndarray]:
        """Angular decomposition ``{l: u_l(rho)}`` of polar samples by FFT."""
        if not self.is_polar:
            return {self.l: self.values}
        P = self.values.shape[1]
        coeffs = np.fft.fft(self.values, axis=1) / P
        ls = np.fft.fftfreq(P, d=1.0 / P).astype(int)
        return {int(l): coeffs[:, k] for k, l in enumerate(ls)}


def polar_angles(nphi):
    return 2 * np.pi * np.arange(nphi) / nphi


def gauss_legendre_grid(rho_max, count=400):
    """Gauss-Legendre nodes on [0, rho_max] and weights for ``int f rho drho``."""
    x, w = np.polynomial.legendre.leggauss(count)
    rho = 0.5 * rho_max * (x + 1.0)
    return rho, 0.5 * rho_max * w * rho


def half_offset_grid(rho_max, count):
    """Uniform nodes ``(k + 1/2) h`` with weights for ``int f rho drho``.

    Midpoint weights ``rho h`` leave an ``(h**2/24) f(0)`` error because
    ``rho f`` has nonzero slope at the origin. Removing it with ``f(0)``
    extrapolated from the first two nodes (``f`` is even in ``rho`` for any
    smooth planar field) makes the rule fourth order.
    """
    h = rho_max / count
    rho = (np.arange(count) + 0.5) * h
    w = rho * h
    w[0] -= h * h / 24 * 9 / 8
    w[1] += h * h / 24 / 8
    return rho, w, h


# -- finite differences on the half-offset grid --------------------------------


def _pad(f, parity, ghost):
    """Prepend two mirrored ghost nodes. ``ghost`` overrides the mirror image."""
    if ghost is None:
        g = parity * f[1::-1]
    else:
        g = ghost[1::-1]
    return np.concatenate([g, f], axis=0)


def d_rho(f, h, parity=1, ghost=None):
    """Fourth-order first radial derivative on the half-offset grid.

    Parameters
    ----------
    f : ndarray, shape (M,) or (M, P)
    h : float
    parity : {1, -1}
        Symmetry ``f(-rho) = parity f(rho)`` used for the two nodes below zero.
    ghost : ndarray, optional
        Explicit values at ``rho = h/2, 3h/2`` reflected through the origin
        (for polar samples: the values at ``phi + pi``).
    """
    g = _pad(np.asarray(f), parity, ghost)
    M = len(f)
    out = np.empty_like(g[2:], dtype=np.result_type(g, float))
    out[: M - 2] = (g[0 : M - 2] - 8 * g[1 : M - 1] + 8 * g[3 : M + 1] - g[4 : M + 2]) / (12 * h)
    # one-sided at the outer edge
    f = np.asarray(f)
    out[M - 2] = (3 * f[M - 1] + 10 * f[M - 2] - 18 * f[M - 3] + 6 * f[M - 4] - f[M - 5]) / (12 * h)
    out[M - 1] = (25 * f[M - 1] - 48 * f[M - 2] + 36 * f[M - 3] - 16 * f[M - 4] + 3 * f[M - 5]) / (12 * h)
    return out


def d2_rho(f, h, parity=1, ghost=None):
    """Fourth-order second radial derivative on the half-offset grid."""
    g = _pad(np.asarray(f), parity, ghost)
    M = len(f)
    out = np.empty_like(g[2:], dtype=np.result_type(g, float))
    out[: M - 2] = (-g[0 : M - 2] + 16 * g[1 : M - 1] - 30 * g[2:M] + 16 * g[3 : M + 1] - g[4 : M + 2]) / (12 * h * h)
    f = np.asarray(f)
    out[M - 2] = (10 * f[M - 1] - 15 * f[M - 2] - 4 * f[M - 3] + 14 * f[M - 4] - 6 * f[M - 5] + f[M - 6]) / (12 * h * h)
    out[M - 1] = (45 * f[M - 1] - 154 * f[M - 2] + 214 * f[M - 3] - 156 * f[M - 4] + 61 * f[M - 5] - 10 * f[M - 6]) / (12 * h * h)
    return out


def polar_ghost(values):
    """Values at ``phi + pi`` for the first two radial rows (needs even P)."""
    P = values.shape[1]
    if P % 2:
        raise ValueError("polar finite differences need an even number of angles")
    return np.roll(values[:2], -P // 2, axis=1)


def d_phi(values):
    """Spectral angular derivative of polar samples."""
    P = values.shape[1]
    k = np.fft.fftfreq(P, d=1.0 / P)
    return np.fft.ifft(1j * k[None, :] * np.fft.fft(values, axis=1), axis=1)


def sector_parity(l):
    return -1 if abs(int(l)) % 2 else 1
