"""Time profiles of the axial field, oscillator frequency and damping.

A profile is an ordered list of segments. Each segment holds a plateau value
``F = omega(t)**2 / omega0**2`` and a constant damping rate ``gamma``. Plateau
edges are smoothed with a tanh ramp; damping stays piecewise constant so the
dissipation factor ``w(t) = exp(-int_0^t gamma)`` has a closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ProfileError

KINDS = ("free", "solenoid", "damped")

# |e| in natural Heaviside-Lorentz units (hbar = c = 1): sqrt(4*pi*alpha)
ELEMENTARY_CHARGE = math.sqrt(4.0 * math.pi / 137.035999084)


@dataclass(frozen=True)
class Segment:
    kind: str
    duration: float
    F: float | None = None
    gamma: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ProfileError(f"unknown segment kind {self.kind!r}; expected one of {KINDS}")
        if self.F is None:
            object.__setattr__(self, "F", 0.0 if self.kind == "free" else 1.0)
        if not (self.duration > 0):
            raise ProfileError(f"segment duration must be > 0, got {self.duration}")
        if not (self.F >= 0) or not math.isfinite(self.F):
            raise ProfileError(f"segment F must be finite and >= 0, got {self.F}")
        if not (self.gamma >= 0) or not math.isfinite(self.gamma):
            raise ProfileError(f"segment gamma must be finite and >= 0, got {self.gamma}")
        if self.kind == "free" and self.F != 0.0:
            raise ProfileError("a free segment must have F = 0")
        if self.kind == "damped" and self.gamma == 0.0:
            raise ProfileError("a damped segment needs gamma > 0")


def _as_segment(spec, kind) -> Segment:
    if isinstance(spec, Segment):
        return spec
    if isinstance(spec, Mapping):
        spec = dict(spec)
        spec.setdefault("kind", kind)
        return Segment(**spec)
    if isinstance(spec, (int, float)):
        return Segment(kind, float(spec))
    try:
        return Segment(kind, *spec)
    except TypeError as exc:
        raise ProfileError(f"cannot build a segment from {spec!r}") from exc


@dataclass(frozen=True)
class FieldProfile:
    """Piecewise field profile.

    Parameters
    ----------
    segments : sequence of Segment
        Consecutive segments starting at t = 0. Only the last may have an
        infinite duration.
    ramp : float
        Width of the tanh edge smoothing applied to F(t). Zero gives hard steps.
    omega0 : float
        Reference frequency; ``omega(t) = omega0 * sqrt(F(t))``.
    mass : float
        Particle mass in natural units.
    """

    segments: tuple[Segment, ...]
    ramp: float = 0.05
    omega0: float = 1.0
    mass: float = 1.0
    _starts: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        segs = tuple(self.segments)
        if not segs:
            raise ProfileError("profile needs at least one segment")
        object.__setattr__(self, "segments", segs)
        for s in segs[:-1]:
            if not math.isfinite(s.duration):
                raise ProfileError("only the last segment may have infinite duration")
        if not (self.ramp >= 0):
            raise ProfileError(f"ramp must be >= 0, got {self.ramp}")
        if not (self.omega0 > 0):
            raise ProfileError(f"omega0 must be > 0, got {self.omega0}")
        if not (self.mass > 0):
            raise ProfileError(f"mass must be > 0, got {self.mass}")
        starts = np.concatenate([[0.0], np.cumsum([s.duration for s in segs[:-1]])])
        object.__setattr__(self, "_starts", starts)

    # -- construction helpers -------------------------------------------------

    @classmethod
    def landau(cls, omega0=1.0, mass=1.0, duration=math.inf):
        """Constant field with in-field frequency ``omega0`` and no damping."""
        return cls((Segment("solenoid", duration, 1.0),), ramp=0.0, omega0=omega0, mass=mass)

    @classmethod
    def constant(cls, F, omega0=1.0, mass=1.0, gamma=0.0, duration=math.inf):
        kind = "free" if F == 0 else ("damped" if gamma > 0 else "solenoid")
        return cls((Segment(kind, duration, F, gamma),), ramp=0.0, omega0=omega0, mass=mass)

    # -- geometry -------------------------------------------------------------

    @property
    def duration(self) -> float:
        return float(self._starts[-1] + self.segments[-1].duration)

    @property
    def span(self) -> tuple[float, float]:
        return (0.0, self.duration)

    @property
    def edges(self) -> np.ndarray:
        """Interior segment boundaries."""
        return self._starts[1:].copy()

    def segment_bounds(self, index) -> tuple[float, float]:
        start = float(self._starts[index])
        return start, start + self.segments[index].duration

    def segment_index(self, t):
        """Index of the segment containing ``t`` (right-continuous at edges)."""
        t = self._check(t)
        return np.searchsorted(self._starts, t, side="right") - 1

    def is_landau(self) -> bool:
        """True when F == 1 and gamma == 0 everywhere."""
        return all(s.F == 1.0 and s.gamma == 0.0 for s in self.segments)

    def _check(self, t):
        t = np.asarray(t, dtype=float)
        slack = 1e-9 * max(1.0, abs(self.duration) if math.isfinite(self.duration) else 1.0)
        if np.any(t < -slack) or np.any(t > self.duration + slack) or np.any(np.isnan(t)):
            bad = t[(t < -slack) | (t > self.duration + slack) | np.isnan(t)].ravel()[0]
            raise ProfileError(f"t={bad:.17g} outside profile span [0, {self.duration:.17g}]")
        return t

    # -- field ------------------------------------------------------------------

    def F(self, t):
        t = self._check(t)
        Fs = [s.F for s in self.segments]
        out = np.full(t.shape, Fs[0])
        for k in range(1, len(Fs)):
            jump = Fs[k] - Fs[k - 1]
            if jump == 0.0:
                continue
            out = out + jump * self._step(t - self._starts[k])
        return np.maximum(out, 0.0) if out.ndim else max(float(out), 0.0)

    def dF(self, t):
        """Time derivative of F(t) (zero away from smoothed edges)."""
        t = self._check(t)
        out = np.zeros(t.shape)
        if self.ramp == 0.0:
            return out if out.ndim else 0.0
        Fs = [s.F for s in self.segments]
        for k in range(1, len(Fs)):
            jump = Fs[k] - Fs[k - 1]
            if jump == 0.0:
                continue
            x = (t - self._starts[k]) / self.ramp
            out = out + jump * 0.5 / np.cosh(np.clip(x, -350, 350)) ** 2 / self.ramp
        return out if out.ndim else float(out)

    def _step(self, dt):
        if self.ramp == 0.0:
            return np.where(dt > 0, 1.0, np.where(dt < 0, 0.0, 0.5))
        return 0.5 * (1.0 + np.tanh(dt / self.ramp))

    def omega_sq(self, t):
        return self.omega0**2 * self.F(t)

    def domega_sq(self, t):
        return self.omega0**2 * self.dF(t)

    def omega(self, t):
        return self.omega0 * np.sqrt(self.F(t))

    # -- damping ----------------------------------------------------------------

    def gamma(self, t):
        idx = self.segment_index(t)
        g = np.array([s.gamma for s in self.segments])[idx]
        return g if np.ndim(g) else float(g)

    def damping_integral(self, t):
        """int_0^t gamma(t') dt'."""
        t = self._check(t)
        total = np.zeros(t.shape)
        for start, s in zip(self._starts, self.segments):
            if s.gamma == 0.0:
                continue
            total = total + s.gamma * np.clip(t - start, 0.0, s.duration)
        return total if total.ndim else float(total)

    def w(self, t):
        return np.exp(-self.damping_integral(t))

    def is_undamped(self) -> bool:
        return all(s.gamma == 0.0 for s in self.segments)

    def with_segment(self, index, **changes) -> "FieldProfile":
        """Copy with one segment's fields replaced."""
        segs = list(self.segments)
        old = segs[index]
        params = dict(kind=old.kind, duration=old.duration, F=old.F, gamma=old.gamma)
        params.update(changes)
        segs[index] = Segment(**params)
        return FieldProfile(tuple(segs), self.ramp, self.omega0, self.mass)


def omega_at(profile: FieldProfile, t):
    """Oscillator frequency omega(t) = omega0 * sqrt(F(t))."""
    return profile.omega(t)


def dissipation_factor(profile: FieldProfile, t):
    """w(t) = exp(-int_0^t gamma)."""
    return profile.w(t)


def omega_from_field(B0, mass=1.0, charge=ELEMENTARY_CHARGE):
    """Larmor-type frequency |e| B / (2 m) in natural units."""
    return abs(charge) * B0 / (2.0 * mass)


def build_fig2_profile(
    lens1,
    drift: float,
    lens2,
    tail: float,
    *,
    lead: float = 0.5,
    ramp: float = 0.05,
    omega0: float = 1.0,
    mass: float = 1.0,
) -> FieldProfile:
    """Five-segment free / lens / free / lens / free profile.

    ``lens1`` and ``lens2`` may be a Segment, a mapping of Segment fields, a
    bare duration, or a ``(duration, F, gamma)`` tuple.
    """
    segs: Sequence[Segment] = (
        Segment("free", float(lead)),
        _as_segment(lens1, "solenoid"),
        Segment("free", float(drift)),
        _as_segment(lens2, "solenoid"),
        Segment("free", float(tail)),
    )
    return FieldProfile(tuple(segs), ramp=ramp, omega0=omega0, mass=mass)


def profile_from_segments(specs: Iterable, **kwargs) -> FieldProfile:
    return FieldProfile(tuple(_as_segment(s, "solenoid") for s in specs), **kwargs)
