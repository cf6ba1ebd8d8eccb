"""Classical oscillator pair and the damped Ermakov-Pinney scaling equation.

Both integrators step with scipy's embedded RK45 pair. The dense output for
the oscillating quantities (u, du, b, bdot) is rebuilt as a quintic Hermite
interpolant from values and two derivatives taken from the ODE itself at the
accepted step nodes. That keeps the interpolated derivative consistent with
the right-hand side between nodes, which the default RK45 interpolant does not
do to better than about 100 tol. The remaining mismatch scales like the local
step error divided by the step length, so steps are taken at ``tol / 100``.
Integration restarts at every segment edge of the profiles because the
damping rate is discontinuous there.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import OdeSolution, solve_ivp
from scipy.interpolate import BPoly
from scipy.optimize import brentq

from .errors import IntegrationError, LocalityError, SingularityError
from .fields import FieldProfile

DEFAULT_TOL = 1e-10
B_FLOOR = 1e-6
# RK45 stepping tolerance relative to the requested one; see the module notes
STEP_TOL_FACTOR = 0.01
MIN_STEP_TOL = 1e-13


def first_integral(b, bdot, omega0):
    """Conserved envelope quantity ``(b**2 + bdot**2/omega0**2 + 1/b**2) / 2``.

    It equals 1 for the stationary solution and is constant whenever the
    target frequency equals ``omega0`` and there is no damping.
    """
    b = np.asarray(b, dtype=float)
    bdot = np.asarray(bdot, dtype=float)
    out = 0.5 * (b**2 + bdot**2 / omega0**2 + 1.0 / b**2)
    return out if out.ndim else float(out)


def _span(span, profile):
    t0, t1 = (float(s) for s in span)
    if not t1 > t0:
        raise ValueError(f"empty time span {span}")
    end = profile.duration
    if t0 < 0 or t1 > end * (1 + 1e-12) + 1e-12:
        raise ValueError(f"span {span} not inside profile span [0, {end}]")
    return t0, min(t1, end)


def _breakpoints(t0, t1, *edge_sets):
    cuts = {t0, t1}
    for edges in edge_sets:
        cuts.update(float(e) for e in edges if t0 < e < t1)
    return sorted(cuts)


class _Piecewise:
    """Stitch per-piece BPoly interpolants into one callable on [t0, t1]."""

    def __init__(self, pieces):
        xs = [pieces[0].x]
        cs = [pieces[0].c]
        for p in pieces[1:]:
            xs.append(p.x[1:])
            cs.append(p.c)
        self.poly = BPoly(np.concatenate(cs, axis=1), np.concatenate(xs), extrapolate=False)
        self.t0 = float(self.poly.x[0])
        self.t1 = float(self.poly.x[-1])

    def __call__(self, t, nu=0):
        t = np.asarray(t, dtype=float)
        tc = np.clip(t, self.t0, self.t1)
        if np.any(np.abs(t - tc) > 1e-9 * max(1.0, abs(self.t1))):
            raise ValueError(f"time outside integrated span [{self.t0}, {self.t1}]")
        out = self.poly(tc, nu)
        return out if out.ndim else float(out)


def _quintic(ts, y, dy, ddy):
    nodes = np.stack([y, dy, ddy], axis=1)
    return BPoly.from_derivatives(ts, nodes, orders=5)


class _ScalarProfile:
    """Fast scalar evaluation of a profile inside the RK right-hand side."""

    def __init__(self, profile: FieldProfile):
        self.p = profile
        self.omega0_sq = profile.omega0**2
        self.F0 = profile.segments[0].F
        Fs = [s.F for s in profile.segments]
        self.jumps = [(float(e), Fs[k + 1] - Fs[k]) for k, e in enumerate(profile.edges) if Fs[k + 1] != Fs[k]]
        self.ramp = profile.ramp
        self.starts = [float(x) for x in profile._starts]
        self.gammas = [s.gamma for s in profile.segments]
        self.undamped = profile.is_undamped()

    def F(self, t):
        out = self.F0
        r = self.ramp
        for e, j in self.jumps:
            if r:
                out += j * 0.5 * (1.0 + math.tanh((t - e) / r))
            elif t > e:
                out += j
            elif t == e:
                out += 0.5 * j
        return out if out > 0 else 0.0

    def omega_sq(self, t):
        return self.omega0_sq * self.F(t)

    def omega(self, t):
        return math.sqrt(self.omega_sq(t))

    def gamma(self, t):
        return self.gammas[bisect_right(self.starts, t) - 1] if not self.undamped else 0.0

    def w(self, t):
        if self.undamped:
            return 1.0
        total = 0.0
        for a, s in zip(self.starts, self.p.segments):
            if s.gamma and t > a:
                total += s.gamma * min(t - a, s.duration)
        return math.exp(-total)


class _PieceView(_ScalarProfile):
    """Profile restricted to one open interval between segment edges.

    Piecewise-constant quantities (gamma always, F when unramped) are frozen
    to the interval's own value so evaluations at the end points never pick up
    the neighbouring segment. Array arguments are accepted by the ``*_array``
    methods used when building the interpolants.
    """

    def __init__(self, profile: FieldProfile, a, b):
        super().__init__(profile)
        mid = 0.5 * (a + b) if math.isfinite(b) else a + 1.0
        self.g = float(profile.gamma(mid))
        self.frozen_F = profile.ramp == 0.0
        self.F_mid = float(profile.F(mid))

    def gamma(self, t):
        return self.g

    def F(self, t):
        return self.F_mid if self.frozen_F else _ScalarProfile.F(self, t)

    def omega_sq_array(self, t):
        t = np.asarray(t, dtype=float)
        if self.frozen_F:
            return self.omega0_sq * self.F_mid + 0.0 * t
        return self.p.omega_sq(t)

    def domega_sq_array(self, t):
        t = np.asarray(t, dtype=float)
        if self.frozen_F:
            return 0.0 * t
        return self.p.domega_sq(t)

    def w_array(self, t):
        return self.p.w(t)


def _run_pieces(make_rhs, y0, cuts, tol, events=None, max_step=np.inf):
    """Integrate across [cuts[0], cuts[-1]] restarting at each cut.

    ``make_rhs(a, b)`` returns the right-hand side used on piece (a, b).
    Returns the accepted node times and states of every piece plus one
    OdeSolution spanning the whole range.
    """
    y = np.asarray(y0, dtype=float)
    pieces = []
    interps, ts_all = [], [cuts[0]]
    for a, b in zip(cuts[:-1], cuts[1:]):
        step_tol = max(tol * STEP_TOL_FACTOR, MIN_STEP_TOL)
        sol = solve_ivp(make_rhs(a, b), (a, b), y, method="RK45", rtol=step_tol, atol=step_tol,
                        dense_output=True, events=events, max_step=max_step)
        if sol.status == 1:
            t_ev = float(sol.t_events[0][0]) if sol.t_events and len(sol.t_events[0]) else float(sol.t[-1])
            raise SingularityError(f"scaling parameter fell below floor {B_FLOOR:g}", t_ev)
        if sol.status != 0:
            raise IntegrationError(f"integrator failed: {sol.message}", float(sol.t[-1]))
        ts = np.asarray(sol.t)
        ys = np.asarray(sol.y)
        pieces.append((a, b, ts, ys))
        interps.extend(sol.sol.interpolants)
        ts_all.extend(sol.sol.ts[1:])
        y = ys[:, -1]
    return pieces, OdeSolution(np.asarray(ts_all), interps)


# -- linear pair --------------------------------------------------------------


@dataclass(frozen=True)
class LinearPair:
    """Two independent solutions of ``u'' + gamma u' + omega**2 u = 0``.

    Attributes
    ----------
    profile : FieldProfile
    span : tuple of float
    tol : float
    """

    profile: FieldProfile
    span: tuple
    tol: float
    _u1: _Piecewise = field(repr=False)
    _du1: _Piecewise = field(repr=False)
    _u2: _Piecewise = field(repr=False)
    _du2: _Piecewise = field(repr=False)

    def u1(self, t):
        return self._u1(t)

    def du1(self, t):
        return self._du1(t)

    def u2(self, t):
        return self._u2(t)

    def du2(self, t):
        return self._du2(t)

    def wronskian(self, t):
        return self.u1(t) * self.du2(t) - self.u2(t) * self.du1(t)

    def tau(self, t):
        """Free-particle time ``-u1/u2`` of the QAT."""
        return -self.u1(t) / self.u2(t)

    def u2_zeros(self, samples=4001):
        """Zeros of u2 in the open span (excluding the start point)."""
        t0, t1 = self.span
        ts = np.linspace(t0, t1, samples)
        v = self.u2(ts)
        zeros = []
        for k in range(1, samples - 1):
            if v[k] == 0.0 and k > 0:
                zeros.append(float(ts[k]))
            elif v[k] * v[k + 1] < 0:
                zeros.append(float(brentq(self.u2, ts[k], ts[k + 1], xtol=1e-14)))
        return zeros


def integrate_linear_pair(profile: FieldProfile, span, tol=DEFAULT_TOL, initial=None) -> LinearPair:
    """Integrate the classical equation of motion for two initial conditions.

    Parameters
    ----------
    profile : FieldProfile
    span : (float, float)
    tol : float
        Relative and absolute RK tolerance.
    initial : array_like, optional
        ``(u1, du1, u2, du2)`` at ``span[0]``. Defaults to ``(1, 0, 0, w(t0))``
        so the Wronskian starts at ``w(t0)``.
    """
    if not tol > 0:
        raise ValueError("tol must be > 0")
    t0, t1 = _span(span, profile)
    if initial is None:
        initial = (1.0, 0.0, 0.0, profile.w(t0))
    initial = np.asarray(initial, dtype=float)
    if initial[0] * initial[3] - initial[2] * initial[1] == 0:
        raise ValueError("initial conditions are linearly dependent")

    def make_rhs(a, b):
        view = _PieceView(profile, a, b)

        def rhs(t, y):
            g = view.g
            om2 = view.omega_sq(t)
            return np.array([y[1], -g * y[1] - om2 * y[0], y[3], -g * y[3] - om2 * y[2]])

        return rhs

    pieces, _ = _run_pieces(make_rhs, initial, _breakpoints(t0, t1, profile.edges), tol)
    polys = {k: [] for k in ("u1", "du1", "u2", "du2")}
    for a, b, ts, ys in pieces:
        view = _PieceView(profile, a, b)
        g = view.g
        om2 = view.omega_sq_array(ts)
        dom2 = view.domega_sq_array(ts)
        for name, (u, du) in (("1", (ys[0], ys[1])), ("2", (ys[2], ys[3]))):
            ddu = -g * du - om2 * u
            dddu = -g * ddu - dom2 * u - om2 * du
            polys["u" + name].append(_quintic(ts, u, du, ddu))
            polys["du" + name].append(_quintic(ts, du, ddu, dddu))
    return LinearPair(profile, (t0, t1), tol,
                      *(_Piecewise(polys[k]) for k in ("u1", "du1", "u2", "du2")))


# -- Ermakov-Pinney -----------------------------------------------------------


class ErmakovTrajectory:
    """Scaling parameter b(t2) relating a reference and a target system.

    Solves ``b'' + g2 b' + w2sq b = (w2/w1)**2 w1sq / b**3`` where the reference
    quantities are taken at the reparametrized time ``t1(t2)`` with
    ``dt1/dt2 = w2 / (w1 b**2)``. The accumulators ``t1``, ``phi1 = int omega1 dt1``
    and ``phi2 = int omega2 dt2`` are integrated along with ``(b, bdot)``.
    """

    def __init__(self, ref_profile, target_profile, span, tol, b_poly, bd_poly, acc, scale=1.0):
        self.ref_profile = ref_profile
        self.target_profile = target_profile
        self.span = span
        self.tol = tol
        self._b = b_poly
        self._bd = bd_poly
        self._acc = acc
        self.scale = scale

    # core dense output
    def b(self, t):
        return self.scale * self._b(t)

    def bdot(self, t):
        return self.scale * self._bd(t)

    def t1(self, t):
        out = self._acc(np.asarray(t, dtype=float))[2]
        return out if np.ndim(out) else float(out)

    tau1 = t1

    def phi1(self, t):
        out = self._acc(np.asarray(t, dtype=float))[3]
        return out if np.ndim(out) else float(out)

    def phi2(self, t):
        out = self._acc(np.asarray(t, dtype=float))[4]
        return out if np.ndim(out) else float(out)

    def state(self, t):
        """(b, bdot, t1, phi1, phi2) at time t."""
        return self.b(t), self.bdot(t), self.t1(t), self.phi1(t), self.phi2(t)

    @property
    def omega0(self):
        return self.ref_profile.omega0

    @property
    def mass(self):
        return self.target_profile.mass

    # derived quantities from the equation itself
    def _coupling(self, t):
        """K = (w2/w1)**2 omega1**2 and its time derivative."""
        t = np.asarray(t, dtype=float)
        t1 = self.t1(t)
        b = self._b(t)
        w2 = self.target_profile.w(t)
        w1 = self.ref_profile.w(t1)
        r = w2 / w1
        K = r**2 * self.ref_profile.omega_sq(t1)
        t1dot = r / b**2
        dK = K * (-2 * self.target_profile.gamma(t) + 2 * self.ref_profile.gamma(t1) * t1dot)
        dK = dK + r**2 * self.ref_profile.domega_sq(t1) * t1dot
        return K, dK

    def bddot(self, t):
        """Second derivative of b from the right-hand side of the equation."""
        b, bd = self._b(t), self._bd(t)
        K, _ = self._coupling(t)
        tp = self.target_profile
        out = -tp.gamma(t) * bd - tp.omega_sq(t) * b + K / b**3
        return self.scale * out

    def b_third(self, t):
        """Third derivative of b, differentiating the equation analytically."""
        b, bd = self._b(t), self._bd(t)
        K, dK = self._coupling(t)
        tp = self.target_profile
        g = tp.gamma(t)
        bdd = -g * bd - tp.omega_sq(t) * b + K / b**3
        out = -g * bdd - tp.domega_sq(t) * b - tp.omega_sq(t) * bd + dK / b**3 - 3 * K * bd / b**4
        return self.scale * out

    def residual(self, t):
        """Residual of the Ermakov-Pinney equation along the dense output."""
        b = self.b(t)
        bd = self.bdot(t)
        bdd = self.scale * self._bd(t, 1)
        K, _ = self._coupling(t)
        tp = self.target_profile
        return bdd + tp.gamma(t) * bd + tp.omega_sq(t) * b - K / b**3

    def first_integral(self, t):
        return first_integral(self.b(t), self.bdot(t), self.omega0)

    def perturbed(self, factor) -> "ErmakovTrajectory":
        """Copy with b and bdot multiplied by ``factor``; no longer a solution."""
        return ErmakovTrajectory(self.ref_profile, self.target_profile, self.span, self.tol,
                                 self._b, self._bd, self._acc, self.scale * factor)

    def sample_times(self, count):
        return np.linspace(self.span[0], self.span[1], count)


def integrate_ermakov(ref_profile: FieldProfile, target_profile: FieldProfile, b0, bdot0,
                      span=None, tol=DEFAULT_TOL, b_floor=B_FLOOR) -> ErmakovTrajectory:
    """Integrate the damped Ermakov-Pinney equation with its accumulators.

    Parameters
    ----------
    ref_profile, target_profile : FieldProfile
        Reference system (time t1) and target system (time t2).
    b0, bdot0 : float
        Initial scale factor and rate at ``span[0]``.
    span : (float, float), optional
        Defaults to the whole target profile.
    tol : float
    b_floor : float
        The integration fails with SingularityError if b drops below this.

    Returns
    -------
    ErmakovTrajectory
    """
    if not b0 > 0:
        raise ValueError(f"b0 must be > 0, got {b0}")
    if not tol > 0:
        raise ValueError("tol must be > 0")
    if span is None:
        span = target_profile.span
    t0, tend = _span(span, target_profile)
    ref, tgt = ref_profile, target_profile
    if not b0 > b_floor:
        raise SingularityError(f"initial b0={b0!r} is not above the floor {b_floor!r}", t0)

    fast_ref = _ScalarProfile(ref)

    def make_rhs(a, b):
        view = _PieceView(tgt, a, b)

        def rhs(t, y):
            b, bd, t1 = y[0], y[1], y[2]
            r = view.w(t) / fast_ref.w(t1)
            t1dot = r / (b * b)
            om1sq = fast_ref.omega_sq(t1)
            om2sq = view.omega_sq(t)
            bdd = -view.g * bd - om2sq * b + r * r * om1sq / (b * b * b)
            return np.array([bd, bdd, t1dot, math.sqrt(om1sq) * t1dot, math.sqrt(om2sq)])

        return rhs

    def floor_event(t, y):
        return y[0] - b_floor

    floor_event.terminal = True
    floor_event.direction = -1

    # ref segment edges in t2 are unknown in advance; cap the step so RK45 sees them
    max_step = np.inf
    if len(ref.edges):
        max_step = max(ref.ramp, 1e-3) if ref.ramp else 1e-2

    y0 = [b0, bdot0, t0, 0.0, 0.0]
    pieces, acc = _run_pieces(make_rhs, y0, _breakpoints(t0, tend, tgt.edges), tol,
                              events=floor_event, max_step=max_step)

    traj = ErmakovTrajectory(ref, tgt, (t0, tend), tol, None, None, acc)
    bp, bdp = [], []
    for a, b_, ts, ys in pieces:
        view = _PieceView(tgt, a, b_)
        b, bd = ys[0], ys[1]
        K, dK = _node_coupling(ref, view, ts, ys)
        g = view.g
        om2 = view.omega_sq_array(ts)
        bdd = -g * bd - om2 * b + K / b**3
        b3 = -g * bdd - view.domega_sq_array(ts) * b - om2 * bd + dK / b**3 - 3 * K * bd / b**4
        bp.append(_quintic(ts, b, bd, bdd))
        bdp.append(_quintic(ts, bd, bdd, b3))
    traj._b = _Piecewise(bp)
    traj._bd = _Piecewise(bdp)
    return traj


def _node_coupling(ref, tgt, ts, ys):
    b, t1 = ys[0], ys[2]
    w2 = tgt.w_array(ts)
    w1 = ref.w(t1)
    r = w2 / w1
    K = r**2 * ref.omega_sq(t1)
    t1dot = r / b**2
    dK = K * (-2 * tgt.g + 2 * ref.gamma(t1) * t1dot) + r**2 * ref.domega_sq(t1) * t1dot
    return K, dK


# -- pair-ratio construction -----------------------------------------------------


class _RatioSolution:
    """Accumulator callable (b, bdot, t1, phi1, phi2) built from two linear pairs."""

    def __init__(self, ref_pair: LinearPair, target_pair: LinearPair):
        self.ref = ref_pair
        self.tgt = target_pair
        t0, t1 = target_pair.span
        zeros = [z for z in target_pair.u2_zeros() if z > t0]
        if zeros:
            raise LocalityError(f"target u2 vanishes at t={zeros[0]:.17g}; the map is not local there")
        ref_zeros = [z for z in ref_pair.u2_zeros() if z > ref_pair.span[0]]
        self.t1_max = ref_zeros[0] if ref_zeros else ref_pair.span[1]
        self._at_zero = bool(ref_zeros)

    def t1_of(self, t2):
        if t2 <= self.tgt.span[0]:
            return self.ref.span[0]
        target_tau = self.tgt.tau(t2)
        f = lambda s: self.ref.tau(s) - target_tau
        lo = self.ref.span[0] + 1e-12
        hi = self.t1_max * (1 - 1e-12) if self._at_zero else self.t1_max
        while f(lo) > 0:
            lo *= 0.5
            if lo < 1e-300:
                return 0.0
        if f(hi) < 0:
            raise LocalityError(f"reference time for t2={t2:.17g} lies beyond the first zero of the reference u2")
        return brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)

    def evaluate(self, t2):
        """Return b, bdot, t1 at scalar t2."""
        tp, rp = self.tgt.profile, self.ref.profile
        if t2 <= self.tgt.span[0]:
            b = tp.w(t2) * self.ref.du2(0.0) / (rp.w(0.0) * self.tgt.du2(t2))
            return b, 0.0, 0.0
        t1 = self.t1_of(t2)
        v1 = self.ref.u2(t1)
        b = self.tgt.u2(t2) / v1
        t1dot = tp.w(t2) / (rp.w(t1) * b**2)
        bdot = self.tgt.du2(t2) / v1 - self.tgt.u2(t2) * self.ref.du2(t1) * t1dot / v1**2
        return b, bdot, t1


class _RatioAcc:
    def __init__(self, ratio: _RatioSolution):
        self.ratio = ratio

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        flat = np.atleast_1d(t).ravel()
        out = np.empty((5, flat.size))
        rp, tp = self.ratio.ref.profile, self.ratio.tgt.profile
        from scipy.integrate import quad

        for i, s in enumerate(flat):
            b, bd, t1 = self.ratio.evaluate(float(s))
            phi1 = quad(lambda x: float(rp.omega(x)), 0.0, t1, epsabs=1e-13, epsrel=1e-12, limit=200)[0] if t1 > 0 else 0.0
            phi2 = quad(lambda x: float(tp.omega(x)), 0.0, float(s), epsabs=1e-13, epsrel=1e-12, limit=200)[0] if s > 0 else 0.0
            out[:, i] = (b, bd, t1, phi1, phi2)
        return out.reshape((5,) + t.shape)


class _Component:
    def __init__(self, acc, index):
        self.acc = acc
        self.index = index

    def __call__(self, t, nu=0):
        if nu:
            raise NotImplementedError("pair-ratio trajectories do not expose derivative splines")
        out = self.acc(t)[self.index]
        return out if np.ndim(out) else float(out)


def ermakov_via_pair_ratio(ref_pair: LinearPair, target_pair: LinearPair) -> ErmakovTrajectory:
    """Scaling parameter as the ratio of the two systems' u2 solutions.

    ``b(t2) = u2_target(t2) / u2_ref(t1)``, where ``t1`` solves
    ``tau_ref(t1) = tau_target(t2)`` with ``tau = -u1/u2``. The result starts at
    ``b = 1, bdot = 0`` and is defined until the first zero of either ``u2``.
    Evaluation is pointwise (root finding plus quadrature for the phases) so it
    is slow; it exists as an independent cross-check of integrate_ermakov.
    """
    ratio = _RatioSolution(ref_pair, target_pair)
    acc = _RatioAcc(ratio)
    traj = ErmakovTrajectory(ref_pair.profile, target_pair.profile, target_pair.span,
                             min(ref_pair.tol, target_pair.tol), _Component(acc, 0),
                             _Component(acc, 1), acc)
    return traj
