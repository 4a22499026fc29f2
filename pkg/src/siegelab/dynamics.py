"""Iteration kernel for the quadratic family, cycle location and explosion branches.

The family is z -> lambda*z + z^2 with lambda = e^(2*i*pi*alpha).  Two
arithmetic backends coexist: plain ``complex`` (digits=None) for rendering and
point clouds, and mpmath ``mpc`` for the precision-critical work (explosion
derivatives, charts), selected per map.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np
from mpmath import mp, mpc, mpf, workdps

from .cfrac import CFAngle
from .errors import BranchJump, CollapsedToFixedPoint, NonConvergence

OVERFLOW_RADIUS = 1e100


class QuadMap:
    """The quadratic z -> lambda*z + z^2 with multiplier lambda = e^(2 i pi alpha).

    ``digits=None`` selects binary64 arithmetic; otherwise all scalar work is
    done with mpmath at the given number of significant digits.  Instances are
    immutable and safe to share between workers.
    """

    def __init__(self, alpha, digits: Optional[int] = None):
        self.digits = digits
        if isinstance(alpha, CFAngle):
            self.alpha_cf = alpha
            alpha_num = alpha.value(digits or 20)
        else:
            self.alpha_cf = None
            alpha_num = alpha
        if digits is None:
            self.alpha = complex(alpha_num)
            self.lam = np.exp(2j * np.pi * self.alpha)
            if self.alpha.imag == 0.0:
                self.alpha = self.alpha.real
        else:
            with workdps(digits + 10):
                self.alpha = mpc(alpha_num) if mp.im(mpc(alpha_num)) != 0 else mpf(mp.re(mpc(alpha_num)))
                self.lam = mp.e ** (2j * mp.pi * self.alpha)

    def _at_precision(self, fn):
        if self.digits is None:
            return fn()
        with workdps(self.digits + 10):
            return fn()

    # fixed points are exactly 0 and sigma = 1 - lambda
    @property
    def sigma(self):
        return self._at_precision(lambda: 1 - self.lam)

    @property
    def critical_point(self):
        return self._at_precision(lambda: -self.lam / 2)

    @property
    def critical_value(self):
        return self._at_precision(lambda: -self.lam**2 / 4)

    def __call__(self, z):
        return self.lam * z + z * z

    def deriv(self, z):
        return self.lam + 2 * z

    def apply_np(self, z: np.ndarray) -> np.ndarray:
        lam = complex(self.lam)
        return lam * z + z * z

    def with_digits(self, digits):
        return QuadMap(self.alpha_cf if self.alpha_cf is not None else self.alpha, digits)

    def __repr__(self):
        return f"QuadMap(alpha={self.alpha}, digits={self.digits})"


@dataclass
class Orbit:
    points: list
    overflow_index: Optional[int] = None

    def __len__(self):
        return len(self.points)

    def __getitem__(self, i):
        return self.points[i]


def iterate(map: QuadMap, z0, m: int) -> Orbit:
    """Orbit [z0, P(z0), ..., P^m(z0)], stopping early on overflow."""
    if m < 0:
        raise ValueError("m must be >= 0")
    with workdps((map.digits or 5) + 10):
        pts = [z0]
        z = z0
        for k in range(m):
            z = map(z)
            if abs(z) > OVERFLOW_RADIUS:
                return Orbit(pts, overflow_index=k + 1)
            pts.append(z)
        return Orbit(pts)


@dataclass
class EscapeResult:
    escaped: bool
    index: Optional[int] = None


def escape_radius_bound(map: QuadMap, margin=1e-9):
    """Smallest certified escape radius: |z| > |lambda| + 1 forces growth."""
    return abs(map.lam) + 1 + margin


def escape_classify(map: QuadMap, z0, m_max: int, R_esc: float) -> EscapeResult:
    """Escaped(first index with |z| > R_esc) or Bounded within m_max steps.

    Bounded is a verdict at the given budget, not a membership proof.
    """
    if R_esc < escape_radius_bound(map):
        raise ValueError(
            f"R_esc={R_esc} below certified bound {escape_radius_bound(map)}"
        )
    with workdps((map.digits or 5) + 10):
        z = z0
        if abs(z) > R_esc:
            return EscapeResult(True, 0)
        for k in range(1, m_max + 1):
            z = map(z)
            if abs(z) > R_esc:
                return EscapeResult(True, k)
        return EscapeResult(False)


@dataclass
class Cycle:
    points: tuple
    period: int
    multiplier: complex
    residual: float

    def to_json(self):
        return {
            "q": self.period,
            "points": [[float(mp.re(z)), float(mp.im(z))] for z in self.points],
            "multiplier": [float(mp.re(self.multiplier)), float(mp.im(self.multiplier))],
            "residual": float(self.residual),
        }


def _orbit_and_derivative(map, z, q):
    """P^q(z) and (P^q)'(z) by the chain rule along the orbit."""
    w = z
    d = 1
    for _ in range(q):
        d = d * map.deriv(w)
        w = map(w)
    return w, d


def cycle_newton(
    map: QuadMap,
    q: int,
    seed,
    deflate: Sequence = (),
    max_steps: int = 80,
    residual_tol: Optional[float] = None,
) -> Cycle:
    """Locate a period-q cycle by Newton on z -> P^q(z) - z.

    The fixed points 0 and sigma (and any points in ``deflate``) are divided
    out through their divided differences, so Newton cannot stall on them.
    Raises CollapsedToFixedPoint when the iteration degenerates onto a
    deflated point or a lower period, NonConvergence on budget exhaustion.
    """
    digits = map.digits
    dps = (digits or 15) + 10
    with workdps(dps):
        one = mpf(1) if digits else 1.0
        z = mpc(seed) if digits else complex(seed)
        sigma = map.sigma
        defl = [mpc(0) if digits else 0.0, sigma] + [mpc(c) if digits else complex(c) for c in deflate]
        eps_collapse = mpf(10) ** (-(dps - 4)) if digits else 1e-12
        if residual_tol is None:
            residual_tol = float(mpf(10) ** (-(digits or 15) / 2))
        converged = False
        for _ in range(max_steps):
            g, gp = _orbit_and_derivative(map, z, q)
            g = g - z
            gp = gp - 1
            # divided-difference deflation: h = g / prod(z - c)
            # newton step on h: dz = 1 / (g'/g - sum 1/(z-c))
            if abs(g) == 0:
                converged = True
                break
            corr = 0 * one
            for c in defl:
                d = z - c
                if abs(d) < eps_collapse:
                    raise CollapsedToFixedPoint(f"iterate collapsed onto {c}")
                corr += 1 / d
            denom = gp / g - corr
            if abs(denom) == 0:
                raise NonConvergence("degenerate Newton denominator")
            dz = 1 / denom
            z = z - dz
            if abs(dz) < (mpf(10) ** (-(dps - 6)) if digits else 1e-14) * max(1, abs(z)):
                converged = True
                break
        if not converged:
            # accept if the residual is already far below tolerance
            g, _ = _orbit_and_derivative(map, z, q)
            if abs(g - z) > residual_tol:
                raise NonConvergence(f"no convergence after {max_steps} Newton steps")
        # a limit point sitting on top of a deflated point is a degenerate
        # (coalesced) cycle, not a period-q orbit
        scale0 = max(1.0, abs(sigma))
        for c in defl:
            if abs(z - c) < 1e-14 * scale0:
                raise CollapsedToFixedPoint(f"Newton limit coalesced at {c}")
        # build the cycle
        pts = [z]
        w = z
        for _ in range(q - 1):
            w = map(w)
            pts.append(w)
        closure = abs(map(pts[-1]) - pts[0])
        shift = max(abs(map(pts[i]) - pts[(i + 1) % q]) for i in range(q))
        residual = float(max(closure, shift))
        if residual > residual_tol:
            raise NonConvergence(f"cycle residual {residual} above {residual_tol}")
        # separation check: distinct points, and not a lower-period orbit
        scale = max(max(abs(p) for p in pts), 1e-30)
        for i in range(q):
            for j in range(i + 1, q):
                if abs(pts[i] - pts[j]) < 1e3 * eps_collapse * scale:
                    raise CollapsedToFixedPoint("cycle points coincide (lower period)")
        mult = one
        for p in pts:
            mult = mult * map.deriv(p)
        return Cycle(tuple(pts), q, mult, residual)


@dataclass
class ExplosionBranch:
    """One tracked branch of the cycle exploding from the origin at p/q."""

    p_over_q: Fraction
    samples: list  # (delta, chi(delta))
    lambda_estimate: Optional[complex] = None
    lambda_error: Optional[float] = None
    fe_residuals: Optional[list] = None
    achieved_radius: float = 0.0

    def to_json(self):
        return {
            "p": self.p_over_q.numerator,
            "q": self.p_over_q.denominator,
            "samples": [
                [[float(mp.re(d)), float(mp.im(d))], [float(mp.re(x)), float(mp.im(x))]]
                for d, x in self.samples
            ],
            "lambda": None
            if self.lambda_estimate is None
            else [float(mp.re(self.lambda_estimate)), float(mp.im(self.lambda_estimate))],
            "achieved_radius": self.achieved_radius,
        }


def _work_digits(q: int, delta_min, digits: int) -> int:
    """Working digits so that theta = p/q + delta^q keeps ``digits`` figures.

    delta^q can underflow the requested precision (e.g. 0.02^34 ~ 1e-58), so
    the budget grows with q * log10(1/|delta|).
    """
    import math as _math

    d = abs(complex(delta_min))
    if d <= 0:
        raise ValueError("delta must be nonzero")
    return digits + max(0, int(_math.ceil(q * -_math.log10(d)))) + 20


def _theta_map(p_over_q: Fraction, delta, digits):
    """Map at angle p/q + delta^q in the requested precision."""
    q = p_over_q.denominator
    with workdps(digits + 10):
        theta = mpf(p_over_q.numerator) / q + mpc(delta) ** q
        if mp.im(theta) == 0:
            theta = mp.re(theta)
        return QuadMap(theta, digits)


def _track_step(p_over_q, delta, seed, digits):
    m = _theta_map(p_over_q, delta, digits)
    cyc = cycle_newton(m, p_over_q.denominator, seed)
    return cyc.points[0], cyc


def _anchor_branch(p_over_q, delta, digits):
    """First cycle point at ``delta`` without a predictor: seed sweep.

    The q cycle points sit on a circle of unknown radius |chi'(0)| |delta|;
    radial and angular seed sweeps make the anchor solve robust for large q.
    """
    q = p_over_q.denominator
    last_exc = None
    for c in (1.0, 0.7, 0.5, 0.35, 0.25, 1.4, 2.0):
        for j in range(max(1, min(q, 8))):
            with workdps(digits + 10):
                seed = delta * c * mp.e ** (2j * mp.pi * j / min(q, 8) if q > 1 else 0)
            try:
                chi, cyc = _track_step(p_over_q, delta, seed, digits)
                if 0.05 * abs(delta) < abs(chi) < 5 * abs(delta) + 0.5:
                    return chi, cyc
            except (NonConvergence, CollapsedToFixedPoint) as exc:
                last_exc = exc
    raise NonConvergence(f"no branch anchor found at delta={delta}") from last_exc


def explosion_track(
    p_over_q,
    delta_path: Sequence,
    digits: int = 60,
    validate: bool = False,
    jump_factor: float = 10.0,
) -> ExplosionBranch:
    """Track one explosion branch chi along a path of delta values.

    The path must start near 0; the branch germ is fixed by the first Newton
    solve seeded at the first delta itself.  Later points use the previous
    value as predictor; a corrector landing further than ``jump_factor`` times
    the predictor step raises BranchJump.

    With ``validate=True`` the functional-equation residual
    |chi(zeta*delta) - P_theta(chi(delta))| is recorded for every sample,
    where chi(zeta*delta) is obtained by arc continuation.
    """
    p_over_q = Fraction(p_over_q)
    q = p_over_q.denominator
    if not delta_path:
        raise ValueError("empty delta path")
    radius_cap = 1.0 / q ** (3.0 / q)
    digits = _work_digits(q, min(delta_path, key=abs), digits)
    with workdps(digits + 10):
        deltas = [mpc(d) for d in delta_path]
        if any(abs(d) >= radius_cap for d in deltas):
            raise ValueError(f"path exits the explosion radius {radius_cap}")
        samples = []
        chi_prev = None
        delta_prev = None
        step_scale = abs(deltas[0])
        for d in deltas:
            if chi_prev is None:
                chi, _ = _anchor_branch(p_over_q, d, digits)
                samples.append((d, chi))
                chi_prev, delta_prev = chi, d
                continue
            predictor = chi_prev
            step_scale = max(abs(d - delta_prev), mpf(10) ** -30)
            chi, _ = _track_step(p_over_q, d, predictor, digits)
            if chi_prev is not None:
                # scale the admissible jump by the local derivative estimate
                slope = abs(chi_prev / delta_prev) if abs(delta_prev) > 0 else mpf(1)
                if abs(chi - predictor) > jump_factor * slope * step_scale + mpf(10) ** -25:
                    raise BranchJump(
                        f"corrector jumped {abs(chi - predictor)} at delta={d}"
                    )
            samples.append((d, chi))
            chi_prev, delta_prev = chi, d
        branch = ExplosionBranch(p_over_q, samples)
        branch.achieved_radius = float(max(abs(d) for d, _ in samples))
        if validate:
            zeta = mp.e ** (2j * mp.pi * p_over_q.numerator / q)
            residuals = []
            for d, chi in samples:
                m = _theta_map(p_over_q, d, digits)
                target = m(chi)
                # continue chi along the arc d -> zeta*d (same branch)
                chi_arc = chi
                steps = max(8, 2 * q)
                for s in range(1, steps + 1):
                    phi = 2 * mp.pi * p_over_q.numerator / q * s / steps
                    d_arc = d * mp.e ** (1j * phi)
                    chi_arc, _ = _track_step(p_over_q, d_arc, chi_arc, digits)
                residuals.append(float(abs(chi_arc - target)))
            branch.fe_residuals = residuals
        return branch


def track_to_radius(p_over_q, radius, digits: int = 60, n_steps: int = 24, ray_phase: complex = 1.0):
    """Track along a ray (default the positive reals) with geometric steps."""
    p_over_q = Fraction(p_over_q)
    start = min(radius / 8.0, radius * 0.05 + 1e-6)
    path = [d * ray_phase for d in np.geomspace(start, radius, n_steps)]
    return explosion_track(p_over_q, path, digits=digits)


def explosion_derivative(p_over_q, delta0: float = 0.05, digits: int = 60, branch_phase: int = 0):
    """chi'(0) by Richardson-extrapolated quotients at radii delta0, /2, /4, /8.

    ``branch_phase=k`` seeds the tracker with the k-th root-of-unity rotation,
    selecting one of the q admissible branches.  The working precision is
    raised automatically so that delta^q stays resolvable.
    """
    p_over_q = Fraction(p_over_q)
    q = p_over_q.denominator
    radius_cap = 1.0 / q ** (3.0 / q)
    d0f = min(delta0, 0.25 * radius_cap)
    wd = _work_digits(q, d0f / 8, digits)
    with workdps(wd + 10):
        d0 = mpf(d0f)
        phase = mp.e ** (2j * mp.pi * branch_phase * p_over_q.numerator / q)
        quots = []
        # track inward: anchor the branch at d0, then halve three times
        chi = None
        for scale in (1, 2, 4, 8):
            d = d0 / scale * phase
            if chi is None:
                try:
                    chi, _ = _track_step(p_over_q, d, d, wd)
                except (NonConvergence, CollapsedToFixedPoint):
                    chi, _ = _anchor_branch(p_over_q, d, wd)
            else:
                chi, _ = _track_step(p_over_q, d, chi / 2, wd)
            quots.append(chi / d)
        # Richardson triangle on f(h) = lambda + c1 h + c2 h^2 + ...
        row = quots
        prev_diag = quots[-1]
        fact = 2
        while len(row) > 1:
            row = [(fact * row[i + 1] - row[i]) / (fact - 1) for i in range(len(row) - 1)]
            if len(row) > 1:
                prev_diag = row[-1]
            fact *= 2
        lam = row[0]
        err = float(abs(lam - prev_diag))
        return lam, err


def explosion_jet(
    p_over_q,
    K: int = 48,
    sample_radius: Optional[float] = None,
    n_samples: int = 128,
    digits: int = 60,
    branch_phase: int = 0,
):
    """Taylor jet a_1..a_K of one explosion branch, by circle sampling.

    The branch is tracked along a ray to ``sample_radius`` (default 0.85 of
    the guaranteed radius 1/q^(3/q)), then continued around the full circle;
    a DFT of the samples yields the Taylor coefficients.  Returns
    (coeffs, radius_used) with coeffs[k] = a_k for k = 1..K (coeffs[0] = 0).
    Closure of the loop is verified, so a silent branch jump cannot
    contaminate the jet.  ``branch_phase`` anchors the tracking ray at the
    k-th symmetry rotation, selecting another admissible branch.
    """
    p_over_q = Fraction(p_over_q)
    q = p_over_q.denominator
    cap = 1.0 / q ** (3.0 / q)
    rad = sample_radius if sample_radius is not None else 0.85 * cap
    wd = _work_digits(q, rad, digits)
    with workdps(wd + 10):
        phase = mp.e ** (2j * mp.pi * branch_phase * p_over_q.numerator / q)
        branch = track_to_radius(p_over_q, rad, digits=digits, ray_phase=complex(phase))
        chi = branch.samples[-1][1]
        vals = []
        for j in range(n_samples):
            d = mpf(rad) * phase * mp.e ** (2j * mp.pi * j / n_samples)
            chi, _ = _track_step(p_over_q, d, chi, wd)
            vals.append(chi)
        # closure check: continue one more step back to the ray anchor
        chi_back, _ = _track_step(p_over_q, mpf(rad) * phase, chi, wd)
        if abs(chi_back - vals[0]) > mpf(10) ** (-(digits // 2)) * max(1, abs(vals[0])):
            raise BranchJump("circle continuation did not close up")
        coeffs = [mpc(0)]
        base = mpf(rad) * phase
        for k in range(1, K + 1):
            acc = mpc(0)
            for j in range(n_samples):
                acc += vals[j] * mp.e ** (-2j * mp.pi * ((j * k) % n_samples) / n_samples)
            coeffs.append(acc / (n_samples * base**k))
        return coeffs, rad


def postcritical_orbit(map: QuadMap, m: int) -> np.ndarray:
    """First m points of the critical orbit, starting at P(critical point)."""
    if m < 1:
        raise ValueError("m must be >= 1")
    lam = complex(map.lam)
    pts = np.empty(m, dtype=complex)
    z = -lam * lam / 4  # P(-lam/2)
    pts[0] = z
    for k in range(1, m):
        z = lam * z + z * z
        if abs(z) > OVERFLOW_RADIUS:
            return pts[:k]
        pts[k] = z
    return pts
