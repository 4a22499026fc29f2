"""Perturbed Siegel dynamics in the unit-scale chart coordinate.

The conjugated map f acts near the unit disk, fixes 0 with derivative
e^(2 i pi alpha_n) and has its central cycle near the q-th roots of eps_n.
Everything is organized around the polynomial vector field

    xi(z) = 2 i pi q z (eps - z^q)

whose time-1 flow shadows f^q, and the covering pi(Z) that straightens xi to
d/dZ on a half-plane.  The covering and its inverse are explicit: all branch
choices reduce to half-plane-safe logarithms, so no sheet tracking is needed
at runtime.  eps of either sign is supported; the half-plane lies on the
side of sign(eps).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from mpmath import mp, mpc, mpf, workdps

from .cfrac import PerturbationSpec
from .dynamics import QuadMap, explosion_derivative
from .errors import NonConvergence, OrbitLeftOmega, PrecisionError, StepUnderflow
from .linearization import Linearizer, linearizer_coefficients


@dataclass
class PerturbationData:
    """Chart-conjugated perturbed map and its derived constants.

    The chart is the explosion coordinate at the n-th convergent, evaluated
    through its Taylor jet (built once by continuation around a sampling
    circle).  A cheaper first-order fallback -- the base-angle linearizer
    rescaled by the explosion derivative -- is available as
    chart_mode='linearizer' and for the unit-scale limit chart.
    """

    spec: PerturbationSpec
    digits: int = 60
    chart_mode: str = "jet"
    jet_K: int = 48
    jet_radius: Optional[float] = None
    chart_J: Optional[int] = None
    chart_scope: float = 0.55  # largest |w| the chart must cover reliably

    def __post_init__(self):
        d = self.digits
        from fractions import Fraction

        base = self.spec.base
        n = self.spec.n
        p_n, q_n = base.convergent(n)
        _, q_nm1 = base.convergent(n - 1)
        self.q = q_n
        self.q_prev = q_nm1
        self.p = p_n
        with workdps(d + 15):
            self.eps = self.spec.epsilon_closed_form(d)
            self.side = 1 if self.eps > 0 else -1
            self.A_theta = mpf(self.spec.A_n) + self.spec.theta(d)
            self.period = 1 / (q_n * self.eps)  # signed
            self.alpha_n_val = self.spec.alpha_n.value(d + 10)
            self.lam_n_map = mp.e ** (2j * mp.pi * self.alpha_n_val)
        self._base_lin = None
        if self.chart_mode == "none":
            # scalars only: enough for X_n membership, tau, xi and flows
            self.lam_q = None
            self.lam_q_err = None
            self.chart_radius = 0.0
        elif self.chart_mode == "jet":
            from .dynamics import explosion_jet

            coeffs, rad = explosion_jet(
                Fraction(p_n, q_n), K=self.jet_K, sample_radius=self.jet_radius, digits=d
            )
            self.jet = coeffs
            with workdps(d + 15):
                self.jet_deriv = [mpc(0)] + [k * coeffs[k] for k in range(1, len(coeffs))]
            self.lam_q = coeffs[1]
            self.lam_q_err = 0.0
            self.chart_radius = 0.95 * rad
        elif self.chart_mode == "linearizer":
            lam_q, lam_err = explosion_derivative(Fraction(p_n, q_n), digits=d)
            self.lam_q = lam_q
            self.lam_q_err = lam_err
            lin = self.base_lin
            with workdps(d + 15):
                self.chart_radius = float(0.95 * lin.radius_estimate / abs(lam_q))
        else:
            raise ValueError(f"unknown chart mode {self.chart_mode!r}")

    @property
    def base_lin(self) -> Linearizer:
        if self._base_lin is None:
            if self.chart_J is None:
                from .linearization import hadamard_radius

                r0 = hadamard_radius(self.spec.base, 1200)[0]
                frac = min(0.97, abs(complex(self.lam_n_map)) * self.chart_scope / r0)
                self.chart_J = int(
                    min(420, max(80, math.ceil(math.log(1e-12) / math.log(frac))))
                )
            self._base_lin = linearizer_coefficients(self.spec.base, self.chart_J, self.digits)
        return self._base_lin

    # -- chart -------------------------------------------------------------

    def _jet_eval(self, w):
        co = self.jet
        acc = mpc(0)
        for k in range(len(co) - 1, 0, -1):
            acc = (acc + co[k]) * w
        return acc

    def _jet_invert(self, z, guess, max_steps=60):
        tol = mpf(10) ** (-(self.digits - 8))
        w = mpc(guess)
        for _ in range(max_steps):
            num = self._jet_eval(w) - z
            den = self._jet_eval_deriv(w)
            dw = num / den
            w = w - dw
            if abs(dw) < tol * max(abs(w), mpf(10) ** -20):
                return w
        raise NonConvergence("jet inversion did not converge")

    def _jet_eval_deriv(self, w):
        jd = self.jet_deriv
        acc = mpc(0)
        for k in range(len(jd) - 1, 1, -1):
            acc = (acc + jd[k]) * w
        return acc + jd[1]

    def chart(self, w):
        """Dynamical-plane image of a chart point."""
        with workdps(self.digits + 10):
            wm = mpc(w)
            if abs(wm) > self.chart_radius:
                raise ValueError(
                    f"|w| = {abs(wm)} beyond chart radius {self.chart_radius}"
                )
            if self.chart_mode == "jet":
                return self._jet_eval(wm)
            return self.base_lin.eval_mp(self.lam_q * wm)

    def chart_inv(self, z, guess):
        with workdps(self.digits + 10):
            if self.chart_mode == "jet":
                return self._jet_invert(mpc(z), mpc(guess))
            v = self.base_lin.invert_mp(mpc(z), self.lam_q * mpc(guess))
            return v / self.lam_q

    def limit_chart_np(self, w):
        """Unit-scale limit chart phi(r * w), valid on the whole unit disk."""
        r = self.base_lin.radius_estimate
        return self.base_lin.eval_np(np.asarray(w, dtype=complex) * r)

    # -- the conjugated map --------------------------------------------------

    def f(self, w):
        """One step of the conjugated perturbed map."""
        with workdps(self.digits + 10):
            wm = mpc(w)
            if abs(wm) > self.chart_radius:
                raise ValueError(
                    f"|w| = {abs(wm)} beyond chart radius {self.chart_radius}"
                )
            guess = self.lam_n_map * wm
            if self.chart_mode == "jet":
                z = self._jet_eval(wm)
                z1 = self.lam_n_map * z + z * z
                return self._jet_invert(z1, guess)
            z = self.base_lin.eval_mp(self.lam_q * wm)
            z1 = self.lam_n_map * z + z * z
            v = self.base_lin.invert_mp(z1, self.lam_q * guess)
            return v / self.lam_q

    def f_iter(self, w, k: int, omega_check: bool = False):
        """k-fold iterate; with omega_check, raise OrbitLeftOmega on exit."""
        with workdps(self.digits + 10):
            z = mpc(w)
            for i in range(k):
                z = self.f(z)
                if omega_check and not self.in_omega(z):
                    raise OrbitLeftOmega(i + 1)
            return z

    def in_omega(self, z, collar: float = 1e-6) -> bool:
        """Membership in the flow-invariant region {|z^q| < |z^q - eps|}.

        The boundary is eps-flat away from the cycle, so the first-order
        chart shifts orbits across it by ~|psi|-excesses of 1e-8; a small
        relative collar absorbs that while still catching real exits.
        """
        with workdps(self.digits + 10):
            u = mpc(z) ** self.q
            return abs(u) < abs(u - self.eps) * (1 + collar)

    def cycle_fix_residual(self):
        """max |f^q(z*) - z*| over the q-th roots of eps (chart quality)."""
        with workdps(self.digits + 10):
            root = abs(self.eps) ** (mpf(1) / self.q)
            worst = mpf(0)
            for j in range(self.q):
                ang = (2 * j + (0 if self.side > 0 else 1)) * mp.pi / self.q
                z = root * mp.e ** (1j * ang)
                worst = max(worst, abs(self.f_iter(z, self.q) - z))
            return float(worst)

    # -- vector field ---------------------------------------------------------

    def xi(self, z):
        with workdps(self.digits + 10):
            zm = mpc(z)
            return 2j * mp.pi * self.q * zm * (self.eps - zm**self.q)

    def xi_prime(self, z):
        with workdps(self.digits + 10):
            zm = mpc(z)
            return 2j * mp.pi * self.q * (self.eps - (self.q + 1) * zm**self.q)


@dataclass
class XnDomain:
    """The star-like domain X_n(rho) = {z : z^q/(z^q - eps) in D(0, s_n)}."""

    data: PerturbationData
    rho: float

    def __post_init__(self):
        if not (0 < self.rho < 1):
            raise ValueError("rho must be in (0,1)")
        with workdps(self.data.digits + 10):
            rq = mpf(self.rho) ** self.data.q
            self.s_n = float(rq / (rq + abs(self.data.eps)))

    def membership(self, z) -> bool:
        """Exact evaluation of the defining inequality at working precision."""
        d = self.data.digits
        for attempt in (d, 2 * d):
            with workdps(attempt + 10):
                u = mpc(z) ** self.data.q
                den = u - self.data.eps
                if abs(den) > mpf(10) ** (-attempt):
                    return abs(u / den) < self.s_n
        raise PrecisionError(f"z^q - eps vanishes beyond precision at z={z}")

    def membership_np(self, pts: np.ndarray) -> np.ndarray:
        """Vectorized binary64 verdicts (boundary pixels carry ~1e-3 noise
        where z^q cancels against eps; fine for area counting)."""
        z = np.asarray(pts, dtype=complex)
        u = z**self.data.q
        eps = complex(self.data.eps)
        den = u - eps
        den = np.where(np.abs(den) == 0, 1e-300, den)
        return np.abs(u / den) < self.s_n

    def verdicts(self, pts: np.ndarray) -> np.ndarray:
        from .measure import IN, OUT

        return np.where(self.membership_np(pts), IN, OUT).astype(np.uint8)


def tau_n(data: PerturbationData, r: float):
    """Half-plane threshold: (1/(2 pi q^2 |eps|)) log(1 + |eps|/r^q).

    Matches the signed closed form for eps > 0 and is the exact covering
    threshold for either sign; requires r^q > |eps|.
    """
    with workdps(data.digits + 10):
        rq = mpf(r) ** data.q
        ae = abs(data.eps)
        if rq <= ae:
            raise ValueError(f"r^q = {rq} must exceed |eps| = {ae}")
        return mp.log(1 + ae / rq) / (2 * mp.pi * data.q**2 * ae)


def xi_eval(data: PerturbationData, z):
    return data.xi(z)


def xi_flow_time1(data: PerturbationData, z, rk_tol: float = 1e-10):
    """Time-1 flow of the vector field by adaptive Cash-Karp steps."""
    if rk_tol <= 0:
        raise ValueError("rk_tol must be positive")
    # Cash-Karp embedded pair (orders 4/5)
    A = [
        [],
        [1 / 5],
        [3 / 40, 9 / 40],
        [3 / 10, -9 / 10, 6 / 5],
        [-11 / 54, 5 / 2, -70 / 27, 35 / 27],
        [1631 / 55296, 175 / 512, 575 / 13824, 44275 / 110592, 253 / 4096],
    ]
    B5 = [37 / 378, 0, 250 / 621, 125 / 594, 0, 512 / 1771]
    B4 = [2825 / 27648, 0, 18575 / 48384, 13525 / 55296, 277 / 14336, 1 / 4]
    q = data.q
    eps = complex(data.eps)
    two_pi_q = 2j * math.pi * q

    def field(w):
        return two_pi_q * w * (eps - w**q)

    t = 0.0
    h = 0.1
    w = complex(z)
    hmin = 1e-13
    while t < 1.0:
        h = min(h, 1.0 - t)
        ks = [field(w)]
        for i in range(1, 6):
            acc = 0j
            for j, a in enumerate(A[i]):
                acc += a * ks[j]
            ks.append(field(w + h * acc))
        w5 = w + h * sum(b * k for b, k in zip(B5, ks))
        w4 = w + h * sum(b * k for b, k in zip(B4, ks))
        err = abs(w5 - w4)
        scale = max(abs(w), 1e-3)
        if err <= rk_tol * scale or h <= hmin:
            if err > rk_tol * scale and h <= hmin:
                raise StepUnderflow(f"cannot reach rk_tol={rk_tol} near {w}")
            t += h
            w = w5
            if err > 0:
                h = min(0.9 * h * (rk_tol * scale / err) ** 0.2, 4 * h)
            else:
                h = 4 * h
        else:
            h = max(0.9 * h * (rk_tol * scale / err) ** 0.25, hmin)
    return w


@dataclass
class StraighteningChart:
    """The universal covering pi(Z) straightening xi to d/dZ.

    pi(Z) = phi_cov(e^(2 i pi q eps Z)) with phi_cov the q-th-root inverse of
    the degree-q covering z -> z^q/(z^q - eps); all logarithms stay on fixed
    half-planes, so the evaluation is single-valued and exactly periodic with
    period 1/(q eps).  The branch anchor is the fixed phase e^(side*i*pi/q)
    carried by phi_cov (sheet index 0).
    """

    data: PerturbationData

    def __post_init__(self):
        d = self.data.digits
        with workdps(d + 15):
            self.log_eps = mp.log(mpc(self.data.eps))  # +i pi for eps < 0
            self.anchor_phase = mp.e ** (self.data.side * 1j * mp.pi / self.data.q)
        self._tau_cache = {}

    # -- covering pieces -----------------------------------------------------

    def psi_n(self, z):
        """The unit-disk uniformizer: psi(z)^q = z^q/(z^q - eps)."""
        data = self.data
        with workdps(data.digits + 10):
            zm = mpc(z)
            w = zm**data.q - data.eps
            if data.side > 0:
                logw = mp.log(-w) + 1j * mp.pi  # w stays in Re < -eps/2
            else:
                logw = mp.log(w)  # w stays in Re > |eps|/2
            return zm * mp.e ** (-logw / data.q)

    def phi_n(self, t):
        """Inverse of psi_n on the unit disk, phi_n(0) = 0."""
        data = self.data
        with workdps(data.digits + 10):
            tm = mpc(t)
            u = tm**data.q
            val = (self.log_eps - mp.log(1 - u) + data.side * 1j * mp.pi) / data.q
            return tm * mp.e**val

    def pi_n(self, Z):
        data = self.data
        with workdps(data.digits + 10):
            t = mp.e ** (2j * mp.pi * data.q * data.eps * mpc(Z))
            return self.phi_n(t)

    def pi_n_prime(self, Z):
        """Derivative of the covering; equals xi(pi(Z)) identically."""
        return self.data.xi(self.pi_n(Z))

    def pi_n_inverse(self, z, guess, max_steps: int = 60):
        """Newton solve of pi(Z) = z from a guess within half a period."""
        data = self.data
        with workdps(data.digits + 10):
            Z = mpc(guess)
            tol = mpf(10) ** (-(data.digits - 8))
            zm = mpc(z)
            for _ in range(max_steps):
                val = self.pi_n(Z)
                dZ = (val - zm) / data.xi(val)
                Z = Z - dZ
                if abs(dZ) < tol * max(1, abs(Z)):
                    return Z
            raise NonConvergence("covering inversion did not converge")

    def tau(self, r: float):
        if r not in self._tau_cache:
            self._tau_cache[r] = tau_n(self.data, r)
        return self._tau_cache[r]

    def in_H(self, Z, r: float) -> bool:
        with workdps(self.data.digits + 10):
            return self.data.side * mp.im(mpc(Z)) > self.tau(r)

    def H_probe(self, r: float, x, height_factor: float = 1.2):
        """A point of H(r) at the given Re-coordinate and relative height."""
        with workdps(self.data.digits + 10):
            return mpc(x) + self.data.side * 1j * self.tau(r) * height_factor

    def probe_grid(self, r: float, count: int, height_factors=(1.1, 1.6, 2.4), min_radius_frac: float = 0.25):
        """Probes of H(r) whose projections stay in the lobe interiors.

        Near the pinches of the level curve (projections at the central-cycle
        scale) the first-order chart dominates the measurement, so probes
        with |pi(Z)| below ``min_radius_frac * r`` are skipped.
        """
        import numpy as np

        probes = []
        with workdps(self.data.digits + 10):
            n_x = max(8, 2 * count)
            for hf in height_factors:
                for xf in np.linspace(0.0, 1.0, n_x, endpoint=False):
                    Z = self.H_probe(r, abs(self.data.period) * mpf(float(xf)), hf)
                    if abs(self.pi_n(Z)) >= min_radius_frac * r:
                        probes.append(Z)
                    if len(probes) >= count:
                        return probes
        return probes

    # -- the commuting pair ----------------------------------------------------

    def lift_F(self, Z):
        """F(Z) with pi o F = f^q o pi; displacement ~ +1."""
        data = self.data
        with workdps(data.digits + 10):
            z = self.pi_n(Z)
            zq = data.f_iter(z, data.q, omega_check=True)
            return self.pi_n_inverse(zq, mpc(Z) + 1)

    def lift_G(self, Z):
        """G(Z) with pi o G = f^(q_prev) o pi; displacement ~ -(A + theta)."""
        data = self.data
        with workdps(data.digits + 10):
            z = self.pi_n(Z)
            zq = data.f_iter(z, data.q_prev, omega_check=True)
            return self.pi_n_inverse(zq, mpc(Z) - data.A_theta)


def residual_g(data: PerturbationData, z, fd_threshold: float = 1e-8):
    """g(z) = (f^q(z) - z)/xi(z); finite-difference limit near zeros of xi."""
    with workdps(data.digits + 10):
        zm = mpc(z)
        xi = data.xi(zm)
        disp = data.f_iter(zm, data.q) - zm
        if abs(xi) >= fd_threshold:
            return disp / xi
        # removable singularity: L'Hopital with a centered difference
        h = mpf(10) ** (-6) * max(1, abs(zm))
        dp = data.f_iter(zm + h, data.q) - (zm + h)
        dm = data.f_iter(zm - h, data.q) - (zm - h)
        return ((dp - dm) / (2 * h)) / data.xi_prime(zm)


def residual_h(data: PerturbationData, z, fd_threshold: float = 1e-8):
    """h(z) from kappa*f^(q_prev)(z) = z + xi(z) h(z).

    kappa cancels the rational rotation of the q_prev-th iterate at 0; for
    even n it is e^(2 i pi / q), mirrored for odd n.
    """
    with workdps(data.digits + 10):
        m = (data.q_prev * data.p) % data.q
        kappa = mp.e ** (-2j * mp.pi * m / data.q)
        zm = mpc(z)
        xi = data.xi(zm)
        disp = kappa * data.f_iter(zm, data.q_prev) - zm
        if abs(xi) >= fd_threshold:
            return disp / xi
        h = mpf(10) ** (-6) * max(1, abs(zm))
        dp = kappa * data.f_iter(zm + h, data.q_prev) - (zm + h)
        dm = kappa * data.f_iter(zm - h, data.q_prev) - (zm - h)
        return ((dp - dm) / (2 * h)) / data.xi_prime(zm)


def g_sup_bound(data: PerturbationData, r_n: float, n_samples: int = 64):
    """The maximum-modulus bound sup_{|z|=r_n} 2/|xi(z)|."""
    with workdps(data.digits + 10):
        worst = mpf(0)
        for k in range(n_samples):
            z = mpf(r_n) * mp.e ** (2j * mp.pi * k / n_samples)
            worst = max(worst, 2 / abs(data.xi(z)))
        return float(worst)


@dataclass
class OrbitScheduleResult:
    schedule: list
    stayed: bool
    first_exit: Optional[dict]
    max_F_displacement_error: float
    max_G_displacement_error: float
    shadow_in_xn: Optional[bool] = None

    def to_json(self):
        return {
            "schedule": self.schedule,
            "stayed": self.stayed,
            "first_exit": self.first_exit,
            "max_F_err": self.max_F_displacement_error,
            "max_G_err": self.max_G_displacement_error,
            "shadow_in_xn": self.shadow_in_xn,
        }


def composed_orbit_experiment(
    chart: StraighteningChart,
    Z0,
    r1: float,
    r2: float,
    budget: int,
    j_cap: Optional[int] = None,
    check_shadow: bool = True,
) -> OrbitScheduleResult:
    """Greedy return scheme: G, then F-steps until Re recovers, repeated.

    Records the F-block lengths (j_l) and verifies every visited point stays
    in H(r2); optionally projects the block endpoints down and checks
    membership in X_n(r2).
    """
    data = chart.data
    if not (0 < r1 < r2 < 1):
        raise ValueError("need 0 < r1 < r2 < 1")
    with workdps(data.digits + 10):
        Z = mpc(Z0)
        if not chart.in_H(Z, r1):
            raise ValueError("Z0 must lie in H(r1)")
        if j_cap is None:
            j_cap = int(10 * float(data.A_theta)) + 100
        schedule = []
        maxF = mpf(0)
        maxG = mpf(0)
        shadow_ok = True
        xr2 = XnDomain(data, r2)
        for _ in range(budget):
            Zpre = Z
            Z = chart.lift_G(Z)
            maxG = max(maxG, abs(Z - Zpre + data.A_theta))
            if not chart.in_H(Z, r2):
                return OrbitScheduleResult(
                    schedule, False,
                    {"stage": "G", "Z": str(Z)}, float(maxF), float(maxG),
                )
            j = 0
            while mp.re(Z) <= mp.re(Zpre):
                Zf = chart.lift_F(Z)
                maxF = max(maxF, abs(Zf - Z - 1))
                Z = Zf
                j += 1
                if not chart.in_H(Z, r2):
                    return OrbitScheduleResult(
                        schedule + [j], False,
                        {"stage": "F", "Z": str(Z)}, float(maxF), float(maxG),
                    )
                if j > j_cap:
                    raise NonConvergence("Re did not recover within the cap")
            schedule.append(j)
            if check_shadow:
                shadow_ok = shadow_ok and xr2.membership(chart.pi_n(Z))
        return OrbitScheduleResult(
            schedule, True, None, float(maxF), float(maxG),
            shadow_in_xn=shadow_ok if check_shadow else None,
        )
