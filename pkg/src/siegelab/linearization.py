"""Linearizing series, conformal radius estimators, Siegel disk models.

The linearizer phi solves phi(mu*w) = f(phi(w)) with phi(0)=0, phi'(0)=1.
The same coefficient recurrence serves three uses: the Siegel linearizer of
the quadratic family, the Koenigs chart at a repelling fixed point, and the
small-angle charts used by the perturbed Fatou coordinates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from mpmath import mp, mpc, mpf, workdps

from .cfrac import CFAngle
from .dynamics import QuadMap, explosion_derivative
from .errors import DivisorUnderflow, NonConvergence
from .measure import Polyline, rasterize_fill


def conjugacy_series(map_coeffs: Sequence, J: int, dps: int, min_divisor=None):
    """Coefficients b_1..b_J of phi with phi(c1*w) = f(phi(w)).

    ``map_coeffs`` are c_1..c_K of f(z) = c1 z + ... + cK z^K.  Returns
    (coeffs, divisor_logs): b as a list indexed 1..J (b[0] unused) and the
    log10-magnitudes of the divisors c1^j - c1 for diagnostics.
    Raises DivisorUnderflow when a divisor drops below ``min_divisor``.
    """
    if J < 2:
        raise ValueError("J must be >= 2")
    K = len(map_coeffs)
    with workdps(dps):
        c = [mpc(x) for x in map_coeffs]
        c1 = c[0]
        if min_divisor is None:
            min_divisor = mpf(10) ** (-(dps - 5))
        b = [mpc(0)] * (J + 1)
        b[1] = mpc(1)
        # pows[m] holds the series coefficients of phi^m (index = order)
        pows = [None, b] + [[mpc(0)] * (J + 1) for _ in range(K - 1)]
        for m in range(2, K + 1):
            if m <= J:
                pows[m][m] = mpc(1)
        c1j = c1
        divisor_logs = []
        for j in range(2, J + 1):
            c1j = c1j * c1
            for m in range(2, K + 1):
                s = mpc(0)
                prev = pows[m - 1]
                for i in range(m - 1, j):
                    if prev[i] != 0:
                        s += prev[i] * b[j - i]
                pows[m][j] = s
            rhs = mpc(0)
            for m in range(2, K + 1):
                if c[m - 1] != 0:
                    rhs += c[m - 1] * pows[m][j]
            div = c1j - c1
            adiv = abs(div)
            divisor_logs.append(float(mp.log10(adiv)) if adiv > 0 else float("-inf"))
            if adiv < min_divisor:
                raise DivisorUnderflow(f"|c1^{j} - c1| = {adiv} at order {j}")
            b[j] = rhs / div
        return b, divisor_logs


@dataclass
class Linearizer:
    """Truncated linearizing series with scaled evaluators.

    ``coeffs[j]`` is b_j (mpc), b_1 = 1.  ``scale`` is a magnitude guess of
    the convergence radius used to keep the binary64 evaluator in range.
    """

    lam: object
    coeffs: list
    J: int
    radius_estimate: float
    divisor_logs: list = field(repr=False, default_factory=list)
    alpha_cf: Optional[CFAngle] = None
    digits: int = 40
    scale: float = 1.0
    _np_coeffs: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def np_coeffs(self) -> np.ndarray:
        """Scaled coefficients b_j * scale^j, finite in binary64."""
        if self._np_coeffs is None:
            with workdps(self.digits + 10):
                s = mpf(self.scale)
                self._np_coeffs = np.array(
                    [complex(self.coeffs[j] * s**j) for j in range(self.J + 1)],
                    dtype=complex,
                )
        return self._np_coeffs

    def eval_np(self, w) -> np.ndarray:
        """phi(w) in binary64 via the scaled Horner form."""
        u = np.asarray(w, dtype=complex) / self.scale
        acc = np.zeros_like(u)
        for j in range(self.J, 0, -1):
            acc = (acc + self.np_coeffs[j]) * u
        return acc

    def eval_mp(self, w):
        """phi(w) at the ambient mpmath precision."""
        acc = mpc(0)
        wm = mpc(w)
        for j in range(self.J, 0, -1):
            acc = (acc + self.coeffs[j]) * wm
        return acc

    def deriv_mp(self, w):
        acc = mpc(0)
        wm = mpc(w)
        for j in range(self.J, 1, -1):
            acc = (acc + j * self.coeffs[j]) * wm
        return acc + 1

    def invert_mp(self, z, guess, tol=None, max_steps=60):
        """Solve phi(w) = z by Newton from ``guess``."""
        if tol is None:
            tol = mpf(10) ** (-(self.digits - 8))
        w = mpc(guess)
        for _ in range(max_steps):
            dw = (self.eval_mp(w) - z) / self.deriv_mp(w)
            w = w - dw
            if abs(dw) < tol * max(1, abs(w)):
                return w
        raise NonConvergence("series inversion did not converge")

    def conjugacy_residual(self, radius, n_samples=16):
        """max |phi(lam w) - P(phi(w))| on |w| = radius (quadratic family)."""
        with workdps(self.digits + 10):
            lam = mpc(self.lam)
            worst = mpf(0)
            for k in range(n_samples):
                w = mpf(radius) * mp.e ** (2j * mp.pi * k / n_samples)
                lhs = self.eval_mp(lam * w)
                ph = self.eval_mp(w)
                rhs = lam * ph + ph * ph
                worst = max(worst, abs(lhs - rhs))
            return float(worst)


def _lambda_of(alpha, digits):
    if isinstance(alpha, CFAngle):
        with workdps(digits + 10):
            return mp.e ** (2j * mp.pi * alpha.value(digits + 5))
    with workdps(digits + 10):
        return mp.e ** (2j * mp.pi * mpc(alpha))


def linearizer_coefficients(alpha, J: int, digits: int = 40) -> Linearizer:
    """Linearizer of z -> lam z + z^2 with lam = e^(2 i pi alpha)."""
    lam = _lambda_of(alpha, digits)
    dps = digits + 10
    min_div = mpf(10) ** (-digits)
    coeffs, dlogs = conjugacy_series([lam, 1], J, dps, min_divisor=min_div)
    lin = Linearizer(
        lam=lam,
        coeffs=coeffs,
        J=J,
        radius_estimate=0.0,
        divisor_logs=dlogs,
        alpha_cf=alpha if isinstance(alpha, CFAngle) else None,
        digits=digits,
    )
    r, _ = _fit_radius_from_coeffs(coeffs, J, digits)
    lin.radius_estimate = r
    lin.scale = r if r > 0 else 1.0
    return lin


def _fit_radius_from_coeffs(coeffs, J, digits):
    """Least-squares Hadamard fit of -log|b_j| against j over the last third."""
    with workdps(digits + 10):
        j0 = max(2, (2 * J) // 3)
        js, ys = [], []
        for j in range(j0, J + 1):
            a = abs(coeffs[j])
            if a > 0:
                js.append(j)
                ys.append(float(mp.log(a)))
    js = np.array(js, dtype=float)
    ys = np.array(ys, dtype=float)
    if len(js) < 4:
        raise ValueError("not enough coefficients for a radius fit")
    A = np.vstack([js, np.ones_like(js)]).T
    (slope, _), res, *_ = np.linalg.lstsq(A, ys, rcond=None)
    r = math.exp(-slope)
    # slope standard error -> relative radius error
    dof = max(1, len(js) - 2)
    sigma2 = float(res[0]) / dof if len(res) else 0.0
    var_slope = sigma2 / float(((js - js.mean()) ** 2).sum())
    err = r * math.sqrt(max(var_slope, 0.0))
    return r, err


def hadamard_radius(alpha, J: int = 2000, window_start: float = 2 / 3):
    """Conformal radius from a long scaled-float coefficient run.

    The recurrence is run on rescaled coefficients b_j * s^j to stay inside
    binary64 range; a short unscaled pass supplies the initial s.
    """
    if isinstance(alpha, CFAngle):
        a = float(alpha.value(30))
    else:
        a = complex(alpha)
        a = a.real if a.imag == 0 else a
    # pass 1: short unscaled run for the scale guess
    r_guess = _hadamard_pass(a, min(120, J), 1.0, window_start)[0]
    r, err = _hadamard_pass(a, J, r_guess, window_start)
    return r, err


def _hadamard_pass(alpha, J, scale, window_start):
    # rescaled coefficients b~_j = b_j * scale^j satisfy the original
    # convolution recurrence verbatim, only the seed changes to b~_1 = scale
    lam = np.exp(2j * np.pi * alpha)
    divisors = np.exp(2j * np.pi * ((np.arange(J + 1) * alpha) % 1.0)) - lam
    b = np.zeros(J + 1, dtype=complex)
    b[1] = scale
    for j in range(2, J + 1):
        conv = np.dot(b[1:j], b[j - 1:0:-1])
        b[j] = conv / divisors[j]
    j0 = max(2, int(J * window_start))
    js = np.arange(j0, J + 1, dtype=float)
    mags = np.abs(b[j0:])
    good = mags > 0
    ys = np.log(mags[good])
    js = js[good]
    A = np.vstack([js, np.ones_like(js)]).T
    (slope, _), res, *_ = np.linalg.lstsq(A, ys, rcond=None)
    r = scale * math.exp(-slope)
    dof = max(1, len(js) - 2)
    sigma2 = float(res[0]) / dof if len(res) else 0.0
    err = r * math.sqrt(sigma2 / float(((js - js.mean()) ** 2).sum()) if len(js) > 2 else 0.0)
    return r, err


def explosion_radius(alpha_cf: CFAngle, k_max: int = 8, digits: int = 60, q_cap: int = 80):
    """Conformal radius from the |chi_k'(0)| sequence, Aitken-accelerated.

    |lambda_k| converges geometrically from above, with one geometric mode
    per residue class of k modulo the period length of the expansion; each
    class is accelerated separately on its last three terms and the results
    averaged.  The reported error combines the class spread with the window
    sensitivity.  Denominators above ``q_cap`` are skipped (cycle location
    cost grows quickly with the period).
    """
    if k_max < 4:
        raise ValueError("k_max must be >= 4 for acceleration")
    from fractions import Fraction

    L = max(1, len(alpha_cf.period))
    mags = {}
    for k in range(2, k_max + 1):
        p, q = alpha_cf.convergent(k)
        if q > q_cap:
            continue
        lam, _ = explosion_derivative(Fraction(p, q), digits=digits)
        mags[k] = float(abs(lam))
    if len(mags) < 3:
        raise ValueError("not enough resolvable convergents for acceleration")

    def aitken(a, b, c):
        d2 = c - 2 * b + a
        if d2 == 0:
            return c
        return a - (b - a) ** 2 / d2

    accs = []
    errs = []
    ks = sorted(mags)
    for r in range(L):
        seq = [mags[k] for k in ks if k % L == r]
        if len(seq) >= 3:
            a_last = aitken(*seq[-3:])
            accs.append(a_last)
            if len(seq) >= 4:
                errs.append(abs(a_last - aitken(*seq[-4:-1])))
            else:
                errs.append(abs(a_last - seq[-1]) / 2)
    if not accs:
        # fall back to a plain window on the mixed sequence
        seq = [mags[k] for k in ks]
        accs = [aitken(*seq[-3:])]
        errs = [abs(accs[0] - seq[-1])]
    est = sum(accs) / len(accs)
    spread = max(abs(a - est) for a in accs)
    return float(est), float(spread + max(errs))


def conformal_radius(alpha, method: str, J: int = 2000, k_max: int = 8, digits: int = 60, q_cap: int = 80):
    """Conformal radius of the Siegel disk, by one of two estimators.

    method='series': Hadamard fit on a long coefficient run (J terms);
    method='explosion': accelerated |chi_k'(0)| along the convergents.
    Both return (radius, error_estimate).
    """
    if method == "series":
        return hadamard_radius(alpha, J)
    if method == "explosion":
        if not isinstance(alpha, CFAngle):
            raise TypeError("explosion estimator needs a CFAngle")
        return explosion_radius(alpha, k_max, digits, q_cap=q_cap)
    raise ValueError(f"unknown method {method!r}")


# -- Siegel disk model -----------------------------------------------------------


@dataclass
class SiegelDiskModel:
    """A Siegel disk: linearizer, conformal radius and boundary polyline.

    The boundary is sampled through the critical orbit ordered by the
    conjugated rotation angle: the k-th orbit point sits at boundary
    parameter frac(k*alpha) (anchored at the critical point), which gives a
    t-grid of boundary samples that equidistributes and passes through the
    critical point exactly.
    """

    alpha_cf: CFAngle
    map: QuadMap
    linearizer: Linearizer
    conformal_radius: float
    boundary: Polyline
    boundary_ts: np.ndarray
    radius_error: float = 0.0

    @classmethod
    def build(
        cls,
        alpha_cf: CFAngle,
        digits: int = 40,
        J: int = 300,
        boundary_samples: int = 8192,
        gap_target: Optional[float] = None,
        max_samples: int = 1 << 17,
    ):
        lin = linearizer_coefficients(alpha_cf, J, digits)
        r, err = hadamard_radius(alpha_cf, J=max(800, 2 * J))
        lin.scale = r
        lin.radius_estimate = r
        fmap = QuadMap(alpha_cf)
        alpha = float(alpha_cf.value(30))
        M = boundary_samples
        while True:
            pts = _critical_orbit(fmap, M)
            ts = (np.arange(M) * alpha) % 1.0
            order = np.argsort(ts)
            poly = Polyline(pts[order])
            if gap_target is None or poly.max_gap <= gap_target or M >= max_samples:
                break
            M *= 2
        return cls(alpha_cf, fmap, lin, r, poly, ts[order], radius_error=err)

    def phi(self, w):
        return self.linearizer.eval_np(w)


def _critical_orbit(fmap: QuadMap, M: int) -> np.ndarray:
    lam = complex(fmap.lam)
    pts = np.empty(M, dtype=complex)
    z = -lam / 2
    pts[0] = z
    for k in range(1, M):
        z = lam * z + z * z
        pts[k] = z
    return pts


def siegel_membership(model: SiegelDiskModel, z) -> str:
    """'inside' | 'outside' | 'boundary-band' against the boundary polyline."""
    z = complex(z)
    poly = model.boundary
    zq = np.array([z], dtype=complex)
    d = float(poly.distance(zq)[0])
    # local sample spacing at the nearest vertex
    _, idx = poly.tree.query([[z.real, z.imag]])
    i = int(idx[0])
    n = len(poly)
    local = max(poly.seg_len[i], poly.seg_len[(i - 1) % n])
    if d < local:
        return "boundary-band"
    return "inside" if bool(poly.contains(zq)[0]) else "outside"


def resolve_boundary_band(model: SiegelDiskModel, z, m_iter: int = 100000, escape_radius: float = 3.0) -> str:
    """Fallback for band points: orbit boundedness over a long budget."""
    lam = complex(model.map.lam)
    w = complex(z)
    R2 = escape_radius**2
    for _ in range(m_iter):
        w = lam * w + w * w
        if w.real * w.real + w.imag * w.imag > R2:
            return "outside"
    return "inside"


def invariant_subdisk_boundary(model: SiegelDiskModel, rho: float, samples: int = 4096):
    """Polyline phi(rho * e^(2 i pi t)) for 0 < rho <= conformal radius.

    Returns (polyline, forward_invariance_residual).  At rho equal to the
    estimated radius the orbit-sampled boundary is returned (the truncated
    series is a slowly converging partial sum exactly at its radius).
    """
    r = model.conformal_radius
    if not (0 < rho <= r * (1 + 1e-12)):
        raise ValueError(f"rho must be in (0, {r}]")
    if abs(rho - r) <= 1e-12 * r:
        poly = model.boundary
        return poly, 0.0
    t = np.arange(samples) / samples
    w = rho * np.exp(2j * np.pi * t)
    verts = model.linearizer.eval_np(w)
    poly = Polyline(verts)
    img = model.map.apply_np(verts[:: max(1, samples // 256)])
    residual = float(poly.distance(img).max())
    return poly, residual


class SubdiskGate:
    """Cell-classified membership test for the open region inside a polyline."""

    def __init__(self, poly: Polyline, grid: int = 512):
        self.poly = poly
        v = poly.vertices
        pad = 2 * poly.max_gap + 1e-9
        self.x0 = v.real.min() - pad
        self.y0 = v.imag.min() - pad
        self.dx = (v.real.max() + pad - self.x0) / grid
        self.dy = (v.imag.max() + pad - self.y0) / grid
        self.grid = grid
        curve, filled = rasterize_fill(poly, self.x0, self.y0, self.dx, self.dy, grid)
        self.cell_in = filled & ~curve
        self.cell_unsure = curve

    def contains(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_1d(np.asarray(pts, dtype=complex))
        ix = ((pts.real - self.x0) / self.dx).astype(int)
        iy = ((pts.imag - self.y0) / self.dy).astype(int)
        in_box = (ix >= 0) & (ix < self.grid) & (iy >= 0) & (iy < self.grid)
        ixc = np.clip(ix, 0, self.grid - 1)
        iyc = np.clip(iy, 0, self.grid - 1)
        res = np.zeros(pts.shape, dtype=bool)
        res[in_box & self.cell_in[iyc, ixc]] = True
        unsure = in_box & self.cell_unsure[iyc, ixc]
        if unsure.any():
            res[unsure] = self.poly.contains(pts[unsure])
        return res


def l_set_membership(
    model: SiegelDiskModel,
    rho: float,
    z,
    m_max: int = 10000,
    escape_radius: float = 3.0,
    gate: Optional[SubdiskGate] = None,
):
    """Avoidance-set verdict: ('in-L', None) | ('escaped', k) | ('entered-subdisk', k).

    Entry into the invariant sub-disk of conformal radius rho is detected by
    direct crossing into the sub-disk polyline.
    """
    if gate is None:
        poly, _ = invariant_subdisk_boundary(model, rho)
        gate = SubdiskGate(poly)
    lam = complex(model.map.lam)
    w = complex(z)
    R2 = escape_radius**2
    if gate.contains(np.array([w]))[0]:
        return ("entered-subdisk", 0)
    for k in range(1, m_max + 1):
        w = lam * w + w * w
        if w.real * w.real + w.imag * w.imag > R2:
            return ("escaped", k)
        if gate.contains(np.array([w]))[0]:
            return ("entered-subdisk", k)
    return ("in-L", None)


@dataclass
class LSetPredicate:
    """Grid predicate for the avoidance set (in-L -> in, otherwise out)."""

    model: SiegelDiskModel
    gate: SubdiskGate
    m_max: int = 2000
    escape_radius: float = 3.0
    name: str = "l-set"

    def __call__(self, pts):
        from .measure import IN, OUT

        z = np.array(pts, dtype=complex).ravel()
        lam = complex(self.model.map.lam)
        verdict = np.full(z.shape, IN, dtype=np.uint8)
        alive = ~self.gate.contains(z)
        verdict[~alive] = OUT  # started inside the sub-disk
        R2 = self.escape_radius**2
        for _ in range(self.m_max):
            if not alive.any():
                break
            za = z[alive]
            za = lam * za + za * za
            z[alive] = za
            dead = za.real**2 + za.imag**2 > R2
            still = ~dead
            entered = np.zeros_like(dead)
            if still.any():
                entered[still] = self.gate.contains(za[still])
            bad = dead | entered
            if bad.any():
                idx = np.flatnonzero(alive)[bad]
                verdict[idx] = OUT
                alive[idx] = False
        return verdict.reshape(np.shape(pts))
