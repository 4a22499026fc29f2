"""Exact continued-fraction arithmetic.

Angles are continued fractions ``[a0; a1, a2, ...]`` with a finite head and an
optional periodic tail, kept exactly: convergents are arbitrary-size integers
and the value of an eventually periodic expansion is a quadratic surd
``(P + sqrt(D)) / Q`` with integer ``P, D, Q``, so order comparisons against
rationals are decided without rounding.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from mpmath import mp, mpf, workdps

from .errors import PrecisionError

_FORMAT = re.compile(r"^(-?\d+);\[([\d,]*)\]\|\(([\d,]*)\)$")


def _fold_mobius(entries):
    """Product of the matrices [[a,1],[1,0]] over ``entries``.

    Returns (p, p2, q, q2) so that folding a continuation value ``x`` yields
    (p*x + p2) / (q*x + q2); with no continuation the value is p/q.
    """
    p, p2 = 1, 0
    q, q2 = 0, 1
    for a in entries:
        p, p2 = a * p + p2, p
        q, q2 = a * q + q2, q
    return p, p2, q, q2


class CFAngle:
    """An angle given by its continued-fraction expansion.

    ``head`` holds the entries a_1..a_m after the integer part ``a0``;
    ``period`` is the repeating block (empty means the expansion is finite,
    i.e. the angle is rational).  Canonicalization folds a trailing finite 1
    into its predecessor, reduces the period to its primitive block and
    absorbs head entries that merely pre-rotate the period, so structural
    equality decides equality of values.
    """

    __slots__ = ("a0", "head", "period", "_conv")

    def __init__(self, a0=0, head=(), period=(), canonical=True):
        head = tuple(int(a) for a in head)
        period = tuple(int(b) for b in period)
        if any(a < 1 for a in head) or any(b < 1 for b in period):
            raise ValueError("entries a_k (k >= 1) must be >= 1")
        if canonical:
            a0, head, period = _canonicalize(int(a0), head, period)
        self.a0 = int(a0)
        self.head = head
        self.period = period
        self._conv = [(1, 0), (self.a0, 1)]  # (p_{-1}, q_{-1}), (p_0, q_0)

    # -- basic structure ---------------------------------------------------

    @property
    def is_rational(self):
        return not self.period

    def entry(self, k):
        """Entry a_k for k >= 1 (a_0 is the integer part)."""
        if k < 1:
            raise IndexError("entry index must be >= 1")
        if k <= len(self.head):
            return self.head[k - 1]
        if not self.period:
            raise IndexError("finite expansion has no entry a_%d" % k)
        return self.period[(k - len(self.head) - 1) % len(self.period)]

    def entries(self, k_max):
        return [self.entry(k) for k in range(1, k_max + 1)]

    def __eq__(self, other):
        if not isinstance(other, CFAngle):
            return NotImplemented
        return (self.a0, self.head, self.period) == (other.a0, other.head, other.period)

    def __hash__(self):
        return hash((self.a0, self.head, self.period))

    def __repr__(self):
        return f"CFAngle({self.serialize()!r})"

    # -- serialization -----------------------------------------------------

    def serialize(self):
        """Text form ``a0;[a1,...,an]|(b1,...,bm)``, emitted canonically."""
        h = ",".join(str(a) for a in self.head)
        p = ",".join(str(b) for b in self.period)
        return f"{self.a0};[{h}]|({p})"

    @classmethod
    def parse(cls, text, canonical=True):
        m = _FORMAT.match(text.strip())
        if not m:
            raise ValueError(f"not a continued-fraction literal: {text!r}")
        a0 = int(m.group(1))
        head = tuple(int(x) for x in m.group(2).split(",") if x)
        period = tuple(int(x) for x in m.group(3).split(",") if x)
        return cls(a0, head, period, canonical=canonical)

    # -- convergents ---------------------------------------------------------

    def convergent(self, k):
        """Exact pair (p_k, q_k); k >= 0."""
        if k < 0:
            raise IndexError("k must be >= 0")
        while len(self._conv) < k + 2:
            j = len(self._conv) - 1  # next index to fill
            a = self.entry(j)
            p1, q1 = self._conv[-1]
            p0, q0 = self._conv[-2]
            self._conv.append((a * p1 + p0, a * q1 + q0))
        return self._conv[k + 1]

    # -- values --------------------------------------------------------------

    def as_fraction(self):
        if not self.is_rational:
            raise ValueError("angle is irrational")
        p, _, q, _ = _fold_mobius((self.a0,) + self.head)
        return Fraction(p, q)

    def as_surd(self):
        """Exact value ``(P + sqrt(D)) / Q`` of an eventually periodic angle.

        D is a positive non-square integer; Q may be negative.
        """
        if self.is_rational:
            raise ValueError("rational angle has no surd form")
        # periodic tail x = [b1; b2, ..., bt, b1, ...] solves q x^2 + (q2-p) x - p2 = 0
        p, p2, q, q2 = _fold_mobius(self.period)
        u = p - q2
        disc = u * u + 4 * q * p2
        # x = (u + sqrt(disc)) / (2q), the positive root
        # full value = (A x + B)/(C x + Dm) folded over [a0; head]
        A, B, C, Dm = _fold_mobius((self.a0,) + self.head)
        # substitute x = (u + s)/(2q), s = sqrt(disc):
        # value = (A(u+s) + 2qB) / (C(u+s) + 2qDm) = (e + A s)/(g + C s)
        e = A * u + 2 * q * B
        g = C * u + 2 * q * Dm
        # rationalize by (g - C s): D_t = disc
        num_const = e * g - A * C * disc
        num_s = A * g - e * C
        den = g * g - C * C * disc
        # value = (num_const + num_s * s) / den
        if num_s == 0:
            raise ArithmeticError("periodic expansion folded to a rational")
        Dt = num_s * num_s * disc
        if num_s > 0:
            P, Q = num_const, den
        else:
            P, Q = -num_const, -den
        gc = math.gcd(abs(P), abs(Q))
        if gc > 1 and Dt % (gc * gc) == 0:
            P //= gc
            Q //= gc
            Dt //= gc * gc
        return P, Dt, Q

    def compare_to_rational(self, num, den):
        """Exact sign of (value - num/den) using integer arithmetic only."""
        if den == 0:
            raise ZeroDivisionError
        if den < 0:
            num, den = -num, -den
        if self.is_rational:
            f = self.as_fraction()
            d = f.numerator * den - num * f.denominator
            return (d > 0) - (d < 0)
        P, D, Q = self.as_surd()
        # sign of ((P + sqrt(D))/Q - num/den) = sign(den*P - num*Q + den*sqrt(D)) * sign(Q)
        s = den * P - num * Q
        # t = den*sqrt(D) > 0
        if s >= 0:
            nsign = 1
        else:
            nsign = 1 if den * den * D > s * s else -1
        return nsign * ((Q > 0) - (Q < 0))

    def value(self, digits=60):
        """Value as an mpmath float, correct to ``digits`` significant digits."""
        if digits < 15:
            raise ValueError("digits must be >= 15")
        with workdps(digits + 10):
            if self.is_rational:
                f = self.as_fraction()
                v = mpf(f.numerator) / f.denominator
            else:
                P, D, Q = self.as_surd()
                v = (mpf(P) + mp.sqrt(mpf(D))) / Q
            return +v


def _canonicalize(a0, head, period):
    if period:
        # primitive period block
        t = len(period)
        for d in range(1, t):
            if t % d == 0 and period == period[: d] * (t // d):
                period = period[:d]
                break
        # absorb head entries that pre-rotate the period
        while head and head[-1] == period[-1]:
            head = head[:-1]
            period = (period[-1],) + period[:-1]
    else:
        # finite: never end with the entry 1 (fold into predecessor)
        if head and head[-1] == 1:
            if len(head) == 1:
                a0, head = a0 + 1, ()
            else:
                head = head[:-2] + (head[-2] + 1,)
    return a0, head, period


# -- module-level operations --------------------------------------------------


def convergents(cf: CFAngle, k_max: int):
    """Exact convergent pairs (p_k, q_k) for k = 0..k_max."""
    if k_max < 0:
        raise ValueError("k_max must be >= 0")
    return [cf.convergent(k) for k in range(k_max + 1)]


def cf_value(cf: CFAngle, digits=60):
    return cf.value(digits)


def check_class_SN(cf: CFAngle, N: int):
    """Whether all entries a_k (k>=1) are >= N with a bounded expansion.

    Returns ``(ok, witness)`` where ``witness`` is the first violating index,
    or None.  Rational angles fail (no infinite expansion to bound).
    """
    if cf.is_rational:
        return False, None
    for k in range(1, len(cf.head) + len(cf.period) + 1):
        if cf.entry(k) < N:
            return False, k
    return True, None


GOLDEN = CFAngle(0, (), (1,))
SILVER = CFAngle(0, (), (2,))


def theta_value(N: int, digits=60):
    """Value of [0; N, N, N, ...] = (sqrt(N^2+4) - N)/2."""
    with workdps(digits + 10):
        return +((mp.sqrt(mpf(N) ** 2 + 4) - N) / 2)


@dataclass
class PerturbationSpec:
    """A truncate-and-append perturbation of a base angle.

    The perturbed angle keeps the base entries through index ``n``, inserts a
    (typically huge) entry ``A_n`` and continues with the constant tail
    ``N, N, N, ...``.  Its offset from the n-th convergent has the closed form

        eps_n = (-1)^n / (q_n^2 (A_n + theta) + q_n q_{n-1})

    with theta the value of [0; N, N, ...].
    """

    base: CFAngle
    n: int
    A_n: int
    N: int = 1
    digits: int = 60
    _alpha_n: Optional[CFAngle] = field(default=None, repr=False)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.A_n < 1 or self.N < 1:
            raise ValueError("A_n and N must be >= 1")
        if self.base.is_rational:
            raise ValueError("base angle must be irrational")
        ok, witness = check_class_SN(self.base, self.N)
        if not ok:
            raise ValueError(f"base entry a_{witness} < N = {self.N}")

    @property
    def alpha_n(self) -> CFAngle:
        if self._alpha_n is None:
            head = tuple(self.base.entries(self.n)) + (self.A_n,)
            self._alpha_n = CFAngle(self.base.a0, head, (self.N,))
        return self._alpha_n

    @property
    def q_n(self):
        return self.base.convergent(self.n)[1]

    @property
    def q_nm1(self):
        return self.base.convergent(self.n - 1)[1]

    @property
    def p_n(self):
        return self.base.convergent(self.n)[0]

    def theta(self, digits=None):
        return theta_value(self.N, digits or self.digits)

    def epsilon_closed_form(self, digits=None):
        digits = digits or self.digits
        p_n, q_n = self.base.convergent(self.n)
        _, q_nm1 = self.base.convergent(self.n - 1)
        with workdps(digits + 10):
            th = theta_value(self.N, digits)
            return +(mpf(-1 if self.n % 2 else 1) / (q_n**2 * (self.A_n + th) + q_n * q_nm1))

    def epsilon_direct(self, digits=None):
        """alpha_n - p_n/q_n by high-precision subtraction (escalated dps)."""
        digits = digits or self.digits
        p_n, q_n = self.base.convergent(self.n)
        # the difference is ~ 1/(q_n^2 A_n); pad the working precision so the
        # subtraction retains `digits` significant digits
        scale = 2 * len(str(q_n)) + len(str(self.A_n)) + 2
        with workdps(digits + scale + 10):
            v = self.alpha_n.value(digits + scale + 5)
            return +(v - mpf(p_n) / q_n)


def make_perturbed_angle(spec: PerturbationSpec) -> CFAngle:
    """The perturbed angle; its convergents through index n match the base."""
    return spec.alpha_n


def epsilon_n(spec: PerturbationSpec, digits=None):
    """Closed-form offset, certified against direct subtraction.

    Raises :class:`PrecisionError` when the two evaluations do not agree to
    the documented relative tolerance 10^-(digits-10).
    """
    digits = digits or spec.digits
    closed = spec.epsilon_closed_form(digits)
    direct = spec.epsilon_direct(digits)
    with workdps(digits + 10):
        rel = abs(closed - direct) / abs(closed)
        if rel > mpf(10) ** (-(digits - 10)):
            raise PrecisionError(
                f"closed form and direct difference disagree: rel err {rel}"
            )
    return closed


def default_A(base: CFAngle, n: int):
    """The standard growth choice A_n = q_n^{q_n}."""
    q_n = base.convergent(n)[1]
    return q_n**q_n
