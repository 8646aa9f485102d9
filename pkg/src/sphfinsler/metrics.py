"""Spherically symmetric metrics and sprays F = u * phi(r, s).

Every closed form here is written once and evaluated either on plain
numpy arrays or on :class:`~sphfinsler.jet.Jet` objects; derivatives are
always obtained by evaluating on jets.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import jet as J
from .errors import IntegrandSingularOnPath, OrderOutOfRange, SingularFrame, ValidationError
from .jet import DEFAULT_CAPS, Jet, JetCaps, seed_point
from .quadrature import QuadSpec, fixed_gauss_legendre, quad

SMALL_S = 1e-3
_REEXPAND_EXTRA = 4
PATH_MARGIN = 0.05


@dataclass(frozen=True)
class Poly:
    """Polynomial in r, lowest degree first."""

    coeffs: tuple[float, ...] = ()

    def __post_init__(self):
        coeffs = tuple(float(c) for c in self.coeffs)
        if not all(math.isfinite(c) for c in coeffs):
            raise ValidationError(f"non-finite polynomial coefficient in {coeffs}")
        object.__setattr__(self, "coeffs", coeffs)

    def __call__(self, r):
        if not self.coeffs:
            return r * 0.0
        out = r * 0.0 + self.coeffs[-1]
        for c in reversed(self.coeffs[:-1]):
            out = out * r + c
        return out

    def deriv(self) -> Poly:
        return Poly(tuple(k * c for k, c in enumerate(self.coeffs) if k > 0))

    @property
    def is_zero(self) -> bool:
        return not any(self.coeffs)

    @classmethod
    def of(cls, value) -> Poly:
        if isinstance(value, Poly):
            return value
        if np.ndim(value) == 0:
            return cls((float(value),))
        return cls(tuple(value))

    def __str__(self):
        return ",".join(repr(c) for c in self.coeffs) or "0"


ZERO = Poly()


@dataclass(frozen=True)
class FamilyParams:
    f1: Poly = ZERO
    f2: Poly = ZERO
    c0: Poly = ZERO
    c1: Poly = ZERO
    c2: Poly = ZERO
    g_offset: Poly = ZERO

    def __post_init__(self):
        for name in ("f1", "f2", "c0", "c1", "c2", "g_offset"):
            object.__setattr__(self, name, Poly.of(getattr(self, name)))


@dataclass(frozen=True)
class BryantParams:
    c: float = 2.0
    c0: Poly = ZERO
    domain: tuple[float, float] = (0.5, 2.0)

    def __post_init__(self):
        object.__setattr__(self, "c0", Poly.of(self.c0))
        object.__setattr__(self, "c", float(self.c))
        lo, hi = (float(v) for v in self.domain)
        object.__setattr__(self, "domain", (lo, hi))
        if not (0 < lo < hi):
            raise ValidationError(f"Bryant domain must satisfy 0 < r_lo < r_hi, got {self.domain}")
        r = np.linspace(lo, hi, 401)
        m = 2 * r**2 * self.c0(r) - 1
        if np.any(np.abs(m) < 1e-6) or np.any(np.sign(m) != np.sign(m[0])):
            raise ValidationError("2 r^2 c0(r) - 1 vanishes on the Bryant domain")

    @property
    def r_ref(self) -> float:
        return 0.5 * (self.domain[0] + self.domain[1])


def _w(r, s):
    return J.sqrt(r * r - s * s)


class MetricSpec:
    """Common surface of every metric or spray description.

    ``spray_mode`` specs carry closed-form P, Q (authoritative); the others
    carry phi and leave P, Q to the curvature engine.
    """

    name = "metric"
    spray_mode = False
    has_phi = True
    phi_r_known = True

    def phi(self, r, s):
        raise NotImplementedError

    def spray(self, r, s):
        raise NotImplementedError(f"{self.name} carries no closed-form spray")

    def log_phi_jet(self, r0: float, s0: float, caps: JetCaps, normalized: bool = False) -> Jet:
        rj, sj = seed_point(r0, s0, caps)
        ln = J.log(self.phi(rj, sj))
        if normalized:
            ln.coeff[0, 0] = 0.0
        return ln

    def log_phi_s(self, r, s):
        return None

    def log_phi_r(self, r, s):
        return None

    def denominators(self, r: float, s: float) -> list[tuple[str, float, float]]:
        """(label, value, magnitude scale) for every denominator of the closed forms."""
        return []

    def coefficient_functions(self) -> dict[str, Callable] | None:
        return None

    def describe(self) -> dict:
        return {"name": self.name}


class PhiForm(MetricSpec):
    """Metric given directly by a phi evaluator that accepts arrays and jets."""

    def __init__(self, phi: Callable, name: str = "phi"):
        self._phi = phi
        self.name = name

    def phi(self, r, s):
        return self._phi(r, s)


class SprayForm(MetricSpec):
    """Spray given directly by P and Q evaluators (no metric attached)."""

    spray_mode = True
    has_phi = False
    phi_r_known = False

    def __init__(self, P: Callable, Q: Callable, name: str = "spray"):
        self._P, self._Q = P, Q
        self.name = name

    def spray(self, r, s):
        return self._P(r, s), self._Q(r, s)


def euclidean() -> PhiForm:
    return PhiForm(lambda r, s: s * 0.0 + 1.0, name="euclidean")


def riemann_quadratic() -> PhiForm:
    """phi = sqrt(1 + s^2), i.e. F^2 = |y|^2 + <x, y>^2."""
    return PhiForm(lambda r, s: J.sqrt(1.0 + s * s), name="riemann_quadratic")


# -- the Landsberg family -------------------------------------------------

class Family(MetricSpec):
    """P = f1 s + f2 w + g,  Q = c0 + c2 s^2 + c1 s w + g,  w = sqrt(r^2 - s^2).

    phi is recovered from the closed-form phi_s/phi up to the normalization
    phi(r, 0) = 1, so only its s-derivatives are available.
    """

    spray_mode = True
    phi_r_known = False
    name = "family"

    def __init__(self, params: FamilyParams):
        self.params = params

    def coefficient_functions(self):
        p = self.params
        return {"f1": p.f1, "f2": p.f2, "c0": p.c0, "c1": p.c1, "c2": p.c2}

    def spray(self, r, s):
        p = self.params
        w = _w(r, s)
        g = p.g_offset(r)
        P = p.f1(r) * s + p.f2(r) * w + g
        Q = p.c0(r) + p.c2(r) * s * s + p.c1(r) * s * w + g
        return P, Q

    def _denominator(self, r, s):
        p = self.params
        w = _w(r, s)
        f1, f2, c0, c1 = p.f1(r), p.f2(r), p.c0(r), p.c1(r)
        terms = (w * (f1 * s * s - 2 * c0 * (r * r - s * s) + 1), c1 * r * r * s ** 3,
                 f2 * (r * r - s * s) * s, -c1 * r ** 4 * s)
        return terms

    def denominator(self, r, s):
        return sum(self._denominator(r, s))

    def log_phi_s(self, r, s):
        """The recovered phi_s / phi."""
        p = self.params
        w = _w(r, s)
        f1, f2, c0, c1 = p.f1(r), p.f2(r), p.c0(r), p.c1(r)
        num = s * w * (2 * c0 + f1) + 2 * f2 * r * r + (c1 * r * r - f2) * s * s
        return num / self.denominator(r, s)

    def U(self, r, s):
        p = self.params
        w = _w(r, s)
        f1, f2 = p.f1(r), p.f2(r)
        num = s * w * (r * r * f1 + 1) + 2 * r * r * f2 * (r * r - s * s)
        return num / self.denominator(r, s)

    def denominators(self, r, s):
        terms = [float(t) for t in self._denominator(r, s)]
        return [("phi_s/phi", sum(terms), sum(abs(t) for t in terms) or 1.0)]

    def predicted_weak_berwald(self, r, s, n: int = 2):
        """(n+1)/3 * (c1 r^2 + 3 f2) r^2 / w; the g_offset term is not covered."""
        p = self.params
        return (n + 1) / 3.0 * (p.c1(r) * r * r + 3 * p.f2(r)) * r * r / _w(r, s)

    def check_path(self, r: float, s: float):
        t = np.linspace(0.0, s, 65)
        terms = self._denominator(r, t)
        d = sum(terms)
        scale = sum(np.abs(x) for x in terms) + 1e-300
        if np.any(np.sign(d) != np.sign(d[0])) or np.min(np.abs(d) / scale) < 1e-8:
            raise IntegrandSingularOnPath(f"phi_s/phi denominator vanishes on [0, {s}] at r={r}")

    def log_phi_jet(self, r0, s0, caps, normalized=False):
        if caps.r_max > 0:
            raise OrderOutOfRange("family phi carries no r-derivatives (phi(r, 0) = 1 normalization)")
        rj, sj = seed_point(r0, s0, JetCaps(0, max(caps.s_max - 1, 0)))
        k = self.log_phi_s(rj, sj)
        coeff = np.zeros(caps.shape)
        for j in range(1, caps.s_max + 1):
            coeff[0, j] = k.coeff[0, j - 1] / j
        if not normalized:
            self.check_path(r0, s0)
            coeff[0, 0] = quad(lambda t: self.log_phi_s(r0, t), 0.0, s0)
        return Jet(coeff, rj.base, caps)

    def phi(self, r, s):
        r, s = float(r), float(s)
        self.check_path(r, s)
        return math.exp(quad(lambda t: self.log_phi_s(r, t), 0.0, s))

    def describe(self):
        p = self.params
        return {"name": self.name, **{k: str(getattr(p, k)) for k in
                                      ("f1", "f2", "c0", "c1", "c2", "g_offset")}}


def family(params: FamilyParams) -> Family:
    return Family(params)


# -- the flat Landsberg surface ------------------------------------------------

class Bryant(MetricSpec):
    """The K = 0 Landsberg surface: spray in closed form plus the integrated phi.

    ln phi(r, s) = ln a(r) + int_0^s h(r, t) dt with h the closed-form
    (ln phi)_s, and (ln a)'(r) = lim_{s->0} (ln phi)_r where
    (ln phi)_r = (W - r (U - s) / (r^2 - s^2)) / s and W = 2 r (P + U Q).
    """

    spray_mode = True
    name = "bryant"

    def __init__(self, params: BryantParams):
        self.params = params
        self._c0p = params.c0.deriv()

    # coefficient functions of the family form
    def f1(self, r):
        return -1.0 / (r * r)

    def f2(self, r):
        return self.params.c / (r * r)

    def c1(self, r):
        return -1.0 / (r * r * r * r)

    def c2(self, r):
        c = self.params.c
        c0 = self.params.c0(r)
        r2 = r * r
        return -(4 * r2 * r2 * c0 * c0 + 2 * r2 * r * self._c0p(r) + c * c) / (2 * r2 * r2 * (2 * r2 * c0 - 1))

    def coefficient_functions(self):
        return {"f1": self.f1, "f2": self.f2, "c0": self.params.c0, "c1": self.c1, "c2": self.c2}

    def spray(self, r, s):
        w = _w(r, s)
        P = self.f1(r) * s + self.f2(r) * w
        Q = self.params.c0(r) + self.c2(r) * s * s + self.c1(r) * s * w
        return P, Q

    def predicted_weak_berwald(self, r, s, n: int = 2):
        return (n + 1) / 3.0 * (3 * self.params.c - 1) / _w(r, s)

    def _m(self, r):
        return 2 * r * r * self.params.c0(r) - 1

    def U(self, r, s):
        c = self.params.c
        return 2 * c * r * r / ((c + 1) * s - _w(r, s) * self._m(r))

    def log_phi_s(self, r, s):
        c = self.params.c
        w = _w(r, s)
        m = self._m(r)
        num = (c + 1) * s * s - m * s * w - 2 * r * r * c
        den = (c + 1) * s ** 3 - (c + 1) * r * r * s + m * (r * r - s * s) * w
        return num / den

    def _log_phi_r_numerator(self, r, s):
        P, Q = self.spray(r, s)
        U = self.U(r, s)
        W = 2 * r * (P + U * Q)
        return W - r * (U - s) / (r * r - s * s)

    def log_phi_r(self, r, s):
        """(ln phi)_r away from s = 0 (plain division by s)."""
        return self._log_phi_r_numerator(r, s) / s

    def log_phi_r_jet(self, r0: float, s0: float, caps: JetCaps) -> Jet:
        """Jet of (ln phi)_r; near s = 0 the numerator is expanded about s = 0 and shifted."""
        if abs(s0) >= SMALL_S * r0:
            rj, sj = seed_point(r0, s0, caps)
            return self._log_phi_r_numerator(rj, sj) / sj
        wide = JetCaps(caps.r_max, caps.s_max + 1 + _REEXPAND_EXTRA)
        rj, _ = seed_point(r0, 0.0, wide)
        sj = Jet.constant(0.0, rj.base, wide)
        sj.coeff[0, 1] = 1.0
        N = self._log_phi_r_numerator(rj, sj)
        shifted = Jet(N.coeff[:, 1:], rj.base, JetCaps(caps.r_max, caps.s_max + _REEXPAND_EXTRA))
        base = seed_point(r0, s0, JetCaps(0, 0))[0].base
        return J.reexpand_s(shifted, s0, base, caps)

    def log_a_prime(self, r, method: str = "jet"):
        """(ln a)'(r): the s -> 0 limit of (ln phi)_r."""
        r = np.asarray(r, dtype=float)
        if method == "jet":
            caps = JetCaps(0, 1)
            rj, sj = seed_point(r, np.zeros_like(r), caps)
            N = self._log_phi_r_numerator(rj, sj)
            out = N.coeff[0, 1]
            return float(out) if out.ndim == 0 else out
        if method == "extrapolate":
            s1, s2 = 1e-4 * r, 1e-5 * r
            v1, v2 = self.log_phi_r(r, s1), self.log_phi_r(r, s2)
            out = (s1 * v2 - s2 * v1) / (s1 - s2)
            return float(out) if np.ndim(out) == 0 else out
        raise ValueError(f"unknown limit method {method!r}")

    @functools.lru_cache(maxsize=4096)
    def log_a(self, r: float) -> float:
        r_ref = self.params.r_ref
        return quad(self.log_a_prime, r_ref, float(r))

    def a(self, r: float) -> float:
        return math.exp(self.log_a(float(r)))

    def singular_s(self, r: float) -> float | None:
        """Interior zero of the (ln phi)_s and U denominators at radius r, if any."""
        k = self.params.c + 1
        m = float(self._m(r))
        if k == 0 or m == 0:
            return None
        return math.copysign(r * abs(m) / math.hypot(k, m), m * k)

    def check_path(self, r: float, s: float):
        star = self.singular_s(r)
        if star is not None and s * star > 0 and abs(s) >= (1 - PATH_MARGIN) * abs(star):
            raise IntegrandSingularOnPath(
                f"the phi integral from 0 to s={s} crosses the singular point s*={star:.6g} (r={r})")

    def log_phi_value(self, r: float, s: float, spec: QuadSpec = QuadSpec()) -> float:
        r, s = float(r), float(s)
        self.check_path(r, s)
        return self.log_a(r) + quad(lambda t: self.log_phi_s(r, t), 0.0, s, spec)

    def phi(self, r, s):
        if isinstance(r, Jet) or isinstance(s, Jet):
            raise TypeError("use phi_jet for jet evaluation of the Bryant phi")
        if np.ndim(r) or np.ndim(s):
            return np.vectorize(lambda a, b: math.exp(self.log_phi_value(a, b)))(r, s)
        return math.exp(self.log_phi_value(r, s))

    def log_phi_jet(self, r0, s0, caps, normalized=False):
        hcaps = JetCaps(caps.r_max, max(caps.s_max - 1, 0))
        rj, sj = seed_point(r0, s0, hcaps)
        h = self.log_phi_s(rj, sj)
        coeff = np.zeros(caps.shape)
        for j in range(1, caps.s_max + 1):
            coeff[:, j] = h.coeff[:, j - 1] / j
        if caps.r_max > 0:
            V = self.log_phi_r_jet(r0, s0, JetCaps(caps.r_max - 1, 0))
            for i in range(1, caps.r_max + 1):
                coeff[i, 0] = V.coeff[i - 1, 0] / i
        if not normalized:
            coeff[0, 0] = self.log_phi_value(r0, s0)
        return Jet(coeff, rj.base, caps)

    def denominators(self, r, s):
        c = self.params.c
        w = math.sqrt(max(r * r - s * s, 0.0))
        m = float(self._m(r))
        return [("2r^2c0-1", m, 1.0 + 2 * r * r * abs(float(self.params.c0(r)))),
                ("U", (c + 1) * s - w * m, abs((c + 1) * s) + abs(w * m))]

    def describe(self):
        p = self.params
        return {"name": self.name, "c": p.c, "c0": str(p.c0), "domain": list(p.domain)}


def bryant(params: BryantParams) -> Bryant:
    return Bryant(params)


# -- module-level operations ---------------------------------------------------

def phi_jet(spec: MetricSpec, r: float, s: float, caps: JetCaps = DEFAULT_CAPS,
            normalized: bool = False) -> Jet:
    """Jet of phi at (r, s).

    With ``normalized=True`` the value of ln phi at the base point is set to
    zero (phi = 1 there); every derivative of ln phi is unchanged.  This skips
    the quadratures when only scale-free combinations are needed.
    """
    if not spec.has_phi:
        raise SingularFrame(f"{spec.name} carries no metric function")
    return J.exp(spec.log_phi_jet(r, s, caps, normalized=normalized))


def a_of_r(params: BryantParams | Bryant, r: float) -> float:
    spec = params if isinstance(params, Bryant) else Bryant(params)
    return spec.a(r)


def local_log_phi(spec: MetricSpec, r0: float, s0: float, order: int = 12):
    """Return ln phi(r, s) - ln phi(r0, s0) as a smooth vectorized function near (r0, s0).

    Integrates (ln phi)_r along s = s0 and then (ln phi)_s at fixed r with a
    fixed Gauss-Legendre rule, so the result depends smoothly on (r, s).  Specs
    with phi in closed form are simply evaluated.
    """
    if spec.has_phi and not spec.spray_mode:
        base = float(np.log(spec.phi(np.float64(r0), np.float64(s0))))
        return lambda r, s: np.log(spec.phi(np.asarray(r), np.asarray(s))) - base
    nodes, weights = fixed_gauss_legendre(order)

    def leg(f, fixed, a, b, along_r):
        mid = 0.5 * (a + b)[..., None]
        half = 0.5 * (b - a)[..., None]
        t = mid + half * nodes
        vals = f(t, fixed[..., None]) if along_r else f(fixed[..., None], t)
        return (half[..., 0]) * (vals @ weights)

    def fn(r, s):
        r = np.asarray(r, dtype=float)
        s = np.asarray(s, dtype=float)
        r, s = np.broadcast_arrays(r, s)
        out = np.zeros(r.shape)
        moved_r = r != r0
        if np.any(moved_r):
            if not spec.phi_r_known:
                raise OrderOutOfRange(f"{spec.name}: phi is only known along s at fixed r")
            out = out + np.where(moved_r, leg(spec.log_phi_r, np.full(r.shape, s0),
                                              np.full(r.shape, r0), r, along_r=True), 0.0)
        out = out + leg(spec.log_phi_s, r, np.full(r.shape, s0), s, along_r=False)
        return out

    return fn
