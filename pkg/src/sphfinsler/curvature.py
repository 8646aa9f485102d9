"""Closed-form curvature of spherically symmetric metrics at a point-direction frame.

All tensors are dense numpy arrays indexed as written: ``g[i, j]``,
``B[i, j, k, l]`` for B^i_jkl, ``L[j, k, l]``.  P, Q and phi enter through
their jets, so every partial derivative below is exact to rounding.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import jet as J
from .errors import (DivisionNearZero, IntegrandSingularOnPath, JetError, SingularFrame,
                     SqrtNonPositive, ZeroVector)
from .jet import Jet, JetCaps, seed_point
from .metrics import MetricSpec, phi_jet

SPRAY_CAPS = JetCaps(1, 3)
METRIC_PHI_CAPS = JetCaps(2, 5)
TENSOR_PHI_CAPS = JetCaps(0, 2)


@dataclass(frozen=True)
class FrameGuards:
    margin: float = 0.02        # require sqrt(r^2 - s^2) >= margin * r
    denominator: float = 1e-8   # require |denominator| >= this * its magnitude scale


DEFAULT_GUARDS = FrameGuards()


@dataclass(frozen=True)
class PointFrame:
    x: np.ndarray
    y: np.ndarray
    r: float
    u: float
    s: float
    valid: bool = True
    reason: str | None = None

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def w(self) -> float:
        return math.sqrt(max(self.r * self.r - self.s * self.s, 0.0))

    def require_valid(self):
        if not self.valid:
            raise SingularFrame(self.reason or "invalid frame")


def frame(x, y, spec: MetricSpec | None = None, guards: FrameGuards = DEFAULT_GUARDS) -> PointFrame:
    """Build a frame and flag it invalid near the radial set or near family denominators."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 1 or x.shape != y.shape or x.shape[0] < 2:
        raise ValueError("x and y must be vectors of the same length n >= 2")
    r = float(np.linalg.norm(x))
    u = float(np.linalg.norm(y))
    if r == 0.0 or u == 0.0:
        raise ZeroVector("x and y must be non-zero")
    s = float(x @ y) / u
    s = max(-r, min(r, s))
    w = math.sqrt(max(r * r - s * s, 0.0))
    reason = None
    if w < guards.margin * r:
        reason = f"radial direction: sqrt(r^2 - s^2) = {w:.3g} < {guards.margin} r"
    elif spec is not None:
        for label, value, scale in spec.denominators(r, s):
            if not math.isfinite(value) or abs(value) < guards.denominator * scale:
                reason = f"denominator {label} = {value:.3g} is below the guard"
                break
    return PointFrame(x, y, r, u, s, reason is None, reason)


@dataclass
class SprayData:
    P: float
    Q: float
    P_s: float
    P_ss: float
    P_sss: float
    P_r: float
    Q_s: float
    Q_ss: float
    Q_sss: float
    Q_r: float
    Q_rs: float
    G: np.ndarray

    @classmethod
    def from_jets(cls, P: Jet, Q: Jet, f: PointFrame) -> SprayData:
        G = f.u * P.value * f.y + f.u ** 2 * Q.value * f.x
        return cls(P.value, Q.value, P.extract(0, 1), P.extract(0, 2), P.extract(0, 3),
                   P.extract(1, 0), Q.extract(0, 1), Q.extract(0, 2), Q.extract(0, 3),
                   Q.extract(1, 0), Q.extract(1, 1), G)

    @property
    def scale(self) -> float:
        """Dimensionless magnitude of the spray, used to normalize curvature norms."""
        return 1.0 + sum(abs(v) for v in (self.P, self.P_s, self.P_ss, self.P_sss,
                                          self.Q, self.Q_s, self.Q_ss, self.Q_sss))


def spray_from_phi(phi: Jet, r: Jet, s: Jet) -> tuple[Jet, Jet]:
    """P and Q from the jet of phi (loses one r-order and two s-orders)."""
    phi_s = phi.d_s()
    phi_r = phi.d_r()
    phi_ss = phi_s.d_s()
    phi_rs = phi_r.d_s()
    w2 = r * r - s * s
    Q = (-phi_r + s * phi_rs + r * phi_ss) / (2 * r * (phi - s * phi_s + w2 * phi_ss))
    P = -(s * phi + w2 * phi_s) * Q / phi + (s * phi_r + r * phi_s) / (2 * r * phi)
    return P, Q


def spray_values(spec: MetricSpec, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Engine spray G^i at many frames at once; x, y have shape (m, n)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    r = np.linalg.norm(x, axis=1)
    u = np.linalg.norm(y, axis=1)
    s = np.einsum("mi,mi->m", x, y) / u
    if spec.spray_mode:
        P, Q = spec.spray(r, s)
    else:
        rj, sj = seed_point(r, s, JetCaps(1, 2))
        Pj, Qj = spray_from_phi(spec.phi(rj, sj), rj, sj)
        P, Q = Pj.value, Qj.value
    return (u * P)[:, None] * y + (u * u * Q)[:, None] * x


# -- tensor building blocks -----------------------------------------------------

def _sym3(A: np.ndarray, v: np.ndarray) -> np.ndarray:
    """A[j,k] v[l] + A[j,l] v[k] + A[k,l] v[j]."""
    return (np.einsum("jk,l->jkl", A, v) + np.einsum("jl,k->jkl", A, v)
            + np.einsum("kl,j->jkl", A, v))


def _dsym(d: np.ndarray, X: np.ndarray) -> np.ndarray:
    """d[i,j] X[k,l] + d[i,k] X[j,l] + d[i,l] X[j,k]."""
    return (np.einsum("ij,kl->ijkl", d, X) + np.einsum("ik,jl->ijkl", d, X)
            + np.einsum("il,jk->ijkl", d, X))


def _outer(*vs: np.ndarray) -> np.ndarray:
    out = vs[0]
    for v in vs[1:]:
        out = np.multiply.outer(out, v)
    return out


def metric_from_phi(f: PointFrame, phi: float, phi_s: float, phi_ss: float):
    """g_ij and g^ij from phi, phi_s, phi_ss; also returns the rho-tilde coefficients."""
    x, s, n = f.x, f.s, f.n
    yh = f.y / f.u
    d = np.eye(n)
    w2 = f.r * f.r - s * s
    A = phi - s * phi_s
    g = (phi * A * d + (phi_s ** 2 + phi * phi_ss) * np.outer(x, x)
         + (s * s * phi * phi_ss - s * A * phi_s) * np.outer(yh, yh)
         + (A * phi_s - s * phi * phi_ss) * (np.outer(x, yh) + np.outer(yh, x)))
    Dn = A + w2 * phi_ss
    if abs(A) < 1e-12 * abs(phi) or abs(Dn) < 1e-12 * (abs(A) + abs(w2 * phi_ss)):
        raise SingularFrame("degenerate metric: phi - s phi_s or its companion vanishes")
    T = phi * phi_s - s * phi_s ** 2 - s * phi * phi_ss
    rho = (1.0 / (phi * A),
           (s * phi + w2 * phi_s) * T / (phi ** 3 * A * Dn),
           -T / (phi ** 2 * A * Dn),
           -phi_ss / (phi * A * Dn))
    g_inv = (rho[0] * d + rho[1] * np.outer(yh, yh)
             + rho[2] * (np.outer(x, yh) + np.outer(yh, x)) + rho[3] * np.outer(x, x))
    return g, g_inv, rho


def berwald_tensor(f: PointFrame, sp: SprayData) -> np.ndarray:
    x, y, s, u = f.x, f.y, f.s, f.u
    d = np.eye(f.n)
    P, Ps, Pss, Psss = sp.P, sp.P_s, sp.P_ss, sp.P_sss
    Qs, Qss, Qsss = sp.Q_s, sp.Q_ss, sp.Q_sss
    xx, yy = np.outer(x, x), np.outer(y, y)
    xy = np.outer(x, y) + np.outer(y, x)
    c6 = (s * s * Pss + s * Ps - P) / u ** 3
    B = (Pss / u * _dsym(d, xx)
         + (P - s * Ps) / u * _dsym(d, d)
         - s / u ** 2 * Pss * _dsym(d, xy)
         - s / u ** 2 * Pss * _outer(y, _sym3(d, x))
         + (Qs - s * Qss) / u * _outer(x, _sym3(d, x))
         + c6 * _dsym(d, yy)
         + c6 * _outer(y, _sym3(d, y))
         + (3 * P - s ** 3 * Psss - 6 * s * s * Pss - 3 * s * Ps) / u ** 5 * _outer(y, y, y, y)
         + (s * s * Psss + 3 * s * Pss) / u ** 4 * _outer(y, _sym3(yy, x))
         + Psss / u ** 2 * _outer(y, x, x, x)
         - (Pss + s * Psss) / u ** 3 * _outer(y, _sym3(xx, y))
         + (s * s * Qsss + s * Qss - Qs) / u ** 3 * _outer(x, _sym3(yy, x))
         - s / u ** 2 * Qsss * _outer(x, _sym3(xx, y))
         + Qsss / u * _outer(x, x, x, x)
         + (s * s * Qss - s * Qs) / u ** 2 * _outer(x, _sym3(d, y))
         + (3 * s * Qs - 3 * s * s * Qss - s ** 3 * Qsss) / u ** 4 * _outer(x, y, y, y))
    return B


def weak_berwald_combination(f: PointFrame, sp: SprayData) -> float:
    w2 = f.r ** 2 - f.s ** 2
    return (f.n + 1) * (sp.P - f.s * sp.P_s) + w2 * (sp.Q_s - f.s * sp.Q_ss)


def mean_berwald_tensor(f: PointFrame, sp: SprayData) -> np.ndarray:
    x, y, s, u, n = f.x, f.y, f.s, f.u, f.n
    r2 = f.r ** 2
    P, Ps, Pss = sp.P, sp.P_s, sp.P_ss
    Qs, Qss, Qsss = sp.Q_s, sp.Q_ss, sp.Q_sss
    c1 = weak_berwald_combination(f, sp)
    c2 = ((n + 1) * (s * s * Pss + s * Ps - P) + r2 * (s * s * Qsss + s * Qss - Qs)
          + 3 * s * s * Qs - 3 * s ** 3 * Qss - s ** 4 * Qsss)
    c3 = (n + 1) * Pss + 2 * (Qs - s * Qss) + (r2 - s * s) * Qsss
    return (c1 / u * np.eye(n) + c2 / u ** 3 * np.outer(y, y) + c3 / u * np.outer(x, x)
            - c3 * s / u ** 2 * (np.outer(x, y) + np.outer(y, x)))


def landsberg_scalars(f: PointFrame, sp: SprayData, phi: float, phi_s: float) -> dict:
    s = f.s
    w2 = f.r ** 2 - s * s
    k = s * phi + w2 * phi_s
    L1 = 3 * phi_s * sp.P_ss + phi * sp.P_sss + k * sp.Q_sss
    L2 = -s * phi * sp.P_ss + phi_s * (sp.P - s * sp.P_s) + k * (sp.Q_s - s * sp.Q_ss)
    return {"L1": L1, "L2": L2, "L3": -s ** 3 * L1 + 3 * s * L2, "L4": -s * L2,
            "L5": -s * L1, "L6": s * s * L1 - L2}


def landsberg_tensor(f: PointFrame, Ls: dict, phi: float) -> np.ndarray:
    x = f.x
    yh = f.y / f.u
    d = np.eye(f.n)
    bracket = (Ls["L1"] * _outer(x, x, x) + Ls["L2"] * _sym3(d, x)
               + Ls["L3"] * _outer(yh, yh, yh) + Ls["L4"] * _sym3(d, yh)
               + Ls["L5"] * _sym3(np.outer(x, x), yh) + Ls["L6"] * _sym3(np.outer(yh, yh), x))
    return -0.5 * phi * bracket


def weak_landsberg_bracket(f: PointFrame, Ls: dict, rho) -> float:
    w2 = f.r ** 2 - f.s ** 2
    return (w2 * (rho[0] + w2 * rho[3]) * Ls["L1"]
            + ((f.n + 1) * rho[0] + 3 * w2 * rho[3]) * Ls["L2"])


def ricci_scalars(f: PointFrame, sp: SprayData) -> tuple[float, float]:
    r, s = f.r, f.s
    w2 = r * r - s * s
    P, Q = sp.P, sp.Q
    R1 = 2 * Q - s / r * sp.P_r - sp.P_s + 2 * w2 * sp.P_s * Q + P * P + 2 * s * P * Q
    R3 = (2 / r * sp.Q_r - sp.Q_ss - s / r * sp.Q_rs + 2 * w2 * Q * sp.Q_ss + 4 * Q * Q
          - w2 * sp.Q_s ** 2 - 2 * s * Q * sp.Q_s)
    return R1, R3


def _jet_at(f: PointFrame, caps: JetCaps):
    return seed_point(f.r, f.s, caps)


def _flatness_inputs(spec: MetricSpec, r: float) -> dict | None:
    funcs = spec.coefficient_functions()
    if funcs is None:
        return None
    rj, _ = seed_point(r, 0.0, JetCaps(1, 0))
    out = {}
    for name, fn in funcs.items():
        v = fn(rj)
        out[name] = v.value
        out[name + "'"] = v.extract(1, 0)
    return out


def flatness_system(spec: MetricSpec, r: float) -> tuple[float, float, float] | None:
    """Residuals of the reduced three-equation flatness system at radius r."""
    v = _flatness_inputs(spec, r)
    if v is None:
        return None
    f1, f2, c0, c1, c2 = v["f1"], v["f2"], v["c0"], v["c1"], v["c2"]
    e1 = 6 * r * c1 + r ** 2 * v["c1'"] + 2 * r ** 3 * c1 * f1 + 2 * r * f1 * f2 - v["f2'"]
    e2 = (2 * c0 + 2 * r ** 2 * c0 * f1 + 2 * r ** 2 * c2 + 2 * r ** 4 * f1 * c2
          + r ** 2 * f1 ** 2 - f1 - r * v["f1'"])
    e3 = (4 * r ** 2 * c0 ** 2 + 2 * c0 + 2 * r * v["c0'"] + 4 * r ** 4 * c0 * c2
          + 2 * r ** 2 * c0 * f1 - r ** 6 * c1 ** 2 - 2 * r ** 2 * c2 - f1 + r ** 2 * f2 ** 2)
    return e1, e2, e3


def flatness_coefficients(spec: MetricSpec, r: float) -> tuple[float, float, float, float] | None:
    """(A0, A1, A2, A3) with R1 + (r^2 - s^2) R3 = A3 s^3 + A2 s^2 w + A1 s + A0 w."""
    v = _flatness_inputs(spec, r)
    if v is None:
        return None
    f1, f2, c0, c1, c2 = v["f1"], v["f2"], v["c0"], v["c1"], v["c2"]
    A3 = -(6 * r * c1 + r ** 2 * v["c1'"] + 2 * r ** 3 * c1 * f1 + 2 * r * f1 * f2 - v["f2'"])
    A2 = -(4 * r * c0 ** 2 + 2 * v["c0'"] + 4 * r ** 3 * c0 * c2 - r ** 5 * c1 ** 2 - 4 * r * c2
           - 2 * r ** 3 * c2 * f1 - r * f1 ** 2 + v["f1'"] + r * f2 ** 2)
    A1 = -r ** 2 * A3
    A0 = r * (4 * r ** 2 * c0 ** 2 + 2 * c0 + 2 * r * v["c0'"] + 4 * r ** 4 * c0 * c2
              + 2 * r ** 2 * c0 * f1 - r ** 6 * c1 ** 2 - 2 * r ** 2 * c2 - f1 + r ** 2 * f2 ** 2)
    return A0, A1, A2, A3


@dataclass
class ConditionReport:
    res_weak_berwald: float
    res_weak_landsberg: float | None
    res_landsberg_surface: float | None
    res_flat_flag: float
    res_flatness_system: tuple[float, float, float] | None
    valid: bool = True

    def as_dict(self) -> dict:
        return {"res_weak_berwald": self.res_weak_berwald,
                "res_weak_landsberg": self.res_weak_landsberg,
                "res_landsberg_surface": self.res_landsberg_surface,
                "res_flat_flag": self.res_flat_flag,
                "res_flatness_system": (list(self.res_flatness_system)
                                        if self.res_flatness_system is not None else None),
                "valid": self.valid}


@dataclass
class CurvaturePack:
    spray: SprayData
    g: np.ndarray | None
    g_inv: np.ndarray | None
    B: np.ndarray
    E: np.ndarray
    L: np.ndarray | None
    J: np.ndarray | None
    Ric: float
    K: float | None
    phi: float | None
    aux: dict = field(default_factory=dict)

    @property
    def F(self) -> float | None:
        return None if self.phi is None else self.aux["u"] * self.phi


class FrameData:
    """Lazily computed jets and scalars shared by the operations at one frame.

    The jets depend on (r, s) only.  A frame with the same (r, s) but a
    different orientation can reuse them by passing ``share``; this is how
    grid evaluation avoids recomputing identical jets for every rotation.
    """

    SHARE_TOL = 1e-12

    def __init__(self, spec: MetricSpec, f: PointFrame, share: FrameData | None = None):
        f.require_valid()
        self.spec = spec
        self.f = f
        if share is not None:
            if share.spec is not spec:
                raise ValueError("shared frame data belongs to another spec")
            if abs(share.f.r - f.r) > self.SHARE_TOL * f.r or abs(share.f.s - f.s) > self.SHARE_TOL * f.r:
                raise ValueError("shared frame data was computed at a different (r, s)")
            share = share.share or share
        self.share = share
        # jets are expanded about the anchor's (r, s)
        self.anchor = share.f if share is not None else f

    def _guarded(self, fn):
        try:
            return fn()
        except IntegrandSingularOnPath:
            raise
        except (DivisionNearZero, SqrtNonPositive) as exc:
            raise SingularFrame(f"{self.spec.name} at r={self.f.r:.6g}, s={self.f.s:.6g}: {exc}") from exc

    @cached_property
    def spray_jets(self) -> tuple[Jet, Jet]:
        if self.share is not None:
            return self.share.spray_jets

        def build():
            if self.spec.spray_mode:
                rj, sj = _jet_at(self.f, SPRAY_CAPS)
                P, Q = self.spec.spray(rj, sj)
                return P, Q
            rj, sj = _jet_at(self.f, METRIC_PHI_CAPS)
            phi = phi_jet(self.spec, self.f.r, self.f.s, METRIC_PHI_CAPS, normalized=True)
            return spray_from_phi(phi, rj, sj)
        return self._guarded(build)

    @cached_property
    def spray(self) -> SprayData:
        P, Q = self.spray_jets
        return SprayData.from_jets(P, Q, self.f)

    def phi_values(self, normalized: bool) -> tuple[float, float, float]:
        if self.share is not None:
            return self.share.phi_values(normalized)
        key = "_phi_norm" if normalized else "_phi_abs"
        if key not in self.__dict__:
            def build():
                ph = phi_jet(self.spec, self.f.r, self.f.s, TENSOR_PHI_CAPS, normalized=normalized)
                return ph.value, ph.extract(0, 1), ph.extract(0, 2)
            self.__dict__[key] = self._guarded(build)
        return self.__dict__[key]

    def landsberg_scalars(self, normalized: bool = True) -> dict:
        phi, phi_s, _ = self.phi_values(normalized)
        return landsberg_scalars(self.f, self.spray, phi, phi_s)

    @cached_property
    def ricci(self) -> tuple[float, float]:
        return ricci_scalars(self.f, self.spray)

    @cached_property
    def flatness(self) -> tuple[float, float, float] | None:
        if self.share is not None:
            return self.share.flatness
        return flatness_system(self.spec, self.anchor.r)


def frame_data(spec: MetricSpec, f: PointFrame, share: FrameData | None = None) -> FrameData:
    return FrameData(spec, f, share)


# -- public operations -------------------------------------------------------

def spray(spec: MetricSpec, f: PointFrame, data: FrameData | None = None) -> SprayData:
    return FrameData(spec, f, data).spray


def metric_tensor(spec: MetricSpec, f: PointFrame, data: FrameData | None = None) -> np.ndarray:
    return metric_and_inverse(spec, f, data)[0]


def inverse_metric(spec: MetricSpec, f: PointFrame, data: FrameData | None = None) -> np.ndarray:
    return metric_and_inverse(spec, f, data)[1]


def metric_and_inverse(spec: MetricSpec, f: PointFrame, data: FrameData | None = None):
    fd = FrameData(spec, f, data)
    phi, phi_s, phi_ss = fd.phi_values(normalized=False)
    g, g_inv, _ = metric_from_phi(f, phi, phi_s, phi_ss)
    return g, g_inv


def berwald(spec: MetricSpec, f: PointFrame, data: FrameData | None = None) -> np.ndarray:
    return berwald_tensor(f, spray(spec, f, data))


def mean_berwald(spec: MetricSpec, f: PointFrame, data: FrameData | None = None) -> tuple[np.ndarray, float]:
    sp = spray(spec, f, data)
    return mean_berwald_tensor(f, sp), weak_berwald_combination(f, sp)


def landsberg(spec: MetricSpec, f: PointFrame, data: FrameData | None = None) -> tuple[np.ndarray, dict]:
    fd = FrameData(spec, f, data)
    phi = fd.phi_values(normalized=False)[0]
    Ls = fd.landsberg_scalars(normalized=False)
    return landsberg_tensor(f, Ls, phi), Ls


def mean_landsberg(spec: MetricSpec, f: PointFrame, data: FrameData | None = None) -> tuple[np.ndarray, float, float]:
    """(J, J1, J2) with J_i = x^i J1 + (y^i / u) J2 and J2 = -s J1."""
    fd = FrameData(spec, f, data)
    phi, phi_s, phi_ss = fd.phi_values(normalized=False)
    _, _, rho = metric_from_phi(f, phi, phi_s, phi_ss)
    Ls = fd.landsberg_scalars(normalized=False)
    J1 = -0.5 * phi * weak_landsberg_bracket(f, Ls, rho)
    J2 = -f.s * J1
    return f.x * J1 + f.y / f.u * J2, J1, J2


def ricci(spec: MetricSpec, f: PointFrame, data: FrameData | None = None) -> tuple[float, float | None]:
    """(Ric, K); Ric carries the u^2 factor, K = Ric / F^2 is reported for n = 2."""
    fd = FrameData(spec, f, data)
    R1, R3 = fd.ricci
    Ric = f.u ** 2 * ((f.n - 1) * R1 + (f.r ** 2 - f.s ** 2) * R3)
    K = None
    if f.n == 2 and spec.has_phi and spec.phi_r_known:
        phi = fd.phi_values(normalized=False)[0]
        K = Ric / (f.u * phi) ** 2
    return Ric, K


@dataclass
class UWData:
    U: float
    W: float
    res_P_identity: float
    res_Q_identity: float | None  # None at s = 0, where the identity is 0/0


def uw(spec: MetricSpec, f: PointFrame, data: FrameData | None = None) -> UWData:
    """U, W and the residuals of P = -Q U + W / (2r) and of the Q(U, W) identity.

    Metric-mode specs take U, W from phi; families use the closed-form U and
    W = 2 r (P + U Q), which makes the P identity hold by construction.
    """
    fd = FrameData(spec, f, data)
    root = fd.share or fd
    if "_uw" in root.__dict__:
        return root.__dict__["_uw"]
    caps = JetCaps(1, 2)
    rj, sj = _jet_at(fd.anchor, caps)
    w2 = rj * rj - sj * sj

    def build():
        P, Q = fd.spray_jets
        P, Q = P.truncate(JetCaps(0, 2)), Q.truncate(JetCaps(0, 2))
        if spec.has_phi and spec.phi_r_known:
            ph = phi_jet(spec, fd.anchor.r, fd.anchor.s, caps, normalized=True)
            ph_s, ph_r = ph.d_s(), ph.d_r()
            U = (sj * ph + w2 * ph_s) / ph
            W = (sj * ph_r + rj * ph_s) / ph
        elif hasattr(spec, "U"):
            U = spec.U(rj, sj)
            W = 2 * rj * (P + U * Q)
        else:
            raise SingularFrame(f"{spec.name}: U and W need phi or a closed-form U")
        U, W = U.truncate(JetCaps(0, 1)), W.truncate(JetCaps(0, 1))
        r, s = rj.truncate(JetCaps(0, 1)), sj.truncate(JetCaps(0, 1))
        res_p = (P - (-Q * U + W / (2 * r))).value
        U_s, W_s = U.d_s(), W.d_s()
        U0, W0, r0, s0 = U.value, W.value, f.r, f.s
        num = (2 * r0 * U0 - 2 * r0 * s0 - 2 * r0 ** 2 * W0 + s0 * (r0 ** 2 - s0 ** 2) * W_s.value
               + s0 ** 2 * W0 + s0 * U0 * W0)
        den = U0 ** 2 - s0 * U0 + (r0 ** 2 - s0 ** 2) * U_s.value
        res_q = None
        if abs(s0) > 1e-6 * r0:
            res_q = Q.value - num / (2 * r0 * s0 * den)
        return UWData(U0, W0, res_p, res_q)

    root.__dict__["_uw"] = fd._guarded(build)
    return root.__dict__["_uw"]


def predicted_weak_berwald(spec: MetricSpec, f: PointFrame) -> float | None:
    fn = getattr(spec, "predicted_weak_berwald", None)
    if fn is None:
        return None
    params = getattr(spec, "params", None)
    if params is not None and hasattr(params, "g_offset") and not params.g_offset.is_zero:
        return None
    return float(fn(f.r, f.s, f.n))


def residuals(spec: MetricSpec, f: PointFrame, data: FrameData | None = None) -> ConditionReport:
    """Residuals of every condition at one frame.

    The Landsberg-type residuals are phi-scale free: ``res_landsberg_surface``
    is ((r^2 - s^2) L1 + 3 L2) / phi and ``res_weak_landsberg`` is phi times
    the weak Landsberg bracket (that is, -2 J1).
    """
    fd = FrameData(spec, f, data)
    sp = fd.spray
    R1, R3 = fd.ricci
    w2 = f.r ** 2 - f.s ** 2
    res_wl = res_ls = None
    if spec.has_phi:
        try:
            phi, phi_s, phi_ss = fd.phi_values(normalized=True)
            Ls = fd.landsberg_scalars(normalized=True)
            _, _, rho = metric_from_phi(f, phi, phi_s, phi_ss)
            res_wl = phi * weak_landsberg_bracket(f, Ls, rho)
            res_ls = (w2 * Ls["L1"] + 3 * Ls["L2"]) / phi
        except SingularFrame:
            # degenerate metric (e.g. the c = 0 Bryant case): spray residuals still make sense
            res_wl = res_ls = None
    return ConditionReport(
        res_weak_berwald=weak_berwald_combination(f, sp),
        res_weak_landsberg=res_wl,
        res_landsberg_surface=res_ls,
        res_flat_flag=R1 + w2 * R3,
        res_flatness_system=fd.flatness,
    )


def curvature_pack(spec: MetricSpec, f: PointFrame, data: FrameData | None = None) -> CurvaturePack:
    """Every tensor and auxiliary scalar at one frame."""
    fd = FrameData(spec, f, data)
    sp = fd.spray
    R1, R3 = fd.ricci
    w2 = f.r ** 2 - f.s ** 2
    Ric = f.u ** 2 * ((f.n - 1) * R1 + w2 * R3)
    aux = {"R1": R1, "R3": R3, "r": f.r, "u": f.u, "s": f.s}
    g = g_inv = L = Jv = K = phi = None
    if spec.has_phi:
        phi, phi_s, phi_ss = fd.phi_values(normalized=False)
        g, g_inv, rho = metric_from_phi(f, phi, phi_s, phi_ss)
        Ls = fd.landsberg_scalars(normalized=False)
        L = landsberg_tensor(f, Ls, phi)
        J1 = -0.5 * phi * weak_landsberg_bracket(f, Ls, rho)
        Jv = f.x * J1 + f.y / f.u * (-f.s * J1)
        aux.update(Ls)
        aux.update({"J1": J1, "J2": -f.s * J1})
        if f.n == 2 and spec.phi_r_known:
            K = Ric / (f.u * phi) ** 2
    try:
        d = uw(spec, f, fd)
        aux.update({"U": d.U, "W": d.W})
    except SingularFrame:
        aux.update({"U": None, "W": None})
    return CurvaturePack(spray=sp, g=g, g_inv=g_inv, B=berwald_tensor(f, sp),
                         E=mean_berwald_tensor(f, sp), L=L, J=Jv, Ric=Ric, K=K, phi=phi, aux=aux)
