"""Finite-difference recomputation of sprays and curvatures from F itself.

Nothing here uses the closed forms of :mod:`sphfinsler.curvature` except in
"semi" mode, where the engine spray G is the differentiated quantity.
Derivatives are products of central differences along coordinate
directions of the joint (x, y) space, with one Richardson extrapolation
level.  Steps scale with r for x-directions and with u for y-directions.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .curvature import spray_values
from .errors import OrderOutOfRange, SingularFrame, StencilCrossesSingularSet
from .metrics import MetricSpec, local_log_phi

MODES = ("semi", "full")


@dataclass(frozen=True)
class FdSpec:
    """Central-difference settings.

    ``h_rel`` is the relative step for first derivatives; an order-k
    derivative uses ``h_rel ** (3 / (k + 2))``.  When differences are nested
    (full mode) the inner ones use the larger ``h_rel ** (3 / (k + 4))``,
    which minimises the extrapolated error, and the outer ones use
    ``h_rel ** (2.1 / (k + 4))`` to stay above the inner noise.
    """

    h_rel: float = 1e-5
    richardson: bool = True

    def __post_init__(self):
        if not (1e-8 <= self.h_rel <= 1e-2):
            raise ValueError(f"h_rel must lie in [1e-8, 1e-2], got {self.h_rel}")

    def step(self, order: int, role: str = "single") -> float:
        if role == "single":
            return self.h_rel ** (3.0 / (order + 2))
        if role == "inner":
            return self.h_rel ** (3.0 / (order + 4))
        if role == "outer":
            return self.h_rel ** (2.1 / (order + 4))
        raise ValueError(f"unknown step role {role!r}")


def _check_stencil(x: np.ndarray, y: np.ndarray, margin: float = 0.02):
    r = np.linalg.norm(x, axis=-1)
    u = np.linalg.norm(y, axis=-1)
    s = np.einsum("...i,...i->...", x, y) / u
    if np.any(r * r - s * s < (margin * r) ** 2):
        raise StencilCrossesSingularSet("finite-difference stencil reaches the radial set")


def derivatives(func, z0: np.ndarray, scale: np.ndarray, indices, h: float, richardson: bool = True):
    """Mixed partials of ``func`` at the rows of ``z0``.

    ``func`` maps (P, D) points to (P, ...) values.  ``indices`` lists
    multi-indices (tuples of coordinate numbers, repeats allowed); each is
    evaluated with the product of central first differences.  Returns an
    array of shape (len(indices), m, ...).
    """
    z0 = np.atleast_2d(z0)
    m, dim = z0.shape
    levels = (h, 0.5 * h) if richardson else (h,)
    offsets, weights, owners = [], [], []
    for level, hh in enumerate(levels):
        for q, mi in enumerate(indices):
            k = len(mi)
            for signs in itertools.product((1.0, -1.0), repeat=k):
                off = np.zeros((m, dim))
                for sign, d in zip(signs, mi):
                    off[:, d] += sign * hh * scale[:, d]
                offsets.append(off)
                denom = np.prod([2 * hh * scale[:, d] for d in mi], axis=0)
                weights.append(np.prod(signs) / denom)
                owners.append((level, q))
    pts = z0[None] + np.stack(offsets)
    vals = np.asarray(func(pts.reshape(-1, dim)))
    vals = vals.reshape((len(offsets), m) + vals.shape[1:])
    out = np.zeros((len(levels), len(indices), m) + vals.shape[2:])
    for (level, q), wgt, v in zip(owners, weights, vals):
        out[level, q] += wgt.reshape((m,) + (1,) * (v.ndim - 1)) * v
    if richardson:
        return (4 * out[1] - out[0]) / 3
    return out[0]


class _FSquared:
    """Vectorized F^2 on (P, 2n) points near an anchor frame."""

    def __init__(self, spec: MetricSpec, x: np.ndarray, y: np.ndarray):
        if not spec.has_phi:
            raise SingularFrame(f"{spec.name} carries no metric function")
        self.n = x.shape[0]
        # same reductions as __call__ so an unmoved x gives exactly r == r0
        r0 = float(np.linalg.norm(x[None], axis=1)[0])
        u0 = float(np.sqrt(np.einsum("pi,pi->p", y[None], y[None]))[0])
        s0 = float(np.einsum("pi,pi->p", x[None], y[None])[0]) / u0
        self.log_phi0 = math.log(F_value(spec, x, y) / u0)
        self.local = local_log_phi(spec, r0, s0)

    def __call__(self, z: np.ndarray) -> np.ndarray:
        x, y = z[:, : self.n], z[:, self.n:]
        _check_stencil(x, y)
        r = np.linalg.norm(x, axis=1)
        u2 = np.einsum("pi,pi->p", y, y)
        s = np.einsum("pi,pi->p", x, y) / np.sqrt(u2)
        return u2 * np.exp(2 * (self.log_phi0 + self.local(r, s)))


def _scales(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    x = np.atleast_2d(x)
    y = np.atleast_2d(y)
    r = np.linalg.norm(x, axis=1, keepdims=True)
    u = np.linalg.norm(y, axis=1, keepdims=True)
    return np.hstack([np.repeat(r, x.shape[1], axis=1), np.repeat(u, y.shape[1], axis=1)])


def F_value(spec: MetricSpec, x, y) -> float:
    """F = u phi(r, s)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    r = float(np.linalg.norm(x))
    u = float(np.linalg.norm(y))
    if r == 0 or u == 0:
        raise SingularFrame("F is evaluated away from x = 0 and y = 0")
    s = float(x @ y) / u
    return u * float(spec.phi(r, s))


def fd_metric(spec: MetricSpec, x, y, fd: FdSpec = FdSpec()) -> np.ndarray:
    """g_kl = (1/2) d^2 F^2 / dy^k dy^l."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.shape[0]
    Fsq = _FSquared(spec, x, y)
    pairs = [(n + k, n + l) for k in range(n) for l in range(k, n)]
    z0 = np.concatenate([x, y])[None]
    d2 = derivatives(Fsq, z0, _scales(x, y), pairs, fd.step(2), fd.richardson)[:, 0]
    g = np.zeros((n, n))
    for (a, b), v in zip(pairs, d2):
        g[a - n, b - n] = g[b - n, a - n] = 0.5 * v
    return g


def _spray_from_fsq(Fsq, X: np.ndarray, Y: np.ndarray, fd: FdSpec, role: str = "single") -> np.ndarray:
    """G^i = (1/4) g^{il} ([F^2]_{x^k y^l} y^k - [F^2]_{x^l}) at the rows of X, Y."""
    m, n = X.shape
    yy = [(n + k, n + l) for k in range(n) for l in range(k, n)]
    xy = [(k, n + l) for k in range(n) for l in range(n)]
    xs = [(k,) for k in range(n)]
    z0 = np.hstack([X, Y])
    sc = _scales(X, Y)
    d_yy = derivatives(Fsq, z0, sc, yy, fd.step(2, role), fd.richardson)
    d_xy = derivatives(Fsq, z0, sc, xy, fd.step(2, role), fd.richardson)
    d_x = derivatives(Fsq, z0, sc, xs, fd.step(1, role), fd.richardson)
    hess = np.zeros((m, n, n))
    for (a, b), v in zip(yy, d_yy):
        hess[:, a - n, b - n] = hess[:, b - n, a - n] = 0.5 * v
    mixed = np.zeros((m, n, n))  # mixed[:, k, l] = F^2_{x^k y^l}
    for (k, l), v in zip(xy, d_xy):
        mixed[:, k, l - n] = v
    rhs = np.einsum("mkl,mk->ml", mixed, Y) - d_x.T
    return 0.25 * np.linalg.solve(hess, rhs[..., None])[..., 0]


def fd_spray(spec: MetricSpec, x, y, fd: FdSpec = FdSpec()) -> np.ndarray:
    """Spray coefficients G^i from finite differences of F^2."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if not spec.phi_r_known:
        raise OrderOutOfRange(f"{spec.name}: F is known only along s at fixed r")
    return _spray_from_fsq(_FSquared(spec, x, y), x[None], y[None], fd)[0]


def _spray_source(spec: MetricSpec, x: np.ndarray, y: np.ndarray, mode: str, fd: FdSpec):
    """Vectorized G on (P, 2n) points and the step role for differencing it."""
    n = x.shape[0]
    if mode == "semi":
        def G(z):
            _check_stencil(z[:, :n], z[:, n:])
            return spray_values(spec, z[:, :n], z[:, n:])
        return G, "single"
    if mode == "full":
        if not spec.phi_r_known:
            raise OrderOutOfRange(f"{spec.name}: full-mode oracle needs F in x and y")
        Fsq = _FSquared(spec, x, y)
        return (lambda z: _spray_from_fsq(Fsq, z[:, :n], z[:, n:], fd, "inner")), "outer"
    raise ValueError(f"oracle mode must be one of {MODES}, got {mode!r}")


def fd_berwald(spec: MetricSpec, x, y, fd: FdSpec = FdSpec(), mode: str = "semi") -> np.ndarray:
    """B^i_jkl = d^3 G^i / dy^j dy^k dy^l."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.shape[0]
    G, role = _spray_source(spec, x, y, mode, fd)
    triples = list(itertools.combinations_with_replacement(range(n), 3))
    d3 = derivatives(G, np.concatenate([x, y])[None], _scales(x, y),
                     [tuple(n + t for t in tr) for tr in triples], fd.step(3, role), fd.richardson)
    B = np.zeros((n, n, n, n))
    for tr, v in zip(triples, d3[:, 0]):
        for perm in set(itertools.permutations(tr)):
            B[(slice(None),) + perm] = v
    return B


def landsberg_identity(g: np.ndarray, B: np.ndarray, y) -> np.ndarray:
    """-(1/2) y_m B^m_jkl with y_m = g_mi y^i (sign convention of the engine is calibrated separately)."""
    y_low = g @ np.asarray(y, dtype=float)
    return -0.5 * np.einsum("m,mjkl->jkl", y_low, B)


def fd_ricci(spec: MetricSpec, x, y, fd: FdSpec = FdSpec(), mode: str = "semi") -> float:
    """Ric = R^m_m with R^i_k = 2 G^i_{x^k} - y^j G^i_{x^j y^k} + 2 G^j G^i_{y^j y^k} - G^i_{y^j} G^j_{y^k}."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.shape[0]
    G, role = _spray_source(spec, x, y, mode, fd)
    z0 = np.concatenate([x, y])[None]
    sc = _scales(x, y)
    first = derivatives(G, z0, sc, [(a,) for a in range(2 * n)], fd.step(1, role), fd.richardson)[:, 0]
    dx, dy = first[:n], first[n:]          # dx[k, i] = dG^i/dx^k
    xy = [(j, n + k) for j in range(n) for k in range(n)]
    yy = [(n + j, n + k) for j in range(n) for k in range(j, n)]
    second = derivatives(G, z0, sc, xy + yy, fd.step(2, role), fd.richardson)[:, 0]
    dxy = np.zeros((n, n, n))               # dxy[j, k, i] = d2G^i/dx^j dy^k
    for (j, k), v in zip(xy, second[: len(xy)]):
        dxy[j, k - n] = v
    dyy = np.zeros((n, n, n))
    for (j, k), v in zip(yy, second[len(xy):]):
        dyy[j - n, k - n] = dyy[k - n, j - n] = v
    G0 = G(z0)[0]
    R = (2 * dx.T - np.einsum("j,jki->ik", y, dxy) + 2 * np.einsum("j,jki->ik", G0, dyy)
         - np.einsum("ji,kj->ik", dy, dy))
    return float(np.trace(R))


class SignCalibrator:
    """Fixes the Landsberg sign convention once and then insists on it.

    sigma is calibrated at the first frame where L is genuinely non-zero,
    meaning larger than ``threshold`` times its natural scale ``floor``.
    """

    def __init__(self, threshold: float = 1e-3):
        self.threshold = threshold
        self.sigma: int | None = None
        self.mismatches: list[str] = []

    def check(self, L_engine: np.ndarray, L_oracle: np.ndarray, tol: float, floor: float,
              label: str = "") -> float:
        """Relative error of L_engine against sigma * L_oracle, measured against max(|L|, floor)."""
        norm = max(np.linalg.norm(L_engine), np.linalg.norm(L_oracle))
        if self.sigma is None and norm > self.threshold * floor:
            plus = np.linalg.norm(L_engine - L_oracle)
            minus = np.linalg.norm(L_engine + L_oracle)
            self.sigma = 1 if plus <= minus else -1
        sigma = self.sigma or 1
        err = np.linalg.norm(L_engine - sigma * L_oracle) / max(norm, floor)
        if err > tol:
            self.mismatches.append(f"{label}: relative error {err:.3g} with sigma={sigma}")
        return float(err)
