"""Truncated bivariate Taylor jets in the variables (r, s).

A :class:`Jet` stores the Taylor coefficients

    coeff[i, j] = d^i/dr^i d^j/ds^j f(r0, s0) / (i! j!)

for ``0 <= i <= r_max`` and ``0 <= j <= s_max``.  Products are plain
truncated convolutions of the coefficient arrays; every other smooth
operation is composed from a univariate Taylor series in the nilpotent
part of the argument.

Coefficient arrays may carry trailing batch dimensions, in which case the
base point ``(r0, s0)`` is an array of the same batch shape and every
operation acts elementwise over the batch.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import BaseMismatch, DivisionNearZero, OrderOutOfRange, SqrtNonPositive

DIV_GUARD = 1e-12


@dataclass(frozen=True)
class JetCaps:
    """Highest retained derivative order in r and in s."""

    r_max: int = 2
    s_max: int = 5

    def __post_init__(self):
        if int(self.r_max) != self.r_max or int(self.s_max) != self.s_max:
            raise ValueError("jet caps must be integers")
        if self.r_max < 0 or self.s_max < 0:
            raise ValueError(f"jet caps must be non-negative, got {self}")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.r_max + 1, self.s_max + 1)

    def meet(self, other: JetCaps) -> JetCaps:
        if self == other:
            return self
        return JetCaps(min(self.r_max, other.r_max), min(self.s_max, other.s_max))


DEFAULT_CAPS = JetCaps(2, 5)


@functools.lru_cache(maxsize=None)
def _toeplitz_index(r_max: int, s_max: int) -> np.ndarray:
    # T(a)[c, d] = a[c - d] (flat, 2D offsets); index K points at an appended zero
    width = s_max + 1
    size = (r_max + 1) * width
    idx = np.full((size, size), size, dtype=np.intp)
    for c in range(size):
        ci, cj = divmod(c, width)
        for d in range(size):
            di, dj = divmod(d, width)
            if di <= ci and dj <= cj:
                idx[c, d] = (ci - di) * width + (cj - dj)
    return idx


def _toeplitz(coeff: np.ndarray, caps: JetCaps) -> np.ndarray:
    idx = _toeplitz_index(caps.r_max, caps.s_max)
    flat = coeff.reshape((idx.shape[0],) + coeff.shape[2:])
    ext = np.concatenate([flat, np.zeros((1,) + flat.shape[1:])])
    return ext[idx]  # (K, K, *batch)


def _apply(t: np.ndarray, flat: np.ndarray) -> np.ndarray:
    if t.ndim == 2 and flat.ndim == 1:
        return t @ flat
    if flat.ndim == 1:
        flat = flat[:, None]
    if t.ndim == 2:
        return t @ flat
    return np.einsum("cd...,d...->c...", t, flat)


class Jet:
    """Truncated Taylor expansion of a scalar function of (r, s)."""

    __slots__ = ("coeff", "base", "caps")
    __array_ufunc__ = None  # make ndarray <op> Jet defer to the Jet methods

    def __init__(self, coeff, base, caps: JetCaps):
        if type(coeff) is not np.ndarray or coeff.dtype != np.float64:
            coeff = np.asarray(coeff, dtype=float)
        if coeff.shape[:2] != caps.shape:
            raise ValueError(f"coefficient shape {coeff.shape[:2]} does not match caps {caps}")
        self.coeff = coeff
        self.base = base
        self.caps = caps

    # construction ---------------------------------------------------------
    @classmethod
    def constant(cls, value, base, caps: JetCaps = DEFAULT_CAPS) -> Jet:
        value = np.asarray(value, dtype=float)
        batch = np.broadcast(base[0], base[1], value).shape
        coeff = np.zeros(caps.shape + batch)
        coeff[0, 0] = value
        return cls(coeff, base, caps)

    def like(self, value) -> Jet:
        return Jet.constant(value, self.base, self.caps)

    # inspection -------------------------------------------------------------
    @property
    def value(self):
        v = self.coeff[0, 0]
        return float(v) if v.ndim == 0 else v

    @property
    def batch_shape(self) -> tuple[int, ...]:
        return self.coeff.shape[2:]

    def extract(self, i: int, j: int):
        """Return the partial derivative d^i/dr^i d^j/ds^j at the base point."""
        if i < 0 or j < 0 or i > self.caps.r_max or j > self.caps.s_max:
            raise OrderOutOfRange(f"order ({i}, {j}) outside caps {self.caps}")
        v = self.coeff[i, j] * (math.factorial(i) * math.factorial(j))
        return float(v) if v.ndim == 0 else v

    def __repr__(self):
        return f"Jet(value={self.value!r}, caps=({self.caps.r_max}, {self.caps.s_max}))"

    # structural -------------------------------------------------------------
    def truncate(self, caps: JetCaps) -> Jet:
        if caps == self.caps:
            return self
        if caps.r_max > self.caps.r_max or caps.s_max > self.caps.s_max:
            raise OrderOutOfRange(f"cannot extend caps {self.caps} to {caps}")
        return Jet(self.coeff[: caps.r_max + 1, : caps.s_max + 1], self.base, caps)

    def d_r(self) -> Jet:
        """Jet of the r-partial; loses one order in r."""
        if self.caps.r_max == 0:
            raise OrderOutOfRange("no r-order left to differentiate")
        k = np.arange(1, self.caps.r_max + 1).reshape((-1, 1) + (1,) * len(self.batch_shape))
        caps = JetCaps(self.caps.r_max - 1, self.caps.s_max)
        return Jet(self.coeff[1:] * k, self.base, caps)

    def d_s(self) -> Jet:
        """Jet of the s-partial; loses one order in s."""
        if self.caps.s_max == 0:
            raise OrderOutOfRange("no s-order left to differentiate")
        k = np.arange(1, self.caps.s_max + 1).reshape((1, -1) + (1,) * len(self.batch_shape))
        caps = JetCaps(self.caps.r_max, self.caps.s_max - 1)
        return Jet(self.coeff[:, 1:] * k, self.base, caps)

    def _align(self, other: Jet) -> tuple[Jet, Jet]:
        if other.base is not self.base:
            if not (np.array_equal(self.base[0], other.base[0])
                    and np.array_equal(self.base[1], other.base[1])):
                raise BaseMismatch("jets expanded about different base points")
        caps = self.caps.meet(other.caps)
        return self.truncate(caps), other.truncate(caps)

    # arithmetic -------------------------------------------------------------
    def __neg__(self):
        return Jet(-self.coeff, self.base, self.caps)

    def __pos__(self):
        return self

    def __add__(self, other):
        if isinstance(other, Jet):
            a, b = self._align(other)
            return Jet(a.coeff + b.coeff, a.base, a.caps)
        if isinstance(other, (float, int)):
            coeff = self.coeff.copy()
            coeff[0, 0] += other
            return Jet(coeff, self.base, self.caps)
        other = np.asarray(other, dtype=float)
        batch = np.broadcast_shapes(self.batch_shape, other.shape)
        coeff = np.broadcast_to(self.coeff, self.caps.shape + batch).copy()
        coeff[0, 0] += other
        return Jet(coeff, self.base, self.caps)

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, (float, int)):
            return Jet(self.coeff * other, self.base, self.caps)
        if not isinstance(other, Jet):
            return Jet(self.coeff * _lift(other), self.base, self.caps)
        a, b = self._align(other)
        if b.coeff.ndim > a.coeff.ndim:
            a, b = b, a
        size = a.coeff.shape[0] * a.coeff.shape[1]
        t = _toeplitz(b.coeff, b.caps)
        out = _apply(t, a.coeff.reshape((size,) + a.coeff.shape[2:]))
        return Jet(out.reshape(a.caps.shape + out.shape[1:]), a.base, a.caps)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return self * other.reciprocal()
        return Jet(self.coeff / _lift(other), self.base, self.caps)

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, k):
        if isinstance(k, (int, np.integer)):
            return self.pow_int(int(k))
        return self.pow_real(float(k))

    # smooth functions -------------------------------------------------------
    def compose(self, derivs: Callable[[np.ndarray, int], Sequence[np.ndarray]]) -> Jet:
        """Apply a univariate function given its scaled derivatives at the value.

        ``derivs(a0, K)`` must return ``[f(a0), f'(a0), f''(a0)/2!, ..., f^(K)(a0)/K!]``.
        """
        a0 = self.coeff[0, 0]
        order = self.caps.r_max + self.caps.s_max
        d = derivs(a0, order)
        # h = a - a0 is nilpotent: h**(order+1) vanishes identically
        h = self.coeff.copy()
        h[0, 0] = 0.0
        t = _toeplitz(h, self.caps)
        size = t.shape[0]
        batch = self.batch_shape
        out = np.zeros((size,) + batch)
        out[0] = d[order]
        for k in range(order - 1, -1, -1):
            out = _apply(t, out).reshape((size,) + batch)
            out[0] += d[k]
        return Jet(out.reshape(self.caps.shape + batch), self.base, self.caps)

    def _guard_nonzero(self, what: str):
        a0 = self.coeff[0, 0]
        scale = np.max(np.abs(self.coeff), axis=(0, 1))
        if np.any(np.abs(a0) <= DIV_GUARD * scale) or np.any(~np.isfinite(a0)):
            raise DivisionNearZero(f"{what}: value {a0!r} is too close to zero")

    def reciprocal(self) -> Jet:
        self._guard_nonzero("division")

        def derivs(a0, order):
            return [(-1.0) ** k / a0 ** (k + 1) for k in range(order + 1)]

        return self.compose(derivs)

    def pow_real(self, alpha: float) -> Jet:
        a0 = self.coeff[0, 0]
        if np.any(a0 <= 0):
            raise SqrtNonPositive(f"real power of non-positive value {a0!r}")

        def derivs(a0, order):
            out, binom = [], 1.0
            for k in range(order + 1):
                out.append(binom * a0 ** (alpha - k))
                binom *= (alpha - k) / (k + 1)
            return out

        return self.compose(derivs)

    def pow_int(self, k: int) -> Jet:
        if k < 0:
            return self.pow_int(-k).reciprocal()
        out, base = self.like(1.0), self
        while k:
            if k & 1:
                out = out * base
            k >>= 1
            if k:
                base = base * base
        return out

    def sqrt(self) -> Jet:
        a0 = self.coeff[0, 0]
        if np.any(a0 <= 0):
            raise SqrtNonPositive(f"sqrt of non-positive value {a0!r}")
        return self.pow_real(0.5)

    def exp(self) -> Jet:
        def derivs(a0, order):
            e = np.exp(a0)
            return [e / math.factorial(k) for k in range(order + 1)]

        return self.compose(derivs)

    def log(self) -> Jet:
        a0 = self.coeff[0, 0]
        if np.any(a0 <= 0):
            raise SqrtNonPositive(f"log of non-positive value {a0!r}")

        def derivs(a0, order):
            return [np.log(a0)] + [(-1.0) ** (k + 1) / (k * a0 ** k) for k in range(1, order + 1)]

        return self.compose(derivs)


def _lift(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return x.reshape((1, 1) + x.shape)


# -- functional interface ----------------------------------------------------

def seed_point(r0, s0, caps: JetCaps = DEFAULT_CAPS) -> tuple[Jet, Jet]:
    """Jets of the coordinate functions r and s at (r0, s0)."""
    r0 = np.asarray(r0, dtype=float)
    s0 = np.asarray(s0, dtype=float)
    if not (np.all(np.isfinite(r0)) and np.all(np.isfinite(s0))):
        raise ValueError("base point must be finite")
    r0, s0 = np.broadcast_arrays(r0, s0)
    base = (r0, s0)
    rj = Jet.constant(r0, base, caps)
    sj = Jet.constant(s0, base, caps)
    if caps.r_max >= 1:
        rj.coeff[1, 0] = 1.0
    if caps.s_max >= 1:
        sj.coeff[0, 1] = 1.0
    return rj, sj


def extract(a: Jet, i: int, j: int):
    return a.extract(i, j)


def sqrt(x):
    return x.sqrt() if isinstance(x, Jet) else np.sqrt(x)


def exp(x):
    return x.exp() if isinstance(x, Jet) else np.exp(x)


def log(x):
    return x.log() if isinstance(x, Jet) else np.log(x)


def elementary(op: str, a: Jet, b=None) -> Jet:
    """Named-operation entry point: add, sub, mul, div, neg, sqrt, exp, pow_int."""
    binary = {"add": lambda: a + b, "sub": lambda: a - b, "mul": lambda: a * b,
              "div": lambda: a / b, "pow_int": lambda: a.pow_int(int(b))}
    unary = {"neg": lambda: -a, "sqrt": a.sqrt, "exp": a.exp, "log": a.log}
    if op in binary:
        if b is None:
            raise TypeError(f"{op} needs a second operand")
        return binary[op]()
    if op in unary:
        return unary[op]()
    raise ValueError(f"unknown jet operation {op!r}")


def reexpand_s(a: Jet, new_s0, base, caps: JetCaps) -> Jet:
    """Shift the s-expansion point of ``a`` to ``new_s0`` (exact for the retained polynomial).

    ``base`` is attached to the result unchanged; the caller guarantees it
    names the shifted point.
    """
    if caps.r_max > a.caps.r_max or caps.s_max > a.caps.s_max:
        raise OrderOutOfRange("re-expansion cannot raise the caps")
    delta = np.asarray(new_s0, dtype=float) - a.base[1]
    S = a.caps.s_max
    out = np.zeros(caps.shape + np.broadcast_shapes(a.batch_shape, np.shape(delta)))
    for j in range(caps.s_max + 1):
        for m in range(j, S + 1):
            out[:, j] += a.coeff[: caps.r_max + 1, m] * (math.comb(m, j) * delta ** (m - j))
    return Jet(out, base, caps)
