"""Truncated power series and the moment -> K-function (free cumulant) map.

The K-function of a measure is the functional inverse of its Cauchy
transform near 0::

    K(w) = 1/w + kappa_1 + kappa_2 w + ... + kappa_K w^(K-1)

where ``kappa_k`` are the free cumulants.  They are obtained here by Lagrange
inversion: with ``h(z) = 1 + a_1 z + a_2 z^2 + ...`` built from the moments,
``kappa_1 = a_1`` and ``kappa_{n+1} = -(1/n) [z^(n+1)] h(z)^(-n)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

DEFAULT_ORDER = 32


@dataclass(frozen=True)
class TruncatedSeries:
    """Coefficients ``c_0 .. c_N`` of a power series known modulo ``z^(N+1)``."""

    coeffs: np.ndarray

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.coeffs, dtype=complex))
        if c.ndim != 1 or c.size == 0:
            raise ValueError("series needs at least one coefficient")
        object.__setattr__(self, "coeffs", c)

    @property
    def order(self) -> int:
        return self.coeffs.size - 1

    def __getitem__(self, k):
        return self.coeffs[k]

    def __call__(self, z):
        """Horner evaluation of the truncated polynomial."""
        z = np.asarray(z, dtype=complex)
        out = np.zeros_like(z)
        for c in self.coeffs[::-1]:
            out = out * z + c
        return out

    def truncate(self, order: int) -> "TruncatedSeries":
        return TruncatedSeries(_pad(self.coeffs, order))


def _pad(c, order):
    out = np.zeros(order + 1, dtype=complex)
    n = min(order + 1, c.size)
    out[:n] = c[:n]
    return out


def series_mul(a: TruncatedSeries, b: TruncatedSeries, order: int) -> TruncatedSeries:
    """Cauchy product truncated at ``order``."""
    return TruncatedSeries(_pad(np.convolve(_pad(a.coeffs, order), _pad(b.coeffs, order)), order))


def reciprocal(s: TruncatedSeries, order: int) -> TruncatedSeries:
    c = _pad(s.coeffs, order)
    if c[0] == 0:
        raise ZeroDivisionError("series with zero constant term has no reciprocal")
    r = np.zeros(order + 1, dtype=complex)
    r[0] = 1.0 / c[0]
    for k in range(1, order + 1):
        r[k] = -np.dot(c[1:k + 1], r[k - 1::-1]) / c[0]
    return TruncatedSeries(r)


def series_int_pow(s: TruncatedSeries, k: int, order: int) -> TruncatedSeries:
    """``s**k`` for integer ``k`` (possibly negative), requiring ``c_0 = 1``.

    Uses binary exponentiation; negative powers go through the reciprocal.
    """
    if s.coeffs[0] != 1:
        raise ValueError("series_int_pow requires constant term 1")
    base = reciprocal(s, order) if k < 0 else s.truncate(order)
    k = abs(k)
    result = TruncatedSeries(_pad(np.array([1.0]), order))
    while k:
        if k & 1:
            result = series_mul(result, base, order)
        k >>= 1
        if k:
            base = series_mul(base, base, order)
    return result


def taylor_shift(coeffs, center: complex, order: int) -> TruncatedSeries:
    """Re-expand the polynomial ``sum coeffs[j] w^j`` around ``w = center``.

    Returns the coefficients of ``h^0 .. h^order`` in ``p(center + h)``.
    """
    c = np.asarray(coeffs, dtype=complex)
    out = np.zeros(order + 1, dtype=complex)
    j = np.arange(c.size)
    powers = np.ones(c.size, dtype=complex)
    nz = j > 0
    powers[nz] = center ** j[nz]
    for m in range(min(order, c.size - 1) + 1):
        binom = np.array([math.comb(int(jj), m) for jj in j[m:]], dtype=float)
        # center**(j-m) for j >= m
        pw = powers[: c.size - m]
        out[m] = np.sum(c[m:] * binom * pw)
    return TruncatedSeries(out)


def coefficient_bound(L: float, k: int) -> float:
    """Upper bound ``(2L/k) (4L)^k`` on the modulus of ``kappa_{k+1}``.

    Holds for any probability measure supported in ``[-L, L]``.
    """
    if L <= 0 or k < 1:
        raise ValueError("coefficient_bound needs L > 0 and k >= 1")
    return (2.0 * L / k) * (4.0 * L) ** k


@dataclass(frozen=True, eq=False)
class Component:
    """Exact description of one summand of a K-function.

    The summand is ``copies`` free copies of ``measure`` scaled by ``scale``,
    i.e. it contributes ``copies * scale * K_measure(scale * w)`` to K.
    Kept alongside the cumulant series so that the Cauchy transform can be
    continued analytically beyond the radius where the series is trusted.
    """

    measure: object
    copies: float = 1.0
    scale: float = 1.0


@dataclass(frozen=True, eq=False)
class KFunction:
    """Truncated K-function ``1/w + sum_k kappa_k w^(k-1)``.

    Attributes
    ----------
    cumulants : ndarray
        ``kappa_1 .. kappa_K``.
    validity_radius : float
        The series is trusted for ``|w| < validity_radius``.
    majorants : tuple of (copies, L)
        The coefficient of ``w^k`` is bounded by
        ``sum copies * coefficient_bound(L, k)``; used for truncation tails.
        Empty when no support information is known.
    components : tuple of Component
        Optional exact representation (empty for a bare series).
    """

    cumulants: np.ndarray
    validity_radius: float
    majorants: tuple = ()
    components: tuple = field(default=())

    def __post_init__(self):
        c = np.array(self.cumulants, dtype=float)
        c.setflags(write=False)
        object.__setattr__(self, "cumulants", c)
        if c.ndim != 1 or c.size < 1:
            raise ValueError("KFunction needs at least kappa_1")
        if not self.validity_radius > 0:
            raise ValueError("validity_radius must be positive")

    @property
    def order(self) -> int:
        return self.cumulants.size

    def kappa(self, k: int) -> float:
        """Free cumulant ``kappa_k`` (zero beyond the truncation order)."""
        if k < 1:
            raise ValueError("cumulants are indexed from 1")
        return float(self.cumulants[k - 1]) if k <= self.order else 0.0

    @classmethod
    def semicircle(cls, variance: float = 1.0, order: int = 2) -> "KFunction":
        kap = np.zeros(max(order, 2))
        kap[1] = variance
        return cls(kap, math.inf)

    @classmethod
    def point_mass(cls, c: float, order: int = 2) -> "KFunction":
        kap = np.zeros(max(order, 1))
        kap[0] = c
        return cls(kap, math.inf)

    def regular_part(self, w):
        """``K(w) - 1/w``, evaluated by Horner's rule."""
        w = np.asarray(w, dtype=complex)
        out = np.zeros_like(w)
        for c in self.cumulants[::-1]:
            out = out * w + c
        return out

    def __call__(self, w):
        w = np.asarray(w, dtype=complex)
        return 1.0 / w + self.regular_part(w)

    def derivative(self, w):
        w = np.asarray(w, dtype=complex)
        out = np.zeros_like(w)
        for j in range(self.order - 1, 0, -1):
            out = out * w + j * self.cumulants[j]
        return -1.0 / (w * w) + out

    def tail_bound(self, r):
        """Bound on the omitted terms ``sum_{k >= K} |b_k| r^k`` at ``|w| = r``.

        ``inf`` where the majorant series diverges or no majorant is known.
        """
        r = np.asarray(r, dtype=float)
        if not self.majorants:
            if np.all(self.cumulants[2:] == 0) and math.isinf(self.validity_radius):
                return np.zeros_like(r)
            return np.full_like(r, math.inf)
        K = self.order
        total = np.zeros_like(r)
        for copies, L in self.majorants:
            rho = 4.0 * L * r
            with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
                t = copies * (2.0 * L / K) * rho ** K / (1.0 - rho)
            total = total + np.where(rho < 1.0, t, math.inf)
        return total

    def truncated(self, order: int) -> "KFunction":
        kap = np.zeros(order)
        n = min(order, self.order)
        kap[:n] = self.cumulants[:n]
        return KFunction(kap, self.validity_radius, self.majorants, self.components)


def _estimate_radius(kap: np.ndarray) -> float:
    """Cauchy-Hadamard estimate of the convergence radius of ``sum kappa_k w^(k-1)``."""
    tail = [(k, abs(c)) for k, c in enumerate(kap, start=1) if k >= 3 and abs(c) > 1e-13]
    if not tail:
        return math.inf
    upper = tail[len(tail) // 2:]
    return min(c ** (-1.0 / (k - 1)) for k, c in upper)


def moments_to_kfunction(moments, order: int = DEFAULT_ORDER, support_bound: float | None = None,
                         components: tuple = ()) -> KFunction:
    """Free cumulants from moments by Lagrange inversion.

    Parameters
    ----------
    moments : array_like
        ``a_1 .. a_M`` (the zeroth moment is implicitly 1).
    order : int
        Number ``K`` of cumulants to compute; needs ``K <= M``.
    support_bound : float, optional
        ``L`` with support in ``[-L, L]``.  Sets the validity radius to
        ``1/(4L)``; without it the radius is estimated from the coefficients.
    """
    a = np.asarray(moments, dtype=float)
    if order < 2:
        raise ValueError("order must be at least 2")
    if order > a.size:
        raise ValueError(f"order {order} needs {order} moments, got {a.size}")
    h = TruncatedSeries(np.concatenate([[1.0], a[:order]]))
    kap = np.zeros(order)
    kap[0] = a[0]
    for n in range(1, order):
        coeff = series_int_pow(h, -n, n + 1)[n + 1]
        kap[n] = -coeff.real / n
    if support_bound is not None and support_bound > 0:
        radius = 1.0 / (4.0 * support_bound)
        majorants = ((1.0, float(support_bound)),)
    elif support_bound is not None:
        # point mass at 0: K(w) = 1/w exactly
        radius, majorants = math.inf, ()
    else:
        radius, majorants = _estimate_radius(kap), ()
    return KFunction(kap, radius, majorants, components)
