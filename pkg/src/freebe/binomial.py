"""Closed-form free self-convolutions of a two-point measure.

For ``mu{-1/p} = p``, ``mu{1/q} = q`` the normalized n-fold free
self-convolution has an explicit absolutely continuous part

    f_n(x) = (1/2pi) sqrt(4 - x^2 + 2 s x / sqrt(n) - 1/(pqn))
             / ((1 + x/sqrt(nq/p)) (1 - x/sqrt(np/q)))

with ``s = (p - q)/sqrt(pq)``, supported on ``s/sqrt(n) +- 2 sqrt(1 - 1/n)``.
When ``np < 1`` (or ``nq < 1``) the pole of the denominator carries an atom of
mass ``1 - np`` (``1 - nq``) that the density alone does not account for.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .measures import Cdf, Measure, atomic_measure, kolmogorov_distance, semicircle_distribution

log = logging.getLogger(__name__)

_PANELS = 256
_NODES, _WEIGHTS = np.polynomial.legendre.leggauss(20)


@dataclass(frozen=True)
class BinomialSpec:
    """Two-point law with ``P(-1/p) = p`` and ``P(1/q) = q``."""

    p: float

    def __post_init__(self):
        if not 0.0 < self.p < 1.0:
            raise ValueError(f"p must lie in (0, 1), got {self.p!r}")

    @property
    def q(self) -> float:
        return 1.0 - self.p

    @property
    def skew(self) -> float:
        return (self.p - self.q) / math.sqrt(self.p * self.q)

    @property
    def support_bound(self) -> float:
        """``L`` of the standardized measure."""
        return max(math.sqrt(self.q / self.p), math.sqrt(self.p / self.q))


def binomial_measure(p: float) -> Measure:
    """Atoms ``-1/p`` (mass ``p``) and ``1/q`` (mass ``q``): mean 0, variance ``1/(pq)``."""
    spec = BinomialSpec(p)
    return atomic_measure([(-1.0 / spec.p, spec.p), (1.0 / spec.q, spec.q)])


def binomial_support(spec: BinomialSpec, n: int) -> tuple[float, float]:
    """Endpoints of the support of ``f_n``."""
    c = spec.skew / math.sqrt(n)
    r = 2.0 * math.sqrt(1.0 - 1.0 / n)
    return c - r, c + r


def binomial_atoms(spec: BinomialSpec, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Point masses of the normalized n-fold convolution (possibly none)."""
    p, q = spec.p, spec.q
    xs, ws = [], []
    if n * q < 1.0:
        xs.append(-math.sqrt(n * q / p))
        ws.append(1.0 - n * q)
    if n * p < 1.0:
        xs.append(math.sqrt(n * p / q))
        ws.append(1.0 - n * p)
    return np.array(xs), np.array(ws)


def _denominator(spec: BinomialSpec, n: int, x):
    p, q = spec.p, spec.q
    return (1.0 + x / math.sqrt(n * q / p)) * (1.0 - x / math.sqrt(n * p / q))


def binomial_free_density(spec: BinomialSpec, n: int, x):
    """Density of the absolutely continuous part of the n-fold convolution.

    Zero where the radicand is negative.  At an exact pole of the
    denominator (only possible outside the support) 0 is returned.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    scalar = np.ndim(x) == 0
    x = np.atleast_1d(np.asarray(x, dtype=float))
    rad = 4.0 - x * x + 2.0 * spec.skew * x / math.sqrt(n) - 1.0 / (spec.p * spec.q * n)
    den = _denominator(spec, n, x)
    pole = den == 0
    if np.any(pole & (rad > 0)):
        raise ValueError("pole of the density inside its support")
    if np.any(pole):
        log.info("binomial_free_density evaluated at a pole; returning 0 there")
    with np.errstate(divide="ignore", invalid="ignore"):
        f = np.sqrt(np.maximum(rad, 0.0)) / (2.0 * np.pi * den)
    f = np.where((rad > 0) & ~pole, f, 0.0)
    return float(f[0]) if scalar else f


def _theta_integrand(spec, n, c, r, theta):
    # x = c - r cos(theta) turns the square-root edges into sin^2; the
    # denominator is written in half angles so that a pole sitting on an
    # edge cancels exactly
    alpha = math.sqrt(n * spec.q / spec.p)
    beta = math.sqrt(n * spec.p / spec.q)
    d_lo = max(alpha + c - r, 0.0)
    d_hi = max(beta - c - r, 0.0)
    sh, ch = np.sin(0.5 * theta), np.cos(0.5 * theta)
    g_lo = d_lo + 2.0 * r * sh * sh
    g_hi = d_hi + 2.0 * r * ch * ch
    with np.errstate(invalid="ignore", divide="ignore"):
        out = r * r * 4.0 * sh * sh * ch * ch * alpha * beta / (2.0 * np.pi * g_lo * g_hi)
    # 0/0 only at an edge that coincides with a pole, where the weight is zero
    return np.where(np.isfinite(out), out, 0.0)


def binomial_cdf(spec: BinomialSpec, n: int, panels: int = _PANELS) -> Cdf:
    """Exact distribution function of the n-fold convolution, atoms included.

    The absolutely continuous part is integrated in the angle variable
    ``x = c - r cos(theta)`` with composite 20-point Gauss-Legendre panels.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    lo, hi = binomial_support(spec, n)
    c, r = 0.5 * (lo + hi), 0.5 * (hi - lo)
    ax, aw = binomial_atoms(spec, n)
    edges = np.linspace(0.0, math.pi, panels + 1)
    h = edges[1] - edges[0]
    nodes = edges[:-1, None] + 0.5 * h * (_NODES + 1.0)
    if r > 0:
        panel_int = 0.5 * h * (_theta_integrand(spec, n, c, r, nodes) @ _WEIGHTS)
    else:
        panel_int = np.zeros(panels)
    cum = np.concatenate([[0.0], np.cumsum(panel_int)])

    def ac(x):
        x = np.asarray(x, dtype=float)
        shape = x.shape
        x = x.ravel()
        if r == 0.0:
            return np.zeros(shape)
        theta = np.arccos(np.clip((c - x) / r, -1.0, 1.0))
        j = np.clip(np.floor(theta / h).astype(int), 0, panels - 1)
        a = edges[j]
        part = np.empty_like(theta)
        for s in range(0, theta.size, 65536):
            sl = slice(s, s + 65536)
            d = theta[sl] - a[sl]
            t = a[sl, None] + 0.5 * d[:, None] * (_NODES + 1.0)
            part[sl] = 0.5 * d * (_theta_integrand(spec, n, c, r, t) @ _WEIGHTS)
        return (cum[j] + part).reshape(shape)

    order = np.argsort(ax)
    ax, cw = ax[order], np.concatenate([[0.0], np.cumsum(aw[order])])

    def right(x):
        return np.clip(ac(x) + cw[np.searchsorted(ax, x, side="right")], 0.0, 1.0)

    def left(x):
        return np.clip(ac(x) + cw[np.searchsorted(ax, x, side="left")], 0.0, 1.0)

    support = (min(lo, ax.min(initial=lo)), max(hi, ax.max(initial=hi)))
    return Cdf(right, support, ax.copy(), left)


def binomial_mass(spec: BinomialSpec, n: int) -> float:
    """Total mass of the density part plus atoms (should be 1)."""
    F = binomial_cdf(spec, n)
    return float(F(np.array([F.support[1] + 1.0]))[0])


def binomial_distance(spec: BinomialSpec, n: int) -> float:
    """Kolmogorov distance between the n-fold convolution and the semicircle law."""
    if n < 2:
        raise ValueError("binomial_distance needs n >= 2")
    return kolmogorov_distance(binomial_cdf(spec, n), semicircle_distribution())


def rate_bracket(spec: BinomialSpec, n_ladder) -> tuple[float, float]:
    """``(min, max)`` of ``d_n sqrt(n)`` over the ladder.

    Only meaningful for ``p != q``: for the symmetric law the leading
    ``n^(-1/2)`` term vanishes.
    """
    if spec.p == spec.q:
        raise ValueError("rate_bracket needs p != q")
    ladder = [int(n) for n in n_ladder]
    if len(ladder) < 4:
        raise ValueError("rate_bracket needs a ladder of length >= 4")
    scaled = [binomial_distance(spec, n) * math.sqrt(n) for n in ladder]
    return min(scaled), max(scaled)
