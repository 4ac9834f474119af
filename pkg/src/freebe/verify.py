"""Numerical checks of the quantitative bounds behind the n^(-1/2) rate.

Every check returns a :class:`VerifyReport` whose ``ratio`` is
observed/bound (or bound/observed for lower bounds), so a report passes
iff ``ratio <= 1 + 1e-9``.  Random sampling always goes through a seeded
``numpy.random.Generator`` and the seed is recorded in the report.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .freeconv import (PerturbationError, RecoveryError, measure_from_k, perturbation_coeffs,
                       phi_eval, recover_cauchy, self_convolve_normalized, semicircle_cauchy)
from .measures import Measure, cdf, is_standardized, kolmogorov_distance, semicircle_distribution
from .series import DEFAULT_ORDER, KFunction

log = logging.getLogger(__name__)

RATIO_TOL = 1e-9
THEOREM_C = 2.0 ** 16
SUPPORT_B = 2.0 ** 1.25
DEFAULT_SEED = 42


@dataclass(frozen=True)
class VerifyReport:
    """Outcome of one bound check.

    ``observed`` and ``bound`` are taken at the witness (the worst sample);
    ``ratio`` is how close the inequality came to failing.
    """

    lemma: str
    config: str
    samples: str
    bound: float
    observed: float
    ratio: float
    witness: complex | float | None = None
    seed: int | None = None
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(self.ratio <= 1.0 + RATIO_TOL)


@dataclass(frozen=True)
class RateReport:
    """Kolmogorov distances along an n-ladder and the fitted log-log slope."""

    n_ladder: tuple
    distances: tuple
    slope: float
    L: float
    C: float = THEOREM_C
    errors: dict = field(default_factory=dict)

    @property
    def bounds(self) -> tuple:
        return tuple(self.C * self.L ** 3 / math.sqrt(n) for n in self.n_ladder)

    @property
    def margins(self) -> tuple:
        """``d_n sqrt(n) / (C L^3)``; the theorem asks for all of them to be <= 1."""
        return tuple(d * math.sqrt(n) / (self.C * self.L ** 3)
                     for n, d in zip(self.n_ladder, self.distances))

    @property
    def passed(self) -> bool:
        return not self.errors and all(m <= 1.0 for m in self.margins)


def fit_slope(ns, ds) -> float:
    """Least-squares slope of ``log d`` against ``log n`` (nan for < 2 usable points)."""
    ns, ds = np.asarray(ns, dtype=float), np.asarray(ds, dtype=float)
    ok = np.isfinite(ds) & (ds > 0)
    if ok.sum() < 2:
        return math.nan
    return float(np.polyfit(np.log(ns[ok]), np.log(ds[ok]), 1)[0])


# -- Bai's inequality ---------------------------------------------------------

def gamma_of_c(c: float) -> float:
    """``(1/pi) int_{|u|<c} du/(1+u^2) = (2/pi) arctan c``."""
    if not c > 0:
        raise ValueError("c must be positive")
    return 2.0 / math.pi * math.atan(c)


@dataclass(frozen=True)
class BaiParams:
    A: float
    B: float
    c: float
    gamma: float
    kappa: float
    v: float

    @property
    def prefactor(self) -> float:
        """``1 / (pi (1 - kappa)(2 gamma - 1))``."""
        return 1.0 / (math.pi * (1.0 - self.kappa) * (2.0 * self.gamma - 1.0))

    @property
    def smoothness_term(self) -> float:
        """``4 c^2 v / pi``: the semicircle modulus-of-continuity term."""
        return 4.0 * self.c ** 2 * self.v / math.pi


def bai_params(A: float = 8.0, B: float = SUPPORT_B, c: float = 6.0, v: float = 0.5) -> BaiParams:
    """Constants of Bai's inequality; fails when the bound would be vacuous."""
    if not A > B > 0:
        raise ValueError(f"need A > B > 0, got A={A!r}, B={B!r}")
    if not v > 0:
        raise ValueError("v must be positive")
    gamma = gamma_of_c(c)
    if gamma <= 0.5:
        raise ValueError(f"gamma = {gamma:.6g} <= 1/2; increase c")
    kappa = 4.0 * B / (math.pi * (A - B) * (2.0 * gamma - 1.0))
    if kappa >= 1.0:
        raise ValueError(f"kappa = {kappa:.6g} >= 1; the bound is vacuous")
    return BaiParams(A, B, c, gamma, kappa, v)


def _quad_split(f, a, b, points=(-2.0, 2.0), epsrel=1e-8, epsabs=1e-12, limit=200):
    cuts = [a] + [p for p in points if a < p < b] + [b]
    total = 0.0
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        val, err = integrate.quad(f, lo, hi, epsrel=epsrel, epsabs=epsabs, limit=limit)
        if not np.isfinite(val) or err > max(epsabs, 1e-6 * abs(val)) * 1e3:
            raise RuntimeError(f"quadrature did not converge on [{lo}, {hi}] (err={err:.3g})")
        total += val
    return total


_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)


def panel_quad(f, a, b, points=(-2.0, 2.0), epsrel=1e-8, epsabs=1e-13, start=16,
               max_panels=2 ** 15):
    """Composite Gauss-Legendre quadrature of a vectorized ``f`` over ``[a, b]``.

    The interval is split at ``points`` and the number of panels per piece is
    doubled until two successive estimates agree to ``epsrel`` (or
    ``epsabs``).
    """
    cuts = np.array([a] + [p for p in points if a < p < b] + [b], dtype=float)
    panels = start
    prev = None
    while True:
        edges = np.concatenate([np.linspace(lo, hi, panels + 1)[:-1] for lo, hi in
                                zip(cuts[:-1], cuts[1:])] + [[b]])
        h = np.diff(edges)
        nodes = edges[:-1, None] + 0.5 * h[:, None] * (_GL_X + 1.0)
        vals = np.asarray(f(nodes.ravel()), dtype=float).reshape(nodes.shape)
        cur = float(np.sum(0.5 * h * (vals @ _GL_W)))
        if prev is not None and abs(cur - prev) <= max(epsabs, epsrel * abs(cur)):
            return cur
        if panels >= max_panels:
            raise RuntimeError(f"quadrature did not converge on [{a}, {b}] "
                               f"(last change {abs(cur - prev):.3g})")
        prev = cur
        panels *= 2


def bai_bound_vs_semicircle(GF, params: BaiParams) -> float:
    """Bai's upper bound on ``sup |F - Phi|`` given the Cauchy transform of ``F``.

    ``GF`` maps an array of complex ``z`` on the line ``Im z = params.v`` to
    ``G_F(z)``.
    """
    v = params.v

    def integrand(u):
        z = u + 1j * v
        return np.abs(GF(z) - semicircle_cauchy(z))

    first = panel_quad(integrand, -params.A, params.A)
    return params.prefactor * (first + params.smoothness_term)


def support_premise(m: Measure, B: float = SUPPORT_B, floor: float = 1e-12) -> VerifyReport:
    """Check that ``m`` lives in ``[-B, B]`` (density below ``floor`` outside)."""
    outside = 0.0
    if m.atom_x.size:
        far = np.abs(m.atom_x) > B
        outside = max(outside, float(np.sum(m.atom_w[far])))
    if m.kind == "gridded":
        far = np.abs(m.grid_x) > B
        if np.any(far):
            outside = max(outside, float(np.max(m.grid_f[far])))
    # report as observed/floor so that any mass beyond B fails
    ratio = outside / floor
    return VerifyReport("support", f"B={B:.6g}", "grid nodes and atoms", floor, outside, ratio)


def theorem_constant_report(params: BaiParams | None = None) -> VerifyReport:
    """``prefactor (2^10 + 4 c^2 2^10 / pi) <= 2^16``: the chain behind C."""
    params = params or bai_params()
    smooth = 4.0 * params.c ** 2 * 1024.0 / math.pi
    observed = params.prefactor * (1024.0 + smooth)
    return VerifyReport("theorem_C", "A=8,B=2^(5/4),c=6", "closed form", THEOREM_C, observed,
                        observed / THEOREM_C,
                        details={"gamma": params.gamma, "kappa": params.kappa,
                                 "prefactor": params.prefactor, "smoothness_coeff": smooth})


# -- phi_n and semicircle transform bounds ------------------------------------

def _disc_samples(rng, radius, count):
    r = radius * np.sqrt(rng.random(count))
    th = 2.0 * np.pi * rng.random(count)
    return r * np.exp(1j * th)


def verify_phi_size(m: Measure, n: int, samples=None, count: int = 500, seed: int = DEFAULT_SEED,
                    order: int = DEFAULT_ORDER) -> VerifyReport:
    """``|phi_n(w)| <= 32 L^3 |w|^2 / sqrt(n)`` on the disc ``|w| < sqrt(n)/(8L)``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    k = self_convolve_normalized(m, n, order)
    L = m.support_bound
    radius = math.sqrt(n) / (8.0 * L) if L > 0 else math.inf
    if samples is None:
        rng = np.random.default_rng(seed)
        r = min(radius, 1e3)
        w = _disc_samples(rng, r * (1.0 - 1e-12), count)
        desc = f"{count} uniform points in |w|<{r:.6g}"
    else:
        w = np.asarray(samples, dtype=complex).ravel()
        if np.any(np.abs(w) >= radius):
            raise ValueError("sample outside the holomorphy disc")
        desc, seed = f"{w.size} given points", None
    w = w[w != 0]
    phi = np.abs(phi_eval(k, w))
    bound = 32.0 * L ** 3 * np.abs(w) ** 2 / math.sqrt(n)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(bound > 0, phi / bound, np.where(phi > 0, np.inf, 0.0))
    i = int(np.argmax(ratio))
    return VerifyReport("phi_size", f"n={n},L={L:.6g}", desc, float(bound[i]), float(phi[i]),
                        float(ratio[i]), complex(w[i]), seed)


def gsc_samples(count: int = 10_000, seed: int = DEFAULT_SEED, u_range=(-8.0, 8.0),
                extremal: int = 200):
    """Random points with ``Im z in (0, 2)`` plus the two extremal curves."""
    rng = np.random.default_rng(seed)
    u = rng.uniform(*u_range, count)
    v = 2.0 * rng.random(count)
    v = np.where(v == 0, 1e-12, v)
    ve = np.geomspace(1e-8, 2.0 - 1e-6, extremal)
    axis = 1j * ve
    edge = np.concatenate([np.sqrt(4.0 - ve ** 2) + 1j * ve, -np.sqrt(4.0 - ve ** 2) + 1j * ve])
    return u + 1j * v, axis, edge


def verify_gsc_size(count: int = 10_000, seed: int = DEFAULT_SEED) -> tuple[VerifyReport, VerifyReport]:
    """``|G_Phi(z)| <= 1`` and ``|z - 2 G_Phi(z)| >= 2 sqrt(Im z)`` for ``Im z in (0, 2)``."""
    rand, axis, edge = gsc_samples(count, seed)
    desc = f"{count} random + {axis.size} on z=iv + {edge.size} on z=+-sqrt(4-v^2)+iv"
    z = np.concatenate([rand, axis, edge])

    g = semicircle_cauchy(z)
    mod = np.abs(g)
    i = int(np.argmax(mod))
    first = VerifyReport("gsc_modulus", "semicircle", desc, 1.0, float(mod[i]), float(mod[i]),
                         complex(z[i]), seed,
                         details={"axis_sup": float(np.max(np.abs(semicircle_cauchy(axis))))})

    gap = np.abs(z - 2.0 * g)
    low = 2.0 * np.sqrt(z.imag)
    ratio = low / gap
    j = int(np.argmax(ratio))
    edge_ratio = low[-edge.size:] / gap[-edge.size:]
    second = VerifyReport("gsc_gap", "semicircle", desc, float(low[j]), float(gap[j]),
                          float(ratio[j]), complex(z[j]), seed,
                          details={"edge_min_ratio": float(np.min(edge_ratio))})
    return first, second


def j_integrand(u, v):
    return ((u * u - 4.0) ** 2 + 2.0 * (u * u + 4.0) * v * v + v ** 4) ** -0.25


def verify_j_integral(v: float) -> float:
    """``int_{-8}^{8} [(u^2-4)^2 + 2(u^2+4)v^2 + v^4]^(-1/4) du`` (claimed < 24)."""
    if not 0.0 < v < 1.0:
        raise ValueError("v must lie in (0, 1)")
    # symmetric in u; split at the near-singular point u = 2
    val = 2.0 * _quad_split(lambda u: j_integrand(u, v), 0.0, 8.0, points=(2.0,), epsrel=1e-10)
    return val


def j_integral_report(v: float) -> VerifyReport:
    val = verify_j_integral(v)
    return VerifyReport("j_integral", f"v={v:.6g}", "adaptive quadrature", 24.0, val, val / 24.0, v)


# -- c_k integrals and Cauchy closeness ---------------------------------------

def _is_semicircle(k: KFunction) -> bool:
    phi = k.cumulants.copy()
    if phi.size > 1:
        phi[1] -= 1.0
    return bool(np.all(np.abs(phi) < 1e-15))


def _ck_moduli(k: KFunction, u: float, v: float, kmax: int):
    try:
        return np.abs(perturbation_coeffs(k, complex(u, v), kmax).coeffs)
    except PerturbationError:
        return None


def _analytic_ik(k, v, n, L):
    return 12.0 / k * v ** 1.5 * (512.0 * L ** 3 / (v * math.sqrt(n))) ** k


def closeness_v(L: float, n: int) -> float:
    return 1024.0 * L ** 3 / math.sqrt(n)


def verify_ck_bounds(m: Measure, n: int, v: float | None = None, kmax: int = 8,
                     order: int = DEFAULT_ORDER) -> list[VerifyReport]:
    """Integrals ``I_k = int_{-8}^{8} |c_k(u + iv)| du`` against their bounds.

    Returns three reports: ``I_1 <= 768 L^3/sqrt(n)``,
    ``I_2 <= 2^14 L^(9/2) log(15 sqrt(n)/(256 L^3)) / n^(3/4)`` and
    ``sum_{k>=3} I_k <= (3/2) v^(3/2)``.  The last sum is ``I_3 .. I_kmax``
    computed numerically plus the analytic bound for ``k > kmax``.
    Points where ``phi_n(G_Phi) = 0`` are excluded and counted.
    """
    L = m.support_bound
    v = closeness_v(L, n) if v is None else v
    if not 0.0 < v < 1.0:
        raise ValueError(f"v = {v:.6g} must lie in (0, 1); increase n")
    k = self_convolve_normalized(m, n, order)
    cfg = f"n={n},L={L:.6g},v={v:.6g}"
    b1 = 768.0 * L ** 3 / math.sqrt(n)
    b2 = 2.0 ** 14 * L ** 4.5 * math.log(15.0 * math.sqrt(n) / (256.0 * L ** 3)) / n ** 0.75
    b3 = 1.5 * v ** 1.5

    if _is_semicircle(k):
        ik = np.zeros(kmax)
        excluded = 0
    else:
        excluded = 0
        cache = {}

        def moduli(u):
            nonlocal excluded
            if u not in cache:
                r = _ck_moduli(k, u, v, kmax)
                if r is None:
                    excluded += 1
                    r = np.zeros(kmax)
                cache[u] = r
            return cache[u]

        ik = np.array([_quad_split(lambda u, j=j: moduli(u)[j], -8.0, 8.0, epsrel=1e-8)
                       for j in range(kmax)])
        if excluded:
            log.info("verify_ck_bounds: %d evaluation points excluded (phi(G_Phi) = 0)", excluded)

    ratio_tail = 512.0 * L ** 3 / (v * math.sqrt(n))
    tail = 0.0
    if ratio_tail < 1.0:
        tail = sum(_analytic_ik(j, v, n, L) for j in range(kmax + 1, kmax + 400))
    else:
        tail = math.inf
    rest = float(np.sum(ik[2:]) + tail)
    details = {"I": ik.tolist(), "tail_bound": tail, "excluded": excluded}
    desc = "adaptive quadrature over [-8, 8] split at +-2"
    return [
        VerifyReport("ck_I1", cfg, desc, b1, float(ik[0]), float(ik[0] / b1), v, details=details),
        VerifyReport("ck_I2", cfg, desc, b2, float(ik[1]), float(ik[1] / b2), v, details=details),
        VerifyReport("ck_I3plus", cfg, desc, b3, rest, rest / b3, v, details=details),
    ]


def closeness_integral(k: KFunction, v: float) -> float:
    """``int_{-8}^{8} |G_n(u + iv) - G_Phi(u + iv)| du`` with the recovered ``G_n``."""

    def integrand(u):
        z = u + 1j * v
        return np.abs(recover_cauchy(k, z) - semicircle_cauchy(z))

    return panel_quad(integrand, -8.0, 8.0)


def verify_cauchy_closeness(m: Measure, n: int, v: float | None = None,
                            order: int = DEFAULT_ORDER) -> VerifyReport:
    """``int_{-8}^{8} |G_n - G_Phi| du <= 2^10 L^3 / sqrt(n)`` at ``v = 2^10 L^3/sqrt(n)``."""
    L = m.support_bound
    v = closeness_v(L, n) if v is None else v
    if not 0.0 < v < 1.0:
        raise ValueError(f"v = {v:.6g} must lie in (0, 1); increase n")
    k = self_convolve_normalized(m, n, order)
    bound = 1024.0 * L ** 3 / math.sqrt(n)
    val = 0.0 if _is_semicircle(k) else closeness_integral(k, v)
    return VerifyReport("closeness", f"n={n},L={L:.6g},v={v:.6g}",
                        "adaptive quadrature over [-8, 8] split at +-2", bound, val, val / bound, v)


# -- rate experiment -----------------------------------------------------------

def rate_experiment(m: Measure, n_ladder, order: int = DEFAULT_ORDER, eps: float | None = None,
                    C: float = THEOREM_C) -> RateReport:
    """Kolmogorov distance of the normalized n-fold convolution to the semicircle law.

    Failures at individual ``n`` are recorded in ``errors`` (distance nan)
    rather than aborting the ladder.
    """
    ladder = [int(n) for n in n_ladder]
    if any(n < 1 for n in ladder) or ladder != sorted(ladder):
        raise ValueError("n_ladder must be ascending with every n >= 1")
    if not is_standardized(m):
        raise ValueError("rate_experiment needs a standardized measure")
    target = semicircle_distribution()
    ds, errors = [], {}
    kwargs = {} if eps is None else {"eps": eps}
    for n in ladder:
        try:
            mn = measure_from_k(self_convolve_normalized(m, n, order), **kwargs)
            ds.append(kolmogorov_distance(cdf(mn), target))
        except (RecoveryError, ValueError) as exc:
            errors[n] = str(exc)
            ds.append(math.nan)
    return RateReport(tuple(ladder), tuple(ds), fit_slope(ladder, ds), m.support_bound, C, errors)


# -- CSV ------------------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def write_verify_csv(reports, fh) -> None:
    """One row per report: config, lemma, bound, observed, ratio, pass."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["config", "lemma", "bound", "observed", "ratio", "pass"])
    for r in reports:
        w.writerow([r.config, r.lemma, _fmt(r.bound), _fmt(r.observed), _fmt(r.ratio), _fmt(r.passed)])


def write_rate_csv(report: RateReport, fh) -> None:
    """Rows ``n, d_n, bound, margin`` followed by a ``slope`` footer row."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["n", "d_n", "bound", "margin"])
    for n, d, b, mg in sorted(zip(report.n_ladder, report.distances, report.bounds, report.margins)):
        w.writerow([str(n), _fmt(d), _fmt(b), _fmt(mg)])
    w.writerow(["slope", "" if math.isnan(report.slope) else _fmt(report.slope), "", ""])
