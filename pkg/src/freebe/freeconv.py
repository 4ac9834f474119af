"""Free additive convolution through K-functions.

Cauchy transforms are recovered from a K-function by solving ``K(G) = z``.
Two routes exist:

* the *series* route runs Newton directly on the truncated Laurent series;
  it is used wherever the solution lies inside the validity disc and the
  truncation tail is negligible;
* the *exact* route is used otherwise and needs the K-function to carry its
  :class:`~freebe.series.Component` list.  Writing ``omega_j = K_j(a_j G)``
  for every component turns ``K(G) = z`` into a small system in the
  ``omega_j`` that only involves the components' Cauchy transforms, which are
  known everywhere in the upper half-plane.  This is the analytic
  continuation of the series beyond its disc of convergence.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass

import numpy as np

from .measures import Measure, gridded_measure, is_standardized, moments
from .series import (DEFAULT_ORDER, Component, KFunction, TruncatedSeries,
                     moments_to_kfunction, reciprocal, series_int_pow, series_mul,
                     taylor_shift)

log = logging.getLogger(__name__)

DEFAULT_EPS = 1e-6
NEWTON_TOL = 1e-12
MAX_NEWTON = 60
SERIES_TAIL_TOL = 1e-12
_CHUNK = 256


class RecoveryError(RuntimeError):
    """Newton/continuation failed to recover the Cauchy transform."""

    def __init__(self, message, z=None, residual=None):
        super().__init__(message)
        self.z = z
        self.residual = residual


class PerturbationError(ValueError):
    """The t-expansion is undefined (phi vanishes at G_semicircle(z))."""


@dataclass(frozen=True)
class EvalLine:
    """Horizontal segment ``{u + i v : u_min <= u <= u_max}``."""

    v: float
    u_min: float
    u_max: float
    points: int

    def __post_init__(self):
        if not self.v > 0:
            raise ValueError("EvalLine needs v > 0")
        if not self.u_min < self.u_max:
            raise ValueError("EvalLine needs u_min < u_max")
        if self.points < 2:
            raise ValueError("EvalLine needs at least 2 points")

    @property
    def u(self) -> np.ndarray:
        return np.linspace(self.u_min, self.u_max, self.points)

    @property
    def z(self) -> np.ndarray:
        return self.u + 1j * self.v


def _as_upper(z, allow_real=False):
    z = np.asarray(z, dtype=complex)
    bad = z.imag < 0 if allow_real else z.imag <= 0
    if np.any(bad):
        raise ValueError("Cauchy transforms are evaluated for Im z > 0 only")
    return z


# -- Cauchy transforms of concrete measures ----------------------------------

def _gridded_parts(x, f):
    t0, t1 = x[:-1], x[1:]
    dx = t1 - t0
    return t0, t1, dx, f[:-1], (f[1:] - f[:-1]) / dx


def _gridded_cauchy(x, f, z, derivative=False):
    """Exact Cauchy transform of the piecewise-linear density (and its z-derivative)."""
    t0, t1, dx, f0, slope = _gridded_parts(x, f)
    flat = z.ravel()
    out = np.empty_like(flat)
    dout = np.empty_like(flat) if derivative else None
    for s in range(0, flat.size, _CHUNK):
        zz = flat[s:s + _CHUNK, None]
        a = zz - t0
        b = zz - t1
        lg = np.log1p(dx / b)          # log((z - t0) / (z - t1))
        out[s:s + _CHUNK] = np.sum(f0 * lg + slope * (a * lg - dx), axis=1)
        if derivative:
            dlg = -dx / (a * b)
            dout[s:s + _CHUNK] = np.sum(f0 * dlg + slope * (lg + a * dlg), axis=1)
    if derivative:
        return out.reshape(z.shape), dout.reshape(z.shape)
    return out.reshape(z.shape)


def _cauchy_and_derivative(m: Measure, z):
    g = np.zeros_like(z)
    dg = np.zeros_like(z)
    if m.atom_x.size:
        d = z[..., None] - m.atom_x
        g = g + np.sum(m.atom_w / d, axis=-1)
        dg = dg - np.sum(m.atom_w / (d * d), axis=-1)
    if m.kind == "gridded":
        gg, gd = _gridded_cauchy(m.grid_x, m.grid_f, z, derivative=True)
        g, dg = g + gg, dg + gd
    return g, dg


def _reciprocal_shift(m: Measure, z, g):
    """``1/G(z) - z`` without the cancellation of the two large terms.

    Uses ``1 - z G(z) = -int t dm(t) / (z - t)``; exact for atoms, direct
    subtraction otherwise.
    """
    if m.kind == "gridded":
        return 1.0 / g - z
    return -np.sum(m.atom_w * m.atom_x / (z[..., None] - m.atom_x), axis=-1) / g


def cauchy_transform(m: Measure, z):
    """Cauchy transform ``G(z) = int dm(t) / (z - t)`` for ``Im z > 0``.

    Atoms are summed exactly; a gridded density is integrated exactly as the
    piecewise-linear interpolant of its samples.
    """
    scalar = np.ndim(z) == 0
    z = _as_upper(z)
    g = np.zeros_like(z)
    if m.atom_x.size:
        g = g + np.sum(m.atom_w / (z[..., None] - m.atom_x), axis=-1)
    if m.kind == "gridded":
        g = g + _gridded_cauchy(m.grid_x, m.grid_f, z)
    return complex(g) if scalar else g


def semicircle_cauchy(z):
    """Cauchy transform of the standard semicircle law, ``(z - sqrt(z^2 - 4)) / 2``.

    Of the two roots of ``G^2 - z G + 1 = 0`` the one of modulus <= 1 is
    taken (ties broken by ``Im G <= 0``); this is the branch with ``G ~ 1/z``
    and ``Im G < 0``.  Real ``z`` is read as the boundary value from above.
    """
    scalar = np.ndim(z) == 0
    z = _as_upper(z, allow_real=True)
    s = np.sqrt(z * z - 4.0)
    g1 = 0.5 * (z - s)
    g2 = 0.5 * (z + s)
    a1, a2 = np.abs(g1), np.abs(g2)
    tie = np.isclose(a1, a2, rtol=1e-13, atol=0.0)
    pick1 = np.where(tie, g1.imag <= g2.imag, a1 < a2)
    g = np.where(pick1, g1, g2)
    return complex(g) if scalar else g


# -- K-function constructors --------------------------------------------------

def kfunction_from_measure(m: Measure, order: int = DEFAULT_ORDER) -> KFunction:
    """K-function of ``m`` (cumulants by Lagrange inversion, exact component kept)."""
    return moments_to_kfunction(moments(m, order), order, m.support_bound,
                                components=(Component(m, 1.0, 1.0),))


def free_convolve(k1: KFunction, k2: KFunction) -> KFunction:
    """K-function of the free convolution: ``K_1 + K_2 - 1/w``.

    Cumulants add termwise; differing orders are truncated to the smaller.
    """
    order = min(k1.order, k2.order)
    kap = k1.cumulants[:order] + k2.cumulants[:order]
    comps = k1.components + k2.components if (k1.components and k2.components) else ()
    return KFunction(kap, min(k1.validity_radius, k2.validity_radius),
                     k1.majorants + k2.majorants if (k1.majorants and k2.majorants) else (),
                     comps)


def self_convolve_normalized(m: Measure, n: int, order: int = DEFAULT_ORDER) -> KFunction:
    """K-function of the n-fold free self-convolution of ``m`` rescaled by ``1/sqrt(n)``.

    ``m`` must have mean 0 and variance 1.  Cumulants scale as
    ``kappa_k n^((2-k)/2)``; the validity radius is ``sqrt(n) / (8L)``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not is_standardized(m):
        raise ValueError("self_convolve_normalized needs a standardized measure (mean 0, variance 1)")
    L = m.support_bound
    base = moments_to_kfunction(moments(m, order), order, L)
    k = np.arange(1, order + 1)
    kap = base.cumulants * float(n) ** ((2.0 - k) / 2.0)
    sq = math.sqrt(n)
    return KFunction(kap, sq / (8.0 * L), ((float(n), L / sq),),
                     (Component(m, float(n), 1.0 / sq),))


def phi_eval(k: KFunction, w):
    """Deviation ``K(w) - w - 1/w`` from the semicircle K-function."""
    scalar = np.ndim(w) == 0
    w = np.asarray(w, dtype=complex)
    if np.any(np.abs(w) >= k.validity_radius):
        raise ValueError("phi_eval: |w| outside the validity radius")
    out = k.regular_part(w) - w
    return complex(out) if scalar else out


# -- Newton machinery ---------------------------------------------------------

def _newton(fun, x0, idx, feasible, tol, maxiter=MAX_NEWTON):
    """Damped Newton for batches of small systems.

    ``fun(x, idx)`` returns residuals ``F`` of shape (m, J) and Jacobians
    (m, J, J) for the points ``idx``.  A step is halved while the
    simplified Newton correction does not shrink or the iterate leaves the
    feasible set.
    """
    x = x0.copy()
    F, Jm = fun(x, idx)
    res = np.linalg.norm(F, axis=1)
    conv = res < tol
    for _ in range(maxiter):
        act = np.flatnonzero(~conv & np.isfinite(res))
        if act.size == 0:
            break
        with np.errstate(all="ignore"):
            step = np.linalg.solve(Jm[act], F[act][..., None])[..., 0]
        bad = ~np.all(np.isfinite(step), axis=1)
        res[act[bad]] = np.nan
        act, step = act[~bad], step[~bad]
        lam = np.ones(act.size)
        snorm = np.linalg.norm(step, axis=1)
        pending = np.ones(act.size, dtype=bool)
        for _h in range(30):
            sel = np.flatnonzero(pending)
            if sel.size == 0:
                break
            ids = act[sel]
            trial = x[ids] - lam[sel, None] * step[sel]
            with np.errstate(all="ignore"):
                Ft, Jt = fun(trial, idx[ids])
            rt = np.linalg.norm(Ft, axis=1)
            # natural monotonicity test: affine invariant, unlike |F| itself
            with np.errstate(all="ignore"):
                simp = np.linalg.solve(Jm[ids], Ft[..., None])[..., 0]
            mono = np.linalg.norm(simp, axis=1) < (1 - lam[sel] / 4) * snorm[sel]
            ok = feasible(trial) & np.isfinite(rt) & (mono | (rt < tol))
            acc = sel[ok]
            x[act[acc]] = trial[ok]
            F[act[acc]] = Ft[ok]
            Jm[act[acc]] = Jt[ok]
            res[act[acc]] = rt[ok]
            pending[acc] = False
            lam[sel[~ok]] *= 0.5
        # no admissible step at all: stagnated
        res[act[pending]] = np.where(res[act[pending]] < 1e3 * tol, res[act[pending]], np.nan)
        conv = res < tol
    return x, conv, res


def _adaptive_step(fun, feasible, level, x, idx, s0, s1, tol, min_frac=2.0 ** -12,
                   max_rounds=200):
    """Advance points ``idx`` from ladder position ``s0`` to ``s1`` with step control.

    The step halves on a failed solve and doubles after a success.  ``x`` is
    updated in place; returns a mask of points that reached ``s1``.
    """
    full = s1 - s0
    pos = np.full(idx.size, s0)
    ds = np.full(idx.size, full / 2)
    ok = np.zeros(idx.size, dtype=bool)
    dead = np.zeros(idx.size, dtype=bool)
    for _ in range(max_rounds):
        act = np.flatnonzero(~ok & ~dead)
        if act.size == 0:
            break
        target = np.minimum(pos[act] + ds[act], s1)
        ids = idx[act]
        zs = level(target, ids)
        xn, c, _ = _newton(lambda xx, ii: fun(xx, zs[np.searchsorted(ids, ii)]), x[ids], ids,
                           feasible, tol)
        win = act[c]
        x[idx[win]] = xn[c]
        pos[win] = target[c]
        ds[win] = np.minimum(2 * ds[win], full)
        ok[win] = pos[win] >= s1
        lose = act[~c]
        ds[lose] *= 0.5
        dead[lose] = ds[lose] < min_frac * full
    return ok


def _continuation(fun, init, feasible, z, top, tol, min_steps=8, ratio=3.0):
    """Track solutions from height ``top`` down to ``Im z`` along a geometric ladder."""
    v = z.imag
    top = np.maximum(top, v)
    span = np.log(top / v)
    steps = max(min_steps, int(math.ceil(span.max() / math.log(ratio))) if span.size else 0)
    idx = np.arange(z.size)

    def level(s, ii=idx):
        return z.real[ii] + 1j * np.exp((1 - s) * np.log(top[ii]) + s * np.log(v[ii]))

    x = init(level(0.0))
    zl = level(0.0)
    x, conv, _ = _newton(lambda xx, ii: fun(xx, zl[ii]), x, idx, feasible, tol)
    alive = conv.copy()
    for j in range(1, steps + 1):
        s0, s1 = (j - 1) / steps, j / steps
        live = np.flatnonzero(alive)
        if live.size == 0:
            break
        zl = level(s1)
        xn, conv, _ = _newton(lambda xx, ii: fun(xx, zl[ii]), x[live], live, feasible, tol)
        x[live[conv]] = xn[conv]
        retry = live[~conv]
        if retry.size:
            ok = _adaptive_step(fun, feasible, level, x, retry, s0, s1, tol)
            alive[retry[~ok]] = False
    F, _ = fun(x, z) if x.size else (np.zeros((0, 1)), None)
    res = np.linalg.norm(F, axis=1) if x.size else np.zeros(0)
    return x, alive & (res < 10 * tol), res


# -- series route -------------------------------------------------------------

def _series_system(k: KFunction):
    def fun(x, z):
        g = x[:, 0]
        F = (k(g) - z)[:, None]
        J = k.derivative(g)[:, None, None]
        return F, J
    return fun


def _semicircle_guess(k: KFunction, z):
    sigma = math.sqrt(k.kappa(2)) if k.kappa(2) > 0 else 1.0
    zz = (z - k.kappa(1)) / sigma
    zz = np.where(zz.imag <= 0, zz.real + 1e-300j, zz)
    return semicircle_cauchy(zz) / sigma


def _series_solve(k: KFunction, z, continuation: bool = True):
    fun = _series_system(k)
    scale = 1.0 + np.abs(z)

    def feasible(x):
        return (x[:, 0].imag < 0) & (np.abs(x[:, 0]) < k.validity_radius)

    def fun_scaled(x, ii):
        F, J = fun(x, z[ii])
        return F / scale[ii, None], J / scale[ii, None, None]

    x0 = _semicircle_guess(k, z)[:, None]
    x, conv, _ = _newton(fun_scaled, x0, np.arange(z.size), feasible, NEWTON_TOL)
    g = x[:, 0]
    failed = np.flatnonzero(~conv)
    if failed.size and continuation:
        zf = z[failed]
        xc, cc, _ = _continuation(fun, lambda zl: _semicircle_guess(k, zl)[:, None],
                                  feasible, zf, zf.imag + 4.0,
                                  NEWTON_TOL * (1.0 + np.abs(zf).max()))
        g[failed] = xc[:, 0]
        conv[failed] = cc
    return g, conv


# -- exact route --------------------------------------------------------------

def _exact_system(k: KFunction):
    comps = k.components
    J = len(comps)
    T = sum(c.copies for c in comps)
    t = np.array([c.copies for c in comps])
    a = np.array([c.scale for c in comps])

    def fun(x, z):
        # reciprocal form h_j = a_j / G_j(x_j) stays bounded near atoms
        m = x.shape[0]
        h = np.empty_like(x)
        dh = np.empty_like(x)
        shift = np.zeros(m, dtype=complex)
        for j, c in enumerate(comps):
            g, d = _cauchy_and_derivative(c.measure, x[:, j])
            h[:, j] = a[j] / g
            dh[:, j] = -a[j] * d / (g * g)
            shift += t[j] * a[j] * _reciprocal_shift(c.measure, x[:, j], g)
        F = np.empty_like(x)
        Jm = np.zeros((m, J, J), dtype=complex)
        # sum_j t_j a_j x_j - (T - 1) h_0 - z, regrouped so that large x_j and
        # h_j never cancel: sum_j t_j (a_j x_j - h_j) + sum_j t_j (h_j - h_0) + h_0 - z
        F[:, 0] = h[:, 0] - shift - z
        for j in range(1, J):
            F[:, 0] += t[j] * (h[:, j] - h[:, 0])
        Jm[:, 0, :] = t * a
        Jm[:, 0, 0] -= (T - 1.0) * dh[:, 0]
        for j in range(1, J):
            F[:, j] = h[:, j] - h[:, 0]
            Jm[:, j, j] = dh[:, j]
            Jm[:, j, 0] = -dh[:, 0]
        # relative residual: near real zeros of G both h and x grow like 1/Im z
        s = 1.0 + np.abs(h[:, 0]) + np.abs(x).max(axis=1)
        return F / s[:, None], Jm / s[:, None, None]

    def G_of(x):
        g, _ = _cauchy_and_derivative(comps[0].measure, x[:, 0])
        return g / a[0]

    return fun, G_of


def _component_stats(k: KFunction):
    mean_tot, var_tot, spread = 0.0, 0.0, 0.0
    means = []
    for c in k.components:
        mu_moms = moments(c.measure, 2)
        mu, var = float(mu_moms[0]), float(mu_moms[1] - mu_moms[0] ** 2)
        means.append(mu)
        mean_tot += c.copies * c.scale * mu
        var_tot += c.copies * c.scale ** 2 * var
        spread += c.scale * c.measure.support_bound
    return mean_tot, var_tot, spread, np.array(means)


def _exact_solve(k: KFunction, z):
    fun, G_of = _exact_system(k)
    a = np.array([c.scale for c in k.components])
    mean_tot, var_tot, spread, means = _component_stats(k)
    top = 4.0 + 2.0 * (math.sqrt(max(var_tot, 0.0)) + spread)

    def init(zl):
        return (zl[:, None] - mean_tot) / a + means

    def feasible(x):
        return np.all(x.imag > 0, axis=1)

    tol = NEWTON_TOL * (1.0 + np.abs(z).max(initial=0.0) + top)
    x, conv, res = _continuation(fun, init, feasible, z, np.full(z.shape, top), tol)
    return G_of(x), conv, res


# -- recovery -----------------------------------------------------------------

def recover_cauchy(k: KFunction, z, route: str = "auto"):
    """Solve ``K(G) = z`` for the Cauchy transform ``G`` in the lower half-plane.

    Parameters
    ----------
    k : KFunction
    z : complex or array of complex, ``Im z > 0``
    route : {"auto", "series", "exact"}
        ``auto`` uses the series where it is trusted and the exact
        component route elsewhere.

    Raises
    ------
    RecoveryError
        If no route converges for some ``z``.
    """
    scalar = np.ndim(z) == 0
    z = _as_upper(z).ravel() if not scalar else _as_upper(np.array([z], dtype=complex))
    G = np.full(z.shape, np.nan + 0j)
    done = np.zeros(z.shape, dtype=bool)

    if route in ("auto", "series"):
        try_idx = np.arange(z.size)
        if route == "auto" and k.components:
            # with an exact fallback, only try points whose start is already trusted
            g0 = np.abs(_semicircle_guess(k, z))
            inside = g0 < 0.9 * k.validity_radius
            if k.majorants:
                inside &= k.tail_bound(g0) <= SERIES_TAIL_TOL
            try_idx = np.flatnonzero(inside)
        if try_idx.size:
            gs, conv = _series_solve(k, z[try_idx], continuation=not k.components)
            good = conv & (gs.imag < 0) & (np.abs(gs) < k.validity_radius)
            if k.majorants:
                good &= k.tail_bound(np.abs(gs)) <= SERIES_TAIL_TOL
            G[try_idx[good]] = gs[good]
            done[try_idx[good]] = True
    rest = np.flatnonzero(~done)
    if rest.size:
        if route == "series" or not k.components:
            raise RecoveryError(
                f"series route failed at {rest.size} point(s) (outside validity radius "
                f"{k.validity_radius:.4g} or no convergence); first z={z[rest[0]]!r}",
                z=z[rest])
        ge, conv, res = _exact_solve(k, z[rest])
        if not np.all(conv):
            bad = rest[~conv]
            raise RecoveryError(
                f"continuation failed at {bad.size} point(s); first z={z[bad[0]]!r}, "
                f"residual={res[~conv][0]!r}", z=z[bad], residual=res[~conv])
        G[rest] = ge
    if scalar:
        return complex(G[0])
    return G


# -- Stieltjes inversion ------------------------------------------------------

def _atom_candidates(k: KFunction):
    per = []
    for c in k.components:
        xs = np.asarray(c.measure.atom_x)
        if xs.size == 0:
            return np.zeros(0)
        per.append(c.copies * c.scale * xs)
    if not per:
        return np.zeros(0)
    total = 1
    for p in per:
        total *= p.size
    if total > 10_000:
        log.warning("too many atom candidates (%d); skipping atom detection", total)
        return np.zeros(0)
    return np.unique([sum(combo) for combo in itertools.product(*per)])


def find_atoms(k: KFunction, min_mass: float = 1e-9):
    """Locate point masses of the measure behind ``k``.

    Candidate positions come from the atoms of the components.  The mass at
    ``x0`` is read off as ``Re(i eps G(x0 + i eps))``; it is accepted only if
    it does not change between ``eps = 1e-7`` and ``eps = 1e-9`` (an
    inverse square-root edge would shrink by a factor of 10).
    """
    cand = _atom_candidates(k)
    if cand.size == 0 or not k.components:
        return np.zeros(0), np.zeros(0)
    coarse = (1e-7j * recover_cauchy(k, cand + 1e-7j, route="exact")).real
    fine = (1e-9j * recover_cauchy(k, cand + 1e-9j, route="exact")).real
    keep = (fine > min_mass) & (np.abs(fine - coarse) <= 1e-3 * np.abs(fine))
    return cand[keep], fine[keep]


def stieltjes_density(k: KFunction, x, eps: float = DEFAULT_EPS, atoms=None):
    """Density ``-(1/pi) Im G(x + i 0)`` of the absolutely continuous part.

    ``G`` is evaluated at ``eps`` and ``eps/2`` and extrapolated linearly to
    zero; point masses (``atoms = (positions, masses)``, detected when not
    given) are subtracted exactly before taking the imaginary part.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    scalar = np.ndim(x) == 0
    x = np.atleast_1d(np.asarray(x, dtype=float))
    ax, am = find_atoms(k) if atoms is None else atoms

    def dens(e):
        z = x + 1j * e
        g = recover_cauchy(k, z)
        if len(ax):
            g = g - np.sum(np.asarray(am) / (z[:, None] - np.asarray(ax)), axis=1)
        return -g.imag / np.pi

    out = np.maximum(2.0 * dens(0.5 * eps) - dens(eps), 0.0)
    return float(out[0]) if scalar else out


def default_grid(k: KFunction, points: int = 2049):
    """Grid ``(lo, hi, points)`` expected to cover the support of ``k``'s measure."""
    center = k.kappa(1)
    sigma = math.sqrt(max(k.kappa(2), 0.0))
    if k.components:
        _, _, spread, _ = _component_stats(k)
        hard = sum(c.copies * c.scale * c.measure.support_bound for c in k.components)
        half = min(2.0 * sigma + spread, hard)
    else:
        half = 2.0 * sigma
    half = 1.1 * half + 0.1
    return center - half, center + half, points


def measure_from_k(k: KFunction, grid=None, eps: float = DEFAULT_EPS, tol: float = 1e-9,
                   max_points: int = 400_000, max_passes: int = 60) -> Measure:
    """Sample the measure behind ``k`` as a gridded density plus atoms.

    Starting from a uniform grid, intervals whose trapezoid and two-panel
    estimates differ by more than ``tol`` are bisected (this refines
    geometrically towards edge singularities).  The recovered mass must be
    within ``1e-3`` of one before it is renormalized.
    """
    ax, am = find_atoms(k)
    lo, hi, npts = grid if grid is not None else default_grid(k)
    if ax.size:
        lo, hi = min(lo, ax.min() - 0.1), max(hi, ax.max() + 0.1)
    x = np.linspace(lo, hi, int(npts))
    f = stieltjes_density(k, x, eps, (ax, am))
    xs, fs = [x], [f]
    a, b, fa, fb = x[:-1], x[1:], f[:-1], f[1:]
    min_width = 1e-12 * (hi - lo)
    total = x.size
    for _ in range(max_passes):
        if a.size == 0 or total >= max_points:
            break
        m = 0.5 * (a + b)
        fm = stieltjes_density(k, m, eps, (ax, am))
        xs.append(m)
        fs.append(fm)
        total += m.size
        err = 0.25 * (b - a) * np.abs(fa + fb - 2.0 * fm)
        split = (err > tol) & (b - a > min_width)
        a, b, fa, fb, m, fm = a[split], b[split], fa[split], fb[split], m[split], fm[split]
        a, b = np.concatenate([a, m]), np.concatenate([m, b])
        fa, fb = np.concatenate([fa, fm]), np.concatenate([fm, fb])
    X = np.concatenate(xs)
    F = np.concatenate(fs)
    order = np.argsort(X)
    X, F = X[order], F[order]
    keep = np.concatenate([[True], np.diff(X) > 0])
    X, F = X[keep], F[keep]

    ac_mass = float(np.trapezoid(F, X))
    total_mass = ac_mass + float(np.sum(am))
    log.info("measure_from_k: recovered mass %.12f (%d nodes, %d atoms)", total_mass, X.size, ax.size)
    if abs(total_mass - 1.0) > 1e-3:
        raise RecoveryError(f"recovered mass {total_mass:.6f} is not within 1e-3 of 1; "
                            "grid or eps unsuitable")
    atoms = list(zip(ax.tolist(), am.tolist())) or None
    return gridded_measure(X, F, atoms, normalize=True)


# -- perturbation expansion in t ----------------------------------------------

@dataclass(frozen=True)
class PerturbationExpansion:
    """``G_t = base + sum_k coeffs[k-1] t^k`` at a fixed ``z``."""

    z: complex
    base: complex
    coeffs: np.ndarray

    @property
    def conjugate_root(self) -> complex:
        """The other root ``z - G_semicircle(z)`` of ``G^2 - z G + 1``."""
        return self.z - self.base

    def value(self, t: float = 1.0) -> complex:
        ks = np.arange(1, self.coeffs.size + 1)
        return complex(self.base + np.sum(self.coeffs * t ** ks))


def perturbation_coeffs(k: KFunction, z: complex, kmax: int = 8) -> PerturbationExpansion:
    """Coefficients ``c_1 .. c_kmax`` of the solution of ``G + 1/G + t phi(G) = z`` in ``t``.

    ``c_1 = G phi(G) / (G_2 - G)`` at ``G = G_semicircle(z)``; for ``k >= 2``
    ``c_k`` is ``1/k`` times the coefficient of ``(G - G_semicircle)^(k-1)``
    in ``(G phi(G) / (G_2 - G))^k``.
    """
    if not 1 <= kmax <= 8:
        raise ValueError("kmax must be in 1..8")
    z = complex(z)
    if z.imag <= 0:
        raise ValueError("perturbation_coeffs needs Im z > 0")
    g0 = semicircle_cauchy(z)
    g2 = z - g0
    # phi(w) = (kappa_1) + (kappa_2 - 1) w + sum_{j>=2} kappa_{j+1} w^j
    phi_poly = k.cumulants.astype(complex).copy()
    if phi_poly.size < 2:
        phi_poly = np.concatenate([phi_poly, [1.0]])
    phi_poly[1] -= 1.0
    N = kmax - 1
    phi_at = taylor_shift(phi_poly, g0, N)
    if phi_at[0] == 0:
        raise PerturbationError(f"phi(G_semicircle(z)) = 0 at z={z!r}; expansion undefined")
    num = series_mul(TruncatedSeries(np.array([g0, 1.0])), phi_at, N)
    den = reciprocal(TruncatedSeries(np.array([g2 - g0, -1.0])), N)
    f1 = series_mul(num, den, N)
    coeffs = np.empty(kmax, dtype=complex)
    coeffs[0] = f1[0]
    lead = f1[0]
    unit_c = f1.coeffs / lead
    unit_c[0] = 1.0
    unit = TruncatedSeries(unit_c)
    for kk in range(2, kmax + 1):
        fk = series_int_pow(unit, kk, N)
        coeffs[kk - 1] = lead ** kk * fk[kk - 1] / kk
    return PerturbationExpansion(z, g0, coeffs)
