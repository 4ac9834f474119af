"""Compactly supported probability measures on the real line.

Two representations are supported:

* ``atomic``  -- finitely many point masses;
* ``gridded`` -- a piecewise-linear density sampled on an ascending grid,
  optionally carrying extra point masses (used when a recovered free
  convolution has atoms next to its absolutely continuous part).

Everything here is immutable and vectorized over numpy arrays.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

MASS_TOL = 1e-10
MAX_MOMENT_ORDER = 1024


class MeasureError(ValueError):
    """Invalid measure data (non-normalized, negative mass, bad JSON...)."""


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Measure:
    kind: str
    atom_x: np.ndarray
    atom_w: np.ndarray
    grid_x: np.ndarray | None = None
    grid_f: np.ndarray | None = None
    support_bound: float = field(init=False)

    def __post_init__(self):
        if self.kind not in ("atomic", "gridded"):
            raise MeasureError(f"unknown measure kind {self.kind!r}")
        object.__setattr__(self, "atom_x", _frozen(self.atom_x))
        object.__setattr__(self, "atom_w", _frozen(self.atom_w))
        if self.atom_x.shape != self.atom_w.shape or self.atom_x.ndim != 1:
            raise MeasureError("atoms: positions and weights must be 1-D of equal length")
        if not np.all(np.isfinite(self.atom_x)):
            raise MeasureError("atoms: positions must be finite")
        if np.any(self.atom_w < 0):
            raise MeasureError("atoms: negative weight")
        mass = float(self.atom_w.sum())
        if self.kind == "atomic":
            if self.atom_x.size == 0:
                raise MeasureError("atoms: empty atom list")
            if np.any(self.atom_w == 0):
                raise MeasureError("atoms: weights must be positive")
        else:
            if self.grid_x is None or self.grid_f is None:
                raise MeasureError("gridded measure needs x and f")
            object.__setattr__(self, "grid_x", _frozen(self.grid_x))
            object.__setattr__(self, "grid_f", _frozen(self.grid_f))
            x, f = self.grid_x, self.grid_f
            if x.ndim != 1 or x.shape != f.shape or x.size < 2:
                raise MeasureError("x/f: must be 1-D arrays of equal length >= 2")
            if not np.all(np.isfinite(x)) or not np.all(np.isfinite(f)):
                raise MeasureError("x/f: values must be finite")
            if np.any(np.diff(x) <= 0):
                raise MeasureError("x: grid must be strictly ascending")
            if np.any(f < 0):
                raise MeasureError("f: density values must be nonnegative")
            mass += float(np.trapezoid(f, x))
        if abs(mass - 1.0) > MASS_TOL:
            raise MeasureError(f"total mass {mass!r} differs from 1 by more than {MASS_TOL}")
        object.__setattr__(self, "support_bound", _support_bound(self))

    @property
    def is_atomic(self) -> bool:
        return self.kind == "atomic"

    @property
    def atom_mass(self) -> float:
        return float(self.atom_w.sum())

    def support(self) -> tuple[float, float]:
        """Smallest interval [lo, hi] carrying all mass."""
        lo, hi = math.inf, -math.inf
        if self.atom_x.size:
            lo, hi = float(self.atom_x.min()), float(self.atom_x.max())
        if self.kind == "gridded":
            glo, ghi = _grid_support(self.grid_x, self.grid_f)
            lo, hi = min(lo, glo), max(hi, ghi)
        return lo, hi

    def __repr__(self):
        if self.kind == "atomic":
            return f"Measure(atomic, {self.atom_x.size} atoms, L={self.support_bound:.6g})"
        return (f"Measure(gridded, {self.grid_x.size} nodes, "
                f"{self.atom_x.size} atoms, L={self.support_bound:.6g})")


def _grid_support(x, f):
    nz = np.flatnonzero(f > 0)
    if nz.size == 0:
        return math.inf, -math.inf
    # linear interpolation is positive up to the neighbouring node
    i0 = max(nz[0] - 1, 0)
    i1 = min(nz[-1] + 1, x.size - 1)
    return float(x[i0]), float(x[i1])


def _support_bound(m: Measure) -> float:
    lo, hi = m.support()
    return max(abs(lo), abs(hi))


def atomic_measure(points) -> Measure:
    """Build an atomic measure from ``(position, weight)`` pairs.

    Coinciding positions are merged.

    >>> atomic_measure([(-2, 0.5), (2, 0.5)]).support_bound
    2.0
    """
    pts = list(points)
    if not pts:
        raise MeasureError("atoms: empty atom list")
    x = np.array([p[0] for p in pts], dtype=float)
    w = np.array([p[1] for p in pts], dtype=float)
    if np.any(w <= 0):
        raise MeasureError("atoms: weights must be positive")
    xs, inv = np.unique(x, return_inverse=True)
    ws = np.zeros_like(xs)
    np.add.at(ws, inv, w)
    return Measure("atomic", xs, ws)


def gridded_measure(x, f, atoms=None, normalize: bool = False) -> Measure:
    """Build a gridded measure (piecewise-linear density + optional atoms).

    With ``normalize=True`` the density is rescaled so that the total mass
    (trapezoid integral plus atoms) is exactly one.
    """
    x = np.asarray(x, dtype=float)
    f = np.asarray(f, dtype=float)
    ax = np.array([a[0] for a in atoms], dtype=float) if atoms else np.zeros(0)
    aw = np.array([a[1] for a in atoms], dtype=float) if atoms else np.zeros(0)
    if normalize:
        ac = float(np.trapezoid(f, x))
        if ac <= 0:
            raise MeasureError("f: density has zero mass")
        f = f * (1.0 - aw.sum()) / ac
    return Measure("gridded", ax, aw, x, f)


def semicircle_density(x):
    """Standard semicircle density ``sqrt(4 - x^2) / (2 pi)`` on [-2, 2]."""
    x = np.asarray(x, dtype=float)
    return np.sqrt(np.clip(4.0 - x * x, 0.0, None)) / (2.0 * np.pi)


def semicircle_cdf(x):
    """Closed-form distribution function of the standard semicircle law."""
    x = np.clip(np.asarray(x, dtype=float), -2.0, 2.0)
    return (x * np.sqrt(4.0 - x * x) / 2.0 + 2.0 * np.arcsin(x / 2.0)) / (2.0 * np.pi) + 0.5


def semicircle_measure(points: int = 4097) -> Measure:
    """Gridded semicircle law.

    Nodes are ``-2 cos(theta)`` for uniform ``theta``, which clusters them
    near the square-root edges.
    """
    theta = np.linspace(0.0, np.pi, points)
    x = -2.0 * np.cos(theta)
    x[0], x[-1] = -2.0, 2.0
    return gridded_measure(x, semicircle_density(x), normalize=True)


def moments(m: Measure, kmax: int) -> np.ndarray:
    """Moments ``a_1 .. a_kmax`` as an array (``a_0 = 1`` is not included)."""
    if kmax > MAX_MOMENT_ORDER:
        raise ValueError(f"moment order {kmax} exceeds cap {MAX_MOMENT_ORDER}")
    ks = np.arange(1, kmax + 1)
    out = np.zeros(kmax)
    if m.atom_x.size:
        out += (m.atom_w[None, :] * m.atom_x[None, :] ** ks[:, None]).sum(axis=1)
    if m.kind == "gridded":
        x, f = m.grid_x, m.grid_f
        out += np.trapezoid(f[None, :] * x[None, :] ** ks[:, None], x, axis=1)
    return out


def moment(m: Measure, k: int) -> float:
    if k < 0:
        raise ValueError("moment order must be nonnegative")
    if k == 0:
        return 1.0
    return float(moments(m, k)[-1])


def mean_variance(m: Measure) -> tuple[float, float]:
    a1, a2 = moments(m, 2)
    return float(a1), float(a2 - a1 * a1)


def standardize(m: Measure) -> Measure:
    """Affinely map ``m`` to zero mean and unit variance."""
    mu, var = mean_variance(m)
    if not var > 0 or var < 1e-300:
        raise MeasureError("cannot standardize a measure with zero variance")
    sigma = math.sqrt(var)
    if m.kind == "atomic":
        return atomic_measure(zip((m.atom_x - mu) / sigma, m.atom_w))
    atoms = list(zip((m.atom_x - mu) / sigma, m.atom_w)) or None
    return gridded_measure((m.grid_x - mu) / sigma, m.grid_f * sigma, atoms, normalize=True)


def is_standardized(m: Measure, tol: float = 1e-8) -> bool:
    mu, var = mean_variance(m)
    return abs(mu) <= tol and abs(var - 1.0) <= tol


# -- distribution functions -------------------------------------------------

@dataclass(frozen=True, eq=False)
class Cdf:
    """A distribution function with explicit jump locations.

    ``func`` is the right-continuous CDF; ``left_func`` gives left limits and
    defaults to ``func`` for continuous distributions.  ``support`` is an
    interval outside which the CDF is constant (0 or 1).
    """

    func: Callable[[np.ndarray], np.ndarray]
    support: tuple[float, float]
    jumps: np.ndarray = field(default_factory=lambda: np.zeros(0))
    left_func: Callable[[np.ndarray], np.ndarray] | None = None

    def __call__(self, x):
        return self.func(np.asarray(x, dtype=float))

    def left(self, x):
        f = self.left_func or self.func
        return f(np.asarray(x, dtype=float))


def _atom_cdf_parts(xs, ws):
    order = np.argsort(xs)
    xs, cw = xs[order], np.concatenate([[0.0], np.cumsum(ws[order])])

    def right(x):
        return cw[np.searchsorted(xs, x, side="right")]

    def left(x):
        return cw[np.searchsorted(xs, x, side="left")]

    return right, left


def cdf(m: Measure) -> Cdf:
    """Distribution function of ``m``."""
    a_right, a_left = _atom_cdf_parts(m.atom_x, m.atom_w)
    lo, hi = m.support()
    if m.kind == "atomic":
        return Cdf(lambda x: np.clip(a_right(x), 0.0, 1.0), (lo, hi), m.atom_x.copy(),
                   lambda x: np.clip(a_left(x), 0.0, 1.0))

    gx, gf = m.grid_x, m.grid_f
    h = np.diff(gx)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * h * (gf[:-1] + gf[1:]))])
    # absorb rounding so that F reaches exactly 1 past the support
    scale = (1.0 - m.atom_mass) / cum[-1] if cum[-1] > 0 else 1.0
    cum, gf = cum * scale, gf * scale

    def ac(x):
        i = np.clip(np.searchsorted(gx, x, side="right") - 1, 0, gx.size - 2)
        d = np.clip(x - gx[i], 0.0, h[i])
        slope = (gf[i + 1] - gf[i]) / h[i]
        val = cum[i] + gf[i] * d + 0.5 * slope * d * d
        return np.where(x < gx[0], 0.0, np.where(x >= gx[-1], cum[-1], val))

    return Cdf(lambda x: np.clip(ac(x) + a_right(x), 0.0, 1.0), (lo, hi), m.atom_x.copy(),
               lambda x: np.clip(ac(x) + a_left(x), 0.0, 1.0))


def semicircle_distribution() -> Cdf:
    """The semicircle law as a closed-form :class:`Cdf`."""
    return Cdf(semicircle_cdf, (-2.0, 2.0))


def kolmogorov_distance(a: Cdf, b: Cdf, tol: float = 1e-6, max_points: int = 2**20,
                        start_points: int = 1025) -> float:
    """Sup-norm distance between two distribution functions.

    The mesh is uniform over the union of both supports plus every jump
    location (evaluated from the left and the right).  It is doubled until
    two successive suprema differ by less than ``tol`` or ``max_points`` is
    reached.
    """
    lo = min(a.support[0], b.support[0])
    hi = max(a.support[1], b.support[1])
    if not np.isfinite(lo) or hi <= lo:
        lo, hi = lo - 1.0, lo + 1.0
    pad = 1e-9 * max(1.0, hi - lo)
    lo, hi = lo - pad, hi + pad

    jumps = np.unique(np.concatenate([a.jumps, b.jumps]))
    sup_jumps = 0.0
    if jumps.size:
        sup_jumps = max(float(np.max(np.abs(a(jumps) - b(jumps)))),
                        float(np.max(np.abs(a.left(jumps) - b.left(jumps)))))

    prev = None
    npts = start_points
    while True:
        x = np.linspace(lo, hi, npts)
        diff = np.abs(a(x) - b(x))
        cur = max(sup_jumps, float(np.max(diff)))
        if prev is not None and abs(cur - prev) < tol:
            break
        if npts >= max_points:
            break
        prev = cur
        npts = 2 * (npts - 1) + 1
    cur = max(cur, _zoom_local_maxima(a, b, x, diff))
    return min(max(cur, 0.0), 1.0)


def _zoom_local_maxima(a: Cdf, b: Cdf, x, diff, count: int = 8, width: int = 33,
                       rounds: int = 40) -> float:
    # narrow spikes (e.g. a density pole just outside a support edge) can
    # hide between mesh points; zoom into the largest local maxima
    inner = np.flatnonzero((diff[1:-1] >= diff[:-2]) & (diff[1:-1] >= diff[2:])) + 1
    if inner.size == 0:
        return 0.0
    top = inner[np.argsort(diff[inner])[::-1][:count]]
    best = 0.0
    for i in top:
        left, right = x[i - 1], x[i + 1]
        for _ in range(rounds):
            t = np.linspace(left, right, width)
            d = np.abs(a(t) - b(t))
            j = int(np.argmax(d))
            best = max(best, float(d[j]))
            left, right = t[max(j - 1, 0)], t[min(j + 1, width - 1)]
            if right - left <= 1e-14 * max(1.0, abs(left)):
                break
    return best


# -- JSON -------------------------------------------------------------------

def measure_from_json(obj) -> Measure:
    """Parse the JSON measure format.

    ``{"kind": "atomic", "atoms": [{"x": -1.0, "w": 0.5}, ...]}`` or
    ``{"kind": "gridded", "x": [...], "f": [...]}`` (gridded measures may also
    carry an ``"atoms"`` list).
    """
    if not isinstance(obj, dict):
        raise MeasureError("measure: top-level JSON value must be an object")
    kind = obj.get("kind")
    if kind not in ("atomic", "gridded"):
        raise MeasureError(f"kind: expected 'atomic' or 'gridded', got {kind!r}")

    atoms = []
    raw_atoms = obj.get("atoms", [])
    if not isinstance(raw_atoms, list):
        raise MeasureError("atoms: must be a list")
    for i, a in enumerate(raw_atoms):
        if not isinstance(a, dict):
            raise MeasureError(f"atoms[{i}]: must be an object with fields x, w")
        for key in ("x", "w"):
            v = a.get(key)
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise MeasureError(f"atoms[{i}].{key}: missing or not a number")
        atoms.append((float(a["x"]), float(a["w"])))

    if kind == "atomic":
        if "atoms" not in obj:
            raise MeasureError("atoms: required for an atomic measure")
        return atomic_measure(atoms)
    for key in ("x", "f"):
        v = obj.get(key)
        if not isinstance(v, list) or not all(
                isinstance(t, (int, float)) and not isinstance(t, bool) for t in v):
            raise MeasureError(f"{key}: must be a list of numbers")
    return gridded_measure(obj["x"], obj["f"], atoms or None)


def measure_to_json(m: Measure) -> dict:
    atoms = [{"x": float(x), "w": float(w)} for x, w in zip(m.atom_x, m.atom_w)]
    if m.kind == "atomic":
        return {"kind": "atomic", "atoms": atoms}
    out = {"kind": "gridded", "x": m.grid_x.tolist(), "f": m.grid_f.tolist()}
    if atoms:
        out["atoms"] = atoms
    return out


def load_measure(path) -> Measure:
    try:
        obj = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise MeasureError(f"measure: malformed JSON ({exc})") from exc
    return measure_from_json(obj)
