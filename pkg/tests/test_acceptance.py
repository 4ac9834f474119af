"""Acceptance criteria 1-11, each at its stated tolerance and runtime budget."""

import math
import time

import numpy as np

from freebe import verify as vf
from freebe.binomial import (BinomialSpec, binomial_distance, binomial_free_density,
                             binomial_measure, binomial_support)
from freebe.freeconv import (find_atoms, measure_from_k, recover_cauchy,
                             self_convolve_normalized, stieltjes_density)
from freebe.measures import (atomic_measure, cdf, kolmogorov_distance, semicircle_distribution,
                             standardize)
from freebe.series import KFunction, moments_to_kfunction

PIPE_NS = (2, 4, 8, 16)
RATE_LADDER = tuple(16 * 4 ** k for k in range(6))


def interior(spec, n, points=1000, band=0.05):
    lo, hi = binomial_support(spec, n)
    return np.linspace(lo + band, hi - band, points)


class Timer:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.t0


def test_criterion_01_bai_constants(acceptance):
    with Timer() as t:
        gamma = vf.gamma_of_c(6.0)
        kappa = vf.bai_params(A=8.0, B=2 ** 1.25, c=6.0).kappa
    ok = abs(gamma - 0.895) <= 5e-4 and abs(kappa - 0.682) <= 5e-4 and t.elapsed < 1
    acceptance(1, ok, f"gamma={gamma:.6f} kappa={kappa:.6f} (target 0.895, 0.682 +- 5e-4) "
                      f"in {t.elapsed:.3f}s")
    assert ok


def test_criterion_02_prefactor(acceptance):
    with Timer() as t:
        pre = vf.bai_params().prefactor
    ok = abs(pre - 1.268) <= 2e-3 and t.elapsed < 1
    acceptance(2, ok, f"prefactor={pre:.6f} (target 1.268 +- 2e-3) in {t.elapsed:.3f}s")
    assert ok


def test_criterion_03_semicircle_k(acceptance):
    with Timer() as t:
        k = moments_to_kfunction([0, 1, 0, 2, 0, 5, 0, 14], order=8)
    target = np.zeros(8)
    target[1] = 1.0
    err = float(np.max(np.abs(k.cumulants - target)))
    ok = err <= 1e-12 and t.elapsed < 1
    acceptance(3, ok, f"max cumulant error {err:.2e} (<= 1e-12) in {t.elapsed:.3f}s")
    assert ok


def test_criterion_04_arcsine(acceptance):
    with Timer() as t:
        spec = BinomialSpec(0.5)
        x = np.linspace(-math.sqrt(2), math.sqrt(2), 1002)[1:-1]
        closed = binomial_free_density(spec, 2, x)
        arcsine = 1.0 / (np.pi * np.sqrt(2.0 - x * x))
        e_closed = float(np.max(np.abs(closed - arcsine) / np.maximum(1.0, arcsine)))
        k = self_convolve_normalized(standardize(binomial_measure(0.5)), 2)
        xi = interior(spec, 2)
        e_pipe = float(np.max(np.abs(stieltjes_density(k, xi) - 1.0 / (np.pi * np.sqrt(2 - xi * xi)))))
    ok = e_closed <= 1e-12 and e_pipe <= 1e-3 and t.elapsed < 60
    acceptance(4, ok, f"closed form vs arcsine {e_closed:.2e} (<= 1e-12), pipeline interior "
                      f"{e_pipe:.2e} (<= 1e-3) in {t.elapsed:.1f}s")
    assert ok


def test_criterion_05_oracle(acceptance):
    worst_f, worst_d = 0.0, 0.0
    with Timer() as t:
        for p in (0.3, 0.5):
            spec = BinomialSpec(p)
            m = standardize(binomial_measure(p))
            for n in PIPE_NS:
                k = self_convolve_normalized(m, n)
                x = interior(spec, n)
                worst_f = max(worst_f, float(np.max(np.abs(
                    stieltjes_density(k, x) - binomial_free_density(spec, n, x)))))
                d = kolmogorov_distance(cdf(measure_from_k(k)), semicircle_distribution())
                worst_d = max(worst_d, abs(d - binomial_distance(spec, n)))
    ok = worst_f <= 1e-3 and worst_d <= 2e-3 and t.elapsed < 300
    acceptance(5, ok, f"sup interior density error {worst_f:.2e} (<= 1e-3), distance "
                      f"agreement {worst_d:.2e} (<= 2e-3) in {t.elapsed:.1f}s")
    assert ok


def test_criterion_06_rate(acceptance):
    with Timer() as t:
        spec = BinomialSpec(0.3)
        ds = np.array([binomial_distance(spec, n) for n in RATE_LADDER])
    ns = np.array(RATE_LADDER, dtype=float)
    slope = vf.fit_slope(ns, ds)
    scaled = ds * np.sqrt(ns)
    band = float(scaled.max() / scaled.min())
    L = math.sqrt(spec.q / spec.p)
    margin = float(np.max(scaled / (vf.THEOREM_C * L ** 3)))
    ok = -0.65 <= slope <= -0.35 and band <= 3 and margin <= 1 and t.elapsed < 300
    acceptance(6, ok, f"slope {slope:.4f} (in [-0.65, -0.35]), d_n sqrt(n) band {band:.3f} (<= 3), "
                      f"max d_n sqrt(n)/(2^16 L^3) {margin:.2e} (<= 1) in {t.elapsed:.1f}s")
    assert ok


def test_criterion_07_rate_contrast(acceptance):
    with Timer() as t:
        spec = BinomialSpec(0.5)
        ds = [binomial_distance(spec, n) for n in RATE_LADDER]
    slope = vf.fit_slope(RATE_LADDER, ds)
    ok = slope <= -0.75 and t.elapsed < 300
    acceptance(7, ok, f"p=q=1/2 slope {slope:.4f} (<= -0.75) in {t.elapsed:.1f}s")
    assert ok


def test_criterion_08_lemma_suite(acceptance):
    bern = atomic_measure([(-1.0, 0.5), (1.0, 0.5)])
    with Timer() as t:
        reports = [vf.verify_phi_size(bern, 256, count=500, seed=vf.DEFAULT_SEED)]
        reports += list(vf.verify_gsc_size(count=10_000, seed=vf.DEFAULT_SEED))
        reports += [vf.j_integral_report(v) for v in (0.01, 0.5, 0.99)]
    worst = max(reports, key=lambda r: r.ratio)
    ok = all(r.passed for r in reports) and all(r.observed < 24 for r in reports[3:]) \
        and t.elapsed < 120
    summary = ", ".join(f"{r.lemma}[{r.config}]={r.ratio:.4g}" for r in reports)
    acceptance(8, ok, f"ratios {summary}; worst {worst.lemma} in {t.elapsed:.1f}s")
    assert ok


def test_criterion_09_closeness(acceptance):
    bern = atomic_measure([(-1.0, 0.5), (1.0, 0.5)])
    n = 2 ** 22
    with Timer() as t:
        close = vf.verify_cauchy_closeness(bern, n)
        i1 = vf.verify_ck_bounds(bern, n)[0]
    ok = close.observed <= 0.5 and i1.observed <= 768 / math.sqrt(n) and t.elapsed < 300
    acceptance(9, ok, f"n=2^22 v={vf.closeness_v(1.0, n)}: closeness {close.observed:.3e} (<= 0.5), "
                      f"I_1 {i1.observed:.3e} (<= {768 / math.sqrt(n):.4f}) in {t.elapsed:.1f}s")
    assert ok


def test_criterion_10_bound_soundness(acceptance):
    configs = [(p, n) for p in (0.3, 0.5) for n in PIPE_NS] + [(0.3, n) for n in RATE_LADDER]
    worst = 0.0
    with Timer() as t:
        for p, n in configs:
            spec = BinomialSpec(p)
            k = self_convolve_normalized(standardize(binomial_measure(p)), n)
            d = binomial_distance(spec, n)
            for v in (0.05, 0.5):
                bound = vf.bai_bound_vs_semicircle(lambda z: recover_cauchy(k, z),
                                                   vf.bai_params(v=v))
                worst = max(worst, d / bound)
    ok = worst <= 1.0
    acceptance(10, ok, f"max distance/bound {worst:.3e} over {len(configs)} configurations "
                       f"x v in {{0.05, 0.5}} (<= 1) in {t.elapsed:.1f}s")
    assert ok


def _mass_before_renormalization(k):
    m = measure_from_k(k)
    atoms = find_atoms(k)
    raw = np.trapezoid(stieltjes_density(k, m.grid_x, atoms=atoms), m.grid_x)
    return float(raw + np.sum(atoms[1]))


def test_criterion_11_round_trip(acceptance):
    rng = np.random.default_rng(vf.DEFAULT_SEED)
    bern = atomic_measure([(-1.0, 0.5), (1.0, 0.5)])
    skew = standardize(binomial_measure(0.3))
    cases = {
        "semicircle": (KFunction.semicircle(), (0.05, 3.0)),
        "bernoulli n=256": (self_convolve_normalized(bern, 256), (0.05, 3.0)),
        "binomial(0.3) n=1024": (self_convolve_normalized(skew, 1024), (0.05, 3.0)),
        # exact route; |G| must stay inside the series disc for K to be trusted
        "binomial(0.3) n=2": (self_convolve_normalized(skew, 2), (12.0, 16.0)),
    }
    worst_k = 0.0
    with Timer() as t:
        for k, (vlo, vhi) in cases.values():
            z = rng.uniform(-4, 4, 100) + 1j * rng.uniform(vlo, vhi, 100)
            g = recover_cauchy(k, z)
            assert np.all(np.abs(g) < k.validity_radius)
            worst_k = max(worst_k, float(np.max(np.abs(k(g) - z))))
        masses = [_mass_before_renormalization(self_convolve_normalized(
            standardize(binomial_measure(p)), n)) for p in (0.3, 0.5) for n in PIPE_NS]
        masses.append(_mass_before_renormalization(KFunction.semicircle()))
    worst_m = float(np.max(np.abs(np.array(masses) - 1.0)))
    ok = worst_k <= 1e-10 and worst_m <= 1e-3
    acceptance(11, ok, f"max |K(G(z)) - z| {worst_k:.2e} (<= 1e-10) over {len(cases)}x100 points, "
                       f"max |mass - 1| {worst_m:.2e} (<= 1e-3) over {len(masses)} densities "
                       f"in {t.elapsed:.1f}s")
    assert ok
