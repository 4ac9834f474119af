import io
import math

import numpy as np
import pytest

from freebe import verify as vf
from freebe.binomial import binomial_measure
from freebe.freeconv import measure_from_k, recover_cauchy, self_convolve_normalized, semicircle_cauchy
from freebe.measures import (atomic_measure, cdf, kolmogorov_distance, semicircle_distribution,
                             standardize)


# -- Bai constants ----------------------------------------------------------------

def test_gamma_values():
    assert vf.gamma_of_c(6) == pytest.approx(0.895, abs=5e-4)
    assert vf.gamma_of_c(1) == 0.5
    assert vf.gamma_of_c(1e12) == pytest.approx(1.0, abs=1e-11)
    with pytest.raises(ValueError):
        vf.gamma_of_c(0.0)


def test_bai_params_defaults():
    p = vf.bai_params()
    assert p.kappa == pytest.approx(0.682, abs=5e-4)
    assert p.prefactor == pytest.approx(1.268, abs=2e-3)


@pytest.mark.parametrize("kw", [dict(A=1.0, B=2.0), dict(A=2.0, B=2.0), dict(c=1.0), dict(v=0.0),
                                dict(A=3.0)])
def test_bai_params_vacuous(kw):
    with pytest.raises(ValueError):
        vf.bai_params(**kw)


def test_theorem_constant_chain():
    r = vf.theorem_constant_report()
    assert r.passed
    assert r.observed == pytest.approx(60813.37, abs=0.05)


@pytest.mark.parametrize("v", [0.05, 0.5])
def test_bai_bound_identical_transforms(v):
    p = vf.bai_params(v=v)
    assert vf.bai_bound_vs_semicircle(semicircle_cauchy, p) == pytest.approx(
        p.prefactor * p.smoothness_term, rel=1e-14)


def test_bai_bound_dominates_distance(skewed):
    k = self_convolve_normalized(skewed, 16)
    d = kolmogorov_distance(cdf(measure_from_k(k)), semicircle_distribution())
    bound = vf.bai_bound_vs_semicircle(lambda z: recover_cauchy(k, z), vf.bai_params(v=0.05))
    assert d <= bound


def test_panel_quad_matches_closed_form():
    val = vf.panel_quad(lambda u: np.sqrt(np.abs(4 - u * u)), -3.0, 3.0)
    # int_{-3}^{3} sqrt|4-u^2| = 2 pi + 2 (3 sqrt5 / 2 - 2 ln((3 + sqrt5)/2))
    ref = 2 * math.pi + 3 * math.sqrt(5) - 4 * math.log((3 + math.sqrt(5)) / 2)
    assert val == pytest.approx(ref, rel=1e-8)


def test_support_premise(semicircle, skewed):
    assert vf.support_premise(semicircle).passed
    assert vf.support_premise(skewed).passed
    r = vf.support_premise(binomial_measure(0.3))
    assert not r.passed and r.observed == pytest.approx(0.3)


# -- phi and the semicircle transform ------------------------------------------------

def test_phi_size_bernoulli(bernoulli):
    r = vf.verify_phi_size(bernoulli, 256, count=500, seed=42)
    assert r.passed and r.seed == 42
    assert r.ratio == pytest.approx(0.004, abs=1e-3)


def test_phi_size_semicircle(semicircle):
    r = vf.verify_phi_size(atomic_measure([(-1.0, 0.5), (1.0, 0.5)]), 1, samples=[0.05, 0.1j])
    assert r.passed
    from freebe.measures import semicircle_measure
    r0 = vf.verify_phi_size(standardize(semicircle_measure()), 64, count=50)
    assert r0.ratio < 1e-3


def test_phi_size_small_w(skewed):
    r = vf.verify_phi_size(skewed, 64, samples=[1e-6, 1e-6j, -1e-7])
    assert math.isfinite(r.ratio) and r.passed


def test_phi_size_rejects_far_samples(bernoulli):
    with pytest.raises(ValueError, match="disc"):
        vf.verify_phi_size(bernoulli, 4, samples=[0.3])


def test_phi_size_seeded(bernoulli):
    a = vf.verify_phi_size(bernoulli, 64, count=100, seed=7)
    b = vf.verify_phi_size(bernoulli, 64, count=100, seed=7)
    assert a == b


def test_gsc_reports():
    mod, gap = vf.verify_gsc_size(count=10_000, seed=42)
    assert mod.passed and gap.passed
    # the imaginary axis is extremal: |G(iv)| -> 1 as v -> 0
    assert mod.details["axis_sup"] == pytest.approx(1.0, abs=1e-7)
    assert gap.details["edge_min_ratio"] <= 1.0 + vf.RATIO_TOL


def test_gsc_samples_in_strip():
    rand, axis, edge = vf.gsc_samples(1000, seed=1)
    for z in (rand, axis, edge):
        assert np.all((z.imag > 0) & (z.imag < 2))


@pytest.mark.parametrize("v", [0.01, 0.5, 0.99])
def test_j_integral_below_24(v):
    r = vf.j_integral_report(v)
    assert r.passed and r.observed < 24


def test_j_integral_against_scipy():
    from scipy.integrate import quad
    ref = quad(lambda u: vf.j_integrand(u, 0.5), -8, 8, points=[-2, 2], limit=200)[0]
    assert vf.verify_j_integral(0.5) == pytest.approx(ref, rel=1e-9)
    assert vf.verify_j_integral(0.5) == pytest.approx(5.566, abs=1e-3)


def test_j_integral_domain():
    for v in (0.0, 1.0, -0.1):
        with pytest.raises(ValueError):
            vf.verify_j_integral(v)


# -- c_k integrals and closeness ------------------------------------------------------

def test_closeness_v():
    assert vf.closeness_v(1.0, 2 ** 22) == 0.5


def test_ck_bounds_bernoulli(bernoulli):
    reports = vf.verify_ck_bounds(bernoulli, 2 ** 22)
    assert [r.lemma for r in reports] == ["ck_I1", "ck_I2", "ck_I3plus"]
    assert all(r.passed for r in reports)
    assert reports[0].observed <= 768 / 2 ** 11


def test_ck_bounds_semicircle():
    from freebe.measures import semicircle_measure
    reports = vf.verify_ck_bounds(standardize(semicircle_measure()), 2 ** 30)
    assert all(r.passed for r in reports)


def test_ck_bounds_needs_small_v(bernoulli):
    with pytest.raises(ValueError, match="increase n"):
        vf.verify_ck_bounds(bernoulli, 1024)


def test_closeness_bernoulli(bernoulli):
    r = vf.verify_cauchy_closeness(bernoulli, 2 ** 22)
    assert r.passed and r.bound == 0.5
    # the first-order term dominates the closeness integral
    i1 = vf.verify_ck_bounds(bernoulli, 2 ** 22)[0].observed
    assert r.observed == pytest.approx(i1, rel=1e-2)


# -- rate experiment --------------------------------------------------------------------

def test_fit_slope():
    ns = np.array([16, 64, 256])
    assert vf.fit_slope(ns, 3.0 / np.sqrt(ns)) == pytest.approx(-0.5)
    assert math.isnan(vf.fit_slope([16], [0.1]))
    assert math.isnan(vf.fit_slope([16, 64], [0.1, math.nan]))


def test_rate_experiment_symmetric(bernoulli):
    r = vf.rate_experiment(bernoulli, [16, 64, 256])
    assert r.passed and not r.errors
    assert r.slope < -0.75
    assert all(m <= 1 for m in r.margins)


def test_rate_experiment_requires_standardized():
    with pytest.raises(ValueError, match="standardized"):
        vf.rate_experiment(binomial_measure(0.3), [16, 64])
    with pytest.raises(ValueError):
        vf.rate_experiment(atomic_measure([(-1.0, 0.5), (1.0, 0.5)]), [64, 16])


def test_rate_report_records_failures(bernoulli, monkeypatch):
    from freebe.freeconv import RecoveryError
    real = vf.measure_from_k

    def flaky(k, **kw):
        if k.kappa(4) > -0.1:
            raise RecoveryError("no convergence")
        return real(k, **kw)

    monkeypatch.setattr(vf, "measure_from_k", flaky)
    r = vf.rate_experiment(bernoulli, [4, 16])
    assert set(r.errors) == {16} and math.isnan(r.distances[1])
    assert math.isfinite(r.distances[0]) and math.isnan(r.slope)
    assert not r.passed


# -- CSV ----------------------------------------------------------------------------------

def test_verify_csv_format():
    buf = io.StringIO()
    vf.write_verify_csv([vf.j_integral_report(0.5)], buf)
    header, row = buf.getvalue().splitlines()
    assert header == "config,lemma,bound,observed,ratio,pass"
    cells = row.split(",")
    assert cells[:3] == ["v=0.5", "j_integral", "24"] and cells[-1] == "1"
    assert float(cells[3]) == vf.verify_j_integral(0.5)


def test_rate_csv_single_entry(bernoulli):
    buf = io.StringIO()
    vf.write_rate_csv(vf.rate_experiment(bernoulli, [16]), buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "n,d_n,bound,margin"
    assert lines[1].startswith("16,")
    assert lines[-1] == "slope,,,"
