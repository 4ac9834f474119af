"""Free additive convolution through K-functions, with checks of the n^(-1/2) rate."""

from .binomial import (BinomialSpec, binomial_atoms, binomial_cdf, binomial_distance,
                       binomial_free_density, binomial_measure, binomial_support, rate_bracket)
from .freeconv import (EvalLine, PerturbationExpansion, PerturbationError, RecoveryError,
                       cauchy_transform, find_atoms, free_convolve, kfunction_from_measure,
                       measure_from_k, perturbation_coeffs, phi_eval, recover_cauchy,
                       self_convolve_normalized, semicircle_cauchy, stieltjes_density)
from .measures import (Cdf, Measure, MeasureError, atomic_measure, cdf, gridded_measure,
                       kolmogorov_distance, load_measure, moment, moments, semicircle_cdf,
                       semicircle_density, semicircle_distribution, semicircle_measure,
                       standardize)
from .series import (KFunction, TruncatedSeries, coefficient_bound, moments_to_kfunction,
                     reciprocal, series_int_pow, series_mul)
from .verify import (BaiParams, RateReport, VerifyReport, bai_bound_vs_semicircle, bai_params,
                     gamma_of_c, rate_experiment, verify_cauchy_closeness, verify_ck_bounds,
                     verify_gsc_size, verify_j_integral, verify_phi_size)

__version__ = "0.1.0"
