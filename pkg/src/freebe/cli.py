"""Command-line entry point ``freebe``.

Subcommands::

    freebe convolve --input a.json --input2 b.json [--grid lo:hi:points] [--out f.csv]
    freebe density  --input a.json --n 16 [--grid ...] [--eps 1e-6]
    freebe rate     --input a.json --ladder 16:4096:geometric:4
    freebe verify   --suite all [--seed 42]
    freebe binomial --p 0.3 --ladder 16:16384:geometric:4

Exit codes: 0 success, 1 a verification check failed, 2 invalid input,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from contextlib import contextmanager

from . import binomial as bn
from . import verify as vf
from .freeconv import (DEFAULT_EPS, PerturbationError, RecoveryError, free_convolve,
                       kfunction_from_measure, measure_from_k, recover_cauchy,
                       self_convolve_normalized)
from .measures import (MeasureError, atomic_measure, cdf, is_standardized, kolmogorov_distance,
                       load_measure, semicircle_distribution, standardize)
from .series import DEFAULT_ORDER

log = logging.getLogger("freebe")

EXIT_OK, EXIT_FAILED, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2, 3
SUITES = ("phi", "gsc", "jint", "ck", "closeness", "bai", "all")


class InputError(ValueError):
    """Bad command-line input (exit code 2)."""


def fmt(x) -> str:
    return format(float(x), ".17g")


def parse_grid(text: str):
    parts = text.split(":")
    if len(parts) != 3:
        raise InputError(f"--grid: expected min:max:points, got {text!r}")
    try:
        lo, hi, pts = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise InputError(f"--grid: cannot parse {text!r}") from None
    if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi and pts >= 2):
        raise InputError("--grid: need finite min < max and points >= 2")
    return lo, hi, pts


def parse_ladder(text: str) -> list[int]:
    """``a:b:geometric[:ratio]`` (ratio defaults to 2) or a comma list."""
    if ":" not in text:
        try:
            ladder = [int(t) for t in text.split(",") if t.strip()]
        except ValueError:
            raise InputError(f"--ladder: cannot parse {text!r}") from None
    else:
        parts = text.split(":")
        if len(parts) not in (3, 4) or parts[2] != "geometric":
            raise InputError(f"--ladder: expected a:b:geometric[:ratio], got {text!r}")
        try:
            a, b = int(parts[0]), int(parts[1])
            ratio = float(parts[3]) if len(parts) == 4 else 2.0
        except ValueError:
            raise InputError(f"--ladder: cannot parse {text!r}") from None
        if a < 1 or b < a or ratio <= 1:
            raise InputError("--ladder: need 1 <= a <= b and ratio > 1")
        ladder, n = [], float(a)
        while n <= b * (1 + 1e-12):
            ladder.append(int(round(n)))
            n *= ratio
    if not ladder or any(n < 1 for n in ladder):
        raise InputError("--ladder: entries must be positive integers")
    return sorted(set(ladder))


@contextmanager
def _output(path):
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def _load(path, flag="--input"):
    if path is None:
        raise InputError(f"{flag} is required")
    try:
        return load_measure(path)
    except FileNotFoundError:
        raise InputError(f"{flag}: file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{flag}: invalid JSON in {path}: {exc}") from None


def _write_density(m, fh):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["x", "f"])
    for x, f in zip(m.grid_x, m.grid_f):
        w.writerow([fmt(x), fmt(f)])
    for x, a in zip(m.atom_x, m.atom_w):
        print(f"atom at x={fmt(x)} mass={fmt(a)}", file=sys.stderr)


def _check_positive(args, *names):
    for name in names:
        val = getattr(args, name, None)
        if val is not None and not val > 0:
            raise InputError(f"--{name}: must be positive")


def cmd_convolve(args) -> int:
    a = _load(args.input)
    b = _load(args.input2, "--input2")
    k = free_convolve(kfunction_from_measure(a, args.order), kfunction_from_measure(b, args.order))
    grid = parse_grid(args.grid) if args.grid else None
    m = measure_from_k(k, grid=grid, eps=args.eps)
    with _output(args.out) as fh:
        _write_density(m, fh)
    return EXIT_OK


def _standardized(m):
    if is_standardized(m):
        return m
    try:
        return standardize(m)
    except MeasureError as exc:
        raise InputError(f"--input: {exc}") from None


def cmd_density(args) -> int:
    m = _standardized(_load(args.input))
    n = args.n if args.n is not None else 1
    if n < 1:
        raise InputError("--n: must be >= 1")
    k = self_convolve_normalized(m, n, args.order)
    grid = parse_grid(args.grid) if args.grid else None
    out = measure_from_k(k, grid=grid, eps=args.eps)
    with _output(args.out) as fh:
        _write_density(out, fh)
    return EXIT_OK


def _ladder(args, default=None):
    if args.ladder:
        return parse_ladder(args.ladder)
    if args.n is not None:
        if args.n < 1:
            raise InputError("--n: must be >= 1")
        return [args.n]
    if default is None:
        raise InputError("--ladder or --n is required")
    return default


def cmd_rate(args) -> int:
    m = _standardized(_load(args.input))
    ladder = _ladder(args)
    report = vf.rate_experiment(m, ladder, order=args.order, eps=args.eps)
    with _output(args.out) as fh:
        vf.write_rate_csv(report, fh)
    for n, msg in sorted(report.errors.items()):
        print(f"n={n}: {msg}", file=sys.stderr)
    return EXIT_NUMERIC if report.errors else EXIT_OK


def cmd_binomial(args) -> int:
    try:
        spec = bn.BinomialSpec(args.p)
    except ValueError as exc:
        raise InputError(f"--p: {exc}") from None
    ladder = _ladder(args, default=[16 * 4 ** j for j in range(6)])
    if any(n < 2 for n in ladder):
        raise InputError("binomial distances need n >= 2")
    with _output(args.out) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["p", "n", "d_n", "d_n_sqrt_n"])
        for n in ladder:
            d = bn.binomial_distance(spec, n)
            w.writerow([fmt(spec.p), str(n), fmt(d), fmt(d * math.sqrt(n))])
    return EXIT_OK


def _verify_reports(args) -> list:
    seed = args.seed
    suite = args.suite
    bern = atomic_measure([(-1.0, 0.5), (1.0, 0.5)])
    m = _standardized(_load(args.input)) if args.input else bern
    reports = []
    if suite in ("phi", "all"):
        reports.append(vf.verify_phi_size(m, args.n or 256, seed=seed, order=args.order))
    if suite in ("gsc", "all"):
        reports.extend(vf.verify_gsc_size(seed=seed))
    if suite in ("jint", "all"):
        vs = args.v if args.v else [0.01, 0.5, 0.99]
        for v in vs:
            if not 0.0 < v < 1.0:
                raise InputError("--v: must lie in (0, 1)")
            reports.append(vf.j_integral_report(v))
    if suite in ("ck", "closeness", "all"):
        n_big = args.n or 2 ** 22
        if not 0.0 < vf.closeness_v(m.support_bound, n_big) < 1.0:
            raise InputError(f"--n: v = 1024 L^3/sqrt(n) must lie in (0, 1) (L={m.support_bound:.6g})")
        if suite in ("ck", "all"):
            reports.extend(vf.verify_ck_bounds(m, n_big, order=args.order))
        if suite in ("closeness", "all"):
            reports.append(vf.verify_cauchy_closeness(m, n_big, order=args.order))
    if suite in ("bai", "all"):
        reports.append(vf.theorem_constant_report())
        n_small = 16
        k = self_convolve_normalized(m, n_small, args.order)
        mn = measure_from_k(k)
        d = kolmogorov_distance(cdf(mn), semicircle_distribution())
        reports.append(vf.support_premise(mn))
        for v in (0.05, vf.closeness_v(m.support_bound, n_small)):
            bound = vf.bai_bound_vs_semicircle(lambda z: recover_cauchy(k, z), vf.bai_params(v=v))
            reports.append(vf.VerifyReport("bai_soundness", f"n={n_small},v={v:.6g}",
                                           "pipeline distance vs bound", bound, d, d / bound))
    return reports


def cmd_verify(args) -> int:
    if args.suite not in SUITES:
        raise InputError(f"--suite: unknown suite {args.suite!r}; choose from {', '.join(SUITES)}")
    reports = _verify_reports(args)
    with _output(args.out) as fh:
        vf.write_verify_csv(reports, fh)
    failed = [r for r in reports if not r.passed]
    for r in failed:
        print(f"FAILED {r.lemma} [{r.config}]: ratio {r.ratio:.6g}", file=sys.stderr)
    return EXIT_FAILED if failed else EXIT_OK


COMMANDS = {
    "convolve": cmd_convolve,
    "density": cmd_density,
    "rate": cmd_rate,
    "verify": cmd_verify,
    "binomial": cmd_binomial,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="freebe", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--input", help="measure JSON file")
        p.add_argument("--order", type=int, default=DEFAULT_ORDER, help="number of free cumulants")
        p.add_argument("--out", help="output CSV (default stdout)")
        p.add_argument("--seed", type=int, default=vf.DEFAULT_SEED)
        p.add_argument("--eps", type=float, default=DEFAULT_EPS, help="Stieltjes inversion height")
        p.add_argument("--n", type=int, help="number of convolved copies")
        return p

    p = common(sub.add_parser("convolve", help="free convolution of two measures"))
    p.add_argument("--input2", help="second measure JSON file")
    p.add_argument("--grid", help="min:max:points")
    p = common(sub.add_parser("density", help="density of the normalized n-fold convolution"))
    p.add_argument("--grid", help="min:max:points")
    p = common(sub.add_parser("rate", help="Kolmogorov distance to the semicircle along a ladder"))
    p.add_argument("--ladder", help="a:b:geometric[:ratio] or comma list")
    p = common(sub.add_parser("verify", help="run bound checks"))
    p.add_argument("--suite", default="all", help="one of " + ", ".join(SUITES))
    p.add_argument("--v", type=float, action="append", help="height for the jint suite")
    p = common(sub.add_parser("binomial", help="closed-form two-point example"))
    p.add_argument("--p", type=float, default=0.3, help="atom probability")
    p.add_argument("--ladder", help="a:b:geometric[:ratio] or comma list")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        _check_positive(args, "order", "eps")
        return COMMANDS[args.command](args)
    except (RecoveryError, PerturbationError, RuntimeError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (InputError, MeasureError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
