"""``cdo-ld`` command-line front end.

Subcommands: ``price``, ``validate``, ``curves``, ``mc``, ``pool-gen`` and
``rate``.  Exit codes: 0 success, 2 assumption or feasibility failure,
3 numerical non-convergence or oracle mismatch, 4 config or usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from contextlib import contextmanager
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .asymptotics import LAMBDA_COLUMNS, SSTAR_COLUMNS, lambda_curve, spread_asymptotic, sstar_curve
from .config import PricingConfig, dump_config, load_config, tabulate_pool
from .correlation import dominant_state, mixture_protection_leg
from .entropy import brute_force_rate, solve_lambda
from .exceptions import AssumptionError, ConfigError, ConvergenceError
from .merton import MertonDistribution, merton_default_prob, merton_default_prob_closed
from .montecarlo import (HN_COLUMNS, estimate_protection_is, estimate_protection_plain, hn_empirical,
                         local_clt_check, tilt_pool)
from .pool import LossProbMeasure, assumption_report

EXIT_OK = 0
EXIT_ASSUMPTION = 2
EXIT_NUMERIC = 3
EXIT_CONFIG = 4

MERTON_CHECK_TOL = 1e-6
MERTON_CHECK_NAMES = 5
MC_COLUMNS = ("estimator", "n_samples", "seed", "mean", "standard_error", "log_mean", "prefactor",
              "prefactor_se", "lambda", "n_effective", "asymptotic", "ratio")
CLT_COLUMNS = ("s", "exact", "gaussian", "rel_error")


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------


def format_value(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def csv_text(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([format_value(v) for v in row])
    return buf.getvalue()


@contextmanager
def _sink(path):
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            yield fh


def write_text(path, text):
    with _sink(path) as fh:
        fh.write(text)


def _kv(out, key, value):
    out.write(f"{key}: {format_value(value)}\n")


def _warn(msg):
    print(f"warning: {msg}", file=sys.stderr)


# ---------------------------------------------------------------------------
# price
# ---------------------------------------------------------------------------


def _report(cfg: PricingConfig, args, pool=None):
    pool = cfg.build_pool() if pool is None else pool
    return assumption_report(pool, cfg.tranche, args.notflat_delta, args.notflat_epsilon)


def _assumption_gate(cfg: PricingConfig, args):
    """Check the assumptions; warn on failures and stop unless ``--force``."""
    force = args.force
    rep = _report(cfg, args)
    msgs = []
    if not rep.ig_ok:
        msgs.append(f"investment-grade assumption violated: mean default probability "
                    f"{rep.mean_default_prob:.17g} >= alpha {cfg.tranche.alpha:.17g}")
    if not rep.nondegen_ok:
        msgs.append(f"non-degeneracy assumption violated: mass at zero {rep.zero_mass_fraction:.17g} "
                    f">= 1 - alpha")
    if not rep.notflat_ok:
        msgs.append(f"not-flat assumption violated: fraction of flat names {rep.notflat_fraction:.17g} "
                    f">= alpha {cfg.tranche.alpha:.17g}")
    for m in msgs:
        _warn(m)
    if msgs and not force:
        raise AssumptionError(rep.failures()[0], msgs[0] + " (use --force to price anyway)")
    return rep


def _result_fields(res):
    return [("N", res.N), ("g", res.granularity), ("lambda", res.lam), ("rate_i", res.rate_i),
            ("sigma_sq", res.sigma_sq), ("i2_factor", res.i2_factor),
            ("protection_leg", res.protection_leg), ("log_protection_leg", res.log_protection_leg),
            ("premium_leg", res.premium_leg), ("spread", res.spread), ("log_spread", res.log_spread),
            ("prefactor_source", res.measure_source)]


def cmd_price(args) -> int:
    cfg = load_config(args.config)
    _assumption_gate(cfg, args)
    pre = cfg.limit_measure() if args.prefactor == "limit" else None
    if args.prefactor == "limit" and pre is None:
        raise ConfigError("--prefactor limit needs a merton_gamma or two_type pool")
    res = spread_asymptotic(cfg.measure(), cfg.tranche, cfg.N, prefactor_measure=pre)
    report = dict(_result_fields(res))
    mix = cfg.mixture()
    if mix is not None:
        mres = mixture_protection_leg(mix, cfg.tranche, cfg.N, enforce_ig=not args.force)
        for lab, mean in mres.ig_failures:
            _warn(f"state {lab}: investment-grade assumption violated (mean {mean:.17g})")
        report["mixture_protection_leg"] = mres.protection_leg
        report["mixture_spread"] = mres.spread
        report["states"] = [{"label": c.label, "prob": c.prob, "lambda": c.result.lam,
                             "rate_i": c.result.rate_i, "sigma_sq": c.result.sigma_sq,
                             "protection_leg": c.result.protection_leg, "contribution": c.contribution}
                            for c in mres.breakdown]
        try:
            lab, approx = dominant_state(mix, cfg.tranche, cfg.N)
            report["dominant_state"] = lab
            report["dominant_protection_leg"] = approx
        except ValueError as exc:
            report["dominant_state"] = None
            _warn(str(exc))
    with _sink(args.output) as out:
        if args.json:
            json.dump(report, out, indent=1)
            out.write("\n")
            return EXIT_OK
        for k, v in report.items():
            if k != "states":
                _kv(out, k, v)
        if "states" in report:
            out.write(csv_text(("label", "prob", "lambda", "rate_i", "sigma_sq", "protection_leg",
                                "contribution"),
                               [tuple(s.values()) for s in report["states"]]))
    return EXIT_OK


# ---------------------------------------------------------------------------
# validate
# ---------------------------------------------------------------------------


def project_atoms(m: LossProbMeasure, k=3) -> LossProbMeasure:
    """Mean-preserving projection onto at most ``k`` atoms (equal-mass groups, conditional means)."""
    if len(m) <= k:
        return m
    mid = np.cumsum(m.weights) - 0.5 * m.weights
    group = np.minimum((mid * k).astype(int), k - 1)
    pts, wts = [], []
    for j in range(k):
        sel = group == j
        if sel.any():
            w = m.weights[sel]
            pts.append(float(np.dot(w, m.points[sel]) / w.sum()))
            wts.append(float(w.sum()))
    wts = np.array(wts)
    return LossProbMeasure.from_atoms(pts, wts / wts.sum())


def _line(out, ok, name, detail):
    out.write(f"{'PASS' if ok else 'FAIL'} {name}: {detail}\n")


def cmd_validate(args) -> int:
    cfg = load_config(args.config)
    tr = cfg.tranche
    pool = cfg.build_pool()
    rep = _report(cfg, args, pool)
    assumption_ok = rep.all_ok
    oracle_ok = True
    with _sink(args.output) as out:
        _line(out, rep.ig_ok, "investment-grade",
              f"mean default probability {rep.mean_default_prob:.17g} "
              f"{'<' if rep.ig_ok else '>='} alpha {tr.alpha:.17g}")
        _line(out, rep.nondegen_ok, "non-degeneracy",
              f"mass at zero {rep.zero_mass_fraction:.17g}, 1 - alpha {1 - tr.alpha:.17g}")
        _line(out, rep.notflat_ok, "not-flat",
              f"fraction of names with mass < {rep.notflat_epsilon:g} on [T - {rep.notflat_delta:g}, T) "
              f"is {rep.notflat_fraction:.17g}, alpha {tr.alpha:.17g}")
        if rep.chebyshev_bound is not None:
            out.write(f"INFO tail bound: P(L_T >= alpha) <= {rep.chebyshev_bound:.6g}\n")

        proj = project_atoms(cfg.measure())
        sol = solve_lambda(proj, tr.alpha)
        if sol.interior:
            step, tol = (1e-4, 1e-6) if len(proj) <= 2 else (1e-3, 1e-5)
            bf = brute_force_rate(proj, tr.alpha, step)
            ok = abs(bf - sol.rate) <= tol
            oracle_ok &= ok
            _line(out, ok, "rate oracle",
                  f"{len(proj)}-atom projection: solver {sol.rate:.17g}, brute force {bf:.17g}, "
                  f"tolerance {tol:g}")
        else:
            out.write(f"SKIP rate oracle: projection is not interior ({sol.boundary_case.value})\n")

        merton = [d for d in pool.names if isinstance(d, MertonDistribution)]
        if merton:
            idx = np.unique(np.linspace(0, len(merton) - 1, min(MERTON_CHECK_NAMES, len(merton))).astype(int))
            worst = 0.0
            for i in idx:
                p = merton[i].params
                worst = max(worst, abs(merton_default_prob(p, tr.T) - merton_default_prob_closed(p, tr.T)))
            ok = worst <= MERTON_CHECK_TOL
            oracle_ok &= ok
            _line(out, ok, "merton quadrature",
                  f"max |quadrature - closed form| over {len(idx)} names = {worst:.3g}")
    if not assumption_ok:
        return EXIT_ASSUMPTION
    return EXIT_OK if oracle_ok else EXIT_NUMERIC


# ---------------------------------------------------------------------------
# curves
# ---------------------------------------------------------------------------


def _parse_floats(text):
    return [float(x) for x in text.split(",") if x.strip()]


def _parse_n_list(text):
    """``"100:10000:100"`` (inclusive range) or ``"100,200,500"``."""
    if ":" in text:
        lo, hi, step = (int(x) for x in text.split(":"))
        if step <= 0 or hi < lo:
            raise ConfigError(f"bad N range {text!r}")
        return list(range(lo, hi + 1, step))
    return [int(x) for x in text.split(",") if x.strip()]


def _curve_measure(cfg, which):
    if which == "limit":
        m = cfg.limit_measure()
        if m is None:
            raise ConfigError("--measure limit needs a merton_gamma or two_type pool")
        return m
    if which == "pool":
        return cfg.measure()
    return cfg.limit_measure() or cfg.measure()


def _alpha_path(path, alpha):
    p = Path(path)
    return str(p.with_name(f"{p.stem}_alpha{float(alpha)!r}{p.suffix}"))


def cmd_curves(args) -> int:
    cfg = load_config(args.config)
    if args.which == "lambda":
        m = _curve_measure(cfg, args.measure)
        grid = np.linspace(args.lambda_min, args.lambda_max, args.lambda_num)
        write_text(args.output, csv_text(LAMBDA_COLUMNS, lambda_curve(m, grid)))
        return EXIT_OK

    alphas = _parse_floats(args.alphas) if args.alphas else [cfg.tranche.alpha]
    if len(alphas) > 1 and (args.output is None or args.output == "-"):
        raise ConfigError("several --alphas need an --output path; one file is written per alpha")
    if cfg.pool["kind"] == "explicit":
        raise ConfigError("sstar curves rebuild the pool for each N; explicit pools have a fixed size")
    n_list = _parse_n_list(args.n_list)
    limit = None if args.measure == "pool" else _curve_measure(cfg, "limit")
    for a in alphas:
        tranche = cfg.tranche.replace(alpha=a)
        mean = (limit or cfg.measure(n_list[0])).mean
        if mean >= a:
            _warn(f"investment-grade assumption violated: mean default probability {mean:.17g} >= alpha {a:.17g}")
            if not args.force:
                raise AssumptionError("investment-grade", f"alpha {a} is below the mean default probability")
        rows = sstar_curve(cfg.measure, tranche, n_list, limit_measure=limit,
                           strip_prefactor=args.strip_prefactor)
        bad = [r for r in rows if r.error]
        if bad:
            _warn(f"{len(bad)} rows failed at alpha {a}; first: N={bad[0].N}: {bad[0].error}")
        text = csv_text(SSTAR_COLUMNS, [(r.N, r.g, r.lam, r.rate_i, r.sigma_sq, r.sstar) for r in rows])
        write_text(_alpha_path(args.output, a) if len(alphas) > 1 else args.output, text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# mc
# ---------------------------------------------------------------------------


def _mc_row(est, asym):
    ratio = est.mean / asym if asym else None
    return (est.kind, est.n_samples, est.seed, est.mean, est.standard_error, est.log_mean,
            est.prefactor, est.prefactor_se, est.lam, est.n_effective, asym, ratio)


def cmd_mc(args) -> int:
    cfg = load_config(args.config)
    tr, pool = cfg.tranche, cfg.build_pool()
    seed = args.seed
    print(f"seed: {seed}", file=sys.stderr)

    if args.report == "clt":
        tp = tilt_pool(pool, tr)
        rep = local_clt_check(tp.u_tilde, tr.alpha, sigma_sq=tp.sigma_sq)
        ok = rep.max_rel_error <= args.clt_bound
        print(f"{'PASS' if ok else 'FAIL'} local CLT: N={rep.N} max relative error "
              f"{rep.max_rel_error:.6g} (bound {args.clt_bound:g})", file=sys.stderr)
        write_text(args.output, csv_text(CLT_COLUMNS, rep.rows))
        return EXIT_OK

    if args.report == "hn":
        rows = hn_empirical(pool, tr, args.samples, seed)
        write_text(args.output, csv_text(HN_COLUMNS, [tuple(asdict(r).values()) for r in rows]))
        return EXIT_OK

    try:
        res = spread_asymptotic(cfg.measure(), tr, cfg.N)
    except AssumptionError as exc:
        res = None
        _warn(f"no asymptotic reference: {exc}")
    asym = res.protection_leg if res is not None else None
    ests = []
    if args.estimator in ("plain", "both"):
        ests.append(estimate_protection_plain(pool, tr, args.samples, seed))
    if args.estimator in ("is", "both"):
        ests.append(estimate_protection_is(pool, tr, args.samples, seed))
    for e in ests:
        line = f"{e.kind}: {e.mean:.6g} +- {e.standard_error:.3g} ({e.n_samples} samples, seed {e.seed})"
        if asym:
            line += f", MC/asymptotic {e.mean / asym:.6g}"
        if e.prefactor is not None and res is not None:
            line += (f", I_N {e.prefactor:.6g} +- {e.prefactor_se:.3g} vs closed form "
                     f"{res.prefactor:.6g} (ratio {e.prefactor / res.prefactor:.4g})")
        print(line, file=sys.stderr)
    if len(ests) == 2:
        a, b = ests
        se = math.hypot(a.standard_error, b.standard_error)
        z = abs(a.mean - b.mean) / se if se > 0 else math.inf
        print(f"{'AGREE' if z <= 3 else 'DISAGREE'}: plain vs importance differ by {z:.3g} combined SE",
              file=sys.stderr)
    write_text(args.output, csv_text(MC_COLUMNS, [_mc_row(e, asym) for e in ests]))
    return EXIT_OK


# ---------------------------------------------------------------------------
# pool-gen and rate
# ---------------------------------------------------------------------------


def cmd_pool_gen(args) -> int:
    cfg = load_config(args.config)
    if cfg.pool["kind"] != "merton_gamma":
        raise ConfigError("pool-gen expects a merton_gamma pool")
    pool = cfg.build_pool(args.N)
    block = tabulate_pool(pool, cfg.tranche.T, args.grid_points)
    write_text(args.output, dump_config(cfg.tranche, block))
    return EXIT_OK


def _parse_atoms(text):
    pts, wts = [], []
    for item in text.split(","):
        if not item.strip():
            continue
        p, _, w = item.partition(":")
        pts.append(float(p))
        wts.append(float(w) if w else 1.0)
    wts = np.array(wts)
    if not len(pts) or np.any(wts <= 0):
        raise ConfigError("--atoms needs p:weight pairs with positive weights")
    return LossProbMeasure.from_atoms(pts, wts / wts.sum())


def cmd_rate(args) -> int:
    if (args.config is None) == (args.atoms is None):
        raise ConfigError("give either a config file or --atoms")
    if args.atoms is not None:
        if args.alpha is None:
            raise ConfigError("--atoms needs --alpha")
        m, alpha = _parse_atoms(args.atoms), args.alpha
    else:
        cfg = load_config(args.config)
        m = cfg.limit_measure() if args.measure == "limit" else cfg.measure()
        if m is None:
            raise ConfigError("--measure limit needs a merton_gamma or two_type pool")
        alpha = cfg.tranche.alpha if args.alpha is None else args.alpha
    sol = solve_lambda(m, alpha)
    with _sink(args.output) as out:
        for k, v in (("alpha", alpha), ("mean", m.mean), ("lambda", sol.lam), ("rate_i", sol.rate),
                     ("sigma_sq", sol.sigma_sq), ("boundary_case", sol.boundary_case.value)):
            _kv(out, k, v)
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cdo-ld", description="Large-pool tranche asymptotics.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        if config_required:
            p.add_argument("config", help="JSON pool/tranche config")
        p.add_argument("-o", "--output", default=None, help="output file (default: stdout)")

    def assumption_flags(p):
        p.add_argument("--notflat-delta", type=float, default=None,
                       help="window length before T for the not-flat check (default T/20)")
        p.add_argument("--notflat-epsilon", type=float, default=1e-8,
                       help="mass threshold for the not-flat check")

    p = sub.add_parser("price", help="asymptotic protection leg, premium leg and spread")
    common(p)
    assumption_flags(p)
    p.add_argument("--force", action="store_true", help="price even if assumption checks fail")
    p.add_argument("--prefactor", choices=("pool", "limit"), default="pool",
                   help="measure for the multiplier and variance factor in the prefactor")
    p.add_argument("--json", action="store_true", help="emit JSON instead of key: value lines")
    p.set_defaults(func=cmd_price)

    p = sub.add_parser("validate", help="assumption checks and oracle comparisons")
    common(p)
    assumption_flags(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("curves", help="lambda or S*_N curves as CSV")
    common(p)
    p.add_argument("--which", choices=("lambda", "sstar"), required=True)
    p.add_argument("--measure", choices=("auto", "pool", "limit"), default="auto",
                   help="lambda: measure to tilt; sstar: 'pool' takes the prefactor from each pool")
    p.add_argument("--lambda-min", type=float, default=-1.0)
    p.add_argument("--lambda-max", type=float, default=3.0)
    p.add_argument("--lambda-num", type=int, default=81)
    p.add_argument("--n-list", default="100:10000:100", help="'lo:hi:step' or comma list of N")
    p.add_argument("--alphas", default=None, help="comma list of attachment points")
    p.add_argument("--strip-prefactor", action="store_true",
                   help="divide S*_N by the tranche-only constant factor")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_curves)

    p = sub.add_parser("mc", help="plain and importance-sampled Monte Carlo")
    common(p)
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=20240601)
    p.add_argument("--estimator", choices=("plain", "is", "both"), default="is")
    p.add_argument("--report", choices=("estimate", "hn", "clt"), default="estimate")
    p.add_argument("--clt-bound", type=float, default=0.1)
    p.set_defaults(func=cmd_mc)

    p = sub.add_parser("pool-gen", help="write a merton_gamma pool as an explicit tabulated pool")
    common(p)
    p.add_argument("--N", type=int, default=None, help="pool size (default: the config's N)")
    p.add_argument("--grid-points", type=int, default=101)
    p.set_defaults(func=cmd_pool_gen)

    p = sub.add_parser("rate", help="multiplier, rate and variance factor")
    p.add_argument("config", nargs="?", default=None)
    p.add_argument("-o", "--output", default=None)
    p.add_argument("--atoms", default=None, help="'p:w,p:w,...' loss measure (weights are normalised)")
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--measure", choices=("pool", "limit"), default="pool")
    p.set_defaults(func=cmd_rate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except AssumptionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ASSUMPTION
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
