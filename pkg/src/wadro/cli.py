"""Command-line interface: sensitivity curves, hedging tables, self-checks.

Subcommands
-----------
curve      sensitivity and Vega curves over a volatility grid (CSV + SVG)
hedge      hedging-strategy tables and profiles at one volatility
oracle     LP ball suprema vs closed forms on a small canned measure (JSON)
selfcheck  run the full invariant suite; nonzero exit on any failure

Configuration uses flat ``key = value`` files with sections [model],
[criterion], [metric], [constraints], [output]; command-line flags override
file values.  Exit codes: 0 success, 1 check failure, 2 bad configuration.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import os
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import fredholm, oracle
from .criterion import Criterion, CriterionError, exercise_mass, gradient_field, preset, stopping_rule, value, vega
from .measure import (GridMeasure, MeasureError, ModelSpec, build_model,
                      bin_centers, canonical_test_measure, cond_exp_1, from_csv,
                      info_discrepancy_check, marginal_2, quantile_bins,
                      sign_copy_measure)
from .sensitivity import (ConstraintSet, Metric, SensitivityError,
                          marginal_value_closed_form, report_tables,
                          report_to_json, sens_marginal, sens_mart_marginal,
                          sens_martingale, sens_unconstrained, solve_foc)
from .svgplot import line_chart

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_BAD_CONFIG = 2

DEFAULT_SIGMA_GRID = tuple(float(x) for x in
                           np.exp(np.linspace(np.log(0.05), np.log(1.5), 20)))
CONSTRAINT_CHOICES = ("unconstrained", "martingale", "marginal", "mart_marginal")

CONFIG_KEYS = """\
configuration keys (section.key, with defaults):
  model.family        bachelier | black_scholes        [black_scholes]
  model.sigma         comma list or single value       [20 log-spaced in 0.05..1.5]
  model.n1, model.n2  grid sizes                       [64, 64]
  model.quadrature    gauss_hermite | equally_weighted [gauss_hermite]
  model.measure_csv   load a custom measure instead of a family
  criterion.name      linear:<payoff> | american_put:K=..,rho=..,side=..
                                                       [american_put]
  metric.ball         wp | wp_adapted                  [wp_adapted]
  metric.p            exponent > 1                     [2]
  constraints.sets    comma list of unconstrained, martingale, marginal,
                      mart_marginal                    [all four]
  output.dir          output directory                 [.]
  output.bins         bin count for E2                 [n2]
  output.workers      sweep worker threads             [1]
  output.seed         seed for randomized check fixtures [0]
  oracle.radii        comma list of LP radii           [0.02,0.05,0.1,0.2]
"""


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    family: str = "black_scholes"
    sigmas: tuple = DEFAULT_SIGMA_GRID
    n1: int = 64
    n2: int = 64
    quadrature: str = "gauss_hermite"
    measure_csv: str | None = None
    criterion: str = "american_put"
    ball: str = "wp_adapted"
    p: float = 2.0
    sets: tuple = CONSTRAINT_CHOICES
    out_dir: str = "."
    bins: int | None = None
    workers: int = 1
    seed: int = 0
    oracle_radii: tuple = (0.02, 0.05, 0.1, 0.2)

    def metric(self) -> Metric:
        return Metric(self.ball, self.p)

    def model_spec(self, sigma: float) -> ModelSpec:
        return ModelSpec(self.family, sigma, self.n1, self.n2, self.quadrature)

    def load_criterion(self) -> Criterion:
        return preset(self.criterion)

    def validate(self):
        if not self.sigmas:
            raise ConfigError("sigma grid must be nonempty")
        if any(b <= a for a, b in zip(self.sigmas, self.sigmas[1:])):
            raise ConfigError("sigma grid must be strictly increasing")
        for s in self.sets:
            if s not in CONSTRAINT_CHOICES:
                raise ConfigError(f"unknown constraint set {s!r}")
        if not os.path.isdir(self.out_dir):
            os.makedirs(self.out_dir, exist_ok=True)


def _parse_floats(text: str) -> tuple:
    return tuple(float(tok) for tok in text.replace(";", ",").split(",") if tok.strip())


def load_config(path: str | None, overrides: dict) -> RunConfig:
    cfg = RunConfig()
    raw = {}
    if path:
        parser = configparser.ConfigParser(interpolation=None)
        read = parser.read(path)
        if not read:
            raise ConfigError(f"cannot read config file {path}")
        for section in parser.sections():
            for key, val in parser.items(section):
                raw[f"{section}.{key}"] = val
    raw.update({k: v for k, v in overrides.items() if v is not None})
    if "model.family" in raw:
        cfg.family = raw["model.family"].strip()
    if "model.sigma" in raw:
        cfg.sigmas = _parse_floats(str(raw["model.sigma"]))
    if "model.n1" in raw:
        cfg.n1 = int(raw["model.n1"])
    if "model.n2" in raw:
        cfg.n2 = int(raw["model.n2"])
    if "model.quadrature" in raw:
        cfg.quadrature = raw["model.quadrature"].strip()
    if "model.measure_csv" in raw:
        cfg.measure_csv = raw["model.measure_csv"].strip()
    if "criterion.name" in raw:
        cfg.criterion = raw["criterion.name"].strip()
    if "metric.ball" in raw:
        cfg.ball = raw["metric.ball"].strip()
    if "metric.p" in raw:
        cfg.p = float(raw["metric.p"])
    if "constraints.sets" in raw:
        cfg.sets = tuple(s.strip() for s in str(raw["constraints.sets"]).split(",") if s.strip())
    if "output.dir" in raw:
        cfg.out_dir = raw["output.dir"].strip()
    if "output.bins" in raw:
        cfg.bins = int(raw["output.bins"])
    if "output.workers" in raw:
        cfg.workers = int(raw["output.workers"])
    if "output.seed" in raw:
        cfg.seed = int(raw["output.seed"])
    if "oracle.radii" in raw:
        cfg.oracle_radii = _parse_floats(str(raw["oracle.radii"]))
    cfg.validate()
    return cfg


def _write_csv(path: str, header, rows) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for row in rows:
            writer.writerow(["" if v is None else (repr(float(v)) if isinstance(v, float) else v)
                             for v in row])


def _write_chart(path: str, series, title, xlabel, ylabel, logx=False) -> None:
    """Write the SVG plus a sidecar CSV holding exactly the plotted series."""
    with open(path, "w") as f:
        f.write(line_chart(series, title, xlabel, ylabel, logx=logx))
    header = []
    cols = []
    for name, xs, ys in series:
        header += [f"{name}_x", f"{name}_y"]
        cols += [list(xs), list(ys)]
    depth = max(len(c) for c in cols) if cols else 0
    rows = []
    for i in range(depth):
        rows.append([repr(float(c[i])) if i < len(c) else "" for c in cols])
    with open(path + ".csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        writer.writerows(rows)


def _curve_point(cfg: RunConfig, c: Criterion, sigma: float) -> dict:
    spec = cfg.model_spec(sigma)
    mu = build_model(spec)
    bins = quantile_bins(mu, cfg.bins or cfg.n2)
    G = gradient_field(c, mu)
    metric = cfg.metric()
    out = {"sigma": sigma, "price": value(c, mu)}
    if "unconstrained" in cfg.sets:
        out["G_ad"] = sens_unconstrained(mu, G, metric).value
    if "martingale" in cfg.sets:
        out["G_ad_M"] = sens_martingale(mu, G, metric).value
    if "marginal" in cfg.sets:
        out["G_ad_m"] = sens_marginal(mu, G, metric, bins).value
    if "mart_marginal" in cfg.sets:
        out["G_ad_Mm"] = sens_mart_marginal(mu, G, bins, metric.p).value
    out["vega"] = vega(spec, c)
    return out


def cmd_curve(cfg: RunConfig) -> int:
    c = cfg.load_criterion()
    results = [None] * len(cfg.sigmas)

    def run(idx_sigma):
        idx, sigma = idx_sigma
        try:
            return idx, _curve_point(cfg, c, sigma)
        except (MeasureError, CriterionError, SensitivityError, fredholm.FredholmError) as exc:
            warnings.warn(f"sigma={sigma:g} failed: {exc}", RuntimeWarning, stacklevel=2)
            return idx, {"sigma": sigma}

    tasks = list(enumerate(cfg.sigmas))
    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            for idx, res in pool.map(run, tasks):
                results[idx] = res
    else:
        for t in tasks:
            idx, res = run(t)
            results[idx] = res

    sens_cols = [col for flag, col in (("unconstrained", "G_ad"), ("martingale", "G_ad_M"),
                                       ("marginal", "G_ad_m"), ("mart_marginal", "G_ad_Mm"))
                 if flag in cfg.sets]
    header = ["sigma", "price"] + sens_cols + ["vega"] + [f"relative_{cn}" for cn in sens_cols]
    rows = []
    for res in results:
        row = [res.get("sigma")]
        price = res.get("price", float("nan"))
        row.append(price if price is not None else float("nan"))
        for cn in sens_cols:
            row.append(res.get(cn, float("nan")))
        row.append(res.get("vega", float("nan")))
        for cn in sens_cols:
            s = res.get(cn, float("nan"))
            if price is not None and np.isfinite(price) and price > 1e-12 \
                    and np.isfinite(s):
                row.append(s / price)
            else:
                row.append(None)
        rows.append(row)
    path = os.path.join(cfg.out_dir, "curve.csv")
    _write_csv(path, header, rows)

    series = []
    xs = [r[0] for r in rows]
    for k, cn in enumerate(sens_cols + ["vega"]):
        col = 2 + k if cn != "vega" else 2 + len(sens_cols)
        series.append((cn, xs, [r[col] if r[col] is not None else float("nan") for r in rows]))
    _write_chart(os.path.join(cfg.out_dir, "curve.svg"), series,
                 f"{cfg.criterion} sensitivities ({cfg.family})", "sigma", "sensitivity",
                 logx=True)
    print(f"wrote {path} and curve.svg ({len(rows)} sigma points)")
    return EXIT_OK


def cmd_hedge(cfg: RunConfig, sigma: float) -> int:
    c = cfg.load_criterion()
    spec = cfg.model_spec(sigma)
    mu = build_model(spec)
    bins = quantile_bins(mu, cfg.bins or cfg.n2)
    G = gradient_field(c, mu)
    which = cfg.sets[0] if len(cfg.sets) == 1 else "mart_marginal"
    metric = cfg.metric()
    if which == "martingale":
        rep = sens_martingale(mu, G, metric)
    elif which == "marginal":
        rep = sens_marginal(mu, G, metric, bins)
    elif which == "unconstrained":
        rep = sens_unconstrained(mu, G, metric)
    else:
        rep = sens_mart_marginal(mu, G, bins, metric.p)
    rows1, rows2 = report_tables(rep, mu)
    _write_csv(os.path.join(cfg.out_dir, "hedge_h.csv"), ["x1", "h", "f1"], rows1)
    _write_csv(os.path.join(cfg.out_dir, "hedge_f2.csv"), ["x2_bin_center", "f2"], rows2)
    series = []
    if rep.h_hat is not None:
        series.append(("h", [r[0] for r in rows1], [r[1] for r in rows1]))
    if rep.f1 is not None:
        series.append(("f1", [r[0] for r in rows1], [r[2] for r in rows1]))
    if rows2:
        series.append(("f2", [r[0] for r in rows2], [r[1] for r in rows2]))
    _write_chart(os.path.join(cfg.out_dir, "hedge.svg"), series,
                 f"hedging profiles at sigma={sigma:g} ({which})", "state", "multiplier")
    print(f"value G'(0) = {rep.value!r}  [{rep.constraints}]")
    if rep.h_hat is not None:
        stats = hedge_jump_stats(mu, rep.h_hat, c)
        print(f"h jump ratio = {stats['jump_ratio']:.3f} at x1 = {stats['jump_x1']!r}")
        if stats["boundary_x1"] is not None:
            print(f"exercise boundary near x1 = {stats['boundary_x1']!r} "
                  f"(within {stats['cells_from_boundary']} grid cell(s))")
        print(f"stage-1 exercise mass = {stats['exercise_mass']:.3e}")
    return EXIT_OK


def hedge_jump_stats(mu: GridMeasure, h: np.ndarray, c: Criterion) -> dict:
    """Locate the largest adjacent-atom jump of h and relate it to the
    exercise boundary of the stopping rule."""
    dh = np.abs(np.diff(h))
    med = float(np.median(dh))
    k = int(np.argmax(dh))
    ratio = float(dh[k] / med) if med > 0 else float("inf") if dh[k] > 0 else 0.0
    out = {"jump_ratio": ratio, "jump_x1": float(0.5 * (mu.x1[k] + mu.x1[k + 1])),
           "boundary_x1": None, "cells_from_boundary": None, "exercise_mass": 0.0}
    if c.kind != "linear":
        rule = stopping_rule(c, mu)
        out["exercise_mass"] = float(np.sum(mu.w1[rule.stop_at_1]))
        flips = np.nonzero(np.diff(rule.stop_at_1.astype(int)) != 0)[0]
        if flips.size:
            b = int(flips[np.argmin(np.abs(flips - k))])
            out["boundary_x1"] = float(0.5 * (mu.x1[b] + mu.x1[b + 1]))
            out["cells_from_boundary"] = int(abs(b - k))
    return out


def cmd_oracle(cfg: RunConfig) -> int:
    radii = cfg.oracle_radii
    if len(radii) < 3:
        print("oracle slope estimation needs at least 3 radii (got "
              f"{len(radii)}); set oracle.radii", file=sys.stderr)
        return EXIT_BAD_CONFIG
    if cfg.measure_csv:
        mu = from_csv(cfg.measure_csv, is_martingale=True)
    else:
        mu = canonical_test_measure()
    if mu.n1 * mu.n2 > 100:
        print("oracle instances are capped at 100 atoms", file=sys.stderr)
        return EXIT_BAD_CONFIG
    c = cfg.load_criterion()
    if c.kind != "linear":
        print("the LP oracle needs a linear criterion (e.g. linear:x2)", file=sys.stderr)
        return EXIT_BAD_CONFIG
    G = gradient_field(c, mu)
    bins = quantile_bins(mu, min(cfg.bins or mu.n2, mu.n2))
    w2 = Metric("wp", 2.0)
    reports = {
        "none": sens_unconstrained(mu, G, w2),
        "martingale": sens_martingale(mu, G, w2),
        "marginal2": solve_foc(mu, G, w2, ConstraintSet(marginal2=True), bins),
        "both": solve_foc(mu, G, w2, ConstraintSet(martingale=True, marginal2=True), bins),
    }
    try:
        rep = oracle.oracle_report(mu, lambda y1, y2: c.f(y1, y2), list(radii), reports)
    except (oracle.OracleError, oracle.LPError) as exc:
        print(f"oracle failed: {exc}", file=sys.stderr)
        return EXIT_CHECK_FAILED
    path = os.path.join(cfg.out_dir, "oracle.json")
    with open(path, "w") as f:
        json.dump(rep, f, indent=2, sort_keys=True)
    print(f"wrote {path}")
    for label, res in rep["constraint_sets"].items():
        print(f"  {label:11s} slope {res['slope']:+.6f}  closed {res['closed_form']:+.6f}  "
              f"{'PASS' if res['pass'] else 'FAIL'}")
    return EXIT_OK if rep["pass"] else EXIT_CHECK_FAILED


def _selfcheck_items(cfg: RunConfig):
    """(name, callable) pairs; each returns True on pass."""
    rng = np.random.default_rng(cfg.seed)

    def measure_invariants():
        mu = build_model(ModelSpec("black_scholes", 0.5, 16, 16))
        ok = abs(mu.w1.sum() - 1) < 1e-12 and mu.martingale_residual() < 1e-10
        field = rng.standard_normal(mu.x2.shape)
        tower = abs(float(mu.w1 @ cond_exp_1(mu, field))
                    - float(np.sum(mu.atom_masses() * field)))
        return ok and tower < 1e-12

    def criterion_consistency():
        mu = build_model(ModelSpec("bachelier", 1.0, 16, 16))
        c = preset("american_put:side=buyer")
        buyer = value(c, mu)
        seller = value(preset("american_put:side=seller"), mu)
        return buyer <= seller + 1e-12

    def closed_forms():
        mu = canonical_test_measure()
        G = gradient_field(preset("linear:x2"), mu)
        m = Metric("wp_adapted", 2.0)
        vals = (sens_unconstrained(mu, G, m).value, sens_martingale(mu, G, m).value,
                sens_marginal(mu, G, m).value, sens_mart_marginal(mu, G).value)
        targets = (1.0, 2 ** -0.5, 0.0, 0.0)
        return all(abs(v - t) <= 1e-10 for v, t in zip(vals, targets))

    def marginal_two_paths():
        mu = build_model(ModelSpec("black_scholes", 0.5, 16, 16))
        G = gradient_field(preset("american_put:side=buyer"), mu)
        m = Metric("wp_adapted", 2.0)
        bins = quantile_bins(mu, 16)
        a = sens_marginal(mu, G, m, bins).value
        b = marginal_value_closed_form(mu, G, m, bins)
        return abs(a - b) <= 1e-10

    def fredholm_certificate():
        mu = build_model(ModelSpec("bachelier", 1.0, 16, 16))
        bins = quantile_bins(mu, 16)
        op = fredholm.build_operator(mu, bins)
        if not fredholm.contraction_norm(op, "l2") < 1:
            return False
        rhs = rng.standard_normal(16)
        rhs -= float(mu.w1 @ rhs) / 1.0
        rhs = rhs - float(mu.w1 @ rhs)
        h = fredholm.solve(op, rhs)
        K0 = op.zero_mean_matrix()
        return float(np.max(np.abs((np.eye(16) - K0) @ h - rhs))) <= 1e-8

    def monotonicity():
        mu = build_model(ModelSpec("black_scholes", 1.0, 16, 16))
        G = gradient_field(preset("american_put:side=buyer"), mu)
        m = Metric("wp_adapted", 2.0)
        bins = quantile_bins(mu, 16)
        unc = sens_unconstrained(mu, G, m).value
        mart = sens_martingale(mu, G, m).value
        marg = sens_marginal(mu, G, m, bins).value
        both = sens_mart_marginal(mu, G, bins).value
        return both <= min(mart, marg) + 1e-10 and max(mart, marg) <= unc + 1e-10

    def oracle_sandwich():
        mu = canonical_test_measure()
        G = gradient_field(preset("linear:x2"), mu)
        w2 = Metric("wp", 2.0)
        reports = {
            "none": sens_unconstrained(mu, G, w2),
            "martingale": sens_martingale(mu, G, w2),
            "marginal2": solve_foc(mu, G, w2, ConstraintSet(marginal2=True)),
            "both": solve_foc(mu, G, w2, ConstraintSet(martingale=True, marginal2=True)),
        }
        rep = oracle.oracle_report(mu, lambda y1, y2: y2, [0.02, 0.05, 0.1, 0.2], reports)
        return rep["pass"]

    def contraction_counterexample():
        mu = sign_copy_measure(32)
        bins = quantile_bins(mu, 32)
        return info_discrepancy_check(mu, bins) > 0.99

    return [("measure invariants", measure_invariants),
            ("criterion consistency", criterion_consistency),
            ("analytic closed forms", closed_forms),
            ("marginal dual path", marginal_two_paths),
            ("fredholm certificate", fredholm_certificate),
            ("constraint monotonicity", monotonicity),
            ("oracle sandwich", oracle_sandwich),
            ("contraction counterexample", contraction_counterexample)]


def cmd_selfcheck(cfg: RunConfig, measure_path: str | None = None) -> int:
    failures = 0
    if measure_path is not None:
        try:
            from_csv(measure_path)
            print(f"{'measure file invariants':32s} PASS")
        except (MeasureError, ValueError, OSError) as exc:
            print(f"{'measure file invariants':32s} FAIL  ({exc})")
            failures += 1
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for name, fn in _selfcheck_items(cfg):
            try:
                ok = fn()
            except Exception as exc:   # a crashed check is a failed check
                print(f"{name:32s} FAIL  ({type(exc).__name__}: {exc})")
                failures += 1
                continue
            print(f"{name:32s} {'PASS' if ok else 'FAIL'}")
            failures += 0 if ok else 1
    print(f"{'-' * 40}\n{failures} failure(s)")
    return EXIT_OK if failures == 0 else EXIT_CHECK_FAILED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wadro",
        description="Model-risk sensitivities of two-period models under "
                    "(adapted) Wasserstein ambiguity balls.",
        epilog=CONFIG_KEYS,
        formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (("curve", "sensitivity curves over a sigma grid"),
                           ("hedge", "hedging strategies at one sigma"),
                           ("oracle", "LP oracle sandwich report"),
                           ("selfcheck", "run the invariant suite")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", help="INI-style configuration file")
        p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                       help="override a configuration value (repeatable)")
        p.add_argument("--out", help="output directory")
        if name == "hedge":
            p.add_argument("--sigma", type=float, required=True)
        if name == "selfcheck":
            p.add_argument("--measure", help="validate a measure CSV file")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {}
    for item in args.set:
        key, sep, val = item.partition("=")
        if not sep or "." not in key:
            print(f"bad --set {item!r}, expected SECTION.KEY=VALUE", file=sys.stderr)
            return EXIT_BAD_CONFIG
        overrides[key.strip()] = val.strip()
    if args.out:
        overrides["output.dir"] = args.out
    try:
        cfg = load_config(args.config, overrides)
    except (ConfigError, ValueError) as exc:
        print(f"bad configuration: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    try:
        if args.command == "curve":
            return cmd_curve(cfg)
        if args.command == "hedge":
            return cmd_hedge(cfg, args.sigma)
        if args.command == "oracle":
            return cmd_oracle(cfg)
        if args.command == "selfcheck":
            return cmd_selfcheck(cfg, args.measure)
    except (MeasureError, CriterionError, SensitivityError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
