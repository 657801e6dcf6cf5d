"""Command-line runner: ``tagged-exclusion <subcommand> config.toml``.

Each run writes CSV tables and a ``summary.json`` into the output
directory.  Exit status is 0 when every check passes, 1 when any check
fails and 2 for usage or configuration errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import platform
import sys
from concurrent.futures import ProcessPoolExecutor
from importlib import metadata
from pathlib import Path

import numpy as np

from . import duality, exact, simulator, spectral
from .config import ConfigError, ExperimentConfig, load_config, validate
from .lattice import build_nn_rates

SUBCOMMANDS = ("simulate", "identity", "exact", "duality-check", "spectral", "bound-scan")


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.17g}"
    return str(x)


def write_csv(path: Path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(x) for x in row])
    path.write_text(buf.getvalue())


def ordered_map(fn, items, workers: int = 1):
    """``map`` that keeps input order, in worker processes when ``workers > 1``."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    return x


class Run:
    """Collects checks and artifacts for one subcommand invocation."""

    def __init__(self, name: str, cfg: ExperimentConfig, out: Path):
        self.name, self.cfg, self.out = name, cfg, out
        self.checks: list[dict] = []
        self.artifacts: list[str] = []

    def check(self, name: str, passed: bool, **detail) -> bool:
        self.checks.append({"name": name, "passed": bool(passed), **detail})
        return bool(passed)

    def table(self, filename: str, header, rows) -> None:
        write_csv(self.out / filename, header, rows)
        self.artifacts.append(filename)

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks)

    def summary(self) -> dict:
        versions = {"python": platform.python_version(), "numpy": np.__version__}
        for pkg in ("scipy", "numba", "artifact"):
            try:
                versions[pkg] = metadata.version(pkg)
            except metadata.PackageNotFoundError:
                versions[pkg] = None
        return _jsonable({"subcommand": self.name, "config": self.cfg.echo(),
                          "seed": self.cfg.seed, "versions": versions, "passed": self.passed,
                          "checks": self.checks, "artifacts": self.artifacts})


# subcommands ---------------------------------------------------------------------------

def _measure(cfg: ExperimentConfig):
    if cfg.initial == "canonical":
        if cfg.n is None or cfg.L is None:
            raise ConfigError("canonical initial law needs both L and n")
        return simulator.InitialMeasure.canonical(cfg.n)
    return simulator.InitialMeasure.stationary(cfg.rho)


def run_simulate(run: Run) -> None:
    cfg = run.cfg
    batch = simulator.simulate_batch(_measure(cfg), cfg.rates, cfg.t_grid, cfg.trials,
                                     cfg.seed, cfg.L)
    table = simulator.variance_from_batch(batch, cfg.centering)
    (run.out / "variance.csv").write_text(table.to_csv())
    run.artifacts.append("variance.csv")
    rows = simulator.martingale_diagnostics(batch)
    run.table("martingale.csv", ["quantity", "estimate", "stderr", "target", "z"],
              [(r.quantity, r.estimate, r.stderr, r.target, r.z) for r in rows])
    for r in rows:
        run.check(f"martingale {r.quantity}", abs(r.z) <= 4.0, z=r.z)


def run_identity(run: Run) -> None:
    cfg = run.cfg
    t = float(cfg.t_grid[-1])
    rep = simulator.check_variance_identity(cfg.rates, cfg.rho, t, cfg.trials, cfg.seed, cfg.L)
    d = rep.as_dict()
    run.table("identity.csv", list(d), [list(d.values())])
    run.check("variance identity", abs(rep.z) <= cfg.identity_sigma, **d)


def _rel(a: float, b: float) -> float:
    return abs(a - b) / max(abs(a), abs(b), 1e-300)


def _exact_lambda(args):
    cfg_raw, lam = args
    cfg = validate(cfg_raw)
    space = exact.StateSpace.build(cfg.L, cfg.dimension, cfg.n, cfg.state_cap)
    rates = cfg.rates
    ops = exact.Operators.build(space, rates)
    rows = []
    F = exact.drift_vectors(space, rates, "forward")
    rng = np.random.default_rng([cfg.seed, int(round(-math.log10(lam) * 1000))])
    fs = [("drift", F[:, 0])] + [(f"random{k}", rng.normal(size=space.size))
                                 for k in range(cfg.random_functions)]
    for label, f in fs:
        rep = exact.verify_variational(ops, f, lam)
        rows.append(("variational", label, lam, rep.resolvent, rep.sup, rep.max_rel_error,
                     rep.tolerance, rep.passed))
    lb = exact.verify_lower_bound(space, rates, lam)
    e1, e2 = lb.errors
    rows.append(("lower_bound_laplace", "drift", lam, lb.laplace_gap, lb.resolvent_gap, e1,
                 1e-10, e1 <= 1e-10))
    rows.append(("lower_bound_quadratic", "drift", lam, lb.resolvent_gap, lb.quadratic_form, e2,
                 1e-10, e2 <= 1e-10))
    rows.append(("lower_bound_sign", "drift", lam, lb.quadratic_form, 0.0, 0.0, 0.0,
                 lb.quadratic_form >= -1e-12))
    resolvent = exact.laplace_variance(space, rates, lam)
    curve = exact.laplace_of_curve(space, rates, lam)
    err = _rel(resolvent, curve)
    rows.append(("laplace_variance", "drift", lam, resolvent, curve, err, 1e-8, err <= 1e-8))
    cmp_ = exact.verify_comparisons(space, rates, F[:, 0], lam)
    rows.append(("env_below_nn", "drift", lam, cmp_.h1_env, cmp_.h1_nn, 0.0, 0.0,
                 cmp_.env_below_nn))
    ratio = cmp_.nn_over_env
    rows.append(("nn_over_env_ratio", "drift", lam, ratio, 0.0, 0.0, 0.0, math.isfinite(ratio)))
    ratio = cmp_.resolvent_ratio
    rows.append(("resolvent_ratio", "drift", lam, ratio, 0.0, 0.0, 0.0, math.isfinite(ratio)))
    return rows


def run_exact(run: Run) -> None:
    cfg = run.cfg
    if cfg.L is None or cfg.n is None:
        raise ConfigError("the exact solver needs L and n")
    exact.StateSpace.build(cfg.L, cfg.dimension, cfg.n, cfg.state_cap)
    results = ordered_map(_exact_lambda, [(cfg.echo(), float(lam)) for lam in cfg.lambdas],
                          cfg.workers)
    rows = [r for block in results for r in block]
    run.table("exact.csv", ["check", "function", "lambda", "lhs", "rhs", "error", "tolerance",
                            "passed"], rows)
    for check, label, lam, lhs, rhs, err, tol, ok in rows:
        run.check(f"{check} {label} lambda={fmt(lam)}", ok, lhs=lhs, rhs=rhs, error=err)


def run_duality(run: Run) -> None:
    cfg = run.cfg
    d, rates, rho = cfg.dimension, cfg.rates, cfg.rho
    dual = cfg.section("duality")
    top = dual["max_degree"]
    if top is None and d == 2:
        top = 2  # all subsets of the 5x5 box is far too many
    sets = duality.box_sets(d, dual["half_width"], top)
    results = duality.duality_oracle(rates, rho, sets)
    worst: dict[str, float] = {}
    for r in results:
        worst[r.op] = max(worst.get(r.op, 0.0), r.error)
    run.table("duality.csv", ["operator", "bases", "max_error"],
              [(op, sum(1 for r in results if r.op == op), e) for op, e in worst.items()])
    for op, e in worst.items():
        run.check(f"duality {op}", e <= 1e-12, max_error=e)

    # closed-form nearest-neighbour degree actions against the generic operators
    nn = build_nn_rates(rates)
    rng = np.random.default_rng(cfg.seed)
    box = [k[0] for k in duality.box_sets(d, 2, 1)]
    g = duality.CoefficientFunction(d, {(x,): float(rng.normal()) for x in box})
    generic11 = (duality.apply_coefficient_operator("Ae0", g, nn, rho)
                 + duality.apply_coefficient_operator("At0", g, nn, rho)).part(1)
    generic12 = (duality.apply_coefficient_operator("Ae+", g, nn, rho)
                 + duality.apply_coefficient_operator("At+", g, nn, rho).part(2))
    closed11 = duality.apply_A_nn_degree(g, "1->1", nn, rho)
    closed12 = duality.apply_A_nn_degree(g, "1->2", nn, rho)
    e11, e12 = closed11.distance(generic11), closed12.distance(generic12)
    rows = [("A_1->1", e11), ("A_1->2", e12)]
    run.check("closed form 1->1", e11 <= 1e-12, max_error=e11)
    run.check("closed form 1->2", e12 <= 1e-12, max_error=e12)
    if d == 1:
        f = duality.CoefficientFunction(1, {B: float(rng.normal()) for B in sets[:40]})
        Nf = duality.apply_coefficient_operator("N", f, rates, rho)
        NNf = duality.apply_coefficient_operator("N", Nf, rates, rho)
        e = NNf.distance(Nf.scale(-2.0))
        rows.append(("N^2+2N", e))
        run.check("exchange squares to -2N", e <= 1e-12, max_error=e)
    run.table("closed_forms.csv", ["identity", "max_error"], rows)


def _random_full_degree_one(d: int, seed: int) -> duality.CoefficientFunction:
    rng = np.random.default_rng(seed)
    from itertools import product
    data = {(x,): float(rng.normal()) for x in product(range(-2, 3), repeat=d)}
    return duality.CoefficientFunction(d, data, "full")


def run_spectral(run: Run) -> None:
    cfg = run.cfg
    d, rho = cfg.dimension, cfg.rho
    sec = cfg.section("spectral")
    nn = build_nn_rates(cfg.rates)
    g = _random_full_degree_one(d, cfg.seed)
    ft = spectral.verify_prop_FT(g, nn, rho, nodes=sec["nodes"], seed=cfg.seed)
    run.table("transform_residuals.csv", list(ft.as_dict()), [list(ft.as_dict().values())])
    run.check("transform residual 1->1", ft.residual_error_11 < 1e-12,
              error=ft.residual_error_11)
    run.check("transform residual 1->2", ft.residual_error_12 < 1e-12,
              error=ft.residual_error_12)
    run.check("corner decay finite",
              math.isfinite(ft.decay_constant_11) and math.isfinite(ft.decay_constant_12),
              c11=ft.decay_constant_11, c12=ft.decay_constant_12)

    if not np.any(cfg.rates.spectral_coefficients()):
        run.check("minimizer needs drift", True, skipped=True)
        return
    grid = _grid(cfg, 1)
    rows, sup = [], {}
    for lam in sec["lambdas"]:
        m = spectral.minimizer_g_lambda(lam, cfg.rates, rho, grid, sec["radius"])
        origin = m.values[(0,) * d]
        rows.append((lam, m.max_imag, m.odd_defect(), origin, m.unit_sum()))
        for x, v in m.values.items():
            sup[x] = max(sup.get(x, 0.0), abs(v))
        run.check(f"minimizer real lambda={fmt(lam)}", m.max_imag < 1e-6, value=m.max_imag)
        run.check(f"minimizer odd lambda={fmt(lam)}", m.odd_defect() < 1e-6,
                  value=m.odd_defect())
        run.check(f"minimizer vanishes at origin lambda={fmt(lam)}", abs(origin) < 1e-6,
                  value=origin)
        run.check(f"minimizer unit sum lambda={fmt(lam)}", abs(m.unit_sum()) < 1e-6,
                  value=m.unit_sum())
    run.table("minimizer.csv", ["lambda", "max_imag", "odd_defect", "origin", "unit_sum"], rows)
    run.table("minimizer_sup.csv", ["site", "sup_abs"],
              [(" ".join(map(str, x)), v) for x, v in sorted(sup.items())])
    top = max(sup.values())
    run.check("minimizer bounded over lambda scan", math.isfinite(top), sup=top)


def _grid(cfg: ExperimentConfig, n: int):
    quad = cfg.section("quadrature")
    size = quad["single" if n == 1 else "double"]
    base = spectral.default_grid(cfg.dimension, n)
    if size is None:
        return spectral.SpectralGrid(cfg.dimension, n, base.N, quad["grading"])
    return spectral.SpectralGrid(cfg.dimension, n, int(size), quad["grading"])


def _bound_lambda(args):
    cfg_raw, lam = args
    cfg = validate(cfg_raw)
    return spectral.eval_bound_integrals(lam, cfg.rates, cfg.rho, _grid(cfg, 1), _grid(cfg, 2))


def run_bound_scan(run: Run) -> None:
    cfg = run.cfg
    sec = cfg.section("bound")
    lams = [float(x) for x in sec["lambdas"]]
    if not np.any(cfg.rates.spectral_coefficients()):
        raise ConfigError("the bound scan needs rates with drift")
    rows = ordered_map(_bound_lambda, [(cfg.echo(), lam) for lam in lams], cfg.workers)
    table = []
    for r in rows:
        for k in sorted(r.values):
            table.append((r.lam, k, r.values[k], r.refined[k], r.discrepancy(k)))
        for k, v in r.lines.items():
            table.append((r.lam, k, math.nan, v, math.nan))
        table.append((r.lam, "total", math.nan, r.total, math.nan))
    run.table("bound_integrals.csv", ["lambda", "quantity", "coarse", "refined", "discrepancy"],
              table)
    keys = ("I_step1", "I_first", "I_second", "I_third", "I_fourth", "I_delta0_2", "I_delta1")
    verdicts = [spectral.boundedness_verdict(k, [r.refined[k] for r in rows], sec["tolerance"])
                for k in keys]
    verdicts.append(spectral.boundedness_verdict("total", [r.total for r in rows],
                                                 sec["tolerance"]))
    run.table("bound_verdicts.csv", ["quantity", "bounded", "last_ratio", "monotone_after_max"],
              [(v.key, v.bounded, v.last_ratio, v.monotone_after_max) for v in verdicts])
    for v in verdicts:
        run.check(f"bounded {v.key}", v.bounded, last_ratio=v.last_ratio)

    single = _grid(cfg, 1)
    brows = []
    for t in sec["t_values"]:
        lam = 1.0 / t
        match = [r for r in rows if math.isclose(r.lam, lam, rel_tol=1e-12)]
        with_g = match[0].total if match else spectral.mainprop_bound(
            t, cfg.rates, cfg.rho, single, _grid(cfg, 2))
        zero = spectral.mainprop_bound(t, cfg.rates, cfg.rho, single, plug_zero=True)
        brows.append((t, with_g, zero))
    run.table("mainprop_bound.csv", ["t", "bound_minimizer", "bound_zero"], brows)

    if sec["control"] and cfg.dimension == 2:
        vals, slope = spectral.control_scan(2, cfg.rho, lams, single)
        run.table("control_scan.csv", ["lambda", "I_step1"], list(zip(lams, vals)))
        run.check("driftless control grows like log", slope > 0, slope=slope)


RUNNERS = {
    "simulate": run_simulate,
    "identity": run_identity,
    "exact": run_exact,
    "duality-check": run_duality,
    "spectral": run_spectral,
    "bound-scan": run_bound_scan,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tagged-exclusion",
                                description="Tagged particle experiments on exclusion processes.")
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("config", type=Path, help="TOML experiment file")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config key (TOML literal value, dotted keys allowed)")
    p.add_argument("--output", type=Path, default=None, help="output directory")
    return p


def run(subcommand: str, cfg: ExperimentConfig, out: Path | None = None) -> tuple[int, dict]:
    out = Path(out) if out is not None else cfg.output_path
    out.mkdir(parents=True, exist_ok=True)
    r = Run(subcommand, cfg, out)
    RUNNERS[subcommand](r)
    summary = r.summary()
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return (0 if r.passed else 1), summary


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.overrides)
        status, summary = run(args.subcommand, cfg, args.output)
    except (ConfigError, OSError) as exc:
        print(f"tagged-exclusion: error: {exc}", file=sys.stderr)
        return 2
    out = args.output or cfg.output_path
    for c in summary["checks"]:
        print(f"{'PASS' if c['passed'] else 'FAIL'}  {c['name']}")
    if status:
        print(f"failing checks recorded in {out / 'summary.json'}", file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
