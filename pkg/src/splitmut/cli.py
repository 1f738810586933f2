"""Command-line front end: analytic tables, single simulations, validation.

Subcommands
-----------
``analytic``   expected-spectrum / limit-constant / old-family tables as CSV
``simulate``   one tree: snapshot export plus partition statistics
``validate``   named Monte-Carlo test suites; exit code 1 if any fails
``scan``       derived scalars swept over one parameter

Model flags mirror the mathematical symbols (``--b --d --p --theta --t``)
with long aliases; ``--config`` reads the same keys from a ``key = value``
file, flags taking precedence.  Every output file starts with comment lines
echoing the resolved configuration and the tool version, and contains no
timestamps, so identical invocations produce byte-identical files.  The
output directory is ``--output-dir``, defaulting to $SPLITMUT_OUTPUT_DIR or
the working directory.
"""

from __future__ import annotations

import argparse
import math
import os
import sys

import numpy as np

from . import __version__, analytic, stats
from .model import (LifespanMeasure, ModelI, ModelII, ModelParams,
                    clonal_params, classify, mean_offspring, mutation_intensity,
                    params_from_config, parse_config_file)
from .simulate import (Caps, allelic_partition, export_snapshot,
                       simulate_tree, snapshot_statistics)

_SUITES = ("marginals", "spectrum", "limits", "conjecture", "all")


def _add_model_flags(sp):
    sp.add_argument("--config", help="key = value config file; flags override it")
    sp.add_argument("--b", "--birth-rate", dest="b", type=float,
                    help="birth rate b (per unit time)")
    sp.add_argument("--d", "--death-rate", dest="d", type=float,
                    help="death rate d; 0 means immortal particles")
    sp.add_argument("--model", choices=("I", "II"),
                    help="mutation mechanism: I at birth, II along lifelines")
    sp.add_argument("--p", type=float, help="model I mutation probability")
    sp.add_argument("--theta", type=float, help="model II mutation rate")
    sp.add_argument("--lifespan", choices=("exponential", "tabulated"),
                    help="lifespan family (default exponential)")
    sp.add_argument("--tail-file", help="one-column tail grid for --lifespan tabulated")
    sp.add_argument("--tail-step", type=float, help="grid step of --tail-file")
    sp.add_argument("--output-dir", default=None,
                    help="where to write CSVs (default $SPLITMUT_OUTPUT_DIR or '.')")


def _resolved_config(args) -> dict:
    cfg = {}
    if args.config:
        cfg.update(parse_config_file(args.config))
    for key in ("b", "d", "model", "p", "theta", "lifespan", "tail_file", "tail_step"):
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    return cfg


def _build_params(args) -> tuple[ModelParams, dict]:
    cfg = _resolved_config(args)
    if "b" not in cfg and str(cfg.get("lifespan", "")) != "tabulated":
        raise SystemExit("error: --b (birth rate) is required")
    if "model" not in cfg:
        raise SystemExit("error: --model I or --model II is required")
    model = str(cfg["model"]).upper()
    if model == "I" and "p" not in cfg:
        raise SystemExit("error: --model I requires --p")
    if model == "II" and "theta" not in cfg:
        raise SystemExit("error: --model II requires --theta")
    if model == "I" and not 0.0 <= float(cfg["p"]) < 1.0:
        raise SystemExit(f"error: --p must be in [0, 1), got {cfg['p']}")
    if model == "II" and float(cfg["theta"]) < 0.0:
        raise SystemExit(f"error: --theta must be >= 0, got {cfg['theta']}")
    try:
        params = params_from_config(cfg)
    except (KeyError, ValueError) as exc:
        raise SystemExit(f"error: {exc}")
    return params, cfg


def _out_dir(args) -> str:
    out = args.output_dir or os.environ.get("SPLITMUT_OUTPUT_DIR") or "."
    os.makedirs(out, exist_ok=True)
    return out


def _write_csv(path, header_cfg: dict, columns: list[str], rows) -> None:
    with open(path, "w") as fh:
        fh.write(f"# splitmut={__version__}\n")
        for k, v in header_cfg.items():
            if v is not None:
                fh.write(f"# {k}={v}\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(str(x) for x in row) + "\n")
    print(f"wrote {path}")


def _parse_grid(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip() != ""]


# ---------------------------------------------------------------------------
# analytic

def cmd_analytic(args) -> int:
    params, cfg = _build_params(args)
    cfg = {**cfg, "t": args.t, "i_max": args.i_max, "ages": args.ages}
    out = _out_dir(args)
    ages = _parse_grid(args.ages) if args.ages else [args.t / 4, args.t / 2, args.t]
    rows = []
    for i in range(1, args.i_max + 1):
        for a in ages:
            rows.append((i, a, args.t,
                         analytic.expected_spectrum(params, i, min(a, args.t), args.t)))
    _write_csv(os.path.join(out, "expected_spectrum.csv"), cfg,
               ["i", "a", "t", "expected_count"], rows)

    cp = clonal_params(params) if params.is_exponential else None
    if params.is_exponential and analytic.malthusian(params.lifespan) > 0:
        rows = []
        for i in range(1, args.i_max + 1):
            ji = analytic.limit_spectrum_J(params, i)
            if cp.r_star > 0:
                asym = float(analytic.tail_supercritical(params, i))
            elif cp.r_star == 0:
                asym = float(analytic.tail_critical(params, i))
            else:
                asym = math.nan
            rows.append((i, ji, asym, ji / asym if asym and not math.isnan(asym) else math.nan))
        _write_csv(os.path.join(out, "limit_spectrum.csv"), cfg,
                   ["i", "J_i", "tail_asymptote", "ratio"], rows)
        if cp.r_star < 0:
            rows = []
            for a in ages:
                L, q = analytic.old_family_limit(params, a)
                rows.append((a, L, q))
            _write_csv(os.path.join(out, "old_families.csv"), cfg,
                       ["a", "L", "geometric_success"], rows)
    return 0


# ---------------------------------------------------------------------------
# simulate

def cmd_simulate(args) -> int:
    params, cfg = _build_params(args)
    cfg = {**cfg, "t": args.t, "seed": args.seed, "i_max": args.i_max}
    out = _out_dir(args)
    caps = Caps(max_particles=args.max_particles, max_events=args.max_events)
    snap = simulate_tree(params, args.t, args.seed, caps)
    export_snapshot(snap, os.path.join(out, "particles.csv"),
                    os.path.join(out, "mutations.csv"), header=cfg)
    print(f"wrote {os.path.join(out, 'particles.csv')}")
    print(f"wrote {os.path.join(out, 'mutations.csv')}")
    part = allelic_partition(snap)
    _write_csv(os.path.join(out, "families.csv"), cfg,
               ["type_id", "origin_time", "age", "size"],
               [(int(part.type_ids[k]), float(part.origin_times[k]),
                 float(part.ages[k]), int(part.sizes[k]))
                for k in range(part.n_families)])
    ages = _parse_grid(args.ages) if args.ages else [args.t / 4, args.t / 2, args.t]
    sizes = _parse_grid(args.sizes) if args.sizes else [1, 2, 4, 8]
    st = snapshot_statistics(part, args.i_max, ages, sizes)
    rows = [(i + 1, float(st.age_grid[j]), int(st.spectrum[i, j]))
            for i in range(st.i_max) for j in range(st.age_grid.size)]
    _write_csv(os.path.join(out, "spectrum.csv"), cfg,
               ["i", "a", "count"], rows)
    rows = [(float(a), int(c)) for a, c in zip(st.age_grid, st.old_counts)]
    _write_csv(os.path.join(out, "old_families.csv"), cfg, ["a", "count"], rows)
    rows = [(float(x), int(c)) for x, c in zip(st.size_grid, st.large_counts)]
    _write_csv(os.path.join(out, "large_families.csv"), cfg, ["x", "count"], rows)
    print(f"alive={snap.z} families={part.n_families} types_seen={snap.n_types}")
    return 0


# ---------------------------------------------------------------------------
# validate

def _suite_marginals(params, args, reports):
    cfg = stats.CollectConfig(params=params, t=args.t or 3.0,
                              n_replicas=args.replicas, seed=args.seed,
                              threads=args.threads)
    batch = stats.run_batch(cfg)
    reports.append(stats.test_geometric_marginal(batch))
    reports.append(stats.test_extinction_mass(batch))
    t_limit = max(args.t or 0.0, 10.0)
    cfg = stats.CollectConfig(params=params, t=t_limit,
                              n_replicas=max(args.replicas // 2, 1000),
                              seed=args.seed + 1, conditioned=True,
                              threads=args.threads)
    reports.append(stats.test_exponential_limit(stats.run_batch(cfg)))


def _suite_spectrum(params, args, reports):
    t = args.t or 5.0
    cfg = stats.CollectConfig(params=params, t=t, n_replicas=args.replicas,
                              seed=args.seed, i_max=5,
                              age_grid=(t / 5.0, t / 2.0, t),
                              threads=args.threads)
    reports.append(stats.test_expected_spectrum(stats.run_batch(cfg)))
    if analytic.malthusian(params.lifespan) > 0:
        n_lim = max(args.replicas // 5, 600)
        t2 = max(args.t or 0.0, 10.0)
        mk = lambda tt, sd: stats.run_batch(stats.CollectConfig(
            params=params, t=tt, n_replicas=n_lim, seed=sd, conditioned=True,
            i_max=3, age_grid=(tt,), threads=args.threads))
        reports.extend(stats.test_spectrum_limits(mk(t2 - 2.0, args.seed + 2),
                                                  mk(t2, args.seed + 3)))


def _suite_limits(params, args, reports):
    cp = clonal_params(params)
    if cp.r_star >= 0:
        print("limits suite needs a subcritical clonal process; skipping")
        return
    t = args.t or 10.0
    ct = analytic.old_family_scale(params, t)
    ages = (ct, ct + 1.0)
    intervals = ((ct, math.inf), (ct, ct + 0.7), (ct + 0.7, ct + 1.7))
    cfg = stats.CollectConfig(params=params, t=t, n_replicas=args.replicas,
                              seed=args.seed, conditioned=True, age_grid=ages,
                              age_intervals=intervals, threads=args.threads)
    batch = stats.run_batch(cfg)
    reports.extend(stats.test_old_families_mean(batch, a_list=(0.0, 1.0)))
    reports.append(stats.test_old_families_geometric(batch, 0.0))
    reports.extend(stats.test_age_point_process(batch))
    if isinstance(params.mutation, ModelII):
        theta = params.mutation.theta
        r = analytic.malthusian(params.lifespan)
        if theta > r > 0:
            n_star = args.n_star
            tn = analytic.subsequence_times(params, n_star)
            cfg = stats.CollectConfig(
                params=params, t=tn, n_replicas=max(args.replicas // 5, 200),
                seed=args.seed + 4, conditioned=True,
                size_grid=tuple(n_star + c for c in range(-1, 3)),
                threads=args.threads)
            reports.extend(stats.test_large_families_II(stats.run_batch(cfg), n_star))


def _suite_conjecture(params, args, reports):
    cp = clonal_params(params)
    t = args.t or 6.0
    reports.append(stats.probe_conjecture(
        params, [t, t + 1.0, t + 2.0], max(args.replicas // 10, 200),
        args.seed, threads=args.threads))


def cmd_validate(args) -> int:
    params, cfg = _build_params(args)
    if args.suite not in _SUITES:
        raise SystemExit(f"error: unknown suite {args.suite!r}; choose from {_SUITES}")
    reports: list[stats.TestReport] = []
    suites = {
        "marginals": _suite_marginals,
        "spectrum": _suite_spectrum,
        "limits": _suite_limits,
        "conjecture": _suite_conjecture,
    }
    chosen = _SUITES[:-1] if args.suite == "all" else (args.suite,)
    for name in chosen:
        suites[name](params, args, reports)
    out = _out_dir(args)
    cfg = {**cfg, "suite": args.suite, "replicas": args.replicas,
           "seed": args.seed, "threads": args.threads}
    rows = [(r.name, r.statistic, "" if r.p_value is None else r.p_value,
             r.criterion.replace(",", ";"), int(r.passed), int(r.exploratory),
             r.n_samples, r.seed) for r in reports]
    _write_csv(os.path.join(out, "reports.csv"), cfg,
               ["name", "statistic", "p_value", "criterion", "passed",
                "exploratory", "n_samples", "seed"], rows)
    for r in reports:
        print(r.line())
    failed = [r for r in reports if not r.exploratory and not r.passed]
    print(f"{len(reports) - len(failed)}/{len(reports)} checks passed")
    return 1 if failed else 0


# ---------------------------------------------------------------------------
# scan

def cmd_scan(args) -> int:
    params, cfg = _build_params(args)
    values = _parse_grid(args.values)
    cfg = {**cfg, "param": args.param, "values": args.values}
    rows = []
    for v in values:
        b = params.lifespan.b
        d = params.lifespan.death_rate
        mut = params.mutation
        if args.param == "b":
            b = v
        elif args.param == "d":
            d = v
        elif args.param == "p":
            mut = ModelI(v)
        elif args.param == "theta":
            mut = ModelII(v)
        pv = ModelParams(LifespanMeasure.exponential(b, d), mut)
        cp = clonal_params(pv)
        r = analytic.malthusian(pv.lifespan)
        j = analytic.J_total(pv) if r > 0 and mutation_intensity(pv) > 0 else math.nan
        rows.append((v, mean_offspring(pv), classify(pv).value, r,
                     cp.b_star, cp.d_star, cp.r_star, cp.criticality.value, j))
    out = _out_dir(args)
    _write_csv(os.path.join(out, "scan.csv"), cfg,
               ["value", "mean_offspring", "class", "r",
                "b_star", "d_star", "r_star", "clonal_class", "J"], rows)
    return 0


# ---------------------------------------------------------------------------

def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        prog="splitmut",
        description="Birth-death splitting trees with neutral mutations: "
                    "analytics, simulation, Monte-Carlo validation.")
    ap.add_argument("--version", action="version", version=f"splitmut {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("analytic", help="closed-form tables as CSV")
    _add_model_flags(sp)
    sp.add_argument("--t", "--horizon", dest="t", type=float, required=True)
    sp.add_argument("--i-max", type=int, default=10)
    sp.add_argument("--ages", help="comma-separated age bounds (default t/4,t/2,t)")
    sp.set_defaults(func=cmd_analytic)

    sp = sub.add_parser("simulate", help="simulate one tree and export it")
    _add_model_flags(sp)
    sp.add_argument("--t", "--horizon", dest="t", type=float, required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--i-max", type=int, default=10)
    sp.add_argument("--ages", help="age grid for the statistics tables")
    sp.add_argument("--sizes", help="size thresholds for the statistics tables")
    sp.add_argument("--max-particles", type=int, default=10_000_000)
    sp.add_argument("--max-events", type=int, default=50_000_000)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("validate", help="run a Monte-Carlo validation suite")
    _add_model_flags(sp)
    sp.add_argument("--suite", required=True,
                    help="one of: " + ", ".join(_SUITES))
    sp.add_argument("--t", "--horizon", dest="t", type=float)
    sp.add_argument("--replicas", type=int, default=4000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--threads", type=int, default=1)
    sp.add_argument("--n-star", type=int, default=25,
                    help="subsequence index for the large-family suite")
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("scan", help="sweep one parameter, print derived scalars")
    _add_model_flags(sp)
    sp.add_argument("--param", required=True, choices=("b", "d", "p", "theta"))
    sp.add_argument("--values", required=True, help="comma-separated values")
    sp.set_defaults(func=cmd_scan)

    args = ap.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
