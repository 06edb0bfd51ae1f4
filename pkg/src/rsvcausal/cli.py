"""Command-line entry points: estimation, simulation studies, diagnostics.

Exit codes: 0 on success, 2 for data/configuration errors, 3 for
identification failures; the error class name is printed to stderr so
pipelines can branch on it. Every output file embeds the full flag set for
reproducibility, and numeric CSV cells carry 17 significant digits.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import numpy as np

from . import __version__
from .baseline import surrogate_estimate
from .data import Mode, load_csv, load_did_csv
from .dgp import DgpSpec, gen_adversarial, gen_calibrated, gen_did, gen_iv
from .diagnostics import relevance_test, specification_test, stability_export, write_stability_csv
from .errors import DataError, IdentificationError, RsvError
from .estimate import EstimateConfig, estimate_ate
from .multivalued import BinningSpec, discretize
from .predict import fit_predictors
from .quasi import did_att, iv_late

__all__ = ["main", "cmd_estimate", "cmd_simulate", "cmd_diagnose"]

_G17 = "{:.17g}".format


def _common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--folds", type=int, default=2)
    p.add_argument("--predictor", choices=["logistic", "knn", "stumps"], default="logistic")
    p.add_argument("--class-weights", default=None, help="per-class weights, e.g. 1:10")
    p.add_argument("--bootstrap", type=int, default=1000)
    p.add_argument("--alpha", type=float, default=0.10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=".", help="output directory")


def _parse_weights(text):
    if text is None:
        return None
    return [float(v) for v in text.split(":")]


def _config_from(args) -> EstimateConfig:
    return EstimateConfig(
        n_folds=args.folds,
        predictor=args.predictor,
        class_weights=_parse_weights(args.class_weights),
        bootstrap=args.bootstrap,
        alpha=args.alpha,
        seed=args.seed,
    )


def _echo(args) -> dict:
    d = {k: v for k, v in vars(args).items() if k != "func"}
    d["version"] = __version__
    return d


def _load_for(args):
    mode = Mode(args.mode)
    if mode == Mode.DID:
        return load_did_csv(args.data, schema=_schema_from(args))
    k = args.k_outcomes
    if args.bin_epsilon is not None:
        k = 0
    ds = load_csv(args.data, schema=_schema_from(args), k_outcomes=k, mode=mode)
    if args.bin_epsilon is not None:
        raw = ds.outcome_raw[~np.isnan(ds.outcome_raw)]
        lo = args.bin_lo if args.bin_lo is not None else float(raw.min())
        hi = args.bin_hi if args.bin_hi is not None else float(raw.max())
        ds = discretize(ds, BinningSpec(args.bin_epsilon, lo, hi))
    return ds


def _schema_from(args):
    if getattr(args, "cluster_col", None):
        return {"cluster": args.cluster_col}
    return None


def cmd_estimate(args) -> int:
    ds = _load_for(args)
    config = _config_from(args)
    mode = Mode(args.mode)
    if mode == Mode.IV:
        res = iv_late(ds, config)
        payload = {
            "late": res.late,
            "alpha": {f"d={d},z={z}": v for (d, z), v in res.alpha.items()},
            "alpha_z": {str(z): v for z, v in res.alpha_z.items()},
            "beta_z": {str(z): v for z, v in res.beta_z.items()},
            "se": res.se,
            "ci_low": res.ci_low,
            "ci_high": res.ci_high,
            "meta": res.meta,
        }
        row = {"late": res.late, "se": res.se, "ci_low": res.ci_low, "ci_high": res.ci_high}
    elif mode == Mode.DID:
        res = did_att(ds, config)
        payload = {
            "att": res.att,
            "alpha_t": {f"t={t},d={d}": v for (t, d), v in res.alpha_t.items()},
            "se": res.se,
            "ci_low": res.ci_low,
            "ci_high": res.ci_high,
            "meta": res.meta,
        }
        row = {"att": res.att, "se": res.se, "ci_low": res.ci_low, "ci_high": res.ci_high}
    else:
        res = estimate_ate(ds, config)
        payload = res.to_dict()
        row = {
            "theta_hat": res.theta_hat,
            "se": res.se,
            "ci_low": res.ci_low,
            "ci_high": res.ci_high,
        }
    payload["run_config"] = _echo(args)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "estimate.json"), "w") as fh:
        json.dump(payload, fh, sort_keys=True, default=str, indent=1)
    with open(os.path.join(args.out, "estimate.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(row))
        writer.writerow([_G17(float(v)) for v in row.values()])
    return 0


def _one_replication(method, dgp, tau, n, rep, args):
    """Single Monte Carlo cell; returns a result row dict."""
    # one dataset per (tau, n, rep) cell: methods see identical data
    seed = int(
        np.random.SeedSequence(
            [args.seed, int(round(tau * 1e6)), n, rep]
        ).generate_state(1)[0]
    )
    spec = DgpSpec(
        kind=dgp,
        n=n,
        theta_shift=tau,
        a=args.a,
        b=args.b,
        rsv_dim=args.rsv_dim,
        seed=seed,
        late=args.late,
        att=args.att,
    )
    row = {
        "method": method,
        "tau": tau,
        "n": n,
        "rep": rep,
        "estimate": float("nan"),
        "se": float("nan"),
        "ci_low": float("nan"),
        "ci_high": float("nan"),
        "true": float("nan"),
        "error": "",
    }
    try:
        if dgp == "calibrated":
            ds = gen_calibrated(spec)
            truth = ds.meta["theta_true"]
        elif dgp == "adversarial":
            ds = gen_adversarial(spec)
            truth = ds.meta["theta_true"]
        elif dgp == "iv":
            ds = gen_iv(spec)
            truth = ds.meta["late_true"]
        elif dgp == "did":
            ds = gen_did(spec)
            truth = ds.meta["att_true"]
        else:
            raise DataError(f"unknown dgp {dgp!r}")
        row["true"] = truth
        config = EstimateConfig(
            n_folds=args.folds,
            predictor=args.predictor,
            class_weights=_parse_weights(args.class_weights),
            bootstrap=args.bootstrap,
            alpha=args.alpha,
            seed=seed + 1,
        )
        if method == "ours":
            if dgp == "iv":
                r = iv_late(ds, config)
                row.update(estimate=r.late, se=r.se, ci_low=r.ci_low, ci_high=r.ci_high)
            elif dgp == "did":
                r = did_att(ds, config)
                row.update(estimate=r.att, se=r.se, ci_low=r.ci_low, ci_high=r.ci_high)
            else:
                r = estimate_ate(ds, config)
                row.update(
                    estimate=r.theta_hat, se=r.se, ci_low=r.ci_low, ci_high=r.ci_high
                )
        elif method == "common":
            ps = fit_predictors(
                ds,
                kind=args.predictor,
                class_weights=_parse_weights(args.class_weights),
                seed=seed + 2,
            )
            row["estimate"] = surrogate_estimate(ds, ps)
        elif method == "benchmark":
            d_full = np.asarray(ds.meta["full_treatment"])
            y_full = np.asarray(ds.meta["full_outcome"], dtype=np.float64)
            row["estimate"] = float(
                y_full[d_full == 1].mean() - y_full[d_full == 0].mean()
            )
        else:
            raise DataError(f"unknown method {method!r}")
    except RsvError as exc:
        row["error"] = type(exc).__name__
    return row


def cmd_simulate(args) -> int:
    taus = [float(v) for v in args.tau_grid.split(",")] if args.tau_grid else [0.0]
    ns = [int(v) for v in args.n_grid.split(",")]
    methods = args.methods.split(",")
    if args.dgp in ("iv", "did", "adversarial"):
        taus = [0.0]
    tasks = [
        (m, args.dgp, tau, n, rep, args)
        for m in methods
        for tau in taus
        for n in ns
        for rep in range(args.reps)
    ]
    workers = int(os.environ.get("RSV_THREADS", "1"))
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_replication_star, tasks, chunksize=8))
    else:
        rows = [_one_replication(*t) for t in tasks]
    rows.sort(key=lambda r: (r["method"], r["tau"], r["n"], r["rep"]))

    os.makedirs(args.out, exist_ok=True)
    fields = ["method", "tau", "n", "rep", "estimate", "se", "ci_low", "ci_high", "true", "error"]
    with open(os.path.join(args.out, "mc_results.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(fields + ["run_config"])
        echo = json.dumps(_echo(args), sort_keys=True)
        for i, r in enumerate(rows):
            vals = [
                r[f] if isinstance(r[f], (str, int)) else _G17(float(r[f]))
                for f in fields
            ]
            writer.writerow(vals + ([echo] if i == 0 else [""]))

    with open(os.path.join(args.out, "mc_summary.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["method", "tau", "n", "bias", "sd", "rmse", "coverage", "n_failed", "run_config"]
        )
        echo = json.dumps(_echo(args), sort_keys=True)
        first = True
        for m in sorted(set(r["method"] for r in rows)):
            for tau in sorted(set(r["tau"] for r in rows)):
                for n in sorted(set(r["n"] for r in rows)):
                    grp = [
                        r
                        for r in rows
                        if r["method"] == m and r["tau"] == tau and r["n"] == n
                    ]
                    est = np.array([g["estimate"] for g in grp if not g["error"]])
                    true = np.array([g["true"] for g in grp if not g["error"]])
                    n_failed = sum(1 for g in grp if g["error"])
                    if est.size:
                        bias = float(np.mean(est - true))
                        sd = float(np.std(est, ddof=1)) if est.size > 1 else 0.0
                        rmse = float(np.sqrt(np.mean((est - true) ** 2)))
                    else:
                        bias = sd = rmse = float("nan")
                    lo = np.array([g["ci_low"] for g in grp if not g["error"]])
                    hi = np.array([g["ci_high"] for g in grp if not g["error"]])
                    with_ci = np.isfinite(lo) & np.isfinite(hi)
                    coverage = (
                        float(np.mean((lo[with_ci] <= true[with_ci]) & (true[with_ci] <= hi[with_ci])))
                        if with_ci.any()
                        else float("nan")
                    )
                    writer.writerow(
                        [m, _G17(tau), n, _G17(bias), _G17(sd), _G17(rmse), _G17(coverage), n_failed]
                        + ([echo] if first else [""])
                    )
                    first = False
    return 0


def _replication_star(t):
    return _one_replication(*t)


def cmd_diagnose(args) -> int:
    ds = _load_for(args)
    config = _config_from(args)
    out = {"run_config": _echo(args)}
    os.makedirs(args.out, exist_ok=True)
    checks = ["relevance", "specification", "stability"] if args.check == "all" else [args.check]
    warnings = []
    if "relevance" in checks:
        stat, ci, weak = relevance_test(ds, config)
        out["relevance"] = {"stat": stat, "ci": list(ci), "weak": weak}
    if "specification" in checks:
        out["specification"] = specification_test(ds, config)
    if "stability" in checks:
        curves, gaps, notes = stability_export(ds)
        warnings.extend(notes)
        out["stability"] = {
            "gaps": {f"d={d},y={y}": v for (d, y), v in gaps.items()},
            "notes": notes,
        }
        write_stability_csv(curves, os.path.join(args.out, "stability.csv"))
    with open(os.path.join(args.out, "diagnostics.json"), "w") as fh:
        json.dump(out, fh, sort_keys=True, default=str, indent=1)
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rsvcausal",
        description="Treatment-effect estimation from remotely sensed outcome proxies",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    pe = sub.add_parser("estimate", help="estimate an effect from a CSV dataset")
    pe.add_argument("--data", required=True)
    pe.add_argument("--mode", choices=["incomplete", "complete", "iv", "did"], default="incomplete")
    pe.add_argument("--k-outcomes", type=int, default=2)
    pe.add_argument("--bin-epsilon", type=float, default=None)
    pe.add_argument("--bin-lo", type=float, default=None)
    pe.add_argument("--bin-hi", type=float, default=None)
    pe.add_argument("--cluster-col", default=None)
    _common_flags(pe)
    pe.set_defaults(func=cmd_estimate)

    ps = sub.add_parser("simulate", help="Monte Carlo study on synthetic designs")
    ps.add_argument("--dgp", choices=["calibrated", "adversarial", "iv", "did"], default="calibrated")
    ps.add_argument("--tau-grid", default="0")
    ps.add_argument("--n-grid", default="1000")
    ps.add_argument("--reps", type=int, default=100)
    ps.add_argument("--methods", default="ours,common,benchmark")
    ps.add_argument("--rsv-dim", type=int, default=4)
    ps.add_argument("--a", type=float, default=0.6)
    ps.add_argument("--b", type=float, default=0.2)
    ps.add_argument("--late", type=float, default=0.3)
    ps.add_argument("--att", type=float, default=0.2)
    _common_flags(ps)
    ps.set_defaults(func=cmd_simulate, bootstrap=0)

    pd = sub.add_parser("diagnose", help="feature diagnostics on a CSV dataset")
    pd.add_argument("--data", required=True)
    pd.add_argument("--mode", choices=["incomplete", "complete"], default="incomplete")
    pd.add_argument("--k-outcomes", type=int, default=2)
    pd.add_argument("--bin-epsilon", type=float, default=None)
    pd.add_argument("--bin-lo", type=float, default=None)
    pd.add_argument("--bin-hi", type=float, default=None)
    pd.add_argument("--cluster-col", default=None)
    pd.add_argument("--check", choices=["relevance", "specification", "stability", "all"], default="all")
    _common_flags(pd)
    pd.set_defaults(func=cmd_diagnose)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except IdentificationError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    except (DataError, OSError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
