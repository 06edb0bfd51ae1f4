"""Quasi-experimental targets: instrumented effects and two-period designs.

Both reuse the moment-cell engine: each cell pairs an experimental-side
event (a treatment/instrument cell, or an arm within a period) against the
observational outcome contrast, with its own learned representation. The
headline numbers are then assembled from the per-cell ratios: a Wald ratio
for the instrumented effect, a double difference for the panel design.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace as dc_replace
from typing import Optional

import numpy as np
from scipy.stats import norm

from .data import Dataset, Mode, split_folds
from .errors import (
    DataError,
    IdentificationError,
    Unsupported,
    WeakInstrument,
    ZeroCount,
)
from .estimate import (
    EstimateConfig,
    Event,
    MomentDesign,
    build_state,
    fit_cell,
    ratio_from_state,
    _resample_indices,
)
from .predict import fit_categorical, fit_predictors

__all__ = ["IvResult", "DidResult", "iv_late", "did_att"]


@dataclass
class IvResult:
    """Per-cell means, first-stage shares, and the instrumented effect."""

    alpha: dict  # (d, z) -> mean outcome in the cell
    alpha_z: dict  # z -> mean outcome given the instrument
    beta_z: dict  # z -> treated share given the instrument
    late: float
    se: float
    ci_low: float
    ci_high: float
    meta: dict = field(default_factory=dict)


@dataclass
class DidResult:
    """Per-(period, arm) means and the differenced effect."""

    alpha_t: dict  # (t, d) -> mean outcome
    att: float
    se: float
    ci_low: float
    ci_high: float
    meta: dict = field(default_factory=dict)


def _binary_obs_events(dim: int = 1):
    """Outcome-side events shared by every scalar quasi cell."""
    return [
        Event(
            "y1o",
            0.0,
            np.array([1.0]),
            lambda ds, m: ds.has_o[m] & (ds.outcome[m] == 1),
            lambda ps, X: ps.prob_y(X)[:, 1] * ps.prob_o(X),
        ),
        Event(
            "y0o",
            -1.0,
            np.array([-1.0]),
            lambda ds, m: ds.has_o[m] & (ds.outcome[m] == 0),
            lambda ps, X: ps.prob_y(X)[:, 0] * ps.prob_o(X),
        ),
    ]


def _assemble_late(alpha, beta, floor):
    a1 = alpha[(1, 1)] * beta[1] + alpha[(0, 1)] * (1.0 - beta[1])
    a0 = alpha[(1, 0)] * beta[0] + alpha[(0, 0)] * (1.0 - beta[0])
    denom = beta[1] - beta[0]
    if abs(denom) < floor:
        raise WeakInstrument(
            f"first-stage contrast {denom:.4f} below the floor {floor}"
        )
    return {1: a1, 0: a0}, (a1 - a0) / denom


def iv_late(
    ds: Dataset,
    config: Optional[EstimateConfig] = None,
    weak_floor: float = 0.05,
) -> IvResult:
    """Instrumented effect for compliers from a sample with missing outcomes.

    Each (treatment, instrument) cell's mean outcome is identified by the
    cell-specific moment ratio; instrument-arm means follow by mixing the
    cells with the observed first stage, and the effect is their Wald
    ratio. The bootstrap resamples test folds with all representations
    frozen and replays the full assembly.
    """
    config = config or EstimateConfig()
    if ds.mode != Mode.IV:
        raise Unsupported("dataset is not in instrument mode")
    if ds.instrument is None:
        raise DataError("instrument column required")
    if ds.k_outcomes != 2:
        raise Unsupported("instrumented estimation supports binary outcomes")

    fold_ids = split_folds(ds, config.n_folds, config.seed)
    folds = []
    for f in range(config.n_folds):
        test_mask = fold_ids == f
        train_mask = ~test_mask
        ps = fit_predictors(
            ds,
            kind=config.predictor,
            class_weights=config.class_weights,
            clip=config.clip,
            seed=config.seed + 7919 * f,
            mask=train_mask,
            penalty_scale=config.penalty_scale,
        )
        e_tr = train_mask & ds.has_e & (ds.treatment >= 0) & (ds.instrument >= 0)
        if not e_tr.any():
            raise ZeroCount(f"fold {f}: no labeled instrument cells in training")
        cells_lab = 2 * ds.treatment[e_tr] + ds.instrument[e_tr]
        dz_model = fit_categorical(
            ds.rsv[e_tr],
            cells_lab,
            4,
            kind=config.predictor,
            clip=config.clip,
            seed=config.seed + 31 * f,
            penalty_scale=config.penalty_scale,
        )

        states = {}
        for d in (0, 1):
            for z in (0, 1):
                cell_idx = 2 * d + z
                events = [
                    Event(
                        f"d{d}z{z}e",
                        1.0,
                        np.array([0.0]),
                        lambda dset, m, d=d, z=z: dset.has_e[m]
                        & (dset.treatment[m] == d)
                        & (dset.instrument[m] == z),
                        lambda ps_, X, ci=cell_idx: dz_model.prob(X)[:, ci]
                        * ps_.prob_e(X),
                    )
                ] + _binary_obs_events()
                design = MomentDesign(tuple(events), 1)
                try:
                    cell = fit_cell(design, ds, train_mask, ps, config.sigma_floor_rel)
                    states[(d, z)] = build_state(cell, ds, test_mask)
                except (IdentificationError, DataError) as exc:
                    raise type(exc)(f"fold {f}, cell (d={d},z={z}): {exc}") from exc

        te = test_mask
        folds.append(
            {
                "states": states,
                "weight": float(te.sum()),
                "n_test": int(te.sum()),
                "d": ds.treatment[te],
                "z": ds.instrument[te],
                "e": ds.has_e[te] & (ds.treatment[te] >= 0) & (ds.instrument[te] >= 0),
                "clusters": ds.cluster[te]
                if (ds.cluster is not None and config.cluster)
                else None,
            }
        )
    total = sum(f["weight"] for f in folds)
    for f in folds:
        f["weight"] /= total

    def evaluate(sels=None):
        alpha = {}
        beta_num = {0: 0.0, 1: 0.0}
        beta_den = {0: 0.0, 1: 0.0}
        for key in ((0, 0), (0, 1), (1, 0), (1, 1)):
            alpha[key] = 0.0
        for fi, f in enumerate(folds):
            sel = None if sels is None else sels[fi]
            for key, state in f["states"].items():
                alpha[key] += f["weight"] * float(
                    ratio_from_state(state, sel, config.irrelevance_scale)[0]
                )
            dv = f["d"] if sel is None else f["d"][sel]
            zv = f["z"] if sel is None else f["z"][sel]
            ev = f["e"] if sel is None else f["e"][sel]
            for z in (0, 1):
                cell = ev & (zv == z)
                beta_num[z] += f["weight"] * float(np.sum(ev & (zv == z) & (dv == 1)))
                beta_den[z] += f["weight"] * float(np.sum(cell))
        beta = {}
        for z in (0, 1):
            if beta_den[z] <= 0:
                raise ZeroCount(f"no experimental units with instrument {z}")
            beta[z] = beta_num[z] / beta_den[z]
        alpha_z, late = _assemble_late(alpha, beta, weak_floor)
        return alpha, beta, alpha_z, late

    alpha, beta, alpha_z, late = evaluate()

    se = ci_low = ci_high = float("nan")
    degenerate = False
    n_failed = 0
    if config.bootstrap and config.bootstrap > 0:
        rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0x1317]))
        reps = np.full(config.bootstrap, np.nan)
        for b in range(config.bootstrap):
            try:
                sels = [
                    _resample_indices(rng, f["n_test"], f["clusters"]) for f in folds
                ]
                reps[b] = evaluate(sels)[3]
            except IdentificationError:
                continue
        ok = np.isfinite(reps)
        n_failed = int(config.bootstrap - ok.sum())
        degenerate = n_failed > 0.1 * config.bootstrap
        if ok.sum() >= 2:
            se = float(np.std(reps[ok], ddof=1))
            zq = float(norm.ppf(1.0 - config.alpha / 2.0))
            ci_low, ci_high = late - zq * se, late + zq * se

    return IvResult(
        alpha=alpha,
        alpha_z=alpha_z,
        beta_z=beta,
        late=late,
        se=se,
        ci_low=ci_low,
        ci_high=ci_high,
        meta={
            "seed": config.seed,
            "n_folds": config.n_folds,
            "predictor": config.predictor,
            "weak_floor": weak_floor,
            "bootstrap_degenerate": degenerate,
            "bootstrap_failed": n_failed,
            "config": config.to_dict(),
        },
    )


def did_att(ds: Dataset, config: Optional[EstimateConfig] = None) -> DidResult:
    """Differenced effect on the treated from a two-period design.

    Runs the binary moment ratio per (period, arm) with period-specific
    features and outcomes (wide layout), then assembles the double
    difference. Representations are learned independently per period and
    arm.
    """
    config = config or EstimateConfig()
    if ds.mode != Mode.DID:
        raise Unsupported("dataset is not in two-period mode")
    if ds.rsv2 is None or ds.outcome2 is None:
        raise DataError(
            "two-period estimation needs wide per-period columns "
            "(second-period features and outcomes)"
        )
    if ds.k_outcomes != 2:
        raise Unsupported("two-period estimation supports binary outcomes")

    views = {
        1: ds,
        2: dc_replace(ds, rsv=ds.rsv2, outcome=ds.outcome2, rsv2=None, outcome2=None),
    }
    fold_ids = split_folds(ds, config.n_folds, config.seed)
    folds = []
    for f in range(config.n_folds):
        test_mask = fold_ids == f
        train_mask = ~test_mask
        states = {}
        for t, view in views.items():
            ps = fit_predictors(
                view,
                kind=config.predictor,
                class_weights=config.class_weights,
                clip=config.clip,
                seed=config.seed + 7919 * f + 17 * t,
                mask=train_mask,
                penalty_scale=config.penalty_scale,
            )
            for d in (0, 1):
                events = [
                    Event(
                        f"d{d}e",
                        1.0,
                        np.array([0.0]),
                        lambda dset, m, d=d: dset.has_e[m] & (dset.treatment[m] == d),
                        lambda ps_, X, d=d: (
                            ps_.prob_d(X) if d == 1 else 1.0 - ps_.prob_d(X)
                        )
                        * ps_.prob_e(X),
                    )
                ] + _binary_obs_events()
                design = MomentDesign(tuple(events), 1)
                try:
                    cell = fit_cell(design, view, train_mask, ps, config.sigma_floor_rel)
                    states[(t, d)] = build_state(cell, view, test_mask)
                except (IdentificationError, DataError) as exc:
                    raise type(exc)(f"fold {f}, period {t}, arm {d}: {exc}") from exc
        folds.append(
            {
                "states": states,
                "weight": float(test_mask.sum()),
                "n_test": int(test_mask.sum()),
                "clusters": ds.cluster[test_mask]
                if (ds.cluster is not None and config.cluster)
                else None,
            }
        )
    total = sum(f["weight"] for f in folds)
    for f in folds:
        f["weight"] /= total

    def evaluate(sels=None):
        alpha_t = {key: 0.0 for key in ((1, 0), (1, 1), (2, 0), (2, 1))}
        for fi, f in enumerate(folds):
            sel = None if sels is None else sels[fi]
            for key, state in f["states"].items():
                alpha_t[key] += f["weight"] * float(
                    ratio_from_state(state, sel, config.irrelevance_scale)[0]
                )
        att = (alpha_t[(2, 1)] - alpha_t[(1, 1)]) - (alpha_t[(2, 0)] - alpha_t[(1, 0)])
        return alpha_t, att

    alpha_t, att = evaluate()

    se = ci_low = ci_high = float("nan")
    degenerate = False
    n_failed = 0
    if config.bootstrap and config.bootstrap > 0:
        rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0xD1D]))
        reps = np.full(config.bootstrap, np.nan)
        for b in range(config.bootstrap):
            try:
                sels = [
                    _resample_indices(rng, f["n_test"], f["clusters"]) for f in folds
                ]
                reps[b] = evaluate(sels)[1]
            except IdentificationError:
                continue
        ok = np.isfinite(reps)
        n_failed = int(config.bootstrap - ok.sum())
        degenerate = n_failed > 0.1 * config.bootstrap
        if ok.sum() >= 2:
            se = float(np.std(reps[ok], ddof=1))
            zq = float(norm.ppf(1.0 - config.alpha / 2.0))
            ci_low, ci_high = att - zq * se, att + zq * se

    return DidResult(
        alpha_t=alpha_t,
        att=att,
        se=se,
        ci_low=ci_low,
        ci_high=ci_high,
        meta={
            "seed": config.seed,
            "n_folds": config.n_folds,
            "predictor": config.predictor,
            "bootstrap_degenerate": degenerate,
            "bootstrap_failed": n_failed,
            "config": config.to_dict(),
        },
    )
