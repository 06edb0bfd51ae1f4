"""Credibility diagnostics: feature relevance, a representation-based
specification test, and cross-sample density exports.

The identification story is testable in three ways. First, the features
must carry outcome signal (the ratio's denominator must be nonzero), which
is the analogue of a first-stage check. Second, any two relevant
representations must agree on the estimate, so a significant disagreement
rejects the identifying assumptions jointly. Third, when outcome labels
exist in both samples, the conditional feature densities can be compared
directly across samples.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy.stats import norm

from .data import Dataset
from .errors import IdentificationError, Unsupported
from .estimate import (
    EstimateConfig,
    _fit_fold,
    _fold_theta,
    _prepare,
    _resample_indices,
    _scalar_from_vec,
    ratio_terms,
)

__all__ = [
    "DiagnosticReport",
    "relevance_test",
    "specification_test",
    "stability_export",
    "write_stability_csv",
]


@dataclass
class DiagnosticReport:
    relevance_stat: Optional[float] = None
    relevance_ci: Optional[tuple] = None
    relevance_weak: Optional[bool] = None
    spec_test: Optional[dict] = None
    stability_curves: Optional[dict] = None
    stability_gaps: Optional[dict] = None
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "relevance_stat": self.relevance_stat,
            "relevance_ci": None if self.relevance_ci is None else list(self.relevance_ci),
            "relevance_weak": self.relevance_weak,
            "spec_test": self.spec_test,
            "stability_gaps": self.stability_gaps,
            "notes": self.notes,
        }


def _fold_denominator(pieces, config) -> float:
    """Sample mean of (representation x outcome contrast), fold-weighted.

    Shares the exact code path with the ratio estimator's denominator, so
    the reported relevance statistic is the quantity the estimate divides
    by (scaled by fold size).
    """
    total = 0.0
    for p in pieces:
        state = p.states[None]
        _, den, _, _, _ = ratio_terms(state)
        total += p.weight * float(den[0, 0])
    return total


def relevance_test(
    ds: Dataset, config: Optional[EstimateConfig] = None
) -> tuple[float, tuple[float, float], bool]:
    """Feature relevance: is the outcome-contrast projection nonzero?

    Cross-fits the learned representation, reports the fold-weighted mean
    of (representation x outcome contrast) with a frozen-representation
    bootstrap CI (cluster-aware). Returns ``(stat, (lo, hi), weak)`` where
    ``weak`` flags a CI covering zero, the analogue of a failed first stage.
    """
    config = config or EstimateConfig()
    if ds.k_outcomes != 2:
        raise Unsupported("relevance diagnostic supports binary outcomes")
    if ds.covariate is not None:
        raise Unsupported("run the relevance diagnostic within one stratum at a time")
    ref, fold_ids = _prepare(ds, config)
    pieces = [
        _fit_fold(ds, config, ref, fold_ids != f, fold_ids == f, f)
        for f in range(config.n_folds)
    ]
    total_w = sum(p.weight for p in pieces)
    for p in pieces:
        p.weight /= total_w
    stat = _fold_denominator(pieces, config)

    # Fold statistics are combined with a linear (not quadratic) error bound:
    # when the features are irrelevant, the two cross-fit directions collapse
    # to the same bilinear form in the folds' fluctuations and are nearly
    # perfectly correlated, so treating them as independent would understate
    # the null variance by ~sqrt(2) and over-reject. The linear bound is
    # exact under that null and merely conservative under strong signal.
    B = max(config.bootstrap, 100)
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0x2E1E]))
    fold_ses = []
    for p in pieces:
        reps = np.full(B, np.nan)
        for b in range(B):
            try:
                sel = _resample_indices(rng, p.n_test, p.clusters)
                _, den, _, _, _ = ratio_terms(p.states[None], sel)
                reps[b] = float(den[0, 0])
            except IdentificationError:
                continue
        ok = np.isfinite(reps)
        fold_ses.append(float(np.std(reps[ok], ddof=1)) if ok.sum() >= 2 else float("nan"))
    se = float(sum(p.weight * s for p, s in zip(pieces, fold_ses)))
    z = float(norm.ppf(1.0 - config.alpha / 2.0))
    ci = (stat - z * se, stat + z * se)
    weak = bool(ci[0] <= 0.0 <= ci[1])
    return stat, ci, weak


def specification_test(
    ds: Dataset,
    config: Optional[EstimateConfig] = None,
    rep_a: Union[str, np.ndarray] = "learned",
    rep_b: Union[str, np.ndarray] = "pred_y",
) -> dict:
    """Joint test of the identifying assumptions via two representations.

    Both representations are fit on the same folds and their estimates are
    compared with a paired frozen-representation bootstrap (identical
    resamples on both sides). Under the identifying assumptions every
    relevant representation targets the same effect, so a significant
    difference is evidence against them.
    """
    config = config or EstimateConfig()
    if ds.k_outcomes != 2:
        raise Unsupported("specification test supports binary outcomes")
    if ds.covariate is not None:
        raise Unsupported("run the specification test within one stratum at a time")

    from dataclasses import replace

    cfg_a = replace(config, representation=rep_a)
    cfg_b = replace(config, representation=rep_b)
    ref, fold_ids = _prepare(ds, config)
    pieces_a, pieces_b = [], []
    for f in range(config.n_folds):
        te, tr = fold_ids == f, fold_ids != f
        pieces_a.append(_fit_fold(ds, cfg_a, ref, tr, te, f))
        pieces_b.append(_fit_fold(ds, cfg_b, ref, tr, te, f))
    total_w = sum(p.weight for p in pieces_a)
    for pa, pb in zip(pieces_a, pieces_b):
        pa.weight /= total_w
        pb.weight /= total_w

    values = np.arange(ds.k_outcomes, dtype=np.float64)

    def point(pieces, cfg, sels=None):
        vec = 0.0
        for fi, p in enumerate(pieces):
            sel = None if sels is None else sels[fi]
            vec = vec + p.weight * _fold_theta(p, cfg, None, sel)
        return _scalar_from_vec(np.asarray(vec), values, ref)

    theta_a = point(pieces_a, cfg_a)
    theta_b = point(pieces_b, cfg_b)
    diff = theta_a - theta_b

    B = max(config.bootstrap, 100)
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0x5bec]))
    reps = np.full(B, np.nan)
    for b in range(B):
        sels = [
            _resample_indices(rng, p.n_test, p.clusters) for p in pieces_a
        ]
        try:
            reps[b] = point(pieces_a, cfg_a, sels) - point(pieces_b, cfg_b, sels)
        except IdentificationError:
            continue
    ok = np.isfinite(reps)
    diff_se = float(np.std(reps[ok], ddof=1)) if ok.sum() >= 2 else float("nan")
    if diff_se == 0.0:
        p_value = 1.0 if diff == 0.0 else 0.0
    else:
        p_value = float(2.0 * (1.0 - norm.cdf(abs(diff) / diff_se)))
    return {
        "theta_a": theta_a,
        "theta_b": theta_b,
        "diff": diff,
        "diff_se": diff_se,
        "p_value": p_value,
    }


def _first_pc(X: np.ndarray, tol: float = 1e-9, max_iter: int = 1000) -> np.ndarray:
    """Standardized first principal component scores by power iteration."""
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd[sd == 0] = 1.0
    Z = (X - mu) / sd
    n, p = Z.shape
    if p == 1:
        scores = Z[:, 0]
    else:
        v = np.ones(p) / np.sqrt(p)
        for _ in range(max_iter):
            w = Z.T @ (Z @ v) / max(n - 1, 1)
            nw = np.linalg.norm(w)
            if nw == 0:
                break
            w /= nw
            if np.linalg.norm(w - v) < tol:
                v = w
                break
            v = w
        if v[np.argmax(np.abs(v))] < 0:
            v = -v
        scores = Z @ v
    s = scores.std()
    return scores / (s if s > 0 else 1.0)


def _silverman_bw(x: np.ndarray) -> float:
    sd = float(np.std(x))
    iqr = float(np.subtract(*np.percentile(x, [75, 25])))
    spread = min(sd, iqr / 1.34) if iqr > 0 else sd
    if spread <= 0:
        spread = 1.0
    return 0.9 * spread * len(x) ** (-0.2)


def _kde(x: np.ndarray, grid: np.ndarray) -> np.ndarray:
    bw = _silverman_bw(x)
    dens = norm.pdf((grid[:, None] - x[None, :]) / bw).mean(axis=1) / bw
    mass = np.trapezoid(dens, grid)
    return dens / mass if mass > 0 else dens


def stability_export(
    ds: Dataset, grid_size: int = 256, min_cell: int = 20, use_full_labels: bool = False
) -> tuple[dict, dict, list]:
    """Cross-sample conditional feature densities on the first component.

    The experimental side is every e-member with a usable outcome label
    (dual-membership units are experimental units whose outcomes were
    collected); the observational side is the observational-only units.
    For every (sample, treatment, outcome) cell with enough labeled units,
    returns a kernel density of the standardized first principal component
    over a shared grid, plus a max-gap summary per (treatment, outcome)
    cell present in both samples. Cells with fewer than ``min_cell`` units
    are skipped with a notice.

    ``use_full_labels`` pulls complete label vectors from generator
    metadata when present (simulation/oracle mode), so cells exist even
    where the recorded columns are missing.

    Returns
    -------
    (curves, gaps, notes)
        ``curves`` maps (sample, d, y) to ``{"grid": ..., "density": ...}``;
        ``gaps`` maps (d, y) to the max absolute density difference.
    """
    pc = _first_pc(ds.rsv)
    outcome = ds.outcome
    treatment = ds.treatment
    if use_full_labels:
        if "full_outcome" in ds.meta:
            outcome = np.asarray(ds.meta["full_outcome"], dtype=np.int64)
        if "full_treatment" in ds.meta:
            treatment = np.asarray(ds.meta["full_treatment"], dtype=np.int64)
    labeled = outcome >= 0
    # observational units without a recorded treatment use the zero convention
    d_eff = np.where(treatment >= 0, treatment, 0)
    notes = []
    cells = {}
    for s_name, member in (("e", ds.has_e), ("o", ds.has_o & ~ds.has_e)):
        for d in (0, 1):
            for y in range(ds.k_outcomes):
                mask = member & labeled & (d_eff == d) & (outcome == y)
                n = int(mask.sum())
                if n == 0:
                    continue
                if n < min_cell:
                    notes.append(
                        f"cell (sample={s_name}, d={d}, y={y}) skipped: {n} < {min_cell} units"
                    )
                    continue
                cells[(s_name, d, y)] = pc[mask]
    if not cells:
        notes.append("no labeled cells with enough units; nothing to compare")
        return {}, {}, notes
    lo = min(v.min() for v in cells.values())
    hi = max(v.max() for v in cells.values())
    pad = 0.2 * (hi - lo if hi > lo else 1.0)
    grid = np.linspace(lo - pad, hi + pad, grid_size)
    curves = {
        key: {"grid": grid, "density": _kde(x, grid)} for key, x in cells.items()
    }
    gaps = {}
    for d in (0, 1):
        for y in range(ds.k_outcomes):
            ke, ko = ("e", d, y), ("o", d, y)
            if ke in curves and ko in curves:
                gaps[(d, y)] = float(
                    np.max(np.abs(curves[ke]["density"] - curves[ko]["density"]))
                )
    return curves, gaps, notes


def write_stability_csv(curves: dict, path) -> None:
    """Emit density curves as ``cell,grid_point,density`` rows."""
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["cell", "grid_point", "density"])
        for (s, d, y), data in sorted(curves.items()):
            name = f"s={s},d={d},y={y}"
            for g, v in zip(data["grid"], data["density"]):
                writer.writerow([name, repr(float(g)), repr(float(v))])
