"""Probability predictors from the feature vector, behind one interface.

Three plug-in predictions drive the estimator: the outcome given the
features (fit on o-members), the treatment given the features (fit on
e-members), and sample membership given the features (fit on everyone).
Membership is modeled as two probabilities, Pr(e-member | R) and
Pr(o-member | R); with disjoint samples these are complementary and the
second reduces to one minus the first, but dual-membership units make them
genuinely separate quantities.

The learners are deliberately small and self-contained: a ridge-penalized
logistic fit by damped IRLS, k-nearest-neighbors on standardized features,
and a bagged ensemble of depth-2 trees. Downstream validity does not depend
on the learner; these exist so results are reproducible end to end.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .data import Dataset, UnitRecord
from .errors import DimMismatch, EmptyTraining, InvalidSpec

__all__ = ["PredictorSet", "fit_predictors", "predict_all", "KINDS"]

KINDS = ("logistic", "knn", "stumps")


# -- learners ----------------------------------------------------------------


class _Standardizer:
    def __init__(self, X: np.ndarray):
        self.mean = X.mean(axis=0)
        sd = X.std(axis=0)
        sd[sd == 0] = 1.0
        self.sd = sd

    def __call__(self, X: np.ndarray) -> np.ndarray:
        return (X - self.mean) / self.sd

    def to_dict(self):
        return {"mean": self.mean.tolist(), "sd": self.sd.tolist()}

    @classmethod
    def from_dict(cls, d):
        obj = cls.__new__(cls)
        obj.mean = np.asarray(d["mean"])
        obj.sd = np.asarray(d["sd"])
        return obj


class _Constant:
    """Fallback when a training target is single-class: the class frequency."""

    def __init__(self, p: float):
        self.p = float(p)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.full(X.shape[0], self.p)

    def to_dict(self):
        return {"type": "constant", "p": self.p}


def _sigmoid(eta: np.ndarray) -> np.ndarray:
    out = np.empty_like(eta)
    pos = eta >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-eta[pos]))
    ex = np.exp(eta[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class _RidgeLogistic:
    """L2-penalized logistic regression fit by damped IRLS.

    The penalty is ``penalty_scale * n`` on the slopes (intercept free),
    applied after standardizing features with training statistics, so
    coefficients stay finite even on separable data.
    """

    def __init__(self, X, y, w, penalty_scale=1e-3, max_iter=100, tol=1e-10):
        self.std = _Standardizer(X)
        Xs = np.column_stack([np.ones(len(X)), self.std(X)])
        n, p = Xs.shape
        lam = penalty_scale * n
        pen = np.full(p, lam)
        pen[0] = 0.0
        beta = np.zeros(p)

        def objective(b):
            eta = Xs @ b
            # log(1 + exp(-|eta|)) + max(eta,0) - y*eta, numerically stable
            ll = np.sum(w * (np.logaddexp(0.0, eta) - y * eta))
            return ll + 0.5 * np.sum(pen * b * b)

        obj = objective(beta)
        for _ in range(max_iter):
            eta = Xs @ beta
            mu = _sigmoid(eta)
            W = w * mu * (1.0 - mu) + 1e-12
            grad = Xs.T @ (w * (mu - y)) + pen * beta
            H = (Xs * W[:, None]).T @ Xs + np.diag(pen)
            try:
                step = np.linalg.solve(H, grad)
            except np.linalg.LinAlgError:
                step = np.linalg.lstsq(H, grad, rcond=None)[0]
            # damped update: halve until the penalized deviance does not rise
            scale = 1.0
            for _ in range(30):
                cand = beta - scale * step
                cand_obj = objective(cand)
                if cand_obj <= obj + 1e-12:
                    break
                scale *= 0.5
            moved = np.max(np.abs(scale * step))
            beta, obj = cand, cand_obj
            if moved < tol:
                break
        self.beta = beta

    def predict(self, X: np.ndarray) -> np.ndarray:
        Xs = np.column_stack([np.ones(len(X)), self.std(X)])
        return _sigmoid(Xs @ self.beta)

    def to_dict(self):
        return {"type": "logistic", "beta": self.beta.tolist(), "std": self.std.to_dict()}


class _Knn:
    """k-nearest-neighbor class frequency, k = ceil(sqrt(n_train)).

    Distances are Euclidean on standardized features; ties are broken by
    training index so predictions are deterministic.
    """

    def __init__(self, X, y, w):
        self.std = _Standardizer(X)
        self.X = self.std(X)
        self.y = y.astype(np.float64)
        self.w = w
        self.k = int(np.ceil(np.sqrt(len(X))))

    def predict(self, X: np.ndarray) -> np.ndarray:
        Q = self.std(X)
        out = np.empty(Q.shape[0])
        # chunked distance computation keeps memory bounded
        step = max(1, int(2e7) // max(1, self.X.shape[0]))
        for lo in range(0, Q.shape[0], step):
            block = Q[lo : lo + step]
            d2 = (
                np.sum(block * block, axis=1)[:, None]
                - 2.0 * block @ self.X.T
                + np.sum(self.X * self.X, axis=1)[None, :]
            )
            order = np.argsort(d2, axis=1, kind="stable")[:, : self.k]
            wk = self.w[order]
            yk = self.y[order]
            out[lo : lo + step] = np.sum(wk * yk, axis=1) / np.sum(wk, axis=1)
        return out

    def to_dict(self):
        return {
            "type": "knn",
            "X": self.X.tolist(),
            "y": self.y.tolist(),
            "w": self.w.tolist(),
            "k": self.k,
            "std": self.std.to_dict(),
        }


class _StumpEnsemble:
    """Bagged depth-2 trees (100 learners) on quantile candidate splits."""

    N_TREES = 100
    N_THRESH = 16

    def __init__(self, X, y, w, seed=0):
        self.std = _Standardizer(X)
        Xs = self.std(X)
        rng = np.random.default_rng(seed)
        n, p = Xs.shape
        m_feat = max(1, int(np.ceil(np.sqrt(p))))
        self.trees = []
        for _ in range(self.N_TREES):
            idx = rng.integers(0, n, n)
            self.trees.append(self._grow(Xs[idx], y[idx], w[idx], rng, m_feat))

    @staticmethod
    def _leaf(y, w):
        return float(np.sum(w * y) / np.sum(w)) if len(y) else 0.5

    @classmethod
    def _best_split(cls, X, y, w, rng, m_feat):
        n, p = X.shape
        if n < 4 or np.all(y == y[0]):
            return None
        feats = rng.choice(p, size=min(m_feat, p), replace=False)
        best = None
        total_w = np.sum(w)
        for f in feats:
            vals = X[:, f]
            qs = np.quantile(vals, np.linspace(0.05, 0.95, cls.N_THRESH))
            for thr in np.unique(qs):
                left = vals <= thr
                wl = np.sum(w[left])
                wr = total_w - wl
                if wl <= 0 or wr <= 0:
                    continue
                pl = np.sum(w[left] * y[left]) / wl
                pr = np.sum(w[~left] * y[~left]) / wr
                gini = wl * pl * (1 - pl) + wr * pr * (1 - pr)
                if best is None or gini < best[0]:
                    best = (gini, int(f), float(thr))
        return best

    @classmethod
    def _grow(cls, X, y, w, rng, m_feat):
        root = cls._best_split(X, y, w, rng, m_feat)
        if root is None:
            return {"leaf": cls._leaf(y, w)}
        _, f, thr = root
        node = {"feat": f, "thr": thr}
        mask = X[:, f] <= thr
        for side, sub in (("left", mask), ("right", ~mask)):
            child = cls._best_split(X[sub], y[sub], w[sub], rng, m_feat)
            if child is None:
                node[side] = {"leaf": cls._leaf(y[sub], w[sub])}
            else:
                _, cf, cthr = child
                csub = X[sub][:, cf] <= cthr
                node[side] = {
                    "feat": cf,
                    "thr": cthr,
                    "left": {"leaf": cls._leaf(y[sub][csub], w[sub][csub])},
                    "right": {"leaf": cls._leaf(y[sub][~csub], w[sub][~csub])},
                }
        return node

    @staticmethod
    def _eval(node, X):
        if "leaf" in node:
            return np.full(X.shape[0], node["leaf"])
        mask = X[:, node["feat"]] <= node["thr"]
        out = np.empty(X.shape[0])
        out[mask] = _StumpEnsemble._eval(node["left"], X[mask])
        out[~mask] = _StumpEnsemble._eval(node["right"], X[~mask])
        return out

    def predict(self, X: np.ndarray) -> np.ndarray:
        Xs = self.std(X)
        acc = np.zeros(Xs.shape[0])
        for t in self.trees:
            acc += self._eval(t, Xs)
        return acc / len(self.trees)

    def to_dict(self):
        return {"type": "stumps", "trees": self.trees, "std": self.std.to_dict()}


def _fit_binary(X, y, w, kind, penalty_scale, seed):
    y = np.asarray(y, dtype=np.float64)
    if len(y) == 0:
        raise EmptyTraining("no eligible training units for a predictor target")
    if np.all(y == y[0]):
        return _Constant(np.average(y, weights=w))
    if kind == "logistic":
        return _RidgeLogistic(X, y, w, penalty_scale=penalty_scale)
    if kind == "knn":
        return _Knn(X, y, w)
    if kind == "stumps":
        return _StumpEnsemble(X, y, w, seed=seed)
    raise InvalidSpec(f"unknown predictor kind {kind!r}; choose from {KINDS}")


class _Complement:
    """View of a binary model as the probability of the other class."""

    def __init__(self, inner):
        self.inner = inner

    def predict(self, X):
        return 1.0 - self.inner.predict(X)

    def to_dict(self):
        return {"type": "complement", "inner": self.inner.to_dict()}


def _model_from_dict(d):
    t = d["type"]
    if t == "constant":
        return _Constant(d["p"])
    if t == "complement":
        return _Complement(_model_from_dict(d["inner"]))
    if t == "logistic":
        obj = _RidgeLogistic.__new__(_RidgeLogistic)
        obj.beta = np.asarray(d["beta"])
        obj.std = _Standardizer.from_dict(d["std"])
        return obj
    if t == "knn":
        obj = _Knn.__new__(_Knn)
        obj.X = np.asarray(d["X"])
        obj.y = np.asarray(d["y"])
        obj.w = np.asarray(d["w"])
        obj.k = d["k"]
        obj.std = _Standardizer.from_dict(d["std"])
        return obj
    if t == "stumps":
        obj = _StumpEnsemble.__new__(_StumpEnsemble)
        obj.trees = d["trees"]
        obj.std = _Standardizer.from_dict(d["std"])
        return obj
    raise InvalidSpec(f"unknown serialized model type {t!r}")


# -- predictor set -----------------------------------------------------------


class _MultiClass:
    """One-vs-rest binary models, renormalized to a probability vector."""

    def __init__(self, models):
        self.models = models

    def predict(self, X: np.ndarray) -> np.ndarray:
        raw = np.column_stack([m.predict(X) for m in self.models])
        total = raw.sum(axis=1, keepdims=True)
        total[total == 0] = 1.0
        return raw / total

    def to_dict(self):
        return {"type": "multiclass", "models": [m.to_dict() for m in self.models]}

    @classmethod
    def from_dict(cls, d):
        return cls([_model_from_dict(m) for m in d["models"]])


@dataclass
class PredictorSet:
    """The fitted plug-in predictors with clipping applied on output.

    All emitted probabilities lie in [clip, 1-clip]; the outcome vector is
    renormalized to sum to one after clipping.
    """

    kind: str
    clip: float
    k_outcomes: int
    rsv_dim: int
    class_weights: Optional[np.ndarray]
    model_y: _MultiClass
    model_d: object
    model_se: object
    model_so: object
    model_y_arm: Optional[dict] = None  # complete mode: arm -> _MultiClass
    model_d_obs: Optional[object] = None  # complete mode: Pr(D=1 | o-member, R)

    def _check(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.rsv_dim:
            raise DimMismatch(
                f"feature dim {X.shape[1]} != fitted dim {self.rsv_dim}"
            )
        return X

    def _clip(self, p: np.ndarray) -> np.ndarray:
        return np.clip(p, self.clip, 1.0 - self.clip)

    def prob_y(self, X) -> np.ndarray:
        """(n, K) outcome probabilities, clipped then renormalized."""
        p = self._clip(self.model_y.predict(self._check(X)))
        return p / p.sum(axis=1, keepdims=True)

    def prob_y_arm(self, X, d: int) -> np.ndarray:
        p = self._clip(self.model_y_arm[d].predict(self._check(X)))
        return p / p.sum(axis=1, keepdims=True)

    def prob_d(self, X) -> np.ndarray:
        return self._clip(self.model_d.predict(self._check(X)))

    def prob_d_obs(self, X) -> np.ndarray:
        return self._clip(self.model_d_obs.predict(self._check(X)))

    def prob_e(self, X) -> np.ndarray:
        """Pr(e-member | R)."""
        return self._clip(self.model_se.predict(self._check(X)))

    def prob_o(self, X) -> np.ndarray:
        """Pr(o-member | R); equals 1 - prob_e only when no unit is in both."""
        return self._clip(self.model_so.predict(self._check(X)))

    def to_json(self) -> str:
        payload = {
            "kind": self.kind,
            "clip": self.clip,
            "k_outcomes": self.k_outcomes,
            "rsv_dim": self.rsv_dim,
            "class_weights": None
            if self.class_weights is None
            else list(self.class_weights),
            "model_y": self.model_y.to_dict(),
            "model_d": self.model_d.to_dict(),
            "model_se": self.model_se.to_dict(),
            "model_so": self.model_so.to_dict(),
            "model_y_arm": None
            if self.model_y_arm is None
            else {str(k): v.to_dict() for k, v in self.model_y_arm.items()},
            "model_d_obs": None
            if self.model_d_obs is None
            else self.model_d_obs.to_dict(),
        }
        return json.dumps(payload, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "PredictorSet":
        d = json.loads(text)
        return cls(
            kind=d["kind"],
            clip=d["clip"],
            k_outcomes=d["k_outcomes"],
            rsv_dim=d["rsv_dim"],
            class_weights=None
            if d["class_weights"] is None
            else np.asarray(d["class_weights"]),
            model_y=_MultiClass.from_dict(d["model_y"]),
            model_d=_model_from_dict(d["model_d"]),
            model_se=_model_from_dict(d["model_se"]),
            model_so=_model_from_dict(d["model_so"]),
            model_y_arm=None
            if d["model_y_arm"] is None
            else {int(k): _MultiClass.from_dict(v) for k, v in d["model_y_arm"].items()},
            model_d_obs=None
            if d["model_d_obs"] is None
            else _model_from_dict(d["model_d_obs"]),
        )


def _fit_multiclass(X, y, base_w, class_weights, k, kind, penalty_scale, seed):
    if len(y) == 0:
        raise EmptyTraining("no observational units to fit the outcome predictor")
    w = base_w.copy()
    if class_weights is not None:
        w = w * np.asarray(class_weights, dtype=np.float64)[y]
    if k == 2:
        m1 = _fit_binary(X, (y == 1).astype(float), w, kind, penalty_scale, seed)
        return _MultiClass([_Complement(m1), m1])
    models = [
        _fit_binary(X, (y == j).astype(float), w, kind, penalty_scale, seed + j)
        for j in range(k)
    ]
    return _MultiClass(models)


class CategoricalModel:
    """Standalone clipped categorical probability model."""

    def __init__(self, inner: _MultiClass, clip: float):
        self.inner = inner
        self.clip = clip

    def prob(self, X: np.ndarray) -> np.ndarray:
        p = np.clip(self.inner.predict(np.atleast_2d(X)), self.clip, 1.0 - self.clip)
        return p / p.sum(axis=1, keepdims=True)


def fit_categorical(
    X: np.ndarray,
    labels: np.ndarray,
    n_classes: int,
    kind: str = "logistic",
    clip: float = 0.01,
    seed: int = 0,
    penalty_scale: float = 1e-3,
) -> CategoricalModel:
    """Fit a free-standing categorical predictor (e.g. joint cell labels)."""
    labels = np.asarray(labels, dtype=np.int64)
    inner = _fit_multiclass(
        X, labels, np.ones(len(labels)), None, n_classes, kind, penalty_scale, seed
    )
    return CategoricalModel(inner, clip)


def fit_predictors(
    train: Union[Dataset, Sequence[UnitRecord]],
    kind: str = "logistic",
    class_weights=None,
    clip: float = 0.01,
    seed: int = 0,
    mask: Optional[np.ndarray] = None,
    penalty_scale: float = 1e-3,
    complete: bool = False,
) -> PredictorSet:
    """Fit the outcome, treatment, and sample-membership predictors.

    Parameters
    ----------
    train : Dataset or sequence of UnitRecord
        Training units; with a Dataset, ``mask`` selects the training fold.
    kind : {"logistic", "knn", "stumps"}
    class_weights : sequence of float, optional
        Per-outcome-class weights applied when fitting the outcome models
        (e.g. ten-to-one for a rare class).
    clip : float
        Output probabilities are clipped to [clip, 1-clip].
    seed : int
        Seed for the randomized learner (stumps); fits are otherwise
        deterministic.
    penalty_scale : float
        Ridge strength per observation for the logistic learner.
    complete : bool
        Additionally fit arm-specific outcome models and an observational
        treatment model, used by the direct-effects route.

    A single-class target degenerates to the constant (clipped) class
    frequency rather than erroring; a target with no eligible units raises
    EmptyTraining.
    """
    if not isinstance(train, Dataset):
        train = Dataset.from_units(
            list(train),
            k_outcomes=max(2, max((u.outcome or 0) for u in train) + 1),
        )
    ds = train
    if mask is None:
        mask = np.ones(ds.n, dtype=bool)
    if not 0.0 < clip < 0.5:
        raise InvalidSpec("clip must be in (0, 0.5)")
    k = ds.k_outcomes
    X = ds.rsv[mask]
    has_e = ds.has_e[mask]
    has_o = ds.has_o[mask]
    d = ds.treatment[mask]
    y = ds.outcome[mask]
    ones = np.ones(mask.sum())

    o_ok = has_o & (y >= 0)
    model_y = _fit_multiclass(
        X[o_ok], y[o_ok], ones[o_ok], class_weights, k, kind, penalty_scale, seed
    )
    e_ok = has_e & (d >= 0)
    if not e_ok.any():
        raise EmptyTraining("no experimental units to fit the treatment predictor")
    model_d = _fit_binary(
        X[e_ok], (d[e_ok] == 1).astype(float), ones[e_ok], kind, penalty_scale, seed + 101
    )
    model_se = _fit_binary(
        X, has_e.astype(float), ones, kind, penalty_scale, seed + 202
    )
    model_so = _fit_binary(
        X, has_o.astype(float), ones, kind, penalty_scale, seed + 303
    )

    model_y_arm = None
    model_d_obs = None
    if complete:
        model_y_arm = {}
        for arm in (0, 1):
            sel = o_ok & (d == arm)
            model_y_arm[arm] = _fit_multiclass(
                X[sel], y[sel], ones[sel], class_weights, k, kind, penalty_scale,
                seed + 400 + arm,
            )
        sel = has_o & (d >= 0)
        if not sel.any():
            raise EmptyTraining("no observational treatments for complete mode")
        model_d_obs = _fit_binary(
            X[sel], (d[sel] == 1).astype(float), ones[sel], kind, penalty_scale, seed + 500
        )

    return PredictorSet(
        kind=kind,
        clip=clip,
        k_outcomes=k,
        rsv_dim=ds.rsv_dim,
        class_weights=None if class_weights is None else np.asarray(class_weights),
        model_y=model_y,
        model_d=model_d,
        model_se=model_se,
        model_so=model_so,
        model_y_arm=model_y_arm,
        model_d_obs=model_d_obs,
    )


def predict_all(ps: PredictorSet, unit: UnitRecord):
    """Clipped probability triple for one unit.

    Returns
    -------
    (prob_y, prob_d, prob_s) : (ndarray shape (K,), float, float)
        Outcome vector (renormalized to sum to one after clipping), the
        treatment probability, and the e-membership probability.
    """
    X = np.asarray(unit.rsv, dtype=np.float64)[None, :]
    return ps.prob_y(X)[0], float(ps.prob_d(X)[0]), float(ps.prob_e(X)[0])
