"""Closed-form scoring models and seeded synthetic data generators.

Normal draws are produced by inverse-CDF sampling (``scipy.special.ndtri``)
of a Philox counter-based uniform stream keyed by the seed, so a given
``(model_id, params, N, seed)`` reproduces bit-for-bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.special import expit, ndtri

from . import ot

KINDS = ("linear", "logistic_linear", "additive_tabular", "external_scores")
MODEL_IDS = ("M1", "M2", "M3", "M4", "M5", "M6", "EPS_TAU", "ZERO_BIAS")


@dataclass(frozen=True)
class Table1D:
    """Piecewise-linear function through ``(knots, values)``, flat outside."""

    knots: tuple
    values: tuple

    def __post_init__(self):
        k = np.asarray(self.knots, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if k.ndim != 1 or k.size < 1 or k.shape != v.shape:
            raise ValueError("table needs matching non-empty knots and values")
        if np.any(np.diff(k) <= 0):
            raise ValueError("table knots must be strictly increasing")
        if not (np.all(np.isfinite(k)) and np.all(np.isfinite(v))):
            raise ValueError("table entries must be finite")
        object.__setattr__(self, "knots", tuple(k.tolist()))
        object.__setattr__(self, "values", tuple(v.tolist()))

    def __call__(self, x):
        return np.interp(x, self.knots, self.values)


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    coefficients: tuple = ()
    intercept: float = 0.0
    tables: tuple = ()
    favorable_sign: int = 1
    model_id: str = "model"
    n_features: Optional[int] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.favorable_sign not in (1, -1):
            raise ValueError("favorable_sign must be +1 or -1")
        object.__setattr__(self, "coefficients", tuple(float(c) for c in self.coefficients))
        object.__setattr__(self, "tables", tuple(
            t if isinstance(t, Table1D) else Table1D(*t) for t in self.tables))
        if not math.isfinite(self.intercept):
            raise ValueError("intercept must be finite")
        if self.kind in ("linear", "logistic_linear"):
            if not self.coefficients:
                raise ValueError(f"{self.kind} model needs coefficients")
            n = len(self.coefficients)
        elif self.kind == "additive_tabular":
            if not self.tables:
                raise ValueError("additive_tabular model needs tables")
            n = len(self.tables)
        else:
            n = self.n_features
        if self.n_features is not None and n != self.n_features:
            raise ValueError("n_features disagrees with model parameters")
        object.__setattr__(self, "n_features", n)

    @property
    def coef(self) -> np.ndarray:
        return np.asarray(self.coefficients, dtype=float)

    @property
    def is_additive(self) -> bool:
        return self.kind in ("linear", "additive_tabular") or (
            self.kind == "logistic_linear" and self.n_features == 1)

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if self.kind == "external_scores":
            raise TypeError("external_scores models cannot be evaluated at new points")
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[1]}")
        if not np.all(np.isfinite(X)):
            raise ValueError("non-finite model input")
        if self.kind == "linear":
            return X @ self.coef + self.intercept
        if self.kind == "logistic_linear":
            return expit(X @ self.coef + self.intercept)
        out = np.full(X.shape[0], self.intercept)
        for i, table in enumerate(self.tables):
            out += table(X[:, i])
        return out

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "intercept": self.intercept,
             "favorable_sign": self.favorable_sign, "model_id": self.model_id,
             "n_features": self.n_features}
        if self.coefficients:
            d["coefficients"] = list(self.coefficients)
        if self.tables:
            d["tables"] = [{"knots": list(t.knots), "values": list(t.values)} for t in self.tables]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        tables = tuple(Table1D(t["knots"], t["values"]) for t in d.get("tables", ()))
        return cls(kind=d["kind"], coefficients=tuple(d.get("coefficients", ())),
                   intercept=float(d.get("intercept", 0.0)), tables=tables,
                   favorable_sign=int(d.get("favorable_sign", 1)),
                   model_id=d.get("model_id", "model"), n_features=d.get("n_features"))


def score(m: ModelSpec, x: Sequence[float]) -> float:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("score expects a single feature vector")
    return float(m.predict(x[None, :])[0])


@dataclass(frozen=True, eq=False)
class SyntheticDataset:
    features: np.ndarray
    protected: np.ndarray
    response: Optional[np.ndarray] = None
    seed: int = 0
    model_id: str = ""
    feature_names: tuple = field(default=())

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        g = np.asarray(self.protected, dtype=int)
        if X.ndim != 2 or X.shape[0] < 1:
            raise ValueError("features must be a non-empty N x n matrix")
        if g.shape != (X.shape[0],):
            raise ValueError("protected must have one label per row")
        if not np.any(g == 0):
            raise ValueError("class 0 (non-protected) must be present")
        if np.any(g < 0):
            raise ValueError("protected labels must be non-negative")
        if not np.all(np.isfinite(X)):
            raise ValueError("features must be finite")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "protected", g)
        if not self.feature_names:
            object.__setattr__(self, "feature_names", tuple(f"x{i + 1}" for i in range(X.shape[1])))

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]


_DEFAULTS = {
    "M1": {"mu": 5.0, "a": 1.0},
    "M2": {"mu": 5.0},
    "M3": {"mu": 5.0},
    "M4": {"mu": 5.0},
    "M5": {"mu": 5.0},
    "M6": {"mu": 5.0, "a": [0.5, -0.2, 0.8, 0.05, -0.15], "offset": 24.5},
    "EPS_TAU": {"eps": 0.1, "tau": 1.0, "sigma": 1.0},
    "ZERO_BIAS": {"mu": 0.0, "tau": 1.0, "sigma": 1.0},
}


def default_params(model_id: str) -> dict:
    if model_id not in _DEFAULTS:
        raise ValueError(f"unknown model id {model_id!r}; expected one of {MODEL_IDS}")
    return {k: (list(v) if isinstance(v, list) else v) for k, v in _DEFAULTS[model_id].items()}


def _resolve_params(model_id: str, params: Optional[dict]) -> dict:
    p = default_params(model_id)
    for k, v in (params or {}).items():
        if k not in p:
            raise ValueError(f"{model_id} has no parameter {k!r}")
        p[k] = v
    for k, v in p.items():
        vals = v if isinstance(v, list) else [v]
        if not all(isinstance(x, (int, float)) and math.isfinite(x) for x in vals):
            raise ValueError(f"parameter {k!r} must be finite")
    if model_id == "M6" and len(p["a"]) != 5:
        raise ValueError("M6 offsets a must have length 5")
    for k in ("sigma", "tau"):
        if k in p and p[k] <= 0:
            raise ValueError(f"{k} must be positive")
    if model_id in ("M1", "M2", "M3", "M4", "M5", "M6") and p["mu"] <= 0:
        raise ValueError("mu must be positive")
    return p


def _layout(model_id: str, p: dict):
    """Per-class (means, stds) of each feature, the model, and whether Y is Bernoulli."""
    mu = float(p.get("mu", 0.0))
    if model_id == "M1":
        s = math.sqrt(mu)
        laws = [((mu, mu - p["a"]), (s, s))]
        spec = ModelSpec("logistic_linear", (-1.0,), mu, favorable_sign=-1, model_id="M1")
    elif model_id == "M2":
        s = math.sqrt(mu)
        laws = [((mu, mu), (s, 2 * s))]
        spec = ModelSpec("logistic_linear", (-1.0,), mu, favorable_sign=-1, model_id="M2")
    elif model_id == "M3":
        laws = [((mu, mu + 1), (1.0, 1.0)), ((mu, mu - 1), (1.0, 1.0))]
        # Sign chosen so that X1's explainer favours class 0 and X2's favours class 1.
        spec = ModelSpec("logistic_linear", (-1.0, -1.0), 2 * mu, favorable_sign=1, model_id="M3")
    elif model_id == "M4":
        laws = [((mu, mu), (1.0, 2.0)), ((mu, mu), (1.0, 2.0))]
        spec = ModelSpec("logistic_linear", (-1.0, -1.0), 2 * mu, favorable_sign=-1, model_id="M4")
    elif model_id == "M5":
        laws = [((mu, mu), (2.0, 1.0)), ((mu, mu), (1.0, 2.0))]
        spec = ModelSpec("logistic_linear", (-1.0, -1.0), 2 * mu, favorable_sign=-1, model_id="M5")
    elif model_id == "M6":
        a = p["a"]
        stds = [(0.5, 1.5), (1.0, 1.0), (1.0, 1.0), (1.0, 0.5), (1.0, 0.25)]
        laws = [((mu - a[i], mu), stds[i]) for i in range(5)]
        spec = ModelSpec("logistic_linear", (1.0,) * 5, -float(p["offset"]), favorable_sign=-1, model_id="M6")
    elif model_id == "EPS_TAU":
        t, s = p["tau"], p["sigma"]
        laws = [((0.0, t), (s, s)), ((0.0, 0.0), (s, s))]
        spec = ModelSpec("linear", (p["eps"] / t, 1.0), 0.0, favorable_sign=-1, model_id="EPS_TAU")
    elif model_id == "ZERO_BIAS":
        t, s = p["tau"], p["sigma"]
        laws = [((mu, mu + t), (s, s)), ((mu, mu - t), (s, s))]
        spec = ModelSpec("linear", (1.0, 1.0), 0.0, favorable_sign=-1, model_id="ZERO_BIAS")
    else:
        raise ValueError(f"unknown model id {model_id!r}")
    bernoulli = spec.kind == "logistic_linear"
    return laws, spec, bernoulli


def class_laws(model_id: str, params: Optional[dict] = None):
    """Feature (mean, std) per class: a list of ``((mean0, mean1), (std0, std1))``."""
    laws, _, _ = _layout(model_id, _resolve_params(model_id, params))
    return laws


def model_for(model_id: str, params: Optional[dict] = None) -> ModelSpec:
    _, spec, _ = _layout(model_id, _resolve_params(model_id, params))
    return spec


def _open_uniform(rng: np.random.Generator, size) -> np.ndarray:
    # random() returns k * 2**-53; the half-step offset keeps draws inside (0, 1).
    return rng.random(size) + 2.0 ** -54


def generate(model_id: str, params: Optional[dict] = None, N: int = 1000, seed: int = 0):
    """Draw ``N`` rows of ``(X, G, Y)`` from a named synthetic model.

    Classes are exactly balanced: ``G`` is a seeded random permutation of
    alternating labels, so each row is in class 1 with probability 1/2.
    Returns ``(dataset, model_spec)``.
    """
    if not isinstance(N, (int, np.integer)) or N < 1:
        raise ValueError("N must be a positive integer")
    p = _resolve_params(model_id, params)
    laws, spec, bernoulli = _layout(model_id, p)
    rng = np.random.Generator(np.random.Philox(seed))
    g = rng.permutation(N) % 2
    z = ndtri(_open_uniform(rng, (N, len(laws))))
    X = np.empty_like(z)
    for i, (means, stds) in enumerate(laws):
        m = np.where(g == 0, means[0], means[1])
        s = np.where(g == 0, stds[0], stds[1])
        X[:, i] = m + s * z[:, i]
    f = spec.predict(X)
    if bernoulli:
        y = (_open_uniform(rng, N) < f).astype(int)
    else:
        y = f.copy()
    data = SyntheticDataset(X, g, y, seed=int(seed), model_id=model_id)
    return data, spec


def lipschitz_bound_check(m: ModelSpec, data: SyntheticDataset):
    """Compare the model bias against the predictor-bias Lipschitz bound.

    Uses the distance ``d(x, y) = sum |x_i - y_i|``, under which a linear
    model has Lipschitz constant ``max |c_i|``.  ``rhs`` uses the sum of
    coordinatewise W_1 distances, which is a valid upper bound when the
    features are independent within each class.  The generators draw them
    independently, so for a finite draw the inequality holds up to sampling
    error only.  Returns ``(lhs, rhs)``.
    """
    from .metrics import model_bias

    if m.kind != "linear":
        raise ValueError("lipschitz_bound_check requires a linear model")
    X, g = data.features, data.protected
    lhs = model_bias(m.predict(X), g, m.favorable_sign).total
    lip = float(np.max(np.abs(m.coef)))
    coord = [ot.wasserstein(ot.from_samples(X[g == 0, i]), ot.from_samples(X[g == 1, i]))
             for i in range(X.shape[1])]
    return lhs, lip * math.fsum(coord)
