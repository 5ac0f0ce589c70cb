"""Transport-based bias explanations of individual predictors, and mitigation."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from . import ot
from .explainers import AttributionMatrix, GameSpec, attribute_dataset
from .metrics import BiasReport, mean_gap, model_bias, split_by_class
from .models import ModelSpec

BEP_KEYS = ("beta", "beta_pos", "beta_neg", "beta_net")


@dataclass(frozen=True)
class BiasExplanationRow:
    feature: str
    beta: float
    beta_pos: float
    beta_neg: float
    beta_net: float


def bias_explanations(attr: AttributionMatrix, protected, favorable_sign: int) -> List[BiasExplanationRow]:
    """W_1 bias of each explainer column, split the same way as the model bias.

    Each explainer inherits the model's favourable direction.
    """
    rows = []
    for i, name in enumerate(attr.feature_names):
        col = attr.column(i)
        rep = model_bias(col, protected, favorable_sign)
        gap = mean_gap(col, protected, favorable_sign)
        scale = max(1.0, float(np.max(np.abs(col))))
        if abs(rep.net - gap) > 1e-9 * scale:
            raise ArithmeticError(f"net bias of {name} disagrees with its mean gap: {rep.net!r} vs {gap!r}")
        rows.append(BiasExplanationRow(name, rep.total, rep.positive, rep.negative, rep.net))
    return rows


def bep_rows(rows: Sequence[BiasExplanationRow], key: str = "beta", descending: bool = False):
    """Rows ordered for a bias explanation plot."""
    if key not in BEP_KEYS:
        raise ValueError(f"sort key must be one of {BEP_KEYS}")
    return sorted(rows, key=lambda r: getattr(r, key), reverse=descending)


def write_bep_csv(rows: Sequence[BiasExplanationRow], path) -> None:
    with open(path, "w") as fh:
        fh.write("feature,beta,beta_pos,beta_neg,beta_net\n")
        for r in rows:
            fh.write(f"{r.feature},{r.beta!r},{r.beta_pos!r},{r.beta_neg!r},{r.beta_net!r}\n")


def explainer_classifier_bias(values, protected, favorable_sign: int, t: float) -> float:
    """``(F_{E|G=1}(t) - F_{E|G=0}(t)) * sign`` for one explainer column."""
    a, b = split_by_class(values, protected)
    return (ot.cdf(ot.from_samples(b), t) - ot.cdf(ot.from_samples(a), t)) * favorable_sign


def additive_model_net_identity(m: ModelSpec, X, protected, explainer: str = "pdp_single",
                                background=None):
    """Net model bias versus the sum of net bias explanations.

    For additive models under marginal explainers the two agree exactly.
    Returns ``(lhs, rhs)``.
    """
    if not m.is_additive:
        raise ValueError("model is not additive in its features")
    if explainer not in ("pdp_single", "marginal_shapley"):
        raise ValueError("identity holds for the marginal explainers only")
    X = np.asarray(X, dtype=float)
    bg = X if background is None else np.asarray(background, dtype=float)
    attr = attribute_dataset(m, X, explainer, GameSpec("marginal", bg))
    rows = bias_explanations(attr, protected, m.favorable_sign)
    lhs = model_bias(m.predict(X), protected, m.favorable_sign).net
    return lhs, math.fsum(r.beta_net for r in rows)


def neutralize(m: ModelSpec, X, S: Sequence[int], x_star: Sequence[float]) -> np.ndarray:
    """Scores of ``x -> f(x*_S, x_{-S})``."""
    X = np.array(X, dtype=float)
    x_star = np.asarray(x_star, dtype=float)
    if not np.all(np.isfinite(x_star)):
        raise ValueError("reference values must be finite")
    S = list(S)
    if S:
        X[:, S] = x_star[S] if x_star.size == X.shape[1] else x_star
    return m.predict(X)


@dataclass(frozen=True)
class MitigationStep:
    feature: int
    feature_name: str
    report: BiasReport


@dataclass
class MitigationTrace:
    """Neutralisation steps taken, each with the model bias after it.

    ``halted`` records the neutralisation that the stopping rule refused,
    with the report it would have produced.
    """

    initial: BiasReport
    reference_values: list
    ranking: list
    steps: List[MitigationStep] = field(default_factory=list)
    halted: Optional[MitigationStep] = None

    @property
    def neutralized(self) -> list:
        return [s.feature for s in self.steps]

    def to_dict(self) -> dict:
        return {
            "initial": self.initial.to_dict(),
            "reference_values": list(self.reference_values),
            "ranking": [list(r) for r in self.ranking],
            "steps": [asdict(s) for s in self.steps],
            "halted": None if self.halted is None else asdict(self.halted),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def greedy_mitigation(m: ModelSpec, X, protected, favorable_sign: Optional[int] = None,
                      explainer: str = "pdp_single", spec: Optional[GameSpec] = None,
                      x_star=None, feature_names: Sequence[str] = ()) -> MitigationTrace:
    """Neutralise net-positively-biased predictors in order of net bias.

    A candidate neutralisation is refused, and the loop stops, when it
    would leave the model dominated by negative bias (``negative >
    positive``) with a larger model bias than before.
    """
    X = np.asarray(X, dtype=float)
    sign = m.favorable_sign if favorable_sign is None else favorable_sign
    if spec is None:
        spec = GameSpec("conditional" if explainer == "conditional_shapley" else "marginal", X)
    names = tuple(feature_names) or tuple(f"x{i + 1}" for i in range(X.shape[1]))
    x_star = spec.background.mean(axis=0) if x_star is None else np.asarray(x_star, dtype=float)
    attr = attribute_dataset(m, X, explainer, spec, feature_names=names)
    rows = bias_explanations(attr, protected, sign)
    order = sorted((i for i, r in enumerate(rows) if r.beta_net > 0), key=lambda i: (-rows[i].beta_net, i))
    current = model_bias(m.predict(X), protected, sign)
    trace = MitigationTrace(current, x_star.tolist(), [(names[i], rows[i].beta_net) for i in order])
    chosen: list = []
    for i in order:
        rep = model_bias(neutralize(m, X, chosen + [i], x_star), protected, sign)
        step = MitigationStep(i, names[i], rep)
        if rep.negative > rep.positive and rep.total > current.total:
            trace.halted = step
            break
        chosen.append(i)
        trace.steps.append(step)
        current = rep
    return trace
