"""Distribution-level model bias between protected subpopulations."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Callable, Dict, Mapping, Optional, Sequence, Tuple

import numpy as np

from . import ot
from .errors import DataError


@dataclass(frozen=True)
class BiasReport:
    """W_1 model bias and its split by favourability.

    ``positive`` is the transport effort moving the class-0 distribution in
    the non-favourable direction, ``negative`` in the favourable one.
    """

    total: float
    positive: float
    negative: float
    net: float
    favorable_sign: int
    metric: str = "W1"

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: Mapping) -> "BiasReport":
        return cls(float(d["total"]), float(d["positive"]), float(d["negative"]),
                   float(d["net"]), int(d["favorable_sign"]), d.get("metric", "W1"))


@dataclass(frozen=True, eq=False)
class BiasCurve:
    grid: np.ndarray
    signed_values: np.ndarray
    kind: str

    def to_csv(self, path) -> None:
        head = "t,signed_classifier_bias" if self.kind == "classifier" else "p,signed_quantile_bias"
        with open(path, "w") as fh:
            fh.write(head + "\n")
            for x, v in zip(self.grid.tolist(), self.signed_values.tolist()):
                fh.write(f"{x!r},{v!r}\n")


def _check_sign(favorable_sign: int) -> int:
    if favorable_sign not in (1, -1):
        raise ValueError("favorable_sign must be +1 or -1")
    return int(favorable_sign)


def split_by_class(values, protected) -> Tuple[np.ndarray, np.ndarray]:
    values = np.asarray(values, dtype=float).ravel()
    g = np.asarray(protected).ravel()
    if values.size == 0:
        raise DataError("empty input")
    if values.shape != g.shape:
        raise DataError("values and protected labels differ in length")
    if not np.all(np.isfinite(values)):
        raise DataError("scores must be finite")
    labels = set(np.unique(g).tolist())
    if not labels <= {0, 1}:
        raise DataError("binary protected attribute expected (labels 0 and 1)")
    a, b = values[g == 0], values[g == 1]
    if a.size == 0 or b.size == 0:
        raise DataError("both protected classes must be present")
    return a, b


def report_from_distributions(d0: ot.EmpiricalDistribution, d1: ot.EmpiricalDistribution,
                              favorable_sign: int, metric: str = "W1") -> BiasReport:
    s = _check_sign(favorable_sign)
    dec = ot.signed_efforts(d0, d1, 1)
    # Moving class 0 right is favourable when s = +1.
    pos, neg = (dec.left_effort, dec.right_effort) if s == 1 else (dec.right_effort, dec.left_effort)
    return BiasReport(total=pos + neg, positive=pos, negative=neg, net=pos - neg,
                      favorable_sign=s, metric=metric)


def model_bias(scores, protected, favorable_sign: int = 1) -> BiasReport:
    a, b = split_by_class(scores, protected)
    return report_from_distributions(ot.from_samples(a), ot.from_samples(b), favorable_sign)


def mean_gap(scores, protected, favorable_sign: int = 1) -> float:
    """``sign * (E[s | G=0] - E[s | G=1])``, which equals the net bias."""
    a, b = split_by_class(scores, protected)
    return _check_sign(favorable_sign) * (math.fsum(a) / a.size - math.fsum(b) / b.size)


def default_classifier_grid(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    t = np.union1d(a, b)
    mids = 0.5 * (t[:-1] + t[1:])
    return np.union1d(t, mids)


def classifier_bias_curve(scores, protected, favorable_sign: int = 1, grid=None) -> BiasCurve:
    """Signed statistical-parity bias ``(F1(t) - F0(t)) * sign`` per threshold."""
    s = _check_sign(favorable_sign)
    a, b = split_by_class(scores, protected)
    d0, d1 = ot.from_samples(a), ot.from_samples(b)
    grid = default_classifier_grid(a, b) if grid is None else np.asarray(grid, dtype=float)
    if np.any(np.diff(grid) < 0):
        raise ValueError("grid must be sorted")
    vals = (ot.cdf(d1, grid) - ot.cdf(d0, grid)) * s
    return BiasCurve(grid, np.asarray(vals, dtype=float), "classifier")


def quantile_bias_curve(scores, protected, favorable_sign: int = 1, p_grid=None) -> BiasCurve:
    """Signed quantile bias ``(F0^-1(p) - F1^-1(p)) * sign``.

    Without ``p_grid`` the merged breakpoints are used: the value at
    ``p[k]`` holds on ``(p[k-1], p[k]]``, which makes integration exact.
    """
    s = _check_sign(favorable_sign)
    a, b = split_by_class(scores, protected)
    d0, d1 = ot.from_samples(a), ot.from_samples(b)
    if p_grid is None:
        p_grid = np.union1d(d0.cumulative, d1.cumulative)
    else:
        p_grid = np.asarray(p_grid, dtype=float)
        if np.any((p_grid <= 0) | (p_grid >= 1)):
            raise ValueError("quantile grid must lie in (0, 1)")
    vals = (ot.quantile(d0, p_grid) - ot.quantile(d1, p_grid)) * s
    return BiasCurve(p_grid, np.asarray(vals, dtype=float), "quantile")


def integrate_curve(curve: BiasCurve, part: str = "abs") -> float:
    """Integrate a curve built on its default (exact) grid.

    ``part`` selects ``abs``, ``pos`` (positive part), ``neg`` or ``signed``.
    """
    v = curve.signed_values
    if curve.kind == "classifier":
        v, widths = v[:-1], np.diff(curve.grid)
    else:
        widths = np.diff(np.concatenate(([0.0], curve.grid)))
    if part == "abs":
        v = np.abs(v)
    elif part == "pos":
        v = np.where(v > 0, v, 0.0)
    elif part == "neg":
        v = np.where(v < 0, -v, 0.0)
    elif part != "signed":
        raise ValueError(f"unknown part {part!r}")
    return math.fsum(v * widths)


def classifier_bias_integrals(scores, protected, favorable_sign: int = 1) -> BiasReport:
    """The bias split computed from CDF gaps over thresholds instead of quantiles."""
    s = _check_sign(favorable_sign)
    a, b = split_by_class(scores, protected)
    d0, d1 = ot.from_samples(a), ot.from_samples(b)
    t = np.union1d(a, b)
    if t.size < 2:
        return BiasReport(0.0, 0.0, 0.0, 0.0, s)
    gap = (ot.cdf(d1, t[:-1]) - ot.cdf(d0, t[:-1])) * s
    w = np.diff(t)
    pos = math.fsum(np.where(gap > 0, gap, 0.0) * w)
    neg = math.fsum(np.where(gap < 0, -gap, 0.0) * w)
    return BiasReport(pos + neg, pos, neg, pos - neg, s, "W1-cdf")


def geometric_parity_check(scores, protected, p: Optional[float] = None, t: Optional[float] = None,
                           tol: float = 1e-12) -> bool:
    """Quantile parity at level ``p``, or at ``p = F0(t)`` for a threshold ``t``."""
    if (p is None) == (t is None):
        raise ValueError("give exactly one of p or t")
    a, b = split_by_class(scores, protected)
    d0, d1 = ot.from_samples(a), ot.from_samples(b)
    if t is not None:
        p = ot.cdf(d0, t)
        if p <= 0:
            raise ValueError("threshold lies below the class-0 support")
    if not 0 < p <= 1:
        raise ValueError("p must lie in (0, 1]")
    return abs(ot.quantile(d0, p) - ot.quantile(d1, p)) <= tol


@dataclass(frozen=True, eq=False)
class GroupParitySpec:
    """Classes ``0..K-1`` and disjoint events ``A_m`` given as boolean masks.

    ``weights`` maps ``(k, m)`` (``k >= 1``) to ``w_km``; when omitted the
    weights are uniform over cells whose events are non-empty.
    """

    n_classes: int
    events: tuple
    weights: Optional[Dict[Tuple[int, int], float]] = None

    def __post_init__(self):
        if self.n_classes < 2:
            raise ValueError("need at least two protected classes")
        ev = tuple(np.asarray(e, dtype=bool) for e in self.events)
        if not ev:
            raise ValueError("need at least one event")
        if any(e.shape != ev[0].shape for e in ev):
            raise ValueError("event masks differ in length")
        if np.any(np.sum(ev, axis=0) > 1):
            raise ValueError("events must be pairwise disjoint")
        object.__setattr__(self, "events", ev)
        if self.weights is not None:
            w = {(int(k), int(m)): float(v) for (k, m), v in self.weights.items()}
            if any(v < 0 for v in w.values()):
                raise ValueError("weights must be non-negative")
            if any(not (1 <= k < self.n_classes and 0 <= m < len(ev)) for k, m in w):
                raise ValueError("weight index out of range")
            if abs(math.fsum(w.values()) - 1.0) > 1e-12:
                raise ValueError("weights must sum to 1")
            object.__setattr__(self, "weights", w)


def equalized_odds_spec(y, n_classes: int = 2) -> GroupParitySpec:
    """Events ``{Y=0}, {Y=1}``: the equalized-odds instantiation."""
    y = np.asarray(y)
    return GroupParitySpec(n_classes, (y == 0, y == 1))


@dataclass(frozen=True)
class GroupParityResult:
    cells: Dict[Tuple[int, int], BiasReport]
    weights: Dict[Tuple[int, int], float]
    aggregate: BiasReport


def group_parity_bias(scores, protected, spec: GroupParitySpec, favorable_sign: int = 1) -> GroupParityResult:
    s = _check_sign(favorable_sign)
    scores = np.asarray(scores, dtype=float).ravel()
    g = np.asarray(protected).ravel()
    if scores.shape != g.shape or scores.shape != spec.events[0].shape:
        raise DataError("scores, labels and events differ in length")
    if not np.all(np.isfinite(scores)):
        raise DataError("scores must be finite")

    def nonempty(k, m):
        ev = spec.events[m]
        return np.any(ev & (g == 0)) and np.any(ev & (g == k))

    if spec.weights is None:
        cells = [(k, m) for k in range(1, spec.n_classes) for m in range(len(spec.events)) if nonempty(k, m)]
        if not cells:
            raise DataError("no non-empty (class, event) cells")
        weights = {c: 1.0 / len(cells) for c in cells}
    else:
        weights = dict(spec.weights)
        for (k, m), w in weights.items():
            if w > 0 and not nonempty(k, m):
                raise DataError(f"cell (k={k}, m={m}) is empty but has positive weight")
    reports = {}
    for (k, m), w in sorted(weights.items()):
        if w == 0:
            continue
        ev = spec.events[m]
        a, b = scores[ev & (g == 0)], scores[ev & (g == k)]
        reports[(k, m)] = report_from_distributions(ot.from_samples(a), ot.from_samples(b), s)
    keys = sorted(reports)
    pos = math.fsum(weights[c] * reports[c].positive for c in keys)
    neg = math.fsum(weights[c] * reports[c].negative for c in keys)
    agg = BiasReport(pos + neg, pos, neg, pos - neg, s, "W1-group")
    return GroupParityResult(reports, weights, agg)


def default_link(x: float) -> float:
    """Identity on [0, 0.5], then ``1 - 0.5 exp(-2 (x - 0.5))``; C^1 at 0.5."""
    if x <= 0.5:
        return x
    return 1.0 - 0.5 * math.exp(-2.0 * (x - 0.5))


def renormalized_bias(report, L: float, link: Callable[[float], float] = default_link) -> float:
    if not L > 0:
        raise ValueError("scale L must be positive")
    total = report.total if isinstance(report, BiasReport) else float(report)
    return link(total / L)
