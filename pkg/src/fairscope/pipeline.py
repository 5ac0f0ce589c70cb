"""Audit configuration, CSV ingestion, the audit pipeline and curve emission."""

from __future__ import annotations

import csv
import json
import logging
import math
import os
import time
from dataclasses import asdict, dataclass, field, fields
from typing import Dict, List, Optional

import numpy as np

from . import __version__, ot
from .errors import ConfigError, DataError
from .explainers import EXPLAINERS, AttributionMatrix, GameSpec, CoalitionGame, attribute_dataset, explainer_game
from .explanations import bias_explanations, greedy_mitigation, write_bep_csv
from .metrics import classifier_bias_integrals, default_classifier_grid, model_bias, split_by_class
from .models import MODEL_IDS, ModelSpec, generate
from .shapley_bias import build_bias_game, group_shapley_bias, shapley_bias

SCHEMA_VERSION = 1
log = logging.getLogger("fairscope")


@dataclass
class AuditConfig:
    """Everything an audit needs; echoed verbatim into the report.

    The dataset is either a CSV file (``dataset``) or a synthetic draw
    (``synthetic = {"model_id": ..., "N": ..., "params": {...}}``).  Exactly
    one model source is allowed: ``model_spec`` (a JSON path, an inline
    dict, or ``"true"`` for the generating model of a synthetic draw),
    ``score_column`` or ``attribution_csv``.
    """

    favorable_direction: str = ""
    dataset: Optional[str] = None
    synthetic: Optional[dict] = None
    protected_column: str = "g"
    reference_label: str = "0"
    features: Optional[List[str]] = None
    model_spec: object = None
    score_column: Optional[str] = None
    attribution_csv: Optional[str] = None
    explainer: str = "pdp_single"
    background_cap: int = 4000
    knn_k: Optional[int] = None
    partition: Optional[Dict[str, List[str]]] = None
    shapley_bias: bool = False
    group_explainer: str = "shapley_sum"
    x_star: Optional[List[float]] = None
    seed: int = 0
    output_dir: str = "fairscope_out"

    def __post_init__(self):
        if self.favorable_direction not in ("up", "down"):
            raise ConfigError("favorable_direction must be 'up' or 'down'")
        if (self.dataset is None) == (self.synthetic is None):
            raise ConfigError("give exactly one of dataset or synthetic")
        sources = [s for s in (self.model_spec, self.score_column, self.attribution_csv) if s is not None]
        if len(sources) != 1:
            raise ConfigError("give exactly one model source: model_spec, score_column or attribution_csv")
        if self.model_spec == "true" and self.synthetic is None:
            raise ConfigError("model_spec 'true' needs a synthetic dataset")
        if self.synthetic is not None:
            if self.synthetic.get("model_id") not in MODEL_IDS:
                raise ConfigError(f"synthetic.model_id must be one of {MODEL_IDS}")
            self.protected_column, self.reference_label = "g", "0"
        if self.explainer not in EXPLAINERS:
            raise ConfigError(f"explainer must be one of {EXPLAINERS}")
        if self.group_explainer not in ("shapley_sum", "game_value"):
            raise ConfigError("group_explainer must be 'shapley_sum' or 'game_value'")
        if not isinstance(self.background_cap, int) or self.background_cap < 1:
            raise ConfigError("background_cap must be a positive integer")
        if self.knn_k is not None and (not isinstance(self.knn_k, int) or self.knn_k < 1):
            raise ConfigError("knn_k must be a positive integer")
        if not isinstance(self.seed, int):
            raise ConfigError("seed must be an integer")

    @property
    def favorable_sign(self) -> int:
        return 1 if self.favorable_direction == "up" else -1

    @classmethod
    def from_dict(cls, d: dict) -> "AuditConfig":
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_json(cls, path) -> "AuditConfig":
        try:
            with open(path) as fh:
                d = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        cfg = cls.from_dict(d)
        base = os.path.dirname(os.path.abspath(path))
        for key in ("dataset", "attribution_csv", "output_dir"):
            v = getattr(cfg, key)
            if v is not None and not os.path.isabs(v):
                setattr(cfg, key, os.path.join(base, v))
        if isinstance(cfg.model_spec, str) and cfg.model_spec != "true" and not os.path.isabs(cfg.model_spec):
            cfg.model_spec = os.path.join(base, cfg.model_spec)
        return cfg

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Dataset:
    features: np.ndarray
    protected: np.ndarray
    feature_names: tuple
    label_map: dict
    kept_rows: np.ndarray
    dropped_rows: list = field(default_factory=list)
    scores: Optional[np.ndarray] = None


def _read_csv(path):
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None
    if not rows or not rows[0]:
        raise DataError(f"{path}: header row missing")
    header = [h.strip() for h in rows[0]]
    body = [r for r in rows[1:] if r]
    for k, r in enumerate(body):
        if len(r) != len(header):
            raise DataError(f"{path}: row {k + 1} has {len(r)} fields, expected {len(header)}")
    return header, body


def _numeric(path, header, body, cols):
    idx = []
    for c in cols:
        if c not in header:
            raise DataError(f"{path}: missing column {c!r}")
        idx.append(header.index(c))
    out = np.empty((len(body), len(cols)))
    for k, r in enumerate(body):
        for j, i in enumerate(idx):
            try:
                out[k, j] = float(r[i])
            except ValueError:
                raise DataError(f"{path}: row {k + 1}, column {cols[j]!r}: cannot parse {r[i]!r}") from None
    return out


def map_protected(raw, reference: str):
    """Reference label to 0; the remaining labels, sorted, to 1, 2, ..."""
    raw = [str(v).strip() for v in raw]
    labels = sorted(set(raw))
    if reference not in labels:
        raise DataError(f"reference label {reference!r} not present in the protected column")
    if len(labels) < 2:
        raise DataError("protected column has a single class")
    order = [reference] + [v for v in labels if v != reference]
    label_map = {v: k for k, v in enumerate(order)}
    return np.array([label_map[v] for v in raw], dtype=int), label_map


def ingest_csv(path, config: AuditConfig) -> Dataset:
    header, body = _read_csv(path)
    pc = config.protected_column
    if pc not in header:
        raise DataError(f"{path}: missing protected column {pc!r}")
    skip = {pc, config.score_column}
    names = list(config.features) if config.features else [h for h in header if h not in skip]
    if not names:
        raise DataError(f"{path}: no feature columns")
    X = _numeric(path, header, body, names)
    scores = _numeric(path, header, body, [config.score_column])[:, 0] if config.score_column else None
    ok = np.all(np.isfinite(X), axis=1)
    if scores is not None:
        ok &= np.isfinite(scores)
    dropped = [int(k) + 1 for k in np.flatnonzero(~ok)]
    if dropped:
        log.warning("dropped %d rows with non-finite values: %s", len(dropped), dropped[:20])
    raw = [body[k][header.index(pc)] for k in np.flatnonzero(ok)]
    if not raw:
        raise DataError(f"{path}: no usable rows")
    g, label_map = map_protected(raw, str(config.reference_label))
    return Dataset(X[ok], g, tuple(names), label_map, np.flatnonzero(ok), dropped,
                   None if scores is None else scores[ok])


def load_dataset(config: AuditConfig):
    """Returns ``(dataset, model)``; ``model`` is None in attribution-CSV mode."""
    if config.synthetic is not None:
        syn = dict(config.synthetic)
        data, true_model = generate(syn["model_id"], syn.get("params"), int(syn.get("N", 1000)),
                                    int(syn.get("seed", config.seed)))
        ds = Dataset(data.features, data.protected, data.feature_names, {"0": 0, "1": 1},
                     np.arange(data.n_samples))
    else:
        ds = ingest_csv(config.dataset, config)
        true_model = None
    sign = config.favorable_sign
    n = ds.features.shape[1]
    if config.model_spec == "true":
        m = true_model
    elif config.model_spec is not None:
        spec = config.model_spec
        if isinstance(spec, str):
            try:
                with open(spec) as fh:
                    spec = json.load(fh)
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot read model spec: {exc}") from None
        try:
            m = ModelSpec.from_dict(spec)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid model spec: {exc}") from None
        if m.n_features != n:
            raise ConfigError(f"model expects {m.n_features} features, dataset has {n}")
    elif config.score_column is not None:
        if ds.scores is None:
            raise DataError("score column missing from synthetic data")
        m = ModelSpec("external_scores", model_id="external", n_features=n)
    else:
        m = None
    if m is not None:
        m = ModelSpec(m.kind, m.coefficients, m.intercept, m.tables, sign, m.model_id, m.n_features)
        if ds.scores is None:
            ds.scores = m.predict(ds.features)
    return ds, m


def read_attribution_csv(config: AuditConfig, ds: Dataset) -> AttributionMatrix:
    """Attribution CSV: a ``score`` column plus one column per feature, rows aligned with the dataset."""
    header, body = _read_csv(config.attribution_csv)
    cols = [h for h in header if h != "score"]
    if "score" not in header:
        raise DataError("attribution CSV needs a 'score' column")
    if len(body) < ds.kept_rows.max() + 1:
        raise DataError("attribution CSV has fewer rows than the dataset")
    vals = _numeric(config.attribution_csv, header, body, cols)[ds.kept_rows]
    scores = _numeric(config.attribution_csv, header, body, ["score"])[ds.kept_rows, 0]
    if not (np.all(np.isfinite(vals)) and np.all(np.isfinite(scores))):
        raise DataError("attribution CSV has non-finite values on kept rows")
    ds.scores = scores
    return AttributionMatrix(vals, "external", "external", tuple(cols))


def _background(ds: Dataset, cap: int, seed: int):
    n = ds.features.shape[0]
    if n <= cap:
        idx = np.arange(n)
    else:
        idx = np.sort(np.random.Generator(np.random.Philox(seed)).choice(n, cap, replace=False))
    return idx


def _binary(ds: Dataset) -> np.ndarray:
    if ds.protected.max() > 1:
        raise DataError("pairwise audits need a binary protected attribute; relabel the classes")
    return ds.protected


def build_game(config: AuditConfig, ds: Dataset, m: ModelSpec, game: Optional[str] = None) -> CoalitionGame:
    game = game or explainer_game(config.explainer)
    if m.kind == "external_scores" and game != "conditional":
        raise ConfigError("external scores can only be explained with the conditional game")
    idx = _background(ds, config.background_cap, config.seed)
    bg_scores = ds.scores[idx] if m.kind == "external_scores" else None
    k = None if config.knn_k is None else min(config.knn_k, idx.size)
    spec = GameSpec(game, ds.features[idx], k, True, bg_scores)
    return CoalitionGame(m, ds.features, spec, ds.scores if m.kind == "external_scores" else None)


def attributions(config: AuditConfig, ds: Dataset, m: Optional[ModelSpec], game=None) -> AttributionMatrix:
    if m is None:
        return read_attribution_csv(config, ds)
    game = game or build_game(config, ds, m)
    return attribute_dataset(m, ds.features, config.explainer, game.spec, feature_names=ds.feature_names,
                             game=game)


def _write_rows(path, head, cols):
    with open(path, "w") as fh:
        fh.write(",".join(head) + "\n")
        for row in zip(*[np.asarray(c, dtype=float).tolist() for c in cols]):
            fh.write(",".join(repr(v) for v in row) + "\n")


def _cdf_file(path, values, protected, sign):
    a, b = split_by_class(values, protected)
    d0, d1 = ot.from_samples(a), ot.from_samples(b)
    t = default_classifier_grid(a, b)
    F0, F1 = ot.cdf(d0, t), ot.cdf(d1, t)
    _write_rows(path, ("t", "F0", "F1", "signed_classifier_bias"), (t, F0, F1, (F1 - F0) * sign))


def emit_curves(scores, protected, attr: Optional[AttributionMatrix], outdir, favorable_sign: int) -> list:
    """Write per-class score CDFs, the quantile gap and one CDF file per explainer.

    CDF files use the grid of all values and midpoints; the quantile file
    uses merged cumulative breakpoints, where each value holds on
    ``(p[k-1], p[k]]``.
    """
    try:
        os.makedirs(outdir, exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create {outdir}: {exc}") from None
    files = []
    path = os.path.join(outdir, "score_cdf.csv")
    _cdf_file(path, scores, protected, favorable_sign)
    files.append(path)
    a, b = split_by_class(scores, protected)
    d0, d1 = ot.from_samples(a), ot.from_samples(b)
    p = np.union1d(d0.cumulative, d1.cumulative)
    q0, q1 = ot.quantile(d0, p), ot.quantile(d1, p)
    path = os.path.join(outdir, "quantile_gap.csv")
    _write_rows(path, ("p", "q0", "q1", "signed_quantile_bias"), (p, q0, q1, (q0 - q1) * favorable_sign))
    files.append(path)
    if attr is not None:
        for i, name in enumerate(attr.feature_names):
            path = os.path.join(outdir, f"explainer_cdf_{name}.csv")
            _cdf_file(path, attr.column(i), protected, favorable_sign)
            files.append(path)
    return files


def _partition_indices(config: AuditConfig, names) -> tuple:
    groups, labels = [], []
    for label, feats in config.partition.items():
        missing = [f for f in feats if f not in names]
        if missing:
            raise ConfigError(f"partition group {label!r} names unknown features {missing}")
        groups.append([names.index(f) for f in feats])
        labels.append(label)
    return groups, tuple(labels)


def run_audit(config: AuditConfig, write: bool = True) -> dict:
    """Score, split by class, measure model bias, explain it per predictor.

    Optionally adds Shapley-bias and group results, then writes
    ``report.json``, ``bep.csv`` and the curve files to ``output_dir``.
    """
    timings = {}
    t0 = time.perf_counter()
    ds, m = load_dataset(config)
    g = _binary(ds)
    sign = config.favorable_sign
    timings["load"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    game = None if m is None else build_game(config, ds, m)
    attr = attributions(config, ds, m, game)
    rep = model_bias(ds.scores, g, sign)
    rows = bias_explanations(attr, g, sign)
    timings["bias_explanations"] = time.perf_counter() - t0

    report = {
        "schema_version": SCHEMA_VERSION,
        "version": __version__,
        "config": config.to_dict(),
        "dataset": {"n_rows": int(ds.features.shape[0]), "n_features": int(ds.features.shape[1]),
                    "feature_names": list(ds.feature_names), "label_map": ds.label_map,
                    "dropped_rows": ds.dropped_rows},
        "model_bias": rep.to_dict(),
        "model_bias_cdf": classifier_bias_integrals(ds.scores, g, sign).to_dict(),
        "bias_explanations": [asdict(r) for r in rows],
        "sum_beta_net": math.fsum(r.beta_net for r in rows),
        "shapley_bias": None,
        "group_shapley_bias": None,
    }
    if config.shapley_bias or config.partition:
        if m is None:
            raise ConfigError("Shapley-bias needs a model source, not an attribution CSV")
    if config.shapley_bias:
        t0 = time.perf_counter()
        table = build_bias_game(m, ds.features, g, sign, config.group_explainer, game.spec.game,
                                feature_names=ds.feature_names, game=game)
        report["shapley_bias"] = shapley_bias(table).rows()
        timings["shapley_bias"] = time.perf_counter() - t0
    if config.partition:
        t0 = time.perf_counter()
        groups, labels = _partition_indices(config, list(ds.feature_names))
        res = group_shapley_bias(m, ds.features, g, groups, sign, game.spec.game, game.spec,
                                 ds.scores if m.kind == "external_scores" else None, labels)
        report["group_shapley_bias"] = res.rows()
        timings["group_shapley_bias"] = time.perf_counter() - t0
    if write:
        t0 = time.perf_counter()
        out = config.output_dir
        report["curves"] = [os.path.basename(f) for f in emit_curves(ds.scores, g, attr, out, sign)]
        write_bep_csv(rows, os.path.join(out, "bep.csv"))
        timings["write"] = time.perf_counter() - t0
        report["timings"] = timings
        write_json(report, os.path.join(out, "report.json"))
    else:
        report["timings"] = timings
    return report


def write_json(obj, path) -> None:
    d = os.path.dirname(path)
    if d:
        os.makedirs(d, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def run_mitigation(config: AuditConfig) -> dict:
    ds, m = load_dataset(config)
    if m is None or m.kind == "external_scores":
        raise ConfigError("mitigation needs an evaluable model (model_spec)")
    g = _binary(ds)
    game = build_game(config, ds, m)
    trace = greedy_mitigation(m, ds.features, g, config.favorable_sign, config.explainer, game.spec,
                              config.x_star, ds.feature_names)
    return trace.to_dict()
