"""Feature explainers built on the marginal and conditional games.

Coalitions are encoded as bitmasks over 0-based feature indices: bit ``i``
set means feature ``i`` is in the coalition.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import expit

from .errors import CapExceededError
from .models import ModelSpec

MAX_PLAYERS = 20
EXPLAINERS = ("pdp_single", "marginal_shapley", "conditional_shapley")
_CHUNK_ELEMS = 4_000_000


def n_threads() -> int:
    env = os.environ.get("FAIRSCOPE_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def mask_of(S: Iterable[int]) -> int:
    m = 0
    for i in S:
        m |= 1 << int(i)
    return m


def members(mask: int, n: int) -> list:
    return [i for i in range(n) if mask >> i & 1]


def check_players(n: int) -> None:
    if n > MAX_PLAYERS:
        raise CapExceededError(
            f"exact Shapley enumeration is capped at {MAX_PLAYERS} players (got {n}); "
            "group the features and use the group (quotient) game instead")


@dataclass(frozen=True, eq=False)
class GameSpec:
    """Which game to play and against which background sample.

    ``background_scores`` supplies model values at the background rows; it
    is required for ``external_scores`` models and otherwise computed.
    """

    game: str = "marginal"
    background: np.ndarray = field(default_factory=lambda: np.empty((0, 0)))
    knn_k: Optional[int] = None
    standardize: bool = True
    background_scores: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.game not in ("marginal", "conditional"):
            raise ValueError(f"unknown game {self.game!r}")
        bg = np.asarray(self.background, dtype=float)
        if bg.ndim != 2 or bg.shape[0] == 0:
            raise ValueError("background must be a non-empty 2-D array")
        object.__setattr__(self, "background", bg)
        k = self.knn_k
        if k is None:
            k = math.ceil(math.sqrt(bg.shape[0]))
        if not 1 <= k <= bg.shape[0]:
            raise ValueError("knn_k must lie in [1, background size]")
        object.__setattr__(self, "knn_k", int(k))
        if self.background_scores is not None:
            bs = np.asarray(self.background_scores, dtype=float)
            if bs.shape != (bg.shape[0],):
                raise ValueError("background_scores must have one value per background row")
            object.__setattr__(self, "background_scores", bs)


def _mean_expit(z: np.ndarray, w: np.ndarray) -> np.ndarray:
    """``mean_j expit(z_i + w_j)`` for every ``i``, chunked over ``i``."""
    uz, inv = np.unique(z, return_inverse=True)
    out = np.empty(uz.size)
    step = max(1, _CHUNK_ELEMS // max(1, w.size))

    def work(start):
        sl = slice(start, start + step)
        out[sl] = expit(uz[sl, None] + w[None, :]).mean(axis=1)

    starts = range(0, uz.size, step)
    threads = n_threads()
    if threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(threads) as pool:
            list(pool.map(work, starts))
    else:
        for s in starts:
            work(s)
    return out[inv.ravel()]


def _marginal_values(m: ModelSpec, X: np.ndarray, bg: np.ndarray, mask: int) -> np.ndarray:
    n = X.shape[1]
    inside = np.array([bool(mask >> i & 1) for i in range(n)])
    if m.kind == "external_scores":
        raise TypeError("the marginal game needs a model that can be evaluated off-sample")
    if not inside.any():
        return np.full(X.shape[0], float(np.mean(m.predict(bg))))
    if inside.all():
        return m.predict(X)
    if m.kind == "linear":
        c = m.coef
        rest = float(np.mean(bg[:, ~inside], axis=0) @ c[~inside])
        return X[:, inside] @ c[inside] + (rest + m.intercept)
    if m.kind == "additive_tabular":
        out = np.full(X.shape[0], m.intercept)
        for i, t in enumerate(m.tables):
            if inside[i]:
                out = out + t(X[:, i])
            else:
                out = out + float(np.mean(t(bg[:, i])))
        return out
    # logistic_linear: the value depends on x only through c_S . x_S
    c = m.coef
    z = X[:, inside] @ c[inside]
    w = bg[:, ~inside] @ c[~inside] + m.intercept
    return _mean_expit(z, w)


def _conditional_values(X: np.ndarray, row_scores: Optional[np.ndarray], spec: GameSpec,
                        bg_scores: np.ndarray, mask: int) -> np.ndarray:
    n = X.shape[1]
    cols = members(mask, n)
    if not cols:
        return np.full(X.shape[0], float(np.mean(bg_scores)))
    if len(cols) == n:
        if row_scores is None:
            raise ValueError("model values at the evaluation rows are required")
        return np.asarray(row_scores, dtype=float)
    idx = conditional_neighbors(spec, cols, X)
    return bg_scores[idx].mean(axis=1)


def conditional_neighbors(spec: GameSpec, cols: Sequence[int], X: np.ndarray) -> np.ndarray:
    """Indices (N x k) of the background rows nearest each row of ``X`` on ``cols``."""
    bg = spec.background[:, cols]
    pts = np.asarray(X, dtype=float)[:, cols]
    if spec.standardize:
        scale = bg.std(axis=0)
        scale[scale == 0] = 1.0
        loc = bg.mean(axis=0)
        bg = (bg - loc) / scale
        pts = (pts - loc) / scale
    tree = cKDTree(bg)
    _, idx = tree.query(pts, k=spec.knn_k, workers=n_threads())
    return np.asarray(idx).reshape(pts.shape[0], spec.knn_k)


class CoalitionGame:
    """Per-row game values ``v(S; x)`` with a per-coalition cache.

    ``scores`` are the model values at the rows of ``X``; they are only
    needed for ``external_scores`` models, where ``X`` must also be the
    background.
    """

    def __init__(self, model: ModelSpec, X, spec: GameSpec, scores=None):
        self.model = model
        self.X = np.asarray(X, dtype=float)
        if self.X.ndim != 2:
            raise ValueError("X must be 2-D")
        self.n = self.X.shape[1]
        if spec.background.shape[1] != self.n:
            raise ValueError("background and data have different feature counts")
        self.spec = spec
        if scores is None and model.kind != "external_scores":
            scores = model.predict(self.X)
        self.scores = None if scores is None else np.asarray(scores, dtype=float)
        if spec.game == "conditional":
            bs = spec.background_scores
            if bs is None:
                if model.kind == "external_scores":
                    raise ValueError("external scores need background_scores for the conditional game")
                bs = model.predict(spec.background)
            self._bg_scores = bs
        elif model.kind == "external_scores":
            raise TypeError("external scores only support the conditional game")
        self._cache: dict = {}
        self._phi = None

    @property
    def n_samples(self) -> int:
        return self.X.shape[0]

    def value(self, mask: int) -> np.ndarray:
        if not 0 <= mask < 1 << self.n:
            raise IndexError("coalition refers to a feature out of range")
        if mask not in self._cache:
            if self.spec.game == "marginal":
                v = _marginal_values(self.model, self.X, self.spec.background, mask)
            else:
                v = _conditional_values(self.X, self.scores, self.spec, self._bg_scores, mask)
            v = np.asarray(v, dtype=float)
            v.flags.writeable = False
            self._cache[mask] = v
        return self._cache[mask]

    def table(self, masks: Optional[Sequence[int]] = None) -> np.ndarray:
        if masks is None:
            masks = range(1 << self.n)
        return np.column_stack([self.value(m) for m in masks])

    @property
    def baseline(self) -> float:
        return float(self.value(0)[0])

    def shapley(self) -> np.ndarray:
        if self._phi is None:
            check_players(self.n)
            self._phi = shapley_matrix(self.table(), self.n)
        return self._phi


def shapley_weights(n: int) -> np.ndarray:
    """``w[s] = s! (n-s-1)! / n!`` for ``s = 0..n-1``."""
    nf = math.factorial(n)
    return np.array([math.factorial(s) * math.factorial(n - s - 1) / nf for s in range(n)])


def _popcounts(n: int) -> np.ndarray:
    masks = np.arange(1 << n)
    return np.array([bin(m).count("1") for m in masks.tolist()])


def shapley_matrix(V: np.ndarray, n: int) -> np.ndarray:
    """Shapley values for many games at once; ``V`` is ``rows x 2**n``."""
    check_players(n)
    V = np.asarray(V, dtype=float)
    if V.ndim == 1:
        V = V[None, :]
    if V.shape[1] != 1 << n:
        raise ValueError(f"need values for all {1 << n} coalitions")
    if np.any(np.isnan(V)):
        raise ValueError("missing coalition value")
    if n == 0:
        return np.zeros((V.shape[0], 0))
    w = shapley_weights(n)
    pc = _popcounts(n)
    masks = np.arange(1 << n)
    phi = np.empty((V.shape[0], n))
    for i in range(n):
        without = masks[(masks >> i & 1) == 0]
        phi[:, i] = (V[:, without | (1 << i)] - V[:, without]) @ w[pc[without]]
    return phi


def shapley(values, n: int) -> np.ndarray:
    """Exact Shapley values of one game.

    ``values`` is either a sequence indexed by bitmask or a mapping from
    coalitions (iterables of 0-based players) to values.
    """
    check_players(n)
    if isinstance(values, Mapping):
        table = np.full(1 << n, np.nan)
        for S, v in values.items():
            table[mask_of(S)] = v
        if np.any(np.isnan(table)):
            missing = int(np.flatnonzero(np.isnan(table))[0])
            raise ValueError(f"missing value for coalition {members(missing, n)}")
    else:
        table = np.asarray(values, dtype=float)
    return shapley_matrix(table, n)[0]


def _single_row_game(m: ModelSpec, background, game: str, knn_k=None, standardize=True) -> GameSpec:
    return GameSpec(game, np.asarray(background, dtype=float), knn_k, standardize)


def pdp(m: ModelSpec, background, S: Sequence[int], x_S: Sequence[float]) -> float:
    """Partial dependence of ``m`` on features ``S`` at ``x_S``."""
    bg = np.asarray(background, dtype=float)
    S = list(S)
    if not S:
        raise ValueError("S must be non-empty")
    if any(not 0 <= i < bg.shape[1] for i in S):
        raise IndexError("feature index out of range")
    x = np.zeros(bg.shape[1])
    x[S] = np.asarray(x_S, dtype=float)
    return float(_marginal_values(m, x[None, :], bg, mask_of(S))[0])


def marginal_game(m: ModelSpec, background, S: Sequence[int], x) -> float:
    bg = np.asarray(background, dtype=float)
    if any(not 0 <= i < bg.shape[1] for i in S):
        raise IndexError("feature index out of range")
    return float(_marginal_values(m, np.asarray(x, dtype=float)[None, :], bg, mask_of(S))[0])


def conditional_game(m: ModelSpec, background, S: Sequence[int], x, knn_k: Optional[int] = None,
                     standardize: bool = True) -> float:
    spec = _single_row_game(m, background, "conditional", knn_k, standardize)
    if any(not 0 <= i < spec.background.shape[1] for i in S):
        raise IndexError("feature index out of range")
    game = CoalitionGame(m, np.asarray(x, dtype=float)[None, :], spec)
    return float(game.value(mask_of(S))[0])


@dataclass(frozen=True, eq=False)
class AttributionMatrix:
    values: np.ndarray
    explainer_id: str
    model_id: str
    feature_names: tuple = ()
    baseline: Optional[float] = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2:
            raise ValueError("attributions must be an N x n matrix")
        if not np.all(np.isfinite(v)):
            raise ValueError("attributions must be finite")
        object.__setattr__(self, "values", v)
        if not self.feature_names:
            object.__setattr__(self, "feature_names", tuple(f"x{i + 1}" for i in range(v.shape[1])))

    def column(self, i: int) -> np.ndarray:
        return self.values[:, i]

    def efficiency_residual(self, scores) -> float:
        """Largest ``|baseline + row sum - f(x)|``; meaningful for Shapley explainers."""
        if self.baseline is None:
            raise ValueError("no baseline recorded for this explainer")
        return float(np.max(np.abs(self.baseline + self.values.sum(axis=1) - np.asarray(scores))))

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(",".join(self.feature_names) + "\n")
            for row in self.values.tolist():
                fh.write(",".join(repr(v) for v in row) + "\n")


def explainer_game(explainer: str) -> str:
    if explainer not in EXPLAINERS:
        raise ValueError(f"unknown explainer {explainer!r}; expected one of {EXPLAINERS}")
    return "conditional" if explainer == "conditional_shapley" else "marginal"


def attribute_dataset(m: ModelSpec, X, explainer: str, spec: GameSpec, scores=None,
                      feature_names: Sequence[str] = (), game: Optional[CoalitionGame] = None) -> AttributionMatrix:
    """Per-row, per-feature explainer values.

    ``pdp_single`` uses ``v({i}; x)`` of the game in ``spec``; the Shapley
    explainers use exact Shapley values of the marginal or conditional game.
    """
    want = explainer_game(explainer)
    if explainer != "pdp_single" and spec.game != want:
        raise ValueError(f"{explainer} requires a {want} GameSpec")
    if game is None:
        game = CoalitionGame(m, X, spec, scores)
    if explainer == "pdp_single":
        vals = game.table([1 << i for i in range(game.n)])
        baseline = None
    else:
        vals = game.shapley()
        baseline = game.baseline
    return AttributionMatrix(vals, explainer, m.model_id, tuple(feature_names), baseline)


def validate_partition(partition: Sequence[Sequence[int]], n: int) -> list:
    groups = [tuple(int(i) for i in g) for g in partition]
    flat = [i for g in groups for i in g]
    if any(not g for g in groups) or sorted(flat) != list(range(n)):
        raise ValueError("partition must split the feature indices into disjoint non-empty groups")
    return groups


def group_mask(partition: Sequence[Sequence[int]], A: Iterable[int]) -> int:
    mask = 0
    for j in A:
        if not 0 <= j < len(partition):
            raise IndexError("group index out of range")
        mask |= mask_of(partition[j])
    return mask


def quotient_table(game: CoalitionGame, partition: Sequence[Sequence[int]]) -> np.ndarray:
    """Values of the quotient game ``v(union of groups in A)`` for every ``A``."""
    groups = validate_partition(partition, game.n)
    check_players(len(groups))
    masks = [group_mask(groups, members(a, len(groups))) for a in range(1 << len(groups))]
    return game.table(masks)


def group_explainer(m: ModelSpec, background, partition: Sequence[Sequence[int]], A: Iterable[int], x,
                    game: str = "marginal", knn_k: Optional[int] = None) -> float:
    bg = np.asarray(background, dtype=float)
    groups = validate_partition(partition, bg.shape[1])
    S = members(group_mask(groups, A), bg.shape[1])
    if game == "marginal":
        return marginal_game(m, bg, S, x)
    return conditional_game(m, bg, S, x, knn_k)
