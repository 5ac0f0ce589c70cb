"""Additive Shapley-bias explanations from cooperative bias games."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .explainers import (CoalitionGame, GameSpec, check_players, members, quotient_table,
                         shapley_matrix, validate_partition)
from .metrics import BiasReport, model_bias
from .models import ModelSpec

GROUP_EXPLAINERS = ("shapley_sum", "game_value")


@dataclass(frozen=True, eq=False)
class BiasGameTable:
    """``v_bias``, ``v_bias_pos`` and ``v_bias_neg`` for every coalition bitmask."""

    players: tuple
    v_bias: np.ndarray
    v_pos: np.ndarray
    v_neg: np.ndarray
    base_game: str
    group_explainer: str
    favorable_sign: int

    def __post_init__(self):
        n = len(self.players)
        for arr in (self.v_bias, self.v_pos, self.v_neg):
            if np.asarray(arr).shape != (1 << n,):
                raise ValueError("bias game table is incomplete")

    @property
    def n_players(self) -> int:
        return len(self.players)

    def value(self, coalition: Sequence[int]):
        mask = 0
        for i in coalition:
            mask |= 1 << int(i)
        return float(self.v_bias[mask]), float(self.v_pos[mask]), float(self.v_neg[mask])


@dataclass(frozen=True, eq=False)
class ShapleyBiasResult:
    players: tuple
    phi: np.ndarray
    phi_pos: np.ndarray
    phi_neg: np.ndarray
    phi_net: np.ndarray

    def rows(self):
        return [
            {"feature": p, "phi": float(a), "phi_pos": float(b), "phi_neg": float(c), "phi_net": float(d)}
            for p, a, b, c, d in zip(self.players, self.phi, self.phi_pos, self.phi_neg, self.phi_net)
        ]

    def totals(self) -> BiasReport:
        pos, neg = float(self.phi_pos.sum()), float(self.phi_neg.sum())
        return BiasReport(float(self.phi.sum()), pos, neg, float(self.phi_net.sum()), 0, "shapley-sum")

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("feature,phi,phi_pos,phi_neg,phi_net\n")
            for r in self.rows():
                fh.write(f"{r['feature']},{r['phi']!r},{r['phi_pos']!r},{r['phi_neg']!r},{r['phi_net']!r}\n")

    def to_json(self) -> str:
        return json.dumps(self.rows(), indent=2)


def _bias_columns(E: np.ndarray, protected, favorable_sign: int):
    reps = [model_bias(E[:, j], protected, favorable_sign) for j in range(E.shape[1])]
    return (np.array([r.total for r in reps]), np.array([r.positive for r in reps]),
            np.array([r.negative for r in reps]))


def _membership(n: int) -> np.ndarray:
    masks = np.arange(1 << n)
    return np.stack([(masks >> i) & 1 for i in range(n)], axis=1).astype(float)


def build_bias_game(m: ModelSpec, X, protected, favorable_sign: Optional[int] = None,
                    group_explainer: str = "shapley_sum", base_game: str = "marginal",
                    spec: Optional[GameSpec] = None, scores=None, feature_names: Sequence[str] = (),
                    game: Optional[CoalitionGame] = None) -> BiasGameTable:
    """Tabulate the bias games over all feature coalitions.

    ``shapley_sum`` explains a coalition by the sum of its members' Shapley
    values; ``game_value`` uses the base game value ``v(S; x)`` directly.
    Both give a constant at the empty coalition and ``f`` (up to a shift)
    at the full one.
    """
    if group_explainer not in GROUP_EXPLAINERS:
        raise ValueError(f"group_explainer must be one of {GROUP_EXPLAINERS}")
    sign = m.favorable_sign if favorable_sign is None else favorable_sign
    X = np.asarray(X, dtype=float)
    check_players(X.shape[1])
    if game is None:
        if spec is None:
            spec = GameSpec(base_game, X)
        elif spec.game != base_game:
            raise ValueError("spec.game differs from base_game")
        game = CoalitionGame(m, X, spec, scores)
    n = game.n
    if group_explainer == "shapley_sum":
        E = game.shapley() @ _membership(n).T
    else:
        E = game.table()
    v, vp, vn = _bias_columns(E, protected, sign)
    names = tuple(feature_names) or tuple(f"x{i + 1}" for i in range(n))
    return BiasGameTable(names, v, vp, vn, game.spec.game, group_explainer, sign)


def shapley_bias(table: BiasGameTable) -> ShapleyBiasResult:
    n = table.n_players
    phi = shapley_matrix(np.stack([table.v_bias, table.v_pos, table.v_neg]), n)
    return ShapleyBiasResult(table.players, phi[0], phi[1], phi[2], phi[1] - phi[2])


def group_bias_game(m: ModelSpec, X, protected, partition: Sequence[Sequence[int]],
                    favorable_sign: Optional[int] = None, base_game: str = "marginal",
                    spec: Optional[GameSpec] = None, scores=None, group_names: Sequence[str] = (),
                    game: Optional[CoalitionGame] = None) -> BiasGameTable:
    """Bias games of the quotient game played by the groups of ``partition``."""
    sign = m.favorable_sign if favorable_sign is None else favorable_sign
    X = np.asarray(X, dtype=float)
    groups = validate_partition(partition, X.shape[1])
    check_players(len(groups))
    if game is None:
        if spec is None:
            spec = GameSpec(base_game, X)
        elif spec.game != base_game:
            raise ValueError("spec.game differs from base_game")
        game = CoalitionGame(m, X, spec, scores)
    E = quotient_table(game, groups)
    v, vp, vn = _bias_columns(E, protected, sign)
    names = tuple(group_names) or tuple("+".join(f"x{i + 1}" for i in g) for g in groups)
    return BiasGameTable(names, v, vp, vn, game.spec.game, "game_value", sign)


def group_shapley_bias(m: ModelSpec, X, protected, partition: Sequence[Sequence[int]],
                       favorable_sign: Optional[int] = None, base_game: str = "marginal",
                       spec: Optional[GameSpec] = None, scores=None,
                       group_names: Sequence[str] = ()) -> ShapleyBiasResult:
    table = group_bias_game(m, X, protected, partition, favorable_sign, base_game, spec, scores, group_names)
    return shapley_bias(table)


def coalition_label(mask: int, players: Sequence[str]) -> str:
    return "{" + ",".join(players[i] for i in members(mask, len(players))) + "}"
