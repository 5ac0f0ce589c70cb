"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 player cap exceeded.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from .errors import ConfigError, FairscopeError
from .models import MODEL_IDS, generate
from .pipeline import (AuditConfig, _binary, _partition_indices, attributions, build_game, emit_curves,
                       load_dataset, run_audit, run_mitigation, write_json)
from .shapley_bias import build_bias_game, group_shapley_bias, shapley_bias

log = logging.getLogger("fairscope")


def _config(args) -> AuditConfig:
    if not args.config:
        raise ConfigError("--config is required")
    cfg = AuditConfig.from_json(args.config)
    if args.out is not None:
        cfg.output_dir = args.out
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg


def cmd_audit(args) -> int:
    cfg = _config(args)
    rep = run_audit(cfg)
    mb = rep["model_bias"]
    print(f"model bias {mb['total']:.6g} (positive {mb['positive']:.6g}, negative {mb['negative']:.6g}, "
          f"net {mb['net']:.6g})")
    for r in rep["bias_explanations"]:
        print(f"  {r['feature']}: beta {r['beta']:.6g} (+{r['beta_pos']:.6g} / -{r['beta_neg']:.6g})")
    print(f"report written to {os.path.join(cfg.output_dir, 'report.json')}")
    return 0


def cmd_explain(args) -> int:
    cfg = _config(args)
    ds, m = load_dataset(cfg)
    attr = attributions(cfg, ds, m)
    os.makedirs(cfg.output_dir, exist_ok=True)
    path = os.path.join(cfg.output_dir, "attributions.csv")
    attr.to_csv(path)
    print(path)
    return 0


def _need_model(m):
    if m is None:
        raise ConfigError("this command needs a model source, not an attribution CSV")


def cmd_shapley_bias(args) -> int:
    cfg = _config(args)
    ds, m = load_dataset(cfg)
    _need_model(m)
    g = _binary(ds)
    game = build_game(cfg, ds, m)
    table = build_bias_game(m, ds.features, g, cfg.favorable_sign, cfg.group_explainer, game.spec.game,
                            feature_names=ds.feature_names, game=game)
    res = shapley_bias(table)
    os.makedirs(cfg.output_dir, exist_ok=True)
    res.to_csv(os.path.join(cfg.output_dir, "shapley_bias.csv"))
    print(res.to_json())
    return 0


def cmd_group_bias(args) -> int:
    cfg = _config(args)
    if not cfg.partition:
        raise ConfigError("group-bias needs a partition in the config")
    ds, m = load_dataset(cfg)
    _need_model(m)
    g = _binary(ds)
    groups, labels = _partition_indices(cfg, list(ds.feature_names))
    game = build_game(cfg, ds, m)
    res = group_shapley_bias(m, ds.features, g, groups, cfg.favorable_sign, game.spec.game, game.spec,
                             ds.scores if m.kind == "external_scores" else None, labels)
    os.makedirs(cfg.output_dir, exist_ok=True)
    res.to_csv(os.path.join(cfg.output_dir, "group_shapley_bias.csv"))
    print(res.to_json())
    return 0


def cmd_mitigate(args) -> int:
    cfg = _config(args)
    trace = run_mitigation(cfg)
    path = os.path.join(cfg.output_dir, "mitigation.json")
    write_json(trace, path)
    print(json.dumps({"steps": [s["feature_name"] for s in trace["steps"]], "halted": trace["halted"] is not None}))
    return 0


def cmd_curves(args) -> int:
    cfg = _config(args)
    ds, m = load_dataset(cfg)
    attr = attributions(cfg, ds, m)
    for f in emit_curves(ds.scores, _binary(ds), attr, cfg.output_dir, cfg.favorable_sign):
        print(f)
    return 0


def cmd_synth(args) -> int:
    try:
        params = json.loads(args.params) if args.params else None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"--params is not valid JSON: {exc}") from None
    seed = 0 if args.seed is None else args.seed
    try:
        data, m = generate(args.model, params, args.n, seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    path = os.path.join(out, f"{args.model}.csv")
    names = list(data.feature_names)
    with open(path, "w") as fh:
        fh.write(",".join(names + ["g", "y"]) + "\n")
        y = np.asarray(data.response, dtype=float)
        for x, g, yy in zip(data.features.tolist(), data.protected.tolist(), y.tolist()):
            fh.write(",".join(repr(v) for v in x) + f",{g},{yy!r}\n")
    write_json(m.to_dict(), os.path.join(out, f"{args.model}_model.json"))
    cfg = {"dataset": f"{args.model}.csv", "features": names, "model_spec": f"{args.model}_model.json",
           "favorable_direction": "up" if m.favorable_sign == 1 else "down", "seed": seed,
           "output_dir": f"{args.model}_audit"}
    write_json(cfg, os.path.join(out, f"{args.model}_config.json"))
    print(path)
    return 0


COMMANDS = {
    "audit": (cmd_audit, "model bias and per-predictor bias explanations"),
    "explain": (cmd_explain, "attribution matrix only"),
    "shapley-bias": (cmd_shapley_bias, "additive Shapley-bias explanations"),
    "group-bias": (cmd_group_bias, "Shapley-bias of a feature partition"),
    "mitigate": (cmd_mitigate, "greedy neutralisation of positively biased predictors"),
    "synth": (cmd_synth, "write a synthetic dataset, its model and an audit config"),
    "curves": (cmd_curves, "CDF and quantile-gap curve files"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="audit config (JSON)")
    common.add_argument("--out", help="output directory (overrides the config)")
    common.add_argument("--seed", type=int, help="seed (overrides the config)")
    common.add_argument("--verbose", action="store_true")
    p = argparse.ArgumentParser(prog="fairscope", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", metavar="command")
    sub.required = True
    for name, (fn, help_) in COMMANDS.items():
        sp = sub.add_parser(name, help=help_, parents=[common])
        sp.set_defaults(func=fn)
        if name == "synth":
            sp.add_argument("--model", required=True, choices=MODEL_IDS)
            sp.add_argument("--n", type=int, default=1000)
            sp.add_argument("--params", help="JSON object of model parameters")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except FairscopeError as exc:
        print(f"fairscope {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
