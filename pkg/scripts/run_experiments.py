"""Bias and bias-explanation tables for the synthetic models.

Runs an audit of the generating model on a seeded draw of each requested
model and prints the W1 bias split plus one row per feature.  With
``--shapley-bias`` the Shapley-bias columns are added.

    python3 scripts/run_experiments.py --n 20000 M3 M6
"""
import argparse
import json
import sys

from fairscope.models import MODEL_IDS, model_for
from fairscope.pipeline import AuditConfig, run_audit


def audit(model_id, n, seed, params, shapley, cap):
    m = model_for(model_id, params)
    cfg = AuditConfig(favorable_direction="up" if m.favorable_sign == 1 else "down",
                      synthetic={"model_id": model_id, "N": n, "params": params, "seed": seed},
                      model_spec="true", shapley_bias=shapley, background_cap=cap, seed=seed)
    return run_audit(cfg, write=False)


def print_report(model_id, rep, out=sys.stdout):
    b = rep["model_bias"]
    out.write(f"\n{model_id}: bias {b['total']:.4f}  pos {b['positive']:.4f}  neg {b['negative']:.4f}"
              f"  net {b['net']:.4f}\n")
    out.write(f"  {'feature':<8}{'beta':>9}{'beta+':>9}{'beta-':>9}{'net':>9}\n")
    for r in rep["bias_explanations"]:
        out.write(f"  {r['feature']:<8}{r['beta']:9.4f}{r['beta_pos']:9.4f}{r['beta_neg']:9.4f}{r['beta_net']:9.4f}\n")
    if rep["shapley_bias"]:
        out.write(f"  {'feature':<8}{'phi':>9}{'phi+':>9}{'phi-':>9}{'net':>9}\n")
        for r in rep["shapley_bias"]:
            out.write(f"  {r['feature']:<8}{r['phi']:9.4f}{r['phi_pos']:9.4f}{r['phi_neg']:9.4f}{r['phi_net']:9.4f}\n")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("models", nargs="*", default=list(MODEL_IDS), help="model ids (default: all)")
    ap.add_argument("--n", type=int, default=20000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--params", type=json.loads, default=None, help="JSON parameter overrides")
    ap.add_argument("--background-cap", type=int, default=1000)
    ap.add_argument("--shapley-bias", action="store_true")
    ap.add_argument("--json", help="also write all reports to this file")
    args = ap.parse_args(argv)
    reports = {}
    for mid in args.models:
        reports[mid] = audit(mid, args.n, args.seed, args.params, args.shapley_bias, args.background_cap)
        print_report(mid, reports[mid])
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(reports, fh, indent=2, sort_keys=True)
    return 0


if __name__ == "__main__":
    sys.exit(main())
