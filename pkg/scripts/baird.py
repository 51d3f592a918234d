"""Baird counterexample: value-error curves of six learners and the rate table.

Usage: python scripts/baird.py [--out results/baird] [--steps 20000]
"""
import argparse
import os
import time

from ottd import diagnostics, envs, formats
from ottd.cli import BAIRD_DEFAULTS, TABLE1_HEADER, _table1_rows
from ottd.learners import LearnerConfig, Problem, expected_model, run
from ottd.mdp import true_q
from ottd.plotting import line_chart

ALGORITHMS = ("otd", "ottd", "rm", "baird_rm", "gtd2", "tdc")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results/baird")
    ap.add_argument("--steps", type=int, default=20000)
    ap.add_argument("--gamma", type=float, default=0.95)
    args = ap.parse_args()
    os.makedirs(args.out, exist_ok=True)

    b = envs.make_baird(args.gamma)
    model = expected_model(b.mdp, b.pi, b.phi, b.lam)
    problem = Problem(model, b.phi, theta0=b.theta0, q_true=true_q(b.mdp, b.pi))
    rows, series = [], {}
    t0 = time.perf_counter()
    for alg in ALGORITHMS:
        cfg = LearnerConfig(max_iters=args.steps, tol=1e-12, **BAIRD_DEFAULTS[alg])
        result = run(alg, problem, cfg)
        rows.extend(formats.rows_from_run("baird", alg, 0, result))
        series[alg] = (result.steps, result.max_value_error)
        print(f"{alg:<9} {result.status:<9} steps={result.final.step:<6} "
              f"first below 0.1: {result.first_step_below(0.1)}  final error {result.max_value_error[-1]:.3g}")
    print(f"learner runs took {time.perf_counter() - t0:.2f} s")

    formats.write_results(os.path.join(args.out, "results.csv"), rows)
    with open(os.path.join(args.out, "baird_max_value_error.svg"), "w") as fh:
        fh.write(line_chart(series, "Baird: max value error", "max value error"))

    table = _table1_rows()
    formats.write_table(os.path.join(args.out, "table1.csv"), TABLE1_HEADER, table)
    print(f"\nrate metrics at gamma={diagnostics.TABLE1_GAMMA}")
    for r in table:
        print(f"  {r['algorithm']:<10} {r['metric']:.8f}  (1 - metric = {r['one_minus_metric']:.3g})")


if __name__ == "__main__":
    main()
