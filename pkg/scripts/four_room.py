"""Four-room gridworld: target TD under three next-action corrections over ten datasets.

Usage: python scripts/four_room.py [--out results/four_room] [--horizon 10]
"""
import argparse
import os
import time

import numpy as np

from ottd import formats
from ottd.cli import build_setup, learner_config
from ottd.learners import run
from ottd.plotting import line_chart

ALGORITHMS = ("ottd", "ottd_nis", "ottd_is")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results/four_room")
    ap.add_argument("--horizon", type=int, default=10)
    ap.add_argument("--size", type=int, default=300)
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--steps", type=int, default=400_000)
    args = ap.parse_args()
    os.makedirs(args.out, exist_ok=True)

    cfg = formats.ExperimentConfig(experiment_id="four_room", problem="four_room", algorithm=",".join(ALGORITHMS),
                                   seeds=tuple(range(args.seeds)), max_iters=args.steps, record_every=100)
    cfg.dataset.size, cfg.dataset.horizon = args.size, args.horizon
    rows = []
    t0 = time.perf_counter()
    for alg in ALGORITHMS:
        finals = []
        for seed in cfg.seeds:
            setup = build_setup(cfg, alg, seed)
            result = run(alg, setup.problem, learner_config(cfg, alg), record_every=cfg.record_every)
            rows.extend(formats.rows_from_run(cfg.experiment_id, alg, seed, result))
            finals.append((result.status, result.max_value_error[-1], result.emsbe[-1]))
        statuses = sorted({s for s, _, _ in finals})
        err = np.mean([e for _, e, _ in finals])
        be = np.mean([b for _, _, b in finals])
        print(f"{alg:<9} statuses={','.join(statuses)} mean final value error {err:.4g}, mean EMSBE {be:.3g}")
    print(f"took {time.perf_counter() - t0:.1f} s")

    formats.write_results(os.path.join(args.out, "results.csv"), rows)
    curves = formats.mean_curves(rows)
    formats.write_mean_curves(os.path.join(args.out, "mean_curve.csv"), curves)
    for metric, label in (("max_value_error", "max value error"), ("emsbe", "EMSBE")):
        series = {alg: (steps, cols[metric]) for (_, alg), (steps, cols) in curves.items()}
        with open(os.path.join(args.out, f"four_room_{metric}.svg"), "w") as fh:
            fh.write(line_chart(series, f"Four room: {label} (mean of {args.seeds} seeds)", label))


if __name__ == "__main__":
    main()
