"""Command-line entry point: ``ottd <command> --config FILE``.

Exit codes: 0 success, 2 invalid input or data, 3 fixed point does not exist,
4 file-system error.
"""
import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from . import bounds, diagnostics, envs, formats
from .data import (TransitionDataset, build_empirical, collect_iid, collect_trajectories, resample_next_actions,
                   write_dataset_csv)
from .errors import NonexistenceError, OttdError, PreconditionError, DegenerateModelError
from .learners import (TARGET_ALGORITHMS, LearnerConfig, Problem, expected_model, fixed_point_nis,
                       fixed_point_otq, fixed_point_ottd, fixed_point_projected, run)
from .mdp import Policy, true_q, state_action_transition

EXIT_OK, EXIT_INVALID, EXIT_NONEXISTENT, EXIT_IO = 0, 2, 3, 4

# learning rates tuned on Baird; the four-room rates depend on the correction only.
# Other problems default to eta 0.5 and m 1.
BAIRD_DEFAULTS = {
    "otd": dict(eta=0.5), "expected_td": dict(eta=0.5),
    "ottd": dict(eta=0.997, m=3), "expected_target_td": dict(eta=0.997, m=3),
    "rm": dict(eta=0.8), "baird_rm": dict(eta=0.95),
    "gtd2": dict(eta=0.6, eta2=0.6), "tdc": dict(eta=0.6, eta2=0.4),
}
FOUR_ROOM_RATES = {"none": 0.95, "target_action": 0.97, "nis": 0.97, "is": 0.02}
DEFAULT_GAMMA = 0.95


@dataclass(eq=False)
class Setup:
    """One seed's problem instance, dataset and learner inputs."""

    problem: Problem
    mdp: object
    pi: Policy
    phi: np.ndarray
    kind: str
    correction: str
    lam: Optional[np.ndarray] = None
    dataset: Optional[TransitionDataset] = None


def default_correction(cfg, algorithm):
    if cfg.correction_mode is not None:
        return cfg.correction_mode
    return {"ottd_is": "is", "ottd_nis": "nis"}.get(algorithm, "target_action")


def learner_config(cfg: formats.ExperimentConfig, algorithm):
    base = dict(eta=0.5, m=1)
    if cfg.problem == "four_room":
        base["eta"] = FOUR_ROOM_RATES[default_correction(cfg, algorithm)]
    elif cfg.problem == "baird":
        base.update(BAIRD_DEFAULTS.get(algorithm, {}))
    for key in ("eta", "eta2", "m"):
        if getattr(cfg, key) is not None:
            base[key] = getattr(cfg, key)
    return LearnerConfig(mix=cfg.mix, max_iters=cfg.max_iters, tol=cfg.tol,
                         divergence_threshold=cfg.divergence_threshold, **base)


def _dataset_model(data, phi, gamma, pi, mu, correction, seed):
    if correction == "target_action" and mu is not None and not np.array_equal(mu.probs, pi.probs):
        model, _ = build_empirical(resample_next_actions(data, pi, seed + 7919), phi, gamma)
        return model, None
    if correction in ("is", "nis"):
        return build_empirical(data, phi, gamma, pi, mu, mode=correction)
    return build_empirical(data, phi, gamma)


def build_setup(cfg: formats.ExperimentConfig, algorithm, seed):
    """Instantiate the configured problem for one seed."""
    correction = default_correction(cfg, algorithm)
    dseed = cfg.dataset.seed + seed
    theta0, lam, start, terminals, mu = None, None, None, (), None
    if cfg.problem == "baird":
        b = envs.make_baird(DEFAULT_GAMMA if cfg.gamma is None else cfg.gamma)
        mdp, pi, phi, theta0, lam = b.mdp, b.pi, b.phi, b.theta0, b.lam
        kind = cfg.dataset.kind or "expected"
    elif cfg.problem == "two_state":
        gamma = DEFAULT_GAMMA if cfg.gamma is None else cfg.gamma
        t = envs.make_two_state(gamma, cfg.overparameterized)
        mdp, pi, phi = t.mdp, t.pi, t.phi
        theta0 = np.ones(phi.shape[1])  # zero rewards: start away from the zero solution
        lam = envs.pathological_lambda(gamma) if gamma > 0.5 else np.full(2, 0.5)
        kind = cfg.dataset.kind or "expected"
    elif cfg.problem == "four_room":
        fr = envs.make_four_room(DEFAULT_GAMMA if cfg.gamma is None else cfg.gamma)
        mdp, pi, mu, start, terminals = fr.mdp, fr.target, fr.behaviour, fr.start, fr.terminals
        phi = None
        kind = cfg.dataset.kind or "trajectory"
    else:
        pf = formats.load_problem(cfg.problem_path)
        mdp, pi, phi, theta0, lam, start, terminals = pf.mdp, pf.target, pf.phi, pf.theta0, pf.lam, pf.start, pf.terminals
        mu = pf.behaviour
        if cfg.gamma is not None:
            mdp = replace(mdp, discount=cfg.gamma)
        kind = cfg.dataset.kind or ("expected" if lam is not None else "trajectory")
    if cfg.lam is not None:
        lam = np.asarray(cfg.lam, dtype=float)

    data = None
    nis = None
    if kind == "expected":
        if lam is None:
            raise formats.InvalidInputError("expected updates need a state-action weighting (lambda)")
        model = expected_model(mdp, pi, phi, lam)
    elif kind == "iid":
        if lam is None:
            lam = np.full(mdp.n_pairs, 1.0 / mdp.n_pairs)
        data = collect_iid(mdp, lam, pi, cfg.dataset.size, dseed)
        model, _ = build_empirical(data, phi, mdp.discount)
    else:
        mu = pi if mu is None else mu
        if start is None:
            start = np.full(mdp.n_states, 1.0 / mdp.n_states)
        data = collect_trajectories(mdp, mu, start, 10**9, cfg.dataset.horizon, terminals, seed=dseed,
                                    max_transitions=cfg.dataset.size)
        if phi is None:
            phi = envs.build_four_room_features(fr, data)
        model, nis = _dataset_model(data, phi, mdp.discount, pi, mu, correction, dseed)
    q = true_q(mdp, pi)
    problem = Problem(model, phi, theta0=theta0, q_true=q, nis=nis)
    return Setup(problem, mdp, pi, phi, kind, correction, lam, data)


# ---------------------------------------------------------------- commands


def _output_dir(cfg, args):
    out = args.out or cfg.output_dir
    os.makedirs(out, exist_ok=True)
    return out


def _run_one(cfg, algorithm, seed):
    setup = build_setup(cfg, algorithm, seed)
    result = run(algorithm, setup.problem, learner_config(cfg, algorithm), record_every=cfg.record_every)
    return formats.rows_from_run(cfg.experiment_id, algorithm, seed, result), result


def cmd_run(cfg, args):
    jobs = [(alg, seed) for alg in cfg.algorithms for seed in cfg.seeds]
    if args.jobs > 1:
        with ThreadPoolExecutor(args.jobs) as pool:
            outcomes = list(pool.map(lambda j: _run_one(cfg, *j), jobs))
    else:
        outcomes = [_run_one(cfg, *j) for j in jobs]
    rows = []
    for (alg, seed), (r, result) in zip(jobs, outcomes):
        rows.extend(r)
        print(f"{cfg.experiment_id} {alg} seed={seed} status={result.status} steps={result.final.step} "
              f"max_value_error={result.max_value_error[-1]:.6g} emsbe={result.emsbe[-1]:.6g}")
    out = _output_dir(cfg, args)
    formats.write_results(os.path.join(out, "results.csv"), rows)
    formats.write_mean_curves(os.path.join(out, "mean_curve.csv"), formats.mean_curves(rows))
    return EXIT_OK


def _table1_rows(gamma=None):
    rows = diagnostics.table1() if gamma is None else diagnostics.table1(gamma)
    return [{"algorithm": r["algorithm"], "metric": r["metric"], "one_minus_metric": 1.0 - r["metric"],
             "per_window_metric": r["per_window"], "steps_per_application": r["steps_per_application"],
             "converges": "yes" if r["converges"] else "no"} for r in rows]


TABLE1_HEADER = ("algorithm", "metric", "one_minus_metric", "per_window_metric", "steps_per_application", "converges")


def cmd_table1(cfg, args):
    rows = _table1_rows(cfg.gamma)
    for r in rows:
        print(f"{r['algorithm']:<10} metric={r['metric']:.10f} 1-metric={r['one_minus_metric']:.4g} "
              f"per-window={r['per_window_metric']:.10f} converges={r['converges']}")
    formats.write_table(os.path.join(_output_dir(cfg, args), "table1.csv"), TABLE1_HEADER, rows)
    return EXIT_OK


def cmd_diagnose(cfg, args):
    for algorithm in cfg.algorithms:
        setup = build_setup(cfg, algorithm, cfg.seeds[0])
        model = setup.problem.model
        lc = learner_config(cfg, algorithm)
        print(f"== {cfg.experiment_id}: {algorithm} (k={model.k}, d={model.d}, gamma={model.gamma:g})")
        if model.d <= model.k and setup.kind == "expected":
            P = state_action_transition(setup.mdp, setup.pi)
            print(diagnostics.detect_nonexistence(setup.phi, P, setup.lam, model.gamma).render())
        for report in diagnostics.check_otd(model, lc.eta):
            print(report.render())
        if setup.problem.nis is not None:
            print("normalised IS:", diagnostics.check_ottd(model, setup.problem.nis.N_nis).render())
        if algorithm == "otq":
            print(diagnostics.check_otq(model, setup.problem.blocks).render())
        try:
            print(f"window threshold m_bar = {diagnostics.m_bar(model, lc.eta)}")
        except (PreconditionError, DegenerateModelError) as exc:
            print(f"window threshold unavailable: {exc}")
        if algorithm != "otq":
            C, steps = diagnostics.iteration_matrix(algorithm, model, lc, setup.problem.nis)
            print(f"rate metric {diagnostics.convergence_metric(C, steps, transient=True):.10f} per step "
                  f"on the moving subspace, spectral radius {diagnostics.convergence_metric(C, steps):.10f} "
                  f"({steps} step(s) per application)")
    table_keys = {key for _, key, _ in diagnostics.TABLE1_ALGORITHMS}
    if cfg.problem == "baird" and table_keys <= set(cfg.algorithms):
        return cmd_table1(replace(cfg, gamma=None), args)
    return EXIT_OK


def _closed_form(algorithm, setup):
    p = setup.problem
    model = p.model
    if model.d <= model.k:
        return fixed_point_projected(model)
    if algorithm == "otq":
        return fixed_point_otq(model, p.blocks, p.theta0)
    if algorithm == "ottd_nis":
        return fixed_point_nis(model, p.nis, p.theta0)
    return fixed_point_ottd(model, p.theta0)


def cmd_fixed_point(cfg, args):
    for algorithm in cfg.algorithms:
        setup = build_setup(cfg, algorithm, cfg.seeds[0])
        theta = _closed_form(algorithm, setup)
        err = float(np.max(np.abs(setup.phi @ theta - setup.problem.q_true)))
        lc = learner_config(cfg, algorithm)
        result = run(algorithm, setup.problem, lc, record_every=max(cfg.record_every, 100 * lc.m))
        gap = float(np.max(np.abs(result.final.theta - theta)))
        np.set_printoptions(precision=8, suppress=False, linewidth=120)
        print(f"== {cfg.experiment_id}: {algorithm}")
        print("theta* =", theta)
        print(f"max value error of closed form: {err:.6g}")
        print(f"iterative run: status={result.status} steps={result.final.step} "
              f"discrepancy to closed form={gap:.3g}")
    return EXIT_OK


def cmd_bound(cfg, args):
    rows = []
    for algorithm in cfg.algorithms:
        for seed in cfg.seeds:
            setup = build_setup(cfg, algorithm, seed)
            p = setup.problem
            if setup.kind == "expected":
                bound, actual = bounds.bound_expected(setup.phi, p.q_true, p.model.gamma)
                print(f"expected-update bound {bound:.6g}, actual error {actual:.6g}")
                rows.append({"experiment_id": cfg.experiment_id, "algorithm": algorithm, "seed": seed,
                             "eps_stat": 0.0, "eps_projection": 0.0, "eps_approx": bound, "total": bound,
                             "delta": cfg.delta, "norm_kind": "infinity", "actual_error": actual})
                continue
            if setup.correction == "nis" and p.nis is not None:
                report = bounds.bound_nis_episodic(p.model, p.nis, setup.phi, p.q_true, cfg.delta)
            else:
                report = bounds.bound_ottd(p.model, setup.phi, p.q_true, cfg.delta)
            print(f"== {cfg.experiment_id}: {algorithm} seed={seed}\n{report.render()}")
            rows.append({"experiment_id": cfg.experiment_id, "algorithm": algorithm, "seed": seed, **report.as_row()})
    header = ("experiment_id", "algorithm", "seed", "eps_stat", "eps_projection", "eps_approx", "total", "delta",
              "norm_kind", "actual_error")
    formats.write_table(os.path.join(_output_dir(cfg, args), "bounds.csv"), header, rows)
    return EXIT_OK


def cmd_collect(cfg, args):
    out = _output_dir(cfg, args)
    for seed in cfg.seeds:
        setup = build_setup(cfg, cfg.algorithms[0], seed)
        if setup.dataset is None:
            raise formats.InvalidInputError("expected-update problems have no dataset to collect")
        path = os.path.join(out, f"dataset_{cfg.experiment_id}_seed{seed}.csv")
        write_dataset_csv(setup.dataset, path)
        print(f"wrote {len(setup.dataset)} transitions to {path}")
    return EXIT_OK


def cmd_plot(results_path, out_dir):
    from .plotting import line_chart

    rows = formats.read_results(results_path)
    curves = formats.mean_curves(rows)
    os.makedirs(out_dir, exist_ok=True)
    experiments = sorted({exp for exp, _ in curves})
    labels = {"max_value_error": "max value error", "emsbe": "EMSBE"}
    for exp in experiments:
        for metric, ylabel in labels.items():
            series = {alg: (steps, cols[metric]) for (e, alg), (steps, cols) in curves.items() if e == exp}
            path = os.path.join(out_dir, f"{exp}_{metric}.svg")
            with open(path, "w") as fh:
                fh.write(line_chart(series, f"{exp}: {ylabel}", ylabel))
            print(f"wrote {path}")
    return EXIT_OK


COMMANDS = {
    "run": cmd_run, "diagnose": cmd_diagnose, "fixed-point": cmd_fixed_point, "bound": cmd_bound,
    "collect": cmd_collect, "table1": cmd_table1,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="ottd", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=name != "table1", help="experiment INI file")
        p.add_argument("--seed-override", type=int, help="run a single seed instead of the configured ones")
        p.add_argument("--out", help="output directory (defaults to the config's output_dir)")
        p.add_argument("--jobs", type=int, default=1, help="seeds to run concurrently")
    p = sub.add_parser("plot")
    p.add_argument("results", help="results.csv written by 'run'")
    p.add_argument("--out", default="plots", help="directory for the SVG files")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "plot":
            return cmd_plot(args.results, args.out)
        cfg = formats.load_config(args.config) if args.config else formats.ExperimentConfig(problem="baird")
        if args.seed_override is not None:
            cfg.seeds = (args.seed_override,)
        return COMMANDS[args.command](cfg, args)
    except NonexistenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONEXISTENT
    except (OttdError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
