"""Two-state chain: a weighting that removes the TD fixed point, and how extra features restore it.

Usage: python scripts/two_state.py
"""
import numpy as np

from ottd import envs
from ottd.diagnostics import detect_nonexistence
from ottd.learners import LearnerConfig, Problem, expected_model, run
from ottd.mdp import state_action_transition

GAMMAS = (0.6, 0.75, 0.9, 0.95)


def main():
    cfg = LearnerConfig(eta=0.5, m=1, max_iters=5000)
    print(f"{'gamma':>6} {'sing. value':>12} {'td error':>10} {'target td error':>16} {'wide target td':>15}")
    for gamma in GAMMAS:
        lam = envs.pathological_lambda(gamma)
        errors = []
        for wide, alg in ((False, "expected_td"), (False, "expected_target_td"), (True, "expected_target_td")):
            t = envs.make_two_state(gamma, overparameterized=wide)
            model = expected_model(t.mdp, t.pi, t.phi, lam)
            problem = Problem(model, t.phi, theta0=np.ones(t.phi.shape[1]), q_true=np.zeros(2))
            errors.append(run(alg, problem, cfg).max_value_error[-1])
            if not wide and alg == "expected_td":
                report = detect_nonexistence(t.phi, state_action_transition(t.mdp, t.pi), lam, gamma)
        print(f"{gamma:>6} {report.value:>12.3g} {errors[0]:>10.4g} {errors[1]:>16.4g} {errors[2]:>15.3g}")


if __name__ == "__main__":
    main()
