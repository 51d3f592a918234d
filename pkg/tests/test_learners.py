import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from helpers import converging_config, nis_view, off_policy_data, random_instance, safe_schedule
from ottd.data import EmpiricalModel, build_empirical
from ottd.diagnostics import check_ottd
from ottd.envs import episodic_dataset_problem, make_baird
from ottd.errors import ConditionWarning, InvalidInputError, NonexistenceError
from ottd.learners import (LearnerConfig, LearnerState, Problem, SeenActionBlocks, affine_update, combined_matrices,
                           emsbe, expected_model, fixed_point_expected, fixed_point_nis, fixed_point_otq,
                           fixed_point_ottd, fixed_point_projected, gradient_td_step, otd_step, otq_contraction_bound,
                           otq_operator, otq_step, ottd_combined_step, ottd_nis_step, ottd_step, residual_step, run,
                           window_sum)
from ottd.mdp import true_q


def two_pair_model(gamma=0.5):
    # pair 0 -> pair 1, pair 1 -> pair 1, reward 1 on pair 0, tabular features
    return EmpiricalModel(M=np.eye(2), N=np.array([[0.0, 1.0], [0.0, 1.0]]), R=np.array([1.0, 0.0]),
                          dk=np.array([0.5, 0.5]), gamma=gamma)


# ---- oracles


def test_otd_step_hand_computed():
    model = two_pair_model()
    s = otd_step(LearnerState.initial(np.array([0.0, 2.0])), model, LearnerConfig(eta=1.0))
    # delta = R + 0.5 N theta - M theta = [1 + 1, 0 + 1 - 2] = [2, -1]; theta += 0.5 * delta
    assert np.allclose(s.theta, [1.0, 1.5])
    assert s.step == 1


def test_ottd_target_refreshes_every_m_steps():
    model = two_pair_model()
    cfg = LearnerConfig(eta=0.5, m=2)
    s0 = LearnerState.initial(np.array([0.0, 2.0]))
    s1 = ottd_step(s0, model, cfg)
    s2 = ottd_step(s1, model, cfg)
    s3 = ottd_step(s2, model, cfg)
    assert np.array_equal(s1.theta_targ, s0.theta)
    assert np.array_equal(s2.theta_targ, s0.theta)  # still frozen inside the window
    assert np.array_equal(s3.theta_targ, s2.theta)  # refreshed at step 2


def test_ottd_with_window_one_equals_otd():
    model = random_instance(3)
    s = LearnerState.initial(np.ones(model.d))
    a = otd_step(s, model, LearnerConfig(eta=0.1))
    b = ottd_step(s, model, LearnerConfig(eta=0.1, m=1))
    assert np.allclose(a.theta, b.theta)


def test_tabular_fixed_point_is_true_values():
    model = two_pair_model(0.5)
    assert np.allclose(fixed_point_ottd(model), [1.0, 0.0])


def test_window_sum_small_case():
    A = np.array([[0.5]])
    assert window_sum(A, 3)[0, 0] == pytest.approx(1.75)


def test_baird_expected_fixed_point_matches_full_coverage_formula():
    b = make_baird()
    model = expected_model(b.mdp, b.pi, b.phi, b.lam)
    assert np.allclose(fixed_point_ottd(model, b.theta0), fixed_point_expected(b.mdp, b.pi, b.phi, b.theta0))
    # zero rewards: the limit represents the zero value function
    assert np.abs(b.phi @ fixed_point_expected(b.mdp, b.pi, b.phi, b.theta0)).max() < 1e-12


def test_projected_fixed_point_of_tabular_model():
    assert np.allclose(fixed_point_projected(two_pair_model()), [1.0, 0.0])


def test_fixed_point_nonexistence():
    # gamma N M^+ = I makes I - gamma W singular
    model = EmpiricalModel(M=np.eye(2), N=np.eye(2) / 0.5, R=np.ones(2), dk=np.full(2, 0.5), gamma=0.5)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConditionWarning)
        with pytest.raises(NonexistenceError):
            fixed_point_ottd(model)


def test_norm_violation_warns():
    model = EmpiricalModel(M=np.eye(2), N=np.full((2, 2), 0.9), R=np.ones(2), dk=np.full(2, 0.5), gamma=0.5)
    with pytest.warns(ConditionWarning):
        fixed_point_ottd(model)


def test_gradient_td_step_hand_computed():
    model = two_pair_model()
    cfg = LearnerConfig(eta=1.0, eta2=1.0)
    s = gradient_td_step(LearnerState.initial(np.zeros(2), with_aux=True), model, cfg, "gtd2")
    # delta = [1, 0]; w = 0.5 * delta; theta += (M - gamma N)^T D M w
    w = np.array([0.5, 0.0])
    G = np.eye(2) - 0.5 * model.N
    assert np.allclose(s.aux_w, w)
    assert np.allclose(s.theta, G.T @ (model.dk * w))


def test_learner_config_validation():
    for bad in (dict(eta=-1.0), dict(m=0), dict(mix=2.0), dict(bootstrap="min"), dict(max_iters=-1)):
        with pytest.raises(InvalidInputError):
            LearnerConfig(**bad)


def test_run_with_no_iterations_has_single_row():
    model = random_instance(1)
    result = run("ottd", Problem(model, model.M), LearnerConfig(max_iters=0))
    assert result.steps.tolist() == [0] and result.status == "max_iters"


def test_run_detects_divergence():
    b = make_baird()
    model = expected_model(b.mdp, b.pi, b.phi, b.lam)
    result = run("otd", Problem(model, b.phi, theta0=b.theta0, q_true=true_q(b.mdp, b.pi)), LearnerConfig(eta=0.5))
    assert result.status == "diverged"
    assert result.max_value_error[-1] > 1e3


def test_run_unknown_algorithm():
    model = random_instance(1)
    with pytest.raises(InvalidInputError):
        run("sarsa", Problem(model, model.M), LearnerConfig())


def test_ottd_nis_needs_nis_model():
    model = random_instance(1)
    with pytest.raises(InvalidInputError):
        run("ottd_nis", Problem(model, model.M), LearnerConfig())


def test_otq_single_action_reduces_to_target_td():
    mdp, data, phi = episodic_dataset_problem(5, 1, 0.8, seed=4, n_traj=6)
    model, _ = build_empirical(data, phi, 0.8)
    blocks = SeenActionBlocks.from_model(model)
    s = LearnerState.initial(np.linspace(-1, 1, model.d))
    cfg = LearnerConfig(eta=0.3, m=2)
    # with one action max over seen actions is that action's value, and N = P_hat Phi
    for _ in range(5):
        a, b = otq_step(s, model, blocks, cfg), ottd_step(s, model, cfg)
        s = a
    assert np.allclose(a.theta, b.theta)


# ---- properties


@given(st.integers(0, 10_000), st.sampled_from([1, 2, 3, 5, 8]))
def test_combined_step_equals_m_single_steps(seed, m):
    model = random_instance(seed)
    eta, _ = safe_schedule(model)
    cfg = LearnerConfig(eta=eta, m=m)
    theta0 = np.random.default_rng(seed).standard_normal(model.d)
    s = LearnerState.initial(theta0)
    for _ in range(m):
        s = ottd_step(s, model, cfg)
    assert np.abs(s.theta - ottd_combined_step(theta0, model, cfg)).max() < 1e-10


@given(st.integers(0, 10_000))
def test_fast_path_matches_stepping(seed):
    model = random_instance(seed, k=4)
    eta, m = safe_schedule(model)
    cfg = LearnerConfig(eta=eta, m=m, max_iters=8 * m, tol=0.0)
    problem = Problem(model, model.M, theta0=np.random.default_rng(seed).standard_normal(model.d))
    slow = run("ottd", problem, cfg, record_every=1)
    fast = run("ottd", problem, cfg, record_every=4 * m)
    assert fast.final.step == slow.final.step
    assert np.abs(fast.final.theta - slow.final.theta).max() < 1e-9


@given(st.integers(0, 10_000), st.sampled_from(["otd", "rm", "baird_rm", "gtd2", "tdc"]))
def test_affine_update_matches_step(seed, algorithm):
    model = random_instance(seed, k=3)
    cfg = LearnerConfig(eta=0.05, eta2=0.03, mix=0.3)
    rng = np.random.default_rng(seed)
    theta = rng.standard_normal(model.d)
    w = rng.standard_normal(model.d) if algorithm in ("gtd2", "tdc") else None
    s = LearnerState(theta, theta.copy(), 0, w)
    if algorithm == "otd":
        nxt = otd_step(s, model, cfg)
    elif algorithm in ("rm", "baird_rm"):
        nxt = residual_step(s, model, cfg, algorithm)
    else:
        nxt = gradient_td_step(s, model, cfg, algorithm)
    A, b, steps = affine_update(algorithm, model, cfg)
    z = theta if w is None else np.concatenate([theta, w])
    expect = nxt.theta if w is None else np.concatenate([nxt.theta, nxt.aux_w])
    assert steps == 1
    assert np.allclose(A @ z + b, expect)


@given(st.integers(0, 10_000))
def test_ottd_converges_to_closed_form_with_zero_emsbe(seed):
    model = random_instance(seed)
    theta0 = np.random.default_rng(seed).standard_normal(model.d)
    result = run("ottd", Problem(model, model.M, theta0=theta0), converging_config(model), record_every=10**4)
    closed = fixed_point_ottd(model, theta0)
    assert result.status == "converged"
    assert np.abs(result.final.theta - closed).max() < 1e-6
    assert emsbe(closed, model) < 1e-10


@given(st.integers(0, 10_000))
def test_closed_form_keeps_null_space_component(seed):
    model = random_instance(seed)
    theta0 = np.random.default_rng(seed).standard_normal(model.d)
    closed = fixed_point_ottd(model, theta0)
    P_null = np.eye(model.d) - model.M_pinv @ model.M
    assert np.allclose(P_null @ closed, P_null @ theta0)


@given(st.integers(0, 10_000))
def test_nis_iteration_matches_closed_form(seed):
    mdp, pi, mu, data, phi = off_policy_data(seed % 500)
    model, nis = build_empirical(data, phi, mdp.discount, pi, mu, mode="nis")
    if not check_ottd(model, nis.N_nis).satisfied:
        return
    view = nis_view(model, nis)
    eta, m = safe_schedule(view)
    cfg = LearnerConfig(eta=eta, m=m, max_iters=10**7, tol=1e-12, divergence_threshold=1e12)
    theta0 = np.random.default_rng(seed).standard_normal(model.d)
    result = run("ottd_nis", Problem(model, phi, theta0=theta0, nis=nis), cfg, record_every=10**4)
    closed = fixed_point_nis(model, nis, theta0)
    assert np.abs(result.final.theta - closed).max() < 1e-6
    assert emsbe(closed, model, nis.N_nis) < 1e-10


@given(st.integers(0, 2_000))
def test_otq_fixed_point_is_operator_fixed_point(seed):
    mdp, data, phi = episodic_dataset_problem(5, 2, 0.8, seed, n_traj=8)
    model, _ = build_empirical(data, phi, mdp.discount)
    blocks = SeenActionBlocks.from_model(model)
    eta, _ = safe_schedule(model)
    m = next(m for m in range(1, 5000) if otq_contraction_bound(model, blocks, eta, m) < 1 or m == 4999)
    if otq_contraction_bound(model, blocks, eta, m) >= 1:
        return
    theta = fixed_point_otq(model, blocks)
    x = model.M @ theta
    T = otq_operator(model, blocks, eta, m)
    assert np.abs(T(x) - x).max() < 1e-8


@given(st.integers(0, 2_000))
def test_otq_operator_equals_m_steps(seed):
    mdp, data, phi = episodic_dataset_problem(5, 2, 0.8, seed, n_traj=5)
    model, _ = build_empirical(data, phi, mdp.discount)
    blocks = SeenActionBlocks.from_model(model)
    cfg = LearnerConfig(eta=0.2, m=3)
    theta = np.random.default_rng(seed).standard_normal(model.d)
    s = LearnerState.initial(theta)
    for _ in range(cfg.m):
        s = otq_step(s, model, blocks, cfg)
    T = otq_operator(model, blocks, cfg.eta, cfg.m)
    # the operator acts on seen-pair values of a parameter in the row space of M
    theta_row = model.M_pinv @ (model.M @ theta)
    s_row = LearnerState.initial(theta_row)
    for _ in range(cfg.m):
        s_row = otq_step(s_row, model, blocks, cfg)
    assert np.allclose(model.M @ s_row.theta, T(model.M @ theta_row), atol=1e-10)
