import numpy as np
import pytest
from hypothesis import given, strategies as st

from ottd.data import (TransitionDataset, build_empirical, collect_iid, collect_stratified, collect_trajectories,
                       importance_ratios, nis_consistency_probe, read_dataset_csv, resample_next_actions,
                       write_dataset_csv)
from ottd.envs import random_episodic_mdp, random_mdp, random_policy
from ottd.errors import CoverageError, InvalidInputError, SchemaError, ShapeError
from ottd.mdp import Mdp, Policy, state_action_transition


def tiny_dataset():
    # pairs (s, a) on 2 states x 2 actions; pair index s * 2 + a
    return TransitionDataset(s=[0, 0, 1, 0], a=[1, 1, 0, 0], r=[1.0, 0.0, 0.5, 0.0], s_next=[1, 0, 1, 1],
                             a_next=[0, 1, 0, 0], n_states=2, n_actions=2)


def test_build_empirical_hand_computed():
    model, nis = build_empirical(tiny_dataset(), np.eye(4), 0.9)
    assert nis is None
    assert model.seen.tolist() == [1, 2, 0]  # first-occurrence order
    assert model.counts.tolist() == [2, 1, 1]
    assert np.allclose(model.dk, [0.5, 0.25, 0.25])
    assert np.allclose(model.R, [0.5, 0.5, 0.0])
    # pair 1 goes to pair 2 once and to pair 1 once
    assert np.allclose(model.Phat[1], [0, 0.5, 0.5, 0])
    assert np.allclose(model.M, np.eye(4)[[1, 2, 0]])
    assert np.allclose(model.N, model.Phat[[1, 2, 0]])
    assert model.d == 4 and model.k == 3 and model.overparameterized


def test_dataset_validation():
    with pytest.raises(InvalidInputError):
        TransitionDataset(s=[], a=[], r=[], s_next=[], a_next=[], n_states=1, n_actions=1)
    with pytest.raises(InvalidInputError):
        TransitionDataset(s=[2], a=[0], r=[0.0], s_next=[0], a_next=[0], n_states=2, n_actions=1)
    with pytest.raises(ShapeError):
        TransitionDataset(s=[0, 1], a=[0], r=[0.0], s_next=[0], a_next=[0], n_states=2, n_actions=1)
    with pytest.raises(InvalidInputError):  # loop rows carry zero reward and stay put
        TransitionDataset(s=[0], a=[0], r=[1.0], s_next=[0], a_next=[0], n_states=1, n_actions=1, loop_flag=[True])


def test_columns_are_read_only():
    data = tiny_dataset()
    with pytest.raises(ValueError):
        data.s[0] = 1


def test_importance_ratios_and_coverage():
    data = tiny_dataset()
    pi = Policy(np.array([[0.5, 0.5], [1.0, 0.0]]))
    mu = Policy(np.array([[0.25, 0.75], [0.5, 0.5]]))
    assert np.allclose(importance_ratios(data, pi, mu), [2.0, 2 / 3, 2.0, 2.0])
    with pytest.raises(CoverageError):
        importance_ratios(data, pi, Policy(np.array([[1.0, 0.0], [0.0, 1.0]])))


def test_nis_model_normalises_by_ratio_sums():
    data = tiny_dataset()
    pi = Policy(np.array([[0.5, 0.5], [1.0, 0.0]]))
    mu = Policy(np.array([[0.25, 0.75], [0.5, 0.5]]))
    model, nis = build_empirical(data, np.eye(4), 0.9, pi, mu, mode="nis")
    # pair 1: ratios 2 (to pair 2) and 2/3 (to pair 1)
    assert np.allclose(nis.Phat_nis[1], [0, 0.25, 0.75, 0])
    assert nis.rho_max == 2.0 and nis.rho_min == pytest.approx(2 / 3)
    assert nis.rho_M == pytest.approx(3.0)
    assert np.allclose(nis.Phat_nis[model.seen].sum(axis=1), 1.0)


def test_is_mode_weights_by_counts():
    data = tiny_dataset()
    pi = Policy(np.array([[0.5, 0.5], [1.0, 0.0]]))
    mu = Policy(np.array([[0.25, 0.75], [0.5, 0.5]]))
    model, _ = build_empirical(data, np.eye(4), 0.9, pi, mu, mode="is")
    assert np.allclose(model.Phat[1], [0, 1 / 3, 1.0, 0])


def test_is_modes_need_both_policies():
    with pytest.raises(InvalidInputError):
        build_empirical(tiny_dataset(), np.eye(4), 0.9, mode="nis")


def test_trajectories_loop_final_state():
    mdp = random_episodic_mdp(4, 2, 0.9, seed=3)
    mu = Policy.uniform(4, 2)
    data = collect_trajectories(mdp, mu, np.array([1.0, 0, 0, 0]), n_traj=5, horizon=6, terminals=(3,), seed=1)
    for start, stop in data.trajectory_bounds:
        last = stop - 1
        assert data.loop_flag[last] and not data.loop_flag[start:last].any()
        assert data.s[last] == data.s_next[last] and data.r[last] == 0.0
        assert data.a_next[last] == data.a[last]
        if stop - start > 1:  # last real step bootstraps onto the loop pair
            assert data.s_next[last - 1] == data.s[last] and data.a_next[last - 1] == data.a[last]
        # consecutive real steps chain
        for i in range(start, last - 1):
            assert (data.s_next[i], data.a_next[i]) == (data.s[i + 1], data.a[i + 1])


def test_trajectory_budget_counts_real_steps():
    mdp = random_mdp(5, 2, 0.9, seed=4)
    data = collect_trajectories(mdp, Policy.uniform(5, 2), np.full(5, 0.2), 10**6, 7, seed=0, max_transitions=50)
    assert int((~data.loop_flag).sum()) == 50


def test_resample_next_actions_follows_target():
    mdp = random_mdp(3, 2, 0.9, seed=5)
    data = collect_iid(mdp, np.full(6, 1 / 6), Policy.uniform(3, 2), 200, seed=0)
    det = Policy.deterministic([1, 0, 1], 2)
    out = resample_next_actions(data, det, seed=1)
    assert np.array_equal(out.a_next, np.array([1, 0, 1])[out.s_next])
    assert np.array_equal(out.s, data.s)


def test_dataset_csv_round_trip(tmp_path):
    mdp = random_episodic_mdp(4, 2, 0.9, seed=3)
    data = collect_trajectories(mdp, Policy.uniform(4, 2), np.full(4, 0.25), 4, 5, terminals=(3,), seed=2)
    path = tmp_path / "d.csv"
    write_dataset_csv(data, path)
    back = read_dataset_csv(path)
    assert list(back.records()) == list(data.records())
    assert back.kind == "trajectory"


def test_dataset_csv_missing_columns(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("s,a\n0,0\n")
    with pytest.raises(SchemaError):
        read_dataset_csv(path)


def test_nis_probe_small_sample_is_loose_large_sample_tight():
    mdp = random_mdp(3, 2, 0.9, seed=8)
    pi, mu = random_policy(3, 2, 1, floor=0.3), random_policy(3, 2, 2, floor=0.3)
    assert nis_consistency_probe(mdp, pi, mu, 20_000, seed=0) < nis_consistency_probe(mdp, pi, mu, 20, seed=0)


@given(st.integers(2, 5), st.integers(1, 3), st.integers(0, 10_000))
def test_empirical_model_invariants(n, a, seed):
    mdp = random_mdp(n, a, 0.9, seed)
    lam = np.random.default_rng(seed).dirichlet(np.ones(n * a))
    data = collect_iid(mdp, lam, random_policy(n, a, seed + 1), 60, seed)
    phi = np.random.default_rng(seed + 2).standard_normal((n * a, 3))
    model, _ = build_empirical(data, phi, 0.9)
    assert model.dk.sum() == pytest.approx(1.0) and np.all(model.dk > 0)
    assert np.allclose(model.Phat[model.seen].sum(axis=1), 1.0)
    assert np.allclose(model.H @ phi, model.M)
    assert np.allclose(model.H @ model.Phat @ phi, model.N)
    assert np.allclose(model.M, phi[model.seen])
    assert model.counts.sum() == len(data)


@given(st.integers(0, 10_000))
def test_nis_rows_are_distributions_where_mass_exists(seed):
    mdp = random_mdp(3, 2, 0.9, seed)
    pi, mu = random_policy(3, 2, seed + 1), random_policy(3, 2, seed + 2, floor=0.2)
    data = collect_iid(mdp, np.full(6, 1 / 6), mu, 80, seed)
    model, nis = build_empirical(data, np.eye(6), 0.9, pi, mu, mode="nis")
    mass = nis.Phat_nis[model.seen].sum(axis=1)
    assert np.all((np.abs(mass - 1) < 1e-12) | (mass == 0))
    assert np.all(nis.Phat_nis >= 0)


def test_full_data_transition_estimate_is_consistent():
    mdp = random_mdp(3, 2, 0.9, seed=11)
    pi = random_policy(3, 2, seed=12)
    data = collect_stratified(mdp, pi, 20_000, seed=0)
    model, _ = build_empirical(data, np.eye(6), 0.9)
    assert np.abs(model.Phat - state_action_transition(mdp, pi)).max() < 0.03
