"""Shared instance builders for the test suite."""
from dataclasses import replace

import numpy as np

from ottd.data import build_empirical, collect_iid
from ottd.diagnostics import m_bar
from ottd.envs import append_indicator_block, make_random_instance, random_mdp, random_policy
from ottd.learners import LearnerConfig
from ottd.numerics import spectral_radius


def safe_schedule(model, fraction=0.9):
    """Step size below ``1 / rho(M M^T D_k)`` and the window the theory asks for."""
    eta = fraction / spectral_radius(model.M @ model.M.T * model.dk[None, :])
    return eta, m_bar(model, eta)


def nis_view(model, nis):
    """The model the NIS update effectively trains on."""
    return replace(model, N=nis.N_nis, dk=nis.dk_nis, _cache={})


def converging_config(model, max_iters=10**7, tol=1e-12):
    eta, m = safe_schedule(model)
    return LearnerConfig(eta=eta, m=m, max_iters=max_iters, tol=tol, divergence_threshold=1e12)


def random_instance(seed, k=None):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(2, 9)) if k is None else k
    return make_random_instance(k, 2 * k + 1, float(rng.uniform(0.5, 0.95)), seed)


def off_policy_data(seed, n_states=4, n_actions=2, n=120, base_dim=3, gamma=0.9):
    """i.i.d. behaviour data on a random MDP with indicator-augmented features."""
    mdp = random_mdp(n_states, n_actions, gamma, seed)
    pi = random_policy(n_states, n_actions, seed + 1)
    mu = random_policy(n_states, n_actions, seed + 2, floor=0.3)
    lam = np.random.default_rng(seed).dirichlet(np.ones(mdp.n_pairs))
    data = collect_iid(mdp, lam, mu, n, seed)
    base = np.random.default_rng(seed + 3).standard_normal((mdp.n_pairs, base_dim))
    seen = build_empirical(data, np.eye(mdp.n_pairs), gamma)[0].seen
    phi = append_indicator_block(base, seen)
    return mdp, pi, mu, data, phi
