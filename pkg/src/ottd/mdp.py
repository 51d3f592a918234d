"""Finite MDPs, policies and exact Bellman quantities.

State-action pairs are flattened with the row index ``s * n_actions + a``;
every vector of length ``|S||A|`` in the package follows this convention.
"""
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, ShapeError
from .numerics import linear_solve


@dataclass(frozen=True, eq=False)
class Mdp:
    transition: np.ndarray  # (S, A, S)
    reward: np.ndarray  # (S, A)
    discount: float

    def __post_init__(self):
        P = np.array(self.transition, dtype=float)
        r = np.array(self.reward, dtype=float)
        if P.ndim != 3 or P.shape[0] != P.shape[2]:
            raise ShapeError(f"transition must have shape (S, A, S), got {P.shape}")
        if r.shape != P.shape[:2]:
            raise ShapeError(f"reward must have shape {P.shape[:2]}, got {r.shape}")
        if not (np.all(np.isfinite(P)) and np.all(np.isfinite(r))):
            raise InvalidInputError("non-finite MDP entries")
        if np.any(P < 0) or np.max(np.abs(P.sum(axis=2) - 1.0)) > 1e-12:
            raise InvalidInputError("transition rows must be probability vectors")
        if np.max(np.abs(r), initial=0.0) > 1.0:
            raise InvalidInputError("rewards must lie in [-1, 1]")
        if not 0.0 <= self.discount < 1.0:
            raise InvalidInputError("discount must lie in [0, 1)")
        P.setflags(write=False)
        r.setflags(write=False)
        object.__setattr__(self, "transition", P)
        object.__setattr__(self, "reward", r)
        object.__setattr__(self, "discount", float(self.discount))

    @property
    def n_states(self):
        return self.transition.shape[0]

    @property
    def n_actions(self):
        return self.transition.shape[1]

    @property
    def n_pairs(self):
        return self.n_states * self.n_actions

    def pair(self, s, a):
        return s * self.n_actions + a


@dataclass(frozen=True, eq=False)
class Policy:
    probs: np.ndarray  # (S, A)

    def __post_init__(self):
        p = np.array(self.probs, dtype=float)
        if p.ndim != 2:
            raise ShapeError("policy table must be (S, A)")
        if np.any(p < 0) or np.max(np.abs(p.sum(axis=1) - 1.0)) > 1e-12:
            raise InvalidInputError("policy rows must be probability vectors")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @classmethod
    def uniform(cls, n_states, n_actions):
        return cls(np.full((n_states, n_actions), 1.0 / n_actions))

    @classmethod
    def deterministic(cls, actions, n_actions):
        actions = np.asarray(actions, dtype=int)
        p = np.zeros((actions.size, n_actions))
        p[np.arange(actions.size), actions] = 1.0
        return cls(p)

    def mix(self, other, epsilon):
        """``(1 - epsilon) * self + epsilon * other``."""
        return Policy((1.0 - epsilon) * self.probs + epsilon * other.probs)

    @property
    def n_states(self):
        return self.probs.shape[0]

    @property
    def n_actions(self):
        return self.probs.shape[1]


def _check_policy(mdp, pi):
    if pi.probs.shape != (mdp.n_states, mdp.n_actions):
        raise ShapeError(f"policy shape {pi.probs.shape} does not match MDP {(mdp.n_states, mdp.n_actions)}")


def reward_vector(mdp):
    return mdp.reward.reshape(-1).copy()


def state_action_transition(mdp, pi):
    """``P_pi[(s,a), (s',a')] = P(s'|s,a) pi(a'|s')``."""
    _check_policy(mdp, pi)
    P = mdp.transition[:, :, :, None] * pi.probs[None, None, :, :]
    return P.reshape(mdp.n_pairs, mdp.n_pairs)


def bellman_apply(mdp, pi, q):
    q = np.asarray(q, dtype=float)
    if q.shape != (mdp.n_pairs,):
        raise ShapeError(f"q must have length {mdp.n_pairs}")
    return reward_vector(mdp) + mdp.discount * state_action_transition(mdp, pi) @ q


def true_q(mdp, pi):
    """Action values of ``pi``, solving ``(I - gamma P_pi) q = r``."""
    P = state_action_transition(mdp, pi)
    return linear_solve(np.eye(mdp.n_pairs) - mdp.discount * P, reward_vector(mdp))


def check_features(phi, n_pairs):
    """Validate a feature matrix with one row per state-action pair."""
    phi = np.asarray(phi, dtype=float)
    if phi.ndim != 2 or phi.shape[0] != n_pairs:
        raise ShapeError(f"features must have {n_pairs} rows, got shape {phi.shape}")
    if not np.all(np.isfinite(phi)):
        raise InvalidInputError("non-finite features")
    return phi


def is_full_rank(phi):
    return np.linalg.matrix_rank(phi) == min(phi.shape)
