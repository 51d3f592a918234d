"""Benchmark problems and random instance generators."""
from dataclasses import dataclass
from importlib import resources
from typing import Optional

import numpy as np

from .data import EmpiricalModel, TransitionDataset
from .errors import DegenerateModelError, InvalidInputError
from .mdp import Mdp, Policy
from .numerics import pinv

# ---------------------------------------------------------------- Baird


@dataclass(frozen=True, eq=False)
class BairdProblem:
    mdp: Mdp
    pi: Policy
    phi: np.ndarray
    theta0: np.ndarray
    lam: np.ndarray

    @property
    def gamma(self):
        return self.mdp.discount


def baird_features():
    """Seven states, eight weights: six upper states share the last weight, the bottom state the seventh."""
    phi = np.zeros((7, 8))
    for i in range(6):
        phi[i, i] = 2.0
        phi[i, 7] = 1.0
    phi[6, 6] = 1.0
    phi[6, 7] = 2.0
    return phi


def make_baird(gamma=0.95):
    n = 7
    P = np.zeros((n, 1, n))
    P[:, 0, n - 1] = 1.0
    mdp = Mdp(P, np.zeros((n, 1)), gamma)
    theta0 = np.ones(8)
    theta0[7] = 10.0
    return BairdProblem(mdp, Policy.uniform(n, 1), baird_features(), theta0, np.full(n, 1.0 / n))


# ---------------------------------------------------------------- two-state


@dataclass(frozen=True, eq=False)
class TwoStateProblem:
    mdp: Mdp
    pi: Policy
    phi: np.ndarray

    @property
    def gamma(self):
        return self.mdp.discount


TWO_STATE_FEATURES = np.array([[1.0], [2.0]])
TWO_STATE_WIDE_FEATURES = np.array([[1.0, 1.0, 0.0], [2.0, 0.0, 1.0]])


def make_two_state(gamma, overparameterized=False):
    """Left state moves right; right state loops. One action, zero reward."""
    P = np.zeros((2, 1, 2))
    P[0, 0, 1] = 1.0
    P[1, 0, 1] = 1.0
    phi = TWO_STATE_WIDE_FEATURES if overparameterized else TWO_STATE_FEATURES
    return TwoStateProblem(Mdp(P, np.zeros((2, 1)), gamma), Policy.uniform(2, 1), phi.copy())


def pathological_lambda(gamma):
    """State weighting under which the projected Bellman system of the 1-d features is singular."""
    if not 0.5 < gamma < 1.0:
        raise InvalidInputError("the singular weighting exists only for 0.5 < gamma < 1")
    den = 2.0 * gamma - 3.0
    return np.array([(4.0 * gamma - 4.0) / den, (1.0 - 2.0 * gamma) / den])


# ---------------------------------------------------------------- four rooms

ACTIONS = ((-1, 0), (1, 0), (0, -1), (0, 1))  # up, down, left, right
ACTION_CODES = "UDLR"


def _read_grid(name):
    text = resources.files("ottd").joinpath("assets", name).read_text()
    return [line for line in text.splitlines() if line and not line.startswith(";")]


@dataclass(frozen=True, eq=False)
class FourRoomProblem:
    mdp: Mdp
    cells: tuple  # (row, col) of each state, row-major over free cells
    goal: int
    human: Policy
    behaviour: Policy
    target: Policy
    epsilon: float
    width: int
    height: int

    @property
    def start(self):
        p = np.ones(self.mdp.n_states)
        p[self.goal] = 0.0
        return p / p.sum()

    @property
    def terminals(self):
        return (self.goal,)


def make_four_room(gamma=0.95, epsilon=0.08):
    grid = _read_grid("four_room.txt")
    height, width = len(grid), len(grid[0])
    cells = [(r, c) for r in range(height) for c in range(width) if grid[r][c] != "#"]
    index = {cell: i for i, cell in enumerate(cells)}
    goal = next(i for i, (r, c) in enumerate(cells) if grid[r][c] == "G")
    n = len(cells)
    P = np.zeros((n, 4, n))
    rew = np.zeros((n, 4))
    for i, (r, c) in enumerate(cells):
        for a, (dr, dc) in enumerate(ACTIONS):
            if i == goal:
                P[i, a, i] = 1.0
                continue
            j = index.get((r + dr, c + dc), i)
            P[i, a, j] = 1.0
            rew[i, a] = 1.0 if j == goal else 0.0
    mdp = Mdp(P, rew, gamma)

    plan = _read_grid("four_room_policy.txt")
    acts = []
    for r, c in cells:
        code = plan[r][c]
        acts.append(0 if code == "G" else ACTION_CODES.index(code))
    human = Policy.deterministic(acts, 4)
    uniform = Policy.uniform(n, 4)
    return FourRoomProblem(mdp, tuple(cells), goal, human, uniform, human.mix(uniform, epsilon),
                           epsilon, width, height)


def four_room_base_features(problem: FourRoomProblem):
    """One-hot column, one-hot row and one-hot action per state-action pair."""
    n, nA = problem.mdp.n_states, problem.mdp.n_actions
    phi = np.zeros((n * nA, problem.width + problem.height + nA))
    for i, (r, c) in enumerate(problem.cells):
        for a in range(nA):
            row = i * nA + a
            phi[row, c] = 1.0
            phi[row, problem.width + r] = 1.0
            phi[row, problem.width + problem.height + a] = 1.0
    return phi


def append_indicator_block(base, seen):
    """``[base, H^T]``: one extra coordinate per seen pair, in order of first appearance."""
    base = np.asarray(base, dtype=float)
    seen = np.asarray(seen, dtype=int)
    block = np.zeros((base.shape[0], seen.size))
    block[seen, np.arange(seen.size)] = 1.0
    phi = np.hstack([base, block])
    if seen.size and np.linalg.matrix_rank(phi[seen]) < seen.size:
        raise DegenerateModelError("seen rows of the augmented features are not independent")
    return phi


def seen_pairs(dataset: TransitionDataset):
    pairs = dataset.pairs
    _, first = np.unique(pairs, return_index=True)
    return pairs[np.sort(first)]


def build_four_room_features(problem: FourRoomProblem, dataset: Optional[TransitionDataset] = None):
    base = four_room_base_features(problem)
    if dataset is None:
        return base
    return append_indicator_block(base, seen_pairs(dataset))


# ---------------------------------------------------------------- random generators


def random_mdp(n_states, n_actions, gamma, seed, concentration=1.0, reward_scale=1.0):
    rng = np.random.default_rng(seed)
    P = rng.dirichlet(np.full(n_states, concentration), size=(n_states, n_actions))
    r = rng.uniform(-reward_scale, reward_scale, size=(n_states, n_actions))
    return Mdp(P, r, gamma)


def random_episodic_mdp(n_states, n_actions, gamma, seed, p_end=0.2):
    """Last state is an absorbing zero-reward terminal; the others reach it with probability ``p_end``."""
    rng = np.random.default_rng(seed)
    P = np.zeros((n_states, n_actions, n_states))
    body = rng.dirichlet(np.ones(n_states - 1), size=(n_states - 1, n_actions))
    P[:-1, :, :-1] = (1.0 - p_end) * body
    P[:-1, :, -1] = p_end
    P[-1, :, -1] = 1.0
    r = rng.uniform(-1.0, 1.0, size=(n_states, n_actions))
    r[-1] = 0.0
    return Mdp(P, r, gamma)


def random_policy(n_states, n_actions, seed, floor=0.0):
    rng = np.random.default_rng(seed)
    p = rng.dirichlet(np.ones(n_actions), size=n_states)
    p = floor / n_actions + (1.0 - floor) * p
    return Policy(p / p.sum(axis=1, keepdims=True))


def make_random_instance(k, d, gamma, seed, ensure_condition=True):
    """Synthetic model with ``k`` seen pairs and ``d`` features.

    With ``ensure_condition`` the rows of ``N`` are scaled down until
    ``||N M^+||_inf <= 1``.
    """
    if k < 1 or d < 1:
        raise InvalidInputError("k and d must be positive")
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((k, d))
    N = rng.standard_normal((k, d))
    if ensure_condition:
        # scaling a row of N scales the same row of N M^+
        rows = np.abs(N @ pinv(M)).sum(axis=1)
        N = N / np.maximum(rows, 1.0)[:, None]
    dk = rng.dirichlet(np.full(k, 5.0))
    R = rng.uniform(-1.0, 1.0, size=k)
    return EmpiricalModel(M=M, N=N, R=R, dk=dk, gamma=float(gamma), counts=np.round(dk * 1000) + 1)


def episodic_dataset_problem(n_states, n_actions, gamma, seed, n_traj=20, base_dim=3, horizon=200):
    """Random episodic MDP, uniform behaviour, trajectories to termination, indicator-augmented features.

    Returns ``(mdp, dataset, phi)`` with ``phi`` over-parameterized on the data.
    """
    from .data import collect_trajectories

    mdp = random_episodic_mdp(n_states, n_actions, gamma, seed)
    mu = Policy.uniform(n_states, n_actions)
    start = np.zeros(n_states)
    start[:-1] = 1.0 / (n_states - 1)
    data = collect_trajectories(mdp, mu, start, n_traj, horizon, terminals=(n_states - 1,), seed=seed + 1)
    rng = np.random.default_rng(seed + 2)
    base = rng.standard_normal((mdp.n_pairs, base_dim))
    phi = append_indicator_block(base, seen_pairs(data))
    return mdp, data, phi

