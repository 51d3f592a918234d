"""Offline datasets and the empirical quantities built from them.

A dataset is a column store of augmented transitions ``(s, a, r, s', a')``.
:func:`build_empirical` turns it into the matrices the learners consume:
the seen-pair mask ``H``, empirical frequencies ``D_k``, predecessor
features ``M = H Phi``, next features ``N = H P_hat Phi`` and rewards ``R``.
"""
import csv
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import CoverageError, InvalidInputError, SchemaError, ShapeError
from .mdp import Mdp, Policy, state_action_transition

DATASET_FIELDS = ("traj_id", "t", "s", "a", "r", "s_next", "a_next", "is_ratio", "loop_flag")
MODES = ("sample_target_action", "is", "nis")


@dataclass(frozen=True, eq=False)
class TransitionDataset:
    s: np.ndarray
    a: np.ndarray
    r: np.ndarray
    s_next: np.ndarray
    a_next: np.ndarray
    n_states: int
    n_actions: int
    is_ratio: Optional[np.ndarray] = None
    loop_flag: Optional[np.ndarray] = None
    traj_id: Optional[np.ndarray] = None
    t: Optional[np.ndarray] = None
    kind: str = "iid"

    def __post_init__(self):
        n = len(self.s)
        if n == 0:
            raise InvalidInputError("dataset is empty")
        cols = {}
        for name in ("s", "a", "s_next", "a_next"):
            cols[name] = np.asarray(getattr(self, name), dtype=np.int64)
        cols["r"] = np.asarray(self.r, dtype=float)
        cols["is_ratio"] = np.ones(n) if self.is_ratio is None else np.asarray(self.is_ratio, dtype=float)
        cols["loop_flag"] = np.zeros(n, bool) if self.loop_flag is None else np.asarray(self.loop_flag, dtype=bool)
        cols["traj_id"] = np.full(n, -1, np.int64) if self.traj_id is None else np.asarray(self.traj_id, dtype=np.int64)
        cols["t"] = np.arange(n, dtype=np.int64) if self.t is None else np.asarray(self.t, dtype=np.int64)
        for name, col in cols.items():
            if col.shape != (n,):
                raise ShapeError(f"column {name} has length {col.shape}, expected {n}")
        for name, hi in (("s", self.n_states), ("s_next", self.n_states), ("a", self.n_actions), ("a_next", self.n_actions)):
            if cols[name].min() < 0 or cols[name].max() >= hi:
                raise InvalidInputError(f"column {name} out of range")
        if not np.all(np.isfinite(cols["is_ratio"])) or np.any(cols["is_ratio"] < 0):
            raise InvalidInputError("IS ratios must be finite and nonnegative")
        lf = cols["loop_flag"]
        if np.any(cols["r"][lf] != 0.0) or np.any(cols["s_next"][lf] != cols["s"][lf]):
            raise InvalidInputError("loop transitions must have zero reward and s_next == s")
        if self.kind not in ("iid", "trajectory"):
            raise InvalidInputError(f"unknown dataset kind {self.kind!r}")
        for name, col in cols.items():
            col.setflags(write=False)
            object.__setattr__(self, name, col)

    def __len__(self):
        return len(self.s)

    @property
    def pairs(self):
        return self.s * self.n_actions + self.a

    @property
    def next_pairs(self):
        return self.s_next * self.n_actions + self.a_next

    @property
    def trajectory_bounds(self):
        """``(start, stop)`` index ranges of consecutive trajectories, or None for i.i.d. data."""
        if self.kind != "trajectory":
            return None
        cuts = np.flatnonzero(np.diff(self.traj_id)) + 1
        starts = np.concatenate([[0], cuts])
        stops = np.concatenate([cuts, [len(self)]])
        return list(zip(starts.tolist(), stops.tolist()))

    def with_ratios(self, pi, mu):
        """Copy with ``is_ratio = pi(a'|s') / mu(a'|s')``."""
        return replace(self, is_ratio=importance_ratios(self, pi, mu))

    def records(self):
        for i in range(len(self)):
            yield {
                "traj_id": int(self.traj_id[i]),
                "t": int(self.t[i]),
                "s": int(self.s[i]),
                "a": int(self.a[i]),
                "r": float(self.r[i]),
                "s_next": int(self.s_next[i]),
                "a_next": int(self.a_next[i]),
                "is_ratio": float(self.is_ratio[i]),
                "loop_flag": bool(self.loop_flag[i]),
            }


def _sample_rows(rng, probs):
    """One categorical draw per row of ``probs`` (inverse-CDF, vectorised)."""
    cdf = np.cumsum(probs, axis=-1)
    u = rng.random(probs.shape[0])
    idx = (u[:, None] >= cdf).sum(axis=1)
    return np.minimum(idx, probs.shape[1] - 1)


def _check_distribution(p, n, name):
    p = np.asarray(p, dtype=float)
    if p.shape != (n,) or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
        raise InvalidInputError(f"{name} must be a distribution over {n} items")
    return p


def collect_iid(mdp: Mdp, lam, pi: Policy, n, seed):
    """Sample ``n`` transitions with ``(s, a) ~ lam`` and next actions from ``pi``."""
    lam = _check_distribution(lam, mdp.n_pairs, "lambda")
    if n < 1:
        raise InvalidInputError("n must be positive")
    rng = np.random.default_rng(seed)
    pairs = rng.choice(mdp.n_pairs, size=n, p=lam)
    s, a = np.divmod(pairs, mdp.n_actions)
    s_next = _sample_rows(rng, mdp.transition[s, a])
    a_next = _sample_rows(rng, pi.probs[s_next])
    return TransitionDataset(s, a, mdp.reward[s, a], s_next, a_next, mdp.n_states, mdp.n_actions, kind="iid")


def collect_stratified(mdp: Mdp, next_policy: Policy, n_per_pair, seed, pairs=None):
    """Exactly ``n_per_pair`` transitions from each listed pair (default: all pairs)."""
    rng = np.random.default_rng(seed)
    pairs = np.arange(mdp.n_pairs) if pairs is None else np.asarray(pairs, dtype=int)
    pairs = np.repeat(pairs, n_per_pair)
    s, a = np.divmod(pairs, mdp.n_actions)
    s_next = _sample_rows(rng, mdp.transition[s, a])
    a_next = _sample_rows(rng, next_policy.probs[s_next])
    return TransitionDataset(s, a, mdp.reward[s, a], s_next, a_next, mdp.n_states, mdp.n_actions, kind="iid")


def collect_trajectories(mdp: Mdp, mu: Policy, start, n_traj, horizon, terminals=(), seed=0, max_transitions=None):
    """Roll out ``n_traj`` behaviour-policy trajectories and loop their final states.

    A trajectory stops after ``horizon`` steps or on entering a terminal state.
    Its final state ``s_T`` then gets a zero-reward self transition whose action
    ``a_T ~ mu(.|s_T)`` is also the next action of the last real step, so every
    bootstrapped pair is itself a trained pair. The loop transition's own next
    pair is ``(s_T, a_T)``. ``max_transitions`` caps the total number of real
    steps across trajectories (the last trajectory is truncated to fit).
    """
    start = _check_distribution(start, mdp.n_states, "start distribution")
    if horizon < 1 or n_traj < 1:
        raise InvalidInputError("horizon and n_traj must be positive")
    terminals = set(int(x) for x in terminals)
    rng = np.random.default_rng(seed)
    cols = {name: [] for name in DATASET_FIELDS}
    budget = np.inf if max_transitions is None else int(max_transitions)
    j = 0
    while j < n_traj or (max_transitions is not None and budget > 0):
        if max_transitions is not None and budget <= 0:
            break
        s = int(rng.choice(mdp.n_states, p=start))
        steps = []
        while len(steps) < horizon and budget > 0 and s not in terminals:
            a = int(rng.choice(mdp.n_actions, p=mu.probs[s]))
            s2 = int(rng.choice(mdp.n_states, p=mdp.transition[s, a]))
            steps.append((s, a, float(mdp.reward[s, a]), s2))
            budget -= 1
            s = s2
        a_T = int(rng.choice(mdp.n_actions, p=mu.probs[s]))
        acts = [st[1] for st in steps[1:]] + [a_T]
        for t, ((s0, a0, r0, s1), a1) in enumerate(zip(steps, acts)):
            for name, v in zip(DATASET_FIELDS, (j, t, s0, a0, r0, s1, a1, 1.0, False)):
                cols[name].append(v)
        for name, v in zip(DATASET_FIELDS, (j, len(steps), s, a_T, 0.0, s, a_T, 1.0, True)):
            cols[name].append(v)
        j += 1
    return TransitionDataset(
        np.array(cols["s"]), np.array(cols["a"]), np.array(cols["r"]), np.array(cols["s_next"]),
        np.array(cols["a_next"]), mdp.n_states, mdp.n_actions,
        is_ratio=np.array(cols["is_ratio"]), loop_flag=np.array(cols["loop_flag"]),
        traj_id=np.array(cols["traj_id"]), t=np.array(cols["t"]), kind="trajectory",
    )


def resample_next_actions(dataset: TransitionDataset, pi: Policy, seed):
    """Replace every next action by a fresh draw from ``pi`` (target-action sampling)."""
    rng = np.random.default_rng(seed)
    a_next = _sample_rows(rng, pi.probs[dataset.s_next])
    return replace(dataset, a_next=a_next, is_ratio=np.ones(len(dataset)))


def importance_ratios(dataset: TransitionDataset, pi: Policy, mu: Policy):
    num = pi.probs[dataset.s_next, dataset.a_next]
    den = mu.probs[dataset.s_next, dataset.a_next]
    if np.any(den <= 0):
        bad = int(np.flatnonzero(den <= 0)[0])
        raise CoverageError(
            f"behaviour policy gives zero probability to observed next action "
            f"{int(dataset.a_next[bad])} at state {int(dataset.s_next[bad])}"
        )
    return num / den


@dataclass(frozen=True, eq=False)
class EmpiricalModel:
    """Dataset summary on the ``k`` seen state-action pairs.

    ``dk`` holds the diagonal of ``D_k``; ``Phat`` is the full
    ``|S||A| x |S||A|`` empirical transition matrix (zero rows for unseen pairs).
    Synthetic models built for property tests may leave the dataset-derived
    fields (``seen``, ``H``, ``Phat``, ``phi``) unset.
    """

    M: np.ndarray
    N: np.ndarray
    R: np.ndarray
    dk: np.ndarray
    gamma: float
    seen: Optional[np.ndarray] = None
    counts: Optional[np.ndarray] = None
    Phat: Optional[np.ndarray] = None
    phi: Optional[np.ndarray] = None
    n_states: Optional[int] = None
    n_actions: Optional[int] = None
    loop_pairs: Optional[np.ndarray] = None
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def k(self):
        return self.M.shape[0]

    @property
    def d(self):
        return self.M.shape[1]

    @property
    def overparameterized(self):
        return self.d > self.k

    @property
    def Dk(self):
        return np.diag(self.dk)

    @property
    def H(self):
        H = np.zeros((self.k, self.n_states * self.n_actions))
        H[np.arange(self.k), self.seen] = 1.0
        return H

    @property
    def M_pinv(self):
        if "M_pinv" not in self._cache:
            from .numerics import pinv

            self._cache["M_pinv"] = pinv(self.M)
        return self._cache["M_pinv"]

    @property
    def W(self):
        """Projection coefficients ``N M^+`` of next features on the data row space."""
        if "W" not in self._cache:
            self._cache["W"] = self.N @ self.M_pinv
        return self._cache["W"]

    @property
    def n_min(self):
        return int(self.counts.min())

    def next_state_matrix(self):
        """Empirical ``P_hat(s'|s,a)`` on seen rows, shape ``(k, |S|)``."""
        rows = self.Phat[self.seen].reshape(self.k, self.n_states, self.n_actions)
        return rows.sum(axis=2)


@dataclass(frozen=True, eq=False)
class NisModel:
    Phat_nis: np.ndarray
    N_nis: np.ndarray
    dk_nis: np.ndarray
    R_nis: np.ndarray
    rho_max: float
    rho_min: float

    @property
    def rho_M(self):
        return np.inf if self.rho_min == 0 else self.rho_max / self.rho_min

    @property
    def Dk_nis(self):
        return np.diag(self.dk_nis)


def _seen_order(pairs):
    _, first = np.unique(pairs, return_index=True)
    return pairs[np.sort(first)]


def build_empirical(dataset: TransitionDataset, phi, gamma, pi: Policy = None, mu: Policy = None,
                    mode="sample_target_action"):
    """Construct ``(EmpiricalModel, NisModel | None)`` from a dataset.

    Modes:
      * ``sample_target_action``: next actions are taken as stored, ratios ignored.
      * ``is``: transition estimate ``sum rho 1[...] / n(s,a)``; returned model carries it.
      * ``nis``: plain model plus a :class:`NisModel` normalising by the ratio sums.

    Seen pairs are ordered by first occurrence in the dataset.
    """
    if mode not in MODES:
        raise InvalidInputError(f"unknown mode {mode!r}")
    n_pairs = dataset.n_states * dataset.n_actions
    phi = np.asarray(phi, dtype=float)
    if phi.shape[0] != n_pairs:
        raise ShapeError(f"features have {phi.shape[0]} rows, dataset has {n_pairs} pairs")
    x, y = dataset.pairs, dataset.next_pairs
    seen = _seen_order(x)
    k = seen.size
    row_of = np.full(n_pairs, -1)
    row_of[seen] = np.arange(k)
    rows = row_of[x]

    counts = np.bincount(rows, minlength=k).astype(float)
    n = float(len(dataset))
    dk = counts / n
    R = np.bincount(rows, weights=dataset.r, minlength=k) / counts

    if mode != "sample_target_action":
        if pi is None or mu is None:
            raise InvalidInputError(f"mode {mode!r} needs both pi and mu")
        rho = importance_ratios(dataset, pi, mu)
    weights = rho if mode == "is" else np.ones(len(dataset))

    Phat = np.zeros((n_pairs, n_pairs))
    np.add.at(Phat, (x, y), weights)
    Phat[seen] /= counts[:, None]

    M = phi[seen]
    N = Phat[seen] @ phi
    loop_pairs = np.unique(x[dataset.loop_flag])
    model = EmpiricalModel(
        M=M, N=N, R=R, dk=dk, gamma=float(gamma), seen=seen, counts=counts, Phat=Phat, phi=phi,
        n_states=dataset.n_states, n_actions=dataset.n_actions, loop_pairs=loop_pairs,
    )
    if mode != "nis":
        return model, None

    rho_sum = np.bincount(rows, weights=rho, minlength=k)
    Pn = np.zeros((n_pairs, n_pairs))
    np.add.at(Pn, (x, y), rho)
    nz = rho_sum > 0
    Pn[seen[nz]] /= rho_sum[nz][:, None]
    Pn[seen[~nz]] = 0.0
    total = rho_sum.sum()
    nis = NisModel(
        Phat_nis=Pn,
        N_nis=Pn[seen] @ phi,
        dk_nis=rho_sum / total if total > 0 else np.zeros(k),
        R_nis=np.divide(np.bincount(rows, weights=rho * dataset.r, minlength=k), rho_sum,
                        out=np.zeros(k), where=nz),
        rho_max=float(rho.max()),
        rho_min=float(rho.min()),
    )
    return model, nis


def nis_consistency_probe(mdp: Mdp, pi: Policy, mu: Policy, n, seed):
    """Max entrywise gap between the NIS transition estimate and ``P_pi``.

    Draws ``n`` transitions from every state-action pair with next actions from
    ``mu``; no loop transitions are involved.
    """
    data = collect_stratified(mdp, mu, n, seed)
    _, nis = build_empirical(data, np.eye(mdp.n_pairs), mdp.discount, pi, mu, mode="nis")
    return float(np.max(np.abs(nis.Phat_nis - state_action_transition(mdp, pi))))


def write_dataset_csv(dataset: TransitionDataset, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(DATASET_FIELDS + ("kind", "n_states", "n_actions"))
        for rec in dataset.records():
            w.writerow([
                rec["traj_id"], rec["t"], rec["s"], rec["a"], repr(rec["r"]), rec["s_next"], rec["a_next"],
                repr(rec["is_ratio"]), int(rec["loop_flag"]), dataset.kind, dataset.n_states, dataset.n_actions,
            ])


def read_dataset_csv(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(DATASET_FIELDS) - set(reader.fieldnames or ())
        if missing:
            raise SchemaError(f"dataset file lacks columns {sorted(missing)}")
        rows = list(reader)
    if not rows:
        raise SchemaError("dataset file has no records")
    col = lambda name, f: np.array([f(r[name]) for r in rows])
    return TransitionDataset(
        s=col("s", int), a=col("a", int), r=col("r", float), s_next=col("s_next", int), a_next=col("a_next", int),
        n_states=int(rows[0]["n_states"]), n_actions=int(rows[0]["n_actions"]),
        is_ratio=col("is_ratio", float), loop_flag=col("loop_flag", lambda v: bool(int(v))),
        traj_id=col("traj_id", int), t=col("t", int), kind=rows[0]["kind"],
    )
