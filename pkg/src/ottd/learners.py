"""Batch update rules over an empirical model and their closed-form limits.

Every learner here consumes the full dataset at each step through the
matrices of an :class:`~ottd.data.EmpiricalModel`; there is no minibatching.
Step functions are pure: they take a :class:`LearnerState` and return a new one.
"""
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .data import EmpiricalModel, NisModel
from .errors import ConditionWarning, InvalidInputError, NonexistenceError, ShapeError, SingularSystemError
from .numerics import inf_norm, linear_solve, pinv


@dataclass(frozen=True)
class LearnerConfig:
    eta: float = 0.5
    m: int = 1
    eta2: Optional[float] = None
    mix: float = 0.5
    max_iters: int = 10_000
    tol: float = 1e-10
    divergence_threshold: float = 1e8
    bootstrap: str = "max"  # OTQ next-state value: "max" over seen actions or "maxabs"

    def __post_init__(self):
        if not self.eta >= 0:
            raise InvalidInputError("eta must be nonnegative")
        if int(self.m) != self.m or self.m < 1:
            raise InvalidInputError("m must be a positive integer")
        if self.eta2 is not None and self.eta2 < 0:
            raise InvalidInputError("eta2 must be nonnegative")
        if not 0.0 <= self.mix <= 1.0:
            raise InvalidInputError("mix must lie in [0, 1]")
        if self.max_iters < 0 or self.tol < 0 or self.divergence_threshold <= 0:
            raise InvalidInputError("max_iters, tol and divergence_threshold must be nonnegative")
        if self.bootstrap not in ("max", "maxabs"):
            raise InvalidInputError("bootstrap must be 'max' or 'maxabs'")


@dataclass(frozen=True, eq=False)
class LearnerState:
    theta: np.ndarray
    theta_targ: np.ndarray
    step: int = 0
    aux_w: Optional[np.ndarray] = None

    @classmethod
    def initial(cls, theta0, with_aux=False):
        theta0 = np.array(theta0, dtype=float)
        return cls(theta0, theta0.copy(), 0, np.zeros_like(theta0) if with_aux else None)


@dataclass(frozen=True, eq=False)
class RunResult:
    final: LearnerState
    status: str  # converged | max_iters | diverged
    steps: np.ndarray
    max_value_error: np.ndarray
    emsbe: np.ndarray

    @property
    def trace(self):
        return list(zip(self.steps.tolist(), self.max_value_error.tolist(), self.emsbe.tolist()))

    def first_step_below(self, threshold):
        """First recorded step whose value error is below ``threshold`` (None if never)."""
        hit = np.flatnonzero(self.max_value_error < threshold)
        return int(self.steps[hit[0]]) if hit.size else None


def _residual(theta_boot, theta, M, N, R, gamma):
    return R + gamma * (N @ theta_boot) - M @ theta


def emsbe(theta, model: EmpiricalModel, N=None):
    """Half the ``D_k``-weighted squared Bellman residual on the data."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (model.d,):
        raise ShapeError(f"theta must have length {model.d}")
    N = model.N if N is None else N
    delta = _residual(theta, theta, model.M, N, model.R, model.gamma)
    return 0.5 * float(np.sum(model.dk * delta**2))


def _semi_gradient_step(state, M, N, R, dk, gamma, eta, m, use_target):
    targ = state.theta_targ
    if use_target and state.step % m == 0:
        targ = state.theta
    boot = targ if use_target else state.theta
    delta = _residual(boot, state.theta, M, N, R, gamma)
    theta = state.theta + eta * (M.T @ (dk * delta))
    return replace(state, theta=theta, theta_targ=targ if use_target else theta, step=state.step + 1)


def otd_step(state, model: EmpiricalModel, cfg: LearnerConfig):
    return _semi_gradient_step(state, model.M, model.N, model.R, model.dk, model.gamma, cfg.eta, 1, False)


def ottd_step(state, model: EmpiricalModel, cfg: LearnerConfig):
    """One student update against the frozen target; the target is refreshed first when ``step % m == 0``."""
    return _semi_gradient_step(state, model.M, model.N, model.R, model.dk, model.gamma, cfg.eta, cfg.m, True)


def ottd_nis_step(state, model: EmpiricalModel, nis: NisModel, cfg: LearnerConfig):
    return _semi_gradient_step(state, model.M, nis.N_nis, model.R, nis.dk_nis, model.gamma, cfg.eta, cfg.m, True)


def window_sum(A, m):
    """``sum_{i<m} A^i``."""
    S = np.eye(A.shape[0])
    P = np.eye(A.shape[0])
    for _ in range(m - 1):
        P = P @ A
        S = S + P
    return S


def combined_matrices(model: EmpiricalModel, eta, m, N=None, dk=None):
    """Affine map ``theta -> C theta + c`` of one full target window."""
    N = model.N if N is None else N
    dk = model.dk if dk is None else dk
    M = model.M
    inner = np.eye(model.k) - eta * dk[:, None] * (M @ M.T)
    BD = window_sum(inner, m) * dk[None, :]
    C = np.eye(model.d) - eta * M.T @ BD @ (M - model.gamma * N)
    c = eta * M.T @ BD @ model.R
    return C, c


def ottd_combined_step(theta_nm, model: EmpiricalModel, cfg: LearnerConfig):
    C, c = combined_matrices(model, cfg.eta, cfg.m)
    return C @ np.asarray(theta_nm, dtype=float) + c


def expected_model(mdp, pi, phi, lam):
    """Model whose data is the whole state-action space weighted by ``lam``."""
    from .mdp import check_features, reward_vector, state_action_transition

    phi = check_features(phi, mdp.n_pairs)
    lam = np.asarray(lam, dtype=float)
    if lam.shape != (mdp.n_pairs,) or np.any(lam < 0) or abs(lam.sum() - 1) > 1e-9:
        raise InvalidInputError("lambda must be a distribution over state-action pairs")
    P = state_action_transition(mdp, pi)
    return EmpiricalModel(M=phi, N=P @ phi, R=reward_vector(mdp), dk=lam, gamma=mdp.discount, phi=phi,
                          Phat=P, seen=np.arange(mdp.n_pairs), n_states=mdp.n_states, n_actions=mdp.n_actions)


def expected_step(state, mdp, pi, phi, lam, cfg: LearnerConfig, variant="td"):
    model = expected_model(mdp, pi, phi, lam)
    if variant == "td":
        return otd_step(state, model, cfg)
    if variant == "target_td":
        return ottd_step(state, model, cfg)
    raise InvalidInputError(f"unknown expected-update variant {variant!r}")


def residual_step(state, model: EmpiricalModel, cfg: LearnerConfig, variant="rm"):
    """Residual-gradient descent on the EMSBE, optionally blended with the TD direction."""
    G = model.M - model.gamma * model.N
    delta = _residual(state.theta, state.theta, model.M, model.N, model.R, model.gamma)
    wdelta = model.dk * delta
    if variant == "rm":
        direction = G.T @ wdelta
    elif variant == "baird_rm":
        direction = (1.0 - cfg.mix) * (model.M.T @ wdelta) + cfg.mix * (G.T @ wdelta)
    else:
        raise InvalidInputError(f"unknown residual variant {variant!r}")
    theta = state.theta + cfg.eta * direction
    return replace(state, theta=theta, theta_targ=theta, step=state.step + 1)


def gradient_td_step(state, model: EmpiricalModel, cfg: LearnerConfig, variant="gtd2"):
    """Two-timescale gradient TD over the whole dataset.

    The auxiliary weights ``w`` track the projection of the TD error onto the
    features and are updated first; ``theta`` then moves using the fresh ``w``.
    """
    eta2 = cfg.eta if cfg.eta2 is None else cfg.eta2
    M, N, dk, gamma = model.M, model.N, model.dk, model.gamma
    w = np.zeros(model.d) if state.aux_w is None else state.aux_w
    delta = _residual(state.theta, state.theta, M, N, model.R, gamma)
    w = w + eta2 * (M.T @ (dk * (delta - M @ w)))
    Mw = dk * (M @ w)
    if variant == "gtd2":
        theta = state.theta + cfg.eta * ((M - gamma * N).T @ Mw)
    elif variant == "tdc":
        theta = state.theta + cfg.eta * (M.T @ (dk * delta) - gamma * (N.T @ Mw))
    else:
        raise InvalidInputError(f"unknown gradient-TD variant {variant!r}")
    return replace(state, theta=theta, theta_targ=theta, step=state.step + 1, aux_w=w)


# --- Q-learning over seen actions -------------------------------------------------


@dataclass(frozen=True, eq=False)
class SeenActionBlocks:
    """Per-state features restricted to actions observed in the data.

    ``actions[s]`` lists the seen actions at ``s`` and ``blocks[s]`` stacks their
    feature rows; a state without data gets a single zero row.
    """

    actions: list
    blocks: list

    @classmethod
    def from_model(cls, model: EmpiricalModel):
        if model.phi is None:
            raise InvalidInputError("model carries no feature matrix")
        d = model.phi.shape[1]
        acts = [[] for _ in range(model.n_states)]
        for p in model.seen:
            s, a = divmod(int(p), model.n_actions)
            acts[s].append(a)
        actions, blocks = [], []
        for s, a in enumerate(acts):
            a = sorted(a)
            actions.append(np.array(a, dtype=int))
            blocks.append(model.phi[[s * model.n_actions + x for x in a]] if a else np.zeros((1, d)))
        return cls(actions, blocks)

    def state_values(self, theta, bootstrap="max"):
        vals = np.empty(len(self.blocks))
        for i, B in enumerate(self.blocks):
            q = B @ theta
            vals[i] = np.max(q) if bootstrap == "max" else np.max(np.abs(q))
        return vals

    def projected_values(self, x, M_pinv, bootstrap="max"):
        """State values when the seen-pair values are ``x`` (``theta = M^+ x``)."""
        return self.state_values(M_pinv @ x, bootstrap)


def otq_step(state, model: EmpiricalModel, blocks: SeenActionBlocks, cfg: LearnerConfig):
    targ = state.theta if state.step % cfg.m == 0 else state.theta_targ
    v = blocks.state_values(targ, cfg.bootstrap)
    y = model.R + model.gamma * (model.next_state_matrix() @ v)
    theta = state.theta - cfg.eta * (model.M.T @ (model.dk * (model.M @ state.theta - y)))
    return replace(state, theta=theta, theta_targ=targ, step=state.step + 1)


def otq_operator(model: EmpiricalModel, blocks: SeenActionBlocks, eta, m, bootstrap="max"):
    """The ``m``-step OTQ map on seen-pair values ``x = M theta``."""
    A = np.eye(model.k) - eta * (model.M @ model.M.T) * model.dk[None, :]  # seen-pair values move by this
    Am = np.linalg.matrix_power(A, m)
    G = np.eye(model.k) - Am
    Ps = model.next_state_matrix()
    Mp = model.M_pinv

    def T(x):
        v = blocks.projected_values(x, Mp, bootstrap)
        return Am @ x + G @ (model.R + model.gamma * (Ps @ v))

    return T


def otq_contraction_bound(model: EmpiricalModel, blocks: SeenActionBlocks, eta, m):
    """Lipschitz constant (infinity norm) guaranteed for :func:`otq_operator`."""
    A = np.eye(model.k) - eta * (model.M @ model.M.T) * model.dk[None, :]
    Am = np.linalg.matrix_power(A, m)
    proj = max(inf_norm(B @ model.M_pinv) for B in blocks.blocks)
    return inf_norm(Am) + model.gamma * inf_norm(np.eye(model.k) - Am) * proj


# --- closed-form limits ------------------------------------------------------------


def _solve_or_nonexistent(A, b, what):
    try:
        return linear_solve(A, b)
    except SingularSystemError as exc:
        raise NonexistenceError(f"{what}: {exc}") from exc


def _check_norm(W, what):
    norm_inf = inf_norm(W)
    norm_2 = float(np.linalg.norm(W, 2))
    if min(norm_inf, norm_2) > 1.0 + 1e-10:
        warnings.warn(
            f"{what}: projected next-feature matrix has norms {norm_inf:.4g} (inf) and {norm_2:.4g} (2) above one",
            ConditionWarning, stacklevel=4,
        )
        return False
    return True


def _target_limit(model: EmpiricalModel, N, theta0, what):
    """``M^+ (I - gamma W)^{-1} (R + gamma N perp) + perp`` with ``perp`` the null-space part of ``theta0``."""
    theta0 = np.zeros(model.d) if theta0 is None else np.asarray(theta0, dtype=float)
    Mp = model.M_pinv
    W = N @ Mp
    _check_norm(W, what)
    perp = theta0 - Mp @ (model.M @ theta0)
    q = _solve_or_nonexistent(np.eye(model.k) - model.gamma * W, model.R + model.gamma * (N @ perp),
                              f"{what} fixed point")
    return Mp @ q + perp


def fixed_point_ottd(model: EmpiricalModel, theta0=None):
    """Limit of target TD from ``theta0`` (zero by default)."""
    return _target_limit(model, model.N, theta0, "target TD")


def fixed_point_projected(model: EmpiricalModel):
    """Classical TD solution ``(M^T D_k (M - gamma N))^{-1} M^T D_k R`` for ``d <= k``."""
    MD = model.M.T * model.dk[None, :]
    return _solve_or_nonexistent(MD @ (model.M - model.gamma * model.N), MD @ model.R, "projected TD fixed point")


def fixed_point_nis(model: EmpiricalModel, nis: NisModel, theta0=None):
    """Limit of normalised-IS target TD; the NIS next features replace ``N``."""
    return _target_limit(model, nis.N_nis, theta0, "normalised IS target TD")


def fixed_point_expected(mdp, pi, phi, theta0=None):
    """Target TD limit with full coverage: ``Phi^+ q_pi + (I - Phi^+ Phi) theta0``."""
    from .mdp import true_q

    phi = np.asarray(phi, dtype=float)
    theta0 = np.zeros(phi.shape[1]) if theta0 is None else np.asarray(theta0, dtype=float)
    Pp = pinv(phi)
    return Pp @ true_q(mdp, pi) + theta0 - Pp @ (phi @ theta0)


def fixed_point_otq(model: EmpiricalModel, blocks: SeenActionBlocks, theta0=None, bootstrap="max",
                    tol=1e-12, max_iters=1_000_000):
    """Q-learning limit ``M^+ q + (I - M^+ M) theta0`` with ``q`` the data-optimal values."""
    theta0 = np.zeros(model.d) if theta0 is None else np.asarray(theta0, dtype=float)
    Mp = model.M_pinv
    proj = max(inf_norm(B @ Mp) for B in blocks.blocks)
    if model.gamma * proj >= 1.0:
        warnings.warn(f"Q-learning projection norm {proj:.4g} is not below 1/gamma", ConditionWarning, stacklevel=2)
    Ps = model.next_state_matrix()
    q = model.R.copy()
    prev_gap = np.inf
    for i in range(max_iters):
        nxt = model.R + model.gamma * (Ps @ blocks.projected_values(q, Mp, bootstrap))
        gap = float(np.max(np.abs(nxt - q)))
        q = nxt
        if gap <= tol * max(1.0, float(np.max(np.abs(q)))):
            break
        if not np.isfinite(gap) or (i > 100 and gap > prev_gap * 1.5):
            raise NonexistenceError("Q-value iteration is not contracting")
        prev_gap = gap
    else:
        raise NonexistenceError("Q-value iteration did not settle")
    return Mp @ q + theta0 - Mp @ (model.M @ theta0)


# --- driver ------------------------------------------------------------------------


@dataclass(eq=False)
class Problem:
    """Everything a learner run needs.

    ``model`` is the empirical (or expected) model the learner trains on. For
    ``ottd_is`` it should be built in ``is`` mode; ``ottd_nis`` needs ``nis``.
    """

    model: EmpiricalModel
    phi: np.ndarray
    theta0: Optional[np.ndarray] = None
    q_true: Optional[np.ndarray] = None
    nis: Optional[NisModel] = None
    eval_rows: Optional[np.ndarray] = None
    _blocks: Optional[SeenActionBlocks] = field(default=None, repr=False)

    @property
    def blocks(self):
        if self._blocks is None:
            self._blocks = SeenActionBlocks.from_model(self.model)
        return self._blocks


def _stepper(algorithm, problem: Problem, cfg) -> Callable:
    model = problem.model
    table = {
        "otd": lambda s: otd_step(s, model, cfg),
        "expected_td": lambda s: otd_step(s, model, cfg),
        "ottd": lambda s: ottd_step(s, model, cfg),
        "ottd_is": lambda s: ottd_step(s, model, cfg),
        "expected_target_td": lambda s: ottd_step(s, model, cfg),
        "rm": lambda s: residual_step(s, model, cfg, "rm"),
        "baird_rm": lambda s: residual_step(s, model, cfg, "baird_rm"),
        "gtd2": lambda s: gradient_td_step(s, model, cfg, "gtd2"),
        "tdc": lambda s: gradient_td_step(s, model, cfg, "tdc"),
    }
    if algorithm == "ottd_nis":
        if problem.nis is None:
            raise InvalidInputError("ottd_nis needs a NIS model")
        return lambda s: ottd_nis_step(s, model, problem.nis, cfg)
    if algorithm == "otq":
        blocks = problem.blocks
        return lambda s: otq_step(s, model, blocks, cfg)
    if algorithm not in table:
        raise InvalidInputError(f"unknown algorithm {algorithm!r}")
    return table[algorithm]


ALGORITHMS = ("otd", "ottd", "rm", "baird_rm", "gtd2", "tdc", "ottd_is", "ottd_nis", "otq",
              "expected_td", "expected_target_td")
TARGET_ALGORITHMS = ("ottd", "ottd_is", "ottd_nis", "otq", "expected_target_td")


def _gradient_td_affine(model, cfg, variant):
    d, gamma = model.d, model.gamma
    M, N, dk = model.M, model.N, model.dk
    eta2 = cfg.eta if cfg.eta2 is None else cfg.eta2
    MD = M.T * dk[None, :]
    G = M - gamma * N
    # w' = Ww w + Wt theta + bw, with the TD error R - G theta
    Wt = -eta2 * MD @ G
    Ww = np.eye(d) - eta2 * MD @ M
    bw = eta2 * MD @ model.R
    if variant == "gtd2":
        X = cfg.eta * (G.T * dk[None, :]) @ M
        Tt, Tw, bt = np.eye(d) + X @ Wt, X @ Ww, X @ bw
    else:
        X = cfg.eta * gamma * (N.T * dk[None, :]) @ M
        Tt = np.eye(d) - cfg.eta * MD @ G - X @ Wt
        Tw = -X @ Ww
        bt = cfg.eta * MD @ model.R - X @ bw
    return np.block([[Tt, Tw], [Wt, Ww]]), np.concatenate([bt, bw])


def affine_update(algorithm, model: EmpiricalModel, cfg: LearnerConfig, nis: NisModel = None):
    """Exact affine map ``z -> A z + b`` of the algorithm and the number of steps it spans.

    ``z`` is ``theta``, or ``(theta, w)`` stacked for the gradient-TD pair.
    Target-network algorithms span one full window of ``m`` steps.
    """
    d, gamma = model.d, model.gamma
    MD = model.M.T * model.dk[None, :]
    G = model.M - gamma * model.N
    if algorithm in ("otd", "expected_td"):
        return np.eye(d) - cfg.eta * MD @ G, cfg.eta * MD @ model.R, 1
    if algorithm in ("ottd", "ottd_is", "expected_target_td"):
        C, c = combined_matrices(model, cfg.eta, cfg.m)
        return C, c, cfg.m
    if algorithm == "ottd_nis":
        if nis is None:
            raise InvalidInputError("ottd_nis needs a NIS model")
        C, c = combined_matrices(model, cfg.eta, cfg.m, N=nis.N_nis, dk=nis.dk_nis)
        return C, c, cfg.m
    if algorithm in ("rm", "baird_rm"):
        GD = G.T * model.dk[None, :]
        direction = GD if algorithm == "rm" else (1 - cfg.mix) * MD + cfg.mix * GD
        return np.eye(d) - cfg.eta * direction @ G, cfg.eta * direction @ model.R, 1
    if algorithm in ("gtd2", "tdc"):
        A, b = _gradient_td_affine(model, cfg, algorithm)
        return A, b, 1
    raise InvalidInputError(f"{algorithm!r} has no affine update")


def _otq_window(model: EmpiricalModel, blocks: SeenActionBlocks, cfg: LearnerConfig):
    """Exact map of one OTQ window: targets fixed at its start, then ``m`` affine steps."""
    MD = model.M.T * model.dk[None, :]
    P = np.eye(model.d) - cfg.eta * MD @ model.M
    Pm, Q = _compose_power(P, np.zeros(model.d), cfg.m)[0], cfg.eta * window_sum(P, cfg.m) @ MD
    Ps = model.next_state_matrix()

    def advance(theta):
        y = model.R + model.gamma * (Ps @ blocks.state_values(theta, cfg.bootstrap))
        return Pm @ theta + Q @ y

    return advance


def _compose_power(A, b, n):
    """``n``-fold composition of ``z -> A z + b`` by repeated squaring."""
    RA, Rb = np.eye(A.shape[0]), np.zeros_like(b)
    while n:
        if n & 1:
            RA, Rb = A @ RA, A @ Rb + b
        A, b = A @ A, A @ b + b
        n >>= 1
    return RA, Rb


def run(algorithm, problem: Problem, cfg: LearnerConfig, eval_oracle=None, record_every=1):
    """Iterate ``algorithm`` and record the value error and EMSBE.

    Stops when the parameters move by at most ``cfg.tol`` (infinity norm) over
    one target window, when ``||Phi theta||_inf`` exceeds the divergence
    threshold or stops being finite, or after ``cfg.max_iters`` steps.

    With ``record_every > 1`` the run jumps between records with the exact
    composed map (window by window for OTQ); checks then happen once per record
    instead of per window.
    """
    phi = np.asarray(problem.phi, dtype=float)
    q = problem.q_true if eval_oracle is None else eval_oracle
    rows = slice(None) if problem.eval_rows is None else problem.eval_rows
    step = _stepper(algorithm, problem, cfg)
    N_eval = problem.nis.N_nis if algorithm == "ottd_nis" else None
    theta0 = np.zeros(problem.model.d) if problem.theta0 is None else problem.theta0
    with_aux = algorithm in ("gtd2", "tdc")
    state = LearnerState.initial(theta0, with_aux=with_aux)
    window = cfg.m if algorithm in TARGET_ALGORITHMS else 1
    d = problem.model.d

    steps, errs, bes = [], [], []

    def record(st):
        values = phi @ st.theta
        target = 0.0 if q is None else q
        steps.append(st.step)
        errs.append(float(np.max(np.abs(values - target)[rows])))
        bes.append(emsbe(st.theta, problem.model, N_eval))

    def blown(theta):
        if not np.all(np.isfinite(theta)):
            return True
        return np.max(np.abs(phi @ theta)) > cfg.divergence_threshold

    def moved(a, b):
        out = np.max(np.abs(a.theta - b.theta))
        if a.aux_w is not None:
            out = max(out, np.max(np.abs(a.aux_w - b.aux_w)))
        return out

    record(state)
    status = "max_iters"
    with np.errstate(over="ignore", invalid="ignore"):
        if record_every > 1:
            # OTQ is piecewise affine, so it advances one window at a time
            if algorithm == "otq":
                span = cfg.m
                windows = max(1, record_every // span)
                advance = _otq_window(problem.model, problem.blocks, cfg)
            else:
                A, b, span = affine_update(algorithm, problem.model, cfg, problem.nis)
                A, b = _compose_power(A, b, max(1, record_every // span))
                advance, windows = (lambda z: A @ z + b), 1
            chunk = span * max(1, record_every // span)
            while state.step + chunk <= cfg.max_iters:
                z = np.concatenate([state.theta, state.aux_w]) if with_aux else state.theta
                for _ in range(windows):
                    z = advance(z)
                prev = state
                state = LearnerState(z[:d], z[:d].copy(), state.step + chunk, z[d:] if with_aux else None)
                record(state)
                if blown(state.theta):
                    return RunResult(state, "diverged", np.array(steps), np.array(errs), np.array(bes))
                if moved(state, prev) <= cfg.tol:
                    return RunResult(state, "converged", np.array(steps), np.array(errs), np.array(bes))
        anchor = state
        while state.step < cfg.max_iters:
            state = step(state)
            if blown(state.theta):
                status = "diverged"
                record(state)
                break
            if state.step % record_every == 0:
                record(state)
            if state.step % window == 0:
                if moved(state, anchor) <= cfg.tol:
                    status = "converged"
                    break
                anchor = state
    if steps[-1] != state.step:
        record(state)
    return RunResult(state, status, np.array(steps), np.array(errs), np.array(bes))
