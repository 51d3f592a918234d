"""Convergence conditions, target windows and iteration matrices."""
import math
from dataclasses import dataclass

import numpy as np

from .data import EmpiricalModel
from .errors import InvalidInputError, PreconditionError
from .learners import LearnerConfig, affine_update, expected_model
from .numerics import as_matrix, inf_norm, min_eig_mmtd, orth, spectral_radius

NONEXISTENCE_TOL = 1e-10


@dataclass(frozen=True)
class ConditionReport:
    name: str
    value: float
    threshold: float
    satisfied: bool
    detail: str = ""

    def render(self):
        mark = "ok " if self.satisfied else "BAD"
        return f"[{mark}] {self.name}: {self.value:.6g} (threshold {self.threshold:.6g}) {self.detail}".rstrip()


def check_otd(model: EmpiricalModel, eta):
    k = model.k
    A = np.eye(k) - eta * (model.M - model.gamma * model.N) @ model.M.T * model.dk[None, :]
    rho = spectral_radius(A)
    return [
        ConditionReport("td spectral radius", rho, 1.0, rho < 1.0, "rho(I - eta (M - gamma N) M^T D_k)"),
        check_ottd(model),
    ]


def check_ottd(model: EmpiricalModel, N=None):
    """Infinity and spectral norms of ``N M^+``; passes when either is at most one."""
    N = model.N if N is None else N
    W = N @ model.M_pinv
    v_inf = inf_norm(W)
    v_two = float(np.linalg.norm(W, 2))
    ok = min(v_inf, v_two) <= 1.0 + 1e-10
    return ConditionReport("projected next-feature norm", v_inf, 1.0, ok, f"(spectral norm {v_two:.6g})")


def check_otq(model: EmpiricalModel, blocks, gamma=None):
    gamma = model.gamma if gamma is None else gamma
    value = max(inf_norm(B @ model.M_pinv) for B in blocks.blocks)
    bound = np.inf if gamma == 0 else 1.0 / gamma
    return ConditionReport("seen-action projection norm", value, bound, value < bound)


def m_bar(model: EmpiricalModel, eta, gamma=None):
    """Smallest target window the theory guarantees to contract."""
    gamma = model.gamma if gamma is None else gamma
    lam_min = min_eig_mmtd(model.M, model.dk)
    lam_max = spectral_radius(model.M @ model.M.T * model.dk[None, :])
    if not 0 < eta * lam_max < 1:
        raise PreconditionError(f"eta * rho(M M^T D_k) = {eta * lam_max:.4g} must lie in (0, 1)")
    num = math.log(1.0 - gamma) - math.log((1.0 + gamma) * math.sqrt(model.k))
    return 1 + max(0, math.ceil(num / math.log(1.0 - eta * lam_min)))


def window_matrix(model: EmpiricalModel, eta, m):
    """``gamma W + (I - gamma W)(I - eta M M^T D_k)^m``: one target window on seen-pair values."""
    k = model.k
    A = np.eye(k) - eta * (model.M @ model.M.T) * model.dk[None, :]
    G = model.gamma * model.W
    return G + (np.eye(k) - G) @ np.linalg.matrix_power(A, m)


def iteration_matrix(algorithm, model: EmpiricalModel, cfg: LearnerConfig, nis=None):
    """Linear part ``C`` of the algorithm's affine update and the steps it spans.

    Gradient TD returns the joint matrix over the stacked ``(theta, w)``.
    """
    C, _, steps = affine_update(algorithm, model, cfg, nis)
    return C, steps


def convergence_metric(C, steps=1, transient=False):
    """Per-step asymptotic contraction factor of ``x -> C x``.

    With ``transient=True`` the spectral radius is taken on the invariant
    subspace ``range(I - C)``, which drops the unit eigenvalues of directions the
    update never moves (over-parameterized models always have some).
    """
    C = as_matrix(C, "C")
    if steps < 1:
        raise InvalidInputError("steps must be positive")
    if transient:
        Q = orth(np.eye(C.shape[0]) - C)
        rho = spectral_radius(Q.T @ C @ Q) if Q.shape[1] else 0.0
    else:
        rho = spectral_radius(C)
    return rho ** (1.0 / steps)


def detect_nonexistence(phi, P_pi, D, gamma):
    """Smallest singular value of ``Phi^T D (I - gamma P_pi) Phi``."""
    phi = as_matrix(phi, "phi")
    d = np.diag(D) if np.ndim(D) == 2 else np.asarray(D, dtype=float)
    A = phi.T @ (d[:, None] * (np.eye(phi.shape[0]) - gamma * np.asarray(P_pi)) @ phi)
    smin = float(np.linalg.svd(A, compute_uv=False)[-1])
    exists = smin >= NONEXISTENCE_TOL
    return ConditionReport("projected Bellman system singular value", smin, NONEXISTENCE_TOL, exists,
                           "" if exists else "fixed point does not exist")


TABLE1_ALGORITHMS = (
    ("TD", "otd", LearnerConfig(eta=0.5)),
    ("Target TD", "ottd", LearnerConfig(eta=0.997, m=3)),
    ("RM", "rm", LearnerConfig(eta=0.8)),
    ("GTD2", "gtd2", LearnerConfig(eta=0.6, eta2=0.6)),
)
TABLE1_GAMMA = 0.99


def table1(gamma=TABLE1_GAMMA, rows=TABLE1_ALGORITHMS):
    """Rate metrics on the Baird expected model.

    Returns dicts with the per-step metric and, for windowed algorithms, the
    per-window value as well.
    """
    from .envs import make_baird

    problem = make_baird(gamma=gamma)
    model = expected_model(problem.mdp, problem.pi, problem.phi, problem.lam)
    out = []
    for label, alg, cfg in rows:
        C, steps = iteration_matrix(alg, model, cfg)
        per_step = convergence_metric(C, steps, transient=True)
        out.append({
            "algorithm": label,
            "key": alg,
            "metric": per_step,
            "per_window": convergence_metric(C, 1, transient=True),
            "steps_per_application": steps,
            "converges": per_step < 1.0,
        })
    return out
