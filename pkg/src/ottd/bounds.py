"""High-probability value-error bounds for target TD fixed points.

Each calculator returns a :class:`BoundReport` whose ``total`` is the sum of a
statistical term (finite-sample dynamics error), a projection term (data that
misses directions of the reference parameter) and an approximation term (how
far the best linear fit is from the true values).
"""
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import linprog

from .data import EmpiricalModel, NisModel
from .errors import DegenerateModelError, InvalidInputError
from .learners import fixed_point_nis, fixed_point_ottd
from .mdp import state_action_transition
from .numerics import inf_norm, pinv, stationary_distribution, weighted_norm, weighted_operator_norm


@dataclass(frozen=True, eq=False)
class BoundReport:
    eps_stat: float
    eps_projection: float
    eps_approx: float
    delta: float
    norm_kind: str
    theta_star: np.ndarray
    actual_error: Optional[float] = None

    @property
    def total(self):
        return self.eps_stat + self.eps_projection + self.eps_approx

    @property
    def holds(self):
        return None if self.actual_error is None else self.actual_error <= self.total

    def as_row(self):
        return {
            "eps_stat": self.eps_stat,
            "eps_projection": self.eps_projection,
            "eps_approx": self.eps_approx,
            "total": self.total,
            "delta": self.delta,
            "norm_kind": self.norm_kind,
            "actual_error": "" if self.actual_error is None else self.actual_error,
        }

    def render(self):
        lines = [
            f"norm           {self.norm_kind}",
            f"delta          {self.delta:g}",
            f"eps_stat       {self.eps_stat:.6g}",
            f"eps_projection {self.eps_projection:.6g}",
            f"eps_approx     {self.eps_approx:.6g}",
            f"total          {self.total:.6g}",
        ]
        if self.actual_error is not None:
            lines.append(f"actual error   {self.actual_error:.6g} ({'within' if self.holds else 'EXCEEDS'} bound)")
        return "\n".join(lines)


def minimax_theta(phi, q):
    """Chebyshev fit ``argmin_theta ||Phi theta - q||_inf`` as a linear program."""
    phi = np.asarray(phi, dtype=float)
    q = np.asarray(q, dtype=float)
    n, d = phi.shape
    if q.shape != (n,):
        raise InvalidInputError("q must have one entry per feature row")
    # variables (theta, t): minimise t subject to |Phi theta - q| <= t
    c = np.zeros(d + 1)
    c[-1] = 1.0
    ones = np.ones((n, 1))
    A = np.vstack([np.hstack([phi, -ones]), np.hstack([-phi, -ones])])
    b = np.concatenate([q, -q])
    bounds = [(None, None)] * d + [(0, None)]
    res = linprog(c, A_ub=A, b_ub=b, bounds=bounds, method="highs")
    if res.status != 0:
        raise DegenerateModelError(f"Chebyshev fit failed: {res.message}")
    return res.x[:d]


def _check_delta(delta):
    if not 0.0 < delta <= 1.0:
        raise InvalidInputError("delta must lie in (0, 1]")


def _min_count(model):
    if model.counts is None or model.counts.min() <= 0:
        raise DegenerateModelError("every seen pair needs a positive count")
    return float(model.counts.min())


def _common_terms(model, phi, q_true, theta_star, gamma):
    phi = np.asarray(phi, dtype=float)
    PM = phi @ model.M_pinv
    a = inf_norm(PM)
    perp = theta_star - model.M_pinv @ (model.M @ theta_star)
    eps_projection = a / (1 - gamma) * float(np.max(np.abs(phi @ perp)))
    eps_approx = 2 * a / (1 - gamma) * float(np.max(np.abs(phi @ theta_star - q_true)))
    return a, eps_projection, eps_approx


def bound_ottd(model: EmpiricalModel, phi, q_true, delta):
    """Value-error bound for data whose next actions follow the target policy."""
    _check_delta(delta)
    gamma = model.gamma
    q_true = np.asarray(q_true, dtype=float)
    n_min = _min_count(model)
    theta_star = minimax_theta(phi, q_true)
    a, eps_projection, eps_approx = _common_terms(model, phi, q_true, theta_star, gamma)
    log_term = math.log(2 * model.k * model.n_actions / delta)
    eps_stat = a / (1 - gamma) ** 2 * math.sqrt(log_term / (2 * n_min))
    theta_td = fixed_point_ottd(model)
    actual = float(np.max(np.abs(np.asarray(phi) @ theta_td - q_true)))
    return BoundReport(eps_stat, eps_projection, eps_approx, delta, "infinity", theta_star, actual)


def nis_stat_factor(rho_M):
    return rho_M * max(rho_M - 1.0, 1.0)


def bound_nis_episodic(model: EmpiricalModel, nis: NisModel, phi, q_true, delta):
    """Value-error bound for normalised-IS target TD on episodic trajectories."""
    _check_delta(delta)
    gamma = model.gamma
    q_true = np.asarray(q_true, dtype=float)
    n_min = _min_count(model)
    theta_star = minimax_theta(phi, q_true)
    a, eps_projection, eps_approx = _common_terms(model, phi, q_true, theta_star, gamma)
    log_term = math.log(4 * model.k * model.n_actions / delta)
    eps_stat = a * nis_stat_factor(nis.rho_M) / ((1 - gamma) ** 2 * math.sqrt(n_min)) * log_term
    theta_td = fixed_point_nis(model, nis)
    actual = float(np.max(np.abs(np.asarray(phi) @ theta_td - q_true)))
    return BoundReport(eps_stat, eps_projection, eps_approx, delta, "infinity", theta_star, actual)


def _support_operator_norm(A, weights):
    """Weighted operator norm on the support of ``weights`` (zero-weight coordinates dropped)."""
    keep = weights > 0
    return weighted_operator_norm(A[np.ix_(keep, keep)], weights[keep])


def bound_continuing(model: EmpiricalModel, nis: Optional[NisModel], phi, q_true, mdp, pi, delta):
    """Stationary-distribution weighted bound for trajectory data with looped final states.

    Looped final pairs carry a wrong self transition; their estimation error is
    only bounded by a constant, weighted by their stationary mass.
    """
    _check_delta(delta)
    gamma = model.gamma
    phi = np.asarray(phi, dtype=float)
    q_true = np.asarray(q_true, dtype=float)
    n_min = _min_count(model)
    d_pi = stationary_distribution(state_action_transition(mdp, pi))
    root = np.sqrt(d_pi)

    C = _support_operator_norm(phi @ model.M_pinv @ model.H, d_pi)
    Phat = model.Phat if nis is None else nis.Phat_nis
    p_norm = _support_operator_norm(Phat, d_pi)
    rho_M = 1.0 if nis is None else nis.rho_M

    theta_star = np.linalg.lstsq(root[:, None] * phi, root * q_true, rcond=None)[0]
    perp = theta_star - model.M_pinv @ (model.M @ theta_star)
    eps_projection = C * (1 + gamma * p_norm) / (1 - gamma) * weighted_norm(phi @ perp, d_pi)
    eps_approx = C * (2 + gamma * p_norm) / (1 - gamma) * weighted_norm(phi @ theta_star - q_true, d_pi)

    log_term = math.log(4 * model.k * model.n_actions / delta)
    eps_sampling = C * nis_stat_factor(rho_M) / ((1 - gamma) ** 2 * math.sqrt(n_min)) * log_term
    loop = np.zeros(model.n_states * model.n_actions, bool)
    if model.loop_pairs is not None:
        loop[model.loop_pairs] = True
    loop_mass = float(d_pi[loop].sum())
    eps_loop = C / (1 - gamma) * (2 * gamma / (1 - gamma) + 1) * math.sqrt(loop_mass)
    eps_stat = eps_sampling + eps_loop

    theta_td = fixed_point_ottd(model) if nis is None else fixed_point_nis(model, nis)
    actual = weighted_norm(phi @ theta_td - q_true, d_pi)
    return BoundReport(eps_stat, eps_projection, eps_approx, delta, "d_pi_weighted", theta_star, actual)


def bound_expected(phi, q_true, gamma):
    """Approximation-only bound for full-coverage expected updates.

    Returns ``(bound, actual)`` where ``actual = ||Phi Phi^+ q - q||_inf`` is the
    error of the zero-initialised limit and ``bound = 2/(1-gamma) * min_theta ||Phi theta - q||_inf``.
    """
    phi = np.asarray(phi, dtype=float)
    q_true = np.asarray(q_true, dtype=float)
    theta_star = minimax_theta(phi, q_true)
    residual = float(np.max(np.abs(phi @ theta_star - q_true)))
    bound = 2.0 / (1.0 - gamma) * residual
    actual = float(np.max(np.abs(phi @ (pinv(phi) @ q_true) - q_true)))
    if actual > bound + 1e-9 * max(1.0, bound):
        raise AssertionError(f"expected-update bound violated: {actual:.6g} > {bound:.6g}")
    return bound, actual
