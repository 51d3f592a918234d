"""Dense linear-algebra helpers.

Every matrix in this package is small (at most a few hundred rows), so the
routines here favour clarity and explicit failure modes over speed.
"""
import numpy as np

from .errors import (
    DegenerateModelError,
    InvalidInputError,
    MultiplicityError,
    ShapeError,
    SingularSystemError,
)

SINGULAR_RTOL = 1e-12


def as_matrix(A, name="A"):
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        raise ShapeError(f"{name} must be 2-d, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise InvalidInputError(f"{name} has non-finite entries")
    return A


def _as_square(A, name="A"):
    A = as_matrix(A, name)
    if A.shape[0] != A.shape[1]:
        raise ShapeError(f"{name} must be square, got shape {A.shape}")
    return A


def pinv(A, rcond=None):
    """Moore-Penrose pseudoinverse via the SVD.

    Singular values below ``rcond * sigma_max`` are treated as zero. The default
    cutoff is machine epsilon times ``max(rows, cols)``.
    """
    A = as_matrix(A)
    if A.size == 0:
        raise InvalidInputError("pinv of an empty matrix")
    if rcond is None:
        rcond = np.finfo(float).eps * max(A.shape)
    if rcond < 0:
        raise InvalidInputError("rcond must be nonnegative")
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros(A.T.shape)
    keep = s > rcond * s[0]
    s_inv = np.zeros_like(s)
    s_inv[keep] = 1.0 / s[keep]
    return (Vt.T * s_inv) @ U.T


def spectral_radius(A):
    A = _as_square(A)
    if A.shape[0] == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(A))))


def power_iteration_radius(A, iters=5000, seed=0, tol=1e-13):
    """Spectral radius estimate from normalised power iteration.

    Only reliable when a single eigenvalue (or a conjugate pair) dominates in
    modulus; used as an independent cross-check of :func:`spectral_radius`.
    The estimate is the geometric mean growth over a trailing block of
    iterations so that complex-conjugate dominant pairs do not oscillate it.
    """
    A = _as_square(A)
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(A.shape[0])
    x /= np.linalg.norm(x)
    log_growth = []
    prev = None
    for i in range(iters):
        y = A @ x
        g = np.linalg.norm(y)
        if g == 0.0:
            return 0.0
        log_growth.append(np.log(g))
        x = y / g
        if i >= 200 and i % 50 == 0:
            est = np.exp(np.mean(log_growth[-200:]))
            if prev is not None and abs(est - prev) <= tol * max(est, 1.0):
                return float(est)
            prev = est
    return float(np.exp(np.mean(log_growth[-200:])))


def inf_norm(A):
    """Maximum absolute row sum."""
    A = as_matrix(A)
    if A.size == 0:
        return 0.0
    return float(np.max(np.sum(np.abs(A), axis=1)))


def _diag_vector(D):
    D = np.asarray(D, dtype=float)
    if D.ndim == 2:
        if not np.allclose(D, np.diag(np.diag(D))):
            raise InvalidInputError("D must be diagonal")
        D = np.diag(D)
    return D


def min_eig_mmtd(M, D):
    """Smallest eigenvalue of ``M M^T D``.

    ``D`` is a positive diagonal (given as a vector or a matrix). The product is
    similar to the symmetric ``D^{1/2} M M^T D^{1/2}`` whose spectrum is computed
    with a symmetric solver.
    """
    M = as_matrix(M, "M")
    d = _diag_vector(D)
    if d.shape != (M.shape[0],):
        raise ShapeError("D must match the rows of M")
    if np.any(d <= 0):
        raise InvalidInputError("D must have a positive diagonal")
    root = np.sqrt(d)
    S = (root[:, None] * (M @ M.T)) * root[None, :]
    eig = np.linalg.eigvalsh(S)
    scale = max(eig[-1], 1.0)
    if eig[0] <= SINGULAR_RTOL * scale * M.shape[0]:
        raise DegenerateModelError("M is not of full row rank")
    return float(eig[0])


def linear_solve(A, b, tol=1e-9):
    """Solve ``A x = b``, refusing numerically singular systems."""
    A = _as_square(A)
    b = np.asarray(b, dtype=float)
    if b.shape[0] != A.shape[0]:
        raise ShapeError("right-hand side does not match A")
    s = np.linalg.svd(A, compute_uv=False)
    if s.size == 0 or s[-1] <= SINGULAR_RTOL * max(s[0], 1.0):
        raise SingularSystemError(f"singular system (smallest singular value {s[-1] if s.size else 0.0:.3e})")
    x = np.linalg.solve(A, b)
    resid = np.max(np.abs(A @ x - b)) if b.size else 0.0
    if resid > tol * max(np.max(np.abs(b)) if b.size else 0.0, 1.0):
        raise SingularSystemError(f"ill-conditioned system, residual {resid:.3e}")
    return x


def stationary_distribution(P, tol=1e-10, power_iters=100000):
    """Unique stationary law ``d`` of a row-stochastic ``P`` (``d^T P = d^T``).

    Uses the eigenvector of ``P^T`` for eigenvalue one; falls back to power
    iteration on the lazy chain when the eigen route is numerically unusable.
    """
    P = _as_square(P, "P")
    n = P.shape[0]
    if np.any(P < -1e-12) or not np.allclose(P.sum(axis=1), 1.0, atol=1e-9):
        raise InvalidInputError("P must be row-stochastic")
    w, V = np.linalg.eig(P.T)
    unit = np.abs(w - 1.0) < 1e-8
    if unit.sum() > 1:
        raise MultiplicityError(f"{int(unit.sum())} unit eigenvalues; stationary law not unique")
    if unit.sum() == 1:
        d = np.real(V[:, np.argmax(unit)])
        d = d / d.sum()
        d[np.abs(d) < 1e-15] = 0.0
        if np.all(d >= -1e-12) and np.max(np.abs(d @ P - d)) <= tol:
            d = np.clip(d, 0.0, None)
            return d / d.sum()
    # lazy chain is aperiodic with the same stationary law
    L = 0.5 * (np.eye(n) + P)
    d = np.full(n, 1.0 / n)
    for _ in range(power_iters):
        nxt = d @ L
        if np.max(np.abs(nxt - d)) <= tol * 1e-2:
            d = nxt
            break
        d = nxt
    d = d / d.sum()
    if np.max(np.abs(d @ P - d)) > tol:
        raise MultiplicityError("power iteration did not settle on a stationary law")
    return d


def orth(A, rtol=1e-10):
    """Orthonormal basis of the column space of ``A``."""
    A = as_matrix(A)
    U, s, _ = np.linalg.svd(A, full_matrices=False)
    if s.size == 0:
        return U[:, :0]
    rank = int(np.sum(s > rtol * max(s[0], 1e-300)))
    return U[:, :rank]


def weighted_norm(x, weights):
    """``sqrt(sum_i w_i x_i^2)``, the norm induced by ``diag(weights)``."""
    return float(np.sqrt(np.sum(np.asarray(weights) * np.asarray(x) ** 2)))


def weighted_operator_norm(A, weights):
    """Operator norm of ``A`` with respect to :func:`weighted_norm`.

    Requires strictly positive weights: ``||A||_D = ||D^{1/2} A D^{-1/2}||_2``.
    """
    A = _as_square(A)
    w = np.asarray(weights, dtype=float)
    if np.any(w <= 0):
        raise InvalidInputError("weighted operator norm needs positive weights")
    r = np.sqrt(w)
    return float(np.linalg.norm((r[:, None] * A) / r[None, :], 2))
