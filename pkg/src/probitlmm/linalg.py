"""Dense symmetric linear algebra for the posterior precision matrix.

Everything here is specialized to the matrices that drive the samplers and
the convergence checks: the (p+q) x (p+q) precision Sigma with blocks
(X'X, X'Z; Z'X, Z'Z + D(tau)), its exact block inverse through the q x q
core S(tau) = Z'(I - P_X)Z + D(tau), projections, Moore-Penrose
pseudo-inverses of PSD matrices, and the residual form matrix
M = I - W Sigma^{-1} W'
whose quadratic form feeds the group-action rescale step.

All functions are pure; matrices are desk-scale dense.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, eigvalsh

from .model import ProbitMixedModel


def _require_symmetric(A, name, tol=1e-10):
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"{name} must be square")
    scale = max(1.0, float(np.abs(A).max()) if A.size else 1.0)
    if float(np.abs(A - A.T).max()) > tol * scale:
        raise ValueError(f"{name} is not symmetric to {tol:g}")
    return 0.5 * (A + A.T)


def smallest_eigenvalue(A: np.ndarray) -> float:
    """Smallest eigenvalue of a symmetric matrix (symmetrized first)."""
    A = np.asarray(A, dtype=float)
    return float(eigvalsh(0.5 * (A + A.T))[0])


def is_psd(A: np.ndarray, tol: float = 1e-8) -> bool:
    """Positive semidefiniteness up to -tol scaled by the matrix norm."""
    A = 0.5 * (np.asarray(A, dtype=float) + np.asarray(A, dtype=float).T)
    w = eigvalsh(A)
    scale = max(1.0, float(np.abs(w).max()))
    return bool(w[0] >= -tol * scale)


@dataclass(frozen=True)
class EigenDecomposition:
    """Spectral factorization A = U' diag(lam) U with eigenvalues descending.

    rank counts eigenvalues above tol * lambda_max (with an optional caller
    supplied absolute scale for matrices that may be numerically zero), and
    lambda_max is the largest eigenvalue.
    """

    U: np.ndarray
    lam: np.ndarray
    rank: int
    lambda_max: float


def sym_eigen(A, tol: float = 1e-10, psd: bool = False, scale: float = 0.0) -> EigenDecomposition:
    """Spectral decomposition of a symmetric matrix.

    Parameters
    ----------
    A : symmetric matrix (checked to 1e-10 relative).
    tol : eigenvalues above tol * max(lambda_max, scale) count as nonzero.
    psd : when True, eigenvalues below the negative of that threshold raise.
    scale : absolute magnitude floor for the rank cut; pass a norm bound of
        the exact matrix when A may be numerically zero.
    """
    A = _require_symmetric(A, "A")
    w, V = np.linalg.eigh(A)
    lam = w[::-1].copy()
    U = V[:, ::-1].T.copy()
    lambda_max = float(lam[0]) if lam.size else 0.0
    thresh = tol * max(lambda_max, 0.0, float(scale))
    neg_floor = tol * max(1.0, abs(lambda_max), float(scale))
    if psd and lam.size and float(lam[-1]) < -neg_floor:
        raise ValueError(
            f"matrix declared PSD has eigenvalue {lam[-1]:.3e} below -{neg_floor:.3e}"
        )
    rank = int(np.sum(lam > thresh)) if lambda_max > 0.0 else 0
    return EigenDecomposition(U=U, lam=lam, rank=rank, lambda_max=lambda_max)


def pseudo_inverse(E: EigenDecomposition) -> np.ndarray:
    """Moore-Penrose inverse U' diag(1/lam on the nonzero part) U."""
    Ur = E.U[:E.rank]
    if E.rank == 0:
        return np.zeros((E.U.shape[1], E.U.shape[1]))
    return Ur.T @ (Ur / E.lam[:E.rank, None])


def projection_colspace(E: EigenDecomposition) -> np.ndarray:
    """Orthogonal projection onto the column space (nonzero eigenvectors)."""
    Ur = E.U[:E.rank]
    return Ur.T @ Ur


def projection_X(X: np.ndarray) -> np.ndarray:
    """Hat matrix X (X'X)^{-1} X'; requires X of full column rank."""
    X = np.asarray(X, dtype=float)
    sv = np.linalg.svd(X, compute_uv=False)
    if sv.size == 0 or sv[-1] <= 1e-10 * sv[0]:
        raise ValueError("X is numerically rank-deficient")
    c = cho_factor(X.T @ X, lower=True)
    P = X @ cho_solve(c, X.T)
    return 0.5 * (P + P.T)


@dataclass(frozen=True)
class PosteriorPrecision:
    """Precision Sigma of the Gaussian conditional for eta = (beta, u),
    together with the pieces of its block inverse.

    sigma  : (p+q) x (p+q), blocks (X'X, X'Z; Z'X, Z'Z + D(tau))
    S_tau  : q x q, Z'(I - P_X)Z + D(tau)
    R_mat  : p x q, (X'X)^{-1} X'Z
    D_tau  : q x q diagonal, tau_j repeated over each block
    xtx    : p x p Gram matrix X'X

    Cholesky factors of X'X and S(tau) are precomputed for the solves.
    """

    sigma: np.ndarray
    S_tau: np.ndarray
    R_mat: np.ndarray
    D_tau: np.ndarray
    xtx: np.ndarray
    xtx_cho: tuple
    s_cho: tuple


def build_precision(model: ProbitMixedModel, tau) -> PosteriorPrecision:
    """Assemble Sigma, S(tau), R and D(tau) for a positive precision vector."""
    tau = np.asarray(tau, dtype=float)
    if tau.shape != (model.r,) or np.any(tau <= 0):
        raise ValueError(f"tau must be a positive vector of length {model.r}")
    X, Z = model.obs.X, model.re.Z

    sv = np.linalg.svd(X, compute_uv=False)
    if sv[-1] <= 1e-10 * sv[0]:
        raise ValueError("X is numerically rank-deficient")

    xtx = X.T @ X
    xtz = X.T @ Z
    ztz = Z.T @ Z
    d_diag = np.repeat(tau, model.re.q)
    D = np.diag(d_diag)

    xtx_cho = cho_factor(xtx, lower=True)
    R = cho_solve(xtx_cho, xtz)

    S = ztz - xtz.T @ R + D
    S = 0.5 * (S + S.T)
    try:
        s_cho = cho_factor(S, lower=True)
    except np.linalg.LinAlgError as exc:  # cannot occur for tau > 0; guarded
        raise ValueError("S(tau) is not positive definite") from exc

    sigma = np.block([[xtx, xtz], [xtz.T, ztz + D]])
    return PosteriorPrecision(
        sigma=sigma, S_tau=S, R_mat=R, D_tau=D, xtx=xtx, xtx_cho=xtx_cho, s_cho=s_cho
    )


def sigma_inverse(pp: PosteriorPrecision) -> np.ndarray:
    """Sigma^{-1} assembled from the block formula
    ((X'X)^{-1} + R S^{-1} R', -R S^{-1}; -S^{-1} R', S^{-1})."""
    p = pp.xtx.shape[0]
    q = pp.S_tau.shape[0]
    S_inv = cho_solve(pp.s_cho, np.eye(q))
    S_inv = 0.5 * (S_inv + S_inv.T)
    xtx_inv = cho_solve(pp.xtx_cho, np.eye(p))
    xtx_inv = 0.5 * (xtx_inv + xtx_inv.T)
    RS = pp.R_mat @ S_inv
    top_left = xtx_inv + RS @ pp.R_mat.T
    out = np.empty((p + q, p + q))
    out[:p, :p] = 0.5 * (top_left + top_left.T)
    out[:p, p:] = -RS
    out[p:, :p] = -RS.T
    out[p:, p:] = S_inv
    return out


def conditional_mean(pp: PosteriorPrecision, model: ProbitMixedModel, v) -> np.ndarray:
    """Sigma^{-1} W'v computed through the block solves:
    top = (X'X)^{-1} X'[I - Z S^{-1} Z'(I - P_X)] v, bottom = S^{-1} Z'(I - P_X) v."""
    v = np.asarray(v, dtype=float)
    if v.shape != (model.n,):
        raise ValueError(f"v must have length {model.n}")
    X, Z = model.obs.X, model.re.Z
    resid = v - X @ cho_solve(pp.xtx_cho, X.T @ v)  # (I - P_X) v
    bottom = cho_solve(pp.s_cho, Z.T @ resid)
    top = cho_solve(pp.xtx_cho, X.T @ (v - Z @ bottom))
    return np.concatenate([top, bottom])


def residual_form_matrix(pp: PosteriorPrecision, model: ProbitMixedModel) -> np.ndarray:
    """I - W Sigma^{-1} W': symmetric PSD with spectrum inside [0, 1];
    the quadratic form behind the group-action rescale draw."""
    W = model.W
    M = np.eye(model.n) - W @ sigma_inverse(pp) @ W.T
    return 0.5 * (M + M.T)


def _zpz(model: ProbitMixedModel) -> np.ndarray:
    """Z'(I - P_X)Z, the PSD core before the D(tau) shift."""
    X, Z = model.obs.X, model.re.Z
    xtz = X.T @ Z
    A = Z.T @ Z - xtz.T @ cho_solve(cho_factor(X.T @ X, lower=True), xtz)
    return 0.5 * (A + A.T)


def check_s_inverse_bounds(model: ProbitMixedModel, tau, tol: float = 1e-8):
    """Numerically verify the two S(tau)^{-1} comparison inequalities.

    (i)  (Z'(I-P_X)Z)^+ + (sum_j 1/tau_j)(I - P) - S(tau)^{-1} is PSD,
         with P the projection onto the column space of Z'(I-P_X)Z;
    (ii) (lambda_max + tau_j) I - (R_j S(tau)^{-1} R_j')^{-1} is PSD
         for every block j.

    Returns (bool, bool), one verdict per inequality.
    """
    tau = np.asarray(tau, dtype=float)
    pp = build_precision(model, tau)
    A = _zpz(model)
    E = sym_eigen(A, psd=True, scale=float(model.re.Z.sum()))
    A_plus = pseudo_inverse(E)
    P = projection_colspace(E)
    q = model.q
    S_inv = cho_solve(pp.s_cho, np.eye(q))
    S_inv = 0.5 * (S_inv + S_inv.T)

    diff1 = A_plus + float(np.sum(1.0 / tau)) * (np.eye(q) - P) - S_inv
    ok1 = is_psd(diff1, tol)

    ok2 = True
    for j in range(model.r):
        sl = model.re.block_slice(j)
        block = S_inv[sl, sl]
        block_inv = np.linalg.inv(0.5 * (block + block.T))
        diff2 = (E.lambda_max + tau[j]) * np.eye(int(model.re.q[j])) - block_inv
        ok2 = ok2 and is_psd(diff2, tol)
    return ok1, ok2
