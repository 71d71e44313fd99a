"""Operations on the manifold of symmetric positive-definite matrices.

Everything here works on plain ``numpy`` arrays. Matrix functions go through a
symmetric eigendecomposition (LAPACK ``syevd`` via :func:`numpy.linalg.eigh`),
never through a general nonsymmetric routine.

The distance is the affine-invariant one,

.. math::
    \\delta_R(A, B) = \\lVert \\log(A^{-1/2} B A^{-1/2}) \\rVert_F
                  = \\Big[\\sum_c \\log^2 \\lambda_c\\Big]^{1/2}.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .exceptions import (
    ConvergenceError,
    DimensionMismatchError,
    NotPositiveDefiniteError,
    SymmetryError,
)

SYMMETRY_RTOL = 1e-12
PD_FLOOR = 1e-12
COST_RTOL = 1e-11


class EigenDecomposition(NamedTuple):
    eigenvalues: np.ndarray  # ascending
    eigenvectors: np.ndarray  # column k pairs with eigenvalues[k]


@dataclass(frozen=True)
class MeanInfo:
    n_iter: int
    grad_norm: float
    step: float


def _sym(a):
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def _as_square(m):
    m = np.asarray(m, dtype=np.float64)
    if m.ndim < 2 or m.shape[-1] != m.shape[-2]:
        raise DimensionMismatchError(f"expected square matrix, got shape {m.shape}")
    return m


def check_symmetric(m) -> np.ndarray:
    """Validate symmetry and return an exactly symmetric float copy.

    Works on a single matrix or a stack of matrices (last two axes).
    """
    m = _as_square(m)
    scale = np.max(np.abs(m), axis=(-2, -1), keepdims=True) if m.size else 0.0
    asym = np.abs(m - np.swapaxes(m, -1, -2))
    if np.any(asym > SYMMETRY_RTOL * scale):
        raise SymmetryError(
            f"matrix is not symmetric (max asymmetry {asym.max():.3g})"
        )
    return _sym(m)


def _check_floor(w):
    top = w[..., -1:]
    bad = (top <= 0) | (w[..., :1] < PD_FLOOR * top)
    if np.any(bad):
        raise NotPositiveDefiniteError(
            f"matrix is not positive definite (eigenvalues in "
            f"[{w[..., 0].min():.3g}, {w[..., -1].max():.3g}])"
        )


def check_spd(m) -> np.ndarray:
    """Validate positive definiteness; return an exactly symmetric float copy."""
    m = check_symmetric(m)
    _check_floor(np.linalg.eigvalsh(m))
    return m


def is_spd(m) -> bool:
    try:
        check_spd(m)
    except (SymmetryError, NotPositiveDefiniteError, DimensionMismatchError):
        return False
    return True


def sym_eig(m) -> EigenDecomposition:
    """Full spectral decomposition of a symmetric matrix, eigenvalues ascending."""
    w, v = np.linalg.eigh(check_symmetric(m))
    return EigenDecomposition(w, v)


def _funm(w, v, f):
    return _sym((v * f(w)[..., None, :]) @ np.swapaxes(v, -1, -2))


def _spd_eigh(s):
    w, v = np.linalg.eigh(_sym(s))
    _check_floor(w)
    return w, v


def spd_power(s, t: float) -> np.ndarray:
    """Matrix power ``V diag(w**t) V^T`` of an SPD matrix (or stack)."""
    w, v = _spd_eigh(check_symmetric(s))
    return _funm(w, v, lambda x: x**t)


def spd_sqrt(s) -> np.ndarray:
    w, v = _spd_eigh(check_symmetric(s))
    return _funm(w, v, np.sqrt)


def spd_invsqrt(s) -> np.ndarray:
    w, v = _spd_eigh(check_symmetric(s))
    return _funm(w, v, lambda x: 1.0 / np.sqrt(x))


def spd_log(s) -> np.ndarray:
    """Principal matrix logarithm; the result is symmetric, not necessarily SPD."""
    w, v = _spd_eigh(check_symmetric(s))
    return _funm(w, v, np.log)


def spd_exp(m) -> np.ndarray:
    """Matrix exponential of a symmetric matrix; always SPD."""
    w, v = np.linalg.eigh(check_symmetric(m))
    return _funm(w, v, np.exp)


def _whitened_eigvals(ref, covs):
    """Eigenvalues of ``ref^{-1/2} C ref^{-1/2}`` for each C in ``covs``."""
    w, v = _spd_eigh(ref)
    isq = _funm(w, v, lambda x: 1.0 / np.sqrt(x))
    lam = np.linalg.eigvalsh(_sym(isq @ covs @ isq))
    _check_floor(lam)
    return lam


def riemannian_distance(s1, s2) -> float:
    """Affine-invariant Riemannian distance between two SPD matrices.

    Examples
    --------
    >>> round(riemannian_distance(np.eye(2), np.diag([4.0, 1.0])), 6)
    1.386294
    """
    s1, s2 = check_symmetric(s1), check_symmetric(s2)
    if s1.shape != s2.shape or s1.ndim != 2:
        raise DimensionMismatchError(
            f"cannot compare matrices of shape {s1.shape} and {s2.shape}"
        )
    lam = _whitened_eigvals(s1, s2)
    return float(np.sqrt(np.sum(np.log(lam) ** 2)))


def distances(ref, covs) -> np.ndarray:
    """Distances from one SPD reference to each matrix in a stack."""
    ref = check_symmetric(ref)
    covs = check_symmetric(covs)
    if covs.ndim == 2:
        covs = covs[None]
    if covs.shape[1:] != ref.shape:
        raise DimensionMismatchError(
            f"reference is {ref.shape}, stack holds {covs.shape[1:]}"
        )
    lam = _whitened_eigvals(ref, covs)
    return np.sqrt(np.sum(np.log(lam) ** 2, axis=-1))


def geodesic(s1, s2, t: float) -> np.ndarray:
    """Point at parameter ``t`` on the geodesic from ``s1`` (t=0) to ``s2`` (t=1).

    Computed as ``s1^{1/2} (s1^{-1/2} s2 s1^{-1/2})^t s1^{1/2}``. The endpoints
    are returned as exact copies of the inputs.
    """
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"geodesic parameter must lie in [0, 1], got {t}")
    s1, s2 = check_spd(s1), check_spd(s2)
    if s1.shape != s2.shape:
        raise DimensionMismatchError(
            f"cannot interpolate between shapes {s1.shape} and {s2.shape}"
        )
    if t == 0.0:
        return s1
    if t == 1.0:
        return s2
    w, v = _spd_eigh(s1)
    sq = _funm(w, v, np.sqrt)
    isq = _funm(w, v, lambda x: 1.0 / np.sqrt(x))
    lam, u = _spd_eigh(isq @ s2 @ isq)
    return _sym(sq @ _funm(lam, u, lambda x: x**t) @ sq)


def _tangent_mean(m, covs):
    """Mean whitened log map at ``m`` and the squared-distance cost."""
    w, v = _spd_eigh(m)
    isq = _funm(w, v, lambda x: 1.0 / np.sqrt(x))
    lam, u = np.linalg.eigh(_sym(isq @ covs @ isq))
    _check_floor(lam)
    loglam = np.log(lam)
    logs = _funm(loglam, u, lambda x: x)
    return logs.mean(axis=0), float(np.sum(loglam**2)), w, v


def frechet_mean(
    matrices: Sequence[np.ndarray] | np.ndarray,
    tol: float = 1e-9,
    max_iter: int = 50,
    init: np.ndarray | None = None,
    return_info: bool = False,
):
    """Riemannian (Fréchet / Karcher) mean of a set of SPD matrices.

    Fixed-point iteration ``M <- M^{1/2} exp(step * J) M^{1/2}`` where ``J`` is
    the mean of ``log(M^{-1/2} C_i M^{-1/2})``. The step starts at 1 and is
    halved whenever a proposal fails to decrease the summed squared distance;
    rejected proposals count as iterations.

    Parameters
    ----------
    matrices : array_like, shape (n, c, c)
        SPD matrices of a common size.
    tol : float
        Stop once the Frobenius norm of ``J`` falls below this value.
    max_iter : int
        Maximum number of proposals.
    init : ndarray, optional
        Starting point; the arithmetic mean by default.
    return_info : bool
        Also return a :class:`MeanInfo`.

    Raises
    ------
    ConvergenceError
        If ``tol`` is not reached within ``max_iter`` proposals.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if max_iter < 1:
        raise ValueError("max_iter must be a positive integer")
    covs = check_symmetric(np.asarray(matrices, dtype=np.float64))
    if covs.ndim != 3 or covs.shape[0] == 0:
        raise ValueError("frechet_mean needs a nonempty stack of square matrices")
    _check_floor(np.linalg.eigvalsh(covs))

    m = check_spd(init) if init is not None else _sym(covs.mean(axis=0))
    grad, cost, w, v = _tangent_mean(m, covs)
    norm = np.linalg.norm(grad)
    step = 1.0
    n_iter = 0
    while norm >= tol:
        if n_iter >= max_iter:
            raise ConvergenceError(
                f"mean did not converge in {max_iter} iterations "
                f"(gradient norm {norm:.3g})",
                grad_norm=float(norm),
            )
        n_iter += 1
        sq = _funm(w, v, np.sqrt)
        candidate = _sym(sq @ spd_exp(step * grad) @ sq)
        c_grad, c_cost, c_w, c_v = _tangent_mean(candidate, covs)
        # slack covers round-off in the cost of ill-conditioned sets
        if c_cost <= cost + COST_RTOL * max(cost, 1.0):
            m, grad, cost, w, v = candidate, c_grad, c_cost, c_w, c_v
            norm = np.linalg.norm(grad)
        else:
            step *= 0.5
    if return_info:
        return m, MeanInfo(n_iter=n_iter, grad_norm=float(norm), step=step)
    return m
