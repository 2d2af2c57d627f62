"""Dense Hermitian spectral linear algebra.

Every other module goes through these helpers so that a single eigenvalue
flooring rule decides what counts as "numerically zero".  Matrices are plain
:class:`numpy.ndarray` objects; real symmetric input stays real.
"""
from __future__ import annotations

from typing import Callable, NamedTuple

import numpy as np
from scipy.special import logsumexp

from .errors import DomainError, InvalidInput, ShapeError

__all__ = [
    "SpectralDecomposition",
    "hermitian",
    "eigh",
    "eigvalsh",
    "floor_threshold",
    "spectral_fn",
    "matrix_log",
    "matrix_sqrt",
    "log_trace_exp",
    "xlogx_trace",
]

EPS = np.finfo(float).eps


class SpectralDecomposition(NamedTuple):
    """Eigenpairs of a Hermitian matrix, eigenvalues in ascending order."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        u, lam = self.eigenvectors, self.eigenvalues
        return (u * lam) @ u.conj().T

    @property
    def dim(self) -> int:
        return self.eigenvalues.shape[0]


def hermitian(a) -> np.ndarray:
    """Validate a square matrix and return its Hermitian part ``(A + A*)/2``."""
    a = np.asarray(a)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeError(f"expected a square matrix, got shape {a.shape}")
    if not np.issubdtype(a.dtype, np.number):
        raise InvalidInput(f"non-numeric matrix dtype {a.dtype}")
    if not np.all(np.isfinite(a)):
        raise InvalidInput("matrix has non-finite entries")
    if np.iscomplexobj(a):
        a = a.astype(complex, copy=False)
        if not np.any(a.imag):
            a = a.real
    else:
        a = a.astype(float, copy=False)
    return 0.5 * (a + a.conj().T)


def eigh(a) -> SpectralDecomposition:
    """Eigendecomposition of a Hermitian matrix.

    The input is symmetrized first, so tiny asymmetries from round-off are
    harmless.  Eigenvalues are returned in ascending order.
    """
    a = hermitian(a)
    lam, u = np.linalg.eigh(a)
    return SpectralDecomposition(lam, u)


def eigvalsh(a) -> np.ndarray:
    return np.linalg.eigvalsh(hermitian(a))


def floor_threshold(eigenvalues) -> float:
    """Eigenvalues at or below this value are treated as exact zeros.

    ``dim * eps * max(lambda_max, 1)``.
    """
    lam = np.asarray(eigenvalues)
    if lam.size == 0:
        return 0.0
    return lam.size * EPS * max(float(np.max(lam)), 1.0)


def spectral_fn(a, f: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """Apply the scalar function ``f`` to the eigenvalues of ``a``.

    Returns ``U diag(f(lambda)) U*``.  For logarithms use :func:`matrix_log`,
    which applies the flooring rule first.

    Raises
    ------
    DomainError
        If ``f`` is non-finite at one of the eigenvalues.
    """
    lam, u = eigh(a)
    with np.errstate(all="ignore"):
        flam = np.asarray(f(lam))
    if flam.shape != lam.shape:
        raise InvalidInput("f must act elementwise on the eigenvalue vector")
    if not np.all(np.isfinite(flam)):
        bad = lam[~np.isfinite(flam)]
        raise DomainError(f"f is undefined at eigenvalue(s) {bad[:4]}")
    return (u * flam) @ u.conj().T


def matrix_log(a) -> tuple[np.ndarray, int]:
    """Matrix logarithm of a PSD matrix with eigenvalue flooring.

    Eigenvalues below :func:`floor_threshold` are clipped to the threshold.

    Returns
    -------
    log_a : ndarray
    n_clipped : int
        How many eigenvalues were clipped.
    """
    lam, u = eigh(a)
    tau = floor_threshold(lam)
    if tau == 0.0:
        tau = np.finfo(float).tiny
    clipped = lam <= tau
    lam = np.where(clipped, tau, lam)
    return (u * np.log(lam)) @ u.conj().T, int(clipped.sum())


def matrix_sqrt(a) -> np.ndarray:
    """Principal square root of a PSD matrix (negative round-off clipped to 0)."""
    lam, u = eigh(a)
    return (u * np.sqrt(np.clip(lam, 0.0, None))) @ u.conj().T


def log_trace_exp(a) -> float:
    """``log tr exp(A)`` with a max-shift so that large eigenvalues do not overflow."""
    return float(logsumexp(eigvalsh(a)))


def xlogx_trace(eigenvalues) -> float:
    """``sum lambda log lambda`` with the ``0 log 0 = 0`` convention after flooring."""
    lam = np.asarray(eigenvalues, dtype=float)
    tau = floor_threshold(lam)
    lam = lam[lam > tau]
    return float(np.sum(lam * np.log(lam)))
