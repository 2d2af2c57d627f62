"""Von Neumann entropy, quantum relative entropy and operator f-divergences.

All functionals are evaluated through eigendecompositions.  The relative
entropy uses the overlap form

    D(A || B) = sum_i a_i log a_i - sum_ij a_i |<u_i, v_j>|^2 log b_j

with ``A = sum a_i u_i u_i*`` and ``B = sum b_j v_j v_j*``, which stays
accurate when both operators have eigenvalues close to zero.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from . import linops
from .errors import IllConditioned, InvalidInput, NotPSD, ShapeError
from .quadrature import IntegrationPlan

__all__ = [
    "DensityOperator",
    "DivergenceKind",
    "von_neumann_entropy",
    "relative_entropy",
    "f_divergence",
    "relative_entropy_integral",
    "kernel_entropy",
]

PSD_RTOL = 1e-10
# squared overlap with the null space of B above which D(A||B) is infinite
SUPPORT_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class DensityOperator:
    """A Hermitian PSD matrix expressed in a named feature basis.

    Parameters
    ----------
    matrix : array_like
        Square Hermitian matrix; symmetrized on construction.
    basis_tag : str
        Free-form name of the basis (e.g. ``"fourier:r=20"``).
    normalized : bool
        If True the trace must be within ``trace_tolerance`` of one.
    """

    matrix: np.ndarray
    basis_tag: str = ""
    normalized: bool = False
    trace_tolerance: float = 1e-8

    def __post_init__(self):
        m = linops.hermitian(self.matrix)
        object.__setattr__(self, "matrix", m)
        lam = np.linalg.eigvalsh(m)
        _check_psd(lam)
        if self.normalized and abs(float(np.sum(lam)) - 1.0) > self.trace_tolerance:
            raise InvalidInput(f"normalized density operator has trace {np.sum(lam):.12g}")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def trace(self) -> float:
        return float(np.real(np.trace(self.matrix)))

    def spectrum(self) -> linops.SpectralDecomposition:
        return linops.eigh(self.matrix)


class DivergenceKind(enum.Enum):
    KL = "kl"
    SquaredHellinger = "squared_hellinger"
    PearsonChi2 = "pearson_chi2"
    ReversePearsonChi2 = "reverse_pearson_chi2"
    VinczeLeCam = "vincze_le_cam"


def _generator(kind: DivergenceKind):
    if kind is DivergenceKind.KL:
        return lambda t: -np.log(t)
    if kind is DivergenceKind.SquaredHellinger:
        return lambda t: 1.0 - np.sqrt(t)
    if kind is DivergenceKind.ReversePearsonChi2:
        return lambda t: (t - 1.0) ** 2
    if kind is DivergenceKind.PearsonChi2:
        return lambda t: (t - 1.0) ** 2 / t
    if kind is DivergenceKind.VinczeLeCam:
        return lambda t: (t - 1.0) ** 2 / (1.0 + t)
    raise InvalidInput(f"unknown divergence kind {kind!r}")


def _as_matrix(a) -> np.ndarray:
    if isinstance(a, DensityOperator):
        return a.matrix
    return linops.hermitian(a)


def _check_psd(lam: np.ndarray) -> None:
    if lam.size and lam[0] < -PSD_RTOL * max(1.0, float(lam[-1])):
        raise NotPSD(f"smallest eigenvalue {lam[0]:.3e} is negative")


def _psd_spectrum(a):
    lam, u = linops.eigh(_as_matrix(a))
    _check_psd(lam)
    return lam, u


def von_neumann_entropy(a) -> float:
    """``-tr[A log A]`` with the ``0 log 0 = 0`` convention.

    Parameters
    ----------
    a : DensityOperator or array_like
        Positive semi-definite operator.

    Raises
    ------
    NotPSD
        If an eigenvalue is negative beyond round-off.
    """
    lam, _ = _psd_spectrum(a)
    return -linops.xlogx_trace(lam)


def _overlaps(a, b):
    am, bm = _as_matrix(a), _as_matrix(b)
    if am.shape != bm.shape:
        raise ShapeError(f"dimension mismatch {am.shape} vs {bm.shape}")
    alpha, u = _psd_spectrum(am)
    beta, v = _psd_spectrum(bm)
    w = np.abs(u.conj().T @ v) ** 2
    return alpha, beta, w


def relative_entropy(a, b) -> float:
    """Quantum relative entropy ``D(A || B) = tr[A (log A - log B)]``.

    Returns ``math.inf`` when the support of ``A`` is not contained in the
    support of ``B``.  No trace correction is applied, so for operators with
    different traces the value may be negative.
    """
    alpha, beta, w = _overlaps(a, b)
    ta, tb = linops.floor_threshold(alpha), linops.floor_threshold(beta)
    rows = alpha > ta
    if not np.any(rows):
        return 0.0
    alpha, w = alpha[rows], w[rows]
    live = beta > tb
    if np.any(w[:, ~live].sum(axis=1) > SUPPORT_TOL):
        return math.inf
    cross = w[:, live] @ np.log(beta[live])
    return float(np.sum(alpha * np.log(alpha)) - np.sum(alpha * cross))


def f_divergence(a, b, kind: DivergenceKind = DivergenceKind.KL) -> float:
    """Operator f-divergence ``<A^1/2, f(L_B R_A^-1) A^1/2>``.

    Evaluated as ``sum_ij f(b_j / a_i) a_i |<u_i, v_j>|^2`` over the support
    of ``A``.  Generators singular at ``t = 0`` (KL, Pearson) return
    ``math.inf`` when ``A`` charges the null space of ``B``.
    """
    kind = DivergenceKind(kind)
    if kind is DivergenceKind.KL:
        return relative_entropy(a, b)
    f = _generator(kind)
    alpha, beta, w = _overlaps(a, b)
    ta, tb = linops.floor_threshold(alpha), linops.floor_threshold(beta)
    rows = alpha > ta
    alpha, w = alpha[rows], w[rows]
    beta = np.where(beta > tb, beta, 0.0)
    t = beta[None, :] / alpha[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        ft = f(t)
    singular = ~np.isfinite(ft)
    if np.any(w[singular] > SUPPORT_TOL):
        return math.inf
    ft = np.where(singular, 0.0, ft)
    return float(np.sum(ft * w * alpha[:, None]))


def relative_entropy_integral(a, b, plan: IntegrationPlan | None = None) -> float:
    """Relative entropy through the resolvent integral

        D(A || B) = -int_0^inf ( tr[A (A + l I)^-1] - tr[A (B + l I)^-1] ) dl.

    This path never takes a matrix logarithm; it exists as an independent
    check of :func:`relative_entropy`.  Both operators must be strictly
    positive.  The integral is computed by adaptive quadrature in ``log l``
    up to ``l_cut = 1e6 * lambda_max``; beyond that the integrand is
    ``(tr[AB] - tr[A^2]) / l^2 + O(l^-3)`` and the tail is added in closed form.

    Parameters
    ----------
    plan : IntegrationPlan, optional
        ``plan.resolution`` bounds the number of adaptive subintervals.
    """
    am, bm = _as_matrix(a), _as_matrix(b)
    if am.shape != bm.shape:
        raise ShapeError(f"dimension mismatch {am.shape} vs {bm.shape}")
    plan = plan or IntegrationPlan()
    n = am.shape[0]
    lmin = min(np.linalg.eigvalsh(am)[0], np.linalg.eigvalsh(bm)[0])
    if lmin <= 1e-8:
        raise IllConditioned("integral representation needs strictly positive operators")
    lmax = max(np.abs(np.diag(am)).max(), np.abs(np.diag(bm)).max(), np.linalg.norm(am, 2))
    eye = np.eye(n)

    def integrand(lam):
        ra = np.trace(np.linalg.solve(am + lam * eye, am))
        rb = np.trace(np.linalg.solve(bm + lam * eye, am))
        return float(np.real(ra - rb))

    lo = 1e-6 * lmin
    cut = 1e6 * lmax
    body, _ = integrate.quad(
        lambda s: integrand(math.exp(s)) * math.exp(s),
        math.log(lo),
        math.log(cut),
        limit=max(50, plan.resolution // 8),
        epsabs=1e-13,
        epsrel=1e-11,
    )
    head = integrand(0.0) * lo + 0.5 * (integrand(lo) - integrand(0.0)) * lo
    tail = float(np.real(np.trace(am @ bm) - np.trace(am @ am))) / cut
    return -(head + body + tail)


def kernel_entropy(sigma_p, sigma_base, min_diag_log_sigma: float) -> float:
    """Kernel entropy ``-tr[S_p log S_p] + tr[S_p log S] - min_x <phi(x), log S phi(x)>``.

    Parameters
    ----------
    sigma_p, sigma_base : DensityOperator or array_like
        Covariance operators of ``p`` and of the base measure, same basis.
    min_diag_log_sigma : float
        Minimum over the domain of ``<phi(x), (log S) phi(x)>``; see
        :func:`kite.kernels.min_diag_log_sigma`.
    """
    p = _as_matrix(sigma_p)
    s = _as_matrix(sigma_base)
    if p.shape != s.shape:
        raise ShapeError(f"dimension mismatch {p.shape} vs {s.shape}")
    lam_p, _ = _psd_spectrum(p)
    beta, v = _psd_spectrum(s)
    tb = linops.floor_threshold(beta)
    live = beta > tb
    proj = np.real(np.einsum("ij,jk,ki->i", v.conj().T, p, v))
    if np.any(proj[~live] > SUPPORT_TOL):
        return -math.inf
    cross = float(np.sum(proj[live] * np.log(beta[live])))
    return -linops.xlogx_trace(lam_p) + cross - float(min_diag_log_sigma)
