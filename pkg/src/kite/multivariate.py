"""Kernel entropies and mutual information on finite product spaces.

Each factor ``X_i`` is a finite set with a Gram matrix ``K_i``; features are
``phi_i(x) = K_i^1/2 e_x`` and the joint feature is their Kronecker product,
so the joint covariance is ``S Diag(vec p) S`` with ``S = kron(K_1^1/2, ...)``.
Entropies use the uniform product base measure.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from typing import NamedTuple, Sequence

import numpy as np

from . import linops, quantum
from .errors import InvalidInput, ShapeError
from .kernels import FiniteFeatureMap, FiniteGram, gram_matrix

__all__ = [
    "MAX_DIM",
    "JointDistribution",
    "joint_covariance",
    "marginal",
    "partial_trace",
    "joint_entropy",
    "shannon_entropy",
    "kernel_mutual_information",
    "shannon_mutual_information",
    "DataProcessingResult",
    "data_processing_check",
    "submodularity_check",
    "sample_mutual_information",
]

MAX_DIM = 4096


@dataclass(frozen=True, eq=False)
class JointDistribution:
    """Probability table over ``X_1 x ... x X_k`` with one finite kernel per factor.

    ``kernels`` defaults to identity Grams (orthonormal embeddings).
    """

    table: np.ndarray
    kernels: tuple = ()

    def __post_init__(self):
        t = np.asarray(self.table, dtype=float)
        if t.ndim < 1 or not np.all(np.isfinite(t)) or np.any(t < 0):
            raise InvalidInput("joint table must be a finite nonnegative array")
        if abs(t.sum() - 1.0) > 1e-12:
            raise InvalidInput(f"joint table sums to {t.sum():.15g}, not 1")
        ks = tuple(self.kernels) or tuple(FiniteGram(np.eye(n)) for n in t.shape)
        ks = tuple(k if isinstance(k, FiniteGram) else FiniteGram(np.asarray(k)) for k in ks)
        if len(ks) != t.ndim or any(k.size != n for k, n in zip(ks, t.shape)):
            raise ShapeError("one Gram matrix per table axis, matching its length")
        object.__setattr__(self, "table", t)
        object.__setattr__(self, "kernels", ks)

    @property
    def shape(self) -> tuple:
        return self.table.shape

    @property
    def dim(self) -> int:
        return int(np.prod(self.shape))


def _roots(joint: JointDistribution):
    return [FiniteFeatureMap(k).root for k in joint.kernels]


def joint_covariance(joint: JointDistribution) -> np.ndarray:
    """Covariance operator in the product basis (unit trace).

    Raises
    ------
    ShapeError
        If the product dimension exceeds ``MAX_DIM``.
    """
    if joint.dim > MAX_DIM:
        raise ShapeError(f"product dimension {joint.dim} exceeds {MAX_DIM}")
    s = reduce(np.kron, _roots(joint))
    p = joint.table.ravel()
    return linops.hermitian((s * p[None, :]) @ s.conj().T)


def marginal(joint: JointDistribution, keep: Sequence[int]) -> JointDistribution:
    """Marginal over the factors listed in ``keep`` (in that order)."""
    keep = list(keep)
    if sorted(set(keep)) != sorted(keep) or any(not 0 <= a < joint.table.ndim for a in keep):
        raise InvalidInput("keep must list distinct factor indices")
    drop = tuple(a for a in range(joint.table.ndim) if a not in keep)
    t = joint.table.sum(axis=drop) if drop else joint.table
    order = np.argsort(np.argsort(keep))
    t = np.transpose(t, order) if t.ndim > 1 else t
    return JointDistribution(t / t.sum(), tuple(joint.kernels[a] for a in keep))


def partial_trace(matrix: np.ndarray, dims: Sequence[int], keep: Sequence[int]) -> np.ndarray:
    """Trace out every factor not in ``keep`` from an operator on ``kron`` of ``dims``."""
    dims = [int(d) for d in dims]
    k = len(dims)
    m = np.asarray(matrix).reshape(dims + dims)
    keep = sorted(keep)
    for a in sorted(set(range(k)) - set(keep), reverse=True):
        m = np.trace(m, axis1=a, axis2=a + m.ndim // 2)
    n = int(np.prod([dims[a] for a in keep])) if keep else 1
    return m.reshape(n, n)


def _factor_terms(joint: JointDistribution) -> float:
    """``sum_i (tr[S_{p_i} log S_i] - min_x <phi_i(x), log S_i phi_i(x)>)`` for the uniform base."""
    total = 0.0
    for a, k in enumerate(joint.kernels):
        fmap = FiniteFeatureMap(k)
        m = k.size
        base = fmap.covariance(np.full(m, 1.0 / m))
        log_b, _ = linops.matrix_log(base)
        diag = np.real(np.einsum("ni,ij,nj->n", fmap.root.conj(), log_b, fmap.root))
        p_a = marginal(joint, [a]).table
        total += float(p_a @ diag) - float(diag.min())
    return total


def joint_entropy(joint: JointDistribution) -> float:
    """Kernel entropy of the joint covariance against the uniform product base.

    With a product base the cross term and the minimal diagonal both split
    over factors, so they are evaluated factor by factor.
    """
    return quantum.von_neumann_entropy(joint_covariance(joint)) + _factor_terms(joint)


def shannon_entropy(table) -> float:
    t = np.asarray(table, dtype=float).ravel()
    t = t[t > 0]
    return float(-np.sum(t * np.log(t)))


def kernel_mutual_information(joint: JointDistribution) -> float:
    """``D(S_{X_1...X_k} || S_{X_1} x ... x S_{X_k})``."""
    full = joint_covariance(joint)
    parts = [joint_covariance(marginal(joint, [a])) for a in range(joint.table.ndim)]
    return quantum.relative_entropy(full, reduce(np.kron, parts))


def shannon_mutual_information(table) -> float:
    t = np.asarray(table, dtype=float)
    prod = reduce(np.multiply.outer, [t.sum(axis=tuple(b for b in range(t.ndim) if b != a))
                                      for a in range(t.ndim)])
    pos = t > 0
    return float(np.sum(t[pos] * np.log(t[pos] / prod[pos])))


class DataProcessingResult(NamedTuple):
    d_joint: float
    d_marginal: float
    holds: bool


def data_processing_check(joint_p: JointDistribution, joint_q: JointDistribution,
                          tol: float = 1e-8) -> DataProcessingResult:
    """Compare ``D(S_p12 || S_q12)`` with ``D(S_p1 || S_q1)``.

    The factor-1 operators are obtained by tracing out factor 2.
    """
    if joint_p.shape != joint_q.shape or len(joint_p.shape) != 2:
        raise ShapeError("data processing needs two tables of the same 2-D shape")
    if any(not np.allclose(a.gram, b.gram, atol=1e-12) for a, b in zip(joint_p.kernels, joint_q.kernels)):
        raise InvalidInput("both joints must use the same factor kernels")
    cp, cq = joint_covariance(joint_p), joint_covariance(joint_q)
    d_joint = quantum.relative_entropy(cp, cq)
    d_marg = quantum.relative_entropy(partial_trace(cp, joint_p.shape, [0]),
                                      partial_trace(cq, joint_q.shape, [0]))
    return DataProcessingResult(d_joint, d_marg, bool(d_joint >= d_marg - tol))


def submodularity_check(joint: JointDistribution) -> float:
    """``H(123) - H(12) - H(23) + H(2)``; nonpositive for every distribution."""
    if joint.table.ndim != 3:
        raise ShapeError("submodularity is checked on three factors")
    h = lambda keep: joint_entropy(marginal(joint, keep))  # noqa: E731
    return h([0, 1, 2]) - h([0, 1]) - h([1, 2]) + h([1])


def sample_mutual_information(factor_points: Sequence, factor_kernels: Sequence) -> float:
    """Sample estimate ``tr G log G - sum_i tr G_i log G_i`` from paired samples.

    ``G_i = K_i / n`` are the factor Grams and ``G`` is their Hadamard
    product, the Gram of the product kernel.
    """
    if len(factor_points) != len(factor_kernels) or len(factor_points) < 2:
        raise InvalidInput("need matching points and kernels for at least two factors")
    grams = [gram_matrix(k, p) for k, p in zip(factor_kernels, factor_points)]
    n = grams[0].shape[0]
    if any(g.shape != (n, n) for g in grams):
        raise ShapeError("factor samples must be paired (same length)")
    joint = reduce(np.multiply, grams) / n
    return -quantum.von_neumann_entropy(joint) + sum(quantum.von_neumann_entropy(g / n) for g in grams)
