"""Closed-form kernels, explicit feature maps and base-measure covariances.

The torus kernel used throughout is the exponential-decay kernel

    k(x, y) = prod_j 1 / (1 + sin^2(pi (x_j - y_j)) / sinh^2(sigma / 2)),

whose Fourier coefficients are ``tanh(sigma/2)^d exp(-sigma |omega|_1)``.
Feature maps return complex matrices with one row per point and one column
per frequency, with the convention ``psi_omega(x) = khat(omega)^1/2 exp(-2 i pi omega x)``
so that covariance matrices carry ``phat(omega - omega')`` on their diagonals.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import linops
from .errors import DomainError, InvalidInput, ShapeError
from .quantum import DensityOperator

__all__ = [
    "KernelSpec",
    "TorusExp",
    "FiniteGram",
    "GaussianOnInterval",
    "Product",
    "FourierFeatureMap",
    "FiniteFeatureMap",
    "HypercubeFeatureMap",
    "default_truncation",
    "kernel_eval",
    "fourier_coefficient",
    "gram_matrix",
    "base_covariance_spectrum",
    "smoothing_kernel_h",
    "min_diag_log_sigma",
    "khat_entropy_closed_form",
]

# k_hat(r) / k_hat(0) = exp(-sigma r) drops below this for the default truncation
TAIL_RATIO = 1e-14


def default_truncation(sigma: float) -> int:
    """Smallest ``r`` with ``exp(-sigma r) < 1e-14``."""
    return int(math.ceil(-math.log(TAIL_RATIO) / sigma))


class KernelSpec:
    """Marker base class of the kernel variants."""


@dataclass(frozen=True)
class TorusExp(KernelSpec):
    sigma: float
    dims: int = 1
    r: int | None = None

    def __post_init__(self):
        if not (np.isfinite(self.sigma) and self.sigma > 0):
            raise InvalidInput("sigma must be positive")
        if int(self.dims) != self.dims or self.dims < 1:
            raise InvalidInput("dims must be a positive integer")
        if self.r is not None and (int(self.r) != self.r or self.r < 0):
            raise InvalidInput("r must be a nonnegative integer")

    @property
    def truncation(self) -> int:
        return default_truncation(self.sigma) if self.r is None else int(self.r)


@dataclass(frozen=True, eq=False)
class FiniteGram(KernelSpec):
    """Kernel on ``{0, ..., m-1}`` given by its Gram matrix and base weights."""

    gram: np.ndarray
    base_weights: np.ndarray | None = None

    def __post_init__(self):
        k = linops.hermitian(self.gram)
        if np.max(np.abs(np.diag(k) - 1.0)) > 1e-10:
            raise InvalidInput("finite Gram must have unit diagonal")
        lam = np.linalg.eigvalsh(k)
        if lam[0] < -1e-9 * k.shape[0]:
            raise InvalidInput("finite Gram is not positive semi-definite")
        m = k.shape[0]
        w = np.full(m, 1.0 / m) if self.base_weights is None else _probability(self.base_weights, m)
        object.__setattr__(self, "gram", k)
        object.__setattr__(self, "base_weights", w)

    @property
    def size(self) -> int:
        return self.gram.shape[0]


@dataclass(frozen=True)
class GaussianOnInterval(KernelSpec):
    """``exp(-(x - y)^2 / (2 sigma^2))`` on ``[0, 1]``; sample-based use only."""

    sigma: float

    def __post_init__(self):
        if not (np.isfinite(self.sigma) and self.sigma > 0):
            raise InvalidInput("sigma must be positive")


@dataclass(frozen=True)
class Product(KernelSpec):
    """Tensor product of kernels; points are tuples with one entry per factor."""

    factors: tuple = field(default_factory=tuple)

    def __post_init__(self):
        fs = tuple(self.factors)
        if not fs or not all(isinstance(f, KernelSpec) for f in fs):
            raise InvalidInput("Product needs at least one KernelSpec factor")
        object.__setattr__(self, "factors", fs)


def _probability(w, m=None) -> np.ndarray:
    w = np.asarray(w, dtype=float).ravel()
    if m is not None and w.shape[0] != m:
        raise ShapeError(f"expected {m} weights, got {w.shape[0]}")
    if not np.all(np.isfinite(w)) or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
        raise InvalidInput("weights must be a probability vector")
    return w


def _torus_points(x, dims: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if dims == 1 and x.ndim <= 1:
        x = x.reshape(-1, 1)
    if x.ndim == 1:
        x = x.reshape(1, -1)
    if x.shape[-1] != dims:
        raise DomainError(f"torus points must have {dims} coordinates")
    if not np.all(np.isfinite(x)):
        raise DomainError("torus points must be finite")
    return x


def _torus_profile(delta: np.ndarray, sigma: float) -> np.ndarray:
    s = np.sinh(0.5 * sigma)
    return np.prod(1.0 / (1.0 + np.sin(np.pi * delta) ** 2 / s**2), axis=-1)


def _finite_index(i, m: int) -> np.ndarray:
    i = np.asarray(i)
    if not np.issubdtype(i.dtype, np.integer):
        if np.any(i != np.round(i)):
            raise DomainError("finite-set points must be integer indices")
        i = i.astype(int)
    if np.any(i < 0) or np.any(i >= m):
        raise DomainError(f"index out of range for a set of size {m}")
    return i


def kernel_eval(spec: KernelSpec, x, y) -> float:
    """Evaluate ``k(x, y)`` for a single pair of points."""
    if isinstance(spec, TorusExp):
        d = _torus_points(x, spec.dims) - _torus_points(y, spec.dims)
        return float(_torus_profile(d, spec.sigma)[0])
    if isinstance(spec, FiniteGram):
        i, j = _finite_index(x, spec.size), _finite_index(y, spec.size)
        return float(np.real(spec.gram[i, j]))
    if isinstance(spec, GaussianOnInterval):
        x, y = float(x), float(y)
        if not (0.0 <= x <= 1.0 and 0.0 <= y <= 1.0):
            raise DomainError("GaussianOnInterval points must lie in [0, 1]")
        return math.exp(-((x - y) ** 2) / (2.0 * spec.sigma**2))
    if isinstance(spec, Product):
        if len(x) != len(spec.factors) or len(y) != len(spec.factors):
            raise DomainError("product-kernel points need one coordinate per factor")
        return math.prod(kernel_eval(f, a, b) for f, a, b in zip(spec.factors, x, y))
    raise InvalidInput(f"unsupported kernel {spec!r}")


def fourier_coefficient(spec: TorusExp, omega) -> np.ndarray | float:
    """``tanh(sigma/2)^d exp(-sigma |omega|_1)``; vectorized over leading axes."""
    if not isinstance(spec, TorusExp):
        raise InvalidInput("Fourier coefficients exist only for TorusExp")
    om = np.asarray(omega)
    if spec.dims == 1 and (om.ndim == 0 or om.shape[-1] != 1):
        l1 = np.abs(om)
    else:
        if om.shape[-1] != spec.dims:
            raise ShapeError(f"frequency must have {spec.dims} components")
        l1 = np.abs(om).sum(axis=-1)
    out = math.tanh(0.5 * spec.sigma) ** spec.dims * np.exp(-spec.sigma * l1)
    return float(out) if np.ndim(out) == 0 else out


def khat_entropy_closed_form(sigma: float) -> float:
    """Closed form of ``sum_omega khat log khat`` for the 1-D torus kernel."""
    return math.log(math.tanh(0.5 * sigma)) - sigma / math.sinh(sigma)


def gram_matrix(spec: KernelSpec, points) -> np.ndarray:
    """Kernel matrix ``K_ij = k(x_i, x_j)``.

    For :class:`Product` kernels ``points`` is a sequence with one array of
    points per factor and the result is the Hadamard product of factor Grams.
    """
    if isinstance(spec, TorusExp):
        x = _torus_points(points, spec.dims)
        return _torus_profile(x[:, None, :] - x[None, :, :], spec.sigma)
    if isinstance(spec, FiniteGram):
        i = _finite_index(points, spec.size).ravel()
        return spec.gram[np.ix_(i, i)]
    if isinstance(spec, GaussianOnInterval):
        x = np.asarray(points, dtype=float).ravel()
        if np.any(x < 0) or np.any(x > 1):
            raise DomainError("GaussianOnInterval points must lie in [0, 1]")
        return np.exp(-((x[:, None] - x[None, :]) ** 2) / (2.0 * spec.sigma**2))
    if isinstance(spec, Product):
        if len(points) != len(spec.factors):
            raise DomainError("need one point array per product factor")
        grams = [gram_matrix(f, p) for f, p in zip(spec.factors, points)]
        if len({g.shape for g in grams}) != 1:
            raise ShapeError("factor point arrays have different lengths")
        out = grams[0]
        for g in grams[1:]:
            out = out * g
        return out
    raise InvalidInput(f"unsupported kernel {spec!r}")


class FourierFeatureMap:
    """Truncated Fourier features of :class:`TorusExp`, all ``|omega|_inf <= r``.

    Parameters
    ----------
    sigma : float
    r : int, optional
        Maximum frequency per dimension; :func:`default_truncation` if omitted.
    dims : int
    normalized : bool
        Rescale the weights so that ``|psi(x)|^2 = 1``.
    eta : array_like, optional
        Replace ``khat`` by arbitrary nonnegative squared weights (learned kernels).
    """

    def __init__(self, sigma: float, r: int | None = None, dims: int = 1,
                 normalized: bool = False, eta=None):
        self.spec = TorusExp(sigma, dims, r)
        self.sigma = float(sigma)
        self.dims = int(dims)
        self.r = self.spec.truncation
        axis = np.arange(-self.r, self.r + 1)
        self.frequencies = np.array(list(itertools.product(axis, repeat=self.dims)), dtype=int)
        if eta is None:
            sq = fourier_coefficient(self.spec, self.frequencies)
        else:
            sq = np.asarray(eta, dtype=float).ravel()
            if sq.shape[0] != self.frequencies.shape[0] or np.any(sq < 0):
                raise InvalidInput("eta must be a nonnegative vector with one entry per frequency")
        self.normalized = bool(normalized)
        if self.normalized:
            sq = sq / sq.sum()
        self.squared_weights = np.asarray(sq, dtype=float)
        self.weights = np.sqrt(self.squared_weights)

    @classmethod
    def from_spec(cls, spec: TorusExp, normalized: bool = False) -> "FourierFeatureMap":
        return cls(spec.sigma, spec.r, spec.dims, normalized)

    @property
    def dim(self) -> int:
        return self.frequencies.shape[0]

    @property
    def squared_norm(self) -> float:
        """``|psi(x)|^2``, the same for every ``x``."""
        return float(self.squared_weights.sum())

    def features(self, points) -> np.ndarray:
        x = _torus_points(points, self.dims)
        phase = np.exp(-2j * np.pi * (x @ self.frequencies.T))
        return phase * self.weights[None, :]

    def basis_tag(self) -> str:
        return f"fourier:d={self.dims}:r={self.r}"


class FiniteFeatureMap:
    """Features ``phi(i) = K^1/2 e_i`` on a finite set, so that ``<phi(i), phi(j)> = K_ij``."""

    def __init__(self, spec: FiniteGram):
        self.spec = spec
        self.root = linops.matrix_sqrt(spec.gram)

    @property
    def dim(self) -> int:
        return self.spec.size

    def features(self, points) -> np.ndarray:
        i = _finite_index(points, self.spec.size).ravel()
        return self.root[i].conj()

    def covariance(self, probabilities) -> np.ndarray:
        """``sum_i p_i phi(i) phi(i)* = K^1/2 Diag(p) K^1/2``."""
        p = np.asarray(probabilities, dtype=float).ravel()
        if p.shape[0] != self.dim:
            raise ShapeError("probability vector does not match the set size")
        return linops.hermitian((self.root * p[None, :]) @ self.root.conj().T)

    def basis_tag(self) -> str:
        return f"finite:m={self.dim}"


class HypercubeFeatureMap:
    """``phi(x) = Diag(eta)^1/2 (x, 1)`` on ``{-1, 1}^d``."""

    def __init__(self, d: int, eta=None):
        self.d = int(d)
        if self.d < 1:
            raise InvalidInput("d must be positive")
        eta = np.full(self.d + 1, 1.0 / (self.d + 1)) if eta is None else eta
        self.eta = _probability(eta, self.d + 1)

    @property
    def dim(self) -> int:
        return self.d + 1

    def features(self, points) -> np.ndarray:
        x = np.atleast_2d(np.asarray(points, dtype=float))
        if x.shape[1] != self.d or np.any(np.abs(x) != 1):
            raise DomainError("hypercube points must have entries in {-1, 1}")
        aug = np.hstack([x, np.ones((x.shape[0], 1))])
        return aug * np.sqrt(self.eta)[None, :]


def base_covariance_spectrum(fmap: FourierFeatureMap) -> DensityOperator:
    """Covariance of the uniform measure: ``Diag(khat)`` restricted to the frequencies of ``fmap``."""
    if not isinstance(fmap, FourierFeatureMap):
        raise InvalidInput("closed-form base covariance requires a FourierFeatureMap")
    return DensityOperator(np.diag(fmap.squared_weights), fmap.basis_tag(), normalized=fmap.normalized)


def smoothing_kernel_h(sigma: float, delta) -> np.ndarray | float:
    """Closed form of ``<phi(x), Sigma^-1/2 phi(y)>^2`` for the torus kernel, ``delta = x - y``."""
    if not sigma > 0:
        raise InvalidInput("sigma must be positive")
    d = np.asarray(delta, dtype=float)
    q = math.sinh(0.25 * sigma)
    peak = math.tanh(0.5 * sigma) / math.tanh(0.25 * sigma) ** 2
    out = peak / (1.0 + np.sin(np.pi * d) ** 2 / q**2) ** 2
    return float(out) if out.ndim == 0 else out


def min_diag_log_sigma(fmap, base, grid: Sequence | None = None) -> float:
    """``min_x <phi(x), (log Sigma) phi(x)>``.

    Torus maps with a diagonal base covariance and finite maps are handled
    exactly (the diagonal function is constant for the former; the latter is
    minimized over every point).  Other maps require ``grid``, and the result
    is the minimum over the grid, an upper estimate of the true minimum.
    """
    sigma = base.matrix if isinstance(base, DensityOperator) else linops.hermitian(base)
    if isinstance(fmap, FourierFeatureMap) and not np.any(sigma - np.diag(np.diag(sigma))):
        beta = np.real(np.diag(sigma))
        live = fmap.squared_weights > 0
        # the diagonal is exact here, so tiny tail coefficients are kept
        if np.any(beta[live] <= 0):
            raise DomainError("base covariance vanishes on the feature span")
        return float(np.sum(fmap.squared_weights[live] * np.log(beta[live])))
    if isinstance(fmap, FiniteFeatureMap):
        grid = np.arange(fmap.dim)
    if grid is None or len(grid) == 0:
        raise InvalidInput("a non-empty grid is required for this feature map")
    log_s, clipped = linops.matrix_log(sigma)
    phi = fmap.features(grid)
    diag = np.real(np.einsum("ni,ij,nj->n", phi.conj(), log_s, phi))
    return float(np.min(diag))
