"""Estimators of kernel entropies and divergences.

Two estimation routes are provided:

* the sample path, which only needs a kernel matrix on i.i.d. samples and
  returns ``tr[G log G]`` with ``G = W^1/2 K W^1/2``;
* the projection path, which projects covariance operators onto the span of
  landmark features and needs the kernel integrals
  ``int k(x_i, x) k(x, x_j) p(x) dx``, computed by quadrature.

Densities on ``[0, 1]^d`` (``d`` at most 2) are described by small oracle
classes that expose point values, kinks, and a sampler.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy import linalg as sla

from . import linops, quantum
from .errors import DomainError, IllConditioned, InvalidInput, ShapeError
from .kernels import (
    FiniteGram,
    FourierFeatureMap,
    KernelSpec,
    TorusExp,
    gram_matrix,
    khat_entropy_closed_form,
    smoothing_kernel_h,
)
from .quadrature import IntegrationPlan, interval_rule
from .quantum import DensityOperator

__all__ = [
    "SampleSet",
    "DensityOracle",
    "Uniform",
    "NamedDensity",
    "Tabulated",
    "Mixture",
    "IntegrationPlan",
    "replication_rng",
    "empirical_entropy_gram",
    "quadrature_covariance",
    "quadrature_negentropy",
    "shannon_negentropy",
    "ProjectionEstimate",
    "projection_estimator",
    "degrees_of_freedom",
    "dof_upper_bound",
    "SandwichResult",
    "sandwich_truncation",
    "sandwich_check",
    "mean_embedding_check",
]

SANDWICH_SLACK = 1e-6
POSITIVITY_FLOOR = 1e-6


def replication_rng(seed: int, replication: int = 0) -> np.random.Generator:
    """Counter-based generator for replication ``replication`` of master seed ``seed``.

    Streams for different replications are independent, so replications can
    run in any order or concurrently.
    """
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(replication)])))


@dataclass(frozen=True, eq=False)
class SampleSet:
    """Points with optional probability weights (uniform ``1/n`` by default)."""

    points: np.ndarray
    weights: np.ndarray | None = None

    def __post_init__(self):
        pts = np.asarray(self.points)
        n = pts.shape[0] if pts.ndim else 1
        if n < 1:
            raise InvalidInput("a sample set needs at least one point")
        if self.weights is None:
            w = np.full(n, 1.0 / n)
        else:
            w = np.asarray(self.weights, dtype=float).ravel()
            if w.shape[0] != n:
                raise ShapeError("one weight per point is required")
            if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
                raise InvalidInput("sample weights must be a probability vector")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    def __len__(self) -> int:
        return self.weights.shape[0]


# --------------------------------------------------------------------------
# density oracles


class DensityOracle:
    """Interface shared by the density classes."""

    dims: int = 1

    def pdf(self, x) -> np.ndarray:
        raise NotImplementedError

    def breakpoints(self, axis: int = 0) -> np.ndarray:
        return np.empty(0)

    def fourier(self, delta):
        """Exact ``int exp(-2 i pi delta x) p(x) dx`` when known, else ``None``."""
        return None

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        raise NotImplementedError

    def minimum(self) -> float:
        raise NotImplementedError


class Uniform(DensityOracle):
    def __init__(self, dims: int = 1):
        if dims not in (1, 2):
            raise InvalidInput("densities are supported in dimension 1 or 2")
        self.dims = dims

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.ones(x.shape[0] if x.ndim else 1)

    def fourier(self, delta):
        d = np.asarray(delta)
        if self.dims > 1:
            d = np.abs(d).sum(axis=-1)
        return (d == 0).astype(complex)

    def sample(self, rng, n):
        u = rng.random((n, self.dims))
        return u[:, 0] if self.dims == 1 else u

    def minimum(self):
        return 1.0


def _triangle_fourier(delta):
    d = np.asarray(delta)
    odd = (d % 2) != 0
    with np.errstate(divide="ignore", invalid="ignore"):
        val = np.where(odd, 4.0 / (np.pi**2 * d.astype(float) ** 2), 0.0)
    return np.where(d == 0, 1.0, val).astype(complex)


class NamedDensity(DensityOracle):
    """Closed-form 1-D densities.  ``"triangle"`` is ``4 |x - 1/2|``."""

    NAMES = ("triangle", "uniform")

    def __init__(self, name: str):
        if name not in self.NAMES:
            raise InvalidInput(f"unknown density {name!r}; known: {self.NAMES}")
        self.name = name

    def pdf(self, x):
        x = np.asarray(x, dtype=float).reshape(-1)
        if self.name == "uniform":
            return np.ones_like(x)
        return 4.0 * np.abs(x - 0.5)

    def breakpoints(self, axis=0):
        return np.array([0.5]) if self.name == "triangle" else np.empty(0)

    def fourier(self, delta):
        if self.name == "uniform":
            return (np.asarray(delta) == 0).astype(complex)
        return _triangle_fourier(delta)

    def sample(self, rng, n):
        u = rng.random(n)
        if self.name == "uniform":
            return u
        lo = 0.5 * (1.0 - np.sqrt(np.clip(1.0 - 2.0 * u, 0.0, None)))
        hi = 0.5 + np.sqrt(np.clip(0.5 * (u - 0.5), 0.0, None))
        return np.where(u < 0.5, lo, hi)

    def minimum(self):
        return 0.0 if self.name == "triangle" else 1.0

    def negentropy(self) -> float:
        """Exact ``int p log p``."""
        return math.log(2.0) - 0.5 if self.name == "triangle" else 0.0


class Tabulated(DensityOracle):
    """Piecewise-linear density through values on a uniform grid of ``[0, 1]``.

    In two dimensions ``values`` is a 2-D array on the tensor grid and the
    interpolation is bilinear.  The interpolant is renormalized exactly.
    """

    def __init__(self, grid, values):
        v = np.asarray(values, dtype=float)
        g = np.asarray(grid, dtype=float).ravel()
        if v.ndim not in (1, 2) or any(s != g.shape[0] for s in v.shape):
            raise ShapeError("values must have one entry per grid point along each axis")
        if g.shape[0] < 2 or abs(g[0]) > 1e-12 or abs(g[-1] - 1.0) > 1e-12:
            raise InvalidInput("tabulation grid must start at 0 and end at 1")
        step = np.diff(g)
        if np.any(step <= 0) or np.max(np.abs(step - step.mean())) > 1e-9:
            raise InvalidInput("tabulation grid must be uniform and ascending")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise DomainError("tabulated density must be finite and nonnegative")
        trap = np.full(g.shape[0], step.mean())
        trap[[0, -1]] *= 0.5
        mass = trap @ v if v.ndim == 1 else trap @ v @ trap
        if not mass > 0:
            raise DomainError("tabulated density has zero mass")
        self.grid = g
        self.values = v / mass
        self.dims = v.ndim

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        if self.dims == 1:
            return np.interp(x.reshape(-1), self.grid, self.values)
        x = x.reshape(-1, 2)
        h = self.grid[1] - self.grid[0]
        m = self.grid.shape[0] - 1
        i = np.clip((x[:, 0] / h).astype(int), 0, m - 1)
        j = np.clip((x[:, 1] / h).astype(int), 0, m - 1)
        s, t = x[:, 0] / h - i, x[:, 1] / h - j
        v = self.values
        return ((1 - s) * (1 - t) * v[i, j] + s * (1 - t) * v[i + 1, j]
                + (1 - s) * t * v[i, j + 1] + s * t * v[i + 1, j + 1])

    def breakpoints(self, axis=0):
        return self.grid[1:-1]

    def sample(self, rng, n):
        if self.dims != 1:
            raise InvalidInput("sampling is implemented for 1-D tabulated densities")
        fine = np.linspace(0.0, 1.0, 16 * (self.grid.shape[0] - 1) + 1)
        dens = self.pdf(fine)
        cdf = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(fine))])
        cdf /= cdf[-1]
        return np.interp(rng.random(n), cdf, fine)

    def minimum(self):
        return float(self.values.min())


class Mixture(DensityOracle):
    """Convex combination of 1-D densities."""

    def __init__(self, components: Sequence[DensityOracle], weights: Sequence[float]):
        w = np.asarray(weights, dtype=float)
        if len(components) != w.shape[0] or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise InvalidInput("mixture weights must be a probability vector over the components")
        if any(c.dims != 1 for c in components):
            raise InvalidInput("mixtures are limited to 1-D components")
        self.components = list(components)
        self.weights = w

    def pdf(self, x):
        return sum(wi * c.pdf(x) for wi, c in zip(self.weights, self.components))

    def breakpoints(self, axis=0):
        bps = [c.breakpoints() for c in self.components]
        return np.unique(np.concatenate(bps)) if bps else np.empty(0)

    def fourier(self, delta):
        parts = [c.fourier(delta) for c in self.components]
        if any(p is None for p in parts):
            return None
        return sum(wi * p for wi, p in zip(self.weights, parts))

    def sample(self, rng, n):
        which = rng.choice(len(self.components), size=n, p=self.weights)
        out = np.empty(n)
        for k, c in enumerate(self.components):
            idx = np.flatnonzero(which == k)
            if idx.size:
                out[idx] = c.sample(rng, idx.size)
        return out

    def minimum(self):
        # lower bound; exact for components whose minima coincide
        return float(sum(wi * c.minimum() for wi, c in zip(self.weights, self.components)))


# --------------------------------------------------------------------------
# sample path


def _weighted_gram(samples: SampleSet, kernel: KernelSpec) -> np.ndarray:
    k = gram_matrix(kernel, samples.points)
    s = np.sqrt(samples.weights)
    return linops.hermitian(s[:, None] * k * s[None, :])


def empirical_entropy_gram(samples: SampleSet, kernel: KernelSpec) -> float:
    """``tr[G log G]`` for ``G = W^1/2 K W^1/2`` (nonpositive).

    This is the negative von Neumann entropy of ``sum_i w_i phi(x_i) phi(x_i)*``.
    """
    g = _weighted_gram(samples, kernel)
    return -quantum.von_neumann_entropy(g)


def mean_embedding_check(samples: SampleSet, kernel: KernelSpec, tol: float = 1e-8) -> bool:
    """Check that the empirical covariance dominates the mean-embedding outer product.

    ``sum w_i phi_i phi_i* - mu mu*`` equals ``Phi (W - w w^T) Phi*``, whose
    nonzero spectrum is that of ``K^1/2 (W - w w^T) K^1/2``.
    """
    k = gram_matrix(kernel, samples.points)
    w = samples.weights
    root = linops.matrix_sqrt(k)
    gap = root @ (np.diag(w) - np.outer(w, w)) @ root
    return bool(linops.eigvalsh(gap)[0] >= -tol)


# --------------------------------------------------------------------------
# quadrature path


def _moments_1d(density: DensityOracle, max_delta: int, plan: IntegrationPlan) -> np.ndarray:
    """``phat(delta)`` for ``delta = 0..max_delta`` by quadrature."""
    x, w = interval_rule(plan, density.breakpoints(), max_frequency=max_delta)
    wp = w * density.pdf(x)
    # exp(-2 i pi (b k + j) x) = exp(-2 i pi j x) exp(-2 i pi b k x)
    b = int(math.isqrt(max_delta)) + 1
    low = np.exp(-2j * np.pi * np.outer(np.arange(b), x))
    high = np.exp(-2j * np.pi * np.outer(b * np.arange(max_delta // b + 1), x))
    out = (low @ (high * wp[None, :]).T).T.ravel()
    return out[: max_delta + 1]


def _moments_2d(density: DensityOracle, max_delta: int, plan: IntegrationPlan) -> np.ndarray:
    """``phat(d1, d2)`` for ``d1, d2 in [-max_delta, max_delta]``."""
    x1, w1 = interval_rule(plan, density.breakpoints(0), max_frequency=max_delta)
    x2, w2 = interval_rule(plan, density.breakpoints(1), max_frequency=max_delta)
    xx = np.stack(np.meshgrid(x1, x2, indexing="ij"), axis=-1).reshape(-1, 2)
    p = density.pdf(xx).reshape(x1.shape[0], x2.shape[0])
    d = np.arange(-max_delta, max_delta + 1)
    e1 = np.exp(-2j * np.pi * np.outer(d, x1)) * w1[None, :]
    e2 = np.exp(-2j * np.pi * np.outer(d, x2)) * w2[None, :]
    return e1 @ p @ e2.T


def quadrature_covariance(density: DensityOracle, fmap: FourierFeatureMap,
                          plan: IntegrationPlan | None = None) -> DensityOperator:
    """Covariance ``int psi(x) psi(x)* p(x) dx`` in the Fourier basis of ``fmap``.

    The result is ``D^1/2 C D^1/2`` with ``D`` the squared feature weights and
    ``C[omega, omega'] = phat(omega - omega')`` a Hermitian Toeplitz matrix.

    Raises
    ------
    InvalidInput
        If ``plan.resolution < 8 r`` or the dimensions disagree.
    """
    plan = plan or IntegrationPlan()
    if density.dims != fmap.dims:
        raise ShapeError("density and feature map live in different dimensions")
    r = fmap.r
    if plan.resolution < 8 * r:
        raise InvalidInput(f"quadrature resolution {plan.resolution} is below 8 r = {8 * r}")
    if fmap.dims == 1:
        ph = _moments_1d(density, 2 * r, plan)
        c = sla.toeplitz(ph[: 2 * r + 1], ph[: 2 * r + 1].conj())
    else:
        ph = _moments_2d(density, 2 * r, plan)
        diff = fmap.frequencies[:, None, :] - fmap.frequencies[None, :, :] + 2 * r
        c = ph[diff[..., 0], diff[..., 1]]
    s = fmap.weights
    sigma = s[:, None] * c * s[None, :]
    return DensityOperator(sigma, fmap.basis_tag(), normalized=fmap.normalized)


def quadrature_negentropy(density: DensityOracle, fmap: FourierFeatureMap,
                          plan: IntegrationPlan | None = None) -> float:
    """``tr[S_p log S_p]`` for the quadrature covariance (the sample-path limit)."""
    return -quantum.von_neumann_entropy(quadrature_covariance(density, fmap, plan))


def _rule_nd(density: DensityOracle, plan: IntegrationPlan, extra=()):
    if density.dims == 1:
        bp = np.concatenate([density.breakpoints(), *[np.asarray(e, float) for e in extra]])
        x, w = interval_rule(plan, bp)
        return x, w
    x1, w1 = interval_rule(plan, density.breakpoints(0))
    x2, w2 = interval_rule(plan, density.breakpoints(1))
    xx = np.stack(np.meshgrid(x1, x2, indexing="ij"), axis=-1).reshape(-1, 2)
    return xx, np.outer(w1, w2).ravel()


def shannon_negentropy(density: DensityOracle, plan: IntegrationPlan | None = None) -> float:
    """``int p log p`` by quadrature (``0 log 0 = 0``)."""
    plan = plan or IntegrationPlan()
    x, w = _rule_nd(density, plan)
    p = density.pdf(x)
    pos = p > 0
    return float(np.sum(w[pos] * p[pos] * np.log(p[pos])))


def _shannon_kl(p: DensityOracle, q: DensityOracle, plan: IntegrationPlan) -> float:
    x, w = _rule_nd(p, plan, extra=(q.breakpoints(),))
    a, b = p.pdf(x), q.pdf(x)
    pos = a > 0
    if np.any(b[pos] <= 0):
        return math.inf
    return float(np.sum(w[pos] * a[pos] * np.log(a[pos] / b[pos])))


# --------------------------------------------------------------------------
# projection path


class ProjectionEstimate(NamedTuple):
    """Output of :func:`projection_estimator`.

    ``kl_pq`` is the generalized relative entropy
    ``D(A_p || A_q) - tr A_p + tr A_q`` of the projected operators, which is
    a guaranteed lower bound on ``D(S_p || S_q)`` and is monotone in the
    landmark set; ``kl_plain`` drops the trace correction.  ``entropy_p``
    is the same lower bound against the uniform measure, shifted by
    ``sum khat log khat`` so that it estimates ``tr[S_p log S_p]`` from below.
    ``raw_negentropy`` is the plain ``tr[A_p log A_p]``, which sits above the
    limit because projection removes mass.
    """

    entropy_p: float
    kl_pq: float
    kl_plain: float
    raw_negentropy: float
    rank: int
    jitter: float


def _kernel_columns(kernel: TorusExp, landmarks: np.ndarray, nodes: np.ndarray) -> np.ndarray:
    from .kernels import _torus_points, _torus_profile

    a = _torus_points(landmarks, kernel.dims)
    b = _torus_points(nodes, kernel.dims)
    return _torus_profile(a[:, None, :] - b[None, :, :], kernel.sigma)


def projection_estimator(density_p: DensityOracle, density_q: DensityOracle, landmarks: SampleSet,
                         kernel: TorusExp, plan: IntegrationPlan | None = None,
                         jitter: float | None = None, drop_tol: float = 1e-8) -> ProjectionEstimate:
    """Project covariance operators onto the span of landmark features.

    Forms ``T_p[i, j] = int k(x_i, x) k(x, x_j) p(x) dx`` by quadrature and
    ``A_p = K^-1/2 T_p K^-1/2`` from the eigendecomposition of
    ``K + jitter I``; eigen-directions below ``drop_tol * lambda_max`` are
    discarded, which is again an exact projection onto a smaller subspace.
    Divergences carry the trace correction ``tr A_q - tr A_p`` because
    compression does not preserve traces; without it the estimate can
    exceed the limit.

    Parameters
    ----------
    jitter : float, optional
        Ridge added to the landmark Gram; ``1e-10 * n`` by default.

    Returns
    -------
    ProjectionEstimate
    """
    if not isinstance(kernel, TorusExp):
        raise InvalidInput("the projection estimator needs the torus kernel")
    if density_p.dims != kernel.dims or density_q.dims != kernel.dims:
        raise ShapeError("densities and kernel live in different dimensions")
    plan = plan or IntegrationPlan()
    pts = landmarks.points
    n = len(landmarks)
    jitter = 1e-10 * n if jitter is None else float(jitter)
    if jitter < 0:
        raise InvalidInput("jitter must be nonnegative")

    axes = [interval_rule(plan, np.union1d(density_p.breakpoints(a), density_q.breakpoints(a)))
            for a in range(kernel.dims)]
    if kernel.dims == 1:
        x, w = axes[0]
    else:
        (x1, w1), (x2, w2) = axes
        x = np.stack(np.meshgrid(x1, x2, indexing="ij"), axis=-1).reshape(-1, 2)
        w = np.outer(w1, w2).ravel()
    kx = _kernel_columns(kernel, pts, x)
    t_p = (kx * (w * density_p.pdf(x))[None, :]) @ kx.T
    t_q = (kx * (w * density_q.pdf(x))[None, :]) @ kx.T
    t_u = (kx * w[None, :]) @ kx.T

    lam, u = linops.eigh(gram_matrix(kernel, pts) + jitter * np.eye(n))
    keep = lam > max(drop_tol * lam[-1], 0.0)
    if not np.any(keep):
        raise IllConditioned("landmark Gram is numerically zero")
    v = u[:, keep] / np.sqrt(lam[keep])[None, :]

    def project(t):
        return linops.hermitian(v.T @ t @ v)

    a_p, a_q, a_u = project(t_p), project(t_q), project(t_u)
    tr_p, tr_q, tr_u = (float(np.trace(a).real) for a in (a_p, a_q, a_u))
    kl_plain = quantum.relative_entropy(a_p, a_q)
    kl = kl_plain - tr_p + tr_q
    base = kernel.dims * khat_entropy_closed_form(kernel.sigma)
    entropy = quantum.relative_entropy(a_p, a_u) - tr_p + tr_u + base
    raw = -quantum.von_neumann_entropy(a_p)
    return ProjectionEstimate(float(entropy), float(kl), float(kl_plain), float(raw),
                              int(keep.sum()), jitter)


# --------------------------------------------------------------------------
# degrees of freedom


def degrees_of_freedom(fmap: FourierFeatureMap, lam: float) -> float:
    """``tr[S (S + lam I)^-1] = sum khat / (khat + lam)`` over the frequencies of ``fmap``."""
    if not lam > 0:
        raise InvalidInput("lambda must be positive")
    k = fmap.squared_weights
    return float(np.sum(k / (k + lam)))


def dof_upper_bound(sigma: float, lam: float, dims: int = 1) -> float:
    """Small-``sigma`` upper bound on the degrees of freedom of the torus kernel.

    ``exp(-sigma d / 2) d! / sinh(sigma/2)^d * (1 + log(tanh(sigma/2)^d / lam)^d)``,
    meaningful for ``lam <= tanh(sigma/2)^d``.
    """
    if not lam > 0:
        raise InvalidInput("lambda must be positive")
    top = math.tanh(0.5 * sigma) ** dims
    if lam > top:
        raise DomainError("the bound requires lambda <= khat(0)")
    return (math.exp(-0.5 * sigma * dims) * math.factorial(dims) / math.sinh(0.5 * sigma) ** dims
            * (1.0 + math.log(top / lam) ** dims))


# --------------------------------------------------------------------------
# sandwich inequality


class SandwichResult(NamedTuple):
    d_smoothed: float
    d_kernel: float
    d_shannon: float
    holds: bool


def _smoothed_values(density: DensityOracle, sigma: float, y: np.ndarray, plan: IntegrationPlan) -> np.ndarray:
    """``int h(x - y) p(x) dx`` at the points ``y``."""
    x, w = interval_rule(plan, density.breakpoints())
    wp = w * density.pdf(x)
    out = np.empty(y.shape[0])
    step = max(1, 2**22 // x.shape[0])
    for lo in range(0, y.shape[0], step):
        out[lo:lo + step] = smoothing_kernel_h(sigma, x[None, :] - y[lo:lo + step, None]) @ wp
    return out


def sandwich_truncation(sigma: float) -> int:
    """Largest ``r`` with ``khat(r) >= 1e-11 khat(0)``.

    Keeps every eigenvalue of the covariance operators well above the
    round-off floor, so that support tests are not triggered by directions
    that only carry round-off.
    """
    return int(math.floor(math.log(1e11) / sigma))


def sandwich_check(density_p: DensityOracle, density_q: DensityOracle, sigma: float,
                   plan: IntegrationPlan | None = None, r: int | None = None) -> SandwichResult:
    """Evaluate ``D(p~ || q~) <= D(S_p || S_q) <= D(p || q)`` on the 1-D torus.

    ``p~`` is ``p`` smoothed by the Markov kernel ``h``.  The middle term
    uses quadrature covariances at truncation ``r`` (by default
    :func:`sandwich_truncation`; truncation can only lower the middle term).  ``holds`` reports whether both inequalities hold up to 1e-6.

    Raises
    ------
    DomainError
        If a density is not bounded below by 1e-6.
    """
    plan = plan or IntegrationPlan()
    if r is None:
        r = sandwich_truncation(sigma)
    for d in (density_p, density_q):
        if d.dims != 1:
            raise InvalidInput("the sandwich check is one-dimensional")
        if d.minimum() < POSITIVITY_FLOOR:
            raise DomainError("sandwich check requires strictly positive densities")
    fmap = FourierFeatureMap(sigma, r)
    if plan.resolution < 8 * fmap.r:
        plan = plan.with_resolution(8 * fmap.r)
    d_kernel = quantum.relative_entropy(quadrature_covariance(density_p, fmap, plan),
                                        quadrature_covariance(density_q, fmap, plan))
    d_shannon = _shannon_kl(density_p, density_q, plan)

    y, wy = interval_rule(plan)
    pt = _smoothed_values(density_p, sigma, y, plan)
    qt = _smoothed_values(density_q, sigma, y, plan)
    d_smoothed = float(np.sum(wy * pt * np.log(pt / qt)))
    holds = (d_smoothed <= d_kernel + SANDWICH_SLACK) and (d_kernel <= d_shannon + SANDWICH_SLACK)
    return SandwichResult(d_smoothed, float(d_kernel), d_shannon, bool(holds))
