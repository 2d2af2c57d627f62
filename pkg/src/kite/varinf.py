"""Upper bounds on log-partition functions from kernel relative entropies.

Torus problems use features ``phi_omega(x) = eta_omega^1/2 exp(-2 i pi omega x)``
for ``|omega| <= r``.  A potential ``f`` with Fourier coefficients
``fhat(delta)``, ``|delta| <= 2r``, is represented by any Hermitian ``M`` with

    sum_{omega - omega' = delta} eta_omega^1/2 eta_omega'^1/2 M[omega, omega'] = fhat(delta),

and the bound is ``min log tr exp(M) + sum eta log eta`` over that affine set,
solved by projected gradient descent with unit step.  Matrices are indexed
by ``i = omega + r``.

The hypercube functions work with moment matrices
``C = E[(x, 1)(x, 1)^T]`` of distributions on ``{-1, 1}^d``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy import optimize
from scipy.special import softmax

from . import linops, quantum
from .errors import Diverged, DomainError, IllConditioned, InvalidInput, NotPSD, ShapeError
from .kernels import TorusExp, fourier_coefficient

__all__ = [
    "ETA_FLOOR",
    "LogPartitionProblem",
    "SolverReport",
    "constraint_matrices",
    "affine_project",
    "solve",
    "solve_logpartition_torus",
    "solve_logpartition_nonisotropic",
    "tilde_log",
    "temperature_bound",
    "log_partition_quadrature",
    "primal_moments",
    "kernel_divergence",
    "mm_objective",
    "mm_update_eta",
    "maximize_kernel_divergence",
    "embed_dual",
    "truncation_sweep",
    "solve_logpartition_with_kernel_learning",
    "hypercube_moments",
    "hypercube_entropy",
    "hypercube_entropy_bound",
    "hypercube_logdet_bound",
    "hypercube_eta_optimize",
]

ETA_FLOOR = 1e-12


# --------------------------------------------------------------------------
# problem description


@dataclass(frozen=True, eq=False)
class LogPartitionProblem:
    """Log-partition problem on the 1-D torus with uniform base measure.

    Parameters
    ----------
    r : int
        Frequencies ``-r..r`` are used.
    fhat : array_like, length ``4r + 1``
        ``fhat[delta + 2r]``; must satisfy ``fhat(-delta) = conj(fhat(delta))``.
    eta : array_like, length ``2r + 1``
        Squared feature weights.  They sum to one for isotropic problems and
        to at most one for the non-isotropic solver.
    sigma : float, optional
        Kernel width, recorded for reference.
    """

    r: int
    fhat: np.ndarray
    eta: np.ndarray
    sigma: float | None = None

    def __post_init__(self):
        r = int(self.r)
        if r < 0 or r != self.r:
            raise InvalidInput("r must be a nonnegative integer")
        f = np.asarray(self.fhat, dtype=complex).ravel()
        if f.shape[0] != 4 * r + 1:
            raise ShapeError(f"fhat must have 4r+1 = {4 * r + 1} entries")
        if not np.all(np.isfinite(f)):
            raise InvalidInput("fhat must be finite")
        if np.max(np.abs(f - f[::-1].conj()), initial=0.0) > 1e-12 * (1.0 + np.abs(f).max()):
            raise InvalidInput("fhat must be Hermitian-symmetric (f real-valued)")
        f = 0.5 * (f + f[::-1].conj())
        eta = np.asarray(self.eta, dtype=float).ravel()
        if eta.shape[0] != 2 * r + 1 or not np.all(np.isfinite(eta)) or np.any(eta < 0):
            raise InvalidInput(f"eta must be a nonnegative vector of length {2 * r + 1}")
        if eta.sum() > 1.0 + 1e-12:
            raise InvalidInput("eta must sum to at most one")
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "fhat", f if np.any(f.imag) else f.real.astype(complex))
        object.__setattr__(self, "eta", eta)

    @classmethod
    def from_coefficients(cls, r: int, coefficients: dict, eta="khat", sigma: float | None = None):
        """Build from ``{delta: value}``; ``eta`` is ``"khat"``, ``"uniform"``,
        ``"khat-unnormalized"`` or an explicit vector."""
        f = np.zeros(4 * r + 1, dtype=complex)
        for d, v in coefficients.items():
            d = int(d)
            if abs(d) > 2 * r:
                raise InvalidInput(f"fhat({d}) lies outside the representable band |delta| <= 2r")
            f[d + 2 * r] = v
            if d != 0 and -d not in coefficients:
                f[-d + 2 * r] = np.conj(v)
        return cls(r, f, make_eta(r, eta, sigma), sigma)

    @classmethod
    def cosine(cls, r: int, sigma: float | None = None, eta="khat", amplitude: float = 1.0):
        """``f(x) = amplitude * cos(2 pi x)``."""
        if r < 1:
            raise InvalidInput("cos(2 pi x) needs r >= 1")
        return cls.from_coefficients(r, {1: 0.5 * amplitude, -1: 0.5 * amplitude}, eta, sigma)

    @property
    def dim(self) -> int:
        return 2 * self.r + 1

    @property
    def isotropic(self) -> bool:
        return abs(self.eta.sum() - 1.0) <= 1e-12

    def scaled(self, factor: float) -> "LogPartitionProblem":
        return replace(self, fhat=self.fhat * factor)

    def shifted(self, c: float) -> "LogPartitionProblem":
        f = self.fhat.copy()
        f[2 * self.r] += c
        return replace(self, fhat=f)

    def with_eta(self, eta) -> "LogPartitionProblem":
        return replace(self, eta=np.asarray(eta, dtype=float))

    def potential(self, x) -> np.ndarray:
        """``f(x) = sum_delta fhat(delta) exp(2 i pi delta x)``."""
        x = np.asarray(x, dtype=float)
        d = np.arange(-2 * self.r, 2 * self.r + 1)
        return np.real(np.exp(2j * np.pi * np.multiply.outer(x, d)) @ self.fhat)


def make_eta(r: int, eta="khat", sigma: float | None = None) -> np.ndarray:
    """Feature weights for ``2r + 1`` frequencies."""
    m = 2 * r + 1
    if isinstance(eta, str):
        if eta == "uniform":
            return np.full(m, 1.0 / m)
        if eta in ("khat", "khat-unnormalized"):
            if sigma is None:
                raise InvalidInput("sigma is required for khat weights")
            k = fourier_coefficient(TorusExp(sigma), np.arange(-r, r + 1))
            return k / k.sum() if eta == "khat" else k
        raise InvalidInput(f"unknown eta specification {eta!r}")
    v = np.asarray(eta, dtype=float).ravel()
    if v.shape[0] != m:
        raise ShapeError(f"eta must have {m} entries")
    return v


@dataclass(frozen=True, eq=False)
class SolverReport:
    """Result of a log-partition solve.

    ``objective_trace`` holds the bound after every accepted iterate; every
    entry is itself a valid upper bound because all iterates are feasible.
    """

    bound: float
    iterations: int
    final_gradient_norm: float
    constraint_residual: float
    objective_trace: list
    M: np.ndarray | None = None
    eta: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)


# --------------------------------------------------------------------------
# constraints


class _Constraints:
    """Band structure of the constraint operators for the retained frequencies."""

    def __init__(self, problem: LogPartitionProblem, weights: np.ndarray | None = None):
        eta = problem.eta if weights is None else weights
        keep = eta > ETA_FLOOR
        if not np.any(keep):
            raise IllConditioned("all feature weights are below the floor")
        self.keep = keep
        self.omega = np.arange(-problem.r, problem.r + 1)[keep]
        self.eta = eta[keep]
        self.s = np.sqrt(self.eta)
        self.S = np.outer(self.s, self.s)
        self.n_bands = 4 * problem.r + 1
        self.D = (self.omega[:, None] - self.omega[None, :] + 2 * problem.r).ravel()
        self.gram = np.bincount(self.D, weights=(self.S**2).ravel(), minlength=self.n_bands)
        self.fhat = problem.fhat
        empty = self.gram <= 0
        if np.any(np.abs(self.fhat[empty]) > 0):
            raise IllConditioned("potential has Fourier modes that no retained feature pair can represent")
        self.gram_safe = np.where(empty, 1.0, self.gram)
        self.active = ~empty

    def bands(self, m: np.ndarray) -> np.ndarray:
        w = (self.S * m).ravel()
        re = np.bincount(self.D, weights=w.real, minlength=self.n_bands)
        if np.iscomplexobj(w):
            return re + 1j * np.bincount(self.D, weights=w.imag, minlength=self.n_bands)
        return re.astype(complex)

    def residual(self, m: np.ndarray) -> float:
        return float(np.max(np.abs(self.bands(m) - self.fhat)[self.active], initial=0.0))

    def project(self, z: np.ndarray, fhat: np.ndarray | None = None, metric=None) -> np.ndarray:
        """Projection onto the affine set, in the Frobenius norm or in the
        weighted norm ``sum metric_ij |M_ij|^2`` given as ``(metric, gram)``."""
        target = self.fhat if fhat is None else fhat
        if metric is None:
            scale, gram = self.S, self.gram_safe
        else:
            scale, gram = metric
        mu = np.where(self.active, (target - self.bands(z)) / gram, 0.0)
        step = mu[self.D].reshape(z.shape) * scale
        out = z + (step if np.any(step.imag) or np.iscomplexobj(z) else step.real)
        return 0.5 * (out + out.conj().T)

    def metric(self) -> tuple:
        """Diagonal preconditioner: log-mean of the normalized weights ``eta_i, eta_j``.

        Approximates the Hessian of ``log tr exp`` near a primal point whose
        diagonal is proportional to ``eta``.
        """
        e = self.eta / self.eta.sum()
        a, b = e[:, None], e[None, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            w = (a - b) / (np.log(a) - np.log(b))
        w = np.where(np.isclose(a, b, rtol=1e-9, atol=0.0), 0.5 * (a + b), w)
        scale = self.S / w
        gram = np.bincount(self.D, weights=(self.S * scale).ravel(), minlength=self.n_bands)
        return scale, np.where(self.active, gram, 1.0), w

    def tangent(self, g: np.ndarray) -> np.ndarray:
        """Projection of ``g`` onto the linear subspace ``{<A_delta, M> = 0}``."""
        return self.project(g, np.zeros_like(self.fhat))


def constraint_matrices(problem: LogPartitionProblem) -> dict:
    """``{delta: A_delta}`` with ``A_delta[i, j] = sqrt(eta_i eta_j) 1[omega_i - omega_j = delta]``.

    The pairing ``<A_delta, M> = sum_ij A_delta[i, j] M[i, j]`` gives the
    constraint; ``A_{-delta}`` is the transpose of ``A_delta``.
    """
    m = problem.dim
    s = np.sqrt(problem.eta)
    idx = np.arange(m)
    diff = idx[:, None] - idx[None, :]
    return {d: np.where(diff == d, np.outer(s, s), 0.0) for d in range(-2 * problem.r, 2 * problem.r + 1)}


def affine_project(z, problem: LogPartitionProblem) -> np.ndarray:
    """Frobenius projection of ``z`` onto the feasible affine set.

    The constraint operators have disjoint supports, so their Gram matrix is
    diagonal and the projection is a per-band correction.  Frequencies with
    ``eta`` below :data:`ETA_FLOOR` are removed; the returned matrix is zero
    on their rows and columns.
    """
    cons = _Constraints(problem)
    z = linops.hermitian(z)
    if z.shape != (problem.dim, problem.dim):
        raise ShapeError(f"expected a {problem.dim}x{problem.dim} matrix")
    sub = cons.project(z[np.ix_(cons.keep, cons.keep)])
    if cons.keep.all():
        return sub
    out = np.zeros_like(z, dtype=sub.dtype)
    out[np.ix_(cons.keep, cons.keep)] = sub
    return out


# --------------------------------------------------------------------------
# projected gradient


def _softmax_spectrum(m: np.ndarray, shift: np.ndarray | None):
    a = m if shift is None else m + np.diag(shift)
    lam, u = np.linalg.eigh(a)
    top = lam[-1]
    w = np.exp(lam - top)
    z = w.sum()
    value = top + math.log(z)
    grad = (u * (w / z)) @ u.conj().T
    return value, grad


_STALL_WINDOW = 10


def _pgd(cons: _Constraints, shift: np.ndarray | None, m0: np.ndarray, max_iter: int, tol: float,
         extrapolation: bool, offset: float, preconditioned: bool = False, ftol: float = 1e-15):
    """Minimize ``log tr exp(M + Diag(shift))`` over the affine set.

    Steps start at size one and are halved until the objective does not
    increase, so the trace is non-increasing with or without extrapolation.
    Stops when the iterate moves by less than ``tol``, or when the objective
    has decreased by at most ``ftol * max(1, |value|)`` over the last
    ten iterations.
    """
    if preconditioned:
        scale, gram, w = cons.metric()
        metric = (scale, gram)
        inv_w, weight = 1.0 / w, w
    else:
        metric, inv_w, weight = None, 1.0, 1.0
    m = cons.project(m0)
    val, grad = _softmax_spectrum(m, shift)
    if not np.isfinite(val):
        raise Diverged("objective is not finite at the starting point")
    trace = [val + offset]
    prev = m
    it = 0
    momentum = 1.0

    def attempt(base, base_grad, step):
        cand = cons.project(base - step * (base_grad * inv_w), metric=metric)
        c_val, c_grad = _softmax_spectrum(cand, shift)
        if not np.isfinite(c_val):
            raise Diverged("objective became non-finite")
        return cand, c_val, c_grad

    for it in range(1, max_iter + 1):
        accepted = None
        if extrapolation and it > 1:
            t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * momentum**2))
            y = m + ((momentum - 1.0) / t_next) * (m - prev)
            y_val, y_grad = _softmax_spectrum(y, shift)
            step = 1.0
            for _ in range(30):
                cand, c_val, c_grad = attempt(y, y_grad, step)
                diff = cand - y
                model = (y_val + float(np.real(np.vdot(y_grad, diff)))
                         + float(np.sum(weight * np.abs(diff) ** 2)) / (2.0 * step))
                if c_val <= model + 1e-14 * max(1.0, abs(y_val)):
                    break
                step *= 0.5
            if c_val <= val:
                accepted = (cand, c_val, c_grad)
                momentum = t_next
            else:
                momentum = 1.0
        if accepted is None:
            step = 1.0
            for _ in range(40):
                cand, c_val, c_grad = attempt(m, grad, step)
                if c_val <= val:
                    accepted = (cand, c_val, c_grad)
                    break
                step *= 0.5
            else:
                break
        cand, c_val, c_grad = accepted
        move = float(np.linalg.norm(cand - m))
        prev, m, val, grad = m, cand, c_val, c_grad
        trace.append(val + offset)
        if move < tol:
            break
        if len(trace) > _STALL_WINDOW and trace[-1 - _STALL_WINDOW] - trace[-1] <= ftol * max(1.0, abs(val)):
            break
    gnorm = float(np.linalg.norm(cons.tangent(grad)))
    return m, val, it, gnorm, trace


def _embed(cons: _Constraints, m: np.ndarray, dim: int) -> np.ndarray:
    if cons.keep.all():
        return m
    out = np.zeros((dim, dim), dtype=m.dtype)
    out[np.ix_(cons.keep, cons.keep)] = m
    return out


def _translation(eta: np.ndarray) -> np.ndarray:
    """``log Diag(eta) - (sum eta log eta / sum eta) I`` on the positive entries, zero elsewhere."""
    pos = eta > 0
    out = np.zeros(eta.shape[0])
    out[pos] = np.log(eta[pos])
    c = float(np.sum(eta[pos] * out[pos])) / float(eta[pos].sum())
    out[pos] -= c
    return np.diag(out)


def solve_logpartition_torus(problem: LogPartitionProblem, max_iter: int = 5000, tol: float = 1e-10,
                             extrapolation: bool = False, M0=None, preconditioned: bool = True) -> SolverReport:
    """Isotropic bound ``min log tr exp(M) + sum eta log eta`` by projected gradient.

    Each step is ``M <- project(M - step * exp(M) / tr exp(M))``, starting at
    step one and halving while the objective would increase.  Stops when the
    iterate moves by less than ``tol`` in Frobenius norm or the objective stalls.

    The matrix ``T = log Diag(eta) - (sum eta log eta / sum eta) I`` satisfies
    every constraint with zero right-hand side, so ``M`` and ``M - T`` range
    over the same affine set.  Iterations run on ``M - T``, whose optimum
    has entries of order one even when some ``eta`` are tiny (the optimum
    of ``M`` itself sits near ``log eta`` there); the reported ``M`` is
    translated back.

    Parameters
    ----------
    extrapolation : bool
        Add momentum (extrapolated) steps; backtracking still keeps the
        objective trace non-increasing.
    M0 : array_like, optional
        Starting point (projected first); ``project(T)`` by default, i.e.
        the origin of the translated coordinates.
    preconditioned : bool
        Scale steps and projections by the log-mean metric of ``eta``
        (see :meth:`_Constraints.metric`); plain Frobenius steps otherwise.
    """
    if not problem.isotropic:
        raise InvalidInput("isotropic solver needs eta summing to one; use solve_logpartition_nonisotropic")
    cons = _Constraints(problem)
    log_eta = np.log(cons.eta)
    entropy_term = float(np.sum(cons.eta * log_eta))
    s = float(cons.eta.sum())
    n = cons.eta.shape[0]
    translate = _translation(cons.eta)
    if M0 is None:
        m0 = np.zeros((n, n))
    else:
        m0 = linops.hermitian(M0)[np.ix_(cons.keep, cons.keep)] - translate
    # objective in translated coordinates is log tr exp(M - T + log Diag(eta)) - entropy_term / s
    offset = entropy_term - entropy_term / s
    m, val, it, gnorm, trace = _pgd(cons, log_eta, m0, max_iter, tol, extrapolation, offset, preconditioned)
    m = m + translate
    return SolverReport(
        bound=float(val + offset),
        iterations=it,
        final_gradient_norm=gnorm,
        constraint_residual=cons.residual(m),
        objective_trace=trace,
        M=_embed(cons, m, problem.dim),
        eta=problem.eta.copy(),
        metadata={"solver": "isotropic", "extrapolation": extrapolation, "preconditioned": preconditioned,
                  "dropped": int((~cons.keep).sum())},
    )


def tilde_log(a):
    """``log a`` for ``a > 1`` and ``a - 1`` otherwise (concave, C^1)."""
    arr = np.asarray(a, dtype=float)
    if np.any(~(arr > 0)):
        raise DomainError("tilde_log is defined for positive arguments")
    out = np.where(arr > 1.0, np.log(np.maximum(arr, 1.0)), arr - 1.0)
    return float(out) if out.ndim == 0 else out


def solve_logpartition_nonisotropic(problem: LogPartitionProblem, max_iter: int = 5000, tol: float = 1e-10,
                                    extrapolation: bool = False, M0=None,
                                    preconditioned: bool = True) -> SolverReport:
    """Bound ``min_{M, c} c + 1 + tilde_log(tr exp(M + log Diag(eta)) / e)`` for ``sum eta <= 1``.

    The constraint is ``f = c + <phi, M phi>``.  The inner problem
    ``P(c) = min log tr exp(M + log Diag(eta))`` is solved once, at ``c = 0``,
    by projected gradient.  Since ``<phi, I phi> = s = sum eta``, the matrix
    ``M - (c / s) I`` is feasible for every other ``c`` and attains
    ``P(0) - c / s``, so the outer minimization over ``c`` is a golden-section
    search over these feasible points.  Its minimum agrees with the closed
    form ``s (P(0) - log s)``, which is kept in ``metadata`` as a cross-check.
    """
    cons = _Constraints(problem)
    s = float(cons.eta.sum())
    shift = np.log(cons.eta)
    n = cons.eta.shape[0]
    m0 = np.zeros((n, n)) if M0 is None else linops.hermitian(M0)[np.ix_(cons.keep, cons.keep)]
    m, p0, it, gnorm, trace0 = _pgd(cons, shift, m0, max_iter, tol, extrapolation, 0.0, preconditioned)

    def outer(c: float) -> float:
        return c + 1.0 + tilde_log(math.exp(p0 - c / s - 1.0))

    c_guess = s * (p0 - 1.0 - math.log(s))
    res = optimize.minimize_scalar(outer, bracket=(c_guess - 1.0, c_guess + 1.0), method="golden",
                                   options={"xtol": 1e-12})
    closed = s * (p0 - math.log(s))
    trace = [s * (v - math.log(s)) for v in trace0]
    return SolverReport(
        bound=float(min(res.fun, outer(c_guess))),
        iterations=it,
        final_gradient_norm=gnorm,
        constraint_residual=cons.residual(m),
        objective_trace=trace,
        M=_embed(cons, m, problem.dim),
        eta=problem.eta.copy(),
        metadata={"solver": "nonisotropic", "c": float(res.x), "closed_form": closed,
                  "feature_norm2": s, "extrapolation": extrapolation, "preconditioned": preconditioned,
                  "dropped": int((~cons.keep).sum())},
    )


_SOLVERS = ("isotropic", "nonisotropic")


def _pick_solver(problem: LogPartitionProblem, solver: str) -> Callable:
    if solver == "auto":
        solver = "isotropic" if problem.isotropic else "nonisotropic"
    if solver == "isotropic":
        return solve_logpartition_torus
    if solver == "nonisotropic":
        return solve_logpartition_nonisotropic
    raise InvalidInput(f"solver must be one of {_SOLVERS + ('auto',)}, got {solver!r}")


def solve(problem: LogPartitionProblem, solver: str = "auto", **options) -> SolverReport:
    """Dispatch to the isotropic or non-isotropic solver (``"auto"`` picks by ``sum eta``)."""
    return _pick_solver(problem, solver)(problem, **options)


def temperature_bound(problem: LogPartitionProblem, epsilon: float, solver: str = "auto", **options) -> float:
    """``epsilon * b(f / epsilon)``; tends to ``max f`` as ``epsilon -> 0``."""
    if not epsilon > 0:
        raise InvalidInput("epsilon must be positive")
    return float(epsilon * solve(problem.scaled(1.0 / epsilon), solver, **options).bound)


def log_partition_quadrature(problem: LogPartitionProblem, resolution: int = 8192, epsilon: float = 1.0) -> float:
    """``epsilon log int_0^1 exp(f / epsilon)`` by the periodic trapezoid rule."""
    x = np.arange(resolution) / resolution
    f = problem.potential(x) / epsilon
    top = f.max()
    return float(epsilon * (top + math.log(np.mean(np.exp(f - top)))))


# --------------------------------------------------------------------------
# kernel learning


def primal_moments(report: SolverReport) -> np.ndarray:
    """Toeplitz unit-diagonal moment matrix read off the primal ``exp(M)/tr exp(M)``.

    With ``X = exp(M)/tr exp(M)`` the moments are
    ``C = Diag(eta)^-1/2 X Diag(eta)^-1/2``, averaged along diagonals and
    scaled so that ``C`` has unit diagonal.  Dropped frequencies get
    identity rows.
    """
    eta = report.eta
    keep = eta > ETA_FLOOR
    m = report.M[np.ix_(keep, keep)]
    lam, u = np.linalg.eigh(m)
    w = np.exp(lam - lam[-1])
    x = (u * (w / w.sum())) @ u.conj().T
    s = np.sqrt(eta[keep])
    c = x / np.outer(s, s)
    omega = np.flatnonzero(keep)
    n = eta.shape[0]
    diff = (omega[:, None] - omega[None, :] + n - 1).ravel()
    re = np.bincount(diff, weights=c.real.ravel(), minlength=2 * n - 1)
    im = np.bincount(diff, weights=c.imag.ravel(), minlength=2 * n - 1) if np.iscomplexobj(c) else 0.0
    cnt = np.bincount(diff, minlength=2 * n - 1)
    band = (re + 1j * im) / np.maximum(cnt, 1)
    band = band / band[n - 1].real
    idx = np.arange(n)
    full = band[idx[:, None] - idx[None, :] + n - 1]
    full = 0.5 * (full + full.conj().T)
    return full.real if not np.any(full.imag) else full


def kernel_divergence(c_p, c_q, eta) -> float:
    """``D(Diag(eta)^1/2 C_p Diag(eta)^1/2 || Diag(eta)^1/2 C_q Diag(eta)^1/2)``."""
    s = np.sqrt(np.asarray(eta, dtype=float))
    w = np.outer(s, s)
    return quantum.relative_entropy(linops.hermitian(c_p) * w, linops.hermitian(c_q) * w)


def _check_moment(c) -> np.ndarray:
    c = linops.hermitian(c)
    if np.max(np.abs(np.diag(c) - 1.0)) > 1e-8:
        raise InvalidInput("moment matrix must have unit diagonal")
    lam = np.linalg.eigvalsh(c)
    if lam[0] < -1e-10 * max(1.0, lam[-1]):
        raise NotPSD("moment matrix is not positive semi-definite")
    return c


def mm_objective(c_p, eta) -> float:
    """``tr[X log X] - sum eta log eta`` with ``X = Diag(eta)^1/2 C_p Diag(eta)^1/2``.

    Equals the divergence between ``p`` and the uniform measure for the kernel
    with squared Fourier weights ``eta``.
    """
    eta = np.asarray(eta, dtype=float)
    s = np.sqrt(eta)
    x = linops.hermitian(c_p) * np.outer(s, s)
    pos = eta > 0
    return linops.xlogx_trace(np.linalg.eigvalsh(x)) - float(np.sum(eta[pos] * np.log(eta[pos])))


def mm_update_eta(c_p, eta) -> np.ndarray:
    """One majorization-minimization step for maximizing :func:`mm_objective`.

    ``eta+ = softmax(diag[C^1/2 log(C^1/2 Diag(eta) C^1/2) C^1/2])`` evaluated
    through the equivalent ``diag[Y log Y] / eta`` with
    ``Y = Diag(eta)^1/2 C Diag(eta)^1/2``, which avoids logarithms of null
    directions.
    """
    c = _check_moment(c_p)
    eta = np.asarray(eta, dtype=float).ravel()
    if eta.shape[0] != c.shape[0] or np.any(eta <= 0) or abs(eta.sum() - 1.0) > 1e-10:
        raise InvalidInput("eta must be a strictly positive probability vector matching C")
    s = np.sqrt(eta)
    lam, u = linops.eigh(c * np.outer(s, s))
    tau = linops.floor_threshold(lam)
    g = np.where(lam > tau, lam * np.log(np.where(lam > tau, lam, 1.0)), 0.0)
    diag = np.real(np.einsum("ij,j,ij->i", u, g, u.conj()))
    return softmax(diag / eta)


def maximize_kernel_divergence(c_p, eta0=None, iters: int = 200, tol: float = 1e-12):
    """Run :func:`mm_update_eta` from ``eta0`` (uniform by default).

    Returns ``(eta, objective_trace)``; the trace is non-decreasing.
    """
    c = _check_moment(c_p)
    n = c.shape[0]
    eta = np.full(n, 1.0 / n) if eta0 is None else np.asarray(eta0, dtype=float)
    trace = [mm_objective(c, eta)]
    for _ in range(iters):
        eta = np.maximum(mm_update_eta(c, eta), ETA_FLOOR)
        eta /= eta.sum()
        trace.append(mm_objective(c, eta))
        if abs(trace[-1] - trace[-2]) < tol:
            break
    return eta, trace


def solve_logpartition_with_kernel_learning(problem: LogPartitionProblem, outer_iters: int = 20,
                                            max_iter: int = 5000, tol: float = 1e-10,
                                            mm_steps: int = 1) -> SolverReport:
    """Alternate the isotropic solve with MM updates of ``eta``.

    After each solve, the primal moment matrix (:func:`primal_moments`) is fed
    to ``mm_steps`` MM updates.  The reported bound is the lowest seen; the
    objective trace holds the best-so-far bound per outer iteration and the
    raw per-iteration bounds are in ``metadata["raw_bounds"]``.  The change
    of :func:`mm_objective` produced by each update (on its own moment
    matrix) is in ``metadata["mm_gains"]``.
    """
    if not problem.isotropic:
        raise InvalidInput("kernel learning needs eta on the simplex")
    current = problem
    best = solve_logpartition_torus(current, max_iter=max_iter, tol=tol)
    raw = [best.bound]
    trace = [best.bound]
    report = best
    gains = []
    for _ in range(outer_iters):
        c = primal_moments(report)
        eta = report.eta
        before = mm_objective(c, eta)
        for _ in range(mm_steps):
            eta = np.maximum(mm_update_eta(c, np.maximum(eta, ETA_FLOOR) / np.maximum(eta, ETA_FLOOR).sum()),
                             0.0)
        eta = np.where(eta < ETA_FLOOR, 0.0, eta)
        eta /= eta.sum()
        gains.append(mm_objective(c, eta) - before)
        current = current.with_eta(eta)
        report = solve_logpartition_torus(current, max_iter=max_iter, tol=tol, M0=None)
        raw.append(report.bound)
        if report.bound < best.bound:
            best = report
        trace.append(best.bound)
    meta = dict(best.metadata)
    meta.update(raw_bounds=raw, mm_gains=gains, moment_source="primal exp(M)/tr exp(M)", initial_bound=raw[0])
    return replace(best, objective_trace=trace, metadata=meta)


# --------------------------------------------------------------------------
# hypercube


def hypercube_moments(probabilities=None, means=None) -> np.ndarray:
    """Moment matrix ``E[(x, 1)(x, 1)^T]`` on ``{-1, 1}^d``.

    Either a full table ``probabilities`` of shape ``(2,) * d`` (axis value 0
    is ``-1``, 1 is ``+1``; enumerated exactly for ``d <= 12``) or the vector of
    ``means`` of independent coordinates.
    """
    if (probabilities is None) == (means is None):
        raise InvalidInput("give exactly one of probabilities or means")
    if means is not None:
        m = np.asarray(means, dtype=float).ravel()
        if np.any(np.abs(m) > 1):
            raise DomainError("means must lie in [-1, 1]")
        v = np.concatenate([m, [1.0]])
        c = np.outer(v, v)
        np.fill_diagonal(c, 1.0)
        return c
    p = np.asarray(probabilities, dtype=float)
    d = p.ndim
    if d > 12:
        raise InvalidInput("exact enumeration is limited to d <= 12")
    if any(s != 2 for s in p.shape) or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
        raise InvalidInput("probabilities must be a (2,)*d probability table")
    pts = np.array(list(itertools.product((-1.0, 1.0), repeat=d)))
    aug = np.hstack([pts, np.ones((pts.shape[0], 1))])
    return (aug * p.ravel()[:, None]).T @ aug


def hypercube_entropy(probabilities=None, means=None) -> float:
    """Shannon entropy by enumeration (or in closed form for independent bits)."""
    if means is not None:
        q = 0.5 * (1.0 + np.asarray(means, dtype=float))
        q = np.stack([q, 1.0 - q])
        q = q[q > 0]
        return float(-np.sum(q * np.log(q)))
    p = np.asarray(probabilities, dtype=float).ravel()
    p = p[p > 0]
    return float(-np.sum(p * np.log(p)))


def _hypercube_c(c) -> np.ndarray:
    c = linops.hermitian(c)
    if np.iscomplexobj(c):
        raise InvalidInput("hypercube moment matrix must be real")
    if np.max(np.abs(np.diag(c) - 1.0)) > 1e-8:
        raise InvalidInput("hypercube moment matrix must have unit diagonal")
    return c


def hypercube_entropy_bound(c, eta=None) -> float:
    """``d log 2 - tr[X log X] + sum eta log eta`` with ``X = Diag(eta)^1/2 C Diag(eta)^1/2``.

    Upper bound on the entropy of any distribution with moment matrix ``C``;
    ``eta`` defaults to uniform.
    """
    c = _hypercube_c(c)
    n = c.shape[0]
    eta = np.full(n, 1.0 / n) if eta is None else np.asarray(eta, dtype=float)
    return (n - 1) * math.log(2.0) - mm_objective(c, eta)


def hypercube_logdet_bound(c) -> float:
    """``1/2 log det(C + Diag(1/3, ..., 1/3, 0)) + d/2 log(pi e / 2)``."""
    c = _hypercube_c(c)
    d = c.shape[0] - 1
    a = c + np.diag(np.concatenate([np.full(d, 1.0 / 3.0), [0.0]]))
    sign, logdet = np.linalg.slogdet(a)
    if sign <= 0 or not np.isfinite(logdet):
        raise IllConditioned("log-det argument is singular")
    return 0.5 * logdet + 0.5 * d * math.log(math.pi * math.e / 2.0)


def hypercube_eta_optimize(c, iters: int = 200):
    """Optimize ``eta`` by MM; returns ``(eta, bound)`` with ``bound`` at most the uniform-``eta`` bound."""
    c = _hypercube_c(c)
    eta, _ = maximize_kernel_divergence(c, iters=iters)
    return eta, hypercube_entropy_bound(c, eta)


def embed_dual(m, r_new: int) -> np.ndarray:
    """Zero-pad a dual matrix on frequencies ``-r..r`` to ``-r_new..r_new``."""
    m = np.asarray(m)
    r = (m.shape[0] - 1) // 2
    if r_new < r:
        raise InvalidInput("can only embed into a larger truncation")
    out = np.zeros((2 * r_new + 1, 2 * r_new + 1), dtype=m.dtype)
    o = r_new - r
    out[o:o + m.shape[0], o:o + m.shape[0]] = m
    return out


def truncation_sweep(make_problem: Callable[[int], LogPartitionProblem], rs, solver: str = "auto",
                     warm_start: bool = True, **options) -> list:
    """Solve ``make_problem(r)`` for increasing ``r``, warm-starting from the previous dual.

    The previous solution is zero-padded in the coordinates where the
    objective reads ``log tr exp(M + log Diag(eta))``, which gives new
    frequencies their base weight.
    """
    reports = []
    prev, prev_iso = None, False
    for r in sorted(int(v) for v in rs):
        prob = make_problem(r)
        run = _pick_solver(prob, solver)
        iso = run is solve_logpartition_torus
        start = None
        if warm_start and prev is not None:
            keep_old = prev.eta > ETA_FLOOR
            base = prev.M - (_translation(np.where(keep_old, prev.eta, 0.0)) if prev_iso else 0.0)
            start = embed_dual(base, r)
            if iso:
                start = start + _translation(np.where(prob.eta > ETA_FLOOR, prob.eta, 0.0))
        rep = run(prob, M0=start, **options)
        reports.append(rep)
        prev, prev_iso = rep, iso
    return reports
