"""Randomized property suites shared by the test-suite and ``kite check``.

Each suite draws its instances from a seeded generator and returns one
:class:`CheckResult` per property.  A property is violated when the
inequality it asserts fails by more than the stated slack.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import reduce
from typing import Callable

import numpy as np

from . import linops, multivariate, quantum, varinf
from .errors import KiteError

__all__ = [
    "CheckResult",
    "random_density",
    "random_unit_gram",
    "random_unitary",
    "random_povm",
    "quantum_suite",
    "discrete_suite",
    "multivariate_suite",
    "varinf_suite",
    "hypercube_suite",
    "SUITES",
    "run_suites",
]


@dataclass(frozen=True)
class CheckResult:
    name: str
    trials: int
    violations: int
    worst: float

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: {self.violations}/{self.trials} violations, worst excess {self.worst:.3e}"


class _Tally:
    """Accumulates ``excess`` values; an excess above zero is a violation."""

    def __init__(self, name: str):
        self.name = name
        self.trials = 0
        self.violations = 0
        self.worst = -math.inf

    def add(self, excess: float) -> None:
        self.trials += 1
        excess = float(excess)
        if math.isnan(excess):
            excess = math.inf
        self.worst = max(self.worst, excess)
        if excess > 0:
            self.violations += 1

    def result(self) -> CheckResult:
        return CheckResult(self.name, self.trials, self.violations, self.worst if self.trials else 0.0)


# --------------------------------------------------------------------------
# random instances


def random_density(rng: np.random.Generator, dim: int, rank: int | None = None, complex_: bool = True) -> np.ndarray:
    """Unit-trace PSD matrix ``G G* / tr(G G*)`` with Gaussian ``G`` of ``rank`` columns."""
    k = dim if rank is None else rank
    g = rng.standard_normal((dim, k))
    if complex_:
        g = g + 1j * rng.standard_normal((dim, k))
    a = g @ g.conj().T
    return linops.hermitian(a / np.trace(a).real)


def random_unit_gram(rng: np.random.Generator, m: int) -> np.ndarray:
    """Real PSD matrix with unit diagonal and full rank (a valid finite kernel)."""
    x = rng.standard_normal((m, m + 2))
    g = x @ x.T
    d = np.sqrt(np.diag(g))
    return g / np.outer(d, d)


def random_unitary(rng: np.random.Generator, dim: int) -> np.ndarray:
    z = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))[None, :]


def random_povm(rng: np.random.Generator, dim: int, outcomes: int) -> list:
    """``D_i = S^-1/2 P_i S^-1/2`` with random PSD ``P_i`` and ``S = sum P_i``."""
    parts = [random_density(rng, dim)]
    parts += [random_density(rng, dim, rank=int(rng.integers(1, dim + 1))) for _ in range(outcomes - 1)]
    inv_root = linops.spectral_fn(sum(parts), lambda x: 1.0 / np.sqrt(x))
    return [linops.hermitian(inv_root @ p @ inv_root) for p in parts]


def _classical_kl(p: np.ndarray, q: np.ndarray) -> float:
    pos = p > 0
    if np.any(q[pos] <= 0):
        return math.inf
    return float(np.sum(p[pos] * np.log(p[pos] / q[pos])))


# --------------------------------------------------------------------------
# suites


def quantum_suite(rng: np.random.Generator, trials: int = 200, dims=(3, 5, 8), slack: float = 1e-8) -> list:
    """Relative-entropy properties on random density matrices.

    One in five trials uses a rank-deficient first argument so that the
    support logic is exercised.
    """
    names = ["nonnegativity", "pinsker_nuclear", "pinsker_hs", "joint_convexity",
             "pinching_monotonicity", "povm_classical_reduction", "unitary_invariance", "kl_generator_consistency"]
    tally = {n: _Tally(n) for n in names}
    for dim in dims:
        for t in range(trials):
            rank = int(rng.integers(1, dim)) if t % 5 == 0 else None
            a = random_density(rng, dim, rank=rank)
            b = random_density(rng, dim)
            d = quantum.relative_entropy(a, b)
            tally["nonnegativity"].add(-d - slack)

            sv = np.linalg.svd(a - b, compute_uv=False)
            nuc, hs = float(sv.sum()), float(np.sqrt(np.sum(sv**2)))
            tally["pinsker_nuclear"].add(0.5 * nuc**2 - d - slack)
            tally["pinsker_hs"].add(0.5 * hs**2 - 0.5 * nuc**2 - slack)

            a2, b2 = random_density(rng, dim), random_density(rng, dim)
            d2 = quantum.relative_entropy(a2, b2)
            for w in (0.25, 0.5, 0.75):
                mixed = quantum.relative_entropy(w * a + (1 - w) * a2, w * b + (1 - w) * b2)
                tally["joint_convexity"].add(mixed - (w * d + (1 - w) * d2) - slack)

            u = random_unitary(rng, dim)
            k = int(rng.integers(1, dim))
            proj = u[:, :k] @ u[:, :k].conj().T
            comp = np.eye(dim) - proj

            def pinch(m):
                return proj @ m @ proj + comp @ m @ comp

            tally["pinching_monotonicity"].add(quantum.relative_entropy(pinch(a), pinch(b)) - d - slack)

            povm = random_povm(rng, dim, int(rng.integers(2, dim + 2)))
            mu = np.array([np.trace(e @ a).real for e in povm])
            nu = np.array([np.trace(e @ b).real for e in povm])
            tally["povm_classical_reduction"].add(_classical_kl(np.maximum(mu, 0), np.maximum(nu, 0)) - d - slack)

            v = random_unitary(rng, dim)
            rot = quantum.relative_entropy(v @ a @ v.conj().T, v @ b @ v.conj().T)
            tally["unitary_invariance"].add(abs(rot - d) - 1e-9)

            if t < 50:
                kl = quantum.f_divergence(a, b, quantum.DivergenceKind.KL)
                tally["kl_generator_consistency"].add(abs(kl - d) - 1e-9)
    return [tally[n].result() for n in names]


def discrete_suite(rng: np.random.Generator, trials: int = 100, tol: float = 1e-10) -> list:
    """With identity Grams kernel entropy, KL and MI equal their Shannon versions."""
    ent, kl, mi = _Tally("discrete_entropy"), _Tally("discrete_kl"), _Tally("discrete_mi")
    for _ in range(trials):
        m = int(rng.integers(2, 9))
        p = rng.dirichlet(np.ones(m))
        q = rng.dirichlet(np.ones(m))
        base = np.eye(m) / m
        h = quantum.kernel_entropy(np.diag(p), base, math.log(1.0 / m))
        ent.add(abs(h - multivariate.shannon_entropy(p)) - tol)
        kl.add(abs(quantum.relative_entropy(np.diag(p), np.diag(q)) - _classical_kl(p, q)) - tol)
        shape = tuple(int(v) for v in rng.integers(2, 5, size=2))
        table = rng.dirichlet(np.ones(int(np.prod(shape)))).reshape(shape)
        joint = multivariate.JointDistribution(table)
        mi.add(abs(multivariate.kernel_mutual_information(joint)
                   - multivariate.shannon_mutual_information(table)) - tol)
    return [ent.result(), kl.result(), mi.result()]


def _random_joint(rng, shape, orthonormal=False):
    table = rng.dirichlet(np.ones(int(np.prod(shape)))).reshape(shape)
    kernels = tuple(np.eye(n) if orthonormal else random_unit_gram(rng, n) for n in shape)
    return multivariate.JointDistribution(table, kernels)


def multivariate_suite(rng: np.random.Generator, trials: int = 50, tol: float = 1e-8) -> list:
    """Additivity, data processing, submodularity, MI bounds and the Markov-chain equality."""
    add, dpi, sub, markov = (_Tally(n) for n in ("tensor_additivity", "data_processing",
                                                   "submodularity", "markov_chain_equality"))
    mi_low, mi_nonneg = _Tally("kernel_mi_below_shannon"), _Tally("kernel_mi3_nonnegative")
    for _ in range(trials):
        n1, n2 = (int(v) for v in rng.integers(2, 5, size=2))
        p1, p2 = rng.dirichlet(np.ones(n1)), rng.dirichlet(np.ones(n2))
        k1, k2 = random_unit_gram(rng, n1), random_unit_gram(rng, n2)
        prod = multivariate.JointDistribution(np.outer(p1, p2), (k1, k2))
        h1 = multivariate.joint_entropy(multivariate.JointDistribution(p1, (k1,)))
        h2 = multivariate.joint_entropy(multivariate.JointDistribution(p2, (k2,)))
        add.add(abs(multivariate.joint_entropy(prod) - h1 - h2) - 1e-9)

        jp = _random_joint(rng, (n1, n2))
        jq = multivariate.JointDistribution(rng.dirichlet(np.ones(n1 * n2)).reshape(n1, n2), jp.kernels)
        res = multivariate.data_processing_check(jp, jq, tol=tol)
        dpi.add(res.d_marginal - res.d_joint - tol)
        mi_low.add(multivariate.kernel_mutual_information(jp)
                   - multivariate.shannon_mutual_information(jp.table) - tol)

        shape3 = tuple(int(v) for v in rng.integers(2, 4, size=3))
        j3 = _random_joint(rng, shape3)
        sub.add(multivariate.submodularity_check(j3) - tol)
        mi_nonneg.add(-multivariate.kernel_mutual_information(j3) - 1e-10)

        a, b, c = shape3
        x1 = rng.dirichlet(np.ones(a))
        t12 = rng.dirichlet(np.ones(b), size=a)
        t23 = rng.dirichlet(np.ones(c), size=b)
        chain = x1[:, None, None] * t12[:, :, None] * t23[None, :, :]
        chain = multivariate.JointDistribution(chain / chain.sum())
        markov.add(abs(multivariate.submodularity_check(chain)) - tol)
    return [add.result(), dpi.result(), sub.result(), markov.result(), mi_low.result(), mi_nonneg.result()]


def _random_potential(rng, r, scale=1.0):
    coeffs = {0: float(rng.normal())}
    for d in range(1, 2 * r + 1):
        if d <= r or rng.random() < 0.3:
            coeffs[d] = complex(rng.normal(), rng.normal()) * scale / d
            coeffs[-d] = np.conj(coeffs[d])
    return coeffs


def _random_toeplitz_moments(rng, m, atoms=4):
    """Moment matrix ``p^(omega - omega')`` of a random discrete measure on the torus."""
    x = rng.random(atoms)
    w = rng.dirichlet(np.ones(atoms))
    d = np.arange(m)[:, None] - np.arange(m)[None, :]
    return linops.hermitian(np.einsum("k,ijk->ij", w, np.exp(-2j * np.pi * d[..., None] * x)))


def varinf_suite(rng: np.random.Generator, trials: int = 20, slack: float = 1e-6) -> list:
    """Soundness and structural properties of the log-partition solvers.

    Random potentials include modes up to ``|delta| = 2r``, which only a few
    feature pairs can carry; these instances are poorly conditioned, so the
    solves use extrapolated steps.
    """
    sound, feas, shift = _Tally("upper_bound_soundness"), _Tally("dual_feasibility"), _Tally("shift_covariance")
    conc, mono, mm = _Tally("kernel_concavity"), _Tally("kernel_monotonicity"), _Tally("mm_monotonicity")
    trace = _Tally("objective_trace_monotone")
    for _ in range(trials):
        r = int(rng.integers(1, 6))
        sigma = float(rng.choice([0.3, 0.5, 1.0]))
        coeffs = _random_potential(rng, r, scale=float(rng.uniform(0.2, 2.0)))
        for eta in ("khat", "uniform", "khat-unnormalized"):
            prob = varinf.LogPartitionProblem.from_coefficients(r, coeffs, eta, sigma)
            solver = "nonisotropic" if eta == "khat-unnormalized" else "isotropic"
            rep = varinf.solve(prob, solver, extrapolation=True)
            truth = varinf.log_partition_quadrature(prob)
            sound.add(truth - rep.bound - slack)
            feas.add(rep.constraint_residual - 1e-9)
            trace.add(float(np.max(np.diff(rep.objective_trace), initial=-math.inf)))
            for c in (3.0, -3.0):
                moved = varinf.solve(prob.shifted(c), solver, extrapolation=True).bound
                shift.add(abs(moved - rep.bound - c) - slack)

        m = 2 * r + 1
        cp, cq = _random_toeplitz_moments(rng, m), _random_toeplitz_moments(rng, m, atoms=m + 3)
        e1, e2 = rng.dirichlet(np.ones(m)), rng.dirichlet(np.ones(m))
        mid = varinf.kernel_divergence(cp, cq, 0.5 * (e1 + e2))
        if math.isfinite(mid):
            conc.add(0.5 * varinf.kernel_divergence(cp, cq, e1) + 0.5 * varinf.kernel_divergence(cp, cq, e2)
                     - mid - 1e-8)
        small = e1 * rng.uniform(0.2, 1.0, size=m)
        mono.add(varinf.kernel_divergence(cp, cq, small) - varinf.kernel_divergence(cp, cq, e1) - 1e-8)

        cp = _random_toeplitz_moments(rng, m, atoms=int(rng.integers(1, m + 3)))
        _, tr = varinf.maximize_kernel_divergence(cp, rng.dirichlet(np.ones(m)), iters=30)
        mm.add(float(np.max(-np.diff(tr), initial=-math.inf)) - 1e-9)
    return [r.result() for r in (sound, feas, shift, trace, conc, mono, mm)]


def hypercube_suite(rng: np.random.Generator, trials: int = 50, max_d: int = 8) -> list:
    """Hypercube bounds against exhaustive entropies of random independent products."""
    tight, q_sound, ld_sound, opt = (_Tally(n) for n in ("hypercube_tight_d1", "hypercube_quantum_sound",
                                                          "hypercube_logdet_sound", "hypercube_optimized_le_uniform"))
    for _ in range(trials):
        m = rng.uniform(-1, 1, size=1)
        c = varinf.hypercube_moments(means=m)
        tight.add(abs(varinf.hypercube_entropy_bound(c) - varinf.hypercube_entropy(means=m)) - 1e-8)
    for d in range(1, max_d + 1):
        for _ in range(max(1, trials // max_d)):
            m = rng.uniform(-1, 1, size=d)
            probs = reduce(np.multiply.outer, [np.array([0.5 * (1 - v), 0.5 * (1 + v)]) for v in m])
            c = varinf.hypercube_moments(probabilities=probs)
            h = varinf.hypercube_entropy(probabilities=probs)
            uni = varinf.hypercube_entropy_bound(c)
            q_sound.add(h - uni - 1e-9)
            ld_sound.add(h - varinf.hypercube_logdet_bound(c) - 1e-9)
            _, best = varinf.hypercube_eta_optimize(c, iters=100)
            opt.add(best - uni - 1e-9)
            q_sound.add(h - best - 1e-9)
    return [r.result() for r in (tight, q_sound, ld_sound, opt)]


SUITES: dict[str, Callable] = {
    "quantum": quantum_suite,
    "discrete": discrete_suite,
    "multivariate": multivariate_suite,
    "varinf": varinf_suite,
    "hypercube": hypercube_suite,
}


def run_suites(seed: int, names=None, scale: float = 1.0) -> list:
    """Run the named suites (all by default) with trial counts scaled by ``scale``.

    Every suite gets its own generator derived from ``(seed, suite index)``;
    exceptions inside a suite are reported as a failed ``<suite>:error`` entry.
    """
    from .estimation import replication_rng

    names = list(SUITES) if names is None else list(names)
    defaults = {"quantum": 200, "discrete": 100, "multivariate": 50, "varinf": 20, "hypercube": 50}
    out = []
    for name in names:
        if name not in SUITES:
            raise KeyError(f"unknown suite {name!r}")
        rng = replication_rng(seed, list(SUITES).index(name))
        trials = max(1, int(round(defaults[name] * scale)))
        try:
            out.extend(SUITES[name](rng, trials=trials))
        except (KiteError, ArithmeticError, ValueError) as exc:
            out.append(CheckResult(f"{name}:error:{type(exc).__name__}", 1, 1, math.inf))
    return out
