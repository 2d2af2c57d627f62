import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special

from kite import varinf as V
from kite.errors import DomainError, IllConditioned, InvalidInput, NotPSD
from kite.estimation import NamedDensity
from kite.varinf import LogPartitionProblem as LP

TRUTH = math.log(special.i0(1.0))  # log int_0^1 exp(cos 2 pi x) dx


def _toeplitz_moments(density, r):
    lags = np.arange(-r, r + 1)
    return np.real(density.fourier(lags[:, None] - lags[None, :]))


def test_problem_validation():
    with pytest.raises(InvalidInput):
        LP(1, np.array([0, 1j, 0, 1j, 0]), np.full(3, 1 / 3))
    with pytest.raises(InvalidInput):
        LP(1, np.zeros(5), np.full(3, 0.5))
    with pytest.raises(InvalidInput):
        LP.from_coefficients(1, {3: 1.0}, "uniform")
    p = LP.cosine(2, sigma=0.5)
    assert p.isotropic and p.dim == 5
    assert not LP.cosine(2, sigma=0.5, eta="khat-unnormalized").isotropic
    np.testing.assert_allclose(p.potential([0.0, 0.5]), [1.0, -1.0], atol=1e-14)


def test_truth_oracle():
    assert V.log_partition_quadrature(LP.cosine(3, eta="uniform")) == pytest.approx(TRUTH, abs=1e-13)
    assert TRUTH == pytest.approx(0.2359143585, abs=1e-10)


def test_constraint_matrices():
    eta = np.array([0.2, 0.5, 0.3])
    p = LP(1, np.zeros(5), eta)
    a = V.constraint_matrices(p)
    np.testing.assert_allclose(a[0], np.diag(eta))
    np.testing.assert_allclose(a[1], np.diag(np.sqrt(eta[1:] * eta[:-1]), -1))
    for d in range(-2, 3):
        np.testing.assert_array_equal(a[-d], a[d].T)
    flat = np.array([m.ravel() for m in a.values()])
    assert np.linalg.matrix_rank(flat @ flat.T) == 5


def test_affine_project(rng):
    p = LP.from_coefficients(2, {1: 0.3 + 0.1j, 2: -0.2, 0: 0.5}, "uniform")
    a = V.constraint_matrices(p)
    z = rng.standard_normal((5, 5)) + 1j * rng.standard_normal((5, 5))
    m = V.affine_project(z, p)
    for d, ad in a.items():
        assert abs(np.sum(ad * m) - p.fhat[d + 4]) <= 1e-10 * (1 + np.abs(p.fhat).max())
    np.testing.assert_allclose(V.affine_project(m, p), m, atol=1e-12)
    # orthogonality: the correction lies in the span of the constraint operators
    other = V.affine_project(z + 1.0, p)
    assert abs(np.vdot(m - z, other - m)) <= 1e-9
    # f = 0 and Z = I at r = 1
    zero = LP(1, np.zeros(5), np.array([0.2, 0.5, 0.3]))
    m0 = V.affine_project(np.eye(3), zero)
    assert abs(np.sum(zero.eta * np.diag(m0))) <= 1e-14


def test_affine_project_drops_small_weights():
    p = LP(1, np.array([0, 0, 1.0, 0, 0]), np.array([0.0, 1.0, 0.0]))
    m = V.affine_project(np.ones((3, 3)), p)
    assert m[0].any() == False and m[1, 1] == pytest.approx(1.0)  # noqa: E712


def test_unrepresentable_mode():
    p = LP(1, np.array([1.0, 0, 0, 0, 1.0]), np.array([0.5, 0.5, 0.0]))
    with pytest.raises(IllConditioned):
        V.solve(p)


@pytest.mark.parametrize("eta", ["uniform", "khat"])
def test_zero_and_constant_potential(eta):
    for r in (1, 4):
        p = LP.from_coefficients(r, {}, eta, sigma=0.5)
        assert abs(V.solve(p).bound) <= 1e-8
        assert V.solve(p.shifted(1.7)).bound == pytest.approx(1.7, abs=1e-8)


def test_nonisotropic_zero_and_constant():
    p = LP.from_coefficients(3, {}, "khat-unnormalized", sigma=1.0)
    s = p.eta.sum()
    assert s < 1
    rep = V.solve_logpartition_nonisotropic(p)
    # M = 0 is optimal, P(0) = log s, and the bound s (P(0) - log s) vanishes
    assert abs(rep.bound) <= 1e-9
    assert abs(V.solve_logpartition_nonisotropic(p.with_eta(p.eta / s)).bound) <= 1e-6
    c = V.solve_logpartition_nonisotropic(p.with_eta(p.eta / s).shifted(2.0)).bound
    assert c == pytest.approx(2.0, abs=1e-6)
    assert rep.metadata["closed_form"] == pytest.approx(rep.bound, abs=1e-9)


def test_cosine_isotropic_example():
    rep = V.solve(LP.cosine(20, sigma=0.2))
    assert rep.bound >= TRUTH - 1e-6
    assert rep.bound - TRUTH < 0.05
    assert rep.constraint_residual <= 1e-9
    assert all(b <= a + 1e-15 for a, b in zip(rep.objective_trace, rep.objective_trace[1:]))


def test_cosine_nonisotropic_gap_shrinks():
    bounds = [V.solve(LP.cosine(r, sigma=0.5, eta="khat-unnormalized")).bound for r in (2, 5, 10, 20)]
    assert all(b >= TRUTH - 1e-6 for b in bounds)
    assert all(b2 <= b1 + 1e-12 for b1, b2 in zip(bounds, bounds[1:]))


def test_solver_options_agree():
    p = LP.cosine(6, sigma=0.5)
    ref = V.solve(p).bound
    assert V.solve(p, extrapolation=True).bound == pytest.approx(ref, abs=1e-8)
    assert V.solve(p, preconditioned=False, max_iter=20000).bound == pytest.approx(ref, abs=1e-7)
    with pytest.raises(InvalidInput):
        V.solve(p, solver="newton")
    with pytest.raises(InvalidInput):
        V.solve_logpartition_torus(LP.cosine(3, sigma=0.5, eta="khat-unnormalized"))


def test_tilde_log():
    assert V.tilde_log(1.0) == 0.0
    assert V.tilde_log(math.e) == pytest.approx(1.0)
    assert V.tilde_log(0.5) == -0.5
    h = 1e-7
    assert (V.tilde_log(1 + h) - V.tilde_log(1 - h)) / (2 * h) == pytest.approx(1.0, abs=1e-6)
    with pytest.raises(DomainError):
        V.tilde_log(0.0)


def test_temperature_bound():
    p = LP.cosine(30, sigma=0.2)
    assert V.temperature_bound(p, 1.0) == pytest.approx(V.solve(p).bound, abs=1e-12)
    vals = []
    for eps in (1.0, 0.5):
        b = V.temperature_bound(p, eps)
        assert b >= V.log_partition_quadrature(p, epsilon=eps) - 1e-6
        vals.append(b)
    assert vals[1] > vals[0]  # moves toward max f = 1
    const = LP.from_coefficients(2, {0: 0.7}, "uniform")
    for eps in (1.0, 0.3):
        assert V.temperature_bound(const, eps) == pytest.approx(0.7, abs=1e-8)
    with pytest.raises(InvalidInput):
        V.temperature_bound(p, 0.0)


def test_mm_update_examples():
    n = 7
    u = np.full(n, 1 / n)
    np.testing.assert_allclose(V.mm_update_eta(np.eye(n), u), u, atol=1e-14)
    assert abs(V.mm_objective(np.eye(n), u)) <= 1e-14
    eta, trace = V.maximize_kernel_divergence(np.ones((n, n)), iters=50)
    assert all(b >= a - 1e-9 for a, b in zip(trace, trace[1:]))
    with pytest.raises(NotPSD):
        V.mm_update_eta(np.array([[1, 2], [2, 1.0]]), [0.5, 0.5])
    with pytest.raises(InvalidInput):
        V.mm_update_eta(np.eye(2), [1.0, 0.0])


def test_mm_triangle_kernel_learning_helps():
    c = _toeplitz_moments(NamedDensity("triangle"), 50)
    eta, trace = V.maximize_kernel_divergence(c, iters=100)
    assert all(b >= a - 1e-9 for a, b in zip(trace, trace[1:]))
    assert trace[-1] > trace[0] + 1e-3


def test_kernel_divergence_matches_mm_objective(rng):
    c = _toeplitz_moments(NamedDensity("triangle"), 4)
    eta = rng.dirichlet(np.ones(9))
    assert V.kernel_divergence(c, np.eye(9), eta) == pytest.approx(V.mm_objective(c, eta), abs=1e-12)


def test_kernel_learning():
    zero = LP.from_coefficients(4, {}, "uniform")
    assert abs(V.solve_logpartition_with_kernel_learning(zero, outer_iters=3).bound) <= 1e-8
    for r in (3, 8):
        p = LP.cosine(r, eta="uniform")
        uni = V.solve(p).bound
        rep = V.solve_logpartition_with_kernel_learning(p, outer_iters=10)
        assert rep.bound <= uni + 1e-8
        assert rep.bound >= TRUTH - 1e-6
        t = rep.objective_trace
        assert all(b <= a + 1e-8 for a, b in zip(t, t[1:]))
        assert rep.metadata["initial_bound"] == pytest.approx(uni, abs=1e-9)
        assert len(rep.metadata["mm_gains"]) == 10
        assert min(rep.metadata["mm_gains"]) >= -1e-9
    with pytest.raises(InvalidInput):
        V.solve_logpartition_with_kernel_learning(LP.cosine(3, sigma=1.0, eta="khat-unnormalized"))


def test_primal_moments_are_toeplitz_unit_diagonal():
    rep = V.solve(LP.cosine(5, sigma=0.5))
    c = V.primal_moments(rep)
    np.testing.assert_allclose(np.diag(c), 1.0)
    assert np.linalg.eigvalsh(c)[0] >= -1e-10
    for k in range(1, 5):
        assert np.ptp(np.diagonal(c, k)) <= 1e-14
    # first moment of the Gibbs-like primal is positive for f = cos
    assert c[1, 0] > 0


def test_embed_dual_and_warm_sweep():
    m = np.arange(9.0).reshape(3, 3)
    big = V.embed_dual(m, 3)
    np.testing.assert_array_equal(big[2:5, 2:5], m)
    assert big.sum() == m.sum()
    rs = [2, 4, 8]
    warm = V.truncation_sweep(lambda r: LP.cosine(r, sigma=0.5), rs)
    cold = [V.solve(LP.cosine(r, sigma=0.5)) for r in rs]
    for w, c in zip(warm, cold):
        assert w.bound == pytest.approx(c.bound, abs=1e-8)


def test_hypercube_examples():
    c = varinf_c = V.hypercube_moments(means=[0.8])
    np.testing.assert_allclose(varinf_c, [[1, 0.8], [0.8, 1]])
    expected = -(0.9 * math.log(0.9) + 0.1 * math.log(0.1))
    assert V.hypercube_entropy_bound(c) == pytest.approx(expected, abs=1e-12)
    assert V.hypercube_entropy(means=[0.8]) == pytest.approx(expected, abs=1e-14)
    for d in (1, 3, 5):
        assert V.hypercube_entropy_bound(np.eye(d + 1)) == pytest.approx(d * math.log(2), abs=1e-12)
    ld = V.hypercube_logdet_bound(np.eye(2))
    assert ld == pytest.approx(0.5 * math.log(4 / 3) + 0.5 * math.log(math.pi * math.e / 2), abs=1e-14)
    assert ld == pytest.approx(0.8696324, abs=1e-7)
    with pytest.raises(InvalidInput):
        V.hypercube_entropy_bound(np.array([[2.0, 0], [0, 1]]))


def test_hypercube_uniform_eta_formula(rng):
    m = rng.uniform(-1, 1, 3)
    c = V.hypercube_moments(means=m)
    lam = np.linalg.eigvalsh(c)
    assert V.hypercube_entropy_bound(c) == pytest.approx(3 * math.log(2) - np.sum(lam * np.log(lam)) / 4, abs=1e-12)


def test_hypercube_enumeration(rng):
    probs = rng.dirichlet(np.ones(8)).reshape(2, 2, 2)
    c = V.hypercube_moments(probabilities=probs)
    pts = np.array([[a, b, cc, 1] for a in (-1, 1) for b in (-1, 1) for cc in (-1, 1)], dtype=float)
    np.testing.assert_allclose(c, (pts * probs.ravel()[:, None]).T @ pts, atol=1e-15)
    assert V.hypercube_entropy_bound(c) >= V.hypercube_entropy(probabilities=probs) - 1e-9


def test_hypercube_eta_optimize(rng):
    eta, b = V.hypercube_eta_optimize(np.eye(4))
    np.testing.assert_allclose(eta, 0.25, atol=1e-12)
    c1 = V.hypercube_moments(means=[0.3])
    _, b1 = V.hypercube_eta_optimize(c1)
    assert b1 == pytest.approx(V.hypercube_entropy(means=[0.3]), abs=1e-8)
    m = rng.uniform(-1, 1, 4)
    probs = np.array([1.0])
    for v in m:
        probs = np.multiply.outer(probs, [0.5 * (1 - v), 0.5 * (1 + v)])
    c = V.hypercube_moments(probabilities=probs.reshape((2,) * 4))
    _, opt = V.hypercube_eta_optimize(c)
    assert V.hypercube_entropy(means=m) - 1e-9 <= opt <= V.hypercube_entropy_bound(c) + 1e-9


def test_hypercube_logdet_in_d():
    vals = [V.hypercube_logdet_bound(V.hypercube_moments(means=np.full(d, 0.4))) for d in range(1, 9)]
    assert all(b > a for a, b in zip(vals, vals[1:]))


@settings(max_examples=15)
@given(seed=st.integers(0, 2**32 - 1), c=st.sampled_from([-3.0, 3.0]))
def test_soundness_and_shift_covariance(seed, c):
    rng = np.random.default_rng(seed)
    r = int(rng.integers(1, 5))
    coeffs = {k: complex(rng.normal(scale=0.5), rng.normal(scale=0.5)) for k in range(1, 2 * r + 1)}
    coeffs[0] = float(rng.normal())
    p = LP.from_coefficients(r, coeffs, "khat", sigma=float(rng.uniform(0.3, 2.0)))
    rep = V.solve(p, extrapolation=True)
    assert rep.bound >= V.log_partition_quadrature(p) - 1e-6
    assert rep.constraint_residual <= 1e-9
    shifted = V.solve(p.shifted(c), extrapolation=True).bound
    assert shifted == pytest.approx(rep.bound + c, abs=1e-6)


@given(seed=st.integers(0, 2**32 - 1))
def test_kernel_concavity_and_monotonicity(seed):
    rng = np.random.default_rng(seed)
    n = 5
    cp = _random_toeplitz(rng, n)
    cq = _random_toeplitz(rng, n) * 0.5 + 0.5 * np.eye(n)
    e1, e2 = rng.dirichlet(np.ones(n)), rng.dirichlet(np.ones(n))
    mid = V.kernel_divergence(cp, cq, 0.5 * (e1 + e2))
    assert mid >= 0.5 * V.kernel_divergence(cp, cq, e1) + 0.5 * V.kernel_divergence(cp, cq, e2) - 1e-8
    small = e1 * rng.uniform(0, 1, n)
    assert V.kernel_divergence(cp, cq, small) <= V.kernel_divergence(cp, cq, e1) + 1e-8


def _random_toeplitz(rng, n, atoms=4):
    x = rng.random(atoms)
    w = rng.dirichlet(np.ones(atoms))
    lags = np.arange(n)
    d = lags[:, None] - lags[None, :]
    return np.real(np.einsum("k,kij->ij", w, np.exp(2j * np.pi * x[:, None, None] * d[None])))
