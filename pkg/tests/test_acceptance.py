"""Numbered acceptance criteria, each with its own runtime budget.

Run with ``pytest tests/test_acceptance.py``; a summary line per criterion is
printed at the end of the session.
"""
import math
import time
from contextlib import contextmanager

import numpy as np
import pytest
from scipy.special import i0

from kite import checks, estimation, multivariate, quantum, varinf
from kite.estimation import IntegrationPlan, NamedDensity, SampleSet, Tabulated, Uniform
from kite.kernels import FourierFeatureMap, TorusExp, fourier_coefficient
from kite.multivariate import JointDistribution

LOG_I0_1 = math.log(float(i0(1.0)))


@contextmanager
def budget(seconds):
    start = time.perf_counter()
    yield
    elapsed = time.perf_counter() - start
    assert elapsed < seconds, f"took {elapsed:.1f} s, budget {seconds} s"


def _assert_clean(results, names=None):
    picked = [r for r in results if names is None or r.name in names]
    assert picked
    bad = [r.line() for r in picked if not r.passed]
    assert not bad, "; ".join(bad)


@pytest.mark.acceptance(1, "discrete reduction")
def test_discrete_reduction():
    rng = np.random.default_rng(101)
    with budget(5):
        for _ in range(100):
            m = int(rng.integers(2, 9))
            p, q = rng.dirichlet(np.ones(m)), rng.dirichlet(np.ones(m))
            shannon = -np.sum(p * np.log(p))
            assert abs(quantum.kernel_entropy(np.diag(p), np.eye(m) / m, -math.log(m)) - shannon) < 1e-10
            assert abs(multivariate.joint_entropy(JointDistribution(p)) - shannon) < 1e-10
            assert abs(quantum.relative_entropy(np.diag(p), np.diag(q)) - np.sum(p * np.log(p / q))) < 1e-10

            a, b = (int(v) for v in rng.integers(2, 5, size=2))
            t = rng.dirichlet(np.ones(a * b)).reshape(a, b)
            prod = np.outer(t.sum(1), t.sum(0))
            mi = np.sum(t * np.log(t / prod))
            assert abs(multivariate.kernel_mutual_information(JointDistribution(t)) - mi) < 1e-10


@pytest.mark.acceptance(2, "Fourier identity")
def test_fourier_identity():
    with budget(1):
        for sigma in (0.1, 0.5, 1.0, 2.0):
            r = math.ceil(60.0 / sigma)
            k = np.asarray(fourier_coefficient(TorusExp(sigma), np.arange(-r, r + 1)), dtype=float)
            series = float(np.sum(k * np.log(k)))
            closed = math.log(math.tanh(0.5 * sigma)) - sigma / math.sinh(sigma)
            assert abs(series - closed) < 1e-10, sigma


@pytest.mark.acceptance(3, "sandwich inequality")
def test_sandwich():
    sigmas = (1.0, 0.3, 0.1)
    rng = np.random.default_rng(3)
    grid = np.linspace(0.0, 1.0, 9)
    with budget(60):
        for _ in range(20):
            p = Tabulated(grid, rng.uniform(0.2, 2.0, size=grid.size))
            q = Tabulated(grid, rng.uniform(0.2, 2.0, size=grid.size))
            for sigma in sigmas:
                res = estimation.sandwich_check(p, q, sigma)
                assert res.d_smoothed <= res.d_kernel + 1e-6, (sigma, res)
                assert res.d_kernel <= res.d_shannon + 1e-6, (sigma, res)

        p = estimation.Mixture([NamedDensity("triangle"), Uniform()], [0.9, 0.1])
        q = Uniform()
        gaps = []
        for sigma in sigmas:
            res = estimation.sandwich_check(p, q, sigma)
            assert res.holds, (sigma, res)
            gaps.append(res.d_shannon - res.d_kernel)
        assert all(g > 0 for g in gaps)
        assert gaps[0] > gaps[1] > gaps[2], gaps


@pytest.mark.acceptance(4, "entropy estimator convergence")
def test_entropy_convergence():
    sigma, reps, ns = 0.1, 20, (32, 64, 128, 256, 512, 1024)
    tri, base, spec = NamedDensity("triangle"), Uniform(), TorusExp(0.1)
    with budget(300):
        limit = estimation.quadrature_negentropy(tri, FourierFeatureMap(sigma), IntegrationPlan(resolution=4096))
        sample_err, proj_err = [], []
        for n in ns:
            s_vals, p_vals = [], []
            for rep in range(reps):
                rng = estimation.replication_rng(7, rep)
                pts = tri.sample(rng, n)
                marks = rng.random(n)
                s_vals.append(estimation.empirical_entropy_gram(SampleSet(pts), spec))
                p_vals.append(estimation.projection_estimator(tri, base, SampleSet(marks), spec).entropy_p)
            s_vals, p_vals = np.array(s_vals), np.array(p_vals)
            sample_err.append(s_vals.mean() - limit)
            proj_err.append(p_vals.mean() - limit)
            assert s_vals.mean() > limit, (n, sample_err[-1])
            assert np.all(p_vals <= limit + 1e-6), (n, p_vals.max() - limit)
    assert sample_err[-1] < sample_err[0]
    assert proj_err[-1] > proj_err[0]
    assert abs(proj_err[-1]) < abs(sample_err[-1]), (proj_err[-1], sample_err[-1])


@pytest.mark.acceptance(5, "quantum property suite")
def test_quantum_suite():
    with budget(60):
        results = checks.quantum_suite(np.random.default_rng(5), trials=200, dims=(3, 5, 8), slack=1e-8)
    _assert_clean(results)
    assert all(r.trials >= 600 for r in results if r.name != "kl_generator_consistency")


@pytest.mark.acceptance(6, "log-partition soundness")
def test_logpartition_soundness():
    rs = [2, 5, 10, 15, 20, 25, 30, 35, 40, 45, 50]
    with budget(120):
        bounds = {}
        for sigma in (1.0, 0.5, 0.2):
            sweep = varinf.truncation_sweep(
                lambda r, s=sigma: varinf.LogPartitionProblem.cosine(r, sigma=s, eta="khat-unnormalized"),
                rs, solver="nonisotropic", extrapolation=True)
            bounds[sigma] = [rep.bound for rep in sweep]
            iso = varinf.truncation_sweep(
                lambda r, s=sigma: varinf.LogPartitionProblem.cosine(r, sigma=s, eta="khat"),
                rs, solver="isotropic", extrapolation=True)
            for b in bounds[sigma] + [rep.bound for rep in iso]:
                assert b >= LOG_I0_1 - 1e-6, (sigma, b)
            assert np.all(np.diff(bounds[sigma]) <= 1e-12), (sigma, bounds[sigma])
    assert abs(bounds[0.2][-1] - LOG_I0_1) < 0.05, bounds[0.2][-1]


@pytest.mark.acceptance(7, "kernel learning")
def test_kernel_learning():
    with budget(180):
        for r in (10, 25, 50):
            prob = varinf.LogPartitionProblem.cosine(r, eta="uniform")
            uniform = varinf.solve(prob, "isotropic").bound
            learned = varinf.solve_logpartition_with_kernel_learning(prob, outer_iters=20)
            assert min(learned.metadata["mm_gains"]) >= -1e-9, r
            assert np.all(np.diff(learned.objective_trace) <= 0.0)
            assert learned.bound <= uniform + 1e-12, (r, learned.bound, uniform)
            assert learned.bound >= LOG_I0_1 - 1e-6

            c = varinf.primal_moments(learned)
            _, trace = varinf.maximize_kernel_divergence(c, iters=50)
            assert np.all(np.diff(trace) >= -1e-9), r


@pytest.mark.acceptance(8, "hypercube bounds")
def test_hypercube():
    with budget(120):
        results = checks.hypercube_suite(np.random.default_rng(8), trials=50, max_d=8)
    _assert_clean(results)
    tight = next(r for r in results if r.name == "hypercube_tight_d1")
    assert tight.trials == 50


@pytest.mark.acceptance(9, "multivariate suite")
def test_multivariate_suite():
    with budget(60):
        results = checks.multivariate_suite(np.random.default_rng(9), trials=50, tol=1e-8)
    _assert_clean(results, {"tensor_additivity", "data_processing", "submodularity", "markov_chain_equality"})
    _assert_clean(results)


@pytest.mark.acceptance(10, "degrees of freedom")
def test_degrees_of_freedom():
    with budget(5):
        for sigma in (0.01, 0.02, 0.05, 0.08, 0.1):
            fmap = FourierFeatureMap(sigma)
            top = math.tanh(0.5 * sigma)
            for nu in (1e-6, 1e-4, 1e-2, 0.1, 0.5):
                lam = nu * top
                assert estimation.degrees_of_freedom(fmap, lam) <= estimation.dof_upper_bound(sigma, lam), (sigma, nu)
            lams = np.logspace(-10, 1, 60)
            df = np.array([estimation.degrees_of_freedom(fmap, lam) for lam in lams])
            assert np.all(np.diff(df) < 0), sigma
