import math

import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given
from hypothesis import strategies as st

from kite import kernels, quantum
from kite.errors import IllConditioned, InvalidInput, NotPSD, ShapeError
from kite.quantum import DensityOperator, DivergenceKind

from conftest import random_density

A2 = np.diag([0.5, 0.5])
B2 = np.diag([0.25, 0.75])


def _matrix_path_kl(a, b):
    # independent oracle: tr[A (log A - log B)] with scipy's logm
    return float(np.real(np.trace(a @ (sla.logm(a) - sla.logm(b)))))


def test_density_operator_validation():
    DensityOperator(np.eye(2) / 2, "t", normalized=True)
    with pytest.raises(InvalidInput):
        DensityOperator(np.eye(2), normalized=True)
    with pytest.raises(NotPSD):
        DensityOperator(np.diag([1.1, -0.1]))


def test_von_neumann_examples():
    assert quantum.von_neumann_entropy(np.diag([1.0, 0.0])) == 0.0
    assert quantum.von_neumann_entropy(A2) == pytest.approx(math.log(2), abs=1e-15)
    assert quantum.von_neumann_entropy(np.diag([0.5, 0.25, 0.25])) == pytest.approx(1.5 * math.log(2), abs=1e-14)
    with pytest.raises(NotPSD):
        quantum.von_neumann_entropy(np.diag([1.5, -0.5]))


def test_von_neumann_range(rng):
    for _ in range(20):
        g = rng.standard_normal((6, 3))
        a = g @ g.T
        a /= np.trace(a)
        h = quantum.von_neumann_entropy(a)
        assert -1e-12 <= h <= math.log(3) + 1e-12


def test_relative_entropy_examples(rng):
    a = random_density(rng, 4)
    assert abs(quantum.relative_entropy(a, a)) <= 1e-10
    assert quantum.relative_entropy(A2, B2) == pytest.approx(0.5 * math.log(4 / 3), abs=1e-14)
    assert quantum.relative_entropy(np.diag([1.0, 0.0]), np.diag([0.0, 1.0])) == math.inf
    with pytest.raises(ShapeError):
        quantum.relative_entropy(np.eye(2) / 2, np.eye(3) / 3)


def test_relative_entropy_matches_matrix_path(rng):
    for _ in range(10):
        a, b = random_density(rng, 5), random_density(rng, 5)
        assert quantum.relative_entropy(a, b) == pytest.approx(_matrix_path_kl(a, b), abs=1e-9)


def test_relative_entropy_support_inclusion():
    # A supported inside range(B): finite even though B is singular
    a = np.diag([0.6, 0.4, 0.0])
    b = np.diag([0.5, 0.3, 0.2])
    assert math.isfinite(quantum.relative_entropy(a, b))
    assert quantum.relative_entropy(b, a) == math.inf


def test_f_divergence_examples(rng):
    a = random_density(rng, 3)
    for kind in DivergenceKind:
        assert abs(quantum.f_divergence(a, a, kind)) <= 1e-10
    # classical Hellinger on the shared eigenbasis
    expected = 1 - (math.sqrt(0.5 * 0.25) + math.sqrt(0.5 * 0.75))
    assert quantum.f_divergence(A2, B2, DivergenceKind.SquaredHellinger) == pytest.approx(expected, abs=1e-14)
    assert expected == pytest.approx(0.034074, abs=1e-6)


@pytest.mark.parametrize("kind, f", [
    (DivergenceKind.SquaredHellinger, lambda t: 1 - np.sqrt(t)),
    (DivergenceKind.PearsonChi2, lambda t: (t - 1) ** 2 / t),
    (DivergenceKind.ReversePearsonChi2, lambda t: (t - 1) ** 2),
    (DivergenceKind.VinczeLeCam, lambda t: (t - 1) ** 2 / (1 + t)),
])
def test_f_divergence_commuting_reduces_to_classical(rng, kind, f):
    p, q = rng.dirichlet(np.ones(4)), rng.dirichlet(np.ones(4))
    u = np.linalg.qr(rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4)))[0]
    a, b = u @ np.diag(p) @ u.conj().T, u @ np.diag(q) @ u.conj().T
    assert quantum.f_divergence(a, b, kind) == pytest.approx(float(np.sum(p * f(q / p))), abs=1e-10)


def test_f_divergence_kl_matches_relative_entropy(rng):
    for _ in range(50):
        p, q = rng.dirichlet(np.ones(3)), rng.dirichlet(np.ones(3))
        a, b = np.diag(p), np.diag(q)
        assert quantum.f_divergence(a, b, "kl") == pytest.approx(quantum.relative_entropy(a, b), abs=1e-9)


def test_integral_oracle():
    assert abs(quantum.relative_entropy_integral(A2, A2)) <= 1e-8
    assert quantum.relative_entropy_integral(A2, B2) == pytest.approx(0.5 * math.log(4 / 3), abs=1e-6)


def test_integral_oracle_random(rng):
    for _ in range(5):
        a = random_density(rng, 4) + 0.05 * np.eye(4)
        b = random_density(rng, 4) + 0.05 * np.eye(4)
        a /= np.trace(a).real
        b /= np.trace(b).real
        assert quantum.relative_entropy_integral(a, b) == pytest.approx(quantum.relative_entropy(a, b), abs=1e-6)


def test_integral_oracle_unequal_traces():
    a, b = np.diag([0.5, 0.3]), np.diag([0.2, 0.6])
    assert quantum.relative_entropy_integral(a, b) == pytest.approx(quantum.relative_entropy(a, b), abs=1e-6)


def test_integral_oracle_needs_positive():
    with pytest.raises(IllConditioned):
        quantum.relative_entropy_integral(np.diag([1.0, 0.0]), A2)


def test_kernel_entropy_examples():
    # finite set, K = I: reduces to Shannon entropy
    fm = kernels.FiniteFeatureMap(kernels.FiniteGram(np.eye(3)))
    base = fm.covariance(np.full(3, 1 / 3))
    p = np.array([0.5, 0.25, 0.25])
    md = kernels.min_diag_log_sigma(fm, base)
    assert md == pytest.approx(math.log(1 / 3))
    assert quantum.kernel_entropy(fm.covariance(p), base, md) == pytest.approx(1.5 * math.log(2), abs=1e-12)
    # Dirac
    assert abs(quantum.kernel_entropy(fm.covariance([1.0, 0, 0]), base, md)) <= 1e-12
    # p = base on a symmetric set attains the upper end -tr[S log S]
    fmap = kernels.FourierFeatureMap(1.0, normalized=True)
    s = kernels.base_covariance_spectrum(fmap)
    md = kernels.min_diag_log_sigma(fmap, s)
    assert quantum.kernel_entropy(s, s, md) == pytest.approx(quantum.von_neumann_entropy(s), abs=1e-12)


@given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 6))
def test_nonnegativity_and_pinsker(seed, n):
    rng = np.random.default_rng(seed)
    a, b = random_density(rng, n), random_density(rng, n)
    d = quantum.relative_entropy(a, b)
    s = np.linalg.svd(a - b, compute_uv=False)
    assert d >= 0.5 * s.sum() ** 2 - 1e-8
    assert 0.5 * s.sum() ** 2 >= 0.5 * np.sum(s**2) - 1e-12


@given(seed=st.integers(0, 2**32 - 1), t=st.sampled_from([0.25, 0.5, 0.75]))
def test_joint_convexity(seed, t):
    rng = np.random.default_rng(seed)
    a1, b1, a2, b2 = (random_density(rng, 3) for _ in range(4))
    lhs = quantum.relative_entropy(t * a1 + (1 - t) * a2, t * b1 + (1 - t) * b2)
    assert lhs <= t * quantum.relative_entropy(a1, b1) + (1 - t) * quantum.relative_entropy(a2, b2) + 1e-8


@given(seed=st.integers(0, 2**32 - 1))
def test_unitary_invariance(seed):
    rng = np.random.default_rng(seed)
    a, b = random_density(rng, 4), random_density(rng, 4)
    u = np.linalg.qr(rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4)))[0]
    rot = quantum.relative_entropy(u @ a @ u.conj().T, u @ b @ u.conj().T)
    assert rot == pytest.approx(quantum.relative_entropy(a, b), abs=1e-9)
