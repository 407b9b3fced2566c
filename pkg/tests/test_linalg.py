import numpy as np
import pytest

from afrs.linalg import (
    ContractError,
    ProbabilityTable,
    SizeError,
    clip_weights,
    hermitian_eig,
    kron,
    kron_all,
    partial_trace,
    sample_discrete,
)
from afrs.rng import stream
from afrs.states import PAULI, random_density

I2 = np.eye(2)


def test_kron_identity():
    assert np.array_equal(kron(I2, I2), np.eye(4))


def test_kron_projectors():
    out = kron(np.diag([1.0, 0.0]), np.diag([0.0, 1.0]))
    assert np.array_equal(out, np.diag([0.0, 1.0, 0.0, 0.0]))


def test_kron_xx_flips_00():
    xx = kron(PAULI["X"], PAULI["X"])
    v = np.zeros(4)
    v[0] = 1.0
    out = xx @ v
    assert np.allclose(out, [0, 0, 0, 1])


def test_kron_associativity(rng):
    mats = [rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2)) for _ in range(3)]
    a, b, c = mats
    assert np.allclose(kron(kron(a, b), c), kron(a, kron(b, c)), atol=1e-12)


def test_kron_size_cap():
    big = np.eye(2 ** 7)
    with pytest.raises(SizeError):
        kron(big, np.eye(2 ** 7))


def test_partial_trace_maximally_mixed():
    out = partial_trace(np.eye(4) / 4, [2, 2], [0])
    assert np.allclose(out, I2 / 2, atol=1e-12)


def test_partial_trace_bell():
    v = np.zeros(4)
    v[0] = v[3] = 1 / np.sqrt(2)
    out = partial_trace(np.outer(v, v), [2, 2], [0])
    assert np.allclose(out, I2 / 2, atol=1e-12)


def test_partial_trace_product_factorizes(rng):
    rho = random_density(3, rng).matrix
    tau = random_density(3, rng).matrix
    out = partial_trace(np.kron(rho, tau), [3, 3], [0])
    assert np.allclose(out, rho * np.trace(tau), atol=1e-12)


def test_partial_trace_preserves_trace(rng):
    m = random_density(8, rng).matrix
    for keep in ([0], [1], [2], [0, 2], [0, 1, 2]):
        out = partial_trace(m, [2, 2, 2], keep)
        assert abs(np.trace(out) - np.trace(m)) < 1e-10


def test_partial_trace_bad_keep():
    with pytest.raises(ValueError):
        partial_trace(np.eye(4), [2, 2], [2])


def test_hermitian_eig_diagonal():
    vals, vecs = hermitian_eig(np.diag([3.0, 1.0]))
    assert np.allclose(vals, [3.0, 1.0])
    assert np.allclose(np.abs(vecs), np.eye(2))


def test_hermitian_eig_pauli_x():
    vals, vecs = hermitian_eig(PAULI["X"])
    assert np.allclose(vals, [1.0, -1.0])
    plus = np.array([1, 1]) / np.sqrt(2)
    assert min(np.linalg.norm(vecs[:, 0] - plus), np.linalg.norm(vecs[:, 0] + plus)) < 1e-10


def test_hermitian_eig_reconstruction(rng):
    m = rng.normal(size=(8, 8)) + 1j * rng.normal(size=(8, 8))
    m = m + m.conj().T
    vals, vecs = hermitian_eig(m)
    rebuilt = (vecs * vals) @ vecs.conj().T
    assert np.max(np.abs(rebuilt - m)) < 1e-8
    assert np.max(np.abs(vecs.conj().T @ vecs - np.eye(8))) < 1e-8
    for k in range(8):
        assert np.max(np.abs(m @ vecs[:, k] - vals[k] * vecs[:, k])) < 1e-8


def test_hermitian_eig_rejects_non_hermitian():
    with pytest.raises(ContractError):
        hermitian_eig(np.array([[0.0, 1.0], [0.0, 0.0]]))


def test_probability_table_clips_noise():
    t = ProbabilityTable([0.5, -1e-13, 0.5])
    assert t.weights[1] == 0.0
    assert abs(t.weights.sum() - 1.0) < 1e-12


def test_probability_table_rejects_real_negativity():
    with pytest.raises(ContractError):
        ProbabilityTable([0.5, -1e-11, 0.5])
    with pytest.raises(ContractError):
        clip_weights(np.array([0.3, -2e-12]))


def test_probability_table_empty():
    with pytest.raises(ValueError):
        ProbabilityTable([])


def test_sample_discrete_single_label(rng):
    t = ProbabilityTable([1.0], labels=["only"])
    assert all(sample_discrete(t, rng) == "only" for _ in range(20))


def test_sample_discrete_zero_mass_excluded(rng):
    t = ProbabilityTable([0.0, 1.0], labels=[7, 9])
    assert all(sample_discrete(t, rng) == 9 for _ in range(50))


def test_sample_discrete_deterministic():
    t = ProbabilityTable([0.3, 0.7])
    a = [sample_discrete(t, stream(5, "det")) for _ in range(10)]
    b = [sample_discrete(t, stream(5, "det")) for _ in range(10)]
    assert a == b


def test_sample_discrete_frequencies():
    t = ProbabilityTable([0.5, 0.5])
    gen = stream(13, "freq")
    draws = np.array([t.sample_index(gen) for _ in range(100_000)])
    freq = draws.mean()
    assert 0.49 <= freq <= 0.51
