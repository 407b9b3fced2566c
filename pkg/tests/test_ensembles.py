import itertools

import numpy as np
import pytest

from afrs.linalg import ContractError
from afrs.ensembles import (
    GLOBAL_CLIFFORD,
    IDENTITY,
    LOCAL_CLIFFORD,
    UnitarySample,
    apply_to_density,
    born_diagonal,
    dense_unitary,
    identity_sample,
    inverse_channel_snapshot,
    sample_global_clifford,
    sample_local_clifford,
    single_qubit_cliffords,
)
from afrs.rng import stream
from afrs.states import PAULI, random_density


def _phase_equal(a, b):
    overlap = np.trace(a.conj().T @ b) / a.shape[0]
    return abs(abs(overlap) - 1.0) < 1e-9


def _phase_member(u, table):
    return any(_phase_equal(u, w) for w in table)


def test_single_qubit_cliffords_count_and_distinct():
    table = single_qubit_cliffords()
    assert len(table) == 24
    for a, b in itertools.combinations(table, 2):
        assert not _phase_equal(a, b)


def test_cliffords_contain_identity_and_hadamard():
    table = single_qubit_cliffords()
    assert np.allclose(table[0], np.eye(2))
    h = np.array([[1, 1], [1, -1]]) / np.sqrt(2)
    assert _phase_member(h, table)
    # Hadamard maps Z to X under conjugation
    assert np.allclose(h @ PAULI["Z"] @ h, PAULI["X"], atol=1e-12)


def test_cliffords_closed_under_composition(rng):
    table = single_qubit_cliffords()
    for _ in range(100):
        u = table[rng.integers(24)] @ table[rng.integers(24)]
        assert _phase_member(u, table)


def test_cliffords_normalize_paulis():
    table = single_qubit_cliffords()
    paulis = [PAULI[c] for c in "XYZ"]
    for u in table:
        for p in paulis:
            img = u @ p @ u.conj().T
            assert any(
                np.allclose(img, s * q, atol=1e-9) for q in paulis for s in (1, -1)
            )


def test_sample_local_clifford_shape_and_determinism():
    s = sample_local_clifford(3, stream(3, "det"))
    assert len(s.factors) == 3
    s2 = sample_local_clifford(3, stream(3, "det"))
    assert s.indices == s2.indices


def test_sample_local_clifford_uniform():
    counts = np.zeros(24)
    gen = stream(17, "uniform")
    n_draws = 24_000
    for _ in range(n_draws):
        counts[sample_local_clifford(1, gen).indices[0]] += 1
    expect = n_draws / 24
    sigma = np.sqrt(n_draws * (1 / 24) * (1 - 1 / 24))
    assert np.max(np.abs(counts - expect)) < 5 * sigma


def test_global_clifford_unitary(rng):
    for n in (1, 2, 3):
        v = sample_global_clifford(n, rng)
        u = v.dense
        assert np.max(np.abs(u @ u.conj().T - np.eye(2 ** n))) < 1e-10


def test_global_clifford_n1_uniform_over_24():
    table = single_qubit_cliffords()
    counts = np.zeros(24)
    gen = stream(23, "gl1")
    n_draws = 24_000
    for _ in range(n_draws):
        u = sample_global_clifford(1, gen).dense
        hits = [j for j, w in enumerate(table) if _phase_equal(u, w)]
        assert len(hits) == 1
        counts[hits[0]] += 1
    expect = n_draws / 24
    sigma = np.sqrt(n_draws * (1 / 24) * (1 - 1 / 24))
    assert np.max(np.abs(counts - expect)) < 5 * sigma


def test_global_clifford_twirl_n2():
    # one-design check: E_V[V^dag |b><b| V] = I/4
    gen = stream(29, "twirl")
    acc = np.zeros((4, 4), dtype=complex)
    n_draws = 100_000
    for _ in range(n_draws):
        u = sample_global_clifford(2, gen).dense
        acc += u.conj().T[:, 1][:, None] * u[1, :][None, :]
    acc /= n_draws
    assert np.max(np.abs(acc - np.eye(4) / 4)) < 0.01


def test_inverse_channel_examples():
    local = UnitarySample(ensemble=LOCAL_CLIFFORD, n=1, factors=(np.eye(2, dtype=complex),))
    assert np.allclose(inverse_channel_snapshot(local, 0), np.diag([2.0, -1.0]), atol=1e-12)
    glob = UnitarySample(ensemble=GLOBAL_CLIFFORD, n=1, dense=np.eye(2, dtype=complex))
    assert np.allclose(inverse_channel_snapshot(glob, 0), np.diag([2.0, -1.0]), atol=1e-12)


def test_inverse_channel_trace_one(rng):
    for _ in range(5):
        s = sample_local_clifford(3, rng)
        b = int(rng.integers(8))
        snap = inverse_channel_snapshot(s, b)
        assert abs(np.trace(snap) - 1.0) < 1e-12
        assert np.max(np.abs(snap - snap.conj().T)) < 1e-12
    g = sample_global_clifford(2, rng)
    snap = inverse_channel_snapshot(g, 2)
    assert abs(np.trace(snap) - 1.0) < 1e-12


def test_inverse_channel_identity_ensemble_rejected():
    with pytest.raises(ContractError):
        inverse_channel_snapshot(identity_sample(2), 0)


def _enumerate_local(n):
    table = single_qubit_cliffords()
    for combo in itertools.product(range(24), repeat=n):
        yield UnitarySample(
            ensemble=LOCAL_CLIFFORD, n=n, factors=tuple(table[i] for i in combo)
        )


@pytest.mark.parametrize("n", [1, 2])
def test_channel_inversion_exhaustive_local(n, rng):
    d = 2 ** n
    for _ in range(5):
        rho = random_density(d, rng).matrix
        acc = np.zeros((d, d), dtype=complex)
        count = 0
        for v in _enumerate_local(n):
            diag = born_diagonal(v, rho)
            for b in range(d):
                acc += diag[b] * inverse_channel_snapshot(v, b)
            count += 1
        assert np.max(np.abs(acc / count - rho)) < 1e-10


@pytest.mark.parametrize("n", [1, 2])
def test_channel_inversion_monte_carlo_global(n):
    d = 2 ** n
    gen = stream(31, "inv", n)
    states = [random_density(d, stream(37, "st", n, k)).matrix for k in range(5)]
    n_draws = 20_000
    acc = [np.zeros((d, d), dtype=complex) for _ in states]
    sq = [np.zeros((d, d)) for _ in states]
    for _ in range(n_draws):
        v = sample_global_clifford(n, gen)
        snaps = [inverse_channel_snapshot(v, b) for b in range(d)]
        for i, rho in enumerate(states):
            diag = born_diagonal(v, rho)
            term = sum(diag[b] * snaps[b] for b in range(d))
            acc[i] += term
            sq[i] += np.abs(term) ** 2
    for i, rho in enumerate(states):
        mean = acc[i] / n_draws
        var = sq[i] / n_draws - np.abs(mean) ** 2
        sigma = np.sqrt(np.maximum(var, 1e-12) / n_draws)
        assert np.all(np.abs(mean - rho) < 3 * sigma + 1e-6)


def _channel_supermatrix(n):
    """Dense superoperator of the measure-and-rotate channel, exhaustively."""
    d = 2 ** n
    mat = np.zeros((d * d, d * d), dtype=complex)
    count = 0
    for v in _enumerate_local(n):
        vm = dense_unitary(v)
        for b in range(d):
            proj = vm.conj().T[:, b]
            ket = np.outer(proj, proj.conj())
            mat += np.outer(ket.reshape(-1), ket.conj().reshape(-1))
            count += 0
        count += 1
    return mat / count


def test_inverse_channel_self_adjoint(rng):
    # Build the measurement channel exhaustively as a supermatrix.  Its
    # numerical inverse must (a) match the hard-coded snapshot formula on
    # measurement projectors, (b) be self-adjoint, and (c) undo the channel
    # when the formula is extended by linearity over the (V, b) average.
    for n in (1, 2):
        d = 2 ** n
        m = _channel_supermatrix(n)
        m_inv = np.linalg.inv(m)

        def inv_map(y):
            return (m_inv @ y.reshape(-1)).reshape(d, d)

        v = sample_local_clifford(n, rng)
        vm = dense_unitary(v)
        for b in range(d):
            col = vm.conj().T[:, b]
            proj = np.outer(col, col.conj())
            assert np.max(np.abs(inv_map(proj) - inverse_channel_snapshot(v, b))) < 1e-10

        x = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        x = x + x.conj().T
        y = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        y = y + y.conj().T
        assert abs(np.trace(x @ inv_map(y)) - np.trace(inv_map(x) @ y)) < 1e-10

        def roundtrip(y):
            acc = np.zeros((d, d), dtype=complex)
            count = 0
            for w in _enumerate_local(n):
                diag = born_diagonal(w, y)
                for b in range(d):
                    acc += diag[b] * inverse_channel_snapshot(w, b)
                count += 1
            return acc / count

        assert np.max(np.abs(roundtrip(y) - y)) < 1e-10


def test_apply_to_density_matches_dense(rng):
    for n in (2, 3, 6):
        rho = random_density(2 ** n, rng).matrix
        v = sample_local_clifford(n, rng)
        dense = dense_unitary(v)
        assert np.max(np.abs(apply_to_density(v, rho) - dense @ rho @ dense.conj().T)) < 1e-10
        assert np.max(np.abs(born_diagonal(v, rho) - np.diagonal(dense @ rho @ dense.conj().T).real)) < 1e-10
