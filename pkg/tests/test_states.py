import numpy as np
import pytest

from afrs.linalg import SizeError
from afrs.states import (
    DensityMatrix,
    ObservableSpecError,
    depolarize,
    ghz_state,
    observable_from_spec,
    pauli_observable,
    random_density,
)


def test_ghz_single_qubit_is_plus():
    rho = ghz_state(1)
    plus = np.full((2, 2), 0.5)
    assert np.allclose(rho.matrix, plus, atol=1e-12)


def test_ghz_two_qubit_projector():
    rho = ghz_state(2)
    v = np.zeros(4)
    v[0] = v[3] = 1 / np.sqrt(2)
    assert np.allclose(rho.matrix, np.outer(v, v), atol=1e-12)
    assert abs(rho.purity() - 1.0) < 1e-12


def test_ghz_zz_expectation():
    rho = ghz_state(3)
    zz = pauli_observable("ZZI").dense()
    assert abs(np.trace(zz @ rho.matrix).real - 1.0) < 1e-12


def test_ghz_rejects_bad_n():
    with pytest.raises(ValueError):
        ghz_state(0)
    with pytest.raises(SizeError):
        ghz_state(16)


def test_depolarize_endpoints():
    rho = ghz_state(2)
    assert np.allclose(depolarize(rho, 0.0).matrix, rho.matrix)
    assert np.allclose(depolarize(rho, 1.0).matrix, np.eye(4) / 4)


def test_depolarize_purity_value():
    rho = depolarize(ghz_state(5), 0.3)
    assert abs(rho.purity() - 0.5059375) < 1e-12


def test_depolarize_range_check():
    with pytest.raises(ValueError):
        depolarize(ghz_state(1), 1.5)


def test_depolarize_preserves_state_properties(rng):
    base = random_density(8, rng)
    for p in (0.1, 0.5, 0.9):
        rho = depolarize(base, p)
        m = rho.matrix
        assert np.max(np.abs(m - m.conj().T)) < 1e-10
        assert abs(np.trace(m).real - 1.0) < 1e-10
        assert np.linalg.eigvalsh(m).min() > -1e-10


def test_purity_bounds(rng):
    for d in (2, 4, 8):
        rho = random_density(d, rng)
        assert 1.0 / d - 1e-10 <= rho.purity() <= 1.0 + 1e-10


def test_pauli_observable_support_and_weight():
    obs = pauli_observable("ZZIII")
    assert obs.support == (0, 1)
    assert obs.weight == 2
    assert obs.label == "Z1*Z2"
    assert obs.norm_inf() == 1.0


def test_pauli_identity_trace():
    obs = pauli_observable("IIIII")
    assert obs.weight == 0
    assert obs.trace() == 32.0


def test_pauli_squares_to_identity(rng):
    letters = "".join(rng.choice(list("IXYZ")) for _ in range(4))
    dense = pauli_observable(letters).dense()
    assert np.max(np.abs(dense @ dense - np.eye(16))) < 1e-12


def test_pauli_x_on_ghz_vanishes():
    rho = ghz_state(5)
    x1 = pauli_observable("XIIII").dense()
    assert abs(np.trace(x1 @ rho.matrix).real) < 1e-12


def test_pauli_rejects_bad_letter():
    with pytest.raises(ValueError):
        pauli_observable("ZQ")


def test_density_matrix_validation():
    with pytest.raises(ValueError):
        DensityMatrix.from_matrix(np.array([[1.0, 0.5], [0.2, 0.0]]))
    with pytest.raises(ValueError):
        DensityMatrix.from_matrix(np.eye(2))  # trace 2


def test_spec_parser_pair():
    obs = observable_from_spec("Z1*Z2", 5)
    assert obs.letters == "ZZIII"


def test_spec_parser_single():
    obs = observable_from_spec("X3", 5)
    assert obs.letters == "IIXII"


def test_spec_parser_identity_and_projector():
    assert observable_from_spec("I", 3).weight == 0
    proj = observable_from_spec("GHZ-proj", 3)
    assert proj.kind == "projector"
    rho = ghz_state(3)
    assert abs(np.trace(proj.dense() @ rho.matrix).real - 1.0) < 1e-12


@pytest.mark.parametrize("bad", ["Q1", "Z0", "Z9", "Z1*Z1", "Z", "Z1**Z2"])
def test_spec_parser_rejects(bad):
    with pytest.raises(ObservableSpecError) as err:
        observable_from_spec(bad, 5)
    assert err.value.pos >= 0
