"""Benchmark states and observables.

Qubit indices are 1-based in user-facing observable strings ("Z1*Z2") and
0-based everywhere inside the package.  Basis index convention: qubit 0 is the
most significant bit.
"""

from dataclasses import dataclass, field

import numpy as np

from .linalg import ATOL, MAX_DENSE_DIM, SizeError, is_hermitian, kron_all

PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


@dataclass(frozen=True)
class DensityMatrix:
    dim: int
    matrix: np.ndarray

    @classmethod
    def from_matrix(cls, matrix, validate: bool = True) -> "DensityMatrix":
        m = np.asarray(matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("density matrix must be square")
        if m.shape[0] > MAX_DENSE_DIM:
            raise SizeError(f"dimension {m.shape[0]} exceeds dense cap")
        if validate:
            if not is_hermitian(m):
                raise ValueError("density matrix is not Hermitian")
            if abs(np.trace(m).real - 1.0) > ATOL or abs(np.trace(m).imag) > ATOL:
                raise ValueError("density matrix trace is not 1")
            if np.linalg.eigvalsh(m).min() < -ATOL:
                raise ValueError("density matrix is not positive semidefinite")
        obj = cls(dim=m.shape[0], matrix=m)
        m.setflags(write=False)
        return obj

    @classmethod
    def from_statevector(cls, vec) -> "DensityMatrix":
        v = np.asarray(vec, dtype=complex)
        v = v / np.linalg.norm(v)
        return cls.from_matrix(np.outer(v, v.conj()), validate=False)

    def purity(self) -> float:
        return float(np.trace(self.matrix @ self.matrix).real)

    @property
    def n_qubits(self) -> int:
        n = self.dim.bit_length() - 1
        if 2 ** n != self.dim:
            raise ValueError(f"dimension {self.dim} is not a power of 2")
        return n


def ghz_state(n: int) -> DensityMatrix:
    """Projector onto (|0...0> + |1...1>)/sqrt(2); n=1 gives |+><+|."""
    if n < 1:
        raise ValueError("n must be >= 1")
    d = 2 ** n
    if d > MAX_DENSE_DIM:
        raise SizeError(f"2^{n} exceeds dense cap")
    v = np.zeros(d, dtype=complex)
    v[0] = v[-1] = 1.0 / np.sqrt(2.0)
    return DensityMatrix.from_statevector(v)


def depolarize(rho: DensityMatrix, p: float) -> DensityMatrix:
    """(1-p) rho + p I/d."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"noise parameter p={p} outside [0, 1]")
    d = rho.dim
    m = (1.0 - p) * rho.matrix + p * np.eye(d) / d
    return DensityMatrix.from_matrix(m, validate=False)


def random_density(d: int, rng: np.random.Generator, rank: int | None = None) -> DensityMatrix:
    """Random full-rank (or fixed-rank) state from a Ginibre ensemble."""
    r = d if rank is None else rank
    g = rng.normal(size=(d, r)) + 1j * rng.normal(size=(d, r))
    m = g @ g.conj().T
    return DensityMatrix.from_matrix(m / np.trace(m).real, validate=False)


@dataclass(frozen=True)
class Observable:
    """Observable in one of three representations.

    kind "pauli": a letter per qubit from {I, X, Y, Z};
    kind "projector": rank-1 projector |v><v| kept as the state vector;
    kind "dense": explicit Hermitian matrix.
    """

    kind: str
    dim: int
    n: int | None = None
    letters: str | None = None
    vector: np.ndarray | None = None
    matrix: np.ndarray | None = None
    label: str = ""
    support: tuple = field(default=())

    def dense(self) -> np.ndarray:
        if self.kind == "pauli":
            return kron_all([PAULI[c] for c in self.letters])
        if self.kind == "projector":
            return np.outer(self.vector, self.vector.conj())
        return self.matrix

    @property
    def weight(self) -> int:
        return len(self.support)

    def trace(self) -> float:
        if self.kind == "pauli":
            return float(self.dim) if self.weight == 0 else 0.0
        if self.kind == "projector":
            return 1.0
        return float(np.trace(self.matrix).real)

    def norm_inf(self) -> float:
        if self.kind in ("pauli", "projector"):
            return 1.0
        return float(np.max(np.abs(np.linalg.eigvalsh(self.matrix))))

    def trace_sq(self) -> float:
        if self.kind == "pauli":
            return float(self.dim)
        if self.kind == "projector":
            return 1.0
        m = self.matrix
        return float(np.trace(m @ m).real)


def pauli_observable(letters: str, n: int | None = None) -> Observable:
    letters = letters.upper()
    if n is not None and len(letters) != n:
        raise ValueError(f"expected {n} letters, got {len(letters)}")
    bad = set(letters) - set("IXYZ")
    if bad:
        raise ValueError(f"invalid Pauli letters {sorted(bad)}")
    support = tuple(i for i, c in enumerate(letters) if c != "I")
    label = "*".join(f"{letters[i]}{i + 1}" for i in support) or "I"
    return Observable(
        kind="pauli",
        dim=2 ** len(letters),
        n=len(letters),
        letters=letters,
        label=label,
        support=support,
    )


def projector_observable(vector, label: str = "proj") -> Observable:
    v = np.asarray(vector, dtype=complex)
    v = v / np.linalg.norm(v)
    n = v.size.bit_length() - 1 if 2 ** (v.size.bit_length() - 1) == v.size else None
    support = tuple(range(n)) if n is not None else ()
    v.setflags(write=False)
    return Observable(kind="projector", dim=v.size, n=n, vector=v, label=label, support=support)


def dense_observable(matrix, label: str = "dense", support: tuple = ()) -> Observable:
    m = np.asarray(matrix, dtype=complex)
    if not is_hermitian(m):
        raise ValueError("dense observable must be Hermitian")
    m.setflags(write=False)
    return Observable(kind="dense", dim=m.shape[0], matrix=m, label=label, support=tuple(support))


class ObservableSpecError(ValueError):
    """Raised on malformed observable specification strings."""

    def __init__(self, spec, pos, message):
        self.spec = spec
        self.pos = pos
        super().__init__(f"bad observable spec {spec!r} at position {pos}: {message}")


def observable_from_spec(spec: str, n: int) -> Observable:
    """Parse observable grammar: "Z1*Z2", "X3", reserved "I" and "GHZ-proj"."""
    spec = spec.strip()
    if spec == "I":
        return pauli_observable("I" * n)
    if spec == "GHZ-proj":
        from .states import ghz_state  # self-import keeps signature obvious

        d = 2 ** n
        v = np.zeros(d, dtype=complex)
        v[0] = v[-1] = 1.0 / np.sqrt(2.0)
        return projector_observable(v, label="GHZ-proj")
    letters = ["I"] * n
    pos = 0
    for term in spec.split("*"):
        if not term:
            raise ObservableSpecError(spec, pos, "empty term")
        letter, idx_text = term[0].upper(), term[1:]
        if letter not in "XYZ":
            raise ObservableSpecError(spec, pos, f"letter {term[0]!r} not in X/Y/Z")
        if not idx_text.isdigit():
            raise ObservableSpecError(spec, pos + 1, f"missing qubit index in {term!r}")
        qubit = int(idx_text)
        if not 1 <= qubit <= n:
            raise ObservableSpecError(spec, pos + 1, f"qubit {qubit} outside 1..{n}")
        if letters[qubit - 1] != "I":
            raise ObservableSpecError(spec, pos, f"qubit {qubit} used twice")
        letters[qubit - 1] = letter
        pos += len(term) + 1
    return pauli_observable("".join(letters))
