"""Cyclic string classes, the Fourier measurement basis, the entangling
unitary that rotates it to the computational basis, and the classical
outcome-mapping strategy.

Strings x = (x_1, ..., x_t) over the alphabet [d] are ordered as base-d
integers with x_1 the most significant digit.  The cyclic shift tau moves the
leading symbol to the end, matching the replica-shift unitary
S_t |x_1 x_2 ... x_t> = |x_2 ... x_t x_1>.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .linalg import MAX_ENUMERATION, ProbabilityTable, SizeError


def shift(x: tuple) -> tuple:
    return x[1:] + x[:1]


def string_index(x: tuple, d: int) -> int:
    idx = 0
    for digit in x:
        idx = idx * d + digit
    return idx


def index_string(idx: int, d: int, t: int) -> tuple:
    digits = []
    for _ in range(t):
        idx, r = divmod(idx, d)
        digits.append(r)
    return tuple(reversed(digits))


@dataclass(frozen=True)
class CyclicClass:
    """Orbit of a string under cyclic shifts.

    members[r] = tau^r(representative); the representative is the orbit's
    minimum as a base-d integer, and the orbit size always divides t.
    """

    d: int
    t: int
    representative: tuple
    members: tuple

    @property
    def cardinality(self) -> int:
        return len(self.members)


@dataclass(frozen=True)
class ReplicaOutcome:
    """A measured string together with its class and rotation index k,
    tau^k(representative) = x."""

    x: tuple
    cls: CyclicClass
    k: int

    @property
    def d(self) -> int:
        return self.cls.d

    @property
    def t(self) -> int:
        return self.cls.t


def classify(x: tuple, d: int) -> tuple:
    """Orbit data for one string without a precomputed table.

    Returns (members_from_representative, k) with members[k] == x.
    """
    t = len(x)
    rotations = [x]
    cur = shift(x)
    while cur != x:
        rotations.append(cur)
        cur = shift(cur)
    period = len(rotations)
    # rotations[r] = tau^r(x); representative z = min; z = tau^j(x) means
    # x = tau^{period-j}(z), so k = (period - j) mod period.
    j = min(range(period), key=lambda r: string_index(rotations[r], d))
    members = tuple(rotations[(j + r) % period] for r in range(period))
    return members, (period - j) % period


def enumerate_classes(d: int, t: int):
    """All cyclic classes of length-t strings over [d], representatives ascending."""
    size = d ** t
    if size > MAX_ENUMERATION:
        raise SizeError(f"d^t = {size} exceeds enumeration cap {MAX_ENUMERATION}")
    seen = np.zeros(size, dtype=bool)
    classes = []
    for idx in range(size):
        if seen[idx]:
            continue
        z = index_string(idx, d, t)
        members = [z]
        cur = shift(z)
        while cur != z:
            members.append(cur)
            cur = shift(cur)
        for m in members:
            seen[string_index(m, d)] = True
        classes.append(CyclicClass(d=d, t=t, representative=z, members=tuple(members)))
    return classes


class ClassTable:
    """O(1) lookup string index -> (class, rotation k) plus cached f values."""

    def __init__(self, d: int, t: int):
        self.d = d
        self.t = t
        self.size = d ** t
        self.classes = enumerate_classes(d, t)
        self.class_id = np.empty(self.size, dtype=np.int32)
        self.rotation = np.empty(self.size, dtype=np.int32)
        for cid, cls in enumerate(self.classes):
            for k, member in enumerate(cls.members):
                idx = string_index(member, d)
                self.class_id[idx] = cid
                self.rotation[idx] = k
        card = np.array([self.classes[c].cardinality for c in self.class_id], dtype=float)
        self.f_re = np.cos(2.0 * np.pi * self.rotation / card)
        self.f_eig = np.exp(-2j * np.pi * self.rotation / card)

    def outcome_from_index(self, idx: int) -> ReplicaOutcome:
        cls = self.classes[self.class_id[idx]]
        k = int(self.rotation[idx])
        return ReplicaOutcome(x=cls.members[k], cls=cls, k=k)

    def outcome(self, x: tuple) -> ReplicaOutcome:
        return self.outcome_from_index(string_index(x, self.d))

    def all_outcomes(self):
        return [self.outcome_from_index(i) for i in range(self.size)]


@lru_cache(maxsize=64)
def class_table(d: int, t: int) -> ClassTable:
    return ClassTable(d, t)


def outcome_of(x: tuple, d: int) -> ReplicaOutcome:
    """Classify a string; table-backed when d^t is within the enumeration cap."""
    t = len(x)
    if d ** t <= MAX_ENUMERATION:
        return class_table(d, t).outcome(x)
    members, k = classify(x, d)
    cls = CyclicClass(d=d, t=t, representative=members[0], members=members)
    return ReplicaOutcome(x=x, cls=cls, k=k)


def f_eigenvalue(outcome: ReplicaOutcome) -> complex:
    """Replica-shift eigenvalue exp(-2 pi i k / |class|) of the measured state."""
    m = outcome.cls.cardinality
    return np.exp(-2j * np.pi * outcome.k / m)


def f_value(outcome: ReplicaOutcome) -> float:
    """Re f = cos(2 pi k / |class|), the factor carried by every snapshot."""
    m = outcome.cls.cardinality
    return float(np.cos(2.0 * np.pi * outcome.k / m))


def psi_state(cls: CyclicClass, k: int) -> np.ndarray:
    """Fourier basis vector over the class orbit; unit norm, d^t amplitudes."""
    m = cls.cardinality
    if not 0 <= k < m:
        raise ValueError(f"rotation index {k} outside 0..{m - 1}")
    vec = np.zeros(cls.d ** cls.t, dtype=complex)
    for r, member in enumerate(cls.members):
        vec[string_index(member, cls.d)] = np.exp(2j * np.pi * r * k / m)
    return vec / np.sqrt(m)


def psi_basis_matrix(d: int, t: int) -> np.ndarray:
    """Columns are the full Fourier basis, ordered class by class, k ascending."""
    classes = enumerate_classes(d, t)
    size = d ** t
    out = np.empty((size, size), dtype=complex)
    col = 0
    for cls in classes:
        for k in range(cls.cardinality):
            out[:, col] = psi_state(cls, k)
            col += 1
    return out


@lru_cache(maxsize=32)
def build_R(d: int, t: int) -> np.ndarray:
    """Unitary mapping the Fourier basis vector (class z, index k) to the
    computational string tau^k(z); measuring after it realizes the basis."""
    size = d ** t
    if size > MAX_ENUMERATION:
        raise SizeError(f"d^t = {size} exceeds enumeration cap")
    from .linalg import MAX_DENSE_DIM

    if size > MAX_DENSE_DIM:
        raise SizeError(f"dense R of dimension {size} exceeds cap {MAX_DENSE_DIM}")
    r = np.zeros((size, size), dtype=complex)
    for cls in enumerate_classes(d, t):
        for k in range(cls.cardinality):
            r[string_index(cls.members[k], d), :] += psi_state(cls, k).conj()
    r.setflags(write=False)
    return r


def shift_matrix(d: int, t: int) -> np.ndarray:
    """Permutation matrix of the replica shift, S|x> = |tau(x)>."""
    size = d ** t
    s = np.zeros((size, size))
    for idx in range(size):
        x = index_string(idx, d, t)
        s[string_index(shift(x), d), idx] = 1.0
    return s


def map_outcome(outcome: ReplicaOutcome, rng: np.random.Generator) -> int:
    """Random mapping strategy: b drawn uniformly from the t symbols of x."""
    j = int(rng.integers(outcome.t))
    return outcome.x[j]


def mapping_distribution(outcome: ReplicaOutcome) -> ProbabilityTable:
    """Exact mapping law Pr(b | x) = (occurrences of b in x) / t."""
    values, counts = np.unique(np.array(outcome.x), return_counts=True)
    return ProbabilityTable(counts / outcome.t, labels=[int(v) for v in values])
