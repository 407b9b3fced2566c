"""Random unitary ensembles and the shadow inverse channel.

Supported ensembles: tensor products of uniform single-qubit Cliffords,
uniform n-qubit Cliffords (sampled as a random stabilizer tableau and
densified), and the trivial identity ensemble used by the bare moment
estimator.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .linalg import ContractError, SizeError
from .states import PAULI

LOCAL_CLIFFORD = "local_clifford"
GLOBAL_CLIFFORD = "global_clifford"
IDENTITY = "identity"

ENSEMBLES = (LOCAL_CLIFFORD, GLOBAL_CLIFFORD, IDENTITY)

_MAX_GLOBAL_QUBITS = 10


@dataclass(frozen=True)
class UnitarySample:
    """One draw V from an ensemble, with enough structure to apply it fast."""

    ensemble: str
    n: int
    factors: tuple = None          # local: n single-qubit 2x2 unitaries
    dense: np.ndarray = None       # global: one 2^n x 2^n unitary
    indices: tuple = None          # local: table indices, for reproducibility

    @property
    def dim(self) -> int:
        return 2 ** self.n


def _canonical_phase(u: np.ndarray) -> np.ndarray:
    flat = u.ravel()
    k = int(np.argmax(np.abs(flat) > 1e-8))
    return u / (flat[k] / abs(flat[k]))


def _signed_axis(p: np.ndarray):
    # encode a signed Pauli as (axis, sign) with axis order Z=0, X=1, Y=2
    for axis, letter in enumerate("ZXY"):
        for sign_bit, sign in ((0, 1.0), (1, -1.0)):
            if np.allclose(p, sign * PAULI[letter], atol=1e-8):
                return axis, sign_bit
    return None


@lru_cache(maxsize=1)
def single_qubit_cliffords() -> tuple:
    """The 24 single-qubit Cliffords, phase-canonical, in a fixed order.

    Order: lexicographic in the conjugation signature
    (image of Z, image of X), each image encoded as (axis, sign) with
    Z < X < Y and + < -.  The identity sorts first.
    """
    h = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2.0)
    s = np.array([[1, 0], [0, 1j]], dtype=complex)
    seen = {}
    frontier = [_canonical_phase(np.eye(2, dtype=complex))]
    while frontier:
        nxt = []
        for u in frontier:
            key = (np.round(u, 8) + 0.0).tobytes()  # +0.0 folds -0.0 into +0.0
            if key in seen:
                continue
            seen[key] = u
            for g in (h, s):
                nxt.append(_canonical_phase(g @ u))
        frontier = nxt
    if len(seen) != 24:
        raise ContractError(f"single-qubit Clifford closure found {len(seen)} elements")

    def signature(u):
        zi = _signed_axis(u @ PAULI["Z"] @ u.conj().T)
        xi = _signed_axis(u @ PAULI["X"] @ u.conj().T)
        if zi is None or xi is None:
            raise ContractError("Clifford candidate does not normalize the Pauli group")
        return zi + xi

    ordered = sorted(seen.values(), key=signature)
    for u in ordered:
        u.setflags(write=False)
    return tuple(ordered)


def sample_local_clifford(n: int, rng: np.random.Generator) -> UnitarySample:
    if n < 1:
        raise ValueError("n must be >= 1")
    table = single_qubit_cliffords()
    idx = rng.integers(0, 24, size=n)
    return UnitarySample(
        ensemble=LOCAL_CLIFFORD,
        n=n,
        factors=tuple(table[i] for i in idx),
        indices=tuple(int(i) for i in idx),
    )


# ---------------------------------------------------------------------------
# Uniform global Clifford: random symplectic basis over GF(2) plus random
# Pauli signs, densified column-by-column.
#
# Symplectic vectors have layout [x_0..x_{n-1} | z_0..z_{n-1}]; qubit i maps
# to bit weight 2^(n-1-i) of a basis index.
# ---------------------------------------------------------------------------


def _symplectic_form(a: np.ndarray, b: np.ndarray, n: int) -> int:
    return int((a[:n] @ b[n:] + a[n:] @ b[:n]) % 2)


def _form_with_rows(v: np.ndarray, rows: np.ndarray, n: int) -> np.ndarray:
    return (rows[:, n:] @ v[:n] + rows[:, :n] @ v[n:]) % 2


def _row_reduce(rows: np.ndarray) -> np.ndarray:
    m = rows.copy() % 2
    pivots = []
    r = 0
    for c in range(m.shape[1]):
        hit = np.flatnonzero(m[r:, c]) + r
        if hit.size == 0:
            continue
        m[[r, hit[0]]] = m[[hit[0], r]]
        for other in np.flatnonzero(m[:, c]):
            if other != r:
                m[other] = (m[other] + m[r]) % 2
        pivots.append(c)
        r += 1
        if r == m.shape[0]:
            break
    return m[: len(pivots)]


def _sample_symplectic_basis(n: int, rng: np.random.Generator):
    """Hyperbolic pairs (a_i, b_i) spanning GF(2)^{2n}, uniformly random."""
    rows = np.eye(2 * n, dtype=np.uint8)
    pairs = []
    for _ in range(n):
        while True:
            c = rng.integers(0, 2, size=rows.shape[0], dtype=np.uint8)
            v = (c @ rows) % 2
            if v.any():
                break
        forms_v = _form_with_rows(v, rows, n)
        w0 = rows[int(np.flatnonzero(forms_v)[0])]
        c = rng.integers(0, 2, size=rows.shape[0], dtype=np.uint8)
        u = (c @ rows) % 2
        w = u if _symplectic_form(v, u, n) == 1 else (u + w0) % 2
        pairs.append((v.astype(np.uint8), w.astype(np.uint8)))
        if rows.shape[0] > 2:
            fv = _form_with_rows(v, rows, n)
            fw = _form_with_rows(w, rows, n)
            projected = (rows + np.outer(fw, v) + np.outer(fv, w)) % 2
            rows = _row_reduce(projected.astype(np.uint8))
        else:
            rows = np.zeros((0, 2 * n), dtype=np.uint8)
    return pairs


def _vec_to_masks(v: np.ndarray, n: int):
    xmask = 0
    zmask = 0
    for i in range(n):
        if v[i]:
            xmask |= 1 << (n - 1 - i)
        if v[n + i]:
            zmask |= 1 << (n - 1 - i)
    return xmask, zmask


def _pauli_apply(vec: np.ndarray, xmask: int, zmask: int, sign: int, n: int) -> np.ndarray:
    """Apply the Hermitian Pauli (-1)^sign i^{|x&z|} X^x Z^z to a state vector."""
    d = 1 << n
    idx = np.arange(d)
    phase = complex((-1) ** sign * (1j) ** (int(xmask & zmask).bit_count()))
    signs = 1.0 - 2.0 * (np.bitwise_count(idx & zmask) & 1).astype(float)
    out = np.empty(d, dtype=complex)
    out[idx ^ xmask] = phase * signs * vec
    return out


def sample_global_clifford(n: int, rng: np.random.Generator) -> UnitarySample:
    """Uniform n-qubit Clifford (up to global phase) as a dense matrix."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if n > _MAX_GLOBAL_QUBITS:
        raise SizeError(f"global Clifford path limited to n <= {_MAX_GLOBAL_QUBITS}")
    pairs = _sample_symplectic_basis(n, rng)
    signs = rng.integers(0, 2, size=2 * n)
    x_imgs = [_vec_to_masks(a, n) + (int(signs[2 * i]),) for i, (a, _) in enumerate(pairs)]
    z_imgs = [_vec_to_masks(b, n) + (int(signs[2 * i + 1]),) for i, (_, b) in enumerate(pairs)]

    d = 1 << n
    # U|0..0> is the state stabilized by the images of Z_i; project a basis
    # column of the rank-1 stabilizer projector to find it.
    psi0 = None
    for k in range(d):
        v = np.zeros(d, dtype=complex)
        v[k] = 1.0
        for xm, zm, sg in z_imgs:
            v = 0.5 * (v + _pauli_apply(v, xm, zm, sg, n))
        nrm = np.linalg.norm(v)
        if nrm > 1e-6:
            psi0 = v / nrm
            break
    if psi0 is None:
        raise ContractError("stabilizer projector unexpectedly vanished")

    # Remaining columns: U|b> = prod_{i in b} (image of X_i) |psi0>; the images
    # commute, so one Pauli application per set bit suffices.
    u = np.empty((d, d), dtype=complex)
    u[:, 0] = psi0
    for b in range(1, d):
        low = b & -b
        qubit = n - 1 - low.bit_length() + 1
        xm, zm, sg = x_imgs[qubit]
        u[:, b] = _pauli_apply(u[:, b ^ low], xm, zm, sg, n)
    u.setflags(write=False)
    return UnitarySample(ensemble=GLOBAL_CLIFFORD, n=n, dense=u)


def identity_sample(n: int) -> UnitarySample:
    return UnitarySample(ensemble=IDENTITY, n=n)


def sample_unitary(ensemble: str, n: int, rng: np.random.Generator) -> UnitarySample:
    if ensemble == LOCAL_CLIFFORD:
        return sample_local_clifford(n, rng)
    if ensemble == GLOBAL_CLIFFORD:
        return sample_global_clifford(n, rng)
    if ensemble == IDENTITY:
        return identity_sample(n)
    raise ValueError(f"unknown ensemble {ensemble!r}")


# ---------------------------------------------------------------------------
# Applying samples and the inverse channel
# ---------------------------------------------------------------------------


def _apply_factor(flat: np.ndarray, u: np.ndarray, axis: int, total_axes: int) -> np.ndarray:
    """Apply a 2x2 factor to one binary axis of a flattened tensor."""
    left = 1 << axis
    right = 1 << (total_axes - axis - 1)
    return np.matmul(u, flat.reshape(left, 2, right)).reshape(-1)


def apply_to_vector(sample: UnitarySample, vec: np.ndarray) -> np.ndarray:
    if sample.ensemble == IDENTITY:
        return vec
    if sample.ensemble == GLOBAL_CLIFFORD:
        return sample.dense @ vec
    n = sample.n
    flat = np.asarray(vec, dtype=complex).reshape(-1)
    for i, u in enumerate(sample.factors):
        flat = _apply_factor(flat, u, i, n)
    return flat


def apply_to_density(sample: UnitarySample, rho: np.ndarray) -> np.ndarray:
    """V rho V^dag; factor-wise below the BLAS crossover, dense above it."""
    if sample.ensemble == IDENTITY:
        return rho
    if sample.ensemble == GLOBAL_CLIFFORD:
        return sample.dense @ rho @ sample.dense.conj().T
    n = sample.n
    if n >= 6:
        v = dense_unitary(sample)
        return v @ rho @ v.conj().T
    flat = np.asarray(rho, dtype=complex).reshape(-1)
    for i, u in enumerate(sample.factors):
        flat = _apply_factor(flat, u, i, 2 * n)
        flat = _apply_factor(flat, u.conj(), n + i, 2 * n)
    return flat.reshape(rho.shape)


def born_diagonal(sample: UnitarySample, rho: np.ndarray) -> np.ndarray:
    if sample.ensemble == LOCAL_CLIFFORD and sample.n >= 6:
        v = dense_unitary(sample)
        return np.einsum("ij,jk,ik->i", v, rho, v.conj(), optimize=True).real
    return np.diagonal(apply_to_density(sample, rho)).real.copy()


def dense_unitary(sample: UnitarySample) -> np.ndarray:
    if sample.ensemble == IDENTITY:
        return np.eye(sample.dim, dtype=complex)
    if sample.ensemble == GLOBAL_CLIFFORD:
        return sample.dense
    out = np.array([[1.0 + 0j]])
    for u in sample.factors:
        out = np.kron(out, u)
    return out


def bits_of(b: int, n: int) -> tuple:
    return tuple((b >> (n - 1 - i)) & 1 for i in range(n))


def inverse_channel_snapshot(sample: UnitarySample, b: int) -> np.ndarray:
    """Single-shot reconstruction M^{-1}(V^dag |b><b| V); Hermitian, trace 1."""
    if sample.ensemble == IDENTITY:
        raise ContractError("no inverse channel for the identity ensemble")
    n = sample.n
    if not 0 <= b < sample.dim:
        raise ValueError(f"outcome {b} outside basis of dimension {sample.dim}")
    if sample.ensemble == LOCAL_CLIFFORD:
        bits = bits_of(b, n)
        out = np.array([[1.0 + 0j]])
        for u, bit in zip(sample.factors, bits):
            proj = np.outer(u.conj().T[:, bit], u[bit, :])
            out = np.kron(out, 3.0 * proj - np.eye(2))
        return out
    v = sample.dense.conj().T[:, b]
    return (sample.dim + 1) * np.outer(v, v.conj()) - np.eye(sample.dim)
