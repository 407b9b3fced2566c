"""Dense complex linear algebra and exact discrete sampling primitives.

Conventions used throughout the package:
  * numerical tolerances: ATOL for exactness assertions, EIG_ATOL for
    eigensolver residuals;
  * hard dimension caps instead of silent truncation;
  * qubit 0 contributes the most significant bit of a basis index.
"""

import numpy as np

ATOL = 1e-10
EIG_ATOL = 1e-8
WEIGHT_FLOOR = -1e-12

MAX_DENSE_DIM = 2 ** 13
MAX_STATE_AMPLITUDES = 2 ** 26
MAX_ENUMERATION = 2 ** 20


class SizeError(ValueError):
    """A requested object exceeds the configured dimension caps."""


class ContractError(ValueError):
    """A numerical contract was violated; signals an upstream bug."""


def check_dense_dim(dim: int):
    if dim > MAX_DENSE_DIM:
        raise SizeError(f"dense dimension {dim} exceeds cap {MAX_DENSE_DIM}")


def kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product with the dense dimension cap enforced."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape[0] * b.shape[0] > MAX_DENSE_DIM or a.shape[1] * b.shape[1] > MAX_DENSE_DIM:
        raise SizeError("kron result exceeds dense dimension cap")
    return np.kron(a, b)


def kron_all(mats) -> np.ndarray:
    out = np.asarray(mats[0], dtype=complex)
    for m in mats[1:]:
        out = kron(out, m)
    return out


def is_hermitian(m: np.ndarray, atol: float = ATOL) -> bool:
    m = np.asarray(m)
    return m.shape[0] == m.shape[1] and np.max(np.abs(m - m.conj().T)) <= atol


def partial_trace(m: np.ndarray, dims, keep) -> np.ndarray:
    """Trace out all subsystems not in `keep` (0-based indices into `dims`)."""
    m = np.asarray(m)
    dims = [int(d) for d in dims]
    total = int(np.prod(dims))
    if m.shape != (total, total):
        raise ValueError(f"matrix shape {m.shape} does not match dims {dims}")
    n = len(dims)
    keep = sorted(set(int(k) for k in keep))
    if keep and (keep[0] < 0 or keep[-1] >= n):
        raise ValueError(f"keep indices {keep} out of range for {n} subsystems")
    tensor = m.reshape(dims + dims)
    row = list(range(n))
    col = [n + i if i in keep else i for i in range(n)]
    out = [i for i in keep] + [n + i for i in keep]
    kept_dim = int(np.prod([dims[i] for i in keep])) if keep else 1
    return np.einsum(tensor, row + col, out).reshape(kept_dim, kept_dim)


def hermitian_eig(m: np.ndarray):
    """Eigenvalues (descending) and matching orthonormal eigenvector columns."""
    m = np.asarray(m)
    if not is_hermitian(m):
        raise ContractError("hermitian_eig called on a non-Hermitian matrix")
    vals, vecs = np.linalg.eigh(m)
    order = np.argsort(vals)[::-1]
    return vals[order], vecs[:, order]


class ProbabilityTable:
    """Non-negative weights over outcome labels, normalized to total mass one.

    Weights in (WEIGHT_FLOOR, 0) are numerical noise and are clipped to zero;
    anything at or below WEIGHT_FLOOR raises ContractError rather than being
    hidden.
    """

    __slots__ = ("weights", "labels", "_cum")

    def __init__(self, weights, labels=None):
        w = np.asarray(weights, dtype=float)
        if w.ndim != 1 or w.size == 0:
            raise ValueError("weights must be a non-empty 1-d array")
        if np.any(w <= WEIGHT_FLOOR):
            raise ContractError(
                f"probability weight {w.min():.3e} below floor {WEIGHT_FLOOR:.0e}"
            )
        w = np.where(w < 0.0, 0.0, w)
        total = w.sum()
        if total <= 0.0:
            raise ValueError("probability table has no mass")
        self.weights = w / total
        self.labels = list(labels) if labels is not None else list(range(w.size))
        if len(self.labels) != w.size:
            raise ValueError("labels length does not match weights")
        self._cum = np.cumsum(self.weights)

    def __len__(self):
        return self.weights.size

    def sample_index(self, rng: np.random.Generator) -> int:
        u = rng.random()
        idx = int(np.searchsorted(self._cum, u, side="right"))
        return min(idx, self.weights.size - 1)

    def as_dict(self):
        return dict(zip(self.labels, self.weights))


def sample_discrete(table: ProbabilityTable, rng: np.random.Generator):
    """Draw one label from the table; deterministic given the stream state."""
    return table.labels[table.sample_index(rng)]


def clip_weights(w: np.ndarray) -> np.ndarray:
    """Zero out numerical-noise negatives; loud failure on real negativity."""
    if np.any(w <= WEIGHT_FLOOR):
        raise ContractError(f"probability weight {w.min():.3e} below floor")
    return np.where(w < 0.0, 0.0, w)


def sample_indices(weights: np.ndarray, size: int, rng: np.random.Generator) -> np.ndarray:
    """Vectorized index sampling from a (already clipped) weight vector."""
    cum = np.cumsum(weights)
    cum /= cum[-1]
    u = rng.random(size)
    return np.minimum(np.searchsorted(cum, u, side="right"), weights.size - 1)
