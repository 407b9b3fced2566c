"""Exact simulation of the replica measurement stage.

Outcome strings are drawn from Pr(x) = <Psi_x| sigma^{(x) t} |Psi_x> without
materializing sigma^{(x)t} as a dense matrix: the t=2 path evaluates the
closed form in single-copy entries of sigma, and the general path draws t
pure replicas from the eigendecomposition of sigma and rotates them with the
(block) entangling unitary.
"""

from dataclasses import dataclass, field
from functools import lru_cache, reduce

import numpy as np

from .linalg import (
    MAX_DENSE_DIM,
    MAX_ENUMERATION,
    MAX_STATE_AMPLITUDES,
    SizeError,
    clip_weights,
    sample_indices,
)
from .replica_basis import (
    ReplicaOutcome,
    build_R,
    class_table,
    index_string,
    outcome_of,
)

_EIG_FLOOR = 1e-12


@dataclass
class RotatedState:
    """sigma = V rho V^dag together with the replica count t.

    `n` is required only for qubit-partitioned sampling.
    """

    sigma: np.ndarray
    t: int
    n: int | None = None
    _eig: tuple = field(default=None, repr=False, compare=False)

    @property
    def dim(self) -> int:
        return self.sigma.shape[0]

    def eig(self):
        """Spectral mixture of sigma with tiny eigenvalues discarded."""
        if self._eig is None:
            vals, vecs = np.linalg.eigh(self.sigma)
            keep = vals > _EIG_FLOOR
            p = vals[keep]
            self._eig = (p / p.sum(), vecs[:, keep])
        return self._eig


def outcome_probability(state: RotatedState, outcome: ReplicaOutcome) -> float:
    """<Psi_x| sigma^{(x)t} |Psi_x> from single-copy entries of sigma."""
    if outcome.d != state.dim:
        raise ValueError("outcome alphabet does not match state dimension")
    sigma = state.sigma
    members = outcome.cls.members
    m = len(members)
    gram = np.empty((m, m), dtype=complex)
    for r, a in enumerate(members):
        for rp, b in enumerate(members):
            v = 1.0 + 0j
            for j in range(state.t):
                v *= sigma[a[j], b[j]]
            gram[r, rp] = v
    phases = np.exp(2j * np.pi * outcome.k * np.arange(m) / m)
    p = (phases.conj() @ gram @ phases / m).real
    return float(max(p, 0.0)) if p > -1e-12 else p


def pair_probability_table(state: RotatedState) -> np.ndarray:
    """t=2 outcome weights over pairs (a, b), flattened with index a*d + b.

    Symmetric sector (a < b): s_aa s_bb + |s_ab|^2; antisymmetric (a > b):
    s_aa s_bb - |s_ab|^2; diagonal: s_aa^2.
    """
    if state.t != 2:
        raise ValueError("pair table only defined for t = 2")
    d = state.dim
    if d * d > MAX_ENUMERATION:
        raise SizeError(f"t=2 outcome table of size {d * d} exceeds enumeration cap")
    diag = np.diagonal(state.sigma).real
    cross = np.abs(state.sigma) ** 2
    sign = np.sign(np.subtract.outer(np.arange(d), np.arange(d))).T  # +1 above diag
    weights = np.outer(diag, diag) + sign * cross
    np.fill_diagonal(weights, diag * diag)
    return clip_weights(weights.reshape(-1))


@lru_cache(maxsize=16)
def _pair_sign_masks(d: int):
    a = np.arange(d)
    upper = a[:, None] < a[None, :]
    lower = a[:, None] > a[None, :]
    return upper, lower


def pair_weights_pure(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """t=2 outcome weights for the pure product input u (x) v.

    Symmetric branch |u_a v_b + u_b v_a|^2 / 2, antisymmetric branch
    |u_b v_a - u_a v_b|^2 / 2, diagonal |u_a v_a|^2; same distribution as
    pair_probability_table on the rank-1 sigma = |u><u| mixture component.
    """
    m = np.outer(u, v)
    sym = np.abs(m + m.T) ** 2
    anti = np.abs(m.T - m) ** 2
    upper, lower = _pair_sign_masks(m.shape[0])
    weights = np.where(upper, sym, anti) * 0.5
    np.fill_diagonal(weights, np.abs(np.diagonal(m)) ** 2)
    return weights.reshape(-1)


def _draw_replica_vectors(state: RotatedState, rng: np.random.Generator):
    probs, vecs = state.eig()
    ks = sample_indices(probs, state.t, rng)
    return [vecs[:, k] for k in ks]


def sample_outcome_global(
    state: RotatedState, rng: np.random.Generator, method: str = "auto"
) -> ReplicaOutcome:
    """One outcome x distributed per outcome_probability."""
    d = state.dim
    t = state.t
    if method == "auto":
        method = "table" if (t == 2 and d * d <= MAX_ENUMERATION) else "statevector"
    if method == "table":
        weights = pair_probability_table(state)
        idx = int(sample_indices(weights, 1, rng)[0])
        return class_table(d, 2).outcome_from_index(idx)
    if method != "statevector":
        raise ValueError(f"unknown sampling method {method!r}")
    size = d ** t
    if size > MAX_DENSE_DIM:
        raise SizeError(f"dense rotation of dimension {size} exceeds cap")
    replicas = _draw_replica_vectors(state, rng)
    joint = reduce(np.kron, replicas)
    rotated = build_R(d, t) @ joint
    weights = np.abs(rotated) ** 2
    idx = int(sample_indices(weights, 1, rng)[0])
    return outcome_of(index_string(idx, d, t), d)


# ---------------------------------------------------------------------------
# Qubit-partitioned sampling: measure each block of qubits in its own replica
# basis.  The joint pure state over t*n qubits is kept as a tensor with axes
# ordered replica-major: axis j*n + i is qubit i of replica j.
# ---------------------------------------------------------------------------


def normalize_blocks(n: int, blocks) -> tuple:
    out = tuple(tuple(int(i) for i in b) for b in blocks)
    flat = [i for b in out for i in b]
    if sorted(flat) != list(range(n)):
        raise ValueError(f"blocks {out} are not a partition of 0..{n - 1}")
    return out


def singleton_blocks(n: int) -> tuple:
    return tuple((i,) for i in range(n))


@dataclass(frozen=True)
class _BlockPlan:
    n: int
    t: int
    blocks: tuple
    axes: tuple          # per block: tensor axes (replica-major within block)
    dims: tuple          # per block: local alphabet 2^|block|
    shifts: tuple        # per block, per axis: bit shift inside the joint index


@lru_cache(maxsize=128)
def _block_plan(n: int, t: int, blocks: tuple) -> _BlockPlan:
    total_axes = t * n
    if 2 ** total_axes > MAX_STATE_AMPLITUDES:
        raise SizeError(f"joint pure state of 2^{total_axes} amplitudes exceeds cap")
    axes = []
    dims = []
    shifts = []
    for b in blocks:
        ax = tuple(j * n + i for j in range(t) for i in b)
        axes.append(ax)
        dims.append(2 ** len(b))
        shifts.append(tuple(total_axes - 1 - a for a in ax))
        if dims[-1] ** t > MAX_DENSE_DIM:
            raise SizeError(f"block {b} needs a dense rotation beyond the cap")
        build_R(dims[-1], t)  # warm the cache; validates size
        class_table(dims[-1], t)
    return _BlockPlan(n=n, t=t, blocks=blocks, axes=tuple(axes), dims=tuple(dims), shifts=tuple(shifts))


def apply_gate_to_axes(flat: np.ndarray, gate: np.ndarray, axes: tuple, total: int) -> np.ndarray:
    """Apply a gate to the given binary axes of a flattened state tensor.

    Small tensors take a segment-reshape + GEMM route; large ones fall back
    to moveaxis, whose one big GEMM amortizes the strided copies.
    """
    k = len(axes)
    if total <= 13:
        shape = []
        gate_pos = []
        prev = -1
        for a in axes:
            if a - prev - 1 > 0:
                shape.append(1 << (a - prev - 1))
            gate_pos.append(len(shape))
            shape.append(2)
            prev = a
        if total - prev - 1 > 0:
            shape.append(1 << (total - prev - 1))
        rest_pos = [i for i in range(len(shape)) if i not in gate_pos]
        perm = gate_pos + rest_pos
        mt = flat.reshape(shape).transpose(perm).reshape(1 << k, -1)
        out = gate @ mt
        inv = np.argsort(perm)
        return out.reshape([shape[p] for p in perm]).transpose(inv).reshape(-1)
    tensor = flat.reshape((2,) * total)
    moved = np.moveaxis(tensor, axes, range(k))
    shape = moved.shape
    rotated = gate @ moved.reshape(1 << k, -1)
    return np.moveaxis(rotated.reshape(shape), range(k), axes).reshape(-1)


def _apply_block_rotations(psi: np.ndarray, plan: _BlockPlan) -> np.ndarray:
    """Rotate every block to its computational basis on the joint tensor."""
    total_axes = plan.t * plan.n
    flat = psi.reshape(-1)
    for b, ax in zip(plan.blocks, plan.axes):
        d_b = 2 ** len(b)
        flat = apply_gate_to_axes(flat, build_R(d_b, plan.t), ax, total_axes)
    return flat


def joint_weights_pure(replicas, plan: _BlockPlan) -> np.ndarray:
    """Outcome weights over the 2^(t n) joint index for a pure product input."""
    psi = reduce(np.kron, replicas)
    rotated = _apply_block_rotations(psi, plan)
    return np.abs(rotated) ** 2


def decode_joint_index(idx: int, plan: _BlockPlan):
    """Per-block outcomes encoded in one joint computational-basis index."""
    outcomes = []
    for b, shifts, d_b in zip(plan.blocks, plan.shifts, plan.dims):
        m = len(b)
        symbols = []
        for j in range(plan.t):
            sym = 0
            for pos in range(m):
                bit = (idx >> shifts[j * m + pos]) & 1
                sym = (sym << 1) | bit
            symbols.append(sym)
        outcomes.append(class_table(d_b, plan.t).outcome(tuple(symbols)))
    return outcomes


def joint_f_products(plan: _BlockPlan) -> np.ndarray:
    """Vector of prod-over-blocks Re-f eigensigns per joint index.

    Valid as the real part of the product only when every block factor is
    real (always true at t = 2); general consumers use joint_f_complex.
    """
    return joint_f_complex(plan).real


def joint_f_complex(plan: _BlockPlan) -> np.ndarray:
    idx = np.arange(2 ** (plan.t * plan.n), dtype=np.int64)
    total = np.ones(idx.size, dtype=complex)
    for b, shifts, d_b in zip(plan.blocks, plan.shifts, plan.dims):
        m = len(b)
        sub = np.zeros(idx.size, dtype=np.int64)
        for j in range(plan.t):
            for pos in range(m):
                bit = (idx >> shifts[j * m + pos]) & 1
                sub = (sub << 1) | bit
        total *= class_table(d_b, plan.t).f_eig[sub]
    return total


def sample_outcome_local(
    state: RotatedState, blocks, rng: np.random.Generator
):
    """Per-block outcomes for one shot of the product-basis measurement."""
    if state.n is None:
        raise ValueError("partitioned sampling needs the qubit count n")
    plan = _block_plan(state.n, state.t, normalize_blocks(state.n, blocks))
    replicas = _draw_replica_vectors(state, rng)
    weights = joint_weights_pure(replicas, plan)
    idx = int(sample_indices(weights, 1, rng)[0])
    return decode_joint_index(idx, plan)
