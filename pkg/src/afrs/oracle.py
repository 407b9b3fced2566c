"""Independent brute-force ground truth at desk scale.

Everything here is deterministic and RNG-free: dense matrix powers, dense
basis-vector probabilities, and exhaustive sums over the enumerable
single-qubit-Clifford ensemble (24^n unitaries, so n <= 2).
"""

import itertools
from dataclasses import dataclass
from functools import lru_cache, reduce

import numpy as np

import math

from .ensembles import (
    LOCAL_CLIFFORD,
    UnitarySample,
    dense_unitary,
    inverse_channel_snapshot,
    single_qubit_cliffords,
)
from .linalg import kron_all, partial_trace
from .replica_basis import class_table, index_string, psi_state
from .sampler import _block_plan, joint_f_complex, singleton_blocks
from .states import DensityMatrix, Observable

DENSE_POWER = "DENSE_POWER"
EXHAUSTIVE_ENUMERATION = "EXHAUSTIVE_ENUMERATION"
CLOSED_FORM_TABLE = "CLOSED_FORM_TABLE"

_MAX_ENUMERABLE_QUBITS = 2


@dataclass(frozen=True)
class OracleReport:
    name: str
    value: object
    method: str


def exact_nonlinear(obs: Observable, rho: DensityMatrix, t: int) -> float:
    """tr(O rho^t) by repeated dense multiplication."""
    if obs.dim != rho.dim:
        raise ValueError(f"observable dim {obs.dim} != state dim {rho.dim}")
    power = np.linalg.matrix_power(rho.matrix, t)
    return float(np.trace(obs.dense() @ power).real)


def nonlinear_report(obs: Observable, rho: DensityMatrix, t: int) -> OracleReport:
    return OracleReport(
        name=f"tr({obs.label or obs.kind} rho^{t})",
        value=exact_nonlinear(obs, rho, t),
        method=DENSE_POWER,
    )


def exact_fake_probability(rho: DensityMatrix, v, t: int, b: int) -> float:
    """Diagonal entry <b| V rho^t V^dag |b>; sums to tr(rho^t) over b."""
    vm = dense_unitary(v) if isinstance(v, UnitarySample) else np.asarray(v)
    power = np.linalg.matrix_power(rho.matrix, t)
    return float((vm @ power @ vm.conj().T)[b, b].real)


def decomposed_fake_probability(rho: DensityMatrix, v, t: int, b: int) -> complex:
    """The same quantity synthesized as sum_x f(x) Pr(b|x) Pr(x|V).

    Pr(x|V) is evaluated densely in the Fourier basis, so this route is
    independent of the production sampler's entrywise factorization.
    """
    d = rho.dim
    vm = dense_unitary(v) if isinstance(v, UnitarySample) else np.asarray(v)
    sigma = vm @ rho.matrix @ vm.conj().T
    sigma_t = _kron_power(sigma, t)
    table = class_table(d, t)
    total = 0.0 + 0.0j
    for idx in range(d ** t):
        outcome = table.outcome_from_index(idx)
        psi = psi_state(outcome.cls, outcome.k)
        prob_x = float((psi.conj() @ sigma_t @ psi).real)
        pr_b_x = outcome.x.count(b) / t
        if pr_b_x:
            total += table.f_eig[idx] * pr_b_x * prob_x
    return total


def _kron_power(m: np.ndarray, t: int) -> np.ndarray:
    return reduce(np.kron, [m] * t)


@lru_cache(maxsize=16)
def _psi_matrix_by_index(d: int, t: int) -> np.ndarray:
    """Column i is the Fourier basis vector of the class/rotation of string i."""
    table = class_table(d, t)
    size = d ** t
    out = np.empty((size, size), dtype=complex)
    for idx in range(size):
        o = table.outcome_from_index(idx)
        out[:, idx] = psi_state(o.cls, o.k)
    return out


@lru_cache(maxsize=16)
def _mapping_matrix(d: int, t: int) -> np.ndarray:
    """PrBX[i, b] = (occurrences of b in string i) / t."""
    size = d ** t
    out = np.zeros((size, d))
    for idx in range(size):
        for sym in index_string(idx, d, t):
            out[idx, sym] += 1.0 / t
    return out


def _enumerate_local_cliffords(n: int):
    """All 24^n product unitaries as UnitarySamples; n <= 2 only."""
    if n > _MAX_ENUMERABLE_QUBITS:
        raise ValueError(f"exhaustive enumeration limited to n <= {_MAX_ENUMERABLE_QUBITS}")
    table = single_qubit_cliffords()
    for combo in itertools.product(range(24), repeat=n):
        yield UnitarySample(
            ensemble=LOCAL_CLIFFORD,
            n=n,
            factors=tuple(table[i] for i in combo),
            indices=combo,
        )


def exhaustive_expectation(
    rho: DensityMatrix,
    t: int,
    mode: str = "afrs",
    subsystem: tuple | None = None,
    drop_f: bool = False,
) -> np.ndarray:
    """Exact expectation of the snapshot reconstruction over all (V, x, b).

    mode "afrs" and "multishot" share one sum (they differ only in how b is
    consumed, not in expectation); mode "local" restricts the ensemble and the
    mapping to `subsystem` and reproduces the reduced power.  With drop_f the
    shift eigenvalue is ignored and the sum reproduces rho itself (t-th power
    replaced by the state).
    """
    if mode == "local":
        return _exhaustive_local(rho, t, tuple(sorted(subsystem)), drop_f)
    if mode not in ("afrs", "multishot"):
        raise ValueError(f"unknown mode {mode!r}")
    n = rho.n_qubits
    d = rho.dim
    psi = _psi_matrix_by_index(d, t)
    pr_bx = _mapping_matrix(d, t)
    f_re = class_table(d, t).f_eig.real.copy()
    if drop_f:
        f_re[:] = 1.0
    acc = np.zeros((d, d), dtype=complex)
    count = 0
    for v in _enumerate_local_cliffords(n):
        vm = dense_unitary(v)
        sigma_t = _kron_power(vm @ rho.matrix @ vm.conj().T, t)
        probs = np.einsum("ji,jk,ki->i", psi.conj(), sigma_t, psi).real
        weight_b = (probs * f_re) @ pr_bx
        for b in range(d):
            if weight_b[b]:
                acc += weight_b[b] * inverse_channel_snapshot(v, b)
        count += 1
    return acc / count


@lru_cache(maxsize=16)
def _product_rotation(n: int, t: int, blocks: tuple) -> np.ndarray:
    """Dense joint block rotation; row b is the bra of the product basis state."""
    from .sampler import _apply_block_rotations

    plan = _block_plan(n, t, blocks)
    size = 2 ** (t * n)
    out = np.empty((size, size), dtype=complex)
    eye = np.eye(size, dtype=complex)
    for col in range(size):
        out[:, col] = _apply_block_rotations(eye[:, col], plan)
    return out


def _exhaustive_local(rho: DensityMatrix, t: int, subsystem: tuple, drop_f: bool) -> np.ndarray:
    n = rho.n_qubits
    a = len(subsystem)
    if a == 0:
        raise ValueError("local mode needs a non-empty subsystem")
    rest = tuple((i,) for i in range(n) if i not in subsystem)
    blocks = (subsystem,) + rest
    plan = _block_plan(n, t, blocks)
    rot = _product_rotation(n, t, blocks)
    f_re = joint_f_complex(plan).real.copy()
    if drop_f:
        f_re[:] = 1.0
    d_a = 2 ** a
    size = 2 ** (t * n)
    # mapping law restricted to the subsystem block
    pr_ba = np.zeros((size, d_a))
    table_a = class_table(d_a, t)
    for idx in range(size):
        sub = _subsystem_string(idx, plan)
        for sym in sub:
            pr_ba[idx, sym] += 1.0 / t
    acc = np.zeros((d_a, d_a), dtype=complex)
    count = 0
    for va in _enumerate_local_cliffords(a):
        full = UnitarySample(
            ensemble=LOCAL_CLIFFORD,
            n=n,
            factors=tuple(
                va.factors[subsystem.index(i)] if i in subsystem else np.eye(2, dtype=complex)
                for i in range(n)
            ),
        )
        vm = dense_unitary(full)
        sigma_t = _kron_power(vm @ rho.matrix @ vm.conj().T, t)
        probs = np.einsum("ij,jk,ik->i", rot, sigma_t, rot.conj()).real
        weight_b = (probs * f_re) @ pr_ba
        for b in range(d_a):
            if weight_b[b]:
                acc += weight_b[b] * inverse_channel_snapshot(va, b)
        count += 1
    return acc / count


def _subsystem_string(idx: int, plan) -> tuple:
    """Symbols of the first block (the subsystem) across all replicas."""
    shifts = plan.shifts[0]
    m = len(plan.blocks[0])
    out = []
    for j in range(plan.t):
        sym = 0
        for pos in range(m):
            sym = (sym << 1) | ((idx >> shifts[j * m + pos]) & 1)
        out.append(sym)
    return tuple(out)


def exact_variance(
    rho: DensityMatrix,
    obs: Observable,
    t: int,
    mode: str = "afrs",
) -> float:
    """Exhaustive single-shot variance of the observable estimator."""
    if mode not in ("afrs", "multishot"):
        raise ValueError(f"unknown mode {mode!r}")
    n = rho.n_qubits
    d = rho.dim
    psi = _psi_matrix_by_index(d, t)
    pr_bx = _mapping_matrix(d, t)
    f_re = class_table(d, t).f_eig.real
    dense = obs.dense()
    e1 = 0.0
    e2 = 0.0
    count = 0
    for v in _enumerate_local_cliffords(n):
        vm = dense_unitary(v)
        sigma_t = _kron_power(vm @ rho.matrix @ vm.conj().T, t)
        probs = np.einsum("ji,jk,ki->i", psi.conj(), sigma_t, psi).real
        obs_b = np.array(
            [np.trace(dense @ inverse_channel_snapshot(v, b)).real for b in range(d)]
        )
        if mode == "afrs":
            # E over x then b of (f obs_b)^1,2
            vals_xb = np.outer(f_re, obs_b)
            e1 += float(np.sum(probs[:, None] * pr_bx * vals_xb))
            e2 += float(np.sum(probs[:, None] * pr_bx * vals_xb ** 2))
        else:
            vals_x = f_re * (pr_bx @ obs_b)
            e1 += float(np.sum(probs * vals_x))
            e2 += float(np.sum(probs * vals_x ** 2))
        count += 1
    e1 /= count
    e2 /= count
    return e2 - e1 ** 2


def exact_moment_mean(rho: DensityMatrix, t: int) -> float:
    """Exact E[Re prod_i f(x^i)] for the all-singleton measurement; equals tr(rho^t)."""
    n = rho.n_qubits
    blocks = singleton_blocks(n)
    plan = _block_plan(n, t, blocks)
    rot = _product_rotation(n, t, blocks)
    f_re = joint_f_complex(plan).real
    sigma_t = _kron_power(rho.matrix, t)
    probs = np.einsum("ij,jk,ik->i", rot, sigma_t, rot.conj()).real
    return float(probs @ f_re)
