"""Estimators and post-processing for nonlinear functionals tr(O rho^t).

Provided protocols: replica-shadow snapshots from a joint measurement on t
replicas ("afrs"), the subsystem-restricted variant with block rotations
("local afrs"), the moment estimator, the exact-mapping multi-shot variant,
the single-copy shadow baseline ("os"), virtual distillation, median-of-means
aggregation, and observable-set partitioning with sample budgets.
"""

import math
from dataclasses import dataclass
from functools import reduce

import numpy as np

from .ensembles import (
    GLOBAL_CLIFFORD,
    IDENTITY,
    LOCAL_CLIFFORD,
    UnitarySample,
    apply_to_density,
    bits_of,
    born_diagonal,
    dense_unitary,
    inverse_channel_snapshot,
    sample_global_clifford,
    sample_local_clifford,
    sample_unitary,
)
from .linalg import MAX_DENSE_DIM, ProbabilityTable, SizeError, sample_indices
from .replica_basis import (
    build_R,
    class_table,
    f_eigenvalue,
    f_value,
    index_string,
    map_outcome,
    mapping_distribution,
    outcome_of,
)
from .sampler import (
    _block_plan,
    decode_joint_index,
    joint_f_complex,
    joint_weights_pure,
    normalize_blocks,
    pair_probability_table,
    pair_weights_pure,
    RotatedState,
    singleton_blocks,
)
from .states import PAULI, DensityMatrix, Observable

AFRS_MODE = "afrs"
MULTISHOT_MODE = "multishot"


@dataclass(frozen=True)
class Snapshot:
    """One replica-measurement shot, enough to reconstruct the t-th power."""

    unitary: UnitarySample
    t: int
    f_re: float
    b: int | None = None
    b_table: ProbabilityTable | None = None
    mode: str = AFRS_MODE


@dataclass(frozen=True)
class LocalSnapshot:
    """One blockwise shot reconstructing the state power reduced on `subsystem`."""

    subsystem: tuple
    n: int
    t: int
    f_re_total: float
    unitary: UnitarySample | None = None
    b: int | None = None
    b_table: ProbabilityTable | None = None
    mode: str = AFRS_MODE


@dataclass(frozen=True)
class EstimateResult:
    mean: float
    stderr: float
    values: np.ndarray

    @property
    def shots(self) -> int:
        return self.values.size


def _result(values: np.ndarray) -> EstimateResult:
    values = np.asarray(values, dtype=float)
    stderr = float(values.std(ddof=1) / np.sqrt(values.size)) if values.size > 1 else 0.0
    return EstimateResult(mean=float(values.mean()), stderr=stderr, values=values)


def _mixture(rho: DensityMatrix):
    vals, vecs = np.linalg.eigh(rho.matrix)
    keep = vals > 1e-12
    p = vals[keep]
    return p / p.sum(), vecs[:, keep]


# ---------------------------------------------------------------------------
# Full-register snapshots
# ---------------------------------------------------------------------------


def afrs_snapshot(
    rho: DensityMatrix,
    ensemble: str,
    t: int,
    rng: np.random.Generator,
    multishot: bool = False,
    method: str = "auto",
    _mix=None,
) -> Snapshot:
    """Sample V, measure t replicas jointly, map the outcome.

    t=2 samples the outcome from a closed-form d^2 table (from sigma entries,
    or from pure-replica amplitudes when the spectral mixture is supplied);
    otherwise t replicas are drawn from the mixture and rotated densely.
    The classical mapping draw happens last, so a multishot snapshot taken
    from a stream replica consumes the identical (V, x) prefix.
    """
    n = rho.n_qubits
    d = rho.dim
    if method == "auto":
        method = "table" if t == 2 else "statevector"
    sample = sample_unitary(ensemble, n, rng)
    if method == "table":
        if t != 2:
            raise ValueError("the closed-form table path is defined for t = 2")
        if _mix is None:
            sigma = apply_to_density(sample, rho.matrix)
            weights = pair_probability_table(RotatedState(sigma=sigma, t=2))
        else:
            probs, vecs = _mix
            k1, k2 = sample_indices(probs, 2, rng)
            u = _apply_sample_to_vector(sample, vecs[:, k1], n)
            v = u if k2 == k1 else _apply_sample_to_vector(sample, vecs[:, k2], n)
            weights = pair_weights_pure(u, v)
        idx = int(sample_indices(weights, 1, rng)[0])
        outcome = class_table(d, 2).outcome_from_index(idx)
    elif method == "statevector":
        probs, vecs = _mix if _mix is not None else _mixture(rho)
        ks = sample_indices(probs, t, rng)
        replicas = [_apply_sample_to_vector(sample, vecs[:, k], n) for k in ks]
        rotated = build_R(d, t) @ reduce(np.kron, replicas)
        idx = int(sample_indices(np.abs(rotated) ** 2, 1, rng)[0])
        outcome = outcome_of(index_string(idx, d, t), d)
    else:
        raise ValueError(f"unknown sampling method {method!r}")
    f_re = f_value(outcome)
    if multishot:
        return Snapshot(unitary=sample, t=t, f_re=f_re, b_table=mapping_distribution(outcome), mode=MULTISHOT_MODE)
    return Snapshot(unitary=sample, t=t, f_re=f_re, b=map_outcome(outcome, rng), mode=AFRS_MODE)


def multishot_snapshot(rho, ensemble, t, rng, method="auto") -> Snapshot:
    """Snapshot carrying the exact mapping law instead of one sampled b."""
    return afrs_snapshot(rho, ensemble, t, rng, multishot=True, method=method)


def _apply_sample_to_vector(sample: UnitarySample, vec: np.ndarray, n: int) -> np.ndarray:
    from .ensembles import apply_to_vector

    return apply_to_vector(sample, vec)


def _site_value(u: np.ndarray, bit: int, letter: str) -> float:
    # 3 <b| U sigma U^dag |b>; the factor 3 is the single-qubit inverse channel
    row = u[bit, :]
    return 3.0 * float((row @ PAULI[letter] @ row.conj()).real)


def _pauli_value_for_b(snapshot_factors, b: int, n: int, obs: Observable) -> float:
    bits = bits_of(b, n)
    val = 1.0
    for i in obs.support:
        val *= _site_value(snapshot_factors[i], bits[i], obs.letters[i])
    return val


def _generic_value_for_b(sample: UnitarySample, b: int, obs_dense: np.ndarray, obs_trace: float) -> float:
    d = sample.dim
    if sample.ensemble == GLOBAL_CLIFFORD:
        row = sample.dense[b, :]
        return float((d + 1) * (row @ obs_dense @ row.conj()).real - obs_trace)
    snap = inverse_channel_snapshot(sample, b)
    return float(np.trace(obs_dense @ snap).real)


def snapshot_value(snap: Snapshot, obs: Observable, method: str = "auto") -> float:
    """Per-shot estimate of tr(O rho^t) from one snapshot."""
    sample = snap.unitary
    fast = (
        method in ("auto", "pauli")
        and sample.ensemble == LOCAL_CLIFFORD
        and obs.kind == "pauli"
    )
    if method == "dense" or not fast:
        if obs.kind == "projector" and sample.ensemble == GLOBAL_CLIFFORD and method != "dense":
            d = sample.dim
            if snap.mode == MULTISHOT_MODE:
                rot = sample.dense @ obs.vector
                acc = sum(
                    w * ((d + 1) * abs(rot[b]) ** 2 - 1.0)
                    for b, w in zip(snap.b_table.labels, snap.b_table.weights)
                )
                return snap.f_re * float(acc)
            rot = sample.dense[snap.b, :] @ obs.vector
            return snap.f_re * float((d + 1) * abs(rot) ** 2 - 1.0)
        dense = obs.dense()
        tr = obs.trace()
        if snap.mode == MULTISHOT_MODE:
            acc = sum(
                w * _generic_value_for_b(sample, b, dense, tr)
                for b, w in zip(snap.b_table.labels, snap.b_table.weights)
            )
            return snap.f_re * float(acc)
        return snap.f_re * _generic_value_for_b(sample, snap.b, dense, tr)
    n = sample.n
    if snap.mode == MULTISHOT_MODE:
        acc = sum(
            w * _pauli_value_for_b(sample.factors, b, n, obs)
            for b, w in zip(snap.b_table.labels, snap.b_table.weights)
        )
        return snap.f_re * float(acc)
    return snap.f_re * _pauli_value_for_b(sample.factors, snap.b, n, obs)


def estimate_observable(snapshots, obs: Observable, method: str = "auto") -> EstimateResult:
    """Mean of per-shot values tr(O . reconstruction); O=I estimates tr(rho^t)."""
    values = np.fromiter(
        (snapshot_value(s, obs, method) for s in snapshots), dtype=float, count=len(snapshots)
    )
    return _result(values)


def snapshot_reconstruction(snap: Snapshot) -> np.ndarray:
    """Dense reconstruction of the t-th power estimate (cross-check path)."""
    if snap.mode == MULTISHOT_MODE:
        acc = sum(
            w * inverse_channel_snapshot(snap.unitary, b)
            for b, w in zip(snap.b_table.labels, snap.b_table.weights)
        )
        return snap.f_re * acc
    return snap.f_re * inverse_channel_snapshot(snap.unitary, snap.b)


def collect_afrs(rho, ensemble, t, shots, rng, multishot=False, method="auto"):
    mix = _mixture(rho)
    return [
        afrs_snapshot(rho, ensemble, t, rng, multishot, method, _mix=mix)
        for _ in range(shots)
    ]


# ---------------------------------------------------------------------------
# Subsystem-restricted snapshots (block rotations, V acts on A only)
# ---------------------------------------------------------------------------


def _local_partition(n: int, subsystem: tuple) -> tuple:
    rest = tuple((i,) for i in range(n) if i not in subsystem)
    blocks = ((subsystem,) if subsystem else ()) + rest
    return normalize_blocks(n, blocks)


def local_afrs_snapshot(
    rho: DensityMatrix,
    subsystem,
    t: int,
    rng: np.random.Generator,
    ensemble: str = LOCAL_CLIFFORD,
    multishot: bool = False,
    _mix=None,
) -> LocalSnapshot:
    """One blockwise shot: V = V_A (x) identity, block rotations, mapping on A.

    The complement is measured qubit-wise, so its contribution to the shift
    eigenvalue is a product of single-qubit factors.
    """
    n = rho.n_qubits
    subsystem = tuple(sorted(int(i) for i in subsystem))
    plan = _block_plan(n, t, _local_partition(n, subsystem))
    probs, vecs = _mix if _mix is not None else _mixture(rho)
    a = len(subsystem)
    sample = None
    if a:
        sample = sample_unitary(ensemble, a, rng)
    ks = sample_indices(probs, t, rng)
    replicas = []
    for k in ks:
        v = vecs[:, k]
        if sample is not None and sample.ensemble != IDENTITY:
            v = _apply_on_sites(v, sample, subsystem, n)
        replicas.append(v)
    weights = joint_weights_pure(replicas, plan)
    idx = int(sample_indices(weights, 1, rng)[0])
    outcomes = decode_joint_index(idx, plan)
    f_total = np.prod([f_eigenvalue(o) for o in outcomes])
    f_re_total = float(f_total.real)
    if not subsystem:
        return LocalSnapshot(subsystem=(), n=n, t=t, f_re_total=f_re_total, mode=AFRS_MODE)
    a_outcome = outcomes[0]
    if multishot:
        return LocalSnapshot(
            subsystem=subsystem, n=n, t=t, f_re_total=f_re_total, unitary=sample,
            b_table=mapping_distribution(a_outcome), mode=MULTISHOT_MODE,
        )
    return LocalSnapshot(
        subsystem=subsystem, n=n, t=t, f_re_total=f_re_total, unitary=sample,
        b=map_outcome(a_outcome, rng), mode=AFRS_MODE,
    )


def _apply_on_sites(vec: np.ndarray, sample: UnitarySample, sites: tuple, n: int) -> np.ndarray:
    from .sampler import apply_gate_to_axes

    flat = vec.reshape(-1)
    if sample.ensemble == LOCAL_CLIFFORD:
        for u, site in zip(sample.factors, sites):
            flat = apply_gate_to_axes(flat, u, (site,), n)
        return flat
    return apply_gate_to_axes(flat, sample.dense, tuple(sites), n)


def _restricted_letters(obs: Observable, subsystem: tuple) -> str:
    if obs.kind != "pauli":
        raise ValueError("subsystem estimation supports Pauli-string observables")
    if not set(obs.support) <= set(subsystem):
        raise ValueError(f"observable support {obs.support} not inside subsystem {subsystem}")
    return "".join(obs.letters[i] for i in subsystem)


def local_snapshot_value(snap: LocalSnapshot, obs: Observable) -> float:
    if obs.kind == "pauli" and obs.weight == 0:
        return snap.f_re_total
    letters = _restricted_letters(obs, snap.subsystem)
    a = len(snap.subsystem)
    sample = snap.unitary
    if sample.ensemble == LOCAL_CLIFFORD:
        def for_b(b):
            bits = bits_of(b, a)
            val = 1.0
            for pos, letter in enumerate(letters):
                if letter != "I":
                    val *= _site_value(sample.factors[pos], bits[pos], letter)
            return val
    else:
        from .linalg import kron_all

        dense_a = kron_all([PAULI[c] for c in letters])
        tr_a = 2 ** a if all(c == "I" for c in letters) else 0.0

        def for_b(b):
            return _generic_value_for_b(sample, b, dense_a, tr_a)

    if snap.mode == MULTISHOT_MODE:
        return snap.f_re_total * float(
            sum(w * for_b(b) for b, w in zip(snap.b_table.labels, snap.b_table.weights))
        )
    return snap.f_re_total * for_b(snap.b)


def estimate_local(snapshots, obs: Observable) -> EstimateResult:
    values = np.fromiter(
        (local_snapshot_value(s, obs) for s in snapshots), dtype=float, count=len(snapshots)
    )
    return _result(values)


def collect_local_afrs(rho, subsystem, t, shots, rng, ensemble=LOCAL_CLIFFORD, multishot=False):
    mix = _mixture(rho)
    return [
        local_afrs_snapshot(rho, subsystem, t, rng, ensemble, multishot, _mix=mix)
        for _ in range(shots)
    ]


# ---------------------------------------------------------------------------
# Moment estimator: all-singleton blocks, no random unitary
# ---------------------------------------------------------------------------


def moment_values(rho: DensityMatrix, t: int, shots: int, rng: np.random.Generator) -> np.ndarray:
    """Per-shot Re prod_i f(x^i); grouped over eigen-draws for speed."""
    n = rho.n_qubits
    plan = _block_plan(n, t, singleton_blocks(n))
    probs, vecs = _mixture(rho)
    f_re = joint_f_complex(plan).real
    draws = sample_indices(probs, shots * t, rng).reshape(shots, t)
    groups, inverse = np.unique(draws, axis=0, return_inverse=True)
    values = np.empty(shots, dtype=float)
    for g, ktuple in enumerate(groups):
        members = np.flatnonzero(inverse == g)
        weights = joint_weights_pure([vecs[:, k] for k in ktuple], plan)
        idxs = sample_indices(weights, members.size, rng)
        values[members] = f_re[idxs]
    return values


def moment_estimate(rho: DensityMatrix, t: int, shots: int, rng: np.random.Generator) -> EstimateResult:
    """Estimate tr(rho^t) from products of per-qubit shift eigenvalues."""
    return _result(moment_values(rho, t, shots, rng))


# ---------------------------------------------------------------------------
# Single-copy shadow baseline
# ---------------------------------------------------------------------------


def os_snapshot(rho: DensityMatrix, ensemble: str, rng: np.random.Generator) -> Snapshot:
    n = rho.n_qubits
    sample = sample_unitary(ensemble, n, rng)
    diag = np.maximum(born_diagonal(sample, rho.matrix), 0.0)
    b = int(sample_indices(diag, 1, rng)[0])
    return Snapshot(unitary=sample, t=1, f_re=1.0, b=b, mode="os")


def _os_tuple_value(snaps, obs: Observable) -> float:
    """Re tr(O snap_1 snap_2 ... snap_t) for one disjoint tuple."""
    first = snaps[0].unitary
    if first.ensemble == LOCAL_CLIFFORD and obs.kind == "pauli":
        n = first.n
        total = 1.0
        for i in range(n):
            m = PAULI[obs.letters[i]].copy()
            for s in snaps:
                u = s.unitary.factors[i]
                bit = bits_of(s.b, n)[i]
                site = 3.0 * np.outer(u.conj().T[:, bit], u[bit, :]) - np.eye(2)
                m = m @ site
            total *= float(np.trace(m).real)
        return total
    if first.ensemble == GLOBAL_CLIFFORD and len(snaps) == 2:
        d = first.dim
        dense = obs.dense()
        tr_o = obs.trace()
        v1 = snaps[0].unitary.dense.conj().T[:, snaps[0].b]
        v2 = snaps[1].unitary.dense.conj().T[:, snaps[1].b]
        t12 = (v2.conj() @ dense @ v1) * (v1.conj() @ v2)
        e1 = (v1.conj() @ dense @ v1).real
        e2 = (v2.conj() @ dense @ v2).real
        return float(((d + 1) ** 2 * t12).real - (d + 1) * (e1 + e2) + tr_o)
    dense = obs.dense()
    prod = reduce(np.matmul, [inverse_channel_snapshot(s.unitary, s.b) for s in snaps])
    return float(np.trace(dense @ prod).real)


def os_baseline(
    rho: DensityMatrix, ensemble: str, t: int, obs: Observable, shots: int, rng: np.random.Generator
) -> EstimateResult:
    """U-statistic over disjoint t-tuples of independent single-copy snapshots."""
    if shots < t:
        raise ValueError(f"need at least t={t} snapshots, got {shots}")
    if shots % t:
        raise ValueError(f"shots={shots} must be a multiple of t={t}")
    snaps = [os_snapshot(rho, ensemble, rng) for _ in range(shots)]
    values = np.array(
        [_os_tuple_value(snaps[i * t : (i + 1) * t], obs) for i in range(shots // t)]
    )
    return _result(values)


# ---------------------------------------------------------------------------
# Aggregation and scheduling
# ---------------------------------------------------------------------------


def median_of_means(values, batches: int) -> float:
    """Median of `batches` equal batch means; remainder shots are dropped."""
    values = np.asarray(values, dtype=float)
    if batches < 1:
        raise ValueError("batch count must be >= 1")
    if values.size < batches:
        raise ValueError(f"{values.size} values cannot fill {batches} batches")
    size = values.size // batches
    return float(np.median(values[: batches * size].reshape(batches, size).mean(axis=1)))


@dataclass(frozen=True)
class PlanSubset:
    observables: tuple
    blocks: tuple


@dataclass(frozen=True)
class ObservablePlan:
    subsets: tuple
    n: int | None

    @property
    def k(self) -> int:
        return len(self.subsets)

    @property
    def total_observables(self) -> int:
        return sum(len(s.observables) for s in self.subsets)


def _supports_compatible(s1: set, s2: set) -> bool:
    return not (s1 & s2) or s1 <= s2 or s2 <= s1


def plan_observables(observables, n: int | None = None) -> ObservablePlan:
    """Greedy first-fit partition into subsets whose supports are pairwise
    disjoint or nested, each with a covering block partition."""
    obs = list(observables)
    if not obs:
        raise ValueError("observable list is empty")
    order = sorted(range(len(obs)), key=lambda i: -len(obs[i].support))
    groups: list[list] = []
    for i in order:
        s = set(obs[i].support)
        for g in groups:
            if all(_supports_compatible(s, set(obs[j].support)) for j in g):
                g.append(i)
                break
        else:
            groups.append([i])
    subsets = []
    for g in groups:
        supports = sorted((set(obs[j].support) for j in g), key=len, reverse=True)
        blocks: list[tuple] = []
        for s in supports:
            if s and not any(s <= set(b) for b in blocks):
                blocks.append(tuple(sorted(s)))
        covered = {i for b in blocks for i in b}
        if n is not None:
            blocks.extend((i,) for i in range(n) if i not in covered)
        blocks.sort(key=lambda b: b[0])
        subsets.append(
            PlanSubset(observables=tuple(obs[j] for j in sorted(g)), blocks=tuple(blocks))
        )
    return ObservablePlan(subsets=tuple(subsets), n=n)


@dataclass(frozen=True)
class PlanBudget:
    epsilon: float
    delta: float
    max_var: float
    batch_size: int
    batches: int
    per_subset: tuple
    total: int
    formula_total: float


def plan_budget(plan: ObservablePlan, epsilon: float, delta: float, max_var: float) -> PlanBudget:
    """Shots sufficient for every observable within epsilon at confidence 1-delta,
    using median-of-means batches of size 34 Var / eps^2."""
    if epsilon <= 0 or not 0 < delta < 1:
        raise ValueError("need epsilon > 0 and delta in (0, 1)")
    l_total = plan.total_observables
    n_batch = math.ceil(34.0 * max_var / epsilon ** 2)
    r = math.ceil(2.0 * math.log(2.0 * l_total / delta))
    per_subset = tuple(n_batch * r for _ in plan.subsets)
    formula = (68.0 * plan.k / epsilon ** 2) * max_var * math.log(2.0 * l_total / delta)
    return PlanBudget(
        epsilon=epsilon,
        delta=delta,
        max_var=max_var,
        batch_size=n_batch,
        batches=r,
        per_subset=per_subset,
        total=sum(per_subset),
        formula_total=formula,
    )


# ---------------------------------------------------------------------------
# Virtual distillation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class VDResult:
    value: float
    numerator: float
    denominator: float
    shots_num: int
    shots_den: int
    degenerate: bool
    num_values: np.ndarray
    den_values: np.ndarray


def vd_estimate(
    rho: DensityMatrix,
    obs: Observable,
    t: int,
    shots_num: int,
    shots_den: int,
    rng_num: np.random.Generator,
    rng_den: np.random.Generator,
    protocol: str = "local_afrs",
    ensemble: str = LOCAL_CLIFFORD,
) -> VDResult:
    """Ratio estimate tr(O rho^t) / tr(rho^t) from two independent shot sets.

    A non-positive denominator estimate is flagged degenerate (value nan),
    never clamped.
    """
    if protocol == "local_afrs":
        snaps = collect_local_afrs(rho, obs.support, t, shots_num, rng_num, ensemble)
        num_values = np.array([local_snapshot_value(s, obs) for s in snaps])
        den_values = moment_values(rho, t, shots_den, rng_den)
    elif protocol == "afrs":
        snaps = collect_afrs(rho, ensemble, t, shots_num, rng_num)
        num_values = np.array([snapshot_value(s, obs) for s in snaps])
        den_values = np.array([s.f_re for s in collect_afrs(rho, ensemble, t, shots_den, rng_den)])
    elif protocol == "os":
        from .states import pauli_observable

        num_values = os_baseline(rho, ensemble, t, obs, shots_num, rng_num).values
        identity = pauli_observable("I" * rho.n_qubits)
        den_values = os_baseline(rho, ensemble, t, identity, shots_den, rng_den).values
    else:
        raise ValueError(f"unknown protocol {protocol!r}")
    num = float(num_values.mean())
    den = float(den_values.mean())
    degenerate = den <= 0.0
    value = math.nan if degenerate else num / den
    return VDResult(
        value=value,
        numerator=num,
        denominator=den,
        shots_num=int(num_values.size),
        shots_den=int(den_values.size),
        degenerate=degenerate,
        num_values=num_values,
        den_values=den_values,
    )


# ---------------------------------------------------------------------------
# Variance bounds used as test gates
# ---------------------------------------------------------------------------


def shadow_norm_bound(obs: Observable, ensemble: str) -> float:
    """Upper bound on the squared shadow norm of the traceless part."""
    if ensemble == LOCAL_CLIFFORD:
        if obs.kind != "pauli":
            raise ValueError("local-Clifford bound instantiated for Pauli strings")
        return float(4 ** obs.weight) * obs.norm_inf() ** 2
    if ensemble == GLOBAL_CLIFFORD:
        return 3.0 * obs.trace_sq()
    raise ValueError(f"no shadow-norm bound for ensemble {ensemble!r}")


def variance_bound(obs: Observable, ensemble: str) -> float:
    return shadow_norm_bound(obs, ensemble) + obs.norm_inf() ** 2
