"""Replica-shadow estimation of nonlinear state functionals tr(O rho^t).

Layout:
  linalg         dense primitives, probability tables, caps and tolerances
  rng            keyed splittable random streams
  states         benchmark states and observables
  ensembles      random unitary ensembles and the shadow inverse channel
  replica_basis  cyclic classes, Fourier measurement basis, mapping strategy
  sampler        exact simulation of the replica measurement
  estimators     all estimation protocols and post-processing
  compiler       gate-level compilation of the two-replica rotation
  oracle         brute-force ground truth for every estimator
  cli            seeded experiment runner
"""

from .linalg import ATOL, ContractError, ProbabilityTable, SizeError
from .rng import stream
from .states import (
    DensityMatrix,
    Observable,
    depolarize,
    ghz_state,
    observable_from_spec,
    pauli_observable,
    projector_observable,
    random_density,
)
from .ensembles import (
    GLOBAL_CLIFFORD,
    IDENTITY,
    LOCAL_CLIFFORD,
    UnitarySample,
    inverse_channel_snapshot,
    sample_global_clifford,
    sample_local_clifford,
    single_qubit_cliffords,
)
from .replica_basis import (
    CyclicClass,
    ReplicaOutcome,
    build_R,
    enumerate_classes,
    f_value,
    map_outcome,
    mapping_distribution,
    psi_state,
)
from .sampler import RotatedState, outcome_probability, sample_outcome_global, sample_outcome_local
from .estimators import (
    EstimateResult,
    LocalSnapshot,
    Snapshot,
    VDResult,
    afrs_snapshot,
    estimate_local,
    estimate_observable,
    local_afrs_snapshot,
    median_of_means,
    moment_estimate,
    multishot_snapshot,
    os_baseline,
    plan_budget,
    plan_observables,
    vd_estimate,
)
from .compiler import (
    Circuit,
    EquivalenceReport,
    compile_r_many_qubit,
    compile_r_qudit,
    compile_r_single_qubit,
    parse_circuit,
    serialize_circuit,
    simulate_circuit,
    verify_equivalence,
)
from . import oracle

__version__ = "0.1.0"
