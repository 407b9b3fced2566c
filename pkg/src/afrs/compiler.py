"""Gate-level compilation of the two-replica entangling rotation.

Circuits are a small IR over wires (replica, site, local dim) with unitary
gates, mid-circuit computational-basis measurements, classically selected
gates, and integer register assignments.  Exact simulation enumerates all
measurement branches, which is what the distribution-equivalence verifier
consumes.
"""

import math
from dataclasses import dataclass, field
from functools import reduce

import numpy as np

from .linalg import clip_weights
from .replica_basis import build_R
from .states import DensityMatrix


@dataclass(frozen=True)
class Wire:
    index: int
    replica: int
    site: int
    dim: int          # physical level count
    input_dim: int    # logical level count of the supplied state


@dataclass(frozen=True)
class Gate:
    name: str
    params: tuple
    wires: tuple


@dataclass(frozen=True)
class Measure:
    wire: int
    reg: str


@dataclass(frozen=True)
class CGate:
    """Gate list selected by classical register values."""

    family: str
    params: tuple
    regs: tuple
    wires: tuple


@dataclass(frozen=True)
class Assign:
    """reg := op(args); ops XOR/AND/SUB take registers, MUX is (sel, a, b),
    CONST takes one literal."""

    reg: str
    op: str
    args: tuple


@dataclass(frozen=True)
class Circuit:
    wires: tuple
    instructions: tuple
    outputs: tuple            # (wire_index, register) per wire, wire order

    @property
    def dims(self) -> tuple:
        return tuple(w.dim for w in self.wires)

    @property
    def input_dims(self) -> tuple:
        return tuple(w.input_dim for w in self.wires)


class CircuitValidationError(ValueError):
    pass


def validate_circuit(circuit: Circuit) -> None:
    measured = set()
    written = set()
    for ins in circuit.instructions:
        if isinstance(ins, (Gate, CGate)):
            for w in ins.wires:
                if w in measured:
                    raise CircuitValidationError(f"wire {w} used after measurement")
            if isinstance(ins, CGate):
                for r in ins.regs:
                    if r not in written:
                        raise CircuitValidationError(f"register {r} read before write")
        elif isinstance(ins, Measure):
            if ins.wire in measured:
                raise CircuitValidationError(f"wire {ins.wire} measured twice")
            measured.add(ins.wire)
            written.add(ins.reg)
        elif isinstance(ins, Assign):
            if ins.op != "CONST":
                for r in ins.args:
                    if r not in written:
                        raise CircuitValidationError(f"register {r} read before write")
            written.add(ins.reg)
        else:
            raise CircuitValidationError(f"unknown instruction {ins!r}")
    for _, reg in circuit.outputs:
        if reg not in written:
            raise CircuitValidationError(f"output register {reg} never written")


# ---------------------------------------------------------------------------
# Gate and family registries
# ---------------------------------------------------------------------------

_H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2.0)


def gate_matrix(name: str, params: tuple, dims: tuple) -> np.ndarray:
    if name == "H":
        return _H
    if name == "CX":
        return gate_matrix("ADD", params, dims)
    if name == "ADD":
        # |a, b> -> |a, (a+b) mod D> on the (control, target) pair
        dc, dt = dims
        m = np.zeros((dc * dt, dc * dt))
        for a in range(dc):
            for b in range(dt):
                m[a * dt + (a + b) % dt, a * dt + b] = 1.0
        return m
    if name == "UC":
        d, c = params
        return _qudit_uc(d, c)
    raise ValueError(f"unknown gate {name!r}")


def _qudit_uc(d: int, c: int) -> np.ndarray:
    """Superposition rotation conditioned on the summed outcome c.

    Acts on pairs (j, c-j) within [max(0, c-d+1), min(c, d-1)]; identity
    elsewhere.  For d=2 this reduces to {I, H, I} for c = 0, 1, 2.
    """
    q1 = max(0, c - d + 1)
    q2 = min(c, d - 1)
    u = np.zeros((d, d), dtype=complex)
    for j in range(d):
        if j < q1 or j > q2:
            u[j, j] = 1.0
    inv = 1.0 / np.sqrt(2.0)
    if c % 2 == 1:
        for j in range(q1, (c - 1) // 2 + 1):
            u[j, j] += inv
            u[c - j, j] += inv
        for j in range((c + 1) // 2, q2 + 1):
            u[c - j, j] += inv
            u[j, j] -= inv
    else:
        if q1 <= c // 2 <= q2:
            u[c // 2, c // 2] = 1.0
        for j in range(q1, c // 2):
            u[j, j] += inv
            u[c - j, j] += inv
        for j in range(c // 2 + 1, q2 + 1):
            u[c - j, j] += inv
            u[j, j] -= inv
    return u


def family_gates(family: str, params: tuple, reg_values: tuple, wires: tuple):
    """Elementary gates selected by the measured register values."""
    if family == "HIF":
        return [Gate("H", (), (wires[0],))] if reg_values[0] == 1 else []
    if family == "UC":
        (d,) = params
        c = reg_values[0]
        return [Gate("UC", (d, c), (wires[0],))]
    if family == "LADDER":
        members = [w for w, c in zip(wires, reg_values) if c == 1]
        if not members:
            return []
        gates = [
            Gate("CX", (), (members[j], members[j + 1]))
            for j in reversed(range(len(members) - 1))
        ]
        gates.append(Gate("H", (), (members[0],)))
        return gates
    raise ValueError(f"unknown gate family {family!r}")


def ladder_unitary(l: int) -> np.ndarray:
    """Dense CX chain CX_{l-1->l} ... CX_{1->2} on l qubits (qubit 1 first)."""
    d = 2 ** l
    u = np.eye(d)
    for j in range(l - 1):
        u = _embed(gate_matrix("CX", (), (2, 2)), (j, j + 1), (2,) * l) @ u
    return u


def logical_hadamard(l: int) -> np.ndarray:
    """(X^{(x) l} + Z_1)/sqrt(2), the Hadamard on the flip-pair code space."""
    x = np.array([[0, 1], [1, 0]], dtype=complex)
    z1 = np.diag([1.0, -1.0])
    xs = reduce(np.kron, [x] * l)
    return (xs + np.kron(z1, np.eye(2 ** (l - 1)))) / np.sqrt(2.0)


# ---------------------------------------------------------------------------
# Compilers
# ---------------------------------------------------------------------------


def compile_r_single_qubit() -> Circuit:
    """Parity check into the second qubit, conditional H, classical XOR."""
    wires = (Wire(0, 1, 1, 2, 2), Wire(1, 2, 1, 2, 2))
    instructions = (
        Gate("CX", (), (0, 1)),
        Measure(1, "c"),
        CGate("HIF", (), ("c",), (0,)),
        Measure(0, "x1"),
        Assign("x2", "XOR", ("x1", "c")),
    )
    circuit = Circuit(wires=wires, instructions=instructions, outputs=((0, "x1"), (1, "x2")))
    validate_circuit(circuit)
    return circuit


def compile_r_qudit(d: int) -> Circuit:
    """Sum register on a 2d-level wire, conditional pairing rotation, x2 = c - x1."""
    if d < 2:
        raise ValueError("qudit dimension must be >= 2")
    wires = (Wire(0, 1, 1, d, d), Wire(1, 2, 1, 2 * d, d))
    instructions = (
        Gate("ADD", (), (0, 1)),
        Measure(1, "c"),
        CGate("UC", (d,), ("c",), (0,)),
        Measure(0, "x1"),
        Assign("x2", "SUB", ("c", "x1")),
    )
    circuit = Circuit(wires=wires, instructions=instructions, outputs=((0, "x1"), (1, "x2")))
    validate_circuit(circuit)
    return circuit


def compile_r_many_qubit(n: int) -> Circuit:
    """Qubit-wise parity checks, one conditional CX-ladder Hadamard on the
    flipped set, classical ladder undo and per-qubit XOR."""
    if n < 1:
        raise ValueError("n must be >= 1")
    wires = tuple(Wire(i, 1, i + 1, 2, 2) for i in range(n)) + tuple(
        Wire(n + i, 2, i + 1, 2, 2) for i in range(n)
    )
    ins = []
    for i in range(n):
        ins.append(Gate("CX", (), (i, n + i)))
    for i in range(n):
        ins.append(Measure(n + i, f"c{i + 1}"))
    ins.append(CGate("LADDER", (), tuple(f"c{i + 1}" for i in range(n)), tuple(range(n))))
    for i in range(n):
        ins.append(Measure(i, f"y{i + 1}"))
    ins.append(Assign("p0", "CONST", (0,)))
    for i in range(1, n + 1):
        ins.append(Assign(f"g{i}", "AND", (f"c{i}", f"p{i - 1}")))
        ins.append(Assign(f"x1_{i}", "XOR", (f"y{i}", f"g{i}")))
        ins.append(Assign(f"p{i}", "MUX", (f"c{i}", f"x1_{i}", f"p{i - 1}")))
        ins.append(Assign(f"x2_{i}", "XOR", (f"c{i}", f"x1_{i}")))
    outputs = tuple((i, f"x1_{i + 1}") for i in range(n)) + tuple(
        (n + i, f"x2_{i + 1}") for i in range(n)
    )
    circuit = Circuit(wires=wires, instructions=tuple(ins), outputs=outputs)
    validate_circuit(circuit)
    return circuit


# ---------------------------------------------------------------------------
# Simulation
# ---------------------------------------------------------------------------


def _embed(u: np.ndarray, wires: tuple, dims: tuple) -> np.ndarray:
    """Embed a gate on `wires` (in that order) into the full register."""
    k = len(wires)
    rest = [i for i in range(len(dims)) if i not in wires]
    order = list(wires) + rest
    dim_rest = int(np.prod([dims[i] for i in rest])) if rest else 1
    big = np.kron(u, np.eye(dim_rest))
    # permutation sending canonical digit order to (wires, rest) order
    total = int(np.prod(dims))
    strides = np.ones(len(dims), dtype=int)
    for i in range(len(dims) - 2, -1, -1):
        strides[i] = strides[i + 1] * dims[i + 1]
    digits = [(np.arange(total) // strides[i]) % dims[i] for i in range(len(dims))]
    perm_index = np.zeros(total, dtype=int)
    for pos, i in enumerate(order):
        mult = int(np.prod([dims[j] for j in order[pos + 1:]])) if pos + 1 < len(order) else 1
        perm_index = perm_index + digits[i] * mult
    p = np.zeros((total, total))
    p[perm_index, np.arange(total)] = 1.0
    return p.T @ big @ p


def _measure_projectors(wire: int, dims: tuple):
    d = dims[wire]
    for v in range(d):
        diag = np.zeros(d)
        diag[v] = 1.0
        yield v, _embed(np.diag(diag), (wire,), dims)


def _eval_assign(ins: Assign, regs: dict) -> int:
    if ins.op == "CONST":
        return int(ins.args[0])
    if ins.op == "XOR":
        return regs[ins.args[0]] ^ regs[ins.args[1]]
    if ins.op == "AND":
        return regs[ins.args[0]] & regs[ins.args[1]]
    if ins.op == "SUB":
        return regs[ins.args[0]] - regs[ins.args[1]]
    if ins.op == "MUX":
        sel, a, b = ins.args
        return regs[a] if regs[sel] else regs[b]
    raise ValueError(f"unknown assign op {ins.op!r}")


def embed_input(circuit: Circuit, state) -> np.ndarray:
    """Zero-pad a logical-dimension input state onto the physical wires."""
    if isinstance(state, DensityMatrix):
        state = state.matrix
    state = np.asarray(state, dtype=complex)
    if state.ndim == 1:
        state = np.outer(state, state.conj())
    in_dims = circuit.input_dims
    dims = circuit.dims
    size_in = int(np.prod(in_dims))
    if state.shape != (size_in, size_in):
        raise ValueError(f"input of shape {state.shape} does not match dims {in_dims}")
    if dims == in_dims:
        return state
    total = int(np.prod(dims))
    index = np.array([_logical_to_physical(i, in_dims, dims) for i in range(size_in)])
    out = np.zeros((total, total), dtype=complex)
    out[np.ix_(index, index)] = state
    return out


def _logical_to_physical(idx: int, in_dims: tuple, dims: tuple) -> int:
    digits = []
    rem = idx
    for d in reversed(in_dims):
        rem, dig = divmod(rem, d)
        digits.append(dig)
    digits.reverse()
    phys = 0
    for dig, d in zip(digits, dims):
        phys = phys * d + dig
    return phys


@dataclass(frozen=True)
class Leaf:
    registers: dict
    probability: float
    depth: int


@dataclass(frozen=True)
class SimulationResult:
    distribution: dict        # (x per replica, wire order) -> probability
    leaves: tuple
    max_depth: int


_PRUNE = 1e-30


def _outputs_label(circuit: Circuit, regs: dict) -> tuple:
    by_replica: dict = {}
    for wire_idx, reg in circuit.outputs:
        w = circuit.wires[wire_idx]
        by_replica.setdefault(w.replica, []).append((w.site, w.input_dim, regs[reg]))
    label = []
    for rep in sorted(by_replica):
        val = 0
        for _, d, digit in sorted(by_replica[rep]):
            val = val * d + digit
        label.append(val)
    return tuple(label)


def simulate_circuit(circuit: Circuit, state, rng: np.random.Generator | None = None):
    """Exact branch enumeration (rng None) or one sampled trajectory.

    Exact mode returns a SimulationResult; sampling mode returns the
    (x_replica1, x_replica2) outcome label.
    """
    validate_circuit(circuit)
    dims = circuit.dims
    rho0 = embed_input(circuit, state)
    if rng is not None:
        return _simulate_trajectory(circuit, rho0, dims, rng)
    # Branch states stay unnormalized: a leaf's probability is its trace.
    dist: dict = {}
    leaves = []
    stack = [(rho0, {}, np.zeros(len(dims)), 0)]
    while stack:
        rho, regs, depth, ptr = stack.pop()
        advanced = False
        for pos in range(ptr, len(circuit.instructions)):
            ins = circuit.instructions[pos]
            if isinstance(ins, Gate):
                g = _embed(gate_matrix(ins.name, ins.params, tuple(dims[w] for w in ins.wires)), ins.wires, dims)
                rho = g @ rho @ g.conj().T
                depth = depth.copy()
                depth[list(ins.wires)] = depth[list(ins.wires)].max() + 1
            elif isinstance(ins, CGate):
                values = tuple(regs[r] for r in ins.regs)
                for gate in family_gates(ins.family, ins.params, values, ins.wires):
                    g = _embed(gate_matrix(gate.name, gate.params, tuple(dims[w] for w in gate.wires)), gate.wires, dims)
                    rho = g @ rho @ g.conj().T
                    depth = depth.copy()
                    depth[list(gate.wires)] = depth[list(gate.wires)].max() + 1
            elif isinstance(ins, Assign):
                regs = {**regs, ins.reg: _eval_assign(ins, regs)}
            elif isinstance(ins, Measure):
                for v, proj in _measure_projectors(ins.wire, dims):
                    branch = proj @ rho @ proj
                    if float(np.trace(branch).real) > _PRUNE:
                        stack.append((branch, {**regs, ins.reg: v}, depth.copy(), pos + 1))
                advanced = True
                break
        if advanced:
            continue
        prob = float(np.trace(rho).real)
        label = _outputs_label(circuit, regs)
        dist[label] = dist.get(label, 0.0) + prob
        leaves.append(Leaf(registers=dict(regs), probability=prob, depth=int(depth.max())))
    max_depth = max((leaf.depth for leaf in leaves), default=0)
    return SimulationResult(distribution=dist, leaves=tuple(leaves), max_depth=max_depth)


def _simulate_trajectory(circuit: Circuit, rho, dims, rng):
    regs: dict = {}
    for ins in circuit.instructions:
        if isinstance(ins, Gate):
            g = _embed(gate_matrix(ins.name, ins.params, tuple(dims[w] for w in ins.wires)), ins.wires, dims)
            rho = g @ rho @ g.conj().T
        elif isinstance(ins, CGate):
            values = tuple(regs[r] for r in ins.regs)
            for gate in family_gates(ins.family, ins.params, values, ins.wires):
                g = _embed(gate_matrix(gate.name, gate.params, tuple(dims[w] for w in gate.wires)), gate.wires, dims)
                rho = g @ rho @ g.conj().T
        elif isinstance(ins, Assign):
            regs[ins.reg] = _eval_assign(ins, regs)
        elif isinstance(ins, Measure):
            probs = []
            branches = []
            for v, proj in _measure_projectors(ins.wire, dims):
                branch = proj @ rho @ proj
                probs.append(max(float(np.trace(branch).real), 0.0))
                branches.append((v, branch))
            weights = clip_weights(np.array(probs) / float(np.trace(rho).real))
            cum = np.cumsum(weights)
            v = int(np.searchsorted(cum / cum[-1], rng.random(), side="right"))
            v = min(v, len(branches) - 1)
            value, branch = branches[v]
            rho = branch / np.trace(branch).real
            regs[ins.reg] = value
    return _outputs_label(circuit, regs)


# ---------------------------------------------------------------------------
# Distribution-equivalence verification against the dense rotation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EquivalenceReport:
    total_variation: float
    max_deviation: float
    trials: int
    max_depth: int

    @property
    def passed(self) -> bool:
        return self.total_variation < 1e-8


def dense_reference_distribution(rho_in: np.ndarray, d: int) -> dict:
    """Measurement distribution after the dense two-replica rotation."""
    r = build_R(d, 2)
    probs = np.diagonal(r @ rho_in @ r.conj().T).real
    out = {}
    for idx, p in enumerate(probs):
        out[(idx // d, idx % d)] = max(float(p), 0.0)
    return out


def verify_equivalence(circuit: Circuit, trials: int, rng: np.random.Generator) -> EquivalenceReport:
    """Compare exact circuit output statistics with the dense rotation on
    random mixed inputs."""
    from .states import random_density

    rep1 = [w for w in circuit.wires if w.replica == 1]
    d = int(np.prod([w.input_dim for w in rep1]))
    worst_tv = 0.0
    worst_dev = 0.0
    max_depth = 0
    for _ in range(trials):
        rho_in = random_density(d * d, rng).matrix
        sim = simulate_circuit(circuit, rho_in)
        reference = dense_reference_distribution(rho_in, d)
        keys = set(sim.distribution) | set(reference)
        tv = 0.5 * sum(abs(sim.distribution.get(k, 0.0) - reference.get(k, 0.0)) for k in keys)
        dev = max(abs(sim.distribution.get(k, 0.0) - reference.get(k, 0.0)) for k in keys)
        worst_tv = max(worst_tv, tv)
        worst_dev = max(worst_dev, dev)
        max_depth = max(max_depth, sim.max_depth)
    return EquivalenceReport(
        total_variation=worst_tv, max_deviation=worst_dev, trials=trials, max_depth=max_depth
    )


# ---------------------------------------------------------------------------
# Line-oriented serialization
# ---------------------------------------------------------------------------

_HEADER = "RCIRCUIT v1"


def serialize_circuit(circuit: Circuit) -> str:
    lines = [_HEADER]
    for w in circuit.wires:
        lines.append(f"WIRE {w.index} replica={w.replica} site={w.site} dim={w.dim} in={w.input_dim}")
    for ins in circuit.instructions:
        if isinstance(ins, Gate):
            params = ("[" + ",".join(str(p) for p in ins.params) + "]") if ins.params else "[]"
            lines.append(f"GATE {ins.name} {params} " + " ".join(str(w) for w in ins.wires))
        elif isinstance(ins, Measure):
            lines.append(f"MEASURE {ins.wire} {ins.reg}")
        elif isinstance(ins, CGate):
            params = "[" + ",".join(str(p) for p in ins.params) + "]"
            regs = ",".join(ins.regs)
            wires = ",".join(str(w) for w in ins.wires)
            lines.append(f"CGATE {ins.family} {params} regs={regs} wires={wires}")
        elif isinstance(ins, Assign):
            lines.append(f"ASSIGN {ins.reg} {ins.op} " + " ".join(str(a) for a in ins.args))
    for wire_idx, reg in circuit.outputs:
        lines.append(f"OUTPUT {wire_idx} {reg}")
    return "\n".join(lines) + "\n"


def parse_circuit(text: str) -> Circuit:
    lines = [ln.strip() for ln in text.strip().splitlines() if ln.strip()]
    if not lines or lines[0] != _HEADER:
        raise ValueError(f"expected header {_HEADER!r}")
    wires = []
    instructions = []
    outputs = []
    for ln in lines[1:]:
        head, *rest = ln.split()
        if head == "WIRE":
            idx = int(rest[0])
            kv = dict(item.split("=") for item in rest[1:])
            wires.append(Wire(idx, int(kv["replica"]), int(kv["site"]), int(kv["dim"]), int(kv["in"])))
        elif head == "GATE":
            name = rest[0]
            params = tuple(int(p) for p in rest[1].strip("[]").split(",") if p)
            instructions.append(Gate(name, params, tuple(int(w) for w in rest[2:])))
        elif head == "MEASURE":
            instructions.append(Measure(int(rest[0]), rest[1]))
        elif head == "CGATE":
            family = rest[0]
            params = tuple(int(p) for p in rest[1].strip("[]").split(",") if p)
            kv = dict(item.split("=") for item in rest[2:])
            regs = tuple(kv["regs"].split(","))
            cg_wires = tuple(int(w) for w in kv["wires"].split(","))
            instructions.append(CGate(family, params, regs, cg_wires))
        elif head == "ASSIGN":
            reg, op = rest[0], rest[1]
            args = tuple(int(a) if op == "CONST" else a for a in rest[2:])
            instructions.append(Assign(reg, op, args))
        elif head == "OUTPUT":
            outputs.append((int(rest[0]), rest[1]))
        else:
            raise ValueError(f"unknown line {ln!r}")
    circuit = Circuit(wires=tuple(wires), instructions=tuple(instructions), outputs=tuple(outputs))
    validate_circuit(circuit)
    return circuit
