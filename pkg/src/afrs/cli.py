"""Experiment runner: seeded, resumable sweeps with CSV / JSON-lines output.

Subcommands: estimate | vd | moment | compile-verify | plan.
Exit codes: 0 success, 1 usage error, 2 verification failure, 3 resource cap.

Every stochastic quantity is drawn from a stream keyed by
(seed, command, point, repetition, protocol); results are therefore
byte-identical across runs and worker counts.  The seed is always explicit:
no environment variable or wall clock is ever consulted for randomness.
"""

import argparse
import concurrent.futures
import hashlib
import json
import math
import sys
import time

import numpy as np

from . import estimators, oracle
from .compiler import (
    compile_r_many_qubit,
    compile_r_qudit,
    compile_r_single_qubit,
    serialize_circuit,
    verify_equivalence,
)
from .ensembles import ENSEMBLES, LOCAL_CLIFFORD
from .linalg import SizeError
from .rng import stream
from .states import DensityMatrix, ObservableSpecError, depolarize, ghz_state, observable_from_spec

SCHEMA_VERSION = 1

COLUMNS = (
    "schema_version",
    "experiment_id",
    "point",
    "rep",
    "n",
    "t",
    "p",
    "observable",
    "protocol",
    "estimate",
    "stderr",
    "exact",
    "error",
    "shots",
    "seed",
    "wall_time_s",
)

PROTOCOLS = ("os", "afrs", "local_afrs", "multishot")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _row_to_csv(row: dict) -> str:
    return ",".join(_fmt(row.get(c)) for c in COLUMNS)


def _row_to_json(row: dict) -> str:
    ordered = {c: row.get(c) for c in COLUMNS}
    for k, v in list(ordered.items()):
        if isinstance(v, float) and math.isnan(v):
            ordered[k] = "nan"
    return json.dumps(ordered)


def load_config(path: str) -> dict:
    """Flat key = value lines; '#' starts a comment; keys match CLI flags."""
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key = value")
            key, value = line.split("=", 1)
            out[key.strip().replace("-", "_")] = value.strip()
    return out


def _int_list(text: str):
    return [int(v) for v in str(text).split(",") if str(v).strip() != ""]


def _float_list(text: str):
    return [float(v) for v in str(text).split(",") if str(v).strip() != ""]


def _str_list(text: str):
    return [v.strip() for v in str(text).split(",") if v.strip()]


def build_state(family: str, n: int, p: float) -> DensityMatrix:
    if family != "ghz":
        raise UsageError(f"unknown state family {family!r} (supported: ghz)")
    return depolarize(ghz_state(n), p)


def _experiment_id(command: str, cfg: dict) -> str:
    keys = sorted(k for k in cfg if k not in ("out", "workers", "resume", "format"))
    digest = hashlib.sha1(
        json.dumps({k: cfg[k] for k in keys}, sort_keys=True).encode()
    ).hexdigest()[:10]
    return f"{command}-{digest}"


def _exact_nonlinear_or_none(obs, rho, t):
    try:
        return oracle.exact_nonlinear(obs, rho, t)
    except SizeError:
        return None


# ---------------------------------------------------------------------------
# Task execution (one task = one sweep point x one repetition)
# ---------------------------------------------------------------------------


def _estimate_task(payload):
    cfg, point, rep = payload
    n = cfg["n_values"][point]
    t = cfg["t"]
    start = time.monotonic()
    rho = build_state(cfg["state"], n, cfg["p"])
    obs = observable_from_spec(cfg["observable"], n)
    exact = _exact_nonlinear_or_none(obs, rho, t)
    rows = []
    for protocol in cfg["protocols"]:
        rng = stream(cfg["seed"], "estimate", point, rep, protocol)
        shots = cfg["shots"]
        if protocol == "afrs":
            snaps = estimators.collect_afrs(rho, cfg["ensemble"], t, shots, rng)
            res = estimators.estimate_observable(snaps, obs)
        elif protocol == "multishot":
            snaps = estimators.collect_afrs(rho, cfg["ensemble"], t, shots, rng, multishot=True)
            res = estimators.estimate_observable(snaps, obs)
        elif protocol == "local_afrs":
            snaps = estimators.collect_local_afrs(rho, obs.support, t, shots, rng)
            res = estimators.estimate_local(snaps, obs)
        elif protocol == "os":
            shots = cfg["shots"] * cfg["os_multiplier"]
            res = estimators.os_baseline(rho, cfg["ensemble"], t, obs, shots, rng)
        else:
            raise UsageError(f"unknown protocol {protocol!r}")
        rows.append(
            {
                "point": point,
                "rep": rep,
                "n": n,
                "t": t,
                "p": cfg["p"],
                "observable": obs.label,
                "protocol": protocol.upper(),
                "estimate": res.mean,
                "stderr": res.stderr,
                "exact": exact,
                "error": None if exact is None else abs(res.mean - exact),
                "shots": shots,
                "seed": cfg["seed"],
            }
        )
    wall = time.monotonic() - start
    for r in rows:
        r["wall_time_s"] = wall
    return rows


def _vd_task(payload):
    cfg, point, rep = payload
    n = cfg["n_values"][point]
    t = cfg["t"]
    start = time.monotonic()
    rho = build_state(cfg["state"], n, cfg["p"])
    obs = observable_from_spec(cfg["observable"], n)
    num_exact = _exact_nonlinear_or_none(obs, rho, t)
    den_exact = _exact_nonlinear_or_none(observable_from_spec("I", n), rho, t)
    exact = None if num_exact is None or den_exact is None else num_exact / den_exact
    shots = cfg["shots"]
    checkpoints = cfg["checkpoints"] or _default_checkpoints(shots)
    rows = []
    for protocol in cfg["protocols"]:
        rng_num = stream(cfg["seed"], "vd", point, rep, protocol, "num")
        rng_den = stream(cfg["seed"], "vd", point, rep, protocol, "den")
        if protocol in ("local_afrs", "afrs"):
            res = estimators.vd_estimate(
                rho, obs, t, shots, shots, rng_num, rng_den, protocol=protocol,
                ensemble=cfg["ensemble"],
            )
            num_vals, den_vals = res.num_values, res.den_values
            native = lambda c: c
        elif protocol == "os":
            res = estimators.vd_estimate(
                rho, obs, t, shots * t, shots * t, rng_num, rng_den, protocol="os",
                ensemble=cfg["ensemble"],
            )
            num_vals, den_vals = res.num_values, res.den_values
            native = lambda c: c  # c replica-shots -> c disjoint tuples
        else:
            raise UsageError(f"unknown protocol {protocol!r}")
        for cp in checkpoints:
            k = min(native(cp), num_vals.size)
            num = float(num_vals[:k].mean())
            den = float(den_vals[:k].mean())
            est = math.nan if den <= 0 else num / den
            rows.append(
                {
                    "point": point,
                    "rep": rep,
                    "n": n,
                    "t": t,
                    "p": cfg["p"],
                    "observable": obs.label,
                    "protocol": f"VD_{protocol.upper()}",
                    "estimate": est,
                    "stderr": None,
                    "exact": exact,
                    "error": None if exact is None else abs(est - exact),
                    "shots": cp,
                    "seed": cfg["seed"],
                }
            )
    wall = time.monotonic() - start
    for r in rows:
        r["wall_time_s"] = wall
    return rows


def _default_checkpoints(shots: int):
    cps = []
    c = 10
    while c < shots:
        cps.append(c)
        c *= 4
    cps.append(shots)
    return cps


def _moment_task(payload):
    cfg, point, rep = payload
    n, p = cfg["points"][point]
    t = cfg["t"]
    start = time.monotonic()
    rho = build_state(cfg["state"], n, p)
    obs_i = observable_from_spec("I", n)
    exact = _exact_nonlinear_or_none(obs_i, rho, t)
    rows = []
    for protocol in cfg["protocols"]:
        rng = stream(cfg["seed"], "moment", point, rep, protocol)
        shots = cfg["shots"]
        if protocol == "local_afrs":
            res = estimators.moment_estimate(rho, t, shots, rng)
        elif protocol == "os":
            shots = cfg["shots"] * cfg["os_multiplier"]
            res = estimators.os_baseline(rho, LOCAL_CLIFFORD, t, obs_i, shots, rng)
        else:
            raise UsageError(f"unknown protocol {protocol!r}")
        rows.append(
            {
                "point": point,
                "rep": rep,
                "n": n,
                "t": t,
                "p": p,
                "observable": "I",
                "protocol": protocol.upper(),
                "estimate": res.mean,
                "stderr": res.stderr,
                "exact": exact,
                "error": None if exact is None else abs(res.mean - exact),
                "shots": shots,
                "seed": cfg["seed"],
            }
        )
    wall = time.monotonic() - start
    for r in rows:
        r["wall_time_s"] = wall
    return rows


_TASK_FNS = {"estimate": _estimate_task, "vd": _vd_task, "moment": _moment_task}


def _dispatch(job):
    command, payload = job
    return _TASK_FNS[command](payload)


def _run_sweep(command, cfg, points, out_path, fmt, workers, resume):
    experiment_id = _experiment_id(command, {k: str(v) for k, v in cfg.items()})
    jobs = [
        (command, (cfg, point, rep))
        for point in range(points)
        for rep in range(cfg["reps"])
    ]
    done_keys = set()
    existing_rows = []
    if resume and out_path:
        existing_rows = _read_rows(out_path, fmt)
        done_keys = {(int(r["point"]), int(r["rep"])) for r in existing_rows}
    pending = [j for j in jobs if (j[1][1], j[1][2]) not in done_keys]
    if workers > 1 and pending:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_dispatch, pending))
    else:
        results = [_dispatch(j) for j in pending]
    new_rows = [row for rows in results for row in rows]
    for row in new_rows:
        row["schema_version"] = SCHEMA_VERSION
        row["experiment_id"] = experiment_id
    all_rows = existing_rows + new_rows
    all_rows.sort(key=lambda r: (int(r["point"]), int(r["rep"]), str(r["protocol"]), float(r["shots"])))
    _write_rows(all_rows, out_path, fmt)
    return all_rows


def _write_rows(rows, out_path, fmt):
    if fmt == "csv":
        lines = [",".join(COLUMNS)] + [_row_to_csv(r) for r in rows]
    else:
        lines = [_row_to_json(r) for r in rows]
    text = "\n".join(lines) + "\n"
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _read_rows(path, fmt):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = [ln for ln in fh.read().splitlines() if ln]
    except FileNotFoundError:
        return []
    if fmt == "csv":
        if not lines:
            return []
        header = lines[0].split(",")
        return [dict(zip(header, ln.split(","))) for ln in lines[1:]]
    return [json.loads(ln) for ln in lines]


# ---------------------------------------------------------------------------
# Command-line plumbing
# ---------------------------------------------------------------------------


def _add_common(sub):
    sub.add_argument("--config", default=None)
    sub.add_argument("--seed", type=int, default=None)
    sub.add_argument("--out", default=None)
    sub.add_argument("--format", choices=("csv", "jsonl"), default=None)
    sub.add_argument("--workers", type=int, default=None)
    sub.add_argument("--resume", action="store_true", default=None)


def build_parser() -> _Parser:
    parser = _Parser(prog="afrs", description=__doc__)
    subs = parser.add_subparsers(dest="command", required=True)

    est = subs.add_parser("estimate", help="sweep nonlinear-observable estimation over n")
    _add_common(est)
    est.add_argument("--state", default=None)
    est.add_argument("--p", type=float, default=None)
    est.add_argument("--n", default=None, help="comma list of qubit counts")
    est.add_argument("--t", type=int, default=None)
    est.add_argument("--ensemble", choices=ENSEMBLES, default=None)
    est.add_argument("--observable", default=None)
    est.add_argument("--protocols", default=None)
    est.add_argument("--shots", type=int, default=None)
    est.add_argument("--os-multiplier", type=int, default=None, dest="os_multiplier")
    est.add_argument("--reps", type=int, default=None)

    vd = subs.add_parser("vd", help="virtual-distillation convergence trace")
    _add_common(vd)
    vd.add_argument("--state", default=None)
    vd.add_argument("--p", type=float, default=None)
    vd.add_argument("--n", default=None)
    vd.add_argument("--t", type=int, default=None)
    vd.add_argument("--ensemble", choices=ENSEMBLES, default=None)
    vd.add_argument("--observable", default=None)
    vd.add_argument("--protocols", default=None)
    vd.add_argument("--shots", type=int, default=None)
    vd.add_argument("--checkpoints", default=None)
    vd.add_argument("--reps", type=int, default=None)

    mom = subs.add_parser("moment", help="purity / t-th moment sweeps")
    _add_common(mom)
    mom.add_argument("--state", default=None)
    mom.add_argument("--p", default=None, help="comma list of noise values")
    mom.add_argument("--n", default=None, help="comma list of qubit counts")
    mom.add_argument("--t", type=int, default=None)
    mom.add_argument("--protocols", default=None)
    mom.add_argument("--shots", type=int, default=None)
    mom.add_argument("--os-multiplier", type=int, default=None, dest="os_multiplier")
    mom.add_argument("--reps", type=int, default=None)

    cv = subs.add_parser("compile-verify", help="verify compiled measurement circuits")
    _add_common(cv)
    cv.add_argument("--kind", choices=("qubit", "qudit", "many-qubit"), default=None)
    cv.add_argument("--d", type=int, default=None)
    cv.add_argument("--n", type=int, default=None)
    cv.add_argument("--trials", type=int, default=None)

    pl = subs.add_parser("plan", help="observable-set partition and sample budget")
    _add_common(pl)
    pl.add_argument("--state", default=None)
    pl.add_argument("--p", type=float, default=None)
    pl.add_argument("--n", type=int, default=None)
    pl.add_argument("--t", type=int, default=None)
    pl.add_argument("--observables", default=None, help="comma list of observable specs")
    pl.add_argument("--epsilon", type=float, default=None)
    pl.add_argument("--delta", type=float, default=None)
    pl.add_argument("--pilot-shots", type=int, default=None, dest="pilot_shots")

    return parser


def _setting(args, config, key, default=None, convert=None):
    value = getattr(args, key, None)
    if value is None:
        value = config.get(key)
    if value is None:
        value = default
    if value is None:
        return None
    if convert is not None and not isinstance(value, convert if isinstance(convert, type) else object):
        pass
    return value


def _resolve(args, key, config, default=None, cast=None):
    value = getattr(args, key, None)
    if value is None and key in config:
        value = config[key]
        if cast is not None:
            value = cast(value)
    if value is None:
        value = default
    return value


def cmd_estimate(args, config) -> int:
    seed = _resolve(args, "seed", config, cast=int)
    if seed is None:
        raise UsageError("--seed is required (no wall-clock default)")
    n_values = _resolve(args, "n", config, default="2", cast=str)
    cfg = {
        "seed": seed,
        "state": _resolve(args, "state", config, "ghz"),
        "p": float(_resolve(args, "p", config, 0.0, float)),
        "n_values": _int_list(n_values),
        "t": int(_resolve(args, "t", config, 2, int)),
        "ensemble": _resolve(args, "ensemble", config, LOCAL_CLIFFORD),
        "observable": _resolve(args, "observable", config, "I"),
        "protocols": _str_list(_resolve(args, "protocols", config, "afrs,local_afrs,os")),
        "shots": int(_resolve(args, "shots", config, 50, int)),
        "reps": int(_resolve(args, "reps", config, 1, int)),
    }
    cfg["os_multiplier"] = int(_resolve(args, "os_multiplier", config, cfg["t"], int))
    _check_counts(cfg)
    for proto in cfg["protocols"]:
        if proto not in PROTOCOLS:
            raise UsageError(f"unknown protocol {proto!r}")
    fmt = _resolve(args, "format", config, "csv")
    workers = int(_resolve(args, "workers", config, 1, int))
    _run_sweep("estimate", cfg, len(cfg["n_values"]), args.out, fmt, workers, bool(args.resume))
    return 0


def cmd_vd(args, config) -> int:
    seed = _resolve(args, "seed", config, cast=int)
    if seed is None:
        raise UsageError("--seed is required (no wall-clock default)")
    cfg = {
        "seed": seed,
        "state": _resolve(args, "state", config, "ghz"),
        "p": float(_resolve(args, "p", config, 0.3, float)),
        "n_values": _int_list(_resolve(args, "n", config, "5", str)),
        "t": int(_resolve(args, "t", config, 2, int)),
        "ensemble": _resolve(args, "ensemble", config, LOCAL_CLIFFORD),
        "observable": _resolve(args, "observable", config, "Z1*Z2"),
        "protocols": _str_list(_resolve(args, "protocols", config, "local_afrs,os")),
        "shots": int(_resolve(args, "shots", config, 1000, int)),
        "checkpoints": _int_list(_resolve(args, "checkpoints", config, "", str) or ""),
        "reps": int(_resolve(args, "reps", config, 1, int)),
    }
    _check_counts(cfg)
    fmt = _resolve(args, "format", config, "csv")
    workers = int(_resolve(args, "workers", config, 1, int))
    _run_sweep("vd", cfg, len(cfg["n_values"]), args.out, fmt, workers, bool(args.resume))
    return 0


def cmd_moment(args, config) -> int:
    seed = _resolve(args, "seed", config, cast=int)
    if seed is None:
        raise UsageError("--seed is required (no wall-clock default)")
    p_values = _float_list(_resolve(args, "p", config, "0.3", str))
    n_values = _int_list(_resolve(args, "n", config, "3", str))
    points = [(n, p) for n in n_values for p in p_values]
    cfg = {
        "seed": seed,
        "state": _resolve(args, "state", config, "ghz"),
        "points": points,
        "t": int(_resolve(args, "t", config, 2, int)),
        "protocols": _str_list(_resolve(args, "protocols", config, "local_afrs,os")),
        "shots": int(_resolve(args, "shots", config, 50, int)),
        "reps": int(_resolve(args, "reps", config, 1, int)),
    }
    cfg["os_multiplier"] = int(_resolve(args, "os_multiplier", config, cfg["t"], int))
    _check_counts(cfg)
    fmt = _resolve(args, "format", config, "csv")
    workers = int(_resolve(args, "workers", config, 1, int))
    _run_sweep("moment", cfg, len(points), args.out, fmt, workers, bool(args.resume))
    return 0


def _check_counts(cfg):
    for key in ("shots", "reps", "t"):
        if key in cfg and int(cfg[key]) < 1:
            raise UsageError(f"{key} must be >= 1")


def cmd_compile_verify(args, config) -> int:
    seed = _resolve(args, "seed", config, cast=int)
    if seed is None:
        raise UsageError("--seed is required (no wall-clock default)")
    kind = _resolve(args, "kind", config, "qubit")
    trials = int(_resolve(args, "trials", config, 20, int))
    if kind == "qubit":
        circuit = compile_r_single_qubit()
        label = "qubit"
    elif kind == "qudit":
        d = int(_resolve(args, "d", config, 3, int))
        circuit = compile_r_qudit(d)
        label = f"qudit-d{d}"
    else:
        n = int(_resolve(args, "n", config, 2, int))
        circuit = compile_r_many_qubit(n)
        label = f"many-qubit-n{n}"
    rng = stream(seed, "compile-verify", label)
    report = verify_equivalence(circuit, trials, rng)
    text = serialize_circuit(circuit)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    summary = {
        "circuit": label,
        "trials": report.trials,
        "total_variation": report.total_variation,
        "max_deviation": report.max_deviation,
        "max_depth": report.max_depth,
        "passed": report.passed,
    }
    print(json.dumps(summary))
    return 0 if report.passed else 2


def cmd_plan(args, config) -> int:
    seed = _resolve(args, "seed", config, cast=int)
    if seed is None:
        raise UsageError("--seed is required (no wall-clock default)")
    n = int(_resolve(args, "n", config, 5, int))
    t = int(_resolve(args, "t", config, 2, int))
    spec_list = _str_list(_resolve(args, "observables", config, ""))
    if not spec_list:
        raise UsageError("--observables must list at least one observable")
    epsilon = float(_resolve(args, "epsilon", config, 0.1, float))
    delta = float(_resolve(args, "delta", config, 0.05, float))
    pilot_shots = int(_resolve(args, "pilot_shots", config, 200, int))
    state_family = _resolve(args, "state", config, "ghz")
    p = float(_resolve(args, "p", config, 0.3, float))
    observables = [observable_from_spec(s, n) for s in spec_list]
    plan = estimators.plan_observables(observables, n=n)
    rho = build_state(state_family, n, p)
    max_var = 0.0
    variances = {}
    for i, obs in enumerate(observables):
        rng = stream(seed, "plan-pilot", i)
        snaps = estimators.collect_local_afrs(rho, obs.support, t, pilot_shots, rng)
        values = np.array([estimators.local_snapshot_value(s, obs) for s in snaps])
        var = float(values.var(ddof=1))
        variances[obs.label] = var
        max_var = max(max_var, var)
    budget = estimators.plan_budget(plan, epsilon, delta, max_var)
    summary = {
        "n": n,
        "t": t,
        "subsets": [
            {
                "observables": [o.label for o in s.observables],
                "blocks": [[i + 1 for i in b] for b in s.blocks],
            }
            for s in plan.subsets
        ],
        "k": plan.k,
        "epsilon": epsilon,
        "delta": delta,
        "pilot_shots": pilot_shots,
        "pilot_variances": variances,
        "max_variance": max_var,
        "batch_size": budget.batch_size,
        "batches": budget.batches,
        "shots_per_subset": list(budget.per_subset),
        "total_shots": budget.total,
        "formula_total": budget.formula_total,
    }
    text = json.dumps(summary, indent=2)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    print(text)
    return 0


_COMMANDS = {
    "estimate": cmd_estimate,
    "vd": cmd_vd,
    "moment": cmd_moment,
    "compile-verify": cmd_compile_verify,
    "plan": cmd_plan,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        config = load_config(args.config) if args.config else {}
        return _COMMANDS[args.command](args, config)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except ObservableSpecError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return 1
    except SizeError as exc:
        print(f"resource cap exceeded: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
