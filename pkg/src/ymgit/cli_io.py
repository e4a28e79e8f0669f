"""Command line entry point, experiment configuration and field snapshots.

Snapshot byte layout (all integers little-endian)::

    offset 0   8 bytes   magic b"YMGITSNP"
    offset 8   4 bytes   uint32 header length L
    offset 12  L bytes   UTF-8 JSON header
    offset 12+L          payload: complex128 little-endian, C order

The header holds ``version``, ``N``, ``n``, ``group``, ``twist``,
``shape`` (always ``[2, N, N, n, n]``; components ``A_x`` then ``A_y``,
sites row-major with ``x`` as the slow index), ``dtype``,
``payload_bytes`` and ``sha256`` of the payload.
"""

from __future__ import annotations

import argparse
import contextlib
import hashlib
import json
import math
import os
import struct
import sys
import time
from dataclasses import asdict, dataclass, field, fields, is_dataclass, replace
from pathlib import Path
from typing import Any, Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .bundle_hn import (
    BundleType,
    char_vector,
    classify_algebraic,
    dominant_weight,
    hn_from_oracle,
    hn_split,
    is_concave,
    polygon,
    split_signatures,
    squared_norm,
)
from .lattice_field import (
    TwistData,
    UnitaryConnection,
    exp_action,
    grad_ym,
    make_split_connection,
    moment_pairing_check,
    pair,
    random_complex_gauge,
    random_connection,
    random_section,
    random_tangent,
    ym_energy,
    zero_connection,
)
from .lie_core import MatrixGroupSpec, dual_basis_defect, roots_type_A
from .stability_classifier import ClassifierConfig, classify, levi_gauge, stable_example
from .weights_kn import kempf_ness_value, kn_path_values, second_differences, weight
from .ym_flow import FlowConfig, run_flow

SNAPSHOT_MAGIC = b"YMGITSNP"
SNAPSHOT_VERSION = 1
CONFIG_VERSION = 1

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NONCONVERGENCE = 3
EXIT_ASSERTION = 4
LABEL_EXIT = {"stable": 0, "polystable": 10, "semistable": 11, "unstable": 12, "undetermined": EXIT_NONCONVERGENCE}

ENV_PREFIX = "YMGIT_"


class ConfigError(ValueError):
    """Schema violation; the message names the offending field path."""


class SnapshotError(ValueError):
    """Unreadable, truncated or incompatible snapshot file."""


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class GroupConfig:
    kind: str = "SU"
    n: int = 2


@dataclass(frozen=True)
class FlowSection:
    cfl_factor: float = 0.2
    dt_init: float | None = None
    dt_max: float | None = None
    grad_tol: float = 1e-6
    max_steps: int = 100_000
    record_every: int = 50
    track: bool = False
    tol_track: float = 1e-3

    def build(self) -> FlowConfig:
        return FlowConfig(
            cfl_factor=self.cfl_factor,
            dt_init=self.dt_init,
            dt_max=self.dt_max,
            grad_tol=self.grad_tol,
            max_steps=self.max_steps,
            record_every=self.record_every,
            track=self.track,
            tol_track=self.tol_track,
        )


@dataclass(frozen=True)
class WeightSection:
    T_max: float = 200.0
    cutoff: float = 1e-8
    quad_n: int = 256
    xi: tuple[float, ...] | None = None


@dataclass(frozen=True)
class InitialSection:
    kind: str = "split"
    gauge: str = "none"
    gauge_amplitude: float = 0.5
    amplitude: float = 0.5
    snapshot: str | None = None


@dataclass(frozen=True)
class OutputSection:
    dir: str = "."
    format: str = "json"


@dataclass(frozen=True)
class ExperimentConfig:
    N: int = 32
    group: GroupConfig = field(default_factory=GroupConfig)
    twist: tuple[int, ...] | None = None
    total_degree: int | None = None
    seed: int = 0
    threads: int | None = None
    initial: InitialSection = field(default_factory=InitialSection)
    flow: FlowSection = field(default_factory=FlowSection)
    weight: WeightSection = field(default_factory=WeightSection)
    output: OutputSection = field(default_factory=OutputSection)
    version: int = CONFIG_VERSION

    @property
    def degrees(self) -> tuple[int, ...]:
        return self.twist if self.twist is not None else (0,) * self.group.n

    def group_spec(self) -> MatrixGroupSpec:
        return MatrixGroupSpec(self.group.n, self.group.kind)  # type: ignore[arg-type]

    def to_json(self) -> dict:
        out = asdict(self)
        out["twist"] = list(self.degrees)
        return out


INITIAL_KINDS = ("zero", "split", "random", "stable_example", "snapshot")
GAUGE_KINDS = ("none", "general", "levi")


def _build(cls, data: Any, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path or '<root>'}: expected an object, got {type(data).__name__}")
    known = {f.name: f for f in fields(cls)}
    kwargs = {}
    for key, value in data.items():
        where = f"{path}.{key}" if path else key
        if key not in known:
            raise ConfigError(f"unknown field {where!r}")
        default = getattr(cls(), key) if key in known else None
        if is_dataclass(default):
            kwargs[key] = _build(type(default), value, where)
        elif key in ("twist", "xi") and value is not None:
            if not isinstance(value, list):
                raise ConfigError(f"{where}: expected a list")
            kwargs[key] = tuple(value)
        else:
            kwargs[key] = value
    return cls(**kwargs)


def _check_type(value, types, where: str, allow_none: bool = False):
    if value is None and allow_none:
        return
    if isinstance(value, bool) and bool not in types:
        raise ConfigError(f"{where}: expected {'/'.join(t.__name__ for t in types)}, got bool")
    if not isinstance(value, types):
        raise ConfigError(f"{where}: expected {'/'.join(t.__name__ for t in types)}, got {type(value).__name__}")


def validate_config(cfg: ExperimentConfig) -> ExperimentConfig:
    _check_type(cfg.N, (int,), "N")
    if cfg.N < 4:
        raise ConfigError("N: must be at least 4")
    _check_type(cfg.group.n, (int,), "group.n")
    if cfg.group.kind not in ("U", "SU"):
        raise ConfigError(f"group.kind: must be 'U' or 'SU', got {cfg.group.kind!r}")
    if cfg.group.n < 1:
        raise ConfigError("group.n: must be positive")
    degrees = cfg.degrees
    if len(degrees) != cfg.group.n:
        raise ConfigError(f"twist: expected {cfg.group.n} degrees, got {len(degrees)}")
    for k, d in enumerate(degrees):
        _check_type(d, (int,), f"twist[{k}]")
    if cfg.total_degree is not None and sum(degrees) != cfg.total_degree:
        raise ConfigError(f"twist: degrees sum to {sum(degrees)} but total_degree is {cfg.total_degree}")
    if cfg.group.kind == "SU" and sum(degrees) != 0:
        raise ConfigError("twist: an SU(n) bundle needs degrees summing to 0")
    _check_type(cfg.seed, (int,), "seed")
    if cfg.seed < 0 or cfg.seed >= 2**64:
        raise ConfigError("seed: must be an unsigned 64-bit integer")
    _check_type(cfg.threads, (int,), "threads", allow_none=True)
    if cfg.initial.kind not in INITIAL_KINDS:
        raise ConfigError(f"initial.kind: must be one of {INITIAL_KINDS}")
    if cfg.initial.gauge not in GAUGE_KINDS:
        raise ConfigError(f"initial.gauge: must be one of {GAUGE_KINDS}")
    if cfg.initial.kind == "snapshot" and not cfg.initial.snapshot:
        raise ConfigError("initial.snapshot: required when initial.kind is 'snapshot'")
    for name in ("cfl_factor", "grad_tol"):
        _check_type(getattr(cfg.flow, name), (int, float), f"flow.{name}")
    for name in ("max_steps", "record_every"):
        _check_type(getattr(cfg.flow, name), (int,), f"flow.{name}")
    try:
        cfg.flow.build()
    except ValueError as exc:
        raise ConfigError(f"flow: {exc}") from None
    if cfg.weight.xi is not None and len(cfg.weight.xi) != cfg.group.n:
        raise ConfigError(f"weight.xi: expected {cfg.group.n} entries")
    if cfg.output.format not in ("json", "csv"):
        raise ConfigError("output.format: must be 'json' or 'csv'")
    return cfg


def parse_config(source: str | os.PathLike | dict | None) -> ExperimentConfig:
    """Read, validate and resolve defaults of an experiment configuration."""
    if source is None:
        data: Any = {}
    elif isinstance(source, dict):
        data = source
    else:
        try:
            data = json.loads(Path(source).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {source}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {source} is not valid JSON: {exc}") from None
    if "version" in data and data["version"] != CONFIG_VERSION:
        raise ConfigError(f"version: unsupported config version {data['version']}")
    try:
        cfg = _build(ExperimentConfig, data, "")
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    return validate_config(cfg)


def apply_overrides(cfg: ExperimentConfig, seed=None, threads=None, out=None, fmt=None, env=None) -> ExperimentConfig:
    """Apply environment (``YMGIT_SEED`` ...) and then command-line overrides."""
    env = os.environ if env is None else env
    if seed is None and f"{ENV_PREFIX}SEED" in env:
        seed = int(env[f"{ENV_PREFIX}SEED"])
    if threads is None and f"{ENV_PREFIX}THREADS" in env:
        threads = int(env[f"{ENV_PREFIX}THREADS"])
    if out is None and f"{ENV_PREFIX}OUT" in env:
        out = env[f"{ENV_PREFIX}OUT"]
    if fmt is None and f"{ENV_PREFIX}FORMAT" in env:
        fmt = env[f"{ENV_PREFIX}FORMAT"]
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    if threads is not None:
        cfg = replace(cfg, threads=threads)
    if out is not None or fmt is not None:
        cfg = replace(cfg, output=replace(cfg.output, dir=out or cfg.output.dir, format=fmt or cfg.output.format))
    return validate_config(cfg)


def build_initial(cfg: ExperimentConfig) -> UnitaryConnection:
    """Initial connection described by ``cfg.initial`` (deterministic in ``cfg.seed``)."""
    rng = np.random.default_rng(cfg.seed)
    init = cfg.initial
    group = cfg.group_spec()
    twist = TwistData(cfg.degrees)
    if init.kind == "snapshot":
        A = load_snapshot(init.snapshot)
    elif init.kind == "zero":
        A = zero_connection(cfg.N, group, twist)
    elif init.kind == "split":
        A = make_split_connection(cfg.degrees, cfg.N, group.kind)
    elif init.kind == "random":
        A = random_connection(rng, cfg.N, group, twist, init.amplitude)
    else:
        if cfg.degrees != (1, 0) or group.kind != "U":
            raise ConfigError("initial.kind: 'stable_example' needs group U(2) with twist [1, 0]")
        A = stable_example(cfg.N, rng, init.amplitude)
    if init.gauge == "general":
        A = exp_action(random_complex_gauge(rng, A, init.gauge_amplitude).log(), A)
    elif init.gauge == "levi":
        A = exp_action(levi_gauge(rng, A, init.gauge_amplitude).log(), A)
    return A


# ---------------------------------------------------------------------------
# snapshots


def save_snapshot(A: UnitaryConnection, path: str | os.PathLike) -> None:
    payload = np.ascontiguousarray(A.a, dtype="<c16").tobytes(order="C")
    header = {
        "version": SNAPSHOT_VERSION,
        "N": A.N,
        "n": A.n,
        "group": A.group.kind,
        "twist": list(A.twist.degrees),
        "shape": [2, A.N, A.N, A.n, A.n],
        "dtype": "complex128-le",
        "components": ["A_x", "A_y"],
        "order": "C",
        "payload_bytes": len(payload),
        "sha256": hashlib.sha256(payload).hexdigest(),
    }
    hb = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(SNAPSHOT_MAGIC)
        fh.write(struct.pack("<I", len(hb)))
        fh.write(hb)
        fh.write(payload)


def load_snapshot(path: str | os.PathLike) -> UnitaryConnection:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise SnapshotError(f"cannot read snapshot {path}: {exc}") from None
    if len(raw) < 12 or raw[:8] != SNAPSHOT_MAGIC:
        raise SnapshotError(f"{path}: not a field snapshot (bad magic or truncated header)")
    (hlen,) = struct.unpack("<I", raw[8:12])
    if len(raw) < 12 + hlen:
        raise SnapshotError(f"{path}: truncated header ({len(raw) - 12} of {hlen} bytes)")
    try:
        header = json.loads(raw[12 : 12 + hlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise SnapshotError(f"{path}: corrupt header: {exc}") from None
    if header.get("version") != SNAPSHOT_VERSION:
        raise SnapshotError(
            f"{path}: snapshot version {header.get('version')!r} is not supported (expected {SNAPSHOT_VERSION})"
        )
    payload = raw[12 + hlen :]
    if len(payload) != header["payload_bytes"]:
        raise SnapshotError(f"{path}: truncated payload ({len(payload)} of {header['payload_bytes']} bytes)")
    if hashlib.sha256(payload).hexdigest() != header["sha256"]:
        raise SnapshotError(f"{path}: payload checksum mismatch")
    a = np.frombuffer(payload, dtype="<c16").reshape(header["shape"]).astype(complex)
    group = MatrixGroupSpec(header["n"], header["group"])
    return UnitaryConnection(a, TwistData(header["twist"]), group)


# ---------------------------------------------------------------------------
# results


@dataclass
class Assertion:
    name: str
    passed: bool
    tolerance: float
    measured: float

    def to_json(self) -> dict:
        return {"name": self.name, "passed": self.passed, "tolerance": self.tolerance, "measured": self.measured}


@dataclass
class ResultRecord:
    command: str
    config: dict
    metrics: dict = field(default_factory=dict)
    assertions: list[Assertion] = field(default_factory=list)
    wall_time: float = 0.0

    @property
    def passed(self) -> bool:
        return all(a.passed for a in self.assertions)

    def check(self, name: str, measured: float, tolerance: float, passed: bool | None = None) -> Assertion:
        ok = bool(measured <= tolerance) if passed is None else bool(passed)
        a = Assertion(name, ok, float(tolerance), float(measured))
        self.assertions.append(a)
        return a

    def to_json(self) -> dict:
        return {
            "version": __version__,
            "command": self.command,
            "config": self.config,
            "metrics": self.metrics,
            "assertions": [a.to_json() for a in self.assertions],
            "passed": self.passed,
            "wall_time": self.wall_time,
        }


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        v = float(x)
        return v if math.isfinite(v) else str(v)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    return x


def emit(obj: dict, out_dir: str | None = None, name: str | None = None, stream=None, summary: str | None = None) -> None:
    """Write ``obj`` as JSON to stdout (and ``out_dir/name``); ``summary`` goes to stderr for humans."""
    text = json.dumps(_jsonable(obj), indent=2, sort_keys=True)
    (stream or sys.stdout).write(text + "\n")
    if summary:
        print(summary, file=sys.stderr)
    if out_dir and name:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        Path(out_dir, name).write_text(text + "\n")


# ---------------------------------------------------------------------------
# verify


def run_verify(cfg: ExperimentConfig) -> ResultRecord:
    """A fast pass over the invariants of every module on small grids."""
    rng = np.random.default_rng(cfg.seed)
    rec = ResultRecord("verify", cfg.to_json())
    t0 = time.perf_counter()

    # exact combinatorics
    rd = roots_type_A(4)
    defect = max(abs(float(x)) for row in dual_basis_defect(rd) for x in row)
    rec.check("dual basis identity (exact)", defect, 0.0)
    hn = hn_split([3, 1, 1, -2])
    rec.check("HN of [3,1,1,-2] is concave", 0.0, 0.0, passed=is_concave(hn))
    dw = dominant_weight(hn)
    s2 = float(squared_norm(hn)) - 4 * (3 / 4) ** 2
    rec.check("dominant weight norm formula", abs(dw.norm - 2 * math.pi * math.sqrt(s2)), 1e-12)

    # lattice identities
    N = 8
    group = MatrixGroupSpec(2, "U")
    twist = TwistData((1, -1))
    worst_grad = worst_mm = 0.0
    for _ in range(5):
        A = random_connection(rng, N, group, twist)
        a = random_tangent(rng, A)
        eps = 1e-5
        fd = (ym_energy(A + eps * a) - ym_energy(A + (-eps) * a)) / (2 * eps)
        an = pair(grad_ym(A), a, A.h)
        worst_grad = max(worst_grad, abs(fd - an) / max(abs(an), 1e-12))
        worst_mm = max(worst_mm, moment_pairing_check(A, a, random_section(rng, A)).gap)
    rec.check("gradient vs finite differences (rel)", worst_grad, 1e-6)
    rec.check("moment map identity (rel)", worst_mm, 1e-6)

    # flow fixed point and weights on the split bundle
    S = make_split_connection((1, -1), 16, "SU")
    trace = run_flow(S, FlowConfig(max_steps=10))
    rec.check("split connection is a flow fixed point", trace.steps, 0.0)
    w = weight(S, 1j * np.diag([1.0, -1.0]))
    rec.check("weight of split bundle = -4 pi", abs(w.value + 4 * math.pi), 1e-9)
    Z = zero_connection(16, MatrixGroupSpec(2, "SU"))
    xi = random_section(rng, Z, 0.5)
    vals = kn_path_values(Z, xi, np.linspace(0.25, 1.5, 6))
    rec.check("Kempf-Ness convexity (min second difference)", max(0.0, -float(np.min(second_differences(vals)))), 1e-8)
    kn = kempf_ness_value(S, random_section(rng, S, 0.2))
    rec.metrics["kn_value_split"] = kn.value

    # a short flow from a random complexified gauge
    A0 = exp_action(random_complex_gauge(rng, Z, 0.3).log(), Z)
    tr = run_flow(A0, replace(cfg.flow.build(), max_steps=min(cfg.flow.max_steps, 2000)))
    rec.check("flow energy monotone", 0.0, 0.0, passed=tr.energy_monotone())
    rec.metrics["short_flow_final_energy"] = tr.final_energy
    rec.metrics["short_flow_status"] = "converged" if tr.converged else "undetermined"
    rec.wall_time = time.perf_counter() - t0
    return rec


# ---------------------------------------------------------------------------
# command line


def _parse_list(text: str, kind=int) -> list:
    try:
        return [kind(x) for x in text.replace(" ", "").split(",") if x]
    except ValueError:
        raise ConfigError(f"cannot parse list {text!r}") from None


def _xi_from(cfg: ExperimentConfig, text: str | None) -> np.ndarray:
    vals = _parse_list(text, float) if text else list(cfg.weight.xi or [])
    if not vals:
        raise ConfigError("weight.xi: a direction is required (diagonal entries of -i xi)")
    if len(vals) != cfg.group.n:
        raise ConfigError(f"weight.xi: expected {cfg.group.n} entries")
    return 1j * np.diag(vals)


def _connection(cfg: ExperimentConfig, snapshot: str | None) -> UnitaryConnection:
    if snapshot:
        return load_snapshot(snapshot)
    return build_initial(cfg)


def _hn_input(args) -> dict:
    if args.input:
        try:
            data = json.loads(Path(args.input).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read hn input {args.input}: {exc}") from None
    elif args.degrees:
        data = {"degrees": _parse_list(args.degrees)}
    else:
        raise ConfigError("hn: give --degrees or --input")
    if "degrees" not in data and not {"rank", "degree", "signatures"} <= set(data):
        raise ConfigError("hn input: need 'degrees' or 'rank', 'degree' and 'signatures'")
    return data


def hn_report(data: dict) -> dict:
    """HN data for ``{"degrees": [...]}`` or ``{"rank", "degree", "signatures"}``."""
    if "degrees" in data:
        degrees = [int(d) for d in data["degrees"]]
        hn = hn_split(degrees)
        total = hn.total
        signatures = split_signatures(degrees)
        splitting = [BundleType(1, d) for d in degrees]
    else:
        total = BundleType(int(data["rank"]), int(data["degree"]))
        signatures = [tuple(int(v) for v in s) for s in data["signatures"]]
        hn = hn_from_oracle(total, signatures)
        splitting = None
    out = {
        "hn_blocks": [list(b) for b in hn.blocks],
        "slopes": [str(s) for s in hn.slopes],
        "polygon_vertices": [list(v) for v in polygon(hn)],
        "char_vector": [str(x) for x in char_vector(hn)],
        "squared_norm": str(squared_norm(hn)),
        "classification": classify_algebraic(total, signatures, splitting),
        "dominant_lambda": None,
        "dominant_norm": None,
    }
    if len(hn) > 1:
        dw = dominant_weight(hn)
        out["dominant_lambda"] = dw.lambdas.tolist()
        out["dominant_norm"] = dw.norm
    return out


def cmd_hn(args, cfg: ExperimentConfig) -> int:
    out = hn_report(_hn_input(args))
    emit(
        out,
        cfg.output.dir if args.out else None,
        "hn.json",
        summary=f"HN blocks {out['hn_blocks']} ({out['classification']}), |mu|^2 = {out['squared_norm']}",
    )
    return EXIT_OK


def cmd_roots(args, cfg: ExperimentConfig) -> int:
    rd = roots_type_A(args.n)
    out = rd.to_json()
    out["dual_basis_defect"] = [[[x.numerator, x.denominator] for x in row] for row in dual_basis_defect(rd)]
    emit(out, cfg.output.dir if args.out else None, "roots.json", summary=f"type A_{args.n - 1}: {len(rd.roots)} roots")
    return EXIT_OK


def cmd_flow(args, cfg: ExperimentConfig) -> int:
    A0 = _connection(cfg, args.snapshot)
    trace = run_flow(A0, cfg.flow.build())
    out_dir = Path(cfg.output.dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "trace.csv").write_text(trace.to_csv())
    save_snapshot(trace.final, out_dir / "final.snap")
    if cfg.output.format == "csv":
        sys.stdout.write(trace.to_csv())
    else:
        emit(
            {
                "converged": trace.converged,
                "steps": trace.steps,
                "time": trace.time,
                "final_energy": trace.final_energy,
                "final_grad_norm": trace.final_grad,
                "energy_monotone": trace.energy_monotone(),
                "trace_csv": str(out_dir / "trace.csv"),
                "snapshot": str(out_dir / "final.snap"),
                "config": cfg.to_json(),
            },
            str(out_dir),
            "flow.json",
            summary=f"flow {'converged' if trace.converged else 'did not converge'} after {trace.steps} steps, "
            f"E = {trace.final_energy:.10g}, |grad| = {trace.final_grad:.3g}",
        )
    return EXIT_OK if trace.converged else EXIT_NONCONVERGENCE


def cmd_weight(args, cfg: ExperimentConfig) -> int:
    A = _connection(cfg, args.snapshot)
    w = weight(A, _xi_from(cfg, args.xi), args.tau, cfg.weight.T_max, cfg.weight.cutoff)
    emit(w.to_json(), cfg.output.dir if args.out else None, "weight.json", summary=f"weight = {w.value}")
    return EXIT_OK


def cmd_kn(args, cfg: ExperimentConfig) -> int:
    A = _connection(cfg, args.snapshot)
    xi = _xi_from(cfg, args.xi)
    kn = kempf_ness_value(A, xi, args.tau, cfg.weight.quad_n)
    s = np.linspace(0.25, 2.0, 8)
    path = kn_path_values(A, xi, s, args.tau)
    sec = second_differences(path)
    emit(
        {
            "value": kn.value,
            "converged": kn.converged,
            "first_derivative": kn.first_derivative,
            "min_second_derivative_sample": float(np.min(kn.second_derivative)),
            "path_s": s.tolist(),
            "path_values": path.tolist(),
            "min_second_difference": float(np.min(sec)),
        },
        cfg.output.dir if args.out else None,
        "kn.json",
        summary=f"Phi = {kn.value:.12g} (converged: {kn.converged})",
    )
    return EXIT_OK


def cmd_classify(args, cfg: ExperimentConfig) -> int:
    A = _connection(cfg, args.snapshot)
    c = classify(A, ClassifierConfig(flow=replace(cfg.flow.build(), track=True)))
    emit(c.to_json(), cfg.output.dir if args.out else None, "classification.json", summary=f"label: {c.label}")
    return LABEL_EXIT[c.label]


def cmd_verify(args, cfg: ExperimentConfig) -> int:
    rec = run_verify(cfg)
    emit(
        rec.to_json(),
        cfg.output.dir if args.out else None,
        "verify.json",
        summary="\n".join(f"{'PASS' if a.passed else 'FAIL'}  {a.name}  (gap {a.measured:.3g}, tol {a.tolerance:.3g})" for a in rec.assertions),
    )
    return EXIT_OK if rec.passed else EXIT_ASSERTION


COMMANDS = {
    "hn": cmd_hn,
    "roots": cmd_roots,
    "flow": cmd_flow,
    "weight": cmd_weight,
    "kn": cmd_kn,
    "classify": cmd_classify,
    "verify": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON experiment configuration")
    common.add_argument("--seed", type=int, help="random seed (unsigned 64-bit)")
    common.add_argument("--threads", type=int, help="BLAS/LAPACK thread count")
    common.add_argument("--out", help="output directory")
    common.add_argument("--format", choices=("json", "csv"), help="stdout format")

    parser = argparse.ArgumentParser(prog="ymgit", description="Yang-Mills flow and stability on the lattice torus")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("hn", parents=[common], help="HN filtration of a split bundle")
    p.add_argument("--degrees", help="comma separated line bundle degrees")
    p.add_argument("--input", help='JSON {"degrees": [...]} or {"rank", "degree", "signatures"}')
    p = sub.add_parser("roots", parents=[common], help="type A root data")
    p.add_argument("--n", type=int, default=3)
    for name, text in (("flow", "run the Yang-Mills flow"), ("classify", "classify a connection")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--snapshot", help="initial connection snapshot")
    for name, text in (("weight", "weight along a direction"), ("kn", "Kempf-Ness functional")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--snapshot", help="connection snapshot")
        p.add_argument("--xi", help="diagonal entries of -i xi, comma separated")
        p.add_argument("--tau", type=float, default=0.0, help="imaginary part of the central element tau")
    sub.add_parser("verify", parents=[common], help="run the invariant suite")
    return parser


def _thread_limit(k: int | None):
    if k is None:
        return contextlib.nullcontext()
    return threadpool_limits(limits=k)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = parse_config(args.config)
        cfg = apply_overrides(cfg, args.seed, args.threads, args.out, args.format)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if getattr(args, "tau", None) is not None:
        args.tau = 1j * args.tau
    with _thread_limit(cfg.threads):
        try:
            return COMMANDS[args.command](args, cfg)
        except (ConfigError, SnapshotError) as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
