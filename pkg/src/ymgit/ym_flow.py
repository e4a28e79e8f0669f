"""Yang-Mills gradient flow with orbit tracking and convergence diagnostics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .lattice_field import (
    GaugeTransform,
    UnitaryConnection,
    as_central,
    curvature,
    curvature_increment,
    dagger,
    exp_action,
    grad_ym,
    l2_norm,
    logm_field,
    pair,
    polar_field,
    ym_energy,
)


@dataclass(frozen=True)
class FlowConfig:
    """Step-size and stopping controls for :func:`run_flow`.

    Step sizes are expressed in units of ``h^2`` through ``cfl_factor``:
    the largest admissible step is ``cfl_factor * h^2`` (and at most
    ``dt_max`` if that is given).
    """

    cfl_factor: float = 0.2
    dt_init: float | None = None
    dt_max: float | None = None
    dt_min_factor: float = 1e-6
    grad_tol: float = 1e-6
    max_steps: int = 100_000
    record_every: int = 50
    track: bool = False
    tol_track: float = 1e-3

    def __post_init__(self):
        if self.grad_tol <= 0:
            raise ValueError("grad_tol must be positive")
        if not 0 < self.cfl_factor <= 0.25:
            raise ValueError("cfl_factor must lie in (0, 0.25] for a stable explicit step")
        if self.max_steps < 0 or self.record_every < 1:
            raise ValueError("max_steps must be >= 0 and record_every >= 1")

    def dt_bound(self, h: float) -> float:
        bound = self.cfl_factor * h * h
        return min(bound, self.dt_max) if self.dt_max is not None else bound

    def initial_dt(self, h: float) -> float:
        dt = self.dt_bound(h) if self.dt_init is None else self.dt_init
        if dt > self.dt_bound(h) * (1 + 1e-12):
            raise ValueError(f"dt_init={dt:.3e} exceeds the step bound {self.dt_bound(h):.3e}")
        return dt


class StepUnderflow(RuntimeError):
    """Raised when backtracking cannot find an energy-decreasing step."""


@dataclass
class StepResult:
    A: UnitaryConnection
    dt: float
    energy: float
    F: np.ndarray
    halvings: int


def flow_step(
    A: UnitaryConnection,
    dt: float,
    F: np.ndarray | None = None,
    energy: float | None = None,
    dt_min: float = 0.0,
    grad: np.ndarray | None = None,
) -> StepResult:
    """One explicit Euler step ``A - dt grad YM(A)`` with backtracking.

    The step is halved until the energy does not increase; the accepted
    connection, step, and its curvature are returned.
    """
    F = curvature(A) if F is None else F
    energy = ym_energy(A, F) if energy is None else energy
    grad = grad_ym(A, F) if grad is None else grad
    h = A.h
    halvings = 0
    while True:
        delta = -dt * grad
        dF = curvature_increment(A, delta)
        # energy change from the exact increment of the (quadratic) curvature
        dE = pair(dF, F, h) + 0.5 * pair(dF, dF, h)
        if dE <= 0.0:
            B = A.with_field(A.a + delta)
            FB = curvature(B)
            return StepResult(B, dt, ym_energy(B, FB), FB, halvings)
        dt *= 0.5
        halvings += 1
        if dt < dt_min or halvings > 60:
            gnorm = l2_norm(grad, h)
            raise StepUnderflow(
                f"no descent step above dt_min={dt_min:.2e}: energy {energy:.6e}, |grad|={gnorm:.3e}, dE={dE:.3e}"
            )


@dataclass
class FlowRecord:
    step: int
    time: float
    energy: float
    grad_norm: float
    mu_norm: float


@dataclass
class FlowTrace:
    records: list[FlowRecord]
    final: UnitaryConnection
    converged: bool
    steps: int
    time: float
    tau: np.ndarray
    tracker: "OrbitTracker | None" = None

    CSV_COLUMNS = ("step", "time", "energy", "grad_norm", "mu_norm")

    @property
    def energies(self) -> np.ndarray:
        return np.array([r.energy for r in self.records])

    @property
    def grad_norms(self) -> np.ndarray:
        return np.array([r.grad_norm for r in self.records])

    @property
    def final_energy(self) -> float:
        return self.records[-1].energy

    @property
    def final_grad(self) -> float:
        return self.records[-1].grad_norm

    def energy_monotone(self, slack: float = 1e-12) -> bool:
        e = self.energies
        return bool(np.all(np.diff(e) <= slack * np.maximum(1.0, np.abs(e[:-1]))))

    def to_csv(self) -> str:
        lines = [",".join(self.CSV_COLUMNS)]
        for r in self.records:
            lines.append(f"{r.step},{r.time!r},{r.energy!r},{r.grad_norm!r},{r.mu_norm!r}")
        return "\n".join(lines) + "\n"


def default_tau(A: UnitaryConnection) -> np.ndarray:
    """Central type ``-2 pi i mu(E) Id`` of the bundle carrying ``A``."""
    return -2j * np.pi * A.twist.total_degree / A.n * np.eye(A.n)


def _record(step: int, time: float, A: UnitaryConnection, F: np.ndarray, energy: float, tau: np.ndarray):
    grad = grad_ym(A, F)
    return FlowRecord(step, time, energy, l2_norm(grad, A.h), l2_norm(F - tau, A.h)), grad


@dataclass
class OrbitTracker:
    """Accumulated complexified gauge ``g(t)`` with ``A(t) ~ g(t)^-1 A_0``.

    ``g`` is updated by ``g <- g exp(i dt *F)`` after each accepted step.
    """

    A0: UnitaryConnection
    g: np.ndarray
    residuals: list[tuple[int, float]] = field(default_factory=list)
    det_defects: list[tuple[int, float]] = field(default_factory=list)

    @classmethod
    def start(cls, A0: UnitaryConnection, g0: np.ndarray | None = None) -> "OrbitTracker":
        g = np.broadcast_to(np.eye(A0.n, dtype=complex), A0.ax.shape).copy() if g0 is None else g0.copy()
        return cls(A0, g)

    def advance(self, F: np.ndarray, dt: float) -> None:
        # F is skew-hermitian, so i dt F is hermitian: exponentiate through eigh
        w, V = np.linalg.eigh(0.5j * dt * (F - dagger(F)))
        self.g = self.g @ ((V * np.exp(w)[..., None, :]) @ dagger(V))

    def predicted(self) -> UnitaryConnection:
        """``g(t)^-1 A_0`` through the discrete complexified action."""
        return exp_action(-logm_field(self.g), self.A0)

    def residual(self, A: UnitaryConnection) -> float:
        return l2_norm(A.a - self.predicted().a, A.h)

    def det_defect(self) -> float:
        """Largest ``| |det g| - 1 |`` (and phase drift for SU) over sites."""
        det = np.linalg.det(self.g)
        if self.A0.group.kind == "SU":
            return float(np.max(np.abs(det - 1)))
        return 0.0

    def record(self, step: int, A: UnitaryConnection) -> float:
        r = self.residual(A)
        self.residuals.append((step, r))
        self.det_defects.append((step, self.det_defect()))
        return r

    @property
    def max_residual(self) -> float:
        return max((r for _, r in self.residuals), default=0.0)


def run_flow(
    A0: UnitaryConnection,
    cfg: FlowConfig = FlowConfig(),
    tau: np.ndarray | complex | None = None,
    tracker: OrbitTracker | None = None,
    callback=None,
) -> FlowTrace:
    """Integrate the Yang-Mills flow until ``|grad| < grad_tol`` or ``max_steps``.

    ``callback(step, time, A, F)`` is invoked at every record.
    """
    tau = default_tau(A0) if tau is None else as_central(tau, A0.n)
    h = A0.h
    dt_bound = cfg.dt_bound(h)
    dt = cfg.initial_dt(h)
    dt_min = cfg.dt_min_factor * dt_bound
    if cfg.track and tracker is None:
        tracker = OrbitTracker.start(A0)
    A = A0
    F = curvature(A)
    energy = ym_energy(A, F)
    t = 0.0
    rec, grad = _record(0, t, A, F, energy, tau)
    records = [rec]
    if tracker is not None:
        tracker.record(0, A)
    if callback is not None:
        callback(0, t, A, F)
    converged = rec.grad_norm < cfg.grad_tol
    step = 0
    while not converged and step < cfg.max_steps:
        res = flow_step(A, dt, F, energy, dt_min, grad)
        if tracker is not None:
            tracker.advance(F - tau, res.dt)
        t += res.dt
        step += 1
        A, F, energy = res.A, res.F, res.energy
        # regrow after backtracking, never beyond the stability bound
        dt = res.dt if res.halvings else min(dt_bound, dt * 1.1)
        grad = grad_ym(A, F)
        grad_norm = l2_norm(grad, h)
        converged = grad_norm < cfg.grad_tol
        if converged or step % cfg.record_every == 0 or step == cfg.max_steps:
            rec, _ = _record(step, t, A, F, energy, tau)
            records.append(rec)
            if tracker is not None:
                tracker.record(step, A)
            if callback is not None:
                callback(step, t, A, F)
    return FlowTrace(records, A, converged, step, t, tau, tracker)


@dataclass(frozen=True)
class LojasiewiczFit:
    gamma: float
    c: float
    r_squared: float
    points: int


def lojasiewicz_fit(trace: FlowTrace, tail_fraction: float = 0.5, limit_energy: float | None = None) -> LojasiewiczFit:
    """Fit ``log |grad| = log c + gamma log(E - E_inf)`` over the tail of a converged trace."""
    if not trace.converged:
        raise ValueError("lojasiewicz_fit needs a converged trace")
    e = trace.energies
    g = trace.grad_norms
    e_inf = e[-1] if limit_energy is None else limit_energy
    gap = e - e_inf
    mask = (gap > 1e-14 * max(1.0, abs(e_inf))) & (g > 0)
    idx = np.nonzero(mask)[0]
    idx = idx[int(len(idx) * (1 - tail_fraction)):]
    if len(idx) < 3:
        raise ValueError("too few tail records with a positive energy gap")
    x, y = np.log(gap[idx]), np.log(g[idx])
    slope, intercept = np.polyfit(x, y, 1)
    pred = slope * x + intercept
    ss = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum((y - pred) ** 2)) / ss if ss > 0 else 1.0
    return LojasiewiczFit(float(slope), float(math.exp(intercept)), r2, len(idx))


def geodesic_distance(g1: np.ndarray, g2: np.ndarray, h: float) -> float:
    """``|eta|_{L^2}`` for ``g1^-1 g2 = exp(i eta) u``."""
    eta, _ = polar_field(np.linalg.solve(g1, g2))
    return l2_norm(eta, h)


@dataclass
class GeodesicMonitor:
    times: list[float]
    rho: list[float]
    slack: float

    @property
    def max_increase(self) -> float:
        r = np.asarray(self.rho)
        return float(np.max(np.diff(r), initial=0.0)) if len(r) > 1 else 0.0

    @property
    def monotone(self) -> bool:
        return self.max_increase <= self.slack


def geodesic_monitor(
    A0: UnitaryConnection,
    g1: GaugeTransform,
    g2: GaugeTransform,
    steps: int,
    dt: float | None = None,
    record_every: int = 10,
    slack_factor: float = 1e-6,
) -> GeodesicMonitor:
    """Run two Kempf-Ness flows from ``g1^-1 A0`` and ``g2^-1 A0`` and monitor their distance.

    Each flow line evolves by the Yang-Mills flow while its gauge follows
    ``g^-1 dg/dt = i *F``; ``rho`` is the ``L^2`` norm of ``eta`` in the polar
    decomposition ``g1^-1 g2 = exp(i eta) u``.
    """
    h = A0.h
    dt = FlowConfig().dt_bound(h) if dt is None else dt
    tau = default_tau(A0)
    flows = []
    for g in (g1, g2):
        A = exp_action(-g.log(), A0)
        flows.append([A, curvature(A), OrbitTracker.start(A0, g.values)])
    times, rho = [0.0], [geodesic_distance(flows[0][2].g, flows[1][2].g, h)]
    t = 0.0
    for step in range(1, steps + 1):
        for fl in flows:
            A, F, tr = fl
            res = flow_step(A, dt, F)
            tr.advance(F - tau, res.dt)
            fl[0], fl[1] = res.A, res.F
        t += dt
        if step % record_every == 0 or step == steps:
            times.append(t)
            rho.append(geodesic_distance(flows[0][2].g, flows[1][2].g, h))
    return GeodesicMonitor(times, rho, slack_factor * rho[0])


def flow_with_config(A0: UnitaryConnection, **overrides) -> FlowTrace:
    return run_flow(A0, replace(FlowConfig(), **overrides))
