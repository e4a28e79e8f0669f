"""Weights along one-parameter complexified orbits and the Kempf-Ness functional.

For a compact section ``xi`` the orbit ``A_t = exp(i t xi) A`` is computed
with :func:`~ymgit.lattice_field.exp_action`; along it the pairing
``<*F_{A_t} - tau, xi>`` has derivative ``|d_{A_t} xi|^2``, so the weight

    w_tau(A, xi) = <*F_A - tau, xi> + int_0^oo |d_{A_t} xi|^2 dt

is finite exactly when the integrand decays.  The Kempf-Ness functional is
``Phi_A(exp(i xi) u) = int_0^1 <*F_{exp(-i t xi) A} - tau, -xi> dt``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .lie_core import BLOCK_MERGE_TOL, MatrixGroupSpec
from .lattice_field import (
    GaugeTransform,
    UnitaryConnection,
    as_central,
    covariant_derivative,
    curvature,
    dagger,
    dbar_covariant,
    dbar_part,
    degree,
    exp_action,
    l2_norm,
    pair,
    polar_field,
)

# Gauss-Legendre rule used on every panel
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(8)


def _check_section(A: UnitaryConnection, xi: np.ndarray) -> np.ndarray:
    xi = np.asarray(xi, dtype=complex)
    if xi.ndim == 2:
        xi = np.broadcast_to(xi, A.ax.shape).copy()
    if xi.shape != A.ax.shape:
        raise ValueError(f"section shape {xi.shape} does not match field shape {A.ax.shape}")
    if np.max(np.abs(xi + dagger(xi))) > 1e-9:
        raise ValueError("xi must be skew-hermitian at every site")
    return xi


def orbit_point(A: UnitaryConnection, xi: np.ndarray, t: float) -> UnitaryConnection:
    """``exp(i t xi) A``."""
    return exp_action(1j * t * xi, A)


def weight_integrand(A: UnitaryConnection, xi: np.ndarray, tau, t: float) -> tuple[float, float]:
    """Return ``(<*F_{A_t} - tau, xi>, |d_{A_t} xi|^2)`` at ``A_t = exp(i t xi) A``."""
    At = orbit_point(A, xi, t)
    F = curvature(At)
    h = A.h
    value = pair(F - as_central(tau, A.n), xi, h)
    return value, l2_norm(covariant_derivative(At, xi), h) ** 2


@dataclass
class WeightResult:
    """Outcome of :func:`weight`; ``value`` is ``math.inf`` for divergent weights."""

    value: float
    initial: float
    tail_integral: float
    endpoint: float
    t_end: float
    divergence_reason: str | None = None
    times: np.ndarray = field(default_factory=lambda: np.zeros(0))
    pairings: np.ndarray = field(default_factory=lambda: np.zeros(0))
    integrand: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def finite(self) -> bool:
        return math.isfinite(self.value)

    @property
    def max_decrease(self) -> float:
        """Largest drop of the pairing between consecutive samples (should be <= 0)."""
        if len(self.pairings) < 2:
            return 0.0
        return float(max(0.0, -np.min(np.diff(self.pairings))))

    def to_json(self) -> dict:
        return {
            "value": self.value if self.finite else "inf",
            "certified": self.finite,
            "initial": self.initial,
            "tail_integral": self.tail_integral,
            "endpoint": self.endpoint,
            "t_end": self.t_end,
            "divergence_reason": self.divergence_reason,
        }


def weight(
    A: UnitaryConnection,
    xi: np.ndarray,
    tau=0.0,
    T_max: float = 200.0,
    cutoff: float = 1e-8,
    first_panel: float = 0.02,
    growth: float = 1.5,
    max_panel: float = 2.0,
    blowup: float = 1e12,
) -> WeightResult:
    """Weight ``w_tau(A, xi)`` by Gauss-Legendre quadrature over growing panels.

    The integration stops once ``|d_{A_t} xi|^2`` has fallen below ``cutoff``
    without increasing over the last panel.  If that does not happen before
    ``T_max``, or if the integrand grows past ``blowup``, the weight is
    declared infinite.  ``endpoint`` is the pairing at the final time, an
    independent estimate of the same limit.
    """
    xi = _check_section(A, xi)
    if l2_norm(xi, A.h) == 0.0:
        raise ValueError("weight is undefined for xi = 0")
    initial, f0 = weight_integrand(A, xi, tau, 0.0)
    times, pairings, integrand = [0.0], [initial], [f0]
    total = 0.0
    t, width = 0.0, first_panel
    f_prev = f0
    while True:
        if t >= T_max:
            return WeightResult(math.inf, initial, total, pairings[-1], t,
                                f"integrand {f_prev:.3e} still above cutoff at T_max={T_max}",
                                np.array(times), np.array(pairings), np.array(integrand))
        b = min(t + width, T_max)
        nodes = 0.5 * (b - t) * _GL_NODES + 0.5 * (b + t)
        vals = np.array([weight_integrand(A, xi, tau, s)[1] for s in nodes])
        p_end, f_end = weight_integrand(A, xi, tau, b)
        if not (np.all(np.isfinite(vals)) and math.isfinite(f_end) and math.isfinite(p_end)):
            return WeightResult(math.inf, initial, total, pairings[-1], b, "non-finite integrand",
                                np.array(times), np.array(pairings), np.array(integrand))
        total += 0.5 * (b - t) * float(np.dot(_GL_WEIGHTS, vals))
        times.append(b)
        pairings.append(p_end)
        integrand.append(f_end)
        if f_end > blowup and f_end > f_prev:
            return WeightResult(math.inf, initial, total, p_end, b, f"integrand grew to {f_end:.3e}",
                                np.array(times), np.array(pairings), np.array(integrand))
        if f_end < cutoff and f_end <= f_prev:
            return WeightResult(initial + total, initial, total, p_end, b, None,
                                np.array(times), np.array(pairings), np.array(integrand))
        t, f_prev = b, f_end
        width = min(width * growth, max_panel)


# ---------------------------------------------------------------------------
# filtrations from finite weights


@dataclass
class EigenFiltration:
    """Constant eigenvalues of ``i xi`` with the partial-sum projector fields."""

    eigenvalues: np.ndarray
    multiplicities: tuple[int, ...]
    block_projectors: tuple[np.ndarray, ...]
    partial_projectors: tuple[np.ndarray, ...]
    residuals: tuple[float, ...]
    degrees: tuple[int, ...] | None
    eigenvalue_spread: float

    def as_filtration(self) -> list[tuple[int, int]]:
        """Subquotient types ``(rank, degree)`` ordered by increasing eigenvalue."""
        if self.degrees is None:
            raise ValueError("degrees were not computed")
        return list(zip(self.multiplicities, self.degrees))


def _spectral_blocks(xi: np.ndarray, tol: float) -> tuple[np.ndarray, np.ndarray, list[list[int]], float]:
    vals, vecs = np.linalg.eigh(0.5 * (1j * xi + dagger(1j * xi)))
    mean = vals.reshape(-1, vals.shape[-1]).mean(axis=0)
    spread = float(np.max(np.abs(vals - mean)))
    groups: list[list[int]] = [[0]]
    for k in range(1, len(mean)):
        if mean[k] - mean[groups[-1][-1]] < max(tol, BLOCK_MERGE_TOL):
            groups[-1].append(k)
        else:
            groups.append([k])
    return mean, vecs, groups, spread


def eigen_filtration(
    xi: np.ndarray, A: UnitaryConnection, const_tol: float = 1e-8, with_degrees: bool = True, t_end: float | None = None
) -> EigenFiltration:
    """Split ``i xi`` into eigenbundles and measure how holomorphic the filtration is.

    The residual of the ``j``-th partial sum ``pi_j`` is
    ``|(1 - pi_j) dbar_A pi_j|_{L^2}``.  Degrees of the subquotients are read
    off after pushing ``A`` to the split limit along ``xi``.
    """
    xi = _check_section(A, xi)
    mean, vecs, groups, spread = _spectral_blocks(xi, const_tol)
    if spread > const_tol * max(1.0, float(np.max(np.abs(mean)))):
        raise ValueError(f"eigenvalues of i xi vary over the grid (spread {spread:.3e})")
    blocks = tuple(vecs[..., g] @ dagger(vecs[..., g]) for g in groups)
    partial = tuple(np.sum(blocks[: j + 1], axis=0) for j in range(len(blocks)))
    eye = np.eye(A.n)
    residuals = tuple(l2_norm((eye - P) @ dbar_covariant(A, P), A.h) for P in partial[:-1])
    eigenvalues = np.array([mean[g].mean() for g in groups])
    degrees = None
    if with_degrees:
        limit = push_to_limit(A, xi, t_end).A_plus
        degrees = tuple(degree(limit, P) for P in blocks)
    return EigenFiltration(eigenvalues, tuple(len(g) for g in groups), blocks, partial, residuals, degrees, spread)


@dataclass
class LimitResult:
    A_plus: UnitaryConnection
    t_end: float
    offdiag_start: float
    offdiag_mid: float
    offdiag_end: float
    rate_bound: float

    @property
    def decay_ok(self) -> bool:
        """Off-diagonal part decays at least like ``exp(-gap t)`` (within a factor 10)."""
        if self.offdiag_start == 0.0:
            return self.offdiag_end == 0.0
        return self.offdiag_end <= 10.0 * self.offdiag_start * math.exp(-self.rate_bound * self.t_end) + 1e-12


def _offdiag_norm(A: UnitaryConnection, blocks: tuple[np.ndarray, ...]) -> float:
    alpha = dbar_part(A)
    diag = sum(P @ alpha @ P for P in blocks)
    return l2_norm(alpha - diag, A.h)


def push_to_limit(A: UnitaryConnection, xi: np.ndarray, t_end: float | None = None) -> LimitResult:
    """``A_+ = exp(i t_end xi) A`` with the decay of the off-diagonal blocks recorded."""
    xi = _check_section(A, xi)
    mean, vecs, groups, _ = _spectral_blocks(xi, 1e-8)
    blocks = tuple(vecs[..., g] @ dagger(vecs[..., g]) for g in groups)
    gaps = [mean[groups[j + 1][0]] - mean[groups[j][-1]] for j in range(len(groups) - 1)]
    gap = min(gaps) if gaps else 0.0
    if t_end is None:
        t_end = min(200.0, 30.0 / gap) if gap > 0 else 0.0
    A_mid = orbit_point(A, xi, 0.5 * t_end)
    A_plus = orbit_point(A, xi, t_end)
    res = LimitResult(
        A_plus, t_end, _offdiag_norm(A, blocks), _offdiag_norm(A_mid, blocks), _offdiag_norm(A_plus, blocks), gap
    )
    if not np.isfinite(res.offdiag_end) or res.offdiag_end > max(res.offdiag_start, 1e-12) * 10:
        raise ValueError(f"off-diagonal blocks do not decay along xi ({res.offdiag_start:.3e} -> {res.offdiag_end:.3e})")
    return res


# ---------------------------------------------------------------------------
# Kempf-Ness functional


@dataclass
class KNEvaluation:
    value: float
    nodes: np.ndarray
    integrand: np.ndarray
    second_derivative: np.ndarray
    first_derivative: float
    panels: int
    converged: bool


def _kn_samples(A: UnitaryConnection, xi: np.ndarray, tau, ts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Integrand ``<*F_{exp(-i t xi)A} - tau, -xi>`` and its derivative ``|d xi|^2`` at ``ts``."""
    vals, ders = [], []
    for t in ts:
        p, f = weight_integrand(A, -xi, tau, float(t))
        vals.append(p)
        ders.append(f)
    return np.array(vals), np.array(ders)


def _kn_quadrature(A, xi, tau, panels: int) -> tuple[float, np.ndarray, np.ndarray, np.ndarray]:
    edges = np.linspace(0.0, 1.0, panels + 1)
    half = 0.5 * (edges[1:] - edges[:-1])
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * _GL_NODES[None, :]).ravel()
    w = (half[:, None] * _GL_WEIGHTS[None, :]).ravel()
    vals, ders = _kn_samples(A, xi, tau, nodes)
    return float(np.dot(w, vals)), nodes, vals, ders


def kempf_ness_value(
    A: UnitaryConnection, xi: np.ndarray, tau=0.0, quad_n: int = 256, tol: float = 1e-7, max_nodes: int = 4096
) -> KNEvaluation:
    """``Phi_A(exp(i xi))`` by composite Gauss-Legendre quadrature over ``[0, 1]``.

    ``quad_n`` is the total number of nodes; it is doubled until two
    successive values agree to ``tol``.
    """
    xi = _check_section(A, xi)
    if l2_norm(xi, A.h) == 0.0:
        return KNEvaluation(0.0, np.zeros(0), np.zeros(0), np.zeros(0), 0.0, 0, True)
    first = _kn_samples(A, xi, tau, np.array([0.0]))[0][0]
    panels = max(1, quad_n // len(_GL_NODES))
    value, nodes, vals, ders = _kn_quadrature(A, xi, tau, panels)
    converged = False
    while panels * len(_GL_NODES) * 2 <= max_nodes:
        panels *= 2
        new, nodes, vals, ders = _kn_quadrature(A, xi, tau, panels)
        done = abs(new - value) <= tol * max(1.0, abs(new))
        value = new
        if done:
            converged = True
            break
    return KNEvaluation(value, nodes, vals, ders, float(first), panels, converged)


def kn_path_values(A: UnitaryConnection, xi: np.ndarray, s_values: np.ndarray, tau=0.0, panels_per_unit: int = 16):
    """``Phi_A(exp(i s xi))`` for increasing ``s``; second differences should be ``>= 0``.

    ``Phi_A(exp(i s xi)) = int_0^s <*F_{exp(-i r xi)A} - tau, -xi> dr``, so all
    values come from one cumulative quadrature.
    """
    xi = _check_section(A, xi)
    s_values = np.asarray(s_values, dtype=float)
    if np.any(np.diff(s_values) <= 0) or s_values[0] < 0:
        raise ValueError("s_values must be non-negative and increasing")
    out = [0.0]
    edges = np.concatenate([[0.0], s_values]) if s_values[0] > 0 else s_values
    acc = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        panels = max(1, int(math.ceil((b - a) * panels_per_unit)))
        sub = np.linspace(a, b, panels + 1)
        for lo, hi in zip(sub[:-1], sub[1:]):
            nodes = 0.5 * (hi - lo) * _GL_NODES + 0.5 * (hi + lo)
            vals, _ = _kn_samples(A, xi, tau, nodes)
            acc += 0.5 * (hi - lo) * float(np.dot(_GL_WEIGHTS, vals))
        out.append(acc)
    vals = np.array(out[1:] if s_values[0] > 0 else out)
    return vals


def second_differences(values: np.ndarray) -> np.ndarray:
    v = np.asarray(values)
    return v[2:] - 2 * v[1:-1] + v[:-2]


def kn_of_gauge(A: UnitaryConnection, g: GaugeTransform | np.ndarray, tau=0.0, quad_n: int = 256) -> float:
    """``Phi_A(g)`` through the polar decomposition ``g = exp(i eta) u``."""
    values = g.values if isinstance(g, GaugeTransform) else np.asarray(g)
    eta, _ = polar_field(values)
    return kempf_ness_value(A, eta, tau, quad_n).value


@dataclass(frozen=True)
class CocycleCheck:
    phi_g: float
    phi_h: float
    phi_shifted: float
    gap: float

    @property
    def relative_gap(self) -> float:
        return self.gap / (1.0 + abs(self.phi_g))


def kn_cocycle_check(
    A: UnitaryConnection, g: GaugeTransform, h: GaugeTransform, tau=0.0, quad_n: int = 256
) -> CocycleCheck:
    """Compare ``Phi_{h^-1 A}(h^-1 g)`` with ``Phi_A(g) - Phi_A(h)``."""
    phi_g = kn_of_gauge(A, g, tau, quad_n)
    phi_h = kn_of_gauge(A, h, tau, quad_n)
    h_inv = h.inverse()
    A_h = exp_action(h_inv.log(), A)
    shifted = GaugeTransform(h_inv.values @ g.values)
    phi_s = kn_of_gauge(A_h, shifted, tau, quad_n)
    return CocycleCheck(phi_g, phi_h, phi_s, abs(phi_s - phi_g + phi_h))


# ---------------------------------------------------------------------------
# moment-weight inequality


@dataclass
class MomentWeightReport:
    lhs: float
    rhs: list[float]
    slack: float
    flow_rhs: float | None = None

    @property
    def tightest_gap(self) -> float:
        vals = list(self.rhs) + ([self.flow_rhs] if self.flow_rhs is not None else [])
        return min(v - self.lhs for v in vals) if vals else math.inf

    @property
    def violations(self) -> int:
        return sum(1 for v in self.rhs if self.lhs - v > self.slack)

    @property
    def ok(self) -> bool:
        flow_ok = self.flow_rhs is None or self.lhs - self.flow_rhs <= self.slack
        return self.violations == 0 and flow_ok

    def to_json(self) -> dict:
        return {
            "lhs": self.lhs,
            "samples": len(self.rhs),
            "violations": self.violations,
            "tightest_gap": self.tightest_gap,
            "flow_rhs": self.flow_rhs,
            "ok": self.ok,
        }


def mw_check(
    A: UnitaryConnection,
    xi: np.ndarray,
    tau=0.0,
    gauges=(),
    flow_limit: UnitaryConnection | None = None,
    slack: float = 1e-6,
    w: WeightResult | None = None,
) -> MomentWeightReport:
    """Check ``-w_tau(A, xi)/|xi| <= |*F_{g A} - tau|`` over sampled gauges (and a flow limit)."""
    xi = _check_section(A, xi)
    w = weight(A, xi, tau) if w is None else w
    if not w.finite:
        raise ValueError("mw_check needs a finite weight")
    h = A.h
    lhs = -w.value / l2_norm(xi, h)
    t = as_central(tau, A.n)
    rhs = [l2_norm(curvature(exp_action(g.log(), A)) - t, h) for g in gauges]
    flow_rhs = None if flow_limit is None else l2_norm(curvature(flow_limit) - t, h)
    return MomentWeightReport(lhs, rhs, slack, flow_rhs)


# ---------------------------------------------------------------------------
# passing between U(n) and a subgroup


@dataclass(frozen=True)
class ProjectionWeight:
    w: float
    w_ambient: float
    correction: float
    gap: float


def projection_weight(
    A: UnitaryConnection, xi_H: np.ndarray, tau_H, group: MatrixGroupSpec, **weight_kw
) -> ProjectionWeight:
    """Compare ``w_tau(A, xi)`` with ``w_{tau_H}(A, xi_H) + <tau_H - tau, xi>``.

    ``A`` is regarded as a ``U(n)`` connection; ``xi`` and ``tau`` are the
    orthogonal projections of ``xi_H`` and ``tau_H`` onto the Lie algebra of
    ``group``.
    """
    ambient = UnitaryConnection(A.a, A.twist, MatrixGroupSpec(A.n, "U"))
    xi_H = _check_section(ambient, xi_H)
    tH = as_central(tau_H, A.n)
    xi = group.project(xi_H)
    tau = group.project(tH)
    w = weight(ambient, xi, tau, **weight_kw)
    w_H = weight(ambient, xi_H, tH, **weight_kw)
    if not (w.finite and w_H.finite):
        raise ValueError("projection_weight needs finite weights")
    correction = pair(np.broadcast_to(tH - tau, xi.shape), xi, A.h)
    return ProjectionWeight(w.value, w_H.value, correction, abs(w.value - w_H.value - correction))
