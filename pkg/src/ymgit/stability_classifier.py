"""Stability of a connection read off from its Yang-Mills flow limit.

The flow limit ``A_oo`` decides the label: its energy is compared with
``m = |tau|^2 / 2``; if the two agree the limit is tested for
irreducibility through the spectral gap of ``d_A^* d_A`` on traceless
sections; reducible limits are split into polystable and semistable with the
orbit-tracking residual, which is only a proxy for ``A_oo`` lying in the
complexified orbit of ``A_0``.  For unstable connections the dominant
destabilising direction is ``tau - *F_oo``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from typing import Literal

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .bundle_hn import FiltrationSpec, dominant_weight
from .lattice_field import (
    GaugeTransform,
    UnitaryConnection,
    curvature,
    dagger,
    exp_action,
    l2_norm,
    make_split_connection,
    polar_field,
    random_complex_gauge,
    smooth_random_field,
    tau_norm_sq,
)
from .weights_kn import WeightResult, eigen_filtration, weight
from .ym_flow import FlowConfig, FlowTrace, OrbitTracker, default_tau, run_flow

Label = Literal["stable", "polystable", "semistable", "unstable", "undetermined"]

EPS_IRR = 1e-6


@dataclass(frozen=True)
class ClassifierConfig:
    flow: FlowConfig = field(default_factory=lambda: FlowConfig(grad_tol=1e-6, track=True))
    eps_irr: float = EPS_IRR
    energy_band: float | None = None
    orbit_tol: float = 1e-3
    gauge_growth_tol: float = 1e-2


@dataclass
class Classification:
    label: Label
    final_energy: float
    m: float
    energy_band: float
    laplacian_gap: float | None
    orbit_residual: float | None
    gauge_growth: float | None
    dominant_norm: float | None
    trace: FlowTrace
    notes: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "label": self.label,
            "evidence": {
                "final_energy": self.final_energy,
                "m": self.m,
                "energy_band": self.energy_band,
                "laplacian_gap": self.laplacian_gap,
                "orbit_residual": self.orbit_residual,
                "orbit_residual_is_proxy": True,
                "gauge_growth": self.gauge_growth,
                "dominant_norm": self.dominant_norm,
                "converged": self.trace.converged,
                "steps": self.trace.steps,
            },
            "notes": self.notes,
        }


# ---------------------------------------------------------------------------
# irreducibility


def _traceless_basis(n: int) -> np.ndarray:
    """Orthonormal basis of traceless ``n x n`` matrices, as columns of row-major vectors."""
    basis = []
    for j in range(n):
        for k in range(n):
            if j != k:
                E = np.zeros((n, n))
                E[j, k] = 1.0
                basis.append(E.ravel())
    for k in range(1, n):
        D = np.zeros(n)
        D[:k] = 1.0
        D[k] = -k
        basis.append(np.diag(D / np.linalg.norm(D)).ravel())
    return np.array(basis, dtype=complex).T


def covariant_derivative_matrices(A: UnitaryConnection) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """Sparse matrices of ``xi -> (d_A xi)_x`` and ``xi -> (d_A xi)_y`` on row-major vectorised fields."""
    N, n = A.N, A.n
    h = A.h
    m = n * n
    sites = N * N
    eye_m = np.eye(n)
    s = A.shifts
    idx = np.arange(sites).reshape(N, N)

    def ad_blocks(X: np.ndarray) -> np.ndarray:
        # vec([X, xi]) = (X (x) I - I (x) X^T) vec(xi) for row-major vec
        return np.einsum("...ab,cd->...acbd", X, eye_m).reshape(N, N, m, m) - np.einsum(
            "ab,...dc->...acbd", eye_m, X
        ).reshape(N, N, m, m)

    out = []
    for axis, Ac in ((0, A.ax), (1, A.ay)):
        diag_blocks = ad_blocks(Ac) + np.eye(m) / h
        rows, cols, vals = [], [], []
        base = np.arange(m)
        # site term
        for i in range(N):
            for j in range(N):
                r = idx[i, j] * m + base
                rows.append(np.repeat(r, m))
                cols.append(np.tile(r, m))
                vals.append(diag_blocks[i, j].ravel())
        # neighbour term -xi(site - e)/h, with the seam phase when wrapping in y
        for i in range(N):
            for j in range(N):
                if axis == 0:
                    src = idx[(i - 1) % N, j]
                    phase = np.ones(m)
                else:
                    src = idx[i, (j - 1) % N]
                    phase = s.phase_inv[i].ravel() if (j == 0 and not A.twist.is_trivial) else np.ones(m)
                rows.append(idx[i, j] * m + base)
                cols.append(src * m + base)
                vals.append(-phase / h)
        M = sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(sites * m, sites * m)
        )
        out.append(M)
    return out[0], out[1]


def laplacian_gap(A: UnitaryConnection, k: int = 1) -> np.ndarray:
    """Smallest eigenvalues of ``d_A^* d_A`` on traceless sections.

    Central sections are excluded by restricting to the traceless part,
    where ``d_A`` acts block-diagonally; the smallest eigenvalue vanishes
    exactly when ``A`` has a non-central infinitesimal stabiliser.
    """
    Dx, Dy = covariant_derivative_matrices(A)
    T = sp.kron(sp.identity(A.N * A.N, format="csr"), sp.csr_matrix(_traceless_basis(A.n)), format="csr")
    L = (Dx.conj().T @ Dx + Dy.conj().T @ Dy).tocsr()
    L = (T.conj().T @ L @ T).tocsc()
    L = 0.5 * (L + L.conj().T)
    vals = spla.eigsh(L, k=k, sigma=-1e-3, which="LM", return_eigenvectors=False)
    return np.sort(np.real(vals))


# ---------------------------------------------------------------------------
# classification


def coarse_grain(A: UnitaryConnection) -> UnitaryConnection:
    """Restriction to every other site (grid ``N/2``)."""
    if A.N % 2 or A.N < 8:
        raise ValueError("coarse graining needs an even N >= 8")
    return UnitaryConnection(np.ascontiguousarray(A.a[:, ::2, ::2]), A.twist, A.group)


def gauge_growth(history: list[float]) -> float:
    """Relative growth of ``|eta|`` over the second half of the recorded run."""
    if len(history) < 3:
        return 0.0
    mid = history[len(history) // 2]
    return (history[-1] - mid) / max(1.0, history[-1])


def classify(A0: UnitaryConnection, cfg: ClassifierConfig = ClassifierConfig()) -> Classification:
    """Label ``A0`` as stable, polystable, semistable or unstable from its flow limit."""
    tau = default_tau(A0)
    m = 0.5 * tau_norm_sq(tau, A0.n)
    eta_history: list[float] = []
    tracker = OrbitTracker.start(A0) if cfg.flow.track else None

    def watch(step, t, A, F):
        if tracker is not None:
            eta_history.append(l2_norm(polar_field(tracker.g)[0], A.h))

    trace = run_flow(A0, cfg.flow, tau=tau, tracker=tracker, callback=watch)
    final = trace.final_energy
    notes: list[str] = []
    if cfg.energy_band is None:
        try:
            coarse = run_flow(coarse_grain(A0), replace(cfg.flow, track=False), tau=tau)
            band = max(1e-6, 3.0 * abs(final - coarse.final_energy))
        except ValueError:
            band = 1e-6
    else:
        band = cfg.energy_band
    if not trace.converged:
        notes.append("flow did not reach grad_tol; label undetermined")
        return Classification("undetermined", final, m, band, None, None, None, None, trace, notes)
    A_inf = trace.final
    if final > m + band:
        dom = dominant_direction(A0, trace).norm
        return Classification("unstable", final, m, band, None, None, None, dom, trace, notes)
    gap = float(laplacian_gap(A_inf)[0]) if A0.n > 1 else None
    residual = tracker.max_residual if tracker is not None else None
    growth = gauge_growth(eta_history) if tracker is not None else None
    if gap is None:
        # a torus group has no non-central directions: every flat limit is only polystable
        notes.append("abelian structure group: isotropy is the whole (central) group")
        label: Label = "polystable"
    elif gap > cfg.eps_irr:
        label = "stable"
    else:
        notes.append("polystable/semistable decided by the orbit-tracking proxy")
        bounded = residual is None or (residual < cfg.orbit_tol and (growth or 0.0) < cfg.gauge_growth_tol)
        label = "polystable" if bounded else "semistable"
    return Classification(label, final, m, band, gap, residual, growth, None, trace, notes)


# ---------------------------------------------------------------------------
# dominant direction


@dataclass
class DominantDirection:
    xi_limit: np.ndarray
    xi_initial: np.ndarray
    norm: float
    weight: WeightResult
    ratio: float
    filtration: FiltrationSpec
    hn_norm: float

    @property
    def weight_gap(self) -> float:
        """``|-w/|xi| - |*F_oo - tau||`` relative to the norm."""
        return abs(self.ratio - self.norm) / self.norm

    @property
    def hn_gap(self) -> float:
        return abs(self.norm - self.hn_norm) / self.hn_norm


def _flag_direction(g: np.ndarray, xi: np.ndarray, const_tol: float) -> np.ndarray:
    """Skew-hermitian section with the eigenvalues of ``xi`` on the flag ``g(E_1) < g(E_2) < ...``."""
    vals, vecs = np.linalg.eigh(0.5 * (1j * xi + dagger(1j * xi)))
    mean = vals.reshape(-1, vals.shape[-1]).mean(axis=0)
    # Gram-Schmidt of g applied to the eigenvectors, ordered by increasing eigenvalue,
    # spans the transported partial sums
    Q, _ = np.linalg.qr(g @ vecs)
    return -1j * (Q * mean[None, None, None, :]) @ dagger(Q)


def dominant_direction(A0: UnitaryConnection, trace: FlowTrace, const_tol: float = 1e-4) -> DominantDirection:
    """``xi_hat = tau - *F_oo`` transported back to ``A0`` along the tracked gauge.

    The weight of ``A0`` in that direction is computed independently and
    ``-w/|xi_hat|`` is compared with ``|*F_oo - tau|``; the norm is also
    checked against the Harder-Narasimhan prediction from the blockwise degrees.
    """
    A_inf = trace.final
    tau = trace.tau
    F = curvature(A_inf)
    xi = tau - F
    xi = 0.5 * (xi - dagger(xi))
    norm = l2_norm(xi, A_inf.h)
    if norm < 1e-8:
        raise ValueError("flow limit is central: the connection is not unstable")
    ef = eigen_filtration(xi, A_inf, const_tol=const_tol)
    filt = FiltrationSpec(ef.as_filtration())
    if len(filt) < 2:
        raise ValueError("flow limit has a single slope: the connection is not unstable")
    # replace the sampled spectrum by its constant mean before transporting
    xi_const = -1j * sum(lam * P for lam, P in zip(ef.eigenvalues, ef.block_projectors))
    g = trace.tracker.g if trace.tracker is not None else np.broadcast_to(np.eye(A0.n), F.shape)
    xi0 = _flag_direction(g, xi_const, const_tol)
    w = weight(A0, xi0, tau)
    ratio = -w.value / l2_norm(xi0, A0.h) if w.finite else -math.inf
    hn = dominant_weight(filt)
    return DominantDirection(xi_const, xi0, norm, w, ratio, filt, hn.norm)


# ---------------------------------------------------------------------------
# uniqueness of the limit


def sorted_spectra(F: np.ndarray) -> np.ndarray:
    """Pointwise eigenvalues of ``i *F`` in increasing order, shape ``(N, N, n)``."""
    return np.linalg.eigvalsh(0.5 * (1j * F + dagger(1j * F)))


def aligned_distance(s1: np.ndarray, s2: np.ndarray, h: float) -> float:
    """``min`` over lattice translations of the ``L^2`` distance between two spectra fields."""
    N = s1.shape[0]
    best = math.inf
    for p, q in itertools.product(range(N), range(N)):
        d = np.sqrt(np.sum((np.roll(s2, (p, q), axis=(0, 1)) - s1) ** 2) * h * h)
        best = min(best, float(d))
        if best == 0.0:
            break
    return best


@dataclass
class UniquenessReport:
    energies: list[float]
    spectra_gap: float
    energy_gap: float
    degrees: list[tuple | None]
    traces: list[FlowTrace]
    tol: float

    @property
    def degrees_agree(self) -> bool:
        return all(d == self.degrees[0] for d in self.degrees)

    @property
    def ok(self) -> bool:
        return self.spectra_gap <= self.tol and self.energy_gap <= self.tol and self.degrees_agree


def levi_gauge(rng: np.random.Generator, A: UnitaryConnection, amplitude: float = 0.5) -> GaugeTransform:
    """Random complexified gauge with values in the diagonal torus (block-preserving)."""
    g = random_complex_gauge(rng, A, amplitude)
    zeta = np.zeros_like(g.log())
    idx = np.arange(A.n)
    zeta[..., idx, idx] = g.log()[..., idx, idx]
    return GaugeTransform.exp(zeta, unitary=False)


def uniqueness_experiment(
    A0: UnitaryConnection,
    trials: int,
    rng: np.random.Generator,
    flow: FlowConfig = FlowConfig(grad_tol=1e-6),
    amplitude: float = 0.5,
    gauge: Literal["general", "levi"] = "general",
    tol: float = 1e-3,
) -> UniquenessReport:
    """Flow several random complexified transforms of ``A0`` and compare gauge-invariant limit data."""
    if trials < 1:
        raise ValueError("need at least one trial")
    energies, spectra, degrees, traces = [], [], [], []
    for _ in range(trials):
        g = levi_gauge(rng, A0, amplitude) if gauge == "levi" else random_complex_gauge(rng, A0, amplitude)
        trace = run_flow(exp_action(g.log(), A0), flow)
        traces.append(trace)
        energies.append(trace.final_energy)
        F = curvature(trace.final)
        spectra.append(sorted_spectra(F))
        try:
            xi = trace.tau - F
            ef = eigen_filtration(0.5 * (xi - dagger(xi)), trace.final, const_tol=1e-4)
            degrees.append(tuple(ef.as_filtration()))
        except ValueError:
            degrees.append(None)
    h = A0.h
    spectra_gap = max((aligned_distance(spectra[0], s, h) for s in spectra[1:]), default=0.0)
    energy_gap = max(energies) - min(energies)
    return UniquenessReport(energies, spectra_gap, energy_gap, degrees, traces, tol)


def stable_example(N: int, rng: np.random.Generator, amplitude: float = 0.5) -> UnitaryConnection:
    """Rank-2, degree-1 ``U(2)`` connection: split ``(1, 0)`` plus a generic off-diagonal perturbation."""
    base = make_split_connection((1, 0), N, "U")
    pert = smooth_random_field(rng, N, 2, base.twist, amplitude=amplitude, kind="skew")
    pert[..., 0, 0] = 0.0
    pert[..., 1, 1] = 0.0
    pert2 = smooth_random_field(rng, N, 2, base.twist, amplitude=amplitude, kind="skew")
    pert2[..., 0, 0] = 0.0
    pert2[..., 1, 1] = 0.0
    return base + np.stack([pert, pert2])

