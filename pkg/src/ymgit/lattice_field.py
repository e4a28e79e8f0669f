"""Gauge fields on an N x N periodic grid over the unit torus.

Conventions
-----------
* Site ``(i, j)`` sits at ``(x, y) = (i h, j h)`` with ``h = 1/N``.  Matrix
  fields have shape ``(N, N, n, n)``; a connection or a tangent vector stores
  both components in one array of shape ``(2, N, N, n, n)``.
* The bundle is glued along the seam ``y = 1`` by the diagonal clutching
  function ``Omega(x) = diag(exp(-2 pi i d_k x))``: sections satisfy
  ``s(x, y + 1) = Omega(x) s(x, y)``, endomorphism fields wrap by conjugation and
  the connection wraps as ``A(y + 1) = Omega A Omega^-1 - dOmega Omega^-1``, i.e.
  ``A_x`` picks up the constant ``2 pi i diag(d)``.  With this sign the
  standard line connection has ``*F = -2 pi i d`` and degree ``d``.
* ``*F = D_x A_y - D_y A_x + [A_x, A_y]`` with forward differences; the
  covariant derivative on sections uses backward differences,
  ``d_A xi = (D_x xi + [A_x, xi], D_y xi + [A_y, xi])``.  These choices make
  ``grad YM = -*d_A *F`` the exact gradient of the discrete energy and make the
  moment map identity hold exactly.
* The complexified gauge group acts on ``alpha = (A_x + i A_y)/2`` by
  ``exp(zeta) . alpha = e^zeta alpha e^-zeta - int_0^1 e^{r zeta} (dbar zeta) e^{-r zeta} dr``,
  so one-parameter orbits are exactly the integral curves of the
  infinitesimal action.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg

from .lie_core import MatrixGroupSpec


@dataclass(frozen=True)
class Tolerances:
    """Default numerical tolerances shared by all field operations."""

    skew: float = 1e-10
    unitary: float = 1e-10
    seam: float = 1e-10
    degree_snap: float = 0.1
    cond_max: float = 1e12


TOL = Tolerances()


@dataclass(frozen=True)
class GridGeometry:
    """``N x N`` grid on the unit torus."""

    N: int

    def __post_init__(self):
        if self.N < 4:
            raise ValueError(f"grid needs N >= 4, got {self.N}")

    @property
    def h(self) -> float:
        return 1.0 / self.N

    @property
    def area_weight(self) -> float:
        return self.h**2

    @property
    def coords(self) -> np.ndarray:
        return np.arange(self.N) * self.h


@dataclass(frozen=True)
class TwistData:
    """Diagonal clutching degrees ``(d_1, ..., d_n)``."""

    degrees: tuple[int, ...]

    def __init__(self, degrees: Sequence[int]):
        object.__setattr__(self, "degrees", tuple(int(d) for d in degrees))

    @classmethod
    def trivial(cls, n: int) -> "TwistData":
        return cls((0,) * n)

    @property
    def n(self) -> int:
        return len(self.degrees)

    @property
    def total_degree(self) -> int:
        return sum(self.degrees)

    @property
    def is_trivial(self) -> bool:
        return not any(self.degrees)

    def conj_phase(self, N: int) -> np.ndarray:
        """Entries of ``Omega(x_i) X Omega(x_i)^-1 / X``: array of shape ``(N, n, n)``."""
        d = np.asarray(self.degrees, dtype=float)
        x = np.arange(N) / N
        return np.exp(-2j * np.pi * x[:, None, None] * (d[None, :, None] - d[None, None, :]))

    def seam_shift(self) -> np.ndarray:
        """Constant added to ``A_x`` across the seam: ``2 pi i diag(d)``."""
        return 2j * np.pi * np.diag(np.asarray(self.degrees, dtype=float))


class _Shifts:
    """Twist-aware neighbour access for fields on one grid."""

    def __init__(self, N: int, twist: TwistData):
        self.N = N
        self.h = 1.0 / N
        self.twist = twist
        self.phase = twist.conj_phase(N)
        self.phase_inv = self.phase.conj()
        self.shift_const = twist.seam_shift()

    def xp(self, X):
        return np.roll(X, -1, axis=-4)

    def xm(self, X):
        return np.roll(X, 1, axis=-4)

    def yp(self, X):
        out = np.roll(X, -1, axis=-3)
        if not self.twist.is_trivial:
            out[..., -1, :, :] = self.phase * X[..., 0, :, :]
        return out

    def ym(self, X):
        out = np.roll(X, 1, axis=-3)
        if not self.twist.is_trivial:
            out[..., 0, :, :] = self.phase_inv * X[..., -1, :, :]
        return out

    def dxb(self, X):
        return (X - self.xm(X)) / self.h

    def dyb(self, X):
        return (X - self.ym(X)) / self.h

    def dxf(self, X):
        return (self.xp(X) - X) / self.h

    def dyf(self, X):
        return (self.yp(X) - X) / self.h


_SHIFT_CACHE: dict[tuple[int, TwistData], _Shifts] = {}


def shifts(N: int, twist: TwistData) -> _Shifts:
    key = (N, twist)
    if key not in _SHIFT_CACHE:
        _SHIFT_CACHE[key] = _Shifts(N, twist)
    return _SHIFT_CACHE[key]


def dagger(X: np.ndarray) -> np.ndarray:
    return np.swapaxes(X, -1, -2).conj()


def comm(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    return X @ Y - Y @ X


def skew_part(X: np.ndarray) -> np.ndarray:
    return 0.5 * (X - dagger(X))


def pair(X: np.ndarray, Y: np.ndarray, h: float) -> float:
    """Discrete ``L^2`` pairing ``sum_sites Re tr(X Y^*) h^2`` of equally shaped fields."""
    return float(np.real(np.vdot(Y, X))) * h * h


def l2_norm(X: np.ndarray, h: float) -> float:
    return float(np.sqrt(max(pair(X, X, h), 0.0)))


def linf_norm(X: np.ndarray) -> float:
    """Largest pointwise Frobenius norm of a matrix field."""
    return float(np.sqrt(np.max(np.sum(np.abs(X) ** 2, axis=(-2, -1)))))


@dataclass(frozen=True, eq=False)
class LieSection:
    """A section of ``ad(P)`` (or its complexification) on the grid."""

    values: np.ndarray
    twist: TwistData

    @property
    def N(self) -> int:
        return self.values.shape[0]

    @property
    def h(self) -> float:
        return 1.0 / self.N

    @property
    def l2(self) -> float:
        return l2_norm(self.values, self.h)

    @property
    def linf(self) -> float:
        return linf_norm(self.values)

    def is_compact(self, tol: float = TOL.skew) -> bool:
        return bool(np.max(np.abs(self.values + dagger(self.values))) <= tol)


@dataclass(frozen=True, eq=False)
class UnitaryConnection:
    """Skew-hermitian gauge potential ``(A_x, A_y)`` on a twisted torus bundle."""

    a: np.ndarray
    twist: TwistData
    group: MatrixGroupSpec = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        a = np.asarray(self.a, dtype=complex)
        if a.ndim != 5 or a.shape[0] != 2 or a.shape[1] != a.shape[2] or a.shape[3] != a.shape[4]:
            raise ValueError(f"connection array must have shape (2, N, N, n, n), got {a.shape}")
        object.__setattr__(self, "a", a)
        if a.shape[1] < 4:
            raise ValueError(f"grid needs N >= 4, got {a.shape[1]}")
        if self.twist.n != a.shape[-1]:
            raise ValueError(f"twist has {self.twist.n} degrees but matrices are {a.shape[-1]}x{a.shape[-1]}")
        if self.group is None:
            object.__setattr__(self, "group", MatrixGroupSpec(a.shape[-1], "U"))
        if self.group.n != a.shape[-1]:
            raise ValueError("group size does not match field matrices")
        if self.group.kind == "SU" and self.twist.total_degree != 0:
            raise ValueError("an SU(n) bundle must have total degree 0")

    @property
    def ax(self) -> np.ndarray:
        return self.a[0]

    @property
    def ay(self) -> np.ndarray:
        return self.a[1]

    @property
    def N(self) -> int:
        return self.a.shape[1]

    @property
    def n(self) -> int:
        return self.a.shape[-1]

    @property
    def h(self) -> float:
        return 1.0 / self.N

    @property
    def geometry(self) -> GridGeometry:
        return GridGeometry(self.N)

    @property
    def shifts(self) -> _Shifts:
        return shifts(self.N, self.twist)

    def with_field(self, a: np.ndarray) -> "UnitaryConnection":
        return UnitaryConnection(a, self.twist, self.group)

    def __add__(self, tangent: np.ndarray) -> "UnitaryConnection":
        return self.with_field(self.a + tangent)

    def __sub__(self, other: "UnitaryConnection") -> np.ndarray:
        return self.a - other.a

    def validate(self, tol: float = TOL.skew) -> "UnitaryConnection":
        if np.max(np.abs(self.a + dagger(self.a))) > tol:
            raise ValueError("connection components are not skew-hermitian")
        if not np.all(np.isfinite(self.a)):
            raise ValueError("connection has non-finite entries")
        if self.group.kind == "SU" and np.max(np.abs(np.trace(self.a, axis1=-2, axis2=-1))) > tol:
            raise ValueError("SU(n) connection components must be traceless")
        return self


def zero_connection(N: int, group: MatrixGroupSpec, twist: TwistData | None = None) -> UnitaryConnection:
    twist = twist or TwistData.trivial(group.n)
    return UnitaryConnection(np.zeros((2, N, N, group.n, group.n), complex), twist, group)


def check_connection(A) -> UnitaryConnection:
    """Validation helper: accept a connection and verify its invariants."""
    if not isinstance(A, UnitaryConnection):
        raise TypeError(f"expected a UnitaryConnection, got {type(A).__name__}")
    return A.validate()


# ---------------------------------------------------------------------------
# curvature, energies, gradient


def curvature(A: UnitaryConnection) -> np.ndarray:
    """``*F_A`` as a matrix field of shape ``(N, N, n, n)``."""
    s = A.shifts
    ax, ay = A.ax, A.ay
    ax_up = s.yp(ax)
    if not A.twist.is_trivial:
        ax_up[:, -1] += s.shift_const
    return (s.xp(ay) - ay) / s.h - (ax_up - ax) / s.h + comm(ax, ay)


def curvature_increment(A: UnitaryConnection, delta: np.ndarray) -> np.ndarray:
    """``*F_{A + delta} - *F_A`` computed from ``delta`` alone (no cancellation)."""
    s = A.shifts
    dx, dy = delta[0], delta[1]
    return (s.xp(dy) - dy) / s.h - (s.yp(dx) - dx) / s.h + comm(A.ax, dy) + comm(dx, A.ay) + comm(dx, dy)


def ym_energy(A: UnitaryConnection, F: np.ndarray | None = None) -> float:
    """``YM(A) = 1/2 sum |*F|^2 h^2``."""
    F = curvature(A) if F is None else F
    return 0.5 * pair(F, F, A.h)


def f_tau_energy(A: UnitaryConnection, tau: complex | np.ndarray, F: np.ndarray | None = None) -> float:
    """``1/2 sum |*F - tau|^2 h^2`` for a central ``tau``."""
    F = curvature(A) if F is None else F
    D = F - as_central(tau, A.n)
    return 0.5 * pair(D, D, A.h)


def as_central(tau: complex | np.ndarray, n: int) -> np.ndarray:
    tau = np.asarray(tau, dtype=complex)
    if tau.ndim == 0:
        return tau * np.eye(n)
    return tau


def tau_norm_sq(tau: complex | np.ndarray, n: int) -> float:
    """``|tau|^2_{L^2}`` on the unit-area torus."""
    t = as_central(tau, n)
    return float(np.real(np.vdot(t, t)))


def covariant_derivative(A: UnitaryConnection, xi: np.ndarray) -> np.ndarray:
    """``d_A xi``; works for compact and complexified sections."""
    s = A.shifts
    return np.stack([s.dxb(xi) + comm(A.ax, xi), s.dyb(xi) + comm(A.ay, xi)])


def covariant_codifferential(A: UnitaryConnection, a: np.ndarray) -> np.ndarray:
    """``d_A^* a``, the exact adjoint of :func:`covariant_derivative`."""
    s = A.shifts
    return -s.dxf(a[0]) - comm(A.ax, a[0]) - s.dyf(a[1]) - comm(A.ay, a[1])


def laplacian(A: UnitaryConnection, xi: np.ndarray) -> np.ndarray:
    """``d_A^* d_A xi``."""
    return covariant_codifferential(A, covariant_derivative(A, xi))


def hodge_star(a: np.ndarray) -> np.ndarray:
    """``*(a_x, a_y) = (-a_y, a_x)``."""
    return np.stack([-a[1], a[0]])


def grad_ym(A: UnitaryConnection, F: np.ndarray | None = None) -> np.ndarray:
    """Gradient of :func:`ym_energy`: ``(D_y F + [A_y, F], -D_x F - [A_x, F])``."""
    F = curvature(A) if F is None else F
    return -hodge_star(covariant_derivative(A, F))


def symplectic_form(a: np.ndarray, b: np.ndarray, h: float) -> float:
    """``omega(a, b) = sum (<a_x, b_y> - <a_y, b_x>) h^2``."""
    return pair(a[0], b[1], h) - pair(a[1], b[0], h)


def infinitesimal_action(A: UnitaryConnection, zeta: np.ndarray) -> np.ndarray:
    """``L_A(xi + i eta) = -d_A xi - * d_A eta`` for a complexified section ``zeta``."""
    xi = 0.5 * (zeta - dagger(zeta))
    eta = -0.5j * (zeta + dagger(zeta))
    return -covariant_derivative(A, xi) - hodge_star(covariant_derivative(A, eta))


@dataclass(frozen=True)
class MomentPairing:
    lhs: float
    rhs: float
    gap: float


def moment_pairing_check(A: UnitaryConnection, a: np.ndarray, xi: np.ndarray, eps: float = 1e-5) -> MomentPairing:
    """Compare ``d/de <*F_{A + e a}, xi>`` with ``omega(L_A xi, a)``.

    ``gap`` is relative to the size of the terms entering the pairing.
    """
    h = A.h
    lhs = (pair(curvature(A + eps * a), xi, h) - pair(curvature(A + (-eps) * a), xi, h)) / (2 * eps)
    rhs = symplectic_form(infinitesimal_action(A, xi), a, h)
    scale = l2_norm(a, h) * l2_norm(covariant_derivative(A, xi), h)
    return MomentPairing(lhs, rhs, abs(lhs - rhs) / max(scale, 1e-300))


def dbar_part(A: UnitaryConnection) -> np.ndarray:
    """The ``(0,1)`` part ``alpha = (A_x + i A_y)/2`` of a unitary connection."""
    return 0.5 * (A.ax + 1j * A.ay)


def connection_from_dbar(alpha: np.ndarray, twist: TwistData, group: MatrixGroupSpec) -> UnitaryConnection:
    """Unitary connection with ``(0,1)`` part ``alpha``: ``A_x = alpha - alpha^*``, ``A_y = -i(alpha + alpha^*)``."""
    a = np.stack([alpha - dagger(alpha), -1j * (alpha + dagger(alpha))])
    return UnitaryConnection(a, twist, group)


def dbar_covariant(A: UnitaryConnection, X: np.ndarray) -> np.ndarray:
    """``dbar_A X = (d_A X)_x / 2 + i (d_A X)_y / 2`` on endomorphism fields."""
    dA = covariant_derivative(A, X)
    return 0.5 * (dA[0] + 1j * dA[1])


# ---------------------------------------------------------------------------
# gauge transformations


@dataclass(frozen=True, eq=False)
class GaugeTransform:
    """A field of invertible matrices, optionally with a known logarithm.

    Gauge transformations act through their generator ``zeta = log g``; if
    the transform was built with :meth:`exp` the generator is stored,
    otherwise it is computed pointwise from the principal branch.
    """

    values: np.ndarray
    unitary: bool = False
    generator: np.ndarray | None = None

    @classmethod
    def exp(cls, zeta: np.ndarray, unitary: bool | None = None) -> "GaugeTransform":
        zeta = np.asarray(zeta, dtype=complex)
        if unitary is None:
            unitary = bool(np.max(np.abs(zeta + dagger(zeta))) <= TOL.skew)
        return cls(scipy.linalg.expm(zeta), unitary, zeta)

    @classmethod
    def identity(cls, N: int, n: int) -> "GaugeTransform":
        return cls.exp(np.zeros((N, N, n, n), complex), unitary=True)

    @property
    def N(self) -> int:
        return self.values.shape[0]

    def log(self) -> np.ndarray:
        if self.generator is None:
            object.__setattr__(self, "generator", logm_field(self.values, hermitian_ok=True))
        return self.generator

    def inverse(self) -> "GaugeTransform":
        gen = None if self.generator is None else -self.generator
        return GaugeTransform(np.linalg.inv(self.values), self.unitary, gen)

    def __matmul__(self, other: "GaugeTransform") -> "GaugeTransform":
        return GaugeTransform(self.values @ other.values, self.unitary and other.unitary)

    def unitarity_defect(self) -> float:
        n = self.values.shape[-1]
        return float(np.max(np.abs(dagger(self.values) @ self.values - np.eye(n))))

    def condition(self) -> float:
        return float(np.max(np.linalg.cond(self.values)))

    def polar(self) -> tuple[np.ndarray, np.ndarray]:
        """Left polar decomposition ``g = exp(i eta) u``; returns ``(eta, u)``."""
        return polar_field(self.values)


def logm_field(g: np.ndarray, hermitian_ok: bool = True) -> np.ndarray:
    """Principal matrix logarithm of every matrix of a field."""
    g = np.asarray(g, dtype=complex)
    if hermitian_ok and np.max(np.abs(g - dagger(g))) < 1e-13:
        w, V = np.linalg.eigh(0.5 * (g + dagger(g)))
        if np.min(w) <= 0:
            raise ValueError("logarithm of a non-positive hermitian field")
        return (V * np.log(w)[..., None, :]) @ dagger(V)
    w, V = np.linalg.eig(g)
    return (V * np.log(w)[..., None, :]) @ np.linalg.inv(V)


def polar_field(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return skew-hermitian ``eta`` and unitary ``u`` with ``g = exp(i eta) u``."""
    w, V = np.linalg.eigh(g @ dagger(g))
    if np.min(w) <= 0:
        raise ValueError("polar decomposition of a singular field")
    # exp(i eta) = (g g^*)^{1/2}, so i eta = 1/2 log(g g^*)
    ieta = (V * (0.5 * np.log(w))[..., None, :]) @ dagger(V)
    p_inv = (V * (w ** -0.5)[..., None, :]) @ dagger(V)
    return -1j * ieta, p_inv @ g


def dexp_integral(zeta: np.ndarray, X: np.ndarray) -> np.ndarray:
    """``int_0^1 e^{r zeta} X e^{-r zeta} dr`` for matrix fields.

    Uses the block identity ``exp([[zeta, X], [0, zeta]])_{12} = int_0^1 e^{(1-r) zeta} X e^{r zeta} dr``.
    """
    n = zeta.shape[-1]
    M = np.zeros(zeta.shape[:-2] + (2 * n, 2 * n), complex)
    M[..., :n, :n] = zeta
    M[..., n:, n:] = zeta
    M[..., :n, n:] = X
    E = scipy.linalg.expm(M)
    return E[..., :n, n:] @ scipy.linalg.expm(-zeta)


def _phi1(z: np.ndarray) -> np.ndarray:
    """``(e^z - 1)/z`` with the removable singularity filled in."""
    small = np.abs(z) < 1e-6
    zs = np.where(small, 1.0, z)
    return np.where(small, 1 + z / 2 + z * z / 6, np.expm1(zs) / zs)


def _normal_eig(zeta: np.ndarray, tol: float = 1e-13) -> tuple[np.ndarray, np.ndarray] | None:
    """Unitary eigen-decomposition of a hermitian or skew-hermitian field, else ``None``."""
    scale = max(1.0, float(np.max(np.abs(zeta))))
    if np.max(np.abs(zeta - dagger(zeta))) <= tol * scale:
        w, V = np.linalg.eigh(0.5 * (zeta + dagger(zeta)))
        return w.astype(complex), V
    if np.max(np.abs(zeta + dagger(zeta))) <= tol * scale:
        w, V = np.linalg.eigh(-0.5j * (zeta - dagger(zeta)))
        return 1j * w, V
    return None


def exp_action(zeta: np.ndarray, A: UnitaryConnection) -> UnitaryConnection:
    """Act on ``A`` by ``exp(zeta)`` for a complexified generator field ``zeta``.

    ``alpha' = e^zeta alpha e^-zeta - int_0^1 e^{r zeta} (dbar zeta) e^{-r zeta} dr``;
    the unitary connection is recovered as ``A_x = alpha - alpha^*``,
    ``A_y = -i (alpha + alpha^*)``.
    """
    zeta = np.asarray(zeta, dtype=complex)
    if zeta.shape != A.ax.shape:
        raise ValueError(f"generator shape {zeta.shape} does not match field shape {A.ax.shape}")
    s = A.shifts
    alpha = 0.5 * (A.ax + 1j * A.ay)
    dbar = 0.5 * (s.dxb(zeta) + 1j * s.dyb(zeta))
    spectral = _normal_eig(zeta)
    if spectral is not None:
        # work in the pointwise eigenbasis: entries scale by e^{w_k - w_l} and
        # (e^{w_k - w_l} - 1)/(w_k - w_l), which stays accurate for large generators
        w, V = spectral
        diff = w[..., :, None] - w[..., None, :]
        Vh = dagger(V)
        new_alpha = V @ (np.exp(diff) * (Vh @ alpha @ V) - _phi1(diff) * (Vh @ dbar @ V)) @ Vh
    else:
        g = scipy.linalg.expm(zeta)
        new_alpha = g @ alpha @ scipy.linalg.expm(-zeta) - dexp_integral(zeta, dbar)
    ax = new_alpha - dagger(new_alpha)
    ay = -1j * (new_alpha + dagger(new_alpha))
    out = np.stack([ax, ay])
    if A.group.kind == "SU":
        out = out - np.trace(out, axis1=-2, axis2=-1)[..., None, None] * np.eye(A.n) / A.n
    return A.with_field(out)


def gauge_act_complex(g: GaugeTransform, A: UnitaryConnection) -> UnitaryConnection:
    """Action of a complexified gauge transformation on a connection."""
    if g.values.shape != A.ax.shape:
        raise ValueError(f"gauge field shape {g.values.shape} does not match {A.ax.shape}")
    cond = g.condition()
    if cond > TOL.cond_max:
        raise ValueError(f"gauge transformation is near-singular (condition number {cond:.2e})")
    return exp_action(g.log(), A)


def gauge_act_unitary(u: GaugeTransform, A: UnitaryConnection) -> UnitaryConnection:
    """Action of a unitary gauge transformation (same formula, checked unitarity)."""
    defect = u.unitarity_defect()
    if defect > TOL.unitary:
        raise ValueError(f"gauge transformation is not unitary (defect {defect:.2e})")
    return gauge_act_complex(u, A)


def conjugate_field(g: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Pointwise ``g X g^-1``."""
    return g @ X @ np.linalg.inv(g)


# ---------------------------------------------------------------------------
# model connections and topology


def make_line_connection(d: int, N: int) -> UnitaryConnection:
    """Degree-``d`` line bundle connection ``A_x = 2 pi i d y``, ``A_y = 0``; ``*F = -2 pi i d``."""
    return make_split_connection([d], N)


def make_split_connection(degrees: Sequence[int], N: int, kind: str = "U") -> UnitaryConnection:
    """Direct sum of standard line bundle connections of the given degrees."""
    degrees = [int(d) for d in degrees]
    n = len(degrees)
    geo = GridGeometry(N)
    y = geo.coords
    a = np.zeros((2, N, N, n, n), complex)
    for k, d in enumerate(degrees):
        a[0, :, :, k, k] = 2j * np.pi * d * y[None, :]
    return UnitaryConnection(a, TwistData(degrees), MatrixGroupSpec(n, kind))  # type: ignore[arg-type]


def block_projector(twist: TwistData, indices: Sequence[int]) -> np.ndarray:
    """Constant projector onto the chosen diagonal line-bundle factors."""
    P = np.zeros((twist.n, twist.n))
    for k in indices:
        P[k, k] = 1.0
    return P


def chern_number(A: UnitaryConnection, projector: np.ndarray | None = None, F: np.ndarray | None = None) -> float:
    """Unrounded ``(i/2pi) sum tr(pi *F) h^2``."""
    F = curvature(A) if F is None else F
    P = np.eye(A.n) if projector is None else np.asarray(projector)
    return float(np.real(1j / (2 * np.pi) * np.sum(np.trace(P @ F, axis1=-2, axis2=-1)) * A.h**2))


def degree(A: UnitaryConnection, projector: np.ndarray | None = None, F: np.ndarray | None = None) -> int:
    """Chern-Weil degree of the sub-bundle cut out by ``projector``, rounded to an integer."""
    c = chern_number(A, projector, F)
    k = int(round(c))
    if abs(c - k) > TOL.degree_snap:
        raise ValueError(f"degree {c:.4f} is not close to an integer")
    return k


# ---------------------------------------------------------------------------
# random fields


def smooth_random_field(
    rng: np.random.Generator, N: int, n: int, twist: TwistData | None = None, modes: int = 2, amplitude: float = 1.0,
    kind: str = "complex",
) -> np.ndarray:
    """Low-frequency random matrix field compatible with the twist.

    ``kind`` is ``"skew"``, ``"hermitian"`` or ``"complex"``.  Off-diagonal
    entries between factors of different degree carry the seam phase so the
    field is smooth across ``y = 1``.
    """
    twist = twist or TwistData.trivial(n)
    x = np.arange(N) / N
    X, Y = np.meshgrid(x, x, indexing="ij")
    out = np.zeros((N, N, n, n), complex)
    d = np.asarray(twist.degrees, dtype=float)
    for p in range(-modes, modes + 1):
        for q in range(-modes, modes + 1):
            c = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / (1 + p * p + q * q)
            out += c * np.exp(2j * np.pi * (p * X + q * Y))[..., None, None]
    # entries between factors of different degree are sections of a nontrivial
    # line bundle; multiply by a theta-like series sum_m psi(y + m) e^{2 pi i delta m x}
    delta = d[:, None] - d[None, :]
    if np.any(delta):
        ms = np.arange(-4, 5)
        psi = np.exp(-((Y[..., None] + ms - 0.5) ** 2) / (2 * 0.3**2))
        theta = np.einsum("ijm,ijmkl->ijkl", psi, np.exp(2j * np.pi * ms[None, None, :, None, None] * delta * X[..., None, None, None]))
        out *= np.where(delta == 0, 1.0, theta)
    out *= amplitude / max(linf_norm(out), 1e-300)
    if kind == "skew":
        out = skew_part(out)
    elif kind == "hermitian":
        out = 0.5 * (out + dagger(out))
    elif kind != "complex":
        raise ValueError(f"unknown field kind {kind!r}")
    return out


def random_connection(
    rng: np.random.Generator, N: int, group: MatrixGroupSpec, twist: TwistData | None = None, amplitude: float = 1.0
) -> UnitaryConnection:
    """Smooth random perturbation of the standard split connection for ``twist``."""
    twist = twist or TwistData.trivial(group.n)
    base = make_split_connection(twist.degrees, N, group.kind)
    a = np.stack([smooth_random_field(rng, N, group.n, twist, amplitude=amplitude, kind="skew") for _ in range(2)])
    if group.kind == "SU":
        a = a - np.trace(a, axis1=-2, axis2=-1)[..., None, None] * np.eye(group.n) / group.n
    return base + a


def random_tangent(rng: np.random.Generator, A: UnitaryConnection, amplitude: float = 1.0) -> np.ndarray:
    a = np.stack([smooth_random_field(rng, A.N, A.n, A.twist, amplitude=amplitude, kind="skew") for _ in range(2)])
    if A.group.kind == "SU":
        a = a - np.trace(a, axis1=-2, axis2=-1)[..., None, None] * np.eye(A.n) / A.n
    return a


def random_section(
    rng: np.random.Generator, A: UnitaryConnection, amplitude: float = 1.0, kind: str = "skew"
) -> np.ndarray:
    xi = smooth_random_field(rng, A.N, A.n, A.twist, amplitude=amplitude, kind=kind)
    if A.group.kind == "SU":
        xi = xi - np.trace(xi, axis1=-2, axis2=-1)[..., None, None] * np.eye(A.n) / A.n
    return xi


def random_complex_gauge(
    rng: np.random.Generator, A: UnitaryConnection, amplitude: float = 0.5
) -> GaugeTransform:
    """``exp(zeta)`` for a smooth random complexified generator (traceless for SU)."""
    return GaugeTransform.exp(random_section(rng, A, amplitude, kind="complex"), unitary=False)


def random_unitary_gauge(rng: np.random.Generator, A: UnitaryConnection, amplitude: float = 0.5) -> GaugeTransform:
    return GaugeTransform.exp(random_section(rng, A, amplitude, kind="skew"), unitary=True)
