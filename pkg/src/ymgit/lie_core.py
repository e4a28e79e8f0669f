"""Matrix Lie theory for compact groups G = U(n) or SU(n).

Algebra elements are plain ``numpy`` arrays of shape ``(n, n)``; the compact
real form consists of skew-hermitian matrices and the complexification of all
complex matrices.  Root data for type A are kept in exact rational arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Literal

import numpy as np

SKEW_TOL = 1e-12
BLOCK_MERGE_TOL = 1e-9


@dataclass(frozen=True)
class MatrixGroupSpec:
    """A compact matrix group ``U(n)`` or ``SU(n)``."""

    n: int
    kind: Literal["U", "SU"] = "U"

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"matrix size must be positive, got {self.n}")
        if self.kind not in ("U", "SU"):
            raise ValueError(f"unknown group kind {self.kind!r}")

    @property
    def discrete_center(self) -> bool:
        """Whether the identity component of the center is trivial."""
        return self.kind == "SU"

    @property
    def name(self) -> str:
        return f"{self.kind}({self.n})"

    def project(self, xi: np.ndarray) -> np.ndarray:
        """Orthogonal projection of a (field of) matrices onto the Lie algebra.

        Works on arrays of shape ``(..., n, n)``; for ``SU(n)`` the trace part is
        removed, for ``U(n)`` only the skew-hermitian part is kept.
        """
        xi = 0.5 * (xi - np.swapaxes(xi, -1, -2).conj())
        if self.kind == "SU":
            tr = np.trace(xi, axis1=-2, axis2=-1)[..., None, None]
            xi = xi - tr * np.eye(self.n) / self.n
        return xi

    def contains(self, xi: np.ndarray, tol: float = SKEW_TOL) -> bool:
        """Check that ``xi`` lies in the compact Lie algebra up to ``tol``."""
        if np.max(np.abs(xi + np.swapaxes(xi, -1, -2).conj()), initial=0.0) > tol:
            return False
        if self.kind == "SU":
            return bool(np.max(np.abs(np.trace(xi, axis1=-2, axis2=-1)), initial=0.0) <= tol)
        return True


def check_skew(xi: np.ndarray, tol: float = SKEW_TOL) -> np.ndarray:
    """Validate a skew-hermitian matrix and return it as a complex array."""
    xi = np.asarray(xi, dtype=complex)
    if xi.ndim != 2 or xi.shape[0] != xi.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {xi.shape}")
    err = np.max(np.abs(xi + xi.conj().T), initial=0.0)
    if err > tol:
        raise ValueError(f"matrix is not skew-hermitian (defect {err:.3e} > {tol:.1e})")
    return xi


def inner_product(xi: np.ndarray, eta: np.ndarray) -> float:
    """Invariant inner product ``<xi, eta> = Re tr(xi eta^*)``."""
    xi = np.asarray(xi)
    eta = np.asarray(eta)
    if xi.shape != eta.shape:
        raise ValueError(f"dimension mismatch: {xi.shape} vs {eta.shape}")
    return float(np.real(np.vdot(eta, xi)))


@dataclass(frozen=True)
class EigenSplit:
    """Spectral decomposition ``i xi = sum_j lambda_j pi_j`` with merged blocks."""

    eigenvalues: np.ndarray
    projectors: tuple[np.ndarray, ...]
    multiplicities: tuple[int, ...]
    basis: np.ndarray

    @property
    def n_blocks(self) -> int:
        return len(self.multiplicities)

    def block_slices(self) -> list[slice]:
        """Index ranges of the blocks in the adapted basis ``self.basis``."""
        edges = np.concatenate([[0], np.cumsum(self.multiplicities)])
        return [slice(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:])]


def eigen_split(xi: np.ndarray, tol: float = BLOCK_MERGE_TOL) -> EigenSplit:
    """Split a skew-hermitian ``xi`` into eigenspaces of ``i xi``.

    Eigenvalues are sorted ascending; neighbours closer than ``tol`` are merged
    into one block whose eigenvalue is the block mean.
    """
    xi = check_skew(xi, tol=max(SKEW_TOL, 1e-10))
    vals, vecs = np.linalg.eigh(0.5 * (1j * xi + (1j * xi).conj().T))
    groups: list[list[int]] = [[0]]
    for k in range(1, len(vals)):
        if vals[k] - vals[groups[-1][-1]] < tol:
            groups[-1].append(k)
        else:
            groups.append([k])
    eigenvalues = np.array([vals[g].mean() for g in groups])
    projectors = tuple(vecs[:, g] @ vecs[:, g].conj().T for g in groups)
    return EigenSplit(eigenvalues, projectors, tuple(len(g) for g in groups), vecs)


def _block_pattern(g: np.ndarray, xi: np.ndarray) -> tuple[float, float]:
    """Largest entries of ``g`` below and above the block diagonal of ``xi``."""
    g = np.asarray(g, dtype=complex)
    if g.shape != xi.shape:
        raise ValueError(f"dimension mismatch: {g.shape} vs {xi.shape}")
    if np.linalg.cond(g) > 1e12:
        raise ValueError("g is (numerically) singular")
    split = eigen_split(xi)
    gb = split.basis.conj().T @ g @ split.basis
    lower = upper = 0.0
    slices = split.block_slices()
    for i, si in enumerate(slices):
        for j, sj in enumerate(slices):
            size = float(np.max(np.abs(gb[si, sj])))
            if i > j:
                lower = max(lower, size)
            elif i < j:
                upper = max(upper, size)
    return lower, upper


def parabolic_membership(g: np.ndarray, xi: np.ndarray, tol: float = 1e-9) -> bool:
    """Whether ``g`` lies in the parabolic subgroup ``Q(xi)``.

    ``Q(xi)`` consists of the ``g`` for which ``exp(i t xi) g exp(-i t xi)``
    has a limit as ``t -> oo``: in the eigenbasis of ``i xi`` ordered by
    ascending eigenvalue, ``g`` is block upper triangular.
    """
    lower, _ = _block_pattern(g, check_skew(xi, 1e-10))
    return lower <= tol


def levi_membership(g: np.ndarray, xi: np.ndarray, tol: float = 1e-9) -> bool:
    """Whether ``g`` lies in the Levi subgroup ``L(xi)`` (block diagonal)."""
    lower, upper = _block_pattern(g, check_skew(xi, 1e-10))
    return max(lower, upper) <= tol


def conjugation_orbit_bounded(
    g: np.ndarray, xi: np.ndarray, t_max: float = 50.0, threshold: float = 1e6, samples: int = 201
) -> bool:
    """Numerical limit test: is ``sup_t |exp(i t xi) g exp(-i t xi)|`` below ``threshold``?"""
    vals, vecs = np.linalg.eigh(1j * check_skew(xi, 1e-10))
    gb = vecs.conj().T @ np.asarray(g, dtype=complex) @ vecs
    ts = np.linspace(0.0, t_max, samples)
    scale = np.exp(ts[:, None, None] * (vals[None, :, None] - vals[None, None, :]))
    return bool(np.max(np.abs(scale * gb[None])) < threshold)


def _frac_pair(q: Fraction) -> list[int]:
    return [q.numerator, q.denominator]


@dataclass(frozen=True)
class RootDatum:
    """Root system of type ``A_{n-1}`` inside the diagonal torus of ``u(n)``.

    A toral element ``i diag(v)`` is stored as the tuple ``v`` of fractions.
    """

    n: int
    roots: tuple[tuple[Fraction, ...], ...]
    simple_roots: tuple[tuple[Fraction, ...], ...]
    dual_basis: tuple[tuple[Fraction, ...], ...]
    reflections: tuple[tuple[int, int], ...]

    @property
    def rank(self) -> int:
        return len(self.simple_roots)

    @staticmethod
    def pairing(a: tuple[Fraction, ...], b: tuple[Fraction, ...]) -> Fraction:
        """``<i diag(a), i diag(b)>`` computed exactly."""
        return sum((x * y for x, y in zip(a, b)), Fraction(0))

    def as_matrix(self, v: tuple[Fraction, ...]) -> np.ndarray:
        return 1j * np.diag([float(x) for x in v])

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "rank": self.rank,
            "roots": [[_frac_pair(x) for x in r] for r in self.roots],
            "simple_roots": [[_frac_pair(x) for x in r] for r in self.simple_roots],
            "dual_basis": [[_frac_pair(x) for x in r] for r in self.dual_basis],
            "reflections": [list(p) for p in self.reflections],
        }


def roots_type_A(n: int) -> RootDatum:
    """Roots ``i(E_jj - E_kk)``, simple roots and the dual basis for ``su(n)``."""
    if n < 2:
        raise ValueError(f"type A root data need n >= 2, got {n}")
    one, zero = Fraction(1), Fraction(0)

    def root(j: int, k: int) -> tuple[Fraction, ...]:
        return tuple(one if m == j else -one if m == k else zero for m in range(n))

    roots = tuple(root(j, k) for j in range(n) for k in range(n) if j != k)
    simple = tuple(root(j, j + 1) for j in range(n - 1))
    # the dual vector to t_j is i diag(c) with c_k = (n - j)/n for k <= j and -j/n after
    dual = tuple(
        tuple(Fraction(n - j, n) if m < j else Fraction(-j, n) for m in range(n)) for j in range(1, n)
    )
    reflections = tuple((j, j + 1) for j in range(n - 1))
    return RootDatum(n, roots, simple, dual, reflections)


def dual_basis_defect(rd: RootDatum) -> list[list[Fraction]]:
    """Matrix ``<t_i^vee, 2 t_j / |t_j|^2> - delta_ij`` in exact arithmetic."""
    out = []
    for i, dv in enumerate(rd.dual_basis):
        row = []
        for j, t in enumerate(rd.simple_roots):
            val = 2 * rd.pairing(dv, t) / rd.pairing(t, t)
            row.append(val - (1 if i == j else 0))
        out.append(row)
    return out


@dataclass(frozen=True)
class ChamberCoordinates:
    coeffs: np.ndarray
    conjugator: np.ndarray
    central: np.ndarray


def chamber_coordinates(xi: np.ndarray, rd: RootDatum) -> ChamberCoordinates:
    """Conjugate ``xi`` into the closed positive Weyl chamber.

    Returns a unitary ``u`` and ``x_j >= 0`` with
    ``u xi u^* = sum_j x_j t_j^vee + central part``.  Eigenvalues are sorted
    decreasingly (ties keep their original order), which picks one Weyl group
    element deterministically.
    """
    xi = check_skew(xi, 1e-10)
    n = rd.n
    if xi.shape != (n, n):
        raise ValueError(f"dimension mismatch: {xi.shape} vs ({n}, {n})")
    central = np.trace(xi) / n * np.eye(n)
    xi0 = xi - central
    if np.allclose(xi0, np.diag(np.diag(xi0)), atol=1e-13):
        a = np.imag(np.diag(xi0))
        vecs = np.eye(n, dtype=complex)
    else:
        a, vecs = np.linalg.eigh(-1j * xi0)
    order = sorted(range(n), key=lambda k: (-round(float(a[k]), 12), k))
    u = vecs[:, order].conj().T
    a_sorted = np.asarray(a)[order]
    coeffs = np.maximum(a_sorted[:-1] - a_sorted[1:], 0.0)
    return ChamberCoordinates(coeffs, u, central)


def chamber_matrix(coeffs: np.ndarray, rd: RootDatum) -> np.ndarray:
    """Evaluate ``sum_j x_j t_j^vee``."""
    out = np.zeros((rd.n, rd.n), dtype=complex)
    for x, dv in zip(coeffs, rd.dual_basis):
        out += x * rd.as_matrix(dv)
    return out
