"""Slope stability combinatorics for vector bundles over a Riemann surface.

Everything except the dominant weight (which involves a square root) is
computed in exact rational arithmetic with :class:`fractions.Fraction`.
"""

from __future__ import annotations

import itertools
import math
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Iterator, Literal, Mapping, Sequence

import numpy as np


@dataclass(frozen=True)
class BundleType:
    """Topological type of a complex vector bundle: rank and degree."""

    rank: int
    degree: int

    def __post_init__(self):
        if self.rank < 1:
            raise ValueError(f"rank must be positive, got {self.rank}")

    @property
    def slope(self) -> Fraction:
        return Fraction(self.degree, self.rank)

    def __sub__(self, other: "BundleType") -> "BundleType":
        return BundleType(self.rank - other.rank, self.degree - other.degree)


@dataclass(frozen=True)
class FiltrationSpec:
    """A filtration described by its subquotient types ``(n_j, k_j)``."""

    blocks: tuple[tuple[int, int], ...]

    def __init__(self, blocks: Iterable[Sequence[int]]):
        blocks = tuple((int(n), int(k)) for n, k in blocks)
        if not blocks:
            raise ValueError("a filtration needs at least one block")
        if any(n < 1 for n, _ in blocks):
            raise ValueError(f"block ranks must be positive: {blocks}")
        object.__setattr__(self, "blocks", blocks)

    @property
    def total(self) -> BundleType:
        return BundleType(sum(n for n, _ in self.blocks), sum(k for _, k in self.blocks))

    @property
    def slopes(self) -> list[Fraction]:
        return [Fraction(k, n) for n, k in self.blocks]

    def __len__(self) -> int:
        return len(self.blocks)


def slope(b: BundleType) -> Fraction:
    """``mu(E) = deg(E) / rk(E)``."""
    return b.slope


def char_vector(f: FiltrationSpec) -> tuple[Fraction, ...]:
    """Characteristic vector: each block slope ``k_j/n_j`` repeated ``n_j`` times."""
    return tuple(Fraction(k, n) for n, k in f.blocks for _ in range(n))


def polygon(f: FiltrationSpec) -> list[tuple[int, int]]:
    """Vertices ``(sum n_i, sum k_i)`` of the polygon, starting at the origin."""
    verts = [(0, 0)]
    for n, k in f.blocks:
        x, y = verts[-1]
        verts.append((x + n, y + k))
    return verts


def polygon_values(f: FiltrationSpec) -> list[Fraction]:
    """Values of the piecewise linear polygon function at ``0, 1, ..., rank``."""
    return list(itertools.accumulate(char_vector(f), initial=Fraction(0)))


def is_concave(f: FiltrationSpec) -> bool:
    """Concave polygon, i.e. non-increasing block slopes."""
    s = f.slopes
    return all(a >= b for a, b in zip(s, s[1:]))


Comparison = Literal[">=", "<=", "equal", "incomparable"]


def dominates(f: FiltrationSpec, g: FiltrationSpec) -> Comparison:
    """Compare the polygons of ``f`` and ``g`` at every integer abscissa."""
    if f.total != g.total:
        raise ValueError(f"filtrations of different bundles: {f.total} vs {g.total}")
    lf, lg = polygon_values(f), polygon_values(g)
    ge = all(a >= b for a, b in zip(lf, lg))
    le = all(a <= b for a, b in zip(lf, lg))
    if ge and le:
        return "equal"
    if ge:
        return ">="
    if le:
        return "<="
    return "incomparable"


def squared_norm(f: FiltrationSpec) -> Fraction:
    """``|mu(f)|_2^2 = sum_j k_j^2 / n_j``."""
    return sum((Fraction(k * k, n) for n, k in f.blocks), Fraction(0))


def merge_equal_slopes(f: FiltrationSpec) -> FiltrationSpec:
    """Coalesce neighbouring blocks of equal slope (same polygon, fewer vertices)."""
    out: list[list[int]] = []
    for n, k in f.blocks:
        if out and Fraction(out[-1][1], out[-1][0]) == Fraction(k, n):
            out[-1][0] += n
            out[-1][1] += k
        else:
            out.append([n, k])
    return FiltrationSpec(out)


def hn_split(degrees: Sequence[int]) -> FiltrationSpec:
    """HN filtration of a direct sum of line bundles of the given degrees."""
    if len(degrees) == 0:
        raise ValueError("need at least one line bundle")
    counts = Counter(int(d) for d in degrees)
    return FiltrationSpec((counts[d], counts[d] * d) for d in sorted(counts, reverse=True))


Signatures = Iterable[tuple[int, int]]


def hn_from_oracle(
    total: BundleType,
    admissible: Signatures | Mapping[tuple[int, int], "Signatures | Mapping"],
) -> FiltrationSpec:
    """Greedy HN filtration from subbundle signatures.

    ``admissible`` lists the ``(rank, degree)`` of proper subbundles.  It is
    either a flat collection, in which case the quotient by a chosen
    subbundle ``F`` is taken to have as subbundles exactly the listed
    signatures that contain ``F`` (translated by ``F``), or a mapping from each
    signature to the admissible set of the corresponding quotient.

    At each stage the subbundle of maximal slope is chosen, ties broken by
    maximal rank.
    """
    blocks: list[tuple[int, int]] = []
    remaining = total
    current: Signatures | Mapping = admissible
    prev_slope: Fraction | None = None
    while True:
        if isinstance(current, Mapping):
            options = dict(current)
        else:
            options = {tuple(s): None for s in current}
        proper = {}
        for (r, d), sub in options.items():
            if r < 1 or r > remaining.rank:
                raise ValueError(f"inconsistent signature {(r, d)} for quotient of type {remaining}")
            if r < remaining.rank:
                proper[(r, d)] = sub
        best = None
        if proper:
            best = max(proper, key=lambda s: (Fraction(s[1], s[0]), s[0]))
        if best is None or Fraction(best[1], best[0]) <= remaining.slope:
            blocks.append((remaining.rank, remaining.degree))
            if prev_slope is not None and remaining.slope >= prev_slope:
                raise ValueError("inconsistent signatures: slopes of the HN blocks are not decreasing")
            break
        r, d = best
        mu = Fraction(d, r)
        if prev_slope is not None and mu >= prev_slope:
            raise ValueError("inconsistent signatures: slopes of the HN blocks are not decreasing")
        blocks.append((r, d))
        prev_slope = mu
        sub = proper[best]
        if sub is None:
            # flat bookkeeping: subbundles of E/F come from subbundles containing F
            sub = [(s - r, e - d) for (s, e) in options if s > r and (s, e) != best and s < remaining.rank]
        remaining = BundleType(remaining.rank - r, remaining.degree - d)
        current = sub
    return FiltrationSpec(blocks)


def split_signatures(degrees: Sequence[int]) -> list[tuple[int, int]]:
    """Signatures of the coordinate subbundles of a sum of line bundles."""
    sigs = set()
    counts = Counter(int(d) for d in degrees)
    values = sorted(counts)

    def rec(i: int, r: int, d: int):
        if i == len(values):
            if 0 < r < len(degrees):
                sigs.add((r, d))
            return
        for m in range(counts[values[i]] + 1):
            rec(i + 1, r + m, d + m * values[i])

    rec(0, 0, 0)
    return sorted(sigs)


def split_signature_oracle(degrees: Sequence[int]) -> dict:
    """Nested signature mapping for a split bundle, suitable for :func:`hn_from_oracle`."""
    counts = Counter(int(d) for d in degrees)

    def quotient_map(cnt: Counter) -> dict:
        total_rank = sum(cnt.values())
        out = {}
        for sub in _sub_multisets(cnt):
            r = sum(sub.values())
            if 0 < r < total_rank:
                key = (r, sum(d * m for d, m in sub.items()))
                if key not in out:
                    out[key] = quotient_map(cnt - sub)
        return out

    return quotient_map(counts)


def _sub_multisets(cnt: Counter) -> Iterator[Counter]:
    items = sorted(cnt.items())

    def rec(i: int, acc: dict):
        if i == len(items):
            yield Counter({k: v for k, v in acc.items() if v})
            return
        d, m = items[i]
        for c in range(m + 1):
            acc[d] = c
            yield from rec(i + 1, acc)
        acc.pop(d, None)

    yield from rec(0, {})


def hn_norm_check(f: FiltrationSpec, hn: FiltrationSpec) -> bool:
    """Check ``|mu(f)| <= |mu(hn)|`` with equality exactly when the polygons agree."""
    if not is_concave(f):
        raise ValueError("hn_norm_check expects a concave filtration")
    if f.total != hn.total:
        raise ValueError(f"filtrations of different bundles: {f.total} vs {hn.total}")
    nf, nh = squared_norm(f), squared_norm(hn)
    same = polygon_values(f) == polygon_values(hn)
    return (nf == nh) if same else (nf < nh)


def central_type(b: BundleType) -> np.ndarray:
    """``tau = -2 pi i mu(E) * Id``."""
    return -2j * np.pi * float(b.slope) * np.eye(b.rank)


def _check_lambdas(f: FiltrationSpec, lambdas: Sequence[float]) -> np.ndarray:
    lam = np.asarray(lambdas, dtype=float)
    if lam.shape != (len(f),):
        raise ValueError(f"need one lambda per block ({len(f)}), got {lam.shape}")
    if np.any(np.diff(lam) <= 0):
        raise ValueError(f"lambdas must be strictly increasing, got {lam}")
    return lam


def weight_of_filtration(f: FiltrationSpec, lambdas: Sequence[float], tau: complex | np.ndarray = 0.0) -> float:
    """``w = 2 pi sum_j lambda_j k_j - <tau, xi>`` for ``xi = -i sum_j lambda_j pi_j``.

    ``tau`` is a central element, given either as the scalar ``c`` in
    ``tau = c Id`` or as the matrix itself.
    """
    lam = np.asarray(lambdas, dtype=float)
    if np.any(lam != 0) or lam.shape != (len(f),):
        lam = _check_lambdas(f, lam)
    c = complex(np.asarray(tau).flat[0]) if np.ndim(tau) else complex(tau)
    # <c Id, -i lambda_j Id_{n_j}> = Re(c * conj(-i lambda_j)) n_j = -Im(c) lambda_j n_j
    pairing = sum(-c.imag * l * n for l, (n, _) in zip(lam, f.blocks))
    return float(2 * np.pi * sum(l * k for l, (_, k) in zip(lam, f.blocks)) - pairing)


@dataclass(frozen=True)
class DominantWeightResult:
    lambdas: np.ndarray
    norm: float
    norm_squared_over_4pi2: Fraction = field(default=Fraction(0))
    xi_norm: float = 1.0


def dominant_weight(hn: FiltrationSpec) -> DominantWeightResult:
    """Normalised direction minimising the weight of an unstable HN type.

    ``lambda_j = (mu(E) - mu(D_j)) / s`` with
    ``s^2 = |mu|^2 - rk(E) mu(E)^2`` and ``-w = 2 pi s``.
    """
    if len(hn) < 2:
        raise ValueError("semistable type: there is no dominant weight")
    slopes = hn.slopes
    if any(a <= b for a, b in zip(slopes, slopes[1:])):
        raise ValueError("HN slopes must be strictly decreasing")
    tot = hn.total
    mu = tot.slope
    s2 = squared_norm(hn) - tot.rank * mu * mu
    s = math.sqrt(s2)
    lam = np.array([float(mu - m) / s for m in slopes])
    return DominantWeightResult(lam, 2 * math.pi * s, s2)


def c1_ad_parabolic(F: BundleType, E: BundleType) -> Fraction:
    """``rk(E/F) rk(F) (mu(F) - mu(E/F))``; positive for a destabilising subbundle."""
    if not 1 <= F.rank < E.rank:
        raise ValueError(f"need 1 <= rk(F) < rk(E), got {F.rank}, {E.rank}")
    Q = E - F
    return Q.rank * F.rank * (F.slope - Q.slope)


Label = Literal["stable", "semistable", "polystable", "unstable"]


def classify_algebraic(
    total: BundleType, admissible: Iterable[tuple[int, int]], splitting: Sequence[BundleType] | None = None
) -> Label:
    """Slope classification from the signatures of proper subbundles.

    ``splitting`` optionally certifies a direct-sum decomposition into
    summands; a semistable bundle is reported polystable only if every
    summand has slope ``mu(E)``.
    """
    mu = total.slope
    sub_slopes = [Fraction(d, r) for r, d in admissible if 0 < r < total.rank]
    if any(s > mu for s in sub_slopes):
        return "unstable"
    if all(s < mu for s in sub_slopes):
        return "stable"
    if splitting is not None:
        if sum(b.rank for b in splitting) != total.rank or sum(b.degree for b in splitting) != total.degree:
            raise ValueError("splitting witness does not add up to the total type")
        if all(b.slope == mu for b in splitting):
            return "polystable"
    return "semistable"


def concave_filtrations(degrees: Sequence[int]) -> Iterator[FiltrationSpec]:
    """All concave filtrations of a split bundle by coordinate subbundles."""
    counts = Counter(int(d) for d in degrees)

    def rec(cnt: Counter, last: Fraction | None, acc: list[tuple[int, int]]):
        if not cnt:
            yield FiltrationSpec(acc)
            return
        for sub in _sub_multisets(cnt):
            r = sum(sub.values())
            if r == 0:
                continue
            mu = Fraction(sum(d * m for d, m in sub.items()), r)
            if last is not None and mu > last:
                continue
            acc.append((r, sum(d * m for d, m in sub.items())))
            yield from rec(cnt - sub, mu, acc)
            acc.pop()

    yield from rec(counts, None, [])
