"""Independent numerical oracles used by the acceptance suite."""

from __future__ import annotations

import itertools

import numpy as np


def _sphere_points(angles: np.ndarray) -> np.ndarray:
    """Hyperspherical coordinates: ``(..., r-1)`` angles to unit vectors in ``R^r``."""
    r = angles.shape[-1] + 1
    out = np.ones(angles.shape[:-1] + (r,))
    for k in range(r - 1):
        out[..., k] *= np.cos(angles[..., k])
        out[..., k + 1 :] *= np.sin(angles[..., k])[..., None]
    return out


def ellipsoid_minimum(ranks, degrees, grid: int = 48, rounds: int = 60, local: int = 7, shrink: float = 0.35):
    """Minimise ``f(x) = sum_j x_j (k_j - n_j mu)`` on ``sum_j n_j x_j^2 = 1`` by grid search and refinement.

    Parametrises ``y_j = sqrt(n_j) x_j`` on the unit sphere with angles, scans a
    coarse grid, then repeatedly rescans a shrinking grid around the best point.
    Returns ``(x, f(x))``.
    """
    n = np.asarray(ranks, dtype=float)
    k = np.asarray(degrees, dtype=float)
    mu = k.sum() / n.sum()
    c = (k - n * mu) / np.sqrt(n)  # f = <c, y>
    r = len(n)
    if r == 1:
        return np.array([1.0 / np.sqrt(n[0])]), float(c[0])
    # angles: the first r-2 in [0, pi], the last in [0, 2 pi)
    hi = np.array([np.pi] * (r - 2) + [2 * np.pi])
    axes = [np.linspace(0, h, grid, endpoint=(j < r - 2)) for j, h in enumerate(hi)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, r - 1)
    vals = _sphere_points(pts) @ c
    best = pts[np.argmin(vals)]
    step = hi / grid
    offsets = np.stack(
        np.meshgrid(*[np.linspace(-1, 1, local)] * (r - 1), indexing="ij"), axis=-1
    ).reshape(-1, r - 1)
    for _ in range(rounds):
        cand = best + offsets * step
        vals = _sphere_points(cand) @ c
        best = cand[np.argmin(vals)]
        step = step * shrink
    y = _sphere_points(best)
    return y / np.sqrt(n), float(y @ c)


def hn_types(max_rank: int, degree_range: range, max_blocks: int):
    """Distinct HN types (as block tuples) of split bundles with at least two blocks."""
    from ymgit.bundle_hn import hn_split

    seen = set()
    for r in range(2, max_rank + 1):
        for degs in itertools.combinations_with_replacement(degree_range, r):
            hn = hn_split(degs)
            if 2 <= len(hn) <= max_blocks and hn.blocks not in seen:
                seen.add(hn.blocks)
                yield hn
