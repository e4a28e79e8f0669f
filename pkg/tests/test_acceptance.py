"""Acceptance suite: one test (and one PASS/FAIL summary line) per criterion.

Run with ``pytest tests/test_acceptance.py -v``; the per-criterion lines are
printed in the terminal summary.  The file can also be executed directly.
"""

from __future__ import annotations

import itertools
import math
import sys
import time

import numpy as np
import pytest

from oracles import ellipsoid_minimum, hn_types
from ymgit.bundle_hn import (
    concave_filtrations,
    dominant_weight,
    dominates,
    hn_split,
    is_concave,
    squared_norm,
    weight_of_filtration,
)
from ymgit.lattice_field import (
    GaugeTransform,
    TwistData,
    exp_action,
    grad_ym,
    l2_norm,
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
from ymgit.lie_core import (
    MatrixGroupSpec,
    chamber_coordinates,
    conjugation_orbit_bounded,
    dual_basis_defect,
    levi_membership,
    parabolic_membership,
    roots_type_A,
)
from ymgit.stability_classifier import dominant_direction, levi_gauge, stable_example, uniqueness_experiment
from ymgit.weights_kn import (
    kempf_ness_value,
    kn_cocycle_check,
    kn_path_values,
    mw_check,
    second_differences,
)
from ymgit.ym_flow import FlowConfig, geodesic_monitor, run_flow

SU2 = MatrixGroupSpec(2, "SU")
U2 = MatrixGroupSpec(2, "U")


def _random_instance(rng: np.random.Generator, N: int):
    """Random rank-2 connection over one of a few bundle types."""
    group, twist = [(SU2, (0, 0)), (SU2, (1, -1)), (U2, (1, 0)), (U2, (2, -1))][rng.integers(4)]
    return random_connection(rng, N, group, TwistData(twist), amplitude=1.0)


# ---------------------------------------------------------------------------
# 1. HN exactness


def test_hn_exactness(acceptance):
    t0 = time.perf_counter()
    bundles = filtrations = 0
    failures = []
    for rank in range(1, 6):
        for degrees in itertools.combinations_with_replacement(range(-5, 6), rank):
            hn = hn_split(degrees)
            bundles += 1
            if not is_concave(hn):
                failures.append((degrees, "not concave"))
            best = squared_norm(hn)
            for f in concave_filtrations(degrees):
                filtrations += 1
                c = dominates(hn, f)
                if c not in (">=", "equal"):
                    failures.append((degrees, f.blocks, "not dominated"))
                elif c == "equal" and squared_norm(f) != best:
                    failures.append((degrees, f.blocks, "equal polygon, different norm"))
                elif c != "equal" and not squared_norm(f) < best:
                    failures.append((degrees, f.blocks, "norm not strictly smaller"))
    elapsed = time.perf_counter() - t0
    ok = not failures and elapsed < 30.0
    acceptance(
        1, ok, f"{bundles} bundles, {filtrations} concave filtrations, {len(failures)} failures, {elapsed:.1f} s (< 30 s)"
    )
    assert not failures, failures[:5]
    assert elapsed < 30.0


# ---------------------------------------------------------------------------
# 2. dominant weight


def test_dominant_weight_formula(acceptance):
    t0 = time.perf_counter()
    lam_err = w_err = 0.0
    count = 0
    for hn in hn_types(4, range(-3, 4), 4):
        ranks = [n for n, _ in hn.blocks]
        degrees = [k for _, k in hn.blocks]
        dw = dominant_weight(hn)
        x, _ = ellipsoid_minimum(ranks, degrees)
        lam_err = max(lam_err, float(np.max(np.abs(x - dw.lambdas))))
        rk, mu = sum(ranks), sum(degrees) / sum(ranks)
        closed = 2 * math.pi * math.sqrt(sum(k * k / n for n, k in hn.blocks) - rk * mu * mu)
        w = weight_of_filtration(hn, dw.lambdas, tau=-2j * math.pi * mu)
        w_err = max(w_err, abs(-w - closed) / closed, abs(dw.norm - closed) / closed)
        count += 1
    elapsed = time.perf_counter() - t0
    ok = lam_err < 1e-6 and w_err < 1e-12 and elapsed < 10.0
    acceptance(
        2, ok,
        f"{count} HN types, max |lambda - oracle| = {lam_err:.1e} (< 1e-6), "
        f"max rel |w| error = {w_err:.1e} (< 1e-12), {elapsed:.1f} s (< 10 s)",
    )
    assert lam_err < 1e-6
    assert w_err < 1e-12
    assert elapsed < 10.0


# ---------------------------------------------------------------------------
# 3. gradient


def test_gradient_correctness(acceptance):
    rng = np.random.default_rng(3)
    worst = 0.0
    eps = 1e-5
    for _ in range(50):
        A = _random_instance(rng, 16)
        a = random_tangent(rng, A)
        fd = (ym_energy(A + eps * a) - ym_energy(A + (-eps) * a)) / (2 * eps)
        worst = max(worst, abs(pair(grad_ym(A), a, A.h) - fd) / abs(fd))
    acceptance(3, worst < 1e-6, f"50 instances at N=16, max relative error = {worst:.1e} (< 1e-6)")
    assert worst < 1e-6


# ---------------------------------------------------------------------------
# 4. moment map


def test_moment_map_identity(acceptance):
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(50):
        A = _random_instance(rng, 16)
        worst = max(worst, moment_pairing_check(A, random_tangent(rng, A), random_section(rng, A)).gap)
    acceptance(4, worst < 1e-6, f"50 instances at N=16, max relative gap = {worst:.1e} (< 1e-6)")
    assert worst < 1e-6


# ---------------------------------------------------------------------------
# 5. flow on semistable data


def test_flow_semistable(acceptance):
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    Z = zero_connection(32, SU2)
    A0 = exp_action(random_complex_gauge(rng, Z, 0.5).log(), Z)
    trace = run_flow(A0, FlowConfig(grad_tol=1e-12, max_steps=100_000, record_every=1000))
    elapsed = time.perf_counter() - t0
    mu = trace.records[-1].mu_norm
    mono = trace.energy_monotone()
    ok = mu < 1e-5 and mono and elapsed < 120.0
    acceptance(
        5, ok,
        f"N=32, {trace.steps} steps: |*F| = {mu:.2e} (< 1e-5), energy monotone = {mono}, {elapsed:.0f} s (< 120 s)",
    )
    assert mono
    assert mu < 1e-5
    assert elapsed < 120.0


# ---------------------------------------------------------------------------
# 6. unstable benchmark


def test_unstable_benchmark(acceptance):
    t0 = time.perf_counter()
    rng = np.random.default_rng(6)
    details, ok = [], True
    for d in (1, 2):
        split = make_split_connection((d, -d), 64, "SU")
        A0 = exp_action(levi_gauge(rng, split, 0.5).log(), split)
        trace = run_flow(A0, FlowConfig(track=True))
        e_target = 4 * math.pi**2 * d * d
        e_err = abs(trace.final_energy / e_target - 1)
        dd = dominant_direction(A0, trace)
        n_target = 2 * math.pi * math.sqrt(2) * d
        n_err = abs(dd.norm / n_target - 1)
        gauges = [random_complex_gauge(rng, A0, 0.5) for _ in range(100)]
        rep = mw_check(A0, dd.xi_initial, trace.tau, gauges, trace.final, slack=1e-6, w=dd.weight)
        ok &= e_err < 0.02 and n_err < 0.02 and rep.ok
        details.append(f"d={d}: energy err {e_err:.1e}, |xi| err {n_err:.1e}, mw violations {rep.violations}")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 600.0
    acceptance(6, ok, "N=64, " + "; ".join(details) + f" (tol 2%); {elapsed:.0f} s (< 600 s)")
    assert ok


# ---------------------------------------------------------------------------
# 7. uniqueness of the limit


def test_uniqueness(acceptance):
    rng = np.random.default_rng(7)
    flow = FlowConfig(grad_tol=1e-6, max_steps=20_000)
    cases = [
        ("stable (1,0)+pert", stable_example(32, rng), "general"),
        ("split (1,-1)", make_split_connection((1, -1), 32, "SU"), "levi"),
        ("flat SU(2)", zero_connection(32, SU2), "general"),
    ]
    details, ok = [], True
    for name, A0, gauge in cases:
        rep = uniqueness_experiment(A0, 3, rng, flow=flow, gauge=gauge, tol=1e-3)
        ok &= rep.ok
        details.append(f"{name}: spectra gap {rep.spectra_gap:.1e}, energy gap {rep.energy_gap:.1e}")
    acceptance(7, ok, "N=32, 3 trials each; " + "; ".join(details) + " (< 1e-3)")
    assert ok


# ---------------------------------------------------------------------------
# 8. Kempf-Ness functional


def _constant_gauge(rng, A, scale=0.4):
    m = scale * (rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2)))
    m -= np.trace(m) / 2 * np.eye(2)
    return GaugeTransform.exp(np.broadcast_to(m, A.ax.shape).copy(), unitary=False)


def test_kempf_ness_suite(acceptance):
    rng = np.random.default_rng(8)
    # convexity along geodesics
    convex = math.inf
    for _ in range(5):
        A = random_connection(rng, 16, SU2, TwistData((1, -1)), 0.5)
        xi = random_section(rng, A, 0.5)
        vals = kn_path_values(A, xi, np.linspace(0.1, 1.5, 15), panels_per_unit=8)
        convex = min(convex, float(np.min(second_differences(vals))))
    # cocycle for general (position-dependent) gauges
    cocycle = 0.0
    for _ in range(3):
        A = random_connection(rng, 16, SU2, amplitude=0.5)
        g, h = random_complex_gauge(rng, A, 0.3), random_complex_gauge(rng, A, 0.3)
        cocycle = max(cocycle, kn_cocycle_check(A, g, h, quad_n=256).relative_gap)
    # the same identity for constant gauges (diagnostic only)
    A = random_connection(rng, 16, SU2, amplitude=0.5)
    constant = kn_cocycle_check(A, _constant_gauge(rng, A), _constant_gauge(rng, A), quad_n=256).relative_gap
    # derivative at a connection with *F = tau vanishes
    critical = 0.0
    for degrees in ((1, 1), (0, 0), (2, 2)):
        A = make_split_connection(degrees, 16, "U")
        tau = -2j * math.pi * degrees[0]
        kn = kempf_ness_value(A, random_section(rng, A), tau=tau, quad_n=16)
        critical = max(critical, abs(kn.first_derivative))
    ok = convex >= -1e-8 and cocycle < 1e-5 and critical < 1e-8
    acceptance(
        8, ok,
        f"N=16: min second difference {convex:.1e} (>= -1e-8); cocycle gap {cocycle:.1e} (< 1e-5; "
        f"constant gauges {constant:.1e}); critical derivative {critical:.1e} (< 1e-8)",
    )
    assert convex >= -1e-8
    assert critical < 1e-8
    assert cocycle < 1e-5


# ---------------------------------------------------------------------------
# 9. contraction of the Kempf-Ness flow


def test_kn_flow_contraction(acceptance):
    rng = np.random.default_rng(9)
    A0 = zero_connection(16, SU2)
    worst, monotone = 0.0, 0
    for _ in range(5):
        g1, g2 = random_complex_gauge(rng, A0, 0.5), random_complex_gauge(rng, A0, 0.5)
        mon = geodesic_monitor(A0, g1, g2, steps=10_000, record_every=100)
        worst = max(worst, mon.max_increase / mon.rho[0])
        monotone += mon.monotone
    ok = monotone == 5
    acceptance(
        9, ok, f"N=16, 1e4 steps, {monotone}/5 pairs non-increasing; worst rise {worst:.1e} rho(0) (slack 1e-6 rho(0))"
    )
    assert ok


# ---------------------------------------------------------------------------
# 10. Lie-theoretic suite


def _random_unitary(rng, n):
    q, r = np.linalg.qr(rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)))
    return q * (np.diag(r) / np.abs(np.diag(r)))


def _sample_pair(rng, n):
    """``(g, xi)`` with ``g`` block upper triangular for ``xi`` about half the time, in a random frame."""
    vals = np.sort(rng.choice([-0.4, 0.0, 0.4], size=n))
    g = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)) + 2 * np.eye(n)
    lower = vals[:, None] > vals[None, :]
    if rng.random() < 0.5:
        g[lower] = 0.0
    elif lower.any():
        # keep the below-block part clearly nonzero
        idx = tuple(np.argwhere(lower)[rng.integers(lower.sum())])
        g[idx] = 1.0 + abs(g[idx])
    u = _random_unitary(rng, n)
    xi = u @ (-1j * np.diag(vals)) @ u.conj().T
    return u @ g @ u.conj().T, 0.5 * (xi - xi.conj().T)


def test_lie_suite(acceptance):
    rng = np.random.default_rng(10)
    dual_exact = all(all(v == 0 for row in dual_basis_defect(roots_type_A(n)) for v in row) for n in range(2, 9))
    agree = levi_ok = 0
    for _ in range(1000):
        g, xi = _sample_pair(rng, int(rng.integers(2, 6)))
        par = parabolic_membership(g, xi)
        agree += par == conjugation_orbit_bounded(g, xi, t_max=50.0, threshold=1e6)
        levi_ok += (not levi_membership(g, xi)) or par
    chamber = 0
    for _ in range(100):
        n = int(rng.integers(2, 6))
        rd = roots_type_A(n)
        g, xi = _sample_pair(rng, n)
        cc = chamber_coordinates(xi, rd)
        gb = cc.conjugator @ g @ cc.conjugator.conj().T
        xb = cc.conjugator @ xi @ cc.conjugator.conj().T
        parts = [parabolic_membership(gb, rd.as_matrix(dv)) for x, dv in zip(cc.coeffs, rd.dual_basis) if x > 1e-9]
        chamber += parabolic_membership(gb, xb) == all(parts)
    ok = dual_exact and agree == 1000 and levi_ok == 1000 and chamber == 100
    acceptance(
        10, ok,
        f"dual basis exact (n=2..8) = {dual_exact}; parabolic == bounded on {agree}/1000; "
        f"Levi => parabolic on {levi_ok}/1000; Q(xi) = cap Q(t_j) on {chamber}/100",
    )
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
