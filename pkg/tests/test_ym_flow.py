import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ymgit.lattice_field import (
    GaugeTransform,
    TwistData,
    curvature,
    exp_action,
    grad_ym,
    l2_norm,
    make_split_connection,
    random_complex_gauge,
    random_connection,
    random_section,
    random_tangent,
    ym_energy,
    zero_connection,
)
from ymgit.lie_core import MatrixGroupSpec
from ymgit.ym_flow import (
    FlowConfig,
    OrbitTracker,
    flow_step,
    geodesic_distance,
    geodesic_monitor,
    lojasiewicz_fit,
    run_flow,
)

SU2 = MatrixGroupSpec(2, "SU")
U2 = MatrixGroupSpec(2, "U")


def semistable_start(N=8, seed=0, amplitude=0.5):
    rng = np.random.default_rng(seed)
    Z = zero_connection(N, SU2)
    return exp_action(random_complex_gauge(rng, Z, amplitude).log(), Z)


def test_config_validation():
    with pytest.raises(ValueError):
        FlowConfig(grad_tol=0.0)
    with pytest.raises(ValueError):
        FlowConfig(cfl_factor=1.0)
    with pytest.raises(ValueError):
        FlowConfig(dt_init=1.0).initial_dt(0.1)
    assert FlowConfig(dt_max=1e-5).dt_bound(0.1) == 1e-5


def test_step_at_yang_mills_point_is_trivial():
    A = make_split_connection((1, -1), 16, "SU")
    res = flow_step(A, FlowConfig().dt_bound(A.h))
    np.testing.assert_allclose(res.A.a, A.a, atol=1e-12)


@given(st.integers(0, 2**32 - 1), st.sampled_from([(0, 0), (1, -1), (1, 0)]))
def test_accepted_steps_decrease_energy(seed, twist):
    rng = np.random.default_rng(seed)
    A = random_connection(rng, 8, U2, TwistData(twist), 1.0)
    E = ym_energy(A)
    # deliberately too large a step: backtracking must find a descent step
    res = flow_step(A, 10 * FlowConfig().dt_bound(A.h))
    assert res.energy <= E
    np.testing.assert_allclose(res.F, curvature(res.A), atol=1e-12)


def test_first_order_energy_decrease():
    rng = np.random.default_rng(1)
    A = random_connection(rng, 16, U2, TwistData((1, 0)), 0.5)
    g = grad_ym(A)
    gn2 = l2_norm(g, A.h) ** 2
    for dt in (1e-6, 1e-7):
        res = flow_step(A, dt)
        assert res.halvings == 0
        assert (ym_energy(A) - res.energy) / (dt * gn2) == pytest.approx(1.0, abs=1e3 * dt + 1e-6)


def test_flow_converges_on_semistable_data():
    trace = run_flow(semistable_start(), FlowConfig(grad_tol=1e-4))
    assert trace.converged
    assert trace.energy_monotone()
    assert l2_norm(curvature(trace.final), trace.final.h) < 1e-3


def test_split_connection_converges_in_zero_steps():
    trace = run_flow(make_split_connection((2, -1, -1), 8, "SU"))
    assert trace.converged and trace.steps == 0


def test_max_steps_gives_unconverged_trace():
    trace = run_flow(semistable_start(), FlowConfig(max_steps=5, grad_tol=1e-12))
    assert not trace.converged
    assert trace.steps == 5
    assert trace.records[-1].step == 5


def test_trace_csv_columns():
    trace = run_flow(semistable_start(), FlowConfig(max_steps=20, record_every=10))
    lines = trace.to_csv().splitlines()
    assert lines[0] == "step,time,energy,grad_norm,mu_norm"
    assert [int(line.split(",")[0]) for line in lines[1:]] == [0, 10, 20]


def test_tracker_stays_identity_on_flat_start():
    A = zero_connection(8, SU2)
    trace = run_flow(A, FlowConfig(track=True))
    np.testing.assert_allclose(trace.tracker.g, np.broadcast_to(np.eye(2), trace.tracker.g.shape))


def test_tracker_residual_and_determinant():
    trace = run_flow(semistable_start(16, amplitude=0.2), FlowConfig(track=True, max_steps=400))
    tr = trace.tracker
    assert tr.max_residual < 5e-2
    assert max(d for _, d in tr.det_defects) < 1e-10


def test_tracker_exact_along_constant_curvature():
    # for a block-constant curvature the flow is stationary and g(t) = exp(i t *F) is central per block
    A = make_split_connection((1, 0), 8, "U")
    tr = OrbitTracker.start(A)
    F = curvature(A)
    tr.advance(F - (-1j * np.pi) * np.eye(2), 0.1)
    assert tr.residual(A) < 1e-12


def test_geodesic_distance_examples():
    rng = np.random.default_rng(2)
    A = zero_connection(8, SU2)
    g = random_complex_gauge(rng, A)
    assert geodesic_distance(g.values, g.values, A.h) < 1e-12
    eta0 = random_section(rng, A, 0.3, kind="hermitian") * 1j  # skew-hermitian eta
    g2 = GaugeTransform.exp(1j * eta0).values @ g.values
    assert geodesic_distance(g.values, g2, A.h) > 0


def test_geodesic_distance_from_identity():
    rng = np.random.default_rng(3)
    A = zero_connection(8, SU2)
    eta0 = 1j * random_section(rng, A, 0.3, kind="hermitian")
    g1 = np.broadcast_to(np.eye(2, dtype=complex), A.ax.shape).copy()
    g2 = GaugeTransform.exp(1j * eta0).values
    assert geodesic_distance(g1, g2, A.h) == pytest.approx(l2_norm(eta0, A.h), rel=1e-10)


def test_geodesic_monitor_identical_starts():
    rng = np.random.default_rng(4)
    A = zero_connection(8, SU2)
    g = random_complex_gauge(rng, A, 0.3)
    mon = geodesic_monitor(A, g, g, steps=20, record_every=5)
    assert max(mon.rho) < 1e-12


def test_lojasiewicz_fit():
    # abelian flow: linear heat equation around a non-degenerate minimum
    rng = np.random.default_rng(5)
    A = make_split_connection((1,), 8)
    A = A + random_tangent(rng, A, 0.5)
    trace = run_flow(A, FlowConfig(grad_tol=1e-9, record_every=5))
    fit = lojasiewicz_fit(trace, limit_energy=2 * np.pi**2)
    assert 0.4 <= fit.gamma <= 0.6
    assert np.all(np.diff(trace.energies) <= 0)
    with pytest.raises(ValueError):
        lojasiewicz_fit(run_flow(semistable_start(), FlowConfig(max_steps=3, grad_tol=1e-12)))
