import math

import numpy as np
import pytest

from shrinkerlab.examples import circle, great_circle, line_patch, product_torus
from shrinkerlab.flow import (
    FlowError,
    FlowState,
    convergence_monitor,
    estimate_singular_time,
    mcf_step,
    monitor_csv,
    rescale,
    run_to_singularity,
    stability_bound,
)

SQRT2 = math.sqrt(2.0)


@pytest.fixture(scope="module")
def sqrt2_run():
    return run_to_singularity(FlowState(circle(SQRT2, 32)), sample_every=50)


def test_circle_radius_follows_the_circle_law():
    r0 = 1.3
    s = FlowState(circle(r0, 64))
    for _ in range(200):
        s = mcf_step(s, stability_bound(s.immersion))
    r = np.linalg.norm(s.immersion.points, axis=-1)
    assert np.max(np.abs(r - math.sqrt(r0**2 - 2 * s.t))) < 1e-4


def test_product_torus_factors_shrink_independently():
    s = FlowState(product_torus((1.2, 1.6), n=32))
    for _ in range(60):
        s = mcf_step(s, stability_bound(s.immersion))
    P = s.immersion.points
    for k, r0 in ((0, 1.2), (2, 1.6)):
        r = np.linalg.norm(P[..., k:k + 2], axis=-1)
        assert np.max(np.abs(r - math.sqrt(r0**2 - 2 * s.t))) < 1e-4


def test_stationary_line_is_unchanged():
    F = line_patch(64)
    s = mcf_step(FlowState(F), 0.5 * stability_bound(F))
    assert np.max(np.abs(s.immersion.points - F.points)) < 1e-14


def test_step_above_bound_is_rejected():
    F = circle(1.0, 64)
    with pytest.raises(FlowError):
        mcf_step(FlowState(F), 1.01 * stability_bound(F))


def test_sphere_background_is_rejected():
    with pytest.raises(FlowError):
        mcf_step(FlowState(great_circle(32)), 1e-6)


def test_singular_time_of_sqrt2_circle(sqrt2_run):
    run = sqrt2_run
    assert run.T_est == pytest.approx(1.0, abs=1e-3)
    assert run.monitor[-1].type_one == pytest.approx(1 / SQRT2, abs=1e-2)
    assert run.states[0].t == 0.0
    assert all(st.T_est == run.T_est for st in run.states)


def test_rescaled_sqrt2_circle_stays_at_the_floor(sqrt2_run):
    series = convergence_monitor(sqrt2_run.states, sqrt2_run.T_est)
    assert len(series) == len(sqrt2_run.states)
    assert max(v for _, v in series) < 1e-3


def test_rescaled_circle_from_radius_1_3_converges():
    run = run_to_singularity(FlowState(circle(1.3, 32)), sample_every=50)
    assert run.T_est == pytest.approx(1.3**2 / 2, abs=1e-2)
    series = convergence_monitor(run.states, run.T_est)
    assert min(v for _, v in series) < 1e-3


def test_radius_two_singular_time():
    run = run_to_singularity(FlowState(circle(2.0, 32)), sample_every=200)
    assert run.T_est == pytest.approx(2.0, abs=1e-2)


def test_rescale_examples():
    T, t = 1.7, 0.4
    F = circle(math.sqrt(2 * (T - t)), 64)
    G = rescale(FlowState(F, t=t), T)
    assert np.max(np.abs(np.linalg.norm(G.points, axis=-1) - SQRT2)) < 1e-14
    H = rescale(FlowState(F), 1.0)
    assert np.array_equal(H.points, F.points)
    r = math.sqrt(2 * (T - t))
    tor = rescale(FlowState(product_torus((r, r), n=16), t=t), T)
    ref = product_torus(n=16)
    assert np.max(np.abs(tor.points - ref.points)) < 1e-14
    with pytest.raises(FlowError):
        rescale(FlowState(F, t=2.0), 1.0)


def test_singular_time_fit_on_exact_law():
    T = 0.8
    ts = np.linspace(0, 0.79, 400)
    A = 1.0 / np.sqrt(2 * (T - ts))
    assert estimate_singular_time(ts, A) == pytest.approx(T, abs=1e-9)


def test_stop_threshold_must_exceed_initial_curvature():
    with pytest.raises(FlowError):
        run_to_singularity(FlowState(circle(1.0, 32)), stop_A=0.5)


def test_volume_decreases_and_csv(sqrt2_run):
    vols = [v for _, v in sqrt2_run.volumes]
    assert all(b <= a for a, b in zip(vols, vols[1:]))
    text = monitor_csv(sqrt2_run)
    lines = text.splitlines()
    assert lines[0] == "t,maxA,typeI,rescaled_residual"
    assert len(lines) == len(sqrt2_run.monitor) + 1
