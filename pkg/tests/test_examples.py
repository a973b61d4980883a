import math

import numpy as np
import pytest

from shrinkerlab.examples import (
    ExampleSpec,
    al_times_circle,
    check_window,
    circle,
    make,
    product_torus,
    random_lagrangian_torus,
    rotated,
    shoot_abresch_langer,
    smooth_noise,
    unitary_matrix,
)
from shrinkerlab.immersion import lagrangian_defect_norm, self_similar_residual

SQRT2 = math.sqrt(2.0)


def test_circle_spec_is_a_shrinker():
    F = make(ExampleSpec("circle", {"r": SQRT2}, (512,)))
    assert self_similar_residual(F, -0.5).sup_norm < 1e-6


def test_clifford_spec():
    F = make(ExampleSpec("product-torus", {"radii": (SQRT2, SQRT2)}, (64, 64)))
    assert lagrangian_defect_norm(F) < 1e-10
    assert np.max(np.abs(F.potential() - 2.0)) < 1e-13


def test_rotation_preserves_invariant_scalars(clifford):
    G = make(ExampleSpec("rotated", {"base": clifford}, (64, 64), seed=4))
    for a, b in ((clifford.geometry.A_norm_sq, G.geometry.A_norm_sq),
                 (clifford.potential(), G.potential())):
        assert np.max(np.abs(a - b)) < 1e-12
    assert lagrangian_defect_norm(G) < 1e-10


def test_unitary_matrix_is_complex_linear_and_orthogonal():
    M = unitary_matrix(2, 9)
    J = np.kron(np.eye(2), np.array([[0.0, -1.0], [1.0, 0.0]]))
    assert np.max(np.abs(M.T @ M - np.eye(4))) < 1e-13
    assert np.max(np.abs(M @ J - J @ M)) < 1e-13


def test_generators_are_deterministic():
    a = random_lagrangian_torus(7, 32)
    b = random_lagrangian_torus(7, 32)
    assert np.array_equal(a.points, b.points)
    assert not np.array_equal(a.points, random_lagrangian_torus(8, 32).points)
    c1 = circle(1.7, 128, noise=0.05, seed=3)
    c2 = make(ExampleSpec("circle", {"r": 1.7, "noise": 0.05}, (128,), seed=3))
    assert np.array_equal(c1.points, c2.points)


def test_smooth_noise_amplitude():
    th = np.linspace(0, 2 * math.pi, 200, endpoint=False)
    w = smooth_noise(th, 0.05, seed=1)
    assert np.max(np.abs(w)) == pytest.approx(0.05, rel=1e-12)
    assert not np.any(smooth_noise(th, 0.0, seed=1))


def test_random_tori_are_lagrangian():
    for seed in range(5):
        assert lagrangian_defect_norm(random_lagrangian_torus(seed, 32)) < 1e-10


def test_abresch_langer_2_3(al_curve):
    F = al_curve
    assert self_similar_residual(F, -0.5).sup_norm < 1e-5
    f = F.potential()
    assert np.ptp(f) > 0.1


def test_abresch_langer_closes_with_three_lobes():
    F, info = shoot_abresch_langer(2, 3, 1024)
    assert info["closure_gap"] < 1e-10
    r = np.linalg.norm(F.points, axis=-1)
    # the radial maxima are the three lobes
    peaks = np.count_nonzero((r > np.roll(r, 1)) & (r > np.roll(r, -1)))
    assert peaks == 3
    assert info["r_max"] > SQRT2
    # total turning of the tangent is 2 pi p
    T = np.diff(np.vstack([F.points, F.points[:1]]), axis=0)
    ang = np.unwrap(np.arctan2(T[:, 1], T[:, 0]))
    turning = ang[-1] - ang[0] + (np.arctan2(T[0, 1], T[0, 0]) - np.arctan2(T[-1, 1], T[-1, 0])) % (2 * math.pi)
    assert turning == pytest.approx(4 * math.pi, abs=0.1)


@pytest.mark.parametrize("p,q", [(1, 1), (1, 2), (3, 4), (2, 4), (0, 3), (5, 7)])
def test_window_violations(p, q):
    with pytest.raises(ValueError):
        check_window(p, q)


def test_window_accepts_3_5():
    check_window(3, 5)


def test_al_times_circle_is_lagrangian_shrinker():
    F = al_times_circle(2, 3, 512, 32)
    assert lagrangian_defect_norm(F) < 1e-10
    assert self_similar_residual(F, -0.5).sup_norm < 1e-3
    assert np.ptp(F.potential()) > 0.1


def test_product_torus_scalar_size():
    assert product_torus(n=32).grid.sizes == (32, 32)
    assert product_torus(n=(32, 48)).grid.sizes == (32, 48)


def test_rotation_rejected_on_sphere():
    from shrinkerlab.examples import great_circle

    with pytest.raises(ValueError):
        rotated(great_circle(32), np.eye(3))


def test_unknown_kind():
    with pytest.raises(ValueError):
        make(ExampleSpec("trefoil"))
