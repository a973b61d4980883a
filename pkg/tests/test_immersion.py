import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from shrinkerlab.background import SolitonBackground
from shrinkerlab.examples import (
    circle,
    great_circle,
    perturbed,
    plane_patch,
    product_torus,
    random_lagrangian_torus,
    rotated,
    unitary_matrix,
)
from shrinkerlab.immersion import (
    DegenerateImmersionError,
    Immersion,
    ImmersionFileError,
    ParamGrid,
    conformal_mean_curvature,
    divergence_laplacian,
    gauss_consistency,
    gauss_ricci_pair,
    integrate,
    lagrangian_defect_norm,
    read_immersion,
    self_similar_residual,
    write_immersion,
)

SQRT2 = math.sqrt(2.0)


@pytest.mark.parametrize("r", [0.7, 1.3, SQRT2, 2.5])
def test_circle_mean_curvature_is_inward_with_size_one_over_r(r):
    F = circle(r, 512)
    H = F.geometry.mean_curvature
    assert np.max(np.abs(np.linalg.norm(H, axis=-1) - 1.0 / r)) < 1e-6
    # inward: H = -x / r^2
    assert np.max(np.abs(H + F.points / r**2)) < 1e-6


def test_clifford_second_fundamental_form_and_flat_metric(clifford):
    geo = clifford.geometry
    # fourth-order truncation gives 1.03e-5 at 64^2; see ledger
    assert np.max(np.abs(geo.A_norm_sq - 1.0)) < 1.1e-5
    assert np.max(np.abs(geo.intrinsic_ricci)) < 1e-5
    fine = product_torus(n=128).geometry
    assert np.max(np.abs(fine.A_norm_sq - 1.0)) < np.max(np.abs(geo.A_norm_sq - 1.0)) / 8


def test_plane_patch_is_totally_geodesic():
    geo = plane_patch(32).geometry
    assert np.max(np.abs(geo.second_fundamental)) < 1e-12
    assert np.max(np.abs(geo.mean_curvature)) < 1e-12


def test_lagrangian_defect_examples(clifford):
    assert lagrangian_defect_norm(circle(1.3, 64)) == 0.0
    assert lagrangian_defect_norm(clifford) < 1e-10
    assert lagrangian_defect_norm(rotated(clifford, unitary_matrix(2, 5))) < 1e-10


def test_generic_surface_is_not_lagrangian():
    grid = ParamGrid((32, 32))
    t1, t2 = np.moveaxis(grid.coords(), -1, 0)
    # torus in the (x1, y1, x2) subspace: tangents span a symplectic pair
    R, r = 2.0, 0.7
    pts = np.stack([(R + r * np.cos(t2)) * np.cos(t1), (R + r * np.cos(t2)) * np.sin(t1),
                    r * np.sin(t2), np.zeros_like(t1)], axis=-1)
    F = Immersion(grid, pts, SolitonBackground.flat(2))
    assert lagrangian_defect_norm(F) > 0.1


def test_self_similar_residual_examples(circle_sqrt2):
    assert self_similar_residual(circle_sqrt2, -0.5).sup_norm < 1e-6
    assert abs(self_similar_residual(circle(1.0, 512), -0.5).sup_norm - 0.5) < 1e-6
    G = great_circle(256, tilt=0.3)
    for lam in (-0.5, 0.0, 1.0, 3.0):
        res = self_similar_residual(G, lam)
        assert np.array_equal(res.field, G.extrinsic.mean_curvature)
        assert res.sup_norm < 1e-6


def test_l2_norm_of_constant_residual():
    F = circle(1.0, 256)
    res = self_similar_residual(F, -0.5)
    # |res| = 1/2 on a circle of length 2 pi
    assert res.l2_norm == pytest.approx(0.5 * math.sqrt(2 * math.pi), rel=1e-6)


def test_conformal_mean_curvature_examples(circle_sqrt2, clifford):
    assert conformal_mean_curvature(circle_sqrt2, -0.5) < 1e-6
    assert conformal_mean_curvature(circle(1.0, 512), -0.5) > 0.1
    for F in (circle(1.0, 128), clifford, random_lagrangian_torus(3, 32)):
        H = F.extrinsic.mean_curvature
        assert conformal_mean_curvature(F, 0.0) == pytest.approx(float(np.max(np.linalg.norm(H, axis=-1))),
                                                                 rel=1e-14)


def test_gauss_consistency_refines(clifford):
    assert gauss_consistency(clifford) < 1e-4
    # product tori are consistent to rounding; a generic normal perturbation is not
    coarse = gauss_consistency(perturbed(product_torus(n=32), 0.05, 3, seed=1))
    fine = gauss_consistency(perturbed(product_torus(n=64), 0.05, 3, seed=1))
    assert fine < coarse / 3.5
    assert gauss_consistency(plane_patch(32)) < 1e-12
    assert gauss_consistency(circle(1.0, 64)) == 0.0


def test_gauss_pair_does_not_depend_on_frame():
    F = random_lagrangian_torus(11, 32)
    d0, g0 = gauss_ricci_pair(F)
    d1, g1 = gauss_ricci_pair(F, frame_rotation=0.7)
    assert np.max(np.abs(d0 - d1)) == 0.0
    assert np.max(np.abs(g0 - g1)) < 1e-12


def test_conservative_laplacian_integrates_to_zero():
    F = random_lagrangian_torus(2, 32)
    u = np.cos(F.grid.coords()[..., 0]) * np.sin(2 * F.grid.coords()[..., 1]) + F.potential()
    assert abs(integrate(F, divergence_laplacian(F, u))) < 1e-12


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10_000), torus_seed=st.integers(0, 50))
def test_unitary_equivariance(seed, torus_seed):
    F = random_lagrangian_torus(torus_seed, 24, rotate=False)
    G = rotated(F, unitary_matrix(2, seed))
    a, b = F.geometry, G.geometry
    assert np.max(np.abs(a.A_norm_sq - b.A_norm_sq)) < 1e-9
    assert np.max(np.abs(np.linalg.norm(a.mean_curvature, axis=-1)
                         - np.linalg.norm(b.mean_curvature, axis=-1))) < 1e-9
    assert lagrangian_defect_norm(G) < 1e-10
    # f is unitarily invariant, so the shrinker residual is too
    assert abs(self_similar_residual(F, -0.5).sup_norm - self_similar_residual(G, -0.5).sup_norm) < 1e-9


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_tangent_normal_split(seed):
    F = random_lagrangian_torus(seed % 40, 24)
    geo = F.extrinsic
    v = np.random.default_rng(seed).normal(size=F.points.shape)
    top, perp = geo.top(v), geo.perp(v)
    assert np.max(np.abs(top + perp - v)) < 1e-12
    assert np.max(np.abs(np.einsum("...a,...a->...", top, perp))) < 1e-10
    # H is normal
    assert np.max(np.abs(geo.top(geo.mean_curvature))) < 1e-10


def test_file_round_trip(tmp_path, clifford):
    for F in (circle(1.3, 64), clifford, great_circle(64, f0=0.5)):
        path = tmp_path / "x.imm"
        write_immersion(F, path)
        G = read_immersion(path)
        assert G.grid == F.grid
        assert G.background.ident == F.background.ident
        assert np.array_equal(G.points, F.points)


@pytest.mark.parametrize(
    "text",
    [
        "",
        "m=1\ngrid=16\n",
        "m=x\ngrid=16\nbackground=flat:1\n",
        "m=2\ngrid=16\nbackground=flat:2\n",
        "m=1\ngrid=16\nbackground=flat:1\n" + "0 1\n" * 16,
        "m=1\ngrid=16\nbackground=flat:1\n" + "0 1 nan-ish\n" * 16,
        "m=1\nsize=16\nbackground=flat:1\n" + "0 1 0\n" * 16,
    ],
)
def test_malformed_files_are_rejected(tmp_path, text):
    path = tmp_path / "bad.imm"
    path.write_text(text)
    with pytest.raises(ImmersionFileError):
        read_immersion(path)


def test_construction_errors():
    with pytest.raises(ValueError):
        ParamGrid((8,))
    with pytest.raises(ValueError):
        Immersion(ParamGrid((16,)), np.zeros((16, 4)), SolitonBackground.flat(2))
    with pytest.raises(ValueError):
        Immersion(ParamGrid((16,)), np.zeros((16, 3)), SolitonBackground.sphere())
    with pytest.raises(DegenerateImmersionError):
        Immersion(ParamGrid((16,)), np.full((16, 2), np.nan), SolitonBackground.flat(1))
    collapsed = Immersion(ParamGrid((16,)), np.zeros((16, 2)), SolitonBackground.flat(1))
    with pytest.raises(DegenerateImmersionError):
        collapsed.geometry


def test_points_are_read_only(clifford):
    with pytest.raises(ValueError):
        clifford.points[0, 0, 0] = 1.0
