import math

import numpy as np
import pytest

from shrinkerlab.examples import al_times_circle, circle, great_circle, product_torus, random_lagrangian_torus
from shrinkerlab.spectral import (
    assemble_drift,
    bakry_emery,
    diameter,
    diameter_bound,
    diameter_bound_audit,
    eigen_identity_check,
    fll_sup,
    fll_value,
    kappa_bound,
    spectrum,
)

SQRT2 = math.sqrt(2.0)


def test_circle_spectrum_matches_closed_form(circle_sqrt2):
    vals = spectrum(assemble_drift(circle_sqrt2), k=9).eigenvalues
    expected = [0.0] + [k * k / 2 for k in (1, 1, 2, 2, 3, 3, 4, 4)]
    assert np.max(np.abs(vals - expected)) < 1e-4


def test_clifford_spectrum_is_sum_of_factor_spectra():
    vals = spectrum(assemble_drift(product_torus(n=48)), k=10).eigenvalues
    # (j^2 + k^2) / 2 with multiplicities 1, 4, 4, 4
    expected = [0.0] + [0.5] * 4 + [1.0] * 4 + [2.0]
    assert np.max(np.abs(vals - expected)) < 1e-3


def test_constants_are_in_the_kernel():
    for F in (random_lagrangian_torus(5, 24), circle(1.1, 64, noise=0.05), great_circle(64, tilt=0.2)):
        op = assemble_drift(F)
        assert np.max(np.abs(op.apply(np.full(F.grid.sizes, 3.0)))) < 1e-10


def test_operator_is_symmetric_and_nonnegative():
    F = random_lagrangian_torus(6, 24)
    op = assemble_drift(F)
    assert op.symmetric
    rng = np.random.default_rng(0)
    u, v = rng.normal(size=(2,) + F.grid.sizes)
    a = op.inner(op.apply(u), v)
    b = op.inner(u, op.apply(v))
    assert a == pytest.approx(b, rel=1e-10)
    assert op.inner(-op.apply(u), u) >= 0.0
    vals = spectrum(op, k=6).eigenvalues
    assert vals[0] == pytest.approx(0.0, abs=1e-10)
    assert np.all(vals[1:] > 0)


def test_spectrum_k_too_large():
    with pytest.raises(ValueError):
        spectrum(assemble_drift(circle(1.0, 16)), k=17)


def test_eigen_identity_on_abresch_langer(al_curve):
    ident = eigen_identity_check(al_curve)
    h = 2 * math.pi / 2048
    assert not ident.is_degenerate
    assert ident.residual_sup < 10 * (h * h + ident.shrinker_residual)


def test_eigenvalue_one_on_abresch_langer(al_curve):
    rep = spectrum(assemble_drift(al_curve), k=12)
    assert abs(rep.closest_to_one - 1.0) < 2e-2
    assert rep.alignment >= 0.999


def test_degenerate_flags(circle_sqrt2, clifford):
    for F in (circle_sqrt2, clifford):
        ident = eigen_identity_check(F)
        assert ident.is_degenerate
        assert ident.u_sup < 1e-8


def test_non_shrinker_fails_the_identity(al_curve):
    floor = eigen_identity_check(al_curve).residual_sup
    assert eigen_identity_check(random_lagrangian_torus(3, 32)).residual_sup > 10 * floor


def test_bakry_emery_examples(circle_sqrt2, clifford):
    cl = bakry_emery(clifford)
    assert abs(cl.kappa_actual) < 1e-4
    assert np.max(np.abs(cl.tensor)) < 1e-4
    assert cl.kappa_actual >= kappa_bound(2, 0.0, 1.0) == -1.5
    assert abs(bakry_emery(circle_sqrt2).kappa_actual) < 1e-3
    assert kappa_bound(1, 0.0, 1 / SQRT2) == pytest.approx(0.0, abs=1e-15)
    gc = bakry_emery(great_circle(256))
    assert abs(gc.kappa_actual) < 1e-6
    assert gc.kappa_actual >= kappa_bound(1, 1.0, 0.0)


def test_hessian_chain_rule_cross_check():
    F = al_times_circle(2, 3, 256, 32)
    be = bakry_emery(F)
    assert be.cross_check < 1e-3


def test_bakry_emery_dominates_kappa_floor(al_curve):
    be = bakry_emery(al_curve)
    A0 = al_curve.geometry.sup_A
    assert be.kappa_actual >= kappa_bound(1, 0.0, A0) - 1e-3


def test_diameters(circle_sqrt2, clifford):
    assert diameter(circle_sqrt2) == pytest.approx(math.pi * SQRT2, abs=1e-6)
    assert diameter(clifford) == pytest.approx(2 * math.pi, rel=2e-2)
    assert diameter(great_circle(256)) == pytest.approx(math.pi, abs=1e-6)


@pytest.mark.parametrize(
    "make,bound,diam,tol",
    [
        (lambda: circle(SQRT2, 512), math.pi, math.pi * SQRT2, 1e-6),
        (lambda: product_torus(n=64), 2 * math.pi / math.sqrt(7), 2 * math.pi, 2e-2),
        (lambda: great_circle(256), math.pi / math.sqrt(1.25), math.pi, 1e-6),
    ],
)
def test_diameter_audit_closed_forms(make, bound, diam, tol):
    audit = diameter_bound_audit(make())
    assert audit.bound == pytest.approx(bound, rel=1e-4)
    assert audit.diam == pytest.approx(diam, rel=tol)
    assert audit.diam >= audit.bound
    assert audit.fll_sup <= 1 + 1e-6
    assert audit.passed


def test_fll_identity_at_one_half():
    for m, K0, A0 in ((1, 0.0, 0.3), (2, 1.0, 0.7), (1, 1.0, 0.0), (1, 0.0, 1 / SQRT2)):
        d = diameter_bound(m, K0, A0)
        kappa = kappa_bound(m, K0, A0)
        assert fll_value(0.5, d, kappa) == pytest.approx(1.0, abs=1e-12)
        # at d = bound the slope at s = 1/2 is kappa, so s = 1/2 is the maximiser only when kappa = 0
        if abs(kappa) < 1e-12:
            assert fll_sup(d, kappa) <= 1.0 + 1e-6
        else:
            assert fll_sup(d, kappa) > 1.0


def test_fll_fails_below_the_bound():
    d = 0.9 * diameter_bound(1, 0.0, 0.5)
    assert fll_sup(d, kappa_bound(1, 0.0, 0.5)) > 1.0
