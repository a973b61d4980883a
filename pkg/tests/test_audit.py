import json
import math

import numpy as np
import pytest

from shrinkerlab.audit import (
    divergence_integrals,
    expander_audit,
    expander_quantities,
    shrinker_certificate,
    trace_identities,
    trace_identity_audit,
)
from shrinkerlab.examples import circle, great_circle, perturbed, product_torus, random_lagrangian_torus, sphere_curve


def sup(a):
    return float(np.max(np.abs(a)))


def test_hessian_trace_identity_is_exact_on_flat_tori():
    for F in (random_lagrangian_torus(1, 32), product_torus((1.1, 0.8), n=32), perturbed(product_torus(n=32), 0.05, 3)):
        assert sup(trace_identities(F)["hessian-trace"]) < 1e-10


def test_great_circle_ricci_trace():
    res = trace_identities(great_circle(256, tilt=0.5))
    assert sup(res["ricci-trace"]) < 1e-6
    assert sup(res["laplacian-trace"]) < 1e-6


def test_laplacian_identity_refines_on_perturbed_lagrangian_torus():
    coarse = product_torus((1.2, 1.5), n=32, amps=(0.05, 0.08), modes=(3, 2))
    fine = product_torus((1.2, 1.5), n=64, amps=(0.05, 0.08), modes=(3, 2))
    a, b = sup(trace_identities(coarse)["laplacian-trace"]), sup(trace_identities(fine)["laplacian-trace"])
    assert a / b >= 3.5


def test_trace_audit_skips_ricci_identity_off_lagrangian():
    rep = trace_identity_audit(perturbed(product_torus(n=32), 0.05, 3))
    assert not rep.check("ricci-trace").applicable
    assert "not Lagrangian" in rep.check("ricci-trace").note
    rep = trace_identity_audit(sphere_curve(128))
    # every curve is Lagrangian, and the Ricci trace is exact on the round sphere
    assert rep.check("ricci-trace").applicable and rep.check("ricci-trace").passed
    assert rep.check("ricci-trace-jframe").value < 1e-8


def test_certificate_on_abresch_langer(al_curve):
    rep = shrinker_certificate(al_curve)
    assert rep.passed
    for name in ("lagrangian", "shrinker-residual", "non-degenerate", "eigen-identity", "eigenvalue-one",
                 "diameter-bound", "fll"):
        c = rep.check(name)
        assert c.applicable and c.passed, name
    assert rep.metadata["theorem_applies"]


def test_certificate_flags_degenerate_clifford(clifford):
    rep = shrinker_certificate(clifford)
    assert rep.metadata["degenerate"]
    assert not rep.metadata["theorem_applies"]
    assert not rep.check("non-degenerate").passed
    assert not rep.check("eigenvalue-one").applicable
    # the conclusion is still logged
    assert rep.check("diameter-bound").applicable and rep.check("diameter-bound").passed
    assert rep.passed


def test_certificate_skips_downstream_for_random_torus():
    rep = shrinker_certificate(random_lagrangian_torus(2, 32))
    assert not rep.passed
    assert not rep.check("shrinker-residual").passed
    for name in ("eigen-identity", "eigenvalue-one", "diameter-bound", "fll"):
        assert not rep.check(name).applicable
        assert rep.check(name).note.startswith("skipped")


def test_certificate_is_json_serialisable(circle_sqrt2):
    doc = shrinker_certificate(circle_sqrt2).as_dict()
    text = json.dumps(doc)
    assert json.loads(text)["pass"] is True
    assert all("anchor" in c for c in doc["checks"])


def test_expander_audit_on_product_torus():
    F = product_torus((1.1, 0.8), n=48)
    rep = expander_audit(F, 1.0)
    assert rep.passed
    q = expander_quantities(F, 1.0)
    assert abs(q.integral) < 1e-6
    assert q.margin >= 2.0
    assert rep.metadata["contradiction"]
    fine = expander_quantities(product_torus((1.1, 0.8), n=96), 1.0)
    assert sup(q.pointwise) / sup(fine.pointwise) >= 3.5


def test_expander_quantities_for_unit_circle():
    q = expander_quantities(circle(1.0, 256), 1.0)
    assert q.margin == pytest.approx(2.0, abs=1e-6)
    assert q.expander_residual == pytest.approx(2.0, abs=1e-6)


def test_great_circle_is_the_boundary_case():
    rep = expander_audit(great_circle(256), 1.0)
    assert rep.metadata["hypothesis_violation"]
    assert not rep.metadata["contradiction"]
    assert rep.metadata["margin"] == pytest.approx(0.0, abs=1e-6)
    margin = rep.check("margin")
    assert not margin.applicable and "hypothesis-violation" in margin.note
    # the geodesic satisfies the expander equation
    assert rep.check("not-an-expander").value < 1e-6


@pytest.mark.parametrize("lam", [0.0, -0.5])
def test_expander_needs_positive_lambda(lam):
    with pytest.raises(ValueError):
        expander_audit(circle(1.0, 64), lam)


def test_divergence_integrals_vanish():
    F = random_lagrangian_torus(3, 32)
    assert max(divergence_integrals(F, count=4)) < 1e-12
    cov = divergence_integrals(F, count=4, covariant=True)
    assert max(cov) < 1e-2
    assert math.isfinite(sum(cov))
